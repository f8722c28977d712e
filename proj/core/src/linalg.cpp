#include "gandyn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gandyn/errors.hpp"

namespace gandyn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ContractError("matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) + " given " +
                        std::to_string(data_.size()) + " values");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

double Matrix::trace() const {
  if (!square()) throw ContractError("trace of a non-square matrix");
  double t = 0.0;
  for (std::size_t i = 0; i < rows_; ++i) t += (*this)(i, i);
  return t;
}

double Matrix::determinant() const {
  if (!square()) throw ContractError("determinant of a non-square matrix");
  Matrix lu = *this;
  const std::size_t n = rows_;
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu(i, k)) > std::abs(lu(pivot, k))) pivot = i;
    }
    if (lu(pivot, k) == 0.0) return 0.0;
    if (pivot != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(pivot, j));
      det = -det;
    }
    det *= lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      for (std::size_t j = k; j < n; ++j) lu(i, j) -= f * lu(k, j);
    }
  }
  return det;
}

Matrix Matrix::inverse() const {
  if (!square()) throw ContractError("inverse of a non-square matrix");
  const std::size_t n = rows_;
  Matrix a = *this;
  Matrix inv = identity(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > std::abs(a(pivot, k))) pivot = i;
    }
    if (a(pivot, k) == 0.0) throw ContractError("inverse of a singular matrix");
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(a(k, j), a(pivot, j));
      std::swap(inv(k, j), inv(pivot, j));
    }
    const double d = a(k, k);
    for (std::size_t j = 0; j < n; ++j) {
      a(k, j) /= d;
      inv(k, j) /= d;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = a(i, k);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a(i, j) -= f * a(k, j);
        inv(i, j) -= f * inv(k, j);
      }
    }
  }
  return inv;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols_ != b.rows_) throw ContractError("matrix product with mismatched extents");
  Matrix c(a.rows_, b.cols_);
  for (std::size_t i = 0; i < a.rows_; ++i) {
    for (std::size_t k = 0; k < a.cols_; ++k) {
      const double s = a(i, k);
      for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += s * b(k, j);
    }
  }
  return c;
}

namespace {

// Similarity scaling by powers of the radix so row and column norms are
// comparable; exact in floating point.
void balance(Matrix& a) {
  constexpr double radix = std::numeric_limits<double>::radix;
  constexpr double sqrdx = radix * radix;
  const std::size_t n = a.rows();
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      double c = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      const double s = c + r;
      double g = r / radix;
      double f = 1.0;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1.0 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

// Gaussian elimination with pivoting to upper Hessenberg form.
void to_hessenberg(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t m = 1; m + 1 < n; ++m) {
    double x = 0.0;
    std::size_t pivot = m;
    for (std::size_t j = m; j < n; ++j) {
      if (std::abs(a(j, m - 1)) > std::abs(x)) {
        x = a(j, m - 1);
        pivot = j;
      }
    }
    if (pivot != m) {
      for (std::size_t j = m - 1; j < n; ++j) std::swap(a(pivot, j), a(m, j));
      for (std::size_t j = 0; j < n; ++j) std::swap(a(j, pivot), a(j, m));
    }
    if (x == 0.0) continue;
    for (std::size_t i = m + 1; i < n; ++i) {
      double y = a(i, m - 1);
      if (y == 0.0) continue;
      y /= x;
      a(i, m - 1) = y;
      for (std::size_t j = m; j < n; ++j) a(i, j) -= y * a(m, j);
      for (std::size_t j = 0; j < n; ++j) a(j, m) += y * a(j, i);
    }
  }
  for (std::size_t i = 2; i < n; ++i) {
    for (std::size_t j = 0; j + 1 < i; ++j) a(i, j) = 0.0;
  }
}

double sign_of(double magnitude, double s) { return s >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude); }

// Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr lineage).
ComplexList hessenberg_qr(Matrix& a) {
  const int n = static_cast<int>(a.rows());
  const double eps = std::numeric_limits<double>::epsilon();
  const int budget = 100 * n;
  ComplexList w(static_cast<std::size_t>(n));
  auto at = [&](int i, int j) -> double& { return a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)); };

  double anorm = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(at(i, j));
  }

  int nn = n - 1;
  int total_its = 0;
  double t = 0.0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l > 0; --l) {
        double s = std::abs(at(l - 1, l - 1)) + std::abs(at(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(at(l, l - 1)) <= eps * s) {
          at(l, l - 1) = 0.0;
          break;
        }
      }
      double x = at(nn, nn);
      if (l == nn) {
        w[static_cast<std::size_t>(nn)] = {x + t, 0.0};
        --nn;
      } else {
        double y = at(nn - 1, nn - 1);
        double wprod = at(nn, nn - 1) * at(nn - 1, nn);
        if (l == nn - 1) {
          const double p = 0.5 * (y - x);
          const double q = p * p + wprod;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            const double first = x + z;
            w[static_cast<std::size_t>(nn - 1)] = {first, 0.0};
            w[static_cast<std::size_t>(nn)] = {z != 0.0 ? x - wprod / z : first, 0.0};
          } else {
            w[static_cast<std::size_t>(nn)] = {x + p, -z};
            w[static_cast<std::size_t>(nn - 1)] = {x + p, z};
          }
          nn -= 2;
        } else {
          if (total_its >= budget) {
            throw NonConvergenceError("eigenvalue QR iteration exceeded " + std::to_string(budget) + " sweeps");
          }
          if (its > 0 && its % 10 == 0) {
            // Exceptional shift.
            t += x;
            for (int i = 0; i <= nn; ++i) at(i, i) -= x;
            const double s = std::abs(at(nn, nn - 1)) + std::abs(at(nn - 1, nn - 2));
            y = x = 0.75 * s;
            wprod = -0.4375 * s * s;
          }
          ++its;
          ++total_its;
          int m = nn - 2;
          double p = 0.0;
          double q = 0.0;
          double r = 0.0;
          double z = 0.0;
          for (; m >= l; --m) {
            z = at(m, m);
            r = x - z;
            double s = y - z;
            p = (r * s - wprod) / at(m + 1, m) + at(m, m + 1);
            q = at(m + 1, m + 1) - z - r - s;
            r = at(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(at(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(at(m - 1, m - 1)) + std::abs(z) + std::abs(at(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            at(i + 2, i) = 0.0;
            if (i != m) at(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = at(k, k - 1);
              q = at(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = at(k + 2, k - 1);
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s == 0.0) continue;
            if (k == m) {
              if (l != m) at(k, k - 1) = -at(k, k - 1);
            } else {
              at(k, k - 1) = -s * x;
            }
            p += s;
            x = p / s;
            y = q / s;
            z = r / s;
            q /= p;
            r /= p;
            for (int j = k; j <= nn; ++j) {
              p = at(k, j) + q * at(k + 1, j);
              if (k + 1 != nn) {
                p += r * at(k + 2, j);
                at(k + 2, j) -= p * z;
              }
              at(k + 1, j) -= p * y;
              at(k, j) -= p * x;
            }
            const int mmin = nn < k + 3 ? nn : k + 3;
            for (int i = l; i <= mmin; ++i) {
              p = x * at(i, k) + y * at(i, k + 1);
              if (k + 1 != nn) {
                p += z * at(i, k + 2);
                at(i, k + 2) -= p * r;
              }
              at(i, k + 1) -= p * q;
              at(i, k) -= p;
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return w;
}

}  // namespace

ComplexList eigenvalues(const Matrix& m) {
  if (!m.square()) {
    throw ContractError("eigenvalues of a " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matrix");
  }
  if (m.rows() > 64) throw ContractError("eigenvalues supports n <= 64");
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw ContractError("eigenvalues of a matrix with non-finite entries");
  }
  if (m.rows() == 0) return {};
  Matrix a = m;
  balance(a);
  to_hessenberg(a);
  return hessenberg_qr(a);
}

Matrix numerical_jacobian(const VectorField& field, std::span<const double> point, double eps) {
  const std::size_t n = point.size();
  std::vector<double> x(point.begin(), point.end());
  auto eval = [&]() {
    auto v = field(x);
    for (double e : v) {
      if (!std::isfinite(e)) throw DivergenceError(0, "vector field returned a non-finite value");
    }
    return v;
  };
  Matrix jac;
  for (std::size_t j = 0; j < n; ++j) {
    const double x0 = x[j];
    const double h = eps * std::max(1.0, std::abs(x0));
    x[j] = x0 + h;
    const auto up = eval();
    x[j] = x0 - h;
    const auto down = eval();
    x[j] = x0;
    if (j == 0) jac = Matrix(up.size(), n);
    for (std::size_t i = 0; i < up.size(); ++i) jac(i, j) = (up[i] - down[i]) / (2.0 * h);
  }
  return jac;
}

}  // namespace gandyn
