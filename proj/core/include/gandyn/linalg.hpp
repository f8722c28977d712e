#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace gandyn {

/// Small dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<const double> data() const noexcept { return data_; }

  double trace() const;
  /// Determinant by partially pivoted LU.
  double determinant() const;
  /// Gauss-Jordan inverse; throws on a singular matrix.
  Matrix inverse() const;

  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using ComplexList = std::vector<std::complex<double>>;

/// All eigenvalues of a real square matrix (n <= 64): balancing, reduction to
/// upper Hessenberg form, then the shifted double-step QR iteration. Complex
/// eigenvalues come out as exact conjugate pairs. Throws ContractError for
/// non-square or non-finite input and NonConvergenceError when 100 * n QR
/// sweeps are not enough.
ComplexList eigenvalues(const Matrix& m);

using VectorField = std::function<std::vector<double>(std::span<const double>)>;

/// Central-difference Jacobian. Coordinate j is perturbed by
/// eps * max(1, |point_j|). Throws DivergenceError if the field returns a
/// non-finite value.
Matrix numerical_jacobian(const VectorField& field, std::span<const double> point, double eps = 1e-5);

}  // namespace gandyn
