#include "gandyn/data.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "gandyn/errors.hpp"
#include "gandyn/format.hpp"

namespace gandyn {

void GridSpec::validate() const {
  if (dims < 1 || dims > 3) throw ContractError("grid dims must be 1, 2 or 3");
  if (modes_per_axis < 1) throw ContractError("grid needs at least one mode per axis");
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw ContractError("grid spacing must be > 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractError("grid sigma must be > 0");
}

std::size_t GridSpec::modes() const {
  std::size_t k = 1;
  for (std::size_t i = 0; i < dims; ++i) k *= modes_per_axis;
  return k;
}

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kRing: return "ring";
    case ShapeKind::kLine: return "line";
    case ShapeKind::kCircle: return "circle";
  }
  return "unknown";
}

ShapeKind parse_shape_kind(std::string_view text) {
  if (text == "ring") return ShapeKind::kRing;
  if (text == "line") return ShapeKind::kLine;
  if (text == "circle") return ShapeKind::kCircle;
  throw ContractError("unknown shape '" + std::string(text) + "' (expected ring, line or circle)");
}

void ShapeSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ContractError("shape sigma must be >= 0");
  if (kind == ShapeKind::kRing && sigma == 0.0) throw ContractError("ring sigma must be > 0");
  if (!(radius > 0.0)) throw ContractError("shape radius must be > 0");
  if (!(half_length > 0.0)) throw ContractError("line half-length must be > 0");
  if (kind == ShapeKind::kRing && ring_modes < 1) throw ContractError("ring needs at least one mode");
}

Dataset make_grid(const GridSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.kind_ = Dataset::Kind::kMixture;
  ds.dim_ = spec.dims;
  ds.sigma_ = spec.sigma;
  const std::size_t k = spec.modes(), m = spec.modes_per_axis;
  ds.centers_ = Tensor({k, spec.dims});
  const double mid = (static_cast<double>(m) - 1.0) / 2.0;
  for (std::size_t idx = 0; idx < k; ++idx) {
    std::size_t rest = idx;
    for (std::size_t axis = spec.dims; axis-- > 0;) {
      ds.centers_[idx * spec.dims + axis] = (static_cast<double>(rest % m) - mid) * spec.spacing;
      rest /= m;
    }
  }
  return ds;
}

Dataset make_shape(const ShapeSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.dim_ = 2;
  ds.sigma_ = spec.sigma;
  ds.radius_ = spec.radius;
  ds.half_length_ = spec.half_length;
  switch (spec.kind) {
    case ShapeKind::kRing: {
      ds.kind_ = Dataset::Kind::kMixture;
      ds.centers_ = Tensor({spec.ring_modes, 2});
      for (std::size_t i = 0; i < spec.ring_modes; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(spec.ring_modes);
        ds.centers_[2 * i] = spec.radius * std::cos(a);
        ds.centers_[2 * i + 1] = spec.radius * std::sin(a);
      }
      break;
    }
    case ShapeKind::kLine:
      ds.kind_ = Dataset::Kind::kLine;
      ds.centers_ = Tensor({0, 2});
      break;
    case ShapeKind::kCircle:
      ds.kind_ = Dataset::Kind::kCircle;
      ds.centers_ = Tensor({0, 2});
      break;
  }
  return ds;
}

Tensor Dataset::sample(std::size_t n, Rng& rng) const {
  Tensor out({n, dim_});
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data().data() + i * dim_;
    switch (kind_) {
      case Kind::kMixture: {
        const std::size_t k = modes();
        const auto mode = std::min(k - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(k)));
        for (std::size_t j = 0; j < dim_; ++j) row[j] = centers_[mode * dim_ + j] + sigma_ * normal(rng);
        break;
      }
      case Kind::kLine: {
        const double t = (2.0 * rng.uniform() - 1.0) * half_length_;
        row[0] = t + sigma_ * normal(rng);
        row[1] = sigma_ * normal(rng);
        break;
      }
      case Kind::kCircle: {
        const double a = 2.0 * std::numbers::pi * rng.uniform();
        row[0] = radius_ * std::cos(a) + sigma_ * normal(rng);
        row[1] = radius_ * std::sin(a) + sigma_ * normal(rng);
        break;
      }
    }
  }
  return out;
}

std::size_t assign_mode(std::span<const double> sample, const Tensor& centers) {
  if (centers.rank() != 2 || centers.dim(0) == 0) throw ContractError("assign_mode needs a non-empty [K, d] centre set");
  const std::size_t d = centers.dim(1);
  if (sample.size() != d) throw ContractError("sample dimension does not match centres");
  std::size_t best = 0;
  double best_d2 = INFINITY;
  for (std::size_t k = 0; k < centers.dim(0); ++k) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = sample[j] - centers[k * d + j];
      d2 += diff * diff;
    }
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return best;
}

ModeReport mode_report_from_counts(std::vector<std::size_t> counts) {
  ModeReport r;
  r.counts = std::move(counts);
  std::size_t n = 0;
  for (std::size_t c : r.counts) n += c;
  if (n == 0) throw ContractError("mode report needs at least one sample");
  const auto k = static_cast<double>(r.counts.size());
  for (std::size_t c : r.counts) {
    if (c == 0) continue;
    ++r.coverage;
    const double q = static_cast<double>(c) / static_cast<double>(n);
    r.reverse_kl += q * std::log(q * k);
  }
  // Rounding can leave -1e-17 for an exactly uniform histogram.
  r.reverse_kl = std::max(0.0, r.reverse_kl);
  return r;
}

ModeReport mode_report(const Tensor& samples, const Tensor& centers) {
  if (samples.rank() != 2 || samples.dim(0) == 0) throw ContractError("mode report needs samples [n, d] with n >= 1");
  const std::size_t d = samples.dim(1);
  std::vector<std::size_t> counts(centers.rank() == 2 ? centers.dim(0) : 0, 0);
  for (std::size_t i = 0; i < samples.dim(0); ++i) {
    ++counts[assign_mode(samples.data().subspan(i * d, d), centers)];
  }
  return mode_report_from_counts(std::move(counts));
}

void write_samples_csv(const Tensor& samples, const Tensor& centers, std::ostream& out) {
  if (samples.rank() != 2) throw ContractError("samples must be [n, d]");
  const std::size_t d = samples.dim(1);
  for (std::size_t j = 0; j < d; ++j) out << 'x' << j << ',';
  out << "mode\n";
  const bool has_modes = centers.rank() == 2 && centers.dim(0) > 0;
  for (std::size_t i = 0; i < samples.dim(0); ++i) {
    auto row = samples.data().subspan(i * d, d);
    for (double v : row) out << format_double(v) << ',';
    if (has_modes) {
      out << assign_mode(row, centers);
    } else {
      out << -1;
    }
    out << '\n';
  }
}

Tensor read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("sample CSV is empty");
  std::size_t d = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (!cell.empty() && cell[0] == 'x') ++d;
    }
  }
  if (d == 0) throw Error("sample CSV header has no coordinate columns");
  std::vector<double> values;
  std::size_t n = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::getline(row, cell, ',')) throw Error("sample CSV line " + std::to_string(lineno) + ": too few columns");
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error("sample CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    ++n;
  }
  return Tensor({n, d}, std::move(values));
}

}  // namespace gandyn
