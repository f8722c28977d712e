#pragma once

// Synthetic low-dimensional datasets and the mode-coverage protocol: every
// generated sample is assigned to its nearest mode centre, coverage counts the
// modes hit at least once, and reverse KL compares the empirical categorical
// with the uniform one.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "gandyn/rng.hpp"
#include "gandyn/tensor.hpp"

namespace gandyn {

struct GridSpec {
  std::size_t dims = 2;            // 1..3
  std::size_t modes_per_axis = 5;
  double spacing = 2.0;
  double sigma = 0.05;

  void validate() const;
  std::size_t modes() const;
};

enum class ShapeKind { kRing, kLine, kCircle };

std::string_view to_string(ShapeKind kind);
ShapeKind parse_shape_kind(std::string_view text);

struct ShapeSpec {
  ShapeKind kind = ShapeKind::kRing;
  double radius = 2.0;       // ring and circle
  double half_length = 2.0;  // line runs from (-half_length, 0) to (half_length, 0)
  std::size_t ring_modes = 8;
  double sigma = 0.05;

  void validate() const;
};

/// A 2-D or grid mixture that can be sampled with an explicit generator.
class Dataset {
 public:
  std::size_t dim() const noexcept { return dim_; }
  /// Mode centres [K, d]; K = 0 for the continuous line and circle shapes.
  const Tensor& centers() const noexcept { return centers_; }
  std::size_t modes() const noexcept { return centers_.rank() == 2 ? centers_.dim(0) : 0; }

  /// n draws as [n, d].
  Tensor sample(std::size_t n, Rng& rng) const;

  friend Dataset make_grid(const GridSpec& spec);
  friend Dataset make_shape(const ShapeSpec& spec);

 private:
  enum class Kind { kMixture, kLine, kCircle };

  Kind kind_ = Kind::kMixture;
  std::size_t dim_ = 0;
  Tensor centers_;
  double sigma_ = 0.0;
  double radius_ = 0.0;
  double half_length_ = 0.0;
};

/// Uniform mixture of K = modes_per_axis^dims isotropic Gaussians centred at
/// (i - (m - 1)/2) * spacing per axis; mode index is row-major over the axes.
Dataset make_grid(const GridSpec& spec);
Dataset make_shape(const ShapeSpec& spec);

/// Nearest centre by Euclidean distance; ties go to the lowest index.
std::size_t assign_mode(std::span<const double> sample, const Tensor& centers);

struct ModeReport {
  std::vector<std::size_t> counts;
  std::size_t coverage = 0;
  double reverse_kl = 0.0;
};

ModeReport mode_report(const Tensor& samples, const Tensor& centers);
/// Report from raw per-mode counts.
ModeReport mode_report_from_counts(std::vector<std::size_t> counts);

/// One row per sample: x0,...,x{d-1},mode.
void write_samples_csv(const Tensor& samples, const Tensor& centers, std::ostream& out);
/// Reads the coordinate columns of a sample CSV (any trailing "mode" column is ignored).
Tensor read_samples_csv(std::istream& in);

}  // namespace gandyn
