#pragma once

// Toy generators and discriminators: leaky-ReLU MLPs without normalization,
// fix-up initialised 1-3-1 grouped-convolution residual blocks, and a small
// symmetric image backbone with a modulated 4x4 basis layer and a depthwise
// classifier head.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gandyn/autodiff.hpp"
#include "gandyn/rng.hpp"

namespace gandyn {

inline constexpr double kDefaultLeakySlope = 0.2;

struct ParamSpec {
  std::string name;
  Shape shape;
};

/// Parameter values keyed by local name (without the player prefix).
using ParamSet = TensorMap;

/// A differentiable model that can be instantiated into any graph. Parameters
/// become graph variables named `prefix + local name`; instantiating twice into
/// one graph shares them.
class Network {
 public:
  virtual ~Network() = default;

  virtual std::string kind() const = 0;
  /// Per-sample input extents (the batch axis is prepended).
  virtual Shape input_shape() const = 0;
  /// Per-sample output extents; critics return {} so a batch maps to [n].
  virtual Shape output_shape() const = 0;
  virtual std::vector<ParamSpec> parameters() const = 0;
  virtual ParamSet initialize(Rng& rng) const = 0;
  virtual Var forward(Graph& g, Var input, std::string_view prefix) const = 0;
};

std::size_t parameter_count(const Network& net);

/// Forward graph of a network on a fixed batch size.
struct ForwardGraph {
  Graph graph;
  NodeId input = 0;
  NodeId output = 0;
};

ForwardGraph forward_graph(const Network& net, std::size_t batch, std::string_view prefix = "");

/// Binds `params` under `prefix` into a TensorMap suitable for evaluation.
TensorMap prefixed(const ParamSet& params, std::string_view prefix);

struct Model {
  std::shared_ptr<const Network> net;
  ParamSet params;
};

// ---------------------------------------------------------------------------
// MLP

struct MlpSpec {
  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t output_dim = 2;
  double slope = kDefaultLeakySlope;
  /// Adds identity skips around hidden layers whose width does not change.
  bool residual = false;
  /// Emits [n] instead of [n, 1]; requires output_dim == 1.
  bool scalar_output = false;

  void validate() const;
};

class Mlp final : public Network {
 public:
  explicit Mlp(MlpSpec spec);

  std::string kind() const override { return "mlp"; }
  Shape input_shape() const override { return {spec_.input_dim}; }
  Shape output_shape() const override;
  std::vector<ParamSpec> parameters() const override;
  ParamSet initialize(Rng& rng) const override;
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

  const MlpSpec& spec() const noexcept { return spec_; }

 private:
  MlpSpec spec_;
};

Model build_mlp(const MlpSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Residual block: conv1x1 -> lrelu -> grouped conv3x3 -> lrelu -> conv1x1 (no bias)

struct ResBlockSpec {
  std::size_t stem = 32;
  std::size_t bottleneck = 16;
  std::size_t groups = 4;
  /// Inverted blocks expand (bottleneck > stem); regular blocks compress or keep width.
  bool inverted = false;
  double slope = kDefaultLeakySlope;

  void validate() const;
};

/// Parameters of one block, local names "conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w".
std::vector<ParamSpec> resblock_parameters(const ResBlockSpec& spec);
/// Fix-up initialisation: conv3 is zero, conv1 and conv2 use the base init
/// scaled by total_blocks^-0.25.
ParamSet init_resblock(const ResBlockSpec& spec, std::size_t total_blocks, Rng& rng);
Var resblock_forward(Graph& g, Var x, const ResBlockSpec& spec, const std::string& prefix);

/// A single residual block as a standalone network on [stem, resolution, resolution].
class ResBlockNet final : public Network {
 public:
  ResBlockNet(ResBlockSpec spec, std::size_t total_blocks, std::size_t resolution);

  std::string kind() const override { return "resblock"; }
  Shape input_shape() const override { return {spec_.stem, resolution_, resolution_}; }
  Shape output_shape() const override { return input_shape(); }
  std::vector<ParamSpec> parameters() const override { return resblock_parameters(spec_); }
  ParamSet initialize(Rng& rng) const override { return init_resblock(spec_, total_blocks_, rng); }
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

 private:
  ResBlockSpec spec_;
  std::size_t total_blocks_;
  std::size_t resolution_;
};

Model build_resblock(const ResBlockSpec& spec, std::size_t total_blocks, std::uint64_t seed,
                     std::size_t resolution = 8);

/// Number of weights and biases of a k x k grouped convolution.
std::size_t grouped_conv_parameter_count(std::size_t kernel, std::size_t cin, std::size_t cout, std::size_t groups,
                                         bool bias);

// ---------------------------------------------------------------------------
// Backbone

struct StageSpec {
  std::size_t resolution = 4;
  std::size_t stem = 32;
  std::size_t bottleneck = 16;
  std::size_t groups = 4;
  std::size_t blocks = 2;
};

struct BackboneSpec {
  std::size_t z_dim = 8;
  std::size_t image_channels = 1;
  /// Ascending resolutions starting at 4, each stage doubling the previous.
  std::vector<StageSpec> stages{{4, 32, 16, 4, 2}, {8, 32, 16, 4, 2}};
  double slope = kDefaultLeakySlope;

  void validate() const;
  std::size_t resolution() const { return stages.back().resolution; }
  std::size_t total_blocks() const;
};

/// 4x4 learnable basis modulated per channel by a linear map of z, residual
/// stages joined by bilinear upsampling (+1x1 conv when widths change), and a
/// 1x1 projection to image channels.
class BackboneGenerator final : public Network {
 public:
  explicit BackboneGenerator(BackboneSpec spec);

  std::string kind() const override { return "backbone_generator"; }
  Shape input_shape() const override { return {spec_.z_dim}; }
  Shape output_shape() const override;
  std::vector<ParamSpec> parameters() const override;
  ParamSet initialize(Rng& rng) const override;
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

 private:
  BackboneSpec spec_;
};

/// Mirror of the generator: 1x1 projection from image channels, residual
/// stages joined by (1x1 conv +) bilinear downsampling, then a global 4x4
/// depthwise conv and a linear head.
class BackboneDiscriminator final : public Network {
 public:
  explicit BackboneDiscriminator(BackboneSpec spec);

  std::string kind() const override { return "backbone_discriminator"; }
  Shape input_shape() const override;
  Shape output_shape() const override { return {}; }
  std::vector<ParamSpec> parameters() const override;
  ParamSet initialize(Rng& rng) const override;
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

 private:
  BackboneSpec spec_;
};

struct Backbone {
  Model generator;
  Model discriminator;
};

Backbone build_backbone(const BackboneSpec& spec, std::uint64_t seed);

/// Counterpart of `spec` with every grouped conv twice as wide (group size
/// kept) and stems re-chosen so the generator's parameter count stays as close
/// as possible to the original.
BackboneSpec invert_bottleneck(const BackboneSpec& spec);

/// Bilinear x2 / x1/2 resampling of a [n, c, h, w] tensor.
Tensor bilinear_resample(const Tensor& x, Resampling factor);

// ---------------------------------------------------------------------------
// Closed-form toy players

/// p_theta = delta at theta: every sample equals the parameter vector "theta".
class DiracGenerator final : public Network {
 public:
  DiracGenerator(std::size_t latent_dim, std::size_t data_dim) : latent_dim_(latent_dim), data_dim_(data_dim) {}

  std::string kind() const override { return "dirac_generator"; }
  Shape input_shape() const override { return {latent_dim_}; }
  Shape output_shape() const override { return {data_dim_}; }
  std::vector<ParamSpec> parameters() const override { return {{"theta", {data_dim_}}}; }
  ParamSet initialize(Rng& rng) const override;
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

 private:
  std::size_t latent_dim_;
  std::size_t data_dim_;
};

/// G(z) = z + theta.
class ShiftGenerator final : public Network {
 public:
  explicit ShiftGenerator(std::size_t dim) : dim_(dim) {}

  std::string kind() const override { return "shift_generator"; }
  Shape input_shape() const override { return {dim_}; }
  Shape output_shape() const override { return {dim_}; }
  std::vector<ParamSpec> parameters() const override { return {{"theta", {dim_}}}; }
  ParamSet initialize(Rng& rng) const override;
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

 private:
  std::size_t dim_;
};

/// D(x) = psi . x (no bias).
class LinearCritic final : public Network {
 public:
  explicit LinearCritic(std::size_t dim) : dim_(dim) {}

  std::string kind() const override { return "linear_critic"; }
  Shape input_shape() const override { return {dim_}; }
  Shape output_shape() const override { return {}; }
  std::vector<ParamSpec> parameters() const override { return {{"psi", {dim_}}}; }
  ParamSet initialize(Rng& rng) const override;
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

 private:
  std::size_t dim_;
};

/// D(x) = psi * ||x||^2.
class QuadraticCritic final : public Network {
 public:
  explicit QuadraticCritic(std::size_t dim) : dim_(dim) {}

  std::string kind() const override { return "quadratic_critic"; }
  Shape input_shape() const override { return {dim_}; }
  Shape output_shape() const override { return {}; }
  std::vector<ParamSpec> parameters() const override { return {{"psi", {1}}}; }
  ParamSet initialize(Rng& rng) const override;
  Var forward(Graph& g, Var input, std::string_view prefix) const override;

 private:
  std::size_t dim_;
};

/// Operations appearing in a network's forward graph, used to check that no
/// layer standardises activation statistics.
std::vector<Op> forward_ops(const Network& net);
bool uses_normalization(const Network& net);

// ---------------------------------------------------------------------------
// Parameter files: raw little-endian float64 payload plus a JSON manifest
// listing name, shape, byte offset and byte length of every tensor.

void save_params(const ParamSet& params, const std::filesystem::path& bin_path,
                 const std::filesystem::path& manifest_path);
ParamSet load_params(const std::filesystem::path& bin_path, const std::filesystem::path& manifest_path);

}  // namespace gandyn
