#include "gandyn/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "gandyn/kernels.hpp"

namespace gandyn {

namespace {

double leaky_gain(double slope) { return std::sqrt(2.0 / (1.0 + slope * slope)); }

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * normal(rng);
  return t;
}

std::string join(std::string_view prefix, std::string_view name) {
  std::string out(prefix);
  out += name;
  return out;
}

Var param(Graph& g, std::string_view prefix, std::string_view name, Shape shape) {
  return variable(g, join(prefix, name), std::move(shape));
}

// y [n, c, h, w] + per-channel bias [c].
Var add_channel_bias(Var y, Var bias) {
  const Shape& s = y.shape();
  return y + broadcast_to(reshape(bias, {s[1], 1, 1}), s);
}

}  // namespace

std::size_t parameter_count(const Network& net) {
  std::size_t total = 0;
  for (const auto& p : net.parameters()) total += element_count(p.shape);
  return total;
}

ForwardGraph forward_graph(const Network& net, std::size_t batch, std::string_view prefix) {
  ForwardGraph fg;
  Shape in = net.input_shape();
  in.insert(in.begin(), batch);
  Var x = variable(fg.graph, "input", in);
  fg.input = x.id;
  fg.output = net.forward(fg.graph, x, prefix).id;
  return fg;
}

TensorMap prefixed(const ParamSet& params, std::string_view prefix) {
  TensorMap out;
  for (const auto& [name, value] : params) out.emplace(join(prefix, name), value);
  return out;
}

// ---------------------------------------------------------------------------
// MLP

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ContractError("mlp: input and output widths must be positive");
  if (hidden.empty()) throw ContractError("mlp: at least one hidden layer is required");
  for (std::size_t w : hidden) {
    if (w == 0) throw ContractError("mlp: hidden widths must be positive");
  }
  if (scalar_output && output_dim != 1) throw ContractError("mlp: scalar output needs output_dim == 1");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Shape Mlp::output_shape() const {
  if (spec_.scalar_output) return {};
  return {spec_.output_dim};
}

std::vector<ParamSpec> Mlp::parameters() const {
  std::vector<ParamSpec> out;
  std::size_t in = spec_.input_dim;
  const std::size_t layers = spec_.hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t width = i < spec_.hidden.size() ? spec_.hidden[i] : spec_.output_dim;
    out.push_back({"l" + std::to_string(i) + ".w", {in, width}});
    out.push_back({"l" + std::to_string(i) + ".b", {width}});
    in = width;
  }
  return out;
}

ParamSet Mlp::initialize(Rng& rng) const {
  ParamSet params;
  std::size_t in = spec_.input_dim;
  const std::size_t layers = spec_.hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const bool hidden = i < spec_.hidden.size();
    const std::size_t width = hidden ? spec_.hidden[i] : spec_.output_dim;
    const double gain = hidden ? leaky_gain(spec_.slope) : 1.0;
    params["l" + std::to_string(i) + ".w"] = normal_tensor({in, width}, gain / std::sqrt(static_cast<double>(in)), rng);
    params["l" + std::to_string(i) + ".b"] = Tensor({width}, 0.0);
    in = width;
  }
  return params;
}

Var Mlp::forward(Graph& g, Var input, std::string_view prefix) const {
  Var h = input;
  std::size_t in = spec_.input_dim;
  const std::size_t layers = spec_.hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const bool hidden = i < spec_.hidden.size();
    const std::size_t width = hidden ? spec_.hidden[i] : spec_.output_dim;
    Var w = param(g, prefix, "l" + std::to_string(i) + ".w", {in, width});
    Var b = param(g, prefix, "l" + std::to_string(i) + ".b", {width});
    Var z = matmul(h, w) + b;
    if (hidden) {
      Var a = leaky_relu(z, spec_.slope);
      h = (spec_.residual && i > 0 && in == width) ? h + a : a;
    } else {
      h = z;
    }
    in = width;
  }
  if (spec_.scalar_output) h = reshape(h, {h.shape()[0]});
  return h;
}

Model build_mlp(const MlpSpec& spec, std::uint64_t seed) {
  auto net = std::make_shared<const Mlp>(spec);
  Rng rng(seed);
  return Model{net, net->initialize(rng)};
}

// ---------------------------------------------------------------------------
// Residual block

void ResBlockSpec::validate() const {
  if (stem == 0 || bottleneck == 0 || groups == 0) throw ContractError("resblock: widths must be positive");
  if (bottleneck % groups != 0) {
    throw ContractError("resblock: bottleneck width " + std::to_string(bottleneck) + " not divisible by " +
                        std::to_string(groups) + " groups");
  }
  if (inverted && bottleneck <= stem) throw ContractError("resblock: inverted block must expand its bottleneck");
  if (!inverted && bottleneck > stem) throw ContractError("resblock: non-inverted block cannot expand");
}

std::vector<ParamSpec> resblock_parameters(const ResBlockSpec& spec) {
  const std::size_t s = spec.stem, b = spec.bottleneck;
  return {
      {"conv1.w", {b, s, 1, 1}},
      {"conv1.b", {b}},
      {"conv2.w", {b, b / spec.groups, 3, 3}},
      {"conv2.b", {b}},
      {"conv3.w", {s, b, 1, 1}},
  };
}

ParamSet init_resblock(const ResBlockSpec& spec, std::size_t total_blocks, Rng& rng) {
  spec.validate();
  if (total_blocks == 0) throw ContractError("resblock: total block count must be at least 1");
  const double fixup = std::pow(static_cast<double>(total_blocks), -0.25);
  const double gain = leaky_gain(spec.slope);
  const std::size_t s = spec.stem, b = spec.bottleneck;
  const double fan1 = static_cast<double>(s);
  const double fan2 = static_cast<double>(b / spec.groups * 9);
  ParamSet p;
  p["conv1.w"] = normal_tensor({b, s, 1, 1}, fixup * gain / std::sqrt(fan1), rng);
  p["conv1.b"] = Tensor({b}, 0.0);
  p["conv2.w"] = normal_tensor({b, b / spec.groups, 3, 3}, fixup * gain / std::sqrt(fan2), rng);
  p["conv2.b"] = Tensor({b}, 0.0);
  p["conv3.w"] = Tensor({s, b, 1, 1}, 0.0);
  return p;
}

Var resblock_forward(Graph& g, Var x, const ResBlockSpec& spec, const std::string& prefix) {
  const std::size_t s = spec.stem, b = spec.bottleneck;
  Var h = conv2d(x, param(g, prefix, "conv1.w", {b, s, 1, 1}));
  h = leaky_relu(add_channel_bias(h, param(g, prefix, "conv1.b", {b})), spec.slope);
  h = conv2d(h, param(g, prefix, "conv2.w", {b, b / spec.groups, 3, 3}), spec.groups, 1);
  h = leaky_relu(add_channel_bias(h, param(g, prefix, "conv2.b", {b})), spec.slope);
  h = conv2d(h, param(g, prefix, "conv3.w", {s, b, 1, 1}));
  return x + h;
}

ResBlockNet::ResBlockNet(ResBlockSpec spec, std::size_t total_blocks, std::size_t resolution)
    : spec_(spec), total_blocks_(total_blocks), resolution_(resolution) {
  spec_.validate();
  if (total_blocks_ == 0) throw ContractError("resblock: total block count must be at least 1");
}

Var ResBlockNet::forward(Graph& g, Var input, std::string_view prefix) const {
  return resblock_forward(g, input, spec_, std::string(prefix));
}

Model build_resblock(const ResBlockSpec& spec, std::size_t total_blocks, std::uint64_t seed, std::size_t resolution) {
  auto net = std::make_shared<const ResBlockNet>(spec, total_blocks, resolution);
  Rng rng(seed);
  return Model{net, net->initialize(rng)};
}

std::size_t grouped_conv_parameter_count(std::size_t kernel, std::size_t cin, std::size_t cout, std::size_t groups,
                                         bool bias) {
  if (groups == 0 || cin % groups != 0 || cout % groups != 0) {
    throw ContractError("grouped conv: channels not divisible by group count");
  }
  return kernel * kernel * cin * cout / groups + (bias ? cout : 0);
}

// ---------------------------------------------------------------------------
// Backbone

void BackboneSpec::validate() const {
  if (z_dim == 0 || image_channels == 0) throw ContractError("backbone: z_dim and image channels must be positive");
  if (stages.empty() || stages.front().resolution != 4) throw ContractError("backbone: first stage must be 4x4");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const StageSpec& s = stages[i];
    if (i > 0 && s.resolution != 2 * stages[i - 1].resolution) {
      throw ContractError("backbone: each stage must double the resolution");
    }
    if (s.blocks == 0) throw ContractError("backbone: every stage needs at least one block");
    ResBlockSpec{s.stem, s.bottleneck, s.groups, s.bottleneck > s.stem, slope}.validate();
  }
  if (resolution() > 16) throw ContractError("backbone: resolutions above 16x16 are not supported");
}

std::size_t BackboneSpec::total_blocks() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.blocks;
  return n;
}

namespace {

ResBlockSpec block_spec(const BackboneSpec& spec, const StageSpec& s) {
  return ResBlockSpec{s.stem, s.bottleneck, s.groups, s.bottleneck > s.stem, spec.slope};
}

std::string block_prefix(std::size_t stage, std::size_t block) {
  return "s" + std::to_string(stage) + ".b" + std::to_string(block) + ".";
}

std::string stage_prefix(std::size_t stage) { return "s" + std::to_string(stage) + "."; }

void append_block_params(std::vector<ParamSpec>& out, const ResBlockSpec& spec, const std::string& prefix) {
  for (auto p : resblock_parameters(spec)) {
    p.name = prefix + p.name;
    out.push_back(std::move(p));
  }
}

void init_blocks(ParamSet& out, const BackboneSpec& spec, Rng& rng) {
  const std::size_t total = spec.total_blocks();
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    for (std::size_t b = 0; b < spec.stages[s].blocks; ++b) {
      for (auto& [name, value] : init_resblock(block_spec(spec, spec.stages[s]), total, rng)) {
        out[block_prefix(s, b) + name] = std::move(value);
      }
    }
  }
}

Var conv1x1(Graph& g, Var x, std::string_view prefix, const std::string& name, std::size_t cin, std::size_t cout,
            bool bias) {
  Var y = conv2d(x, param(g, prefix, name + ".w", {cout, cin, 1, 1}));
  if (bias) y = add_channel_bias(y, param(g, prefix, name + ".b", {cout}));
  return y;
}

void init_conv1x1(ParamSet& p, const std::string& name, std::size_t cin, std::size_t cout, Rng& rng) {
  p[name + ".w"] = normal_tensor({cout, cin, 1, 1}, 1.0 / std::sqrt(static_cast<double>(cin)), rng);
  p[name + ".b"] = Tensor({cout}, 0.0);
}

}  // namespace

BackboneGenerator::BackboneGenerator(BackboneSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Shape BackboneGenerator::output_shape() const { return {spec_.image_channels, spec_.resolution(), spec_.resolution()}; }

std::vector<ParamSpec> BackboneGenerator::parameters() const {
  const auto& st = spec_.stages;
  std::vector<ParamSpec> out;
  const std::size_t c0 = st.front().stem;
  out.push_back({"basis.const", {c0, 4, 4}});
  out.push_back({"basis.mod.w", {spec_.z_dim, c0}});
  out.push_back({"basis.mod.b", {c0}});
  for (std::size_t s = 0; s < st.size(); ++s) {
    if (s > 0 && st[s].stem != st[s - 1].stem) {
      out.push_back({stage_prefix(s) + "trans.w", {st[s].stem, st[s - 1].stem, 1, 1}});
      out.push_back({stage_prefix(s) + "trans.b", {st[s].stem}});
    }
    for (std::size_t b = 0; b < st[s].blocks; ++b) append_block_params(out, block_spec(spec_, st[s]), block_prefix(s, b));
  }
  out.push_back({"to_image.w", {spec_.image_channels, st.back().stem, 1, 1}});
  out.push_back({"to_image.b", {spec_.image_channels}});
  return out;
}

ParamSet BackboneGenerator::initialize(Rng& rng) const {
  const auto& st = spec_.stages;
  ParamSet p;
  const std::size_t c0 = st.front().stem;
  p["basis.const"] = normal_tensor({c0, 4, 4}, 1.0, rng);
  p["basis.mod.w"] = normal_tensor({spec_.z_dim, c0}, 1.0 / std::sqrt(static_cast<double>(spec_.z_dim)), rng);
  p["basis.mod.b"] = Tensor({c0}, 1.0);
  for (std::size_t s = 1; s < st.size(); ++s) {
    if (st[s].stem != st[s - 1].stem) init_conv1x1(p, stage_prefix(s) + "trans", st[s - 1].stem, st[s].stem, rng);
  }
  init_blocks(p, spec_, rng);
  init_conv1x1(p, "to_image", st.back().stem, spec_.image_channels, rng);
  return p;
}

Var BackboneGenerator::forward(Graph& g, Var input, std::string_view prefix) const {
  const auto& st = spec_.stages;
  const std::size_t n = input.shape()[0];
  const std::size_t c0 = st.front().stem;
  const Shape basis_shape{n, c0, 4, 4};
  Var scale = matmul(input, param(g, prefix, "basis.mod.w", {spec_.z_dim, c0})) +
              param(g, prefix, "basis.mod.b", {c0});
  Var x = broadcast_to(param(g, prefix, "basis.const", {c0, 4, 4}), basis_shape) *
          broadcast_to(reshape(scale, {n, c0, 1, 1}), basis_shape);
  for (std::size_t s = 0; s < st.size(); ++s) {
    if (s > 0) {
      x = bilinear_resample(x, Resampling::kUp2);
      if (st[s].stem != st[s - 1].stem) {
        x = conv1x1(g, x, prefix, stage_prefix(s) + "trans", st[s - 1].stem, st[s].stem, true);
      }
    }
    for (std::size_t b = 0; b < st[s].blocks; ++b) {
      x = resblock_forward(g, x, block_spec(spec_, st[s]), std::string(prefix) + block_prefix(s, b));
    }
  }
  return conv1x1(g, x, prefix, "to_image", st.back().stem, spec_.image_channels, true);
}

BackboneDiscriminator::BackboneDiscriminator(BackboneSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Shape BackboneDiscriminator::input_shape() const {
  return {spec_.image_channels, spec_.resolution(), spec_.resolution()};
}

std::vector<ParamSpec> BackboneDiscriminator::parameters() const {
  const auto& st = spec_.stages;
  std::vector<ParamSpec> out;
  out.push_back({"from_image.w", {st.back().stem, spec_.image_channels, 1, 1}});
  out.push_back({"from_image.b", {st.back().stem}});
  for (std::size_t s = st.size(); s-- > 0;) {
    for (std::size_t b = 0; b < st[s].blocks; ++b) append_block_params(out, block_spec(spec_, st[s]), block_prefix(s, b));
    if (s > 0 && st[s].stem != st[s - 1].stem) {
      out.push_back({stage_prefix(s) + "trans.w", {st[s - 1].stem, st[s].stem, 1, 1}});
      out.push_back({stage_prefix(s) + "trans.b", {st[s - 1].stem}});
    }
  }
  const std::size_t c0 = st.front().stem;
  out.push_back({"head.dw.w", {c0, 1, 4, 4}});
  out.push_back({"head.fc.w", {c0, 1}});
  out.push_back({"head.fc.b", {1}});
  return out;
}

ParamSet BackboneDiscriminator::initialize(Rng& rng) const {
  const auto& st = spec_.stages;
  ParamSet p;
  init_conv1x1(p, "from_image", spec_.image_channels, st.back().stem, rng);
  for (std::size_t s = st.size(); s-- > 1;) {
    if (st[s].stem != st[s - 1].stem) init_conv1x1(p, stage_prefix(s) + "trans", st[s].stem, st[s - 1].stem, rng);
  }
  init_blocks(p, spec_, rng);
  const std::size_t c0 = st.front().stem;
  p["head.dw.w"] = normal_tensor({c0, 1, 4, 4}, 1.0 / 4.0, rng);
  p["head.fc.w"] = normal_tensor({c0, 1}, 1.0 / std::sqrt(static_cast<double>(c0)), rng);
  p["head.fc.b"] = Tensor({1}, 0.0);
  return p;
}

Var BackboneDiscriminator::forward(Graph& g, Var input, std::string_view prefix) const {
  const auto& st = spec_.stages;
  const std::size_t n = input.shape()[0];
  Var x = conv1x1(g, input, prefix, "from_image", spec_.image_channels, st.back().stem, true);
  for (std::size_t s = st.size(); s-- > 0;) {
    for (std::size_t b = 0; b < st[s].blocks; ++b) {
      x = resblock_forward(g, x, block_spec(spec_, st[s]), std::string(prefix) + block_prefix(s, b));
    }
    if (s > 0) {
      if (st[s].stem != st[s - 1].stem) {
        x = conv1x1(g, x, prefix, stage_prefix(s) + "trans", st[s].stem, st[s - 1].stem, true);
      }
      x = bilinear_resample(x, Resampling::kDown2);
    }
  }
  const std::size_t c0 = st.front().stem;
  x = conv2d(x, param(g, prefix, "head.dw.w", {c0, 1, 4, 4}), c0, 0);
  x = reshape(x, {n, c0});
  x = matmul(x, param(g, prefix, "head.fc.w", {c0, 1})) + param(g, prefix, "head.fc.b", {1});
  return reshape(x, {n});
}

Backbone build_backbone(const BackboneSpec& spec, std::uint64_t seed) {
  auto gen = std::make_shared<const BackboneGenerator>(spec);
  auto disc = std::make_shared<const BackboneDiscriminator>(spec);
  Rng rng(seed);
  Rng g_rng = rng.split("generator");
  Rng d_rng = rng.split("discriminator");
  return Backbone{Model{gen, gen->initialize(g_rng)}, Model{disc, disc->initialize(d_rng)}};
}

BackboneSpec invert_bottleneck(const BackboneSpec& spec) {
  spec.validate();
  const std::size_t target = parameter_count(BackboneGenerator(spec));
  BackboneSpec best;
  std::size_t best_gap = static_cast<std::size_t>(-1);
  // Scan a common stem multiplier; stems shrink as the bottleneck widens.
  for (int k = 1; k <= 256; ++k) {
    const double ratio = static_cast<double>(k) / 128.0;
    BackboneSpec candidate = spec;
    bool valid = true;
    for (auto& s : candidate.stages) {
      s.bottleneck *= 2;
      s.groups *= 2;
      s.stem = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(s.stem) * ratio)));
      if (s.stem >= s.bottleneck) valid = false;
    }
    if (!valid) continue;
    const std::size_t count = parameter_count(BackboneGenerator(candidate));
    const std::size_t gap = count > target ? count - target : target - count;
    if (gap < best_gap) {
      best_gap = gap;
      best = candidate;
    }
  }
  if (best.stages.empty()) throw ContractError("invert_bottleneck: no valid inverted configuration");
  return best;
}

Tensor bilinear_resample(const Tensor& x, Resampling factor) {
  if (x.rank() != 4) throw ContractError("bilinear_resample expects [n, c, h, w], got " + to_string(x.shape()));
  Tensor out;
  if (factor == Resampling::kUp2) {
    kernels::resample(x, 2 * x.dim(2), 2 * x.dim(3), out);
  } else {
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
      throw ContractError("downsampling needs even extents, got " + to_string(x.shape()));
    }
    kernels::resample(x, x.dim(2) / 2, x.dim(3) / 2, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toy players

ParamSet DiracGenerator::initialize(Rng& rng) const { return {{"theta", normal_tensor({data_dim_}, 1.0, rng)}}; }

Var DiracGenerator::forward(Graph& g, Var input, std::string_view prefix) const {
  const std::size_t n = input.shape()[0];
  return broadcast_to(param(g, prefix, "theta", {data_dim_}), {n, data_dim_});
}

ParamSet ShiftGenerator::initialize(Rng& rng) const { return {{"theta", normal_tensor({dim_}, 1.0, rng)}}; }

Var ShiftGenerator::forward(Graph& g, Var input, std::string_view prefix) const {
  return input + param(g, prefix, "theta", {dim_});
}

ParamSet LinearCritic::initialize(Rng& rng) const { return {{"psi", normal_tensor({dim_}, 1.0, rng)}}; }

Var LinearCritic::forward(Graph& g, Var input, std::string_view prefix) const {
  const std::size_t n = input.shape()[0];
  Var psi = param(g, prefix, "psi", {dim_});
  return reshape(matmul(input, reshape(psi, {dim_, 1})), {n});
}

ParamSet QuadraticCritic::initialize(Rng& rng) const { return {{"psi", normal_tensor({1}, 1.0, rng)}}; }

Var QuadraticCritic::forward(Graph& g, Var input, std::string_view prefix) const {
  const std::size_t n = input.shape()[0];
  Var norm2 = reshape(sum_to(square(input), {n, 1}), {n});
  return norm2 * param(g, prefix, "psi", {1});
}

std::vector<Op> forward_ops(const Network& net) {
  const ForwardGraph fg = forward_graph(net, 2);
  std::set<Op> ops;
  for (const Node& node : fg.graph.nodes()) ops.insert(node.op);
  return {ops.begin(), ops.end()};
}

bool uses_normalization(const Network& net) {
  // Standardising statistics needs a reduction followed by division or sqrt.
  for (Op op : forward_ops(net)) {
    if (op == Op::kMean || op == Op::kSqrt || op == Op::kDiv) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Parameter files

void save_params(const ParamSet& params, const std::filesystem::path& bin_path,
                 const std::filesystem::path& manifest_path) {
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot open " + bin_path.string() + " for writing");
  nlohmann::json manifest;
  manifest["format"] = "float64-le";
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, tensor] : params) {
    for (double v : tensor.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
      bin.write(bytes, 8);
    }
    const std::size_t nbytes = tensor.size() * 8;
    manifest["tensors"].push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}, {"bytes", nbytes}});
    offset += nbytes;
  }
  if (!bin) throw Error("failed writing " + bin_path.string());
  std::ofstream man(manifest_path, std::ios::trunc);
  if (!man) throw Error("cannot open " + manifest_path.string() + " for writing");
  man << manifest.dump(2) << '\n';
}

ParamSet load_params(const std::filesystem::path& bin_path, const std::filesystem::path& manifest_path) {
  std::ifstream man(manifest_path);
  if (!man) throw Error("cannot open " + manifest_path.string());
  const auto manifest = nlohmann::json::parse(man);
  if (manifest.value("format", "") != "float64-le") throw Error("unsupported parameter format");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error("cannot open " + bin_path.string());
  ParamSet params;
  for (const auto& entry : manifest.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    const auto offset = entry.at("offset").get<std::size_t>();
    if (entry.at("bytes").get<std::size_t>() != t.size() * 8) throw Error("manifest byte count mismatch");
    bin.seekg(static_cast<std::streamoff>(offset));
    for (std::size_t i = 0; i < t.size(); ++i) {
      unsigned char bytes[8];
      bin.read(reinterpret_cast<char*>(bytes), 8);
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      t[i] = std::bit_cast<double>(bits);
    }
    if (!bin) throw Error("truncated parameter file " + bin_path.string());
    params.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return params;
}

}  // namespace gandyn
