#include "gandyn/gradcheck_suites.hpp"

#include <functional>

#include "gandyn/autodiff.hpp"
#include "gandyn/losses.hpp"
#include "gandyn/models.hpp"
#include "gandyn/rng.hpp"

namespace gandyn {

namespace {

constexpr double kEps = 1e-5;
constexpr double kPrimitiveTol = 1e-6;
constexpr double kPenaltyTol = 1e-5;

enum class Domain { kAny, kPositive, kAwayFromZero };

struct Input {
  std::string name;
  Shape shape;
  Domain domain = Domain::kAny;
};

Tensor draw(const Shape& shape, Domain domain, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double u = rng.uniform();
    switch (domain) {
      case Domain::kAny: t[i] = 2.0 * u - 1.0; break;
      case Domain::kPositive: t[i] = 0.5 + u; break;
      // Keeps leaky-ReLU inputs at least 0.1 from the kink.
      case Domain::kAwayFromZero: t[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.1 + u); break;
    }
  }
  return t;
}

using Builder = std::function<Var(std::vector<Var>&)>;

struct Built {
  Graph graph;
  NodeId output = 0;
  TensorMap point;
  std::vector<std::string> names;
};

// Builds sum(op(inputs) * w) with a fixed random weight w so every output
// component contributes with a different coefficient.
Built build(const std::vector<Input>& inputs, const Builder& op, Rng& rng) {
  Built b;
  std::vector<Var> vars;
  for (const auto& in : inputs) {
    vars.push_back(variable(b.graph, in.name, in.shape));
    b.point.emplace(in.name, draw(in.shape, in.domain, rng));
    b.names.push_back(in.name);
  }
  Var y = op(vars);
  if (y.shape().empty()) {
    b.output = y.id;
  } else {
    Var w = constant(b.graph, draw(y.shape(), Domain::kAny, rng));
    b.output = sum(y * w).id;
  }
  return b;
}

double first_order(const Built& b) { return grad_check(b.graph, b.output, b.point, kEps, b.names).max_error; }

// Checks the gradient graph itself: s = sum_v <grad_v, u_v> for random u.
double second_order(const Built& b, Rng& rng) {
  GradientGraph gg = gradient(b.graph, b.output, b.names);
  Graph& g = gg.graph;
  std::optional<Var> acc;
  for (const auto& name : b.names) {
    Var gv = g.var(gg.grads.at(name));
    Var term = sum(gv * constant(g, draw(gv.shape(), Domain::kAny, rng)));
    acc = acc ? *acc + term : term;
  }
  return grad_check(g, acc->id, b.point, kEps, b.names).max_error;
}

void add_case(std::vector<GradCheckCase>& out, std::string suite, std::string name, double error, double tol) {
  out.push_back({std::move(suite), std::move(name), error, tol});
}

void primitive_cases(std::vector<GradCheckCase>& out) {
  Rng rng(101);
  struct Prim {
    std::string name;
    std::vector<Input> inputs;
    Builder op;
  };
  const Shape s{3, 4};
  const std::vector<Prim> prims = {
      {"add", {{"a", s}, {"b", s}}, [](auto& v) { return v[0] + v[1]; }},
      {"sub", {{"a", s}, {"b", s}}, [](auto& v) { return v[0] - v[1]; }},
      {"mul", {{"a", s}, {"b", s}}, [](auto& v) { return v[0] * v[1]; }},
      {"div", {{"a", s}, {"b", s, Domain::kPositive}}, [](auto& v) { return v[0] / v[1]; }},
      {"neg", {{"a", s}}, [](auto& v) { return -v[0]; }},
      {"scale", {{"a", s}}, [](auto& v) { return 2.5 * v[0]; }},
      {"matmul", {{"a", {3, 4}}, {"b", {4, 2}}}, [](auto& v) { return matmul(v[0], v[1]); }},
      {"transpose", {{"a", s}}, [](auto& v) { return transpose(v[0]); }},
      {"conv2d", {{"x", {2, 4, 5, 5}}, {"w", {4, 2, 3, 3}}}, [](auto& v) { return conv2d(v[0], v[1], 2, 1); }},
      {"conv2d_depthwise", {{"x", {1, 3, 4, 4}}, {"w", {3, 1, 4, 4}}}, [](auto& v) { return conv2d(v[0], v[1], 3, 0); }},
      {"bilinear_up", {{"x", {1, 2, 3, 3}}}, [](auto& v) { return bilinear_resample(v[0], Resampling::kUp2); }},
      {"bilinear_down", {{"x", {1, 2, 4, 4}}}, [](auto& v) { return bilinear_resample(v[0], Resampling::kDown2); }},
      {"leaky_relu", {{"a", s, Domain::kAwayFromZero}}, [](auto& v) { return leaky_relu(v[0], 0.2); }},
      {"softplus", {{"a", s}}, [](auto& v) { return softplus(v[0]); }},
      {"sigmoid", {{"a", s}}, [](auto& v) { return sigmoid(v[0]); }},
      {"exp", {{"a", s}}, [](auto& v) { return exp(v[0]); }},
      {"log", {{"a", s, Domain::kPositive}}, [](auto& v) { return log(v[0]); }},
      {"square", {{"a", s}}, [](auto& v) { return square(v[0]); }},
      {"sqrt", {{"a", s, Domain::kPositive}}, [](auto& v) { return sqrt(v[0]); }},
      {"sum", {{"a", s}}, [](auto& v) { return sum(square(v[0])); }},
      {"mean", {{"a", s}}, [](auto& v) { return mean(square(v[0])); }},
      {"sum_to", {{"a", s}}, [](auto& v) { return sum_to(v[0], {1, 4}); }},
      {"broadcast", {{"a", {4}}}, [](auto& v) { return broadcast_to(v[0], {3, 4}); }},
      {"reshape", {{"a", s}}, [](auto& v) { return reshape(v[0], {2, 6}); }},
      {"concat", {{"a", s}, {"b", {3, 2}}}, [](auto& v) { return concat(v[0], v[1], 1); }},
      {"slice", {{"a", s}}, [](auto& v) { return slice(v[0], 1, 1, 3); }},
  };
  for (const auto& p : prims) {
    const Built b = build(p.inputs, p.op, rng);
    add_case(out, "primitives", p.name, first_order(b), kPrimitiveTol);
    // Second order: the gradient of each primitive is itself made of
    // primitives, so it must differentiate consistently as well. Products
    // make it non-trivial for the linear ones.
    std::vector<Input> inputs = p.inputs;
    auto op = p.op;
    const Built b2 = build(inputs, [op](auto& v) {
      Var y = op(v);
      return y * y * y;
    }, rng);
    add_case(out, "primitives", p.name + " (second order)", second_order(b2, rng), kPrimitiveTol);
  }
}

void composed_cases(std::vector<GradCheckCase>& out) {
  Rng rng(202);
  {
    Built b;
    Var x = variable(b.graph, "x", {});
    b.output = (x * x * x).id;
    b.point.emplace("x", Tensor::scalar(1.7));
    b.names = {"x"};
    add_case(out, "composed", "cube at 1.7", first_order(b), 1e-8);
  }
  {
    const Built b = build({{"a", {4, 6}}, {"b", {6, 5}}, {"c", {5, 3}}},
                          [](auto& v) { return matmul(matmul(v[0], v[1]), v[2]); }, rng);
    add_case(out, "composed", "matmul chain", first_order(b), kPrimitiveTol);
  }
  {
    // f'(t) as a graph, checked against its own derivative at t = 0.3.
    Built b;
    Var t = variable(b.graph, "t", {});
    b.output = grad(f_logistic(t), t).id;
    b.point.emplace("t", Tensor::scalar(0.3));
    b.names = {"t"};
    add_case(out, "composed", "f second order at 0.3", first_order(b), kPrimitiveTol);
  }
  {
    const Built b = build({{"x", {3, 4}}, {"w", {4, 4}}, {"c", {4}}},
                          [](auto& v) { return log(softplus(matmul(v[0], v[1]) + v[2]) + 1.0); }, rng);
    add_case(out, "composed", "affine softplus log", first_order(b), kPrimitiveTol);
    add_case(out, "composed", "affine softplus log (second order)", second_order(b, rng), kPrimitiveTol);
  }
  {
    const Built b = build({{"x", {1, 2, 4, 4}}, {"w", {2, 2, 3, 3}}},
                          [](auto& v) {
                            Var h = sigmoid(conv2d(v[0], v[1], 1, 1));
                            return bilinear_resample(bilinear_resample(h, Resampling::kDown2), Resampling::kUp2);
                          },
                          rng);
    add_case(out, "composed", "conv sigmoid resample", first_order(b), kPrimitiveTol);
    add_case(out, "composed", "conv sigmoid resample (second order)", second_order(b, rng), kPrimitiveTol);
  }
  {
    const Built b = build({{"a", {2, 3}}, {"b", {2, 3}, Domain::kPositive}},
                          [](auto& v) { return sqrt(v[1]) * exp(-square(v[0])) / (v[1] + 1.0); }, rng);
    add_case(out, "composed", "gaussian ratio", first_order(b), kPrimitiveTol);
    add_case(out, "composed", "gaussian ratio (second order)", second_order(b, rng), kPrimitiveTol);
  }
}

Model random_critic(std::size_t dim, std::uint64_t seed) {
  MlpSpec spec;
  spec.input_dim = dim;
  spec.hidden = {8, 8};
  spec.output_dim = 1;
  spec.scalar_output = true;
  Model m = build_mlp(spec, seed);
  // Non-zero biases move pre-activations away from the kink at 0.
  Rng rng(seed + 17);
  for (auto& [name, t] : m.params) {
    if (name.ends_with(".b")) t = draw(t.shape(), Domain::kAny, rng);
  }
  return m;
}

void penalty_cases(std::vector<GradCheckCase>& out) {
  constexpr std::size_t kDim = 2, kBatch = 6;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(300 + seed);
    const Model critic = random_critic(kDim, seed);
    {
      Built b;
      Var x = variable(b.graph, "x_real", {kBatch, kDim});
      b.output = r1_penalty(*critic.net, "D.", x, 2.0).id;
      b.point = prefixed(critic.params, "D.");
      for (const auto& [name, value] : b.point) b.names.push_back(name);
      b.point.emplace("x_real", draw({kBatch, kDim}, Domain::kAny, rng));
      add_case(out, "penalties", "grad_psi R1, critic " + std::to_string(seed), first_order(b), kPenaltyTol);
    }
    {
      MlpSpec gs;
      gs.input_dim = 3;
      gs.hidden = {8};
      gs.output_dim = kDim;
      const Model gen = build_mlp(gs, 50 + seed);
      Built b;
      Var z = variable(b.graph, "z", {kBatch, 3});
      b.output = r2_penalty(*critic.net, "D.", gen.net->forward(b.graph, z, "G."), 2.0).id;
      b.point = prefixed(critic.params, "D.");
      for (const auto& [name, value] : b.point) b.names.push_back(name);
      for (auto& [name, value] : prefixed(gen.params, "G.")) b.point.emplace(name, value);
      b.point.emplace("z", draw({kBatch, 3}, Domain::kAny, rng));
      add_case(out, "penalties", "grad_psi R2, critic " + std::to_string(seed), first_order(b), kPenaltyTol);
    }
  }
}

void model_cases(std::vector<GradCheckCase>& out) {
  Rng rng(404);
  {
    MlpSpec spec;
    spec.input_dim = 3;
    spec.hidden = {6, 6};
    spec.output_dim = 1;
    spec.residual = true;
    spec.scalar_output = true;
    const Model m = build_mlp(spec, 7);
    ForwardGraph fg = forward_graph(*m.net, 4);
    Built b;
    b.graph = std::move(fg.graph);
    b.output = mean(b.graph.var(fg.output)).id;
    b.point = m.params;
    for (const auto& [name, value] : b.point) b.names.push_back(name);
    b.point.emplace("input", draw({4, 3}, Domain::kAny, rng));
    b.names.push_back("input");
    add_case(out, "models", "mlp with scalar head", first_order(b), kPrimitiveTol);
  }
  {
    ResBlockSpec spec{4, 4, 2, false};
    Model m = build_resblock(spec, 2, 8, 4);
    // Fix-up leaves conv3 at zero; perturb it so every path is exercised.
    m.params["conv3.w"] = draw(m.params["conv3.w"].shape(), Domain::kAny, rng);
    ForwardGraph fg = forward_graph(*m.net, 2);
    Built b;
    b.graph = std::move(fg.graph);
    Var y = b.graph.var(fg.output);
    b.output = sum(y * constant(b.graph, draw(y.shape(), Domain::kAny, rng))).id;
    b.point = m.params;
    for (const auto& [name, value] : b.point) b.names.push_back(name);
    b.point.emplace("input", draw({2, 4, 4, 4}, Domain::kAny, rng));
    b.names.push_back("input");
    add_case(out, "models", "residual block", first_order(b), kPrimitiveTol);
  }
  {
    BackboneSpec spec;
    spec.z_dim = 3;
    spec.stages = {{4, 4, 4, 2, 1}, {8, 4, 4, 2, 1}};
    Backbone bb = build_backbone(spec, 9);
    for (auto* params : {&bb.generator.params, &bb.discriminator.params}) {
      for (auto& [name, t] : *params) {
        if (name.ends_with("conv3.w")) t = draw(t.shape(), Domain::kAny, rng);
      }
    }
    Built b;
    Var z = variable(b.graph, "z", {2, 3});
    Var img = bb.generator.net->forward(b.graph, z, "G.");
    b.output = mean(softplus(bb.discriminator.net->forward(b.graph, img, "D."))).id;
    b.point = prefixed(bb.generator.params, "G.");
    for (auto& [name, value] : prefixed(bb.discriminator.params, "D.")) b.point.emplace(name, value);
    for (const auto& [name, value] : b.point) b.names.push_back(name);
    b.point.emplace("z", draw({2, 3}, Domain::kAny, rng));
    add_case(out, "models", "backbone G then D", first_order(b), 1e-5);
  }
}

}  // namespace

const std::vector<std::string>& gradcheck_suite_names() {
  static const std::vector<std::string> names{"primitives", "composed", "penalties", "models", "all"};
  return names;
}

std::vector<GradCheckCase> run_gradcheck_suite(std::string_view suite) {
  std::vector<GradCheckCase> out;
  const bool all = suite == "all";
  if (all || suite == "primitives") primitive_cases(out);
  if (all || suite == "composed") composed_cases(out);
  if (all || suite == "penalties") penalty_cases(out);
  if (all || suite == "models") model_cases(out);
  if (out.empty()) throw ContractError("unknown gradcheck suite '" + std::string(suite) + "'");
  return out;
}

}  // namespace gandyn
