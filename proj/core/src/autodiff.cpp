#include "gandyn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gandyn/kernels.hpp"

namespace gandyn {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kVariable: return "variable";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kScale: return "scale";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kConv2d: return "conv2d";
    case Op::kConv2dInputGrad: return "conv2d_input_grad";
    case Op::kConv2dWeightGrad: return "conv2d_weight_grad";
    case Op::kResample: return "bilinear_resample";
    case Op::kResampleAdjoint: return "bilinear_resample_adjoint";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kLeakyMask: return "leaky_mask";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSumTo: return "sum_to";
    case Op::kBroadcastTo: return "broadcast";
    case Op::kReshape: return "reshape";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kEmbed: return "embed";
    case Op::kStopGradient: return "stop_gradient";
  }
  return "unknown";
}

const Shape& Var::shape() const { return graph->shape(id); }

// ---------------------------------------------------------------------------
// Construction and shape inference

NodeId Graph::push(Op op, std::vector<NodeId> inputs, Shape shape, NodeAttrs attrs) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(shape), std::move(attrs)});
  return nodes_.size() - 1;
}

void Graph::check_id(NodeId id) const {
  if (id >= nodes_.size()) {
    throw ContractError("node id " + std::to_string(id) + " out of range");
  }
}

const Shape& Graph::same_shape(NodeId a, NodeId b, std::string_view what) const {
  check_id(a);
  check_id(b);
  if (nodes_[a].shape != nodes_[b].shape) {
    throw ShapeError(nodes_.size(), std::string(what) + ": operand shapes " + to_string(nodes_[a].shape) +
                                        " and " + to_string(nodes_[b].shape) + " differ");
  }
  return nodes_[a].shape;
}

NodeId Graph::variable(std::string name, Shape shape) {
  if (auto it = variables_.find(name); it != variables_.end()) {
    if (nodes_[it->second].shape != shape) {
      throw ShapeError(it->second, "variable '" + name + "' redeclared with shape " + to_string(shape));
    }
    return it->second;
  }
  NodeAttrs attrs;
  attrs.name = name;
  const NodeId id = push(Op::kVariable, {}, std::move(shape), std::move(attrs));
  variables_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::constant(Tensor value) {
  NodeAttrs attrs;
  Shape shape = value.shape();
  attrs.value = std::make_shared<const Tensor>(std::move(value));
  return push(Op::kConstant, {}, std::move(shape), std::move(attrs));
}

NodeId Graph::add(NodeId a, NodeId b) { return push(Op::kAdd, {a, b}, same_shape(a, b, "add")); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(Op::kSub, {a, b}, same_shape(a, b, "sub")); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(Op::kMul, {a, b}, same_shape(a, b, "mul")); }
NodeId Graph::div(NodeId a, NodeId b) { return push(Op::kDiv, {a, b}, same_shape(a, b, "div")); }

NodeId Graph::neg(NodeId a) {
  check_id(a);
  return push(Op::kNeg, {a}, nodes_[a].shape);
}

NodeId Graph::scale(NodeId a, double factor) {
  check_id(a);
  NodeAttrs attrs;
  attrs.scalar = factor;
  return push(Op::kScale, {a}, nodes_[a].shape, std::move(attrs));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Shape& sa = nodes_[a].shape;
  const Shape& sb = nodes_[b].shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError(nodes_.size(), "matmul of " + to_string(sa) + " and " + to_string(sb));
  }
  return push(Op::kMatMul, {a, b}, Shape{sa[0], sb[1]});
}

NodeId Graph::transpose(NodeId a) {
  check_id(a);
  const Shape& s = nodes_[a].shape;
  if (s.size() != 2) throw ShapeError(nodes_.size(), "transpose needs rank 2, got " + to_string(s));
  return push(Op::kTranspose, {a}, Shape{s[1], s[0]});
}

namespace {

void check_conv(std::size_t at, const Shape& x, const Shape& w, std::size_t groups, std::size_t padding) {
  if (x.size() != 4 || w.size() != 4) {
    throw ShapeError(at, "conv2d expects rank-4 input and weight, got " + to_string(x) + " and " + to_string(w));
  }
  if (groups == 0 || x[1] % groups != 0 || w[0] % groups != 0) {
    throw ShapeError(at, "conv2d channels not divisible by " + std::to_string(groups) + " groups");
  }
  if (w[1] * groups != x[1]) {
    throw ShapeError(at, "conv2d weight " + to_string(w) + " incompatible with input " + to_string(x));
  }
  if (x[2] + 2 * padding < w[2] || x[3] + 2 * padding < w[3]) {
    throw ShapeError(at, "conv2d kernel larger than padded input");
  }
}

Shape conv_output_shape(const Shape& x, const Shape& w, std::size_t padding) {
  return Shape{x[0], w[0], x[2] + 2 * padding - w[2] + 1, x[3] + 2 * padding - w[3] + 1};
}

}  // namespace

NodeId Graph::conv2d(NodeId x, NodeId weight, std::size_t groups, std::size_t padding) {
  check_id(x);
  check_id(weight);
  check_conv(nodes_.size(), nodes_[x].shape, nodes_[weight].shape, groups, padding);
  NodeAttrs attrs;
  attrs.groups = groups;
  attrs.padding = padding;
  return push(Op::kConv2d, {x, weight}, conv_output_shape(nodes_[x].shape, nodes_[weight].shape, padding),
              std::move(attrs));
}

NodeId Graph::conv2d_input_grad(NodeId grad_out, NodeId weight, std::size_t groups, std::size_t padding,
                                Shape input_shape) {
  check_id(grad_out);
  check_id(weight);
  check_conv(nodes_.size(), input_shape, nodes_[weight].shape, groups, padding);
  if (conv_output_shape(input_shape, nodes_[weight].shape, padding) != nodes_[grad_out].shape) {
    throw ShapeError(nodes_.size(), "conv2d_input_grad: gradient shape mismatch");
  }
  NodeAttrs attrs;
  attrs.groups = groups;
  attrs.padding = padding;
  Shape shape = input_shape;
  attrs.target = std::move(input_shape);
  return push(Op::kConv2dInputGrad, {grad_out, weight}, std::move(shape), std::move(attrs));
}

NodeId Graph::conv2d_weight_grad(NodeId x, NodeId grad_out, std::size_t groups, std::size_t padding,
                                 Shape weight_shape) {
  check_id(x);
  check_id(grad_out);
  check_conv(nodes_.size(), nodes_[x].shape, weight_shape, groups, padding);
  if (conv_output_shape(nodes_[x].shape, weight_shape, padding) != nodes_[grad_out].shape) {
    throw ShapeError(nodes_.size(), "conv2d_weight_grad: gradient shape mismatch");
  }
  NodeAttrs attrs;
  attrs.groups = groups;
  attrs.padding = padding;
  Shape shape = weight_shape;
  attrs.target = std::move(weight_shape);
  return push(Op::kConv2dWeightGrad, {x, grad_out}, std::move(shape), std::move(attrs));
}

NodeId Graph::resample(NodeId x, std::size_t out_h, std::size_t out_w) {
  check_id(x);
  const Shape& s = nodes_[x].shape;
  if (s.size() != 4 || out_h == 0 || out_w == 0 || s[2] == 0 || s[3] == 0) {
    throw ShapeError(nodes_.size(), "bilinear_resample expects [n, c, h, w], got " + to_string(s));
  }
  NodeAttrs attrs;
  attrs.target = s;
  return push(Op::kResample, {x}, Shape{s[0], s[1], out_h, out_w}, std::move(attrs));
}

NodeId Graph::resample_adjoint(NodeId grad_out, Shape input_shape) {
  check_id(grad_out);
  const Shape& s = nodes_[grad_out].shape;
  if (s.size() != 4 || input_shape.size() != 4 || s[0] != input_shape[0] || s[1] != input_shape[1]) {
    throw ShapeError(nodes_.size(), "bilinear_resample_adjoint shape mismatch");
  }
  NodeAttrs attrs;
  attrs.target = input_shape;
  return push(Op::kResampleAdjoint, {grad_out}, std::move(input_shape), std::move(attrs));
}

NodeId Graph::leaky_relu(NodeId x, double slope) {
  check_id(x);
  NodeAttrs attrs;
  attrs.scalar = slope;
  return push(Op::kLeakyRelu, {x}, nodes_[x].shape, std::move(attrs));
}

NodeId Graph::leaky_mask(NodeId x, double slope) {
  check_id(x);
  NodeAttrs attrs;
  attrs.scalar = slope;
  return push(Op::kLeakyMask, {x}, nodes_[x].shape, std::move(attrs));
}

#define GANDYN_UNARY(method, opcode)               \
  NodeId Graph::method(NodeId x) {                 \
    check_id(x);                                   \
    return push(opcode, {x}, nodes_[x].shape);     \
  }

GANDYN_UNARY(softplus, Op::kSoftplus)
GANDYN_UNARY(sigmoid, Op::kSigmoid)
GANDYN_UNARY(exp, Op::kExp)
GANDYN_UNARY(log, Op::kLog)
GANDYN_UNARY(square, Op::kSquare)
GANDYN_UNARY(sqrt, Op::kSqrt)

#undef GANDYN_UNARY

NodeId Graph::sum(NodeId x) {
  check_id(x);
  return push(Op::kSum, {x}, Shape{});
}

NodeId Graph::mean(NodeId x) {
  check_id(x);
  if (element_count(nodes_[x].shape) == 0) throw ShapeError(nodes_.size(), "mean of empty tensor");
  return push(Op::kMean, {x}, Shape{});
}

NodeId Graph::sum_to(NodeId x, Shape shape) {
  check_id(x);
  if (!kernels::broadcastable(shape, nodes_[x].shape)) {
    throw ShapeError(nodes_.size(), "cannot sum " + to_string(nodes_[x].shape) + " to " + to_string(shape));
  }
  NodeAttrs attrs;
  attrs.target = shape;
  return push(Op::kSumTo, {x}, std::move(shape), std::move(attrs));
}

NodeId Graph::broadcast_to(NodeId x, Shape shape) {
  check_id(x);
  if (!kernels::broadcastable(nodes_[x].shape, shape)) {
    throw ShapeError(nodes_.size(), "cannot broadcast " + to_string(nodes_[x].shape) + " to " + to_string(shape));
  }
  NodeAttrs attrs;
  attrs.target = shape;
  return push(Op::kBroadcastTo, {x}, std::move(shape), std::move(attrs));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  check_id(x);
  if (element_count(shape) != element_count(nodes_[x].shape)) {
    throw ShapeError(nodes_.size(), "cannot reshape " + to_string(nodes_[x].shape) + " to " + to_string(shape));
  }
  NodeAttrs attrs;
  attrs.target = shape;
  return push(Op::kReshape, {x}, std::move(shape), std::move(attrs));
}

NodeId Graph::concat(NodeId a, NodeId b, std::size_t axis) {
  check_id(a);
  check_id(b);
  const Shape& sa = nodes_[a].shape;
  const Shape& sb = nodes_[b].shape;
  bool ok = sa.size() == sb.size() && axis < sa.size();
  for (std::size_t i = 0; ok && i < sa.size(); ++i) ok = i == axis || sa[i] == sb[i];
  if (!ok) throw ShapeError(nodes_.size(), "concat of " + to_string(sa) + " and " + to_string(sb));
  Shape shape = sa;
  shape[axis] += sb[axis];
  NodeAttrs attrs;
  attrs.axis = axis;
  return push(Op::kConcat, {a, b}, std::move(shape), std::move(attrs));
}

NodeId Graph::slice(NodeId x, std::size_t axis, std::size_t begin, std::size_t end) {
  check_id(x);
  const Shape& s = nodes_[x].shape;
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError(nodes_.size(), "slice out of range on " + to_string(s));
  }
  Shape shape = s;
  shape[axis] = end - begin;
  NodeAttrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return push(Op::kSlice, {x}, std::move(shape), std::move(attrs));
}

NodeId Graph::embed(NodeId x, std::size_t axis, std::size_t begin, std::size_t extent) {
  check_id(x);
  const Shape& s = nodes_[x].shape;
  if (axis >= s.size() || begin + s[axis] > extent) {
    throw ShapeError(nodes_.size(), "embed out of range on " + to_string(s));
  }
  Shape shape = s;
  shape[axis] = extent;
  NodeAttrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = begin + s[axis];
  return push(Op::kEmbed, {x}, std::move(shape), std::move(attrs));
}

NodeId Graph::stop_gradient(NodeId x) {
  check_id(x);
  return push(Op::kStopGradient, {x}, nodes_[x].shape);
}

std::optional<NodeId> Graph::find_variable(std::string_view name) const {
  if (auto it = variables_.find(name); it != variables_.end()) return it->second;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reverse mode

std::vector<NodeId> Graph::gradients(NodeId output, std::span<const NodeId> wrt) {
  check_id(output);
  if (!nodes_[output].shape.empty()) {
    throw ContractError("gradient requires a scalar output, node " + std::to_string(output) + " has shape " +
                        to_string(nodes_[output].shape));
  }
  const std::size_t limit = output + 1;
  std::vector<char> needs(limit, 0);
  for (NodeId w : wrt) {
    check_id(w);
    if (w < limit) needs[w] = 1;
  }
  for (NodeId i = 0; i < limit; ++i) {
    if (needs[i] || nodes_[i].op == Op::kLeakyMask || nodes_[i].op == Op::kStopGradient) continue;
    for (NodeId in : nodes_[i].inputs) {
      if (needs[in]) {
        needs[i] = 1;
        break;
      }
    }
  }

  std::vector<std::optional<NodeId>> adjoint(limit);
  if (needs[output]) adjoint[output] = constant(Tensor::scalar(1.0));
  for (NodeId i = limit; i-- > 0;) {
    if (!adjoint[i] || !needs[i]) continue;
    backprop(i, *adjoint[i], needs, adjoint);
  }

  std::vector<NodeId> result;
  result.reserve(wrt.size());
  for (NodeId w : wrt) {
    if (w < limit && adjoint[w]) {
      result.push_back(*adjoint[w]);
    } else {
      result.push_back(constant(Tensor(nodes_[w].shape, 0.0)));
    }
  }
  return result;
}

void Graph::backprop(NodeId id, NodeId g, const std::vector<char>& needs,
                     std::vector<std::optional<NodeId>>& adjoint) {
  // Copy: pushing nodes below may reallocate nodes_.
  const Node node = nodes_[id];
  auto accumulate = [&](std::size_t slot, auto&& make) {
    const NodeId in = node.inputs[slot];
    if (!needs[in]) return;
    const NodeId contrib = make();
    adjoint[in] = adjoint[in] ? add(*adjoint[in], contrib) : contrib;
  };
  const auto& in = node.inputs;
  const auto& a = node.attrs;

  switch (node.op) {
    case Op::kVariable:
    case Op::kConstant:
    case Op::kLeakyMask:
    case Op::kStopGradient:
      break;
    case Op::kAdd:
      accumulate(0, [&] { return g; });
      accumulate(1, [&] { return g; });
      break;
    case Op::kSub:
      accumulate(0, [&] { return g; });
      accumulate(1, [&] { return neg(g); });
      break;
    case Op::kMul:
      accumulate(0, [&] { return mul(g, in[1]); });
      accumulate(1, [&] { return mul(g, in[0]); });
      break;
    case Op::kDiv:
      accumulate(0, [&] { return div(g, in[1]); });
      accumulate(1, [&] { return neg(div(mul(g, id), in[1])); });
      break;
    case Op::kNeg:
      accumulate(0, [&] { return neg(g); });
      break;
    case Op::kScale:
      accumulate(0, [&] { return scale(g, a.scalar); });
      break;
    case Op::kMatMul:
      accumulate(0, [&] { return matmul(g, transpose(in[1])); });
      accumulate(1, [&] { return matmul(transpose(in[0]), g); });
      break;
    case Op::kTranspose:
      accumulate(0, [&] { return transpose(g); });
      break;
    case Op::kConv2d:
      accumulate(0, [&] { return conv2d_input_grad(g, in[1], a.groups, a.padding, nodes_[in[0]].shape); });
      accumulate(1, [&] { return conv2d_weight_grad(in[0], g, a.groups, a.padding, nodes_[in[1]].shape); });
      break;
    case Op::kConv2dInputGrad:
      // out = A_w^T u  =>  du = A_w g,  dw = weight_grad(g, u)
      accumulate(0, [&] { return conv2d(g, in[1], a.groups, a.padding); });
      accumulate(1, [&] { return conv2d_weight_grad(g, in[0], a.groups, a.padding, nodes_[in[1]].shape); });
      break;
    case Op::kConv2dWeightGrad:
      // <g, out> = <u, conv(x, g)>  =>  dx = input_grad(u, g),  du = conv(x, g)
      accumulate(0, [&] { return conv2d_input_grad(in[1], g, a.groups, a.padding, nodes_[in[0]].shape); });
      accumulate(1, [&] { return conv2d(in[0], g, a.groups, a.padding); });
      break;
    case Op::kResample:
      accumulate(0, [&] { return resample_adjoint(g, nodes_[in[0]].shape); });
      break;
    case Op::kResampleAdjoint: {
      const Shape& s = nodes_[in[0]].shape;
      accumulate(0, [&] { return resample(g, s[2], s[3]); });
      break;
    }
    case Op::kLeakyRelu:
      accumulate(0, [&] { return mul(g, leaky_mask(in[0], a.scalar)); });
      break;
    case Op::kSoftplus:
      accumulate(0, [&] { return mul(g, sigmoid(in[0])); });
      break;
    case Op::kSigmoid:
      // s' = s * sigmoid(-x)
      accumulate(0, [&] { return mul(g, mul(id, sigmoid(neg(in[0])))); });
      break;
    case Op::kExp:
      accumulate(0, [&] { return mul(g, id); });
      break;
    case Op::kLog:
      accumulate(0, [&] { return div(g, in[0]); });
      break;
    case Op::kSquare:
      accumulate(0, [&] { return mul(g, scale(in[0], 2.0)); });
      break;
    case Op::kSqrt:
      accumulate(0, [&] { return div(g, scale(id, 2.0)); });
      break;
    case Op::kSum:
      accumulate(0, [&] { return broadcast_to(g, nodes_[in[0]].shape); });
      break;
    case Op::kMean: {
      const double n = static_cast<double>(element_count(nodes_[in[0]].shape));
      accumulate(0, [&] { return scale(broadcast_to(g, nodes_[in[0]].shape), 1.0 / n); });
      break;
    }
    case Op::kSumTo:
      accumulate(0, [&] { return broadcast_to(g, nodes_[in[0]].shape); });
      break;
    case Op::kBroadcastTo:
      accumulate(0, [&] { return sum_to(g, nodes_[in[0]].shape); });
      break;
    case Op::kReshape:
      accumulate(0, [&] { return reshape(g, nodes_[in[0]].shape); });
      break;
    case Op::kConcat: {
      const std::size_t split = nodes_[in[0]].shape[a.axis];
      const std::size_t total = node.shape[a.axis];
      accumulate(0, [&] { return slice(g, a.axis, 0, split); });
      accumulate(1, [&] { return slice(g, a.axis, split, total); });
      break;
    }
    case Op::kSlice:
      accumulate(0, [&] { return embed(g, a.axis, a.begin, nodes_[in[0]].shape[a.axis]); });
      break;
    case Op::kEmbed:
      accumulate(0, [&] { return slice(g, a.axis, a.begin, a.end); });
      break;
  }
}

// ---------------------------------------------------------------------------
// Handle builders

namespace {

Graph& graph_of(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw ContractError("operands belong to different graphs");
  return *a.graph;
}

// Broadcasts whichever operand is smaller so both share a shape.
std::pair<NodeId, NodeId> align(Graph& g, Var a, Var b) {
  const Shape& sa = g.shape(a.id);
  const Shape& sb = g.shape(b.id);
  if (sa == sb) return {a.id, b.id};
  if (kernels::broadcastable(sb, sa)) return {a.id, g.broadcast_to(b.id, sa)};
  if (kernels::broadcastable(sa, sb)) return {g.broadcast_to(a.id, sb), b.id};
  throw ShapeError(g.size(), "operands " + to_string(sa) + " and " + to_string(sb) + " do not broadcast");
}

}  // namespace

Var variable(Graph& g, std::string name, Shape shape) { return g.var(g.variable(std::move(name), std::move(shape))); }
Var constant(Graph& g, Tensor value) { return g.var(g.constant(std::move(value))); }

Var operator+(Var a, Var b) {
  Graph& g = graph_of(a, b);
  auto [x, y] = align(g, a, b);
  return g.var(g.add(x, y));
}
Var operator-(Var a, Var b) {
  Graph& g = graph_of(a, b);
  auto [x, y] = align(g, a, b);
  return g.var(g.sub(x, y));
}
Var operator*(Var a, Var b) {
  Graph& g = graph_of(a, b);
  auto [x, y] = align(g, a, b);
  return g.var(g.mul(x, y));
}
Var operator/(Var a, Var b) {
  Graph& g = graph_of(a, b);
  auto [x, y] = align(g, a, b);
  return g.var(g.div(x, y));
}
Var operator-(Var a) { return a.graph->var(a.graph->neg(a.id)); }
Var operator*(double factor, Var a) { return a.graph->var(a.graph->scale(a.id, factor)); }
Var operator+(Var a, double c) { return a + constant(*a.graph, Tensor::scalar(c)); }

Var matmul(Var a, Var b) { return graph_of(a, b).var(a.graph->matmul(a.id, b.id)); }
Var transpose(Var a) { return a.graph->var(a.graph->transpose(a.id)); }
Var conv2d(Var x, Var weight, std::size_t groups, std::size_t padding) {
  return graph_of(x, weight).var(x.graph->conv2d(x.id, weight.id, groups, padding));
}
Var leaky_relu(Var x, double slope) { return x.graph->var(x.graph->leaky_relu(x.id, slope)); }
Var softplus(Var x) { return x.graph->var(x.graph->softplus(x.id)); }
Var sigmoid(Var x) { return x.graph->var(x.graph->sigmoid(x.id)); }
Var exp(Var x) { return x.graph->var(x.graph->exp(x.id)); }
Var log(Var x) { return x.graph->var(x.graph->log(x.id)); }
Var square(Var x) { return x.graph->var(x.graph->square(x.id)); }
Var sqrt(Var x) { return x.graph->var(x.graph->sqrt(x.id)); }
Var sum(Var x) { return x.graph->var(x.graph->sum(x.id)); }
Var mean(Var x) { return x.graph->var(x.graph->mean(x.id)); }
Var sum_to(Var x, Shape shape) { return x.graph->var(x.graph->sum_to(x.id, std::move(shape))); }
Var broadcast_to(Var x, Shape shape) { return x.graph->var(x.graph->broadcast_to(x.id, std::move(shape))); }
Var reshape(Var x, Shape shape) { return x.graph->var(x.graph->reshape(x.id, std::move(shape))); }
Var concat(Var a, Var b, std::size_t axis) { return graph_of(a, b).var(a.graph->concat(a.id, b.id, axis)); }
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  return x.graph->var(x.graph->slice(x.id, axis, begin, end));
}

Var stop_gradient(Var x) { return x.graph->var(x.graph->stop_gradient(x.id)); }

Var bilinear_resample(Var x, Resampling factor) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError(x.graph->size(), "bilinear_resample expects [n, c, h, w]");
  if (factor == Resampling::kUp2) return x.graph->var(x.graph->resample(x.id, 2 * s[2], 2 * s[3]));
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw ShapeError(x.graph->size(), "downsampling needs even extents, got " + to_string(s));
  }
  return x.graph->var(x.graph->resample(x.id, s[2] / 2, s[3] / 2));
}

std::vector<Var> grad(Var output, std::span<const Var> wrt) {
  std::vector<NodeId> ids;
  ids.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.graph != output.graph) throw ContractError("grad: variable from another graph");
    ids.push_back(w.id);
  }
  const auto grads = output.graph->gradients(output.id, ids);
  std::vector<Var> out;
  out.reserve(grads.size());
  for (NodeId id : grads) out.push_back(output.graph->var(id));
  return out;
}

Var grad(Var output, Var wrt) { return grad(output, std::span<const Var>(&wrt, 1)).front(); }

GradientGraph gradient(const Graph& graph, NodeId output, const std::vector<std::string>& wrt) {
  GradientGraph result{graph, {}};
  std::vector<NodeId> ids;
  ids.reserve(wrt.size());
  for (const auto& name : wrt) {
    auto id = graph.find_variable(name);
    if (!id) throw ContractError("gradient: unknown variable '" + name + "'");
    ids.push_back(*id);
  }
  const auto grads = result.graph.gradients(output, ids);
  for (std::size_t i = 0; i < wrt.size(); ++i) result.grads.emplace(wrt[i], grads[i]);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

Evaluator::Evaluator(Graph graph, std::vector<NodeId> outputs, bool check_finite)
    : graph_(std::move(graph)), outputs_(std::move(outputs)), check_finite_(check_finite) {
  const std::size_t n = graph_.size();
  std::vector<char> needed(n, 0);
  for (NodeId id : outputs_) {
    if (id >= n) throw ContractError("requested output " + std::to_string(id) + " not in graph");
    needed[id] = 1;
  }
  for (NodeId i = n; i-- > 0;) {
    if (!needed[i]) continue;
    for (NodeId in : graph_.node(i).inputs) needed[in] = 1;
  }
  values_.resize(n);
  bound_.assign(n, 0);
  for (NodeId i = 0; i < n; ++i) {
    const Node& node = graph_.node(i);
    if (node.op == Op::kConstant) {
      values_[i] = *node.attrs.value;
    } else if (node.op == Op::kVariable) {
      values_[i] = Tensor(node.shape, 0.0);
    }
    if (needed[i] && node.op != Op::kConstant && node.op != Op::kVariable) plan_.push_back(i);
    if (needed[i] && node.op == Op::kVariable) bound_[i] = 2;  // 2 = needed but unbound
  }
}

void Evaluator::bind(std::string_view name, const Tensor& value) {
  auto id = graph_.find_variable(name);
  if (!id) throw ContractError("bind: graph has no variable '" + std::string(name) + "'");
  if (value.shape() != graph_.shape(*id)) {
    throw ShapeError(*id, "variable '" + std::string(name) + "' expects " + to_string(graph_.shape(*id)) +
                              ", bound " + to_string(value.shape()));
  }
  Tensor& slot = values_[*id];
  std::copy(value.data().begin(), value.data().end(), slot.data().begin());
  bound_[*id] = 1;
}

void Evaluator::bind(const TensorMap& values) {
  for (const auto& [name, value] : values) bind(name, value);
}

void Evaluator::bind_known(const TensorMap& values) {
  for (const auto& [name, value] : values) {
    if (graph_.find_variable(name)) bind(name, value);
  }
}

void Evaluator::run() {
  for (NodeId i = 0; i < bound_.size(); ++i) {
    if (bound_[i] == 2) {
      throw ContractError("variable '" + graph_.node(i).attrs.name + "' is not bound");
    }
  }
  for (NodeId id : plan_) {
    compute(id);
    if (check_finite_ && !values_[id].all_finite()) {
      throw DivergenceError(id, "non-finite value at node " + std::to_string(id) + " (" +
                                    std::string(op_name(graph_.node(id).op)) + ")");
    }
  }
}

const Tensor& Evaluator::value(NodeId id) const { return values_.at(id); }

void Evaluator::compute(NodeId id) {
  const Node& node = graph_.node(id);
  Tensor& out = values_[id];
  const auto& a = node.attrs;
  auto in = [&](std::size_t k) -> const Tensor& { return values_[node.inputs[k]]; };

  // Inputs and output are distinct buffers, which lets these loops vectorise.
  auto unary = [&](auto&& fn) {
    const Tensor& x = in(0);
    out.resize(node.shape);
    const double* __restrict px = x.data().data();
    double* __restrict po = out.data().data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = fn(px[i]);
  };
  auto binary = [&](auto&& fn) {
    const Tensor& x = in(0);
    const Tensor& y = in(1);
    out.resize(node.shape);
    const double* __restrict px = x.data().data();
    const double* __restrict py = y.data().data();
    double* __restrict po = out.data().data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = fn(px[i], py[i]);
  };

  switch (node.op) {
    case Op::kVariable:
    case Op::kConstant:
      break;
    case Op::kAdd: binary([](double x, double y) { return x + y; }); break;
    case Op::kSub: binary([](double x, double y) { return x - y; }); break;
    case Op::kMul: binary([](double x, double y) { return x * y; }); break;
    case Op::kDiv: binary([](double x, double y) { return x / y; }); break;
    case Op::kNeg: unary([](double x) { return -x; }); break;
    case Op::kScale: {
      const double f = a.scalar;
      unary([f](double x) { return f * x; });
      break;
    }
    case Op::kMatMul: kernels::matmul(in(0), in(1), out); break;
    case Op::kTranspose: kernels::transpose(in(0), out); break;
    case Op::kConv2d: kernels::conv2d(in(0), in(1), {a.groups, a.padding}, out); break;
    case Op::kConv2dInputGrad:
      kernels::conv2d_input_grad(in(0), in(1), {a.groups, a.padding}, a.target, out);
      break;
    case Op::kConv2dWeightGrad:
      kernels::conv2d_weight_grad(in(0), in(1), {a.groups, a.padding}, a.target, out);
      break;
    case Op::kResample: kernels::resample(in(0), node.shape[2], node.shape[3], out); break;
    case Op::kResampleAdjoint: kernels::resample_adjoint(in(0), a.target, out); break;
    case Op::kLeakyRelu: {
      const double s = a.scalar;
      unary([s](double x) { return x > 0.0 ? x : s * x; });
      break;
    }
    case Op::kLeakyMask: {
      const double s = a.scalar;
      unary([s](double x) { return x > 0.0 ? 1.0 : s; });
      break;
    }
    case Op::kSoftplus: unary([](double x) { return kernels::softplus(x); }); break;
    case Op::kSigmoid: unary([](double x) { return kernels::sigmoid(x); }); break;
    case Op::kExp: unary([](double x) { return std::exp(x); }); break;
    case Op::kLog: unary([](double x) { return std::log(x); }); break;
    case Op::kSquare: unary([](double x) { return x * x; }); break;
    case Op::kSqrt: unary([](double x) { return std::sqrt(x); }); break;
    case Op::kSum:
    case Op::kMean: {
      const Tensor& x = in(0);
      double acc = 0.0;
      for (double v : x.data()) acc += v;
      out.resize(Shape{});
      out[0] = node.op == Op::kSum ? acc : acc / static_cast<double>(x.size());
      break;
    }
    case Op::kSumTo: kernels::sum_to(in(0), node.shape, out); break;
    case Op::kBroadcastTo: kernels::broadcast_to(in(0), node.shape, out); break;
    case Op::kReshape:
    case Op::kStopGradient: {
      const Tensor& x = in(0);
      out.resize(node.shape);
      std::copy(x.data().begin(), x.data().end(), out.data().begin());
      break;
    }
    case Op::kConcat: {
      const Tensor& x = in(0);
      const Tensor& y = in(1);
      out.resize(node.shape);
      std::size_t outer = 1;
      for (std::size_t i = 0; i < a.axis; ++i) outer *= node.shape[i];
      const std::size_t inner_x = x.size() / outer;
      const std::size_t inner_y = y.size() / outer;
      auto dst = out.data().begin();
      for (std::size_t o = 0; o < outer; ++o) {
        dst = std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(o * inner_x), inner_x, dst);
        dst = std::copy_n(y.data().begin() + static_cast<std::ptrdiff_t>(o * inner_y), inner_y, dst);
      }
      break;
    }
    case Op::kSlice:
    case Op::kEmbed: {
      const Tensor& x = in(0);
      out.resize(node.shape);
      const bool is_slice = node.op == Op::kSlice;
      const Shape& big = is_slice ? x.shape() : node.shape;
      std::size_t outer = 1;
      for (std::size_t i = 0; i < a.axis; ++i) outer *= big[i];
      std::size_t inner = 1;
      for (std::size_t i = a.axis + 1; i < big.size(); ++i) inner *= big[i];
      const std::size_t len = a.end - a.begin;
      if (!is_slice) std::fill(out.data().begin(), out.data().end(), 0.0);
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t big_off = (o * big[a.axis] + a.begin) * inner;
        const std::size_t small_off = o * len * inner;
        for (std::size_t k = 0; k < len * inner; ++k) {
          if (is_slice) {
            out[small_off + k] = x[big_off + k];
          } else {
            out[big_off + k] = x[small_off + k];
          }
        }
      }
      break;
    }
  }
}

std::vector<Tensor> evaluate(const Graph& graph, const TensorMap& bindings, std::span<const NodeId> outputs) {
  Evaluator ev(graph, std::vector<NodeId>(outputs.begin(), outputs.end()));
  ev.bind(bindings);
  ev.run();
  std::vector<Tensor> result;
  result.reserve(outputs.size());
  for (NodeId id : outputs) result.push_back(ev.value(id));
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

GradCheckReport grad_check(const Graph& graph, NodeId output, const TensorMap& point, double eps,
                           const std::vector<std::string>& wrt) {
  std::vector<std::string> names = wrt;
  if (names.empty()) {
    for (const auto& [name, value] : point) {
      if (graph.find_variable(name)) names.push_back(name);
    }
  }
  GradientGraph gg = gradient(graph, output, names);
  std::vector<NodeId> grad_ids;
  for (const auto& name : names) grad_ids.push_back(gg.grads.at(name));
  const auto analytic = evaluate(gg.graph, point, grad_ids);

  Evaluator ev(graph, {output});
  ev.bind(point);
  auto value_at = [&](const std::string& name, const Tensor& t) {
    ev.bind(name, t);
    ev.run();
    return ev.value(output).item();
  };

  GradCheckReport report;
  for (std::size_t v = 0; v < names.size(); ++v) {
    Tensor probe = point.at(names[v]);
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double x0 = probe[i];
      probe[i] = x0 + eps;
      const double up = value_at(names[v], probe);
      probe[i] = x0 - eps;
      const double down = value_at(names[v], probe);
      probe[i] = x0;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = analytic[v][i];
      const double err = std::abs(exact - numeric) / std::max(1.0, std::abs(exact));
      if (err > report.max_error || report.worst_variable.empty()) {
        report.max_error = std::max(report.max_error, err);
        report.worst_variable = names[v];
        report.worst_index = i;
      }
    }
    ev.bind(names[v], probe);
  }
  return report;
}

}  // namespace gandyn
