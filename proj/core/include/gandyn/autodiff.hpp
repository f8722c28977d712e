#pragma once

// Reverse-mode differentiation over a recorded graph of tensor primitives.
//
// A Graph is a symbolic record: nodes carry an op, input ids, attributes and a
// statically inferred shape, but no values. Values come from an Evaluator that
// binds the named variables. Differentiating a graph appends new nodes built
// from the same primitive set, so gradients can themselves be differentiated
// (double backprop for input-gradient penalties).

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gandyn/errors.hpp"
#include "gandyn/tensor.hpp"

namespace gandyn {

using NodeId = std::size_t;
using TensorMap = std::map<std::string, Tensor, std::less<>>;

enum class Op : std::uint8_t {
  kVariable,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kMatMul,
  kTranspose,
  kConv2d,
  kConv2dInputGrad,
  kConv2dWeightGrad,
  kResample,
  kResampleAdjoint,
  kLeakyRelu,
  kLeakyMask,  // d leaky_relu / dx; treated as locally constant
  kSoftplus,
  kSigmoid,
  kExp,
  kLog,
  kSquare,
  kSqrt,
  kSum,
  kMean,
  kSumTo,
  kBroadcastTo,
  kReshape,
  kConcat,
  kSlice,
  kEmbed,  // zero-pads along one axis; adjoint of kSlice
  kStopGradient,  // identity whose derivative is zero
};

std::string_view op_name(Op op);

struct NodeAttrs {
  double scalar = 0.0;  // leaky slope or scale factor
  std::size_t groups = 1;
  std::size_t padding = 0;
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Shape target;  // reshape / broadcast / sum_to / adjoint output shapes
  std::string name;
  std::shared_ptr<const Tensor> value;
};

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  Shape shape;
  NodeAttrs attrs;
};

class Graph;

/// Lightweight handle to a node of a live Graph. Valid while the graph is alive
/// and not moved.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Shape& shape() const;
};

class Graph {
 public:
  /// Declares (or re-uses) a named leaf. Re-declaring with another shape throws.
  NodeId variable(std::string name, Shape shape);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId scale(NodeId a, double factor);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId conv2d(NodeId x, NodeId weight, std::size_t groups, std::size_t padding);
  NodeId conv2d_input_grad(NodeId grad_out, NodeId weight, std::size_t groups, std::size_t padding,
                           Shape input_shape);
  NodeId conv2d_weight_grad(NodeId x, NodeId grad_out, std::size_t groups, std::size_t padding,
                            Shape weight_shape);
  NodeId resample(NodeId x, std::size_t out_h, std::size_t out_w);
  NodeId resample_adjoint(NodeId grad_out, Shape input_shape);
  NodeId leaky_relu(NodeId x, double slope);
  NodeId leaky_mask(NodeId x, double slope);
  NodeId softplus(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId square(NodeId x);
  NodeId sqrt(NodeId x);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId sum_to(NodeId x, Shape shape);
  NodeId broadcast_to(NodeId x, Shape shape);
  NodeId reshape(NodeId x, Shape shape);
  NodeId concat(NodeId a, NodeId b, std::size_t axis);
  NodeId slice(NodeId x, std::size_t axis, std::size_t begin, std::size_t end);
  NodeId embed(NodeId x, std::size_t axis, std::size_t begin, std::size_t extent);
  NodeId stop_gradient(NodeId x);

  /// Appends nodes computing d(output)/d(node) for every node in `wrt` and
  /// returns their ids. `output` must be rank 0. Nodes in `wrt` that the output
  /// does not depend on get a zero constant.
  std::vector<NodeId> gradients(NodeId output, std::span<const NodeId> wrt);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
  std::optional<NodeId> find_variable(std::string_view name) const;
  const std::map<std::string, NodeId, std::less<>>& variables() const noexcept { return variables_; }

  Var var(NodeId id) { return Var{this, id}; }

 private:
  NodeId push(Op op, std::vector<NodeId> inputs, Shape shape, NodeAttrs attrs = {});
  void check_id(NodeId id) const;
  const Shape& same_shape(NodeId a, NodeId b, std::string_view what) const;
  void backprop(NodeId id, NodeId grad, const std::vector<char>& needs,
                std::vector<std::optional<NodeId>>& adjoint);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> variables_;
};

// Handle-level builders. Binary arithmetic broadcasts the smaller operand when
// its shape is right-aligned-compatible with the other.
Var variable(Graph& g, std::string name, Shape shape);
Var constant(Graph& g, Tensor value);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(double factor, Var a);
Var operator+(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var conv2d(Var x, Var weight, std::size_t groups = 1, std::size_t padding = 0);
Var leaky_relu(Var x, double slope = 0.2);
Var softplus(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
Var sqrt(Var x);
Var sum(Var x);
Var mean(Var x);
Var sum_to(Var x, Shape shape);
Var broadcast_to(Var x, Shape shape);
Var reshape(Var x, Shape shape);
Var concat(Var a, Var b, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
/// Same value; gradients do not flow into `x`.
Var stop_gradient(Var x);

enum class Resampling { kUp2, kDown2 };
/// Bilinear x2 / x1/2 resampling of [n, c, h, w]; downsampling needs even extents.
Var bilinear_resample(Var x, Resampling factor);

/// In-place gradient on the handle's graph.
std::vector<Var> grad(Var output, std::span<const Var> wrt);
Var grad(Var output, Var wrt);

struct GradientGraph {
  Graph graph;
  std::map<std::string, NodeId, std::less<>> grads;
};

/// Returns a new graph extending `graph` with d(output)/d(variable) for each
/// named variable. The original graph is left untouched.
GradientGraph gradient(const Graph& graph, NodeId output, const std::vector<std::string>& wrt);

/// Evaluates the sub-graph needed for a fixed set of outputs. Buffers are kept
/// between runs so repeated evaluation does not reallocate.
class Evaluator {
 public:
  Evaluator(Graph graph, std::vector<NodeId> outputs, bool check_finite = true);

  /// Copies a value into the named leaf. Unknown names are a contract error.
  void bind(std::string_view name, const Tensor& value);
  void bind(const TensorMap& values);
  /// Names bound in `values` that the graph does not declare are skipped.
  void bind_known(const TensorMap& values);

  void run();

  const Tensor& value(NodeId id) const;
  const Graph& graph() const noexcept { return graph_; }
  std::span<const NodeId> outputs() const noexcept { return outputs_; }

 private:
  void compute(NodeId id);

  Graph graph_;
  std::vector<NodeId> outputs_;
  std::vector<NodeId> plan_;
  std::vector<Tensor> values_;
  std::vector<char> bound_;
  bool check_finite_;
};

/// One-shot evaluation returning the requested node values in order.
std::vector<Tensor> evaluate(const Graph& graph, const TensorMap& bindings, std::span<const NodeId> outputs);

struct GradCheckReport {
  double max_error = 0.0;
  std::string worst_variable;
  std::size_t worst_index = 0;
};

/// Compares the analytic gradient of scalar node `output` against central
/// differences with step `eps`, for every variable bound in `point` (or only
/// `wrt` when non-empty). Error per component is
/// |analytic - numeric| / max(1, |analytic|).
GradCheckReport grad_check(const Graph& graph, NodeId output, const TensorMap& point, double eps,
                           const std::vector<std::string>& wrt = {});

}  // namespace gandyn
