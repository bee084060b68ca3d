#pragma once

// Symbolic reverse-mode differentiation over matrix-valued expression graphs.
//
// Every node holds a rows x cols matrix of doubles; batches live along the
// rows. Derivative rules emit new nodes into the same graph instead of
// numbers, so a gradient is itself an expression that can be differentiated
// again. That is what lets a loss containing input-gradients of a network
// (a Poisson bracket, a leapfrog step) be differentiated with respect to the
// network parameters.

#include <array>
#include <deque>
#include <cstdint>
#include <string>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hamflow/param_store.hpp"

namespace hamflow::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  Input,
  Param,
  Constant,
  Identity,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,      // x * scalar
  AddScalar,  // x + scalar
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Softplus,
  Relu,
  Step,  // Heaviside, derivative of relu; has zero derivative itself
  Square,
  Sqrt,
  MatMul,  // op(a) * op(b), op = transpose when flagged
  Affine,  // x * W^T + broadcast(b), the fused dense layer
  SumRows,        // r x c -> 1 x c
  SumCols,        // r x c -> r x 1
  BroadcastRows,  // 1 x c -> r x c
  BroadcastCols,  // r x 1 -> r x c
  Col,            // column j as r x 1
  ScatterCol,     // r x 1 placed into column j of an r x c zero matrix
};

std::string_view op_name(Op op);

struct Node {
  Op op = Op::Constant;
  std::uint8_t arity = 0;
  bool trans_a = false;
  bool trans_b = false;
  std::array<NodeId, 3> args{-1, -1, -1};
  Index rows = 0;
  Index cols = 0;
  double scalar = 0.0;
  std::int32_t index = -1;  // input slot, param entry, constant slot, or column
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; the graph must outlive it.
class Expr {
 public:
  Expr() = default;
  Expr(Graph* g, NodeId id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  NodeId id() const { return id_; }
  bool valid() const { return graph_ != nullptr && id_ >= 0; }
  Index rows() const;
  Index cols() const;
  const Node& node() const;

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = -1;
};

/// Append-only node arena. Node ids are a topological order.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// One node per slot; asking again for a slot returns the same node.
  Expr input(std::size_t slot, Index rows, Index cols);
  Expr parameter(const ParamStore& store, std::size_t entry);
  Expr parameter(const ParamStore& store, const std::string& name) {
    return parameter(store, store.find(name));
  }
  Expr constant(Matrix value);
  Expr constant(double value, Index rows = 1, Index cols = 1);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Matrix& constant_value(std::int32_t slot) const {
    return constants_[static_cast<std::size_t>(slot)];
  }
  std::size_t input_slots() const { return input_nodes_.size(); }
  /// Node for an input slot, or -1.
  NodeId input_node(std::size_t slot) const {
    return slot < input_nodes_.size() ? input_nodes_[slot] : -1;
  }

  Expr push(const Node& n);

 private:
  std::vector<Node> nodes_;
  std::vector<Matrix> constants_;
  std::vector<NodeId> input_nodes_;
  std::vector<NodeId> param_nodes_;  // indexed by store entry
};

// Construction. Binary elementwise ops require equal shapes; use the
// broadcast helpers explicitly.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator*(double c, const Expr& a);
Expr operator*(const Expr& a, double c);
Expr operator+(const Expr& a, double c);
Expr operator+(double c, const Expr& a);
Expr operator-(const Expr& a, double c);
Expr operator-(double c, const Expr& a);

Expr identity(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr tanh(const Expr& a);
Expr sigmoid(const Expr& a);
Expr softplus(const Expr& a);
Expr relu(const Expr& a);
Expr step(const Expr& a);
Expr square(const Expr& a);
Expr sqrt(const Expr& a);
Expr matmul(const Expr& a, const Expr& b, bool trans_a = false, bool trans_b = false);
/// x (n x in), w (out x in), b (1 x out) -> n x out.
Expr affine(const Expr& x, const Expr& w, const Expr& b);
Expr sum_rows(const Expr& a);
Expr sum_cols(const Expr& a);
/// Sum of all entries, 1 x 1.
Expr sum(const Expr& a);
Expr broadcast_rows(const Expr& a, Index rows);
Expr broadcast_cols(const Expr& a, Index cols);
Expr col(const Expr& a, Index j);
Expr scatter_col(const Expr& a, Index j, Index cols);

/// Gradient of a 1 x 1 expression with respect to each node in `wrt`, as
/// new expressions in the same graph. Nodes `y` does not depend on get a
/// zero constant of matching shape.
std::vector<Expr> gradient(const Expr& y, std::span<const Expr> wrt);
Expr gradient(const Expr& y, const Expr& wrt);

/// Gradient with respect to every bound input slot present in the graph,
/// ordered by slot.
std::vector<Expr> grad_inputs(const Expr& y);

/// Values bound to a graph's input slots and parameters.
struct Bindings {
  std::vector<Matrix> inputs;
  const ParamStore* params = nullptr;
};

/// Lazily evaluates nodes of a graph under fixed bindings, memoizing values.
/// The graph may keep growing; new nodes are evaluated on demand.
class Evaluator {
 public:
  Evaluator(const Graph& g, Bindings b);

  const Matrix& value(const Expr& e);
  double scalar(const Expr& e);
  const Bindings& bindings() const { return bindings_; }

 private:
  void ensure(NodeId id);
  [[noreturn]] void throw_non_finite(NodeId id) const;
  void compute(NodeId id);

  const Graph& graph_;
  Bindings bindings_;
  std::deque<Matrix> values_;  // deque: growing keeps references valid
  std::vector<char> done_;
};

/// Value of a scalar expression.
double evaluate(const Expr& e, const std::vector<Matrix>& inputs, const ParamStore* params = nullptr);

/// Flat gradient of a 1 x 1 expression with respect to every parameter of
/// `params` (layout of `params.values()`); unused parameters get zeros.
Eigen::VectorXd grad_params(const Expr& y, Evaluator& ev);

}  // namespace hamflow::ad
