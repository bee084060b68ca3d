#include "hamflow/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "hamflow/errors.hpp"

namespace hamflow::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Constant: return "constant";
    case Op::Identity: return "identity";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Relu: return "relu";
    case Op::Step: return "step";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::Col: return "col";
    case Op::ScatterCol: return "scatter_col";
  }
  return "?";
}

Index Expr::rows() const { return node().rows; }
Index Expr::cols() const { return node().cols; }
const Node& Expr::node() const {
  if (!valid()) throw ContractError("use of an empty expression handle");
  return graph_->node(id_);
}

// ---------------------------------------------------------------------------
// Graph

Expr Graph::push(const Node& n) {
  nodes_.push_back(n);
  return Expr(this, static_cast<NodeId>(nodes_.size() - 1));
}

Expr Graph::input(std::size_t slot, Index rows, Index cols) {
  if (slot < input_nodes_.size() && input_nodes_[slot] >= 0) {
    const Node& n = node(input_nodes_[slot]);
    if (n.rows != rows || n.cols != cols) throw ContractError("input slot re-declared with another shape");
    return Expr(this, input_nodes_[slot]);
  }
  if (input_nodes_.size() <= slot) input_nodes_.resize(slot + 1, -1);
  Node n;
  n.op = Op::Input;
  n.rows = rows;
  n.cols = cols;
  n.index = static_cast<std::int32_t>(slot);
  Expr e = push(n);
  input_nodes_[slot] = e.id();
  return e;
}

Expr Graph::parameter(const ParamStore& store, std::size_t entry) {
  const auto& en = store.entry(entry);
  if (entry < param_nodes_.size() && param_nodes_[entry] >= 0) return Expr(this, param_nodes_[entry]);
  if (param_nodes_.size() <= entry) param_nodes_.resize(entry + 1, -1);
  Node n;
  n.op = Op::Param;
  n.rows = en.rows;
  n.cols = en.cols;
  n.index = static_cast<std::int32_t>(entry);
  Expr e = push(n);
  param_nodes_[entry] = e.id();
  return e;
}

Expr Graph::constant(Matrix value) {
  Node n;
  n.op = Op::Constant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.index = static_cast<std::int32_t>(constants_.size());
  constants_.push_back(std::move(value));
  return push(n);
}

Expr Graph::constant(double value, Index rows, Index cols) {
  return constant(Matrix::Constant(rows, cols, value));
}

// ---------------------------------------------------------------------------
// Construction helpers

namespace {

Graph& same_graph(const Expr& a, const Expr& b) {
  if (!a.valid() || !b.valid()) throw ContractError("use of an empty expression handle");
  if (&a.graph() != &b.graph()) throw ContractError("expressions belong to different graphs");
  return a.graph();
}

std::string shape_str(const Expr& e) {
  std::ostringstream os;
  os << e.rows() << "x" << e.cols();
  return os.str();
}

Expr unary(Op op, const Expr& a, double scalar = 0.0) {
  Node n;
  n.op = op;
  n.arity = 1;
  n.args[0] = a.id();
  n.rows = a.rows();
  n.cols = a.cols();
  n.scalar = scalar;
  return a.graph().push(n);
}

Expr binary(Op op, const Expr& a, const Expr& b) {
  Graph& g = same_graph(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  Node n;
  n.op = op;
  n.arity = 2;
  n.args = {a.id(), b.id(), -1};
  n.rows = a.rows();
  n.cols = a.cols();
  return g.push(n);
}

}  // namespace

Expr operator+(const Expr& a, const Expr& b) { return binary(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return binary(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return binary(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return binary(Op::Div, a, b); }
Expr operator-(const Expr& a) { return unary(Op::Neg, a); }
Expr operator*(double c, const Expr& a) { return unary(Op::Scale, a, c); }
Expr operator*(const Expr& a, double c) { return unary(Op::Scale, a, c); }
Expr operator+(const Expr& a, double c) { return unary(Op::AddScalar, a, c); }
Expr operator+(double c, const Expr& a) { return unary(Op::AddScalar, a, c); }
Expr operator-(const Expr& a, double c) { return unary(Op::AddScalar, a, -c); }
Expr operator-(double c, const Expr& a) { return unary(Op::AddScalar, unary(Op::Neg, a), c); }

Expr identity(const Expr& a) { return unary(Op::Identity, a); }
Expr exp(const Expr& a) { return unary(Op::Exp, a); }
Expr log(const Expr& a) { return unary(Op::Log, a); }
Expr tanh(const Expr& a) { return unary(Op::Tanh, a); }
Expr sigmoid(const Expr& a) { return unary(Op::Sigmoid, a); }
Expr softplus(const Expr& a) { return unary(Op::Softplus, a); }
Expr relu(const Expr& a) { return unary(Op::Relu, a); }
Expr step(const Expr& a) { return unary(Op::Step, a); }
Expr square(const Expr& a) { return unary(Op::Square, a); }
Expr sqrt(const Expr& a) { return unary(Op::Sqrt, a); }

Expr matmul(const Expr& a, const Expr& b, bool trans_a, bool trans_b) {
  Graph& g = same_graph(a, b);
  const Index ar = trans_a ? a.cols() : a.rows();
  const Index ac = trans_a ? a.rows() : a.cols();
  const Index br = trans_b ? b.cols() : b.rows();
  const Index bc = trans_b ? b.rows() : b.cols();
  if (ac != br) throw ContractError("matmul: inner dimension mismatch " + shape_str(a) + " * " + shape_str(b));
  Node n;
  n.op = Op::MatMul;
  n.arity = 2;
  n.args = {a.id(), b.id(), -1};
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.rows = ar;
  n.cols = bc;
  return g.push(n);
}

Expr affine(const Expr& x, const Expr& w, const Expr& b) {
  Graph& g = same_graph(x, w);
  same_graph(x, b);
  if (x.cols() != w.cols())
    throw ContractError("affine: input width " + std::to_string(x.cols()) + " does not match weight " + shape_str(w));
  if (b.rows() != 1 || b.cols() != w.rows()) throw ContractError("affine: bias shape " + shape_str(b));
  Node n;
  n.op = Op::Affine;
  n.arity = 3;
  n.args = {x.id(), w.id(), b.id()};
  n.rows = x.rows();
  n.cols = w.rows();
  return g.push(n);
}

Expr sum_rows(const Expr& a) {
  Node n;
  n.op = Op::SumRows;
  n.arity = 1;
  n.args[0] = a.id();
  n.rows = 1;
  n.cols = a.cols();
  return a.graph().push(n);
}

Expr sum_cols(const Expr& a) {
  Node n;
  n.op = Op::SumCols;
  n.arity = 1;
  n.args[0] = a.id();
  n.rows = a.rows();
  n.cols = 1;
  return a.graph().push(n);
}

Expr sum(const Expr& a) {
  Expr r = a.rows() == 1 ? a : sum_rows(a);
  return r.cols() == 1 ? r : sum_cols(r);
}

Expr broadcast_rows(const Expr& a, Index rows) {
  if (a.rows() != 1) throw ContractError("broadcast_rows: expects a row vector, got " + shape_str(a));
  Node n;
  n.op = Op::BroadcastRows;
  n.arity = 1;
  n.args[0] = a.id();
  n.rows = rows;
  n.cols = a.cols();
  return a.graph().push(n);
}

Expr broadcast_cols(const Expr& a, Index cols) {
  if (a.cols() != 1) throw ContractError("broadcast_cols: expects a column vector, got " + shape_str(a));
  Node n;
  n.op = Op::BroadcastCols;
  n.arity = 1;
  n.args[0] = a.id();
  n.rows = a.rows();
  n.cols = cols;
  return a.graph().push(n);
}

Expr col(const Expr& a, Index j) {
  if (j < 0 || j >= a.cols()) throw ContractError("col: index out of range for " + shape_str(a));
  Node n;
  n.op = Op::Col;
  n.arity = 1;
  n.args[0] = a.id();
  n.rows = a.rows();
  n.cols = 1;
  n.index = static_cast<std::int32_t>(j);
  return a.graph().push(n);
}

Expr scatter_col(const Expr& a, Index j, Index cols) {
  if (a.cols() != 1 || j < 0 || j >= cols) throw ContractError("scatter_col: bad arguments");
  Node n;
  n.op = Op::ScatterCol;
  n.arity = 1;
  n.args[0] = a.id();
  n.rows = a.rows();
  n.cols = cols;
  n.index = static_cast<std::int32_t>(j);
  return a.graph().push(n);
}

// ---------------------------------------------------------------------------
// Symbolic reverse mode

namespace {

// Adjoint contributions of node `self` (with adjoint `g_out`) to each of
// its arguments. Entries left invalid contribute nothing.
std::array<Expr, 3> backward(Graph& g, NodeId self_id, const Expr& gy) {
  const Node self = g.node(self_id);  // copy: pushing may reallocate
  const Expr y(&g, self_id);
  const Expr a(&g, self.args[0]);
  const Expr b(&g, self.args[1]);
  std::array<Expr, 3> out;
  switch (self.op) {
    case Op::Input:
    case Op::Param:
    case Op::Constant:
    case Op::Step:
      break;
    case Op::Identity:
    case Op::AddScalar:
      out[0] = gy;
      break;
    case Op::Add:
      out[0] = gy;
      out[1] = gy;
      break;
    case Op::Sub:
      out[0] = gy;
      out[1] = -gy;
      break;
    case Op::Mul:
      out[0] = gy * b;
      out[1] = gy * a;
      break;
    case Op::Div:
      out[0] = gy / b;
      out[1] = -(gy * y / b);
      break;
    case Op::Neg:
      out[0] = -gy;
      break;
    case Op::Scale:
      out[0] = self.scalar * gy;
      break;
    case Op::Exp:
      out[0] = gy * y;
      break;
    case Op::Log:
      out[0] = gy / a;
      break;
    case Op::Tanh:
      out[0] = gy * (1.0 - square(y));
      break;
    case Op::Sigmoid:
      out[0] = gy * (y * (1.0 - y));
      break;
    case Op::Softplus:
      out[0] = gy * sigmoid(a);
      break;
    case Op::Relu:
      out[0] = gy * step(a);
      break;
    case Op::Square:
      out[0] = 2.0 * (gy * a);
      break;
    case Op::Sqrt:
      out[0] = gy / (2.0 * y);
      break;
    case Op::MatMul: {
      // y = A' B'  =>  dA' = G B'^T, dB' = A'^T G
      const bool ta = self.trans_a;
      const bool tb = self.trans_b;
      out[0] = ta ? matmul(b, gy, tb, true) : matmul(gy, b, false, !tb);
      out[1] = tb ? matmul(gy, a, true, ta) : matmul(a, gy, !ta, false);
      break;
    }
    case Op::Affine: {
      const Expr x = a;
      const Expr w = b;
      out[0] = matmul(gy, w);
      out[1] = matmul(gy, x, true, false);
      out[2] = sum_rows(gy);
      break;
    }
    case Op::SumRows:
      out[0] = broadcast_rows(gy, a.rows());
      break;
    case Op::SumCols:
      out[0] = broadcast_cols(gy, a.cols());
      break;
    case Op::BroadcastRows:
      out[0] = sum_rows(gy);
      break;
    case Op::BroadcastCols:
      out[0] = sum_cols(gy);
      break;
    case Op::Col:
      out[0] = scatter_col(gy, self.index, a.cols());
      break;
    case Op::ScatterCol:
      out[0] = col(gy, self.index);
      break;
  }
  return out;
}

}  // namespace

std::vector<Expr> gradient(const Expr& y, std::span<const Expr> wrt) {
  if (!y.valid()) throw ContractError("gradient of an empty expression");
  if (y.rows() != 1 || y.cols() != 1)
    throw ContractError("gradient: expression must be scalar (1x1), got " + shape_str(y));
  Graph& g = y.graph();
  const NodeId top = y.id();
  const auto n = static_cast<std::size_t>(top) + 1;

  std::vector<char> dep(n, 0);
  for (const Expr& w : wrt) {
    same_graph(y, w);
    if (w.id() <= top) dep[static_cast<std::size_t>(w.id())] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (dep[i]) continue;
    const Node& nd = g.node(static_cast<NodeId>(i));
    for (int k = 0; k < nd.arity; ++k)
      if (dep[static_cast<std::size_t>(nd.args[k])]) {
        dep[i] = 1;
        break;
      }
  }

  std::vector<Expr> adj(n);
  if (dep[n - 1]) adj[n - 1] = g.constant(1.0);
  for (std::size_t i = n; i-- > 0;) {
    if (!adj[i].valid() || !dep[i]) continue;
    const Node nd = g.node(static_cast<NodeId>(i));
    if (nd.arity == 0) continue;
    bool any = false;
    for (int k = 0; k < nd.arity; ++k) any = any || dep[static_cast<std::size_t>(nd.args[k])];
    if (!any) continue;
    auto contrib = backward(g, static_cast<NodeId>(i), adj[i]);
    for (int k = 0; k < nd.arity; ++k) {
      const auto a = static_cast<std::size_t>(nd.args[k]);
      if (!dep[a] || !contrib[static_cast<std::size_t>(k)].valid()) continue;
      adj[a] = adj[a].valid() ? adj[a] + contrib[static_cast<std::size_t>(k)] : contrib[static_cast<std::size_t>(k)];
    }
  }

  std::vector<Expr> out;
  out.reserve(wrt.size());
  for (const Expr& w : wrt) {
    if (w.id() <= top && adj[static_cast<std::size_t>(w.id())].valid())
      out.push_back(adj[static_cast<std::size_t>(w.id())]);
    else
      out.push_back(g.constant(0.0, w.rows(), w.cols()));
  }
  return out;
}

Expr gradient(const Expr& y, const Expr& wrt) {
  const Expr w[1] = {wrt};
  return gradient(y, std::span<const Expr>(w, 1)).front();
}

std::vector<Expr> grad_inputs(const Expr& y) {
  Graph& g = y.graph();
  std::vector<Expr> wrt;
  for (std::size_t s = 0; s < g.input_slots(); ++s) {
    const NodeId id = g.input_node(s);
    if (id >= 0) wrt.emplace_back(&g, id);
  }
  return gradient(y, wrt);
}

// ---------------------------------------------------------------------------
// Evaluation

Evaluator::Evaluator(const Graph& g, Bindings b) : graph_(g), bindings_(std::move(b)) {}

const Matrix& Evaluator::value(const Expr& e) {
  if (&e.graph() != &graph_) throw ContractError("evaluator: expression from another graph");
  ensure(e.id());
  return values_[static_cast<std::size_t>(e.id())];
}

double Evaluator::scalar(const Expr& e) {
  const Matrix& m = value(e);
  if (m.rows() != 1 || m.cols() != 1) throw ContractError("evaluator: expression is not scalar");
  return m(0, 0);
}

void Evaluator::ensure(NodeId id) {
  if (values_.size() < graph_.size()) {
    values_.resize(graph_.size());
    done_.resize(graph_.size(), 0);
  }
  const auto top = static_cast<std::size_t>(id);
  if (done_[top]) return;
  std::vector<char> need(top + 1, 0);
  need[top] = 1;
  for (std::size_t i = top + 1; i-- > 0;) {
    if (!need[i] || done_[i]) continue;
    const Node& nd = graph_.node(static_cast<NodeId>(i));
    for (int k = 0; k < nd.arity; ++k) need[static_cast<std::size_t>(nd.args[k])] = 1;
  }
  for (std::size_t i = 0; i <= top; ++i)
    if (need[i] && !done_[i]) compute(static_cast<NodeId>(i));
  if (!values_[top].allFinite()) {
    // Report the earliest node that went non-finite.
    for (std::size_t i = 0; i <= top; ++i)
      if (need[i] && !values_[i].allFinite()) throw_non_finite(static_cast<NodeId>(i));
  }
}

void Evaluator::throw_non_finite(NodeId id) const {
  const Node& nd = graph_.node(id);
  throw NumericError("non-finite value at node #" + std::to_string(id) + " (" + std::string(op_name(nd.op)) + ", " +
                     std::to_string(nd.rows) + "x" + std::to_string(nd.cols) + ")");
}

namespace {

Eigen::ArrayXXd softplus_values(const Eigen::ArrayXXd& x) {
  // log1p(t) = log(u) - ((u - 1) - t) / u with u = 1 + t; exact to rounding
  // and free of selects, so it vectorizes.
  const Eigen::ArrayXXd t = (-x.abs()).exp();
  const Eigen::ArrayXXd u = 1.0 + t;
  return x.max(0.0) + u.log() - ((u - 1.0) - t) / u;
}

Eigen::ArrayXXd sigmoid_values(const Eigen::ArrayXXd& x) {
  // e^{min(x,0)} / (1 + e^{-|x|}): no overflow on either side.
  return x.min(0.0).exp() / (1.0 + (-x.abs()).exp());
}

}  // namespace

void Evaluator::compute(NodeId id) {
  const auto i = static_cast<std::size_t>(id);
  const Node& nd = graph_.node(id);
  auto arg = [&](int k) -> const Matrix& { return values_[static_cast<std::size_t>(nd.args[k])]; };
  Matrix& out = values_[i];
  switch (nd.op) {
    case Op::Input: {
      const auto slot = static_cast<std::size_t>(nd.index);
      if (slot >= bindings_.inputs.size() || bindings_.inputs[slot].size() == 0)
        throw ConfigError("unbound input slot " + std::to_string(slot));
      const Matrix& v = bindings_.inputs[slot];
      if (v.rows() != nd.rows || v.cols() != nd.cols)
        throw ConfigError("input slot " + std::to_string(slot) + " bound with wrong shape");
      out = v;
      break;
    }
    case Op::Param: {
      if (bindings_.params == nullptr) throw ConfigError("parameters referenced but no ParamStore bound");
      const auto entry = static_cast<std::size_t>(nd.index);
      if (entry >= bindings_.params->entry_count())
        throw ConfigError("parameter entry " + std::to_string(entry) + " not in bound ParamStore");
      out = bindings_.params->matrix(entry);
      if (out.rows() != nd.rows || out.cols() != nd.cols)
        throw ConfigError("parameter '" + bindings_.params->entry(entry).name + "' has unexpected shape");
      break;
    }
    case Op::Constant: out = graph_.constant_value(nd.index); break;
    case Op::Identity: out = arg(0); break;
    case Op::Add: out = arg(0) + arg(1); break;
    case Op::Sub: out = arg(0) - arg(1); break;
    case Op::Mul: out = arg(0).cwiseProduct(arg(1)); break;
    case Op::Div: out = arg(0).cwiseQuotient(arg(1)); break;
    case Op::Neg: out = -arg(0); break;
    case Op::Scale: out = nd.scalar * arg(0); break;
    case Op::AddScalar: out = (arg(0).array() + nd.scalar).matrix(); break;
    case Op::Exp: out = arg(0).array().exp().matrix(); break;
    case Op::Log: out = arg(0).array().log().matrix(); break;
    case Op::Tanh: out = arg(0).array().tanh().matrix(); break;
    case Op::Sigmoid: out = sigmoid_values(arg(0).array()).matrix(); break;
    case Op::Softplus: out = softplus_values(arg(0).array()).matrix(); break;
    case Op::Relu: out = arg(0).cwiseMax(0.0); break;
    case Op::Step: out = (arg(0).array() > 0.0).cast<double>().matrix(); break;
    case Op::Square: out = arg(0).array().square().matrix(); break;
    case Op::Sqrt: out = arg(0).array().sqrt().matrix(); break;
    case Op::MatMul: {
      const Matrix& a = arg(0);
      const Matrix& b = arg(1);
      out.resize(nd.rows, nd.cols);
      if (!nd.trans_a && !nd.trans_b) out.noalias() = a * b;
      else if (nd.trans_a && !nd.trans_b) out.noalias() = a.transpose() * b;
      else if (!nd.trans_a && nd.trans_b) out.noalias() = a * b.transpose();
      else out.noalias() = a.transpose() * b.transpose();
      break;
    }
    case Op::Affine: {
      out.resize(nd.rows, nd.cols);
      out.noalias() = arg(0) * arg(1).transpose();
      out.rowwise() += arg(2).row(0);
      break;
    }
    case Op::SumRows: out = arg(0).colwise().sum(); break;
    case Op::SumCols: out = arg(0).rowwise().sum(); break;
    case Op::BroadcastRows: out = arg(0).replicate(nd.rows, 1); break;
    case Op::BroadcastCols: out = arg(0).replicate(1, nd.cols); break;
    case Op::Col: out = arg(0).col(nd.index); break;
    case Op::ScatterCol:
      out = Matrix::Zero(nd.rows, nd.cols);
      out.col(nd.index) = arg(0);
      break;
  }
  done_[i] = 1;
  switch (nd.op) {
    case Op::Input:
    case Op::Param:
    case Op::Constant:
    case Op::Exp:
    case Op::Log:
    case Op::Div:
    case Op::Sqrt:
      if (!out.allFinite()) throw_non_finite(id);
      break;
    default:
      break;
  }
}

double evaluate(const Expr& e, const std::vector<Matrix>& inputs, const ParamStore* params) {
  Evaluator ev(e.graph(), Bindings{inputs, params});
  return ev.scalar(e);
}

Eigen::VectorXd grad_params(const Expr& y, Evaluator& ev) {
  const ParamStore* store = ev.bindings().params;
  if (store == nullptr) throw ConfigError("grad_params: no ParamStore bound");
  Graph& g = y.graph();
  std::vector<Expr> wrt;
  std::vector<std::size_t> entries;
  for (NodeId id = 0; id <= y.id(); ++id) {
    const Node& nd = g.node(id);
    if (nd.op != Op::Param) continue;
    wrt.emplace_back(&g, id);
    entries.push_back(static_cast<std::size_t>(nd.index));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Index>(store->size()));
  if (wrt.empty()) return out;
  const auto grads = gradient(y, wrt);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const auto& en = store->entry(entries[k]);
    const Matrix& gv = ev.value(grads[k]);
    Eigen::Map<Matrix>(out.data() + en.offset, en.rows, en.cols) = gv;
  }
  return out;
}

}  // namespace hamflow::ad
