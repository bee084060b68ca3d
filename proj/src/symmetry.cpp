#include "hamflow/symmetry.hpp"

#include <cmath>

#include "hamflow/errors.hpp"

namespace hamflow {

std::vector<ScalarField> GeneratorSet::fields() const {
  std::vector<ScalarField> out;
  for (const auto& g : generators) out.push_back(g.field);
  return out;
}

void GeneratorSet::validate() const {
  for (const auto& g : generators) {
    if (!(g.kappa >= 0.0)) throw ContractError("generator '" + g.field.name + "': kappa must be >= 0");
    if (!(g.lambda >= 0.0)) throw ContractError("generator '" + g.field.name + "': lambda must be >= 0");
  }
}

ScalarField angular_momentum(int i, int j) {
  if (i < 0 || j < 0 || i == j) throw ContractError("angular_momentum: need two distinct coordinate indices");
  return {"L" + std::to_string(i + 1) + std::to_string(j + 1), Dependence::both,
          [i, j](const ad::Expr& q, const ad::Expr& p) {
            return ad::col(q, i) * ad::col(p, j) - ad::col(q, j) * ad::col(p, i);
          }};
}

ScalarField quadratic_generator(const Matrix& a) {
  if (a.rows() != a.cols()) throw ContractError("quadratic_generator: matrix must be square");
  return {"qAp", Dependence::both, [a](const ad::Expr& q, const ad::Expr& p) {
            if (q.cols() != a.rows()) throw ContractError("quadratic_generator: dimension mismatch");
            const ad::Expr ap = ad::matmul(p, q.graph().constant(a), false, true);  // rows: (A p)^T
            return ad::sum_cols(q * ap);
          }};
}

double momentum_hessian_max(const ScalarField& g, const ParamStore* params, const StateBatch& s) {
  ad::Graph graph;
  const PhaseState st{graph.input(0, s.q.rows(), s.q.cols()), graph.input(1, s.p.rows(), s.p.cols())};
  const ad::Expr dp = phase_gradient(g, st).dp;
  ad::Evaluator ev(graph, ad::Bindings{{s.q, s.p}, params});
  double worst = 0.0;
  for (Eigen::Index i = 0; i < s.dim(); ++i) {
    // Rows are independent, so the gradient of the column sum is per-row.
    const ad::Expr second = ad::gradient(ad::sum(ad::col(dp, i)), st.p);
    worst = std::max(worst, ev.value(second).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::vector<ad::Expr> commutator_penalty(const GeneratorSet& gens, const Hamiltonian& h, const PhaseState& samples) {
  if (samples.q.rows() == 0) throw ContractError("commutator_penalty: empty sample batch");
  const ScalarField hf = h.total();
  const double inv_n = 1.0 / static_cast<double>(samples.q.rows());
  std::vector<ad::Expr> out;
  for (const auto& g : gens.generators) {
    const ad::Expr b = poisson_bracket(g.field, hf, samples);
    out.push_back(inv_n * ad::sum(ad::square(b)) - g.kappa);
  }
  return out;
}

std::vector<double> commutator_penalty(const GeneratorSet& gens, const FlowSpec& flow, const ParamStore* params,
                                       const StateBatch& samples) {
  if (samples.size() == 0) throw ContractError("commutator_penalty: empty sample batch");
  ad::Graph graph;
  const PhaseState st{graph.input(0, samples.q.rows(), samples.q.cols()),
                      graph.input(1, samples.p.rows(), samples.p.cols())};
  ad::Evaluator ev(graph, ad::Bindings{{samples.q, samples.p}, params});
  std::vector<double> out(gens.size(), 0.0);
  for (const auto& h : flow.hamiltonians) {
    const auto c = commutator_penalty(gens, h, st);
    for (std::size_t k = 0; k < c.size(); ++k) out[k] += ev.scalar(c[k]);
  }
  return out;
}

Eigen::VectorXd noether_drift(const ScalarField& g, const FlowSpec& flow, const ParamStore* params,
                              const StateBatch& s0, int steps) {
  Eigen::VectorXd drift = Eigen::VectorXd::Zero(s0.size());
  if (steps <= 0) return drift;
  const Matrix g0 = evaluate_field(g, params, s0);
  // Walk one leapfrog step at a time, cycling through the chain.
  FlowSpec single = flow;
  single.leapfrog_steps = 1;
  StateBatch s = s0;
  for (int t = 0; t < steps; ++t) {
    FlowSpec one = single;
    one.hamiltonians = {flow.hamiltonians[static_cast<std::size_t>(t / flow.leapfrog_steps) % flow.hamiltonians.size()]};
    s = run_flow(one, params, s, Direction::forward);
    const Matrix gt = evaluate_field(g, params, s);
    drift = drift.cwiseMax((gt - g0).col(0).cwiseAbs());
  }
  return drift;
}

Eigen::VectorXd base_invariance_check(const BaseDensity& pi, const ScalarField& g, const StateBatch& s, double eps) {
  ad::Graph graph;
  const PhaseState st{graph.input(0, s.q.rows(), s.q.cols()), graph.input(1, s.p.rows(), s.p.cols())};
  const PhaseState moved = infinitesimal_transform(g, eps, st);
  const ad::Expr diff = pi.log_prob(moved) - pi.log_prob(st);
  ad::Evaluator ev(graph, ad::Bindings{{s.q, s.p}, nullptr});
  return ev.value(diff).col(0).cwiseAbs();
}

Matrix rotate_rows(const Matrix& x, double angle) {
  if (x.cols() != 2) throw UnsupportedError("rotation probe is only defined for d = 2");
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Matrix out(x.rows(), 2);
  out.col(0) = c * x.col(0) - s * x.col(1);
  out.col(1) = s * x.col(0) + c * x.col(1);
  return out;
}

InvarianceProbe density_invariance_probe(const ModelDensity& m, double angle, const Matrix& qs, const Matrix& noise) {
  if (qs.cols() != 2) throw UnsupportedError("density_invariance_probe: SO(2) probe needs d = 2");
  if (qs.rows() == 0) throw ContractError("density_invariance_probe: empty batch");
  ad::Graph graph;
  const ad::Expr q = graph.input(0, qs.rows(), 2);
  const ad::Expr z = graph.input(1, noise.rows(), noise.cols());
  const ad::Expr p = m.encoder.sample(q, z, *m.params).p;
  ad::Evaluator ev(graph, ad::Bindings{{qs, noise}, m.params});
  const StateBatch s{qs, ev.value(p)};
  const StateBatch r{rotate_rows(s.q, angle), rotate_rows(s.p, angle)};

  InvarianceProbe out;
  const Matrix a = model_joint_log_prob(m, s);
  const Matrix b = model_joint_log_prob(m, r);
  out.joint = (b - a).cwiseAbs().mean();

  Matrix u = Matrix::Zero(qs.rows(), 1);
  for (const auto& h : m.flow.hamiltonians)
    u += evaluate_field(h.potential, m.params, r) - evaluate_field(h.potential, m.params, s);
  out.marginal = u.cwiseAbs().mean();
  return out;
}

}  // namespace hamflow
