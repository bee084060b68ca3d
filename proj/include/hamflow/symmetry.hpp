#pragma once

#include <string>
#include <vector>

#include "hamflow/densities.hpp"
#include "hamflow/dynamics.hpp"

namespace hamflow {

/// A known symmetry generator with its constraint precision kappa and
/// Lagrange multiplier lambda (both kept >= 0).
struct Generator {
  ScalarField field;
  double kappa = 0.0;
  double lambda = 1.0;
};

struct GeneratorSet {
  std::vector<Generator> generators;

  std::size_t size() const { return generators.size(); }
  bool empty() const { return generators.empty(); }
  std::vector<ScalarField> fields() const;
  void validate() const;
};

/// SO(2) rotation generator in the (i, j) plane: g = q_i p_j - q_j p_i.
ScalarField angular_momentum(int i, int j);

/// g = q^T A p for a square user matrix A (bilinear, so d2g/dp2 = 0).
ScalarField quadratic_generator(const Matrix& a);

/// max |d2 g / dp_i dp_j| over the batch, computed from second-derivative
/// expressions. Zero for generators linear in p.
double momentum_hessian_max(const ScalarField& g, const ParamStore* params, const StateBatch& s);

/// C_k = mean over samples of {g_k, H}(s)^2 - kappa_k, one 1 x 1 expression
/// per generator.
std::vector<ad::Expr> commutator_penalty(const GeneratorSet& gens, const Hamiltonian& h, const PhaseState& samples);

/// Numeric form of commutator_penalty, summed over a Hamiltonian chain.
std::vector<double> commutator_penalty(const GeneratorSet& gens, const FlowSpec& flow, const ParamStore* params,
                                       const StateBatch& samples);

/// Per sample, max over the trajectory of |g(s_t) - g(s_0)| for `steps`
/// leapfrog steps of the flow's Hamiltonian chain (cycled).
Eigen::VectorXd noether_drift(const ScalarField& g, const FlowSpec& flow, const ParamStore* params,
                              const StateBatch& s0, int steps);

/// Per sample |ln pi(T_g^eps(s)) - ln pi(s)|.
Eigen::VectorXd base_invariance_check(const BaseDensity& pi, const ScalarField& g, const StateBatch& s, double eps);

struct InvarianceProbe {
  double joint = 0.0;     // mean |ln p(Rq, Rp) - ln p(q, p)|
  double marginal = 0.0;  // mean |U(Rq) - U(q)| summed over the chain's potentials
};

/// Rotates full states (q, p), with p drawn from the encoder at q using the
/// given standard-normal noise, by `angle` and compares model log-densities.
/// Only defined for d = 2.
InvarianceProbe density_invariance_probe(const ModelDensity& m, double angle, const Matrix& qs, const Matrix& noise);

/// 2-D rotation of each row.
Matrix rotate_rows(const Matrix& x, double angle);

}  // namespace hamflow
