#pragma once

// Phase-space mechanics on batches of states s = (q, p), each an n x d block
// with one sample per row.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hamflow/autodiff.hpp"

namespace hamflow {

using Matrix = Eigen::MatrixXd;

/// Which coordinate blocks a scalar field reads.
enum class Dependence { position, momentum, both };

/// Differentiable scalar function of phase space, evaluated row-wise:
/// given n x d blocks q and p it returns an n x 1 expression. Fields must
/// not mix rows. A field that ignores a block may receive an empty handle
/// for it.
struct ScalarField {
  std::string name;
  Dependence dependence = Dependence::both;
  std::function<ad::Expr(const ad::Expr& q, const ad::Expr& p)> fn;

  ad::Expr operator()(const ad::Expr& q, const ad::Expr& p) const { return fn(q, p); }
};

/// Separable Hamiltonian H(q, p) = K(p) + U(q).
struct Hamiltonian {
  ScalarField kinetic;    // depends on momentum only
  ScalarField potential;  // depends on position only

  /// H as a single field.
  ScalarField total() const;
};

struct PhaseState {
  ad::Expr q;
  ad::Expr p;
};

/// Numeric batch of states.
struct StateBatch {
  Matrix q;
  Matrix p;
  Eigen::Index size() const { return q.rows(); }
  Eigen::Index dim() const { return q.cols(); }
};

struct PhaseGradient {
  ad::Expr dq;  // n x d
  ad::Expr dp;  // n x d
};

/// Input gradient of a field at `s`, as expressions that remain
/// differentiable with respect to parameters.
PhaseGradient phase_gradient(const ScalarField& f, const PhaseState& s);

/// {f, g} = sum_i df/dq_i dg/dp_i - df/dp_i dg/dq_i, n x 1.
ad::Expr poisson_bracket(const ScalarField& f, const ScalarField& g, const PhaseState& s);

/// T_f^eps(s) = s + eps ({q, f}, {p, f}) = s + eps (df/dp, -df/dq).
PhaseState infinitesimal_transform(const ScalarField& f, double eps, const PhaseState& s);

enum class Direction { forward, inverse };

/// One generalized leapfrog step of H = K(p) + U(q):
///   p' = p - dt/2 dU/dq(q); q' = q + dt dK/dp(p'); p'' = p' - dt/2 dU/dq(q').
/// The inverse is the same scheme with -dt. Each sub-step is a shear.
PhaseState leapfrog_step(const Hamiltonian& h, double dt, const PhaseState& s, Direction dir = Direction::forward);

struct FlowSpec {
  std::vector<Hamiltonian> hamiltonians;
  double dt = 0.5;
  int leapfrog_steps = 2;

  /// Throws ContractError when the chain is empty, dt <= 0, steps < 1, or a
  /// kinetic/potential field reads the wrong block.
  void validate() const;
  int total_steps() const { return static_cast<int>(hamiltonians.size()) * leapfrog_steps; }
};

/// Applies each Hamiltonian's leapfrog steps in order.
PhaseState flow_forward(const FlowSpec& flow, const PhaseState& s0);
/// Reverses the chain with -dt; exact algebraic inverse of flow_forward.
PhaseState flow_inverse(const FlowSpec& flow, const PhaseState& sn);

/// Every intermediate state: element 0 is the start, element k the state
/// after k leapfrog steps. dU/dq is shared between consecutive steps.
std::vector<PhaseState> flow_states(const FlowSpec& flow, const PhaseState& s0, Direction dir);

/// Numeric flow map over a batch. Non-finite values raise NumericError
/// naming the leapfrog step.
StateBatch run_flow(const FlowSpec& flow, const ParamStore* params, const StateBatch& s, Direction dir);

/// Determinant of the central finite-difference Jacobian of the forward flow
/// at a single state (rows 0 of `s`).
double jacobian_determinant_check(const FlowSpec& flow, const ParamStore* params, const StateBatch& s,
                                  double h = 1e-5);

/// Values of fields at a numeric batch, n x 1 each.
Matrix evaluate_field(const ScalarField& f, const ParamStore* params, const StateBatch& s);

/// Batch of trajectories: states[t] holds every sample after t leapfrog steps.
struct Trajectory {
  std::vector<StateBatch> states;
};

/// Repeats the forward flow `applications` times, recording each leapfrog step.
Trajectory integrate(const FlowSpec& flow, const ParamStore* params, const StateBatch& s0, int applications);

/// CSV with header step,q1..qd,p1..pd,H,g1..gK. One block of rows per
/// sample, each block starting at step 0.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const ScalarField& hamiltonian,
                          const std::vector<ScalarField>& generators, const ParamStore* params);

// Analytic fields used as references and in tests.
namespace fields {
/// sum_i c_i x_i^2 / 2 over the chosen block.
ScalarField half_square_norm(Dependence block, double scale = 1.0);
/// U(q) = u(|q|^2) with u(r) = a r + b r^2 (central force).
ScalarField central_potential(double a, double b);
/// K(p) = |p|^2/2 + c |p|^4 (rotation invariant, non-quadratic when c != 0).
ScalarField quartic_kinetic(double c);
/// Linear function of one coordinate: x_i of the chosen block.
ScalarField coordinate(Dependence block, int i);
ScalarField constant(double c, Dependence block = Dependence::both);
}  // namespace fields

/// Standard harmonic oscillator K = |p|^2/2, U = |q|^2/2.
Hamiltonian harmonic_oscillator();

}  // namespace hamflow
