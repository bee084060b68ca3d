#include "hamflow/dynamics.hpp"

#include <cstdio>
#include <ostream>

#include <Eigen/LU>

#include "hamflow/errors.hpp"

namespace hamflow {

namespace {

const ad::Expr& reference_block(const ad::Expr& q, const ad::Expr& p) {
  if (q.valid()) return q;
  if (p.valid()) return p;
  throw ContractError("field evaluated with no state blocks");
}

ad::Expr zeros_like(const ad::Expr& e) { return e.graph().constant(0.0, e.rows(), e.cols()); }

// dU/dq for a position-only field.
ad::Expr position_gradient(const ScalarField& u, const ad::Expr& q) {
  const ad::Expr qi = ad::identity(q);
  return ad::gradient(ad::sum(u(qi, ad::Expr{})), qi);
}

ad::Expr momentum_gradient(const ScalarField& k, const ad::Expr& p) {
  const ad::Expr pi = ad::identity(p);
  return ad::gradient(ad::sum(k(ad::Expr{}, pi)), pi);
}

}  // namespace

ScalarField Hamiltonian::total() const {
  return ScalarField{"H", Dependence::both, [k = kinetic, u = potential](const ad::Expr& q, const ad::Expr& p) {
                       return k(ad::Expr{}, p) + u(q, ad::Expr{});
                     }};
}

PhaseGradient phase_gradient(const ScalarField& f, const PhaseState& s) {
  switch (f.dependence) {
    case Dependence::position:
      return {position_gradient(f, s.q), zeros_like(s.p)};
    case Dependence::momentum:
      return {zeros_like(s.q), momentum_gradient(f, s.p)};
    case Dependence::both:
      break;
  }
  const ad::Expr qi = ad::identity(s.q);
  const ad::Expr pi = ad::identity(s.p);
  const ad::Expr wrt[2] = {qi, pi};
  auto g = ad::gradient(ad::sum(f(qi, pi)), wrt);
  return {g[0], g[1]};
}

ad::Expr poisson_bracket(const ScalarField& f, const ScalarField& g, const PhaseState& s) {
  if (s.q.cols() != s.p.cols() || s.q.rows() != s.p.rows())
    throw ContractError("poisson_bracket: q and p blocks differ in shape");
  const PhaseGradient df = phase_gradient(f, s);
  const PhaseGradient dg = phase_gradient(g, s);
  return ad::sum_cols(df.dq * dg.dp - df.dp * dg.dq);
}

PhaseState infinitesimal_transform(const ScalarField& f, double eps, const PhaseState& s) {
  const PhaseGradient df = phase_gradient(f, s);
  return {s.q + eps * df.dp, s.p - eps * df.dq};
}

PhaseState leapfrog_step(const Hamiltonian& h, double dt, const PhaseState& s, Direction dir) {
  if (h.kinetic.dependence != Dependence::momentum || h.potential.dependence != Dependence::position)
    throw ContractError("leapfrog_step: K must depend on p only and U on q only");
  const double step = dir == Direction::forward ? dt : -dt;
  const ad::Expr p_half = s.p - (0.5 * step) * position_gradient(h.potential, s.q);
  const ad::Expr q_next = s.q + step * momentum_gradient(h.kinetic, p_half);
  const ad::Expr p_next = p_half - (0.5 * step) * position_gradient(h.potential, q_next);
  return {q_next, p_next};
}

void FlowSpec::validate() const {
  if (hamiltonians.empty()) throw ContractError("FlowSpec: no Hamiltonians");
  if (!(dt > 0.0)) throw ContractError("FlowSpec: dt must be positive");
  if (leapfrog_steps < 1) throw ContractError("FlowSpec: leapfrog_steps must be at least 1");
  for (const auto& h : hamiltonians) {
    if (h.kinetic.dependence != Dependence::momentum)
      throw ContractError("FlowSpec: kinetic term '" + h.kinetic.name + "' must depend on p only");
    if (h.potential.dependence != Dependence::position)
      throw ContractError("FlowSpec: potential term '" + h.potential.name + "' must depend on q only");
  }
}

std::vector<PhaseState> flow_states(const FlowSpec& flow, const PhaseState& s0, Direction dir) {
  flow.validate();
  const double step = dir == Direction::forward ? flow.dt : -flow.dt;
  const std::size_t nh = flow.hamiltonians.size();
  std::vector<PhaseState> states{s0};
  states.reserve(static_cast<std::size_t>(flow.total_steps()) + 1);
  PhaseState s = s0;
  for (std::size_t k = 0; k < nh; ++k) {
    const Hamiltonian& h = flow.hamiltonians[dir == Direction::forward ? k : nh - 1 - k];
    ad::Expr grad_u = position_gradient(h.potential, s.q);
    for (int t = 0; t < flow.leapfrog_steps; ++t) {
      const ad::Expr p_half = s.p - (0.5 * step) * grad_u;
      const ad::Expr q_next = s.q + step * momentum_gradient(h.kinetic, p_half);
      grad_u = position_gradient(h.potential, q_next);
      s = {q_next, p_half - (0.5 * step) * grad_u};
      states.push_back(s);
    }
  }
  return states;
}

PhaseState flow_forward(const FlowSpec& flow, const PhaseState& s0) {
  return flow_states(flow, s0, Direction::forward).back();
}

PhaseState flow_inverse(const FlowSpec& flow, const PhaseState& sn) {
  return flow_states(flow, sn, Direction::inverse).back();
}

StateBatch run_flow(const FlowSpec& flow, const ParamStore* params, const StateBatch& s, Direction dir) {
  ad::Graph g;
  const PhaseState s0{g.input(0, s.q.rows(), s.q.cols()), g.input(1, s.p.rows(), s.p.cols())};
  const auto states = flow_states(flow, s0, dir);
  ad::Evaluator ev(g, ad::Bindings{{s.q, s.p}, params});
  for (std::size_t k = 1; k < states.size(); ++k) {
    try {
      ev.value(states[k].q);
      ev.value(states[k].p);
    } catch (const NumericError& e) {
      throw NumericError("flow " + std::string(dir == Direction::forward ? "forward" : "inverse") +
                         ": non-finite state at leapfrog step " + std::to_string(k) + " (" + e.what() + ")");
    }
  }
  return {ev.value(states.back().q), ev.value(states.back().p)};
}

double jacobian_determinant_check(const FlowSpec& flow, const ParamStore* params, const StateBatch& s, double h) {
  const Eigen::Index d = s.dim();
  const Eigen::Index n = 2 * d;
  StateBatch probe{Matrix(2 * n, d), Matrix(2 * n, d)};
  for (Eigen::Index k = 0; k < n; ++k) {
    for (int sign = 0; sign < 2; ++sign) {
      const Eigen::Index r = 2 * k + sign;
      probe.q.row(r) = s.q.row(0);
      probe.p.row(r) = s.p.row(0);
      const double delta = sign == 0 ? h : -h;
      if (k < d) probe.q(r, k) += delta;
      else probe.p(r, k - d) += delta;
    }
  }
  const StateBatch out = run_flow(flow, params, probe, Direction::forward);
  Matrix jac(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    jac.block(0, k, d, 1) = (out.q.row(2 * k) - out.q.row(2 * k + 1)).transpose() / (2 * h);
    jac.block(d, k, d, 1) = (out.p.row(2 * k) - out.p.row(2 * k + 1)).transpose() / (2 * h);
  }
  return jac.fullPivLu().determinant();
}

Matrix evaluate_field(const ScalarField& f, const ParamStore* params, const StateBatch& s) {
  ad::Graph g;
  const ad::Expr q = g.input(0, s.q.rows(), s.q.cols());
  const ad::Expr p = g.input(1, s.p.rows(), s.p.cols());
  const ad::Expr v = f(q, p);
  ad::Evaluator ev(g, ad::Bindings{{s.q, s.p}, params});
  return ev.value(v);
}

Trajectory integrate(const FlowSpec& flow, const ParamStore* params, const StateBatch& s0, int applications) {
  Trajectory traj;
  traj.states.push_back(s0);
  StateBatch s = s0;
  for (int a = 0; a < applications; ++a) {
    ad::Graph g;
    const PhaseState start{g.input(0, s.q.rows(), s.q.cols()), g.input(1, s.p.rows(), s.p.cols())};
    const auto states = flow_states(flow, start, Direction::forward);
    ad::Evaluator ev(g, ad::Bindings{{s.q, s.p}, params});
    for (std::size_t k = 1; k < states.size(); ++k) {
      try {
        traj.states.push_back({ev.value(states[k].q), ev.value(states[k].p)});
      } catch (const NumericError& e) {
        throw NumericError("trajectory: non-finite state at leapfrog step " +
                           std::to_string(traj.states.size()) + " (" + e.what() + ")");
      }
    }
    s = traj.states.back();
  }
  return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const ScalarField& hamiltonian,
                          const std::vector<ScalarField>& generators, const ParamStore* params) {
  if (traj.states.empty()) throw ContractError("write_trajectory_csv: empty trajectory");
  const Eigen::Index d = traj.states.front().dim();
  const Eigen::Index n = traj.states.front().size();
  os << "step";
  for (Eigen::Index i = 0; i < d; ++i) os << ",q" << (i + 1);
  for (Eigen::Index i = 0; i < d; ++i) os << ",p" << (i + 1);
  os << ",H";
  for (std::size_t k = 0; k < generators.size(); ++k) os << ",g" << (k + 1);
  os << '\n';

  std::vector<Matrix> h_vals;
  std::vector<std::vector<Matrix>> g_vals(generators.size());
  for (const auto& st : traj.states) {
    h_vals.push_back(evaluate_field(hamiltonian, params, st));
    for (std::size_t k = 0; k < generators.size(); ++k) g_vals[k].push_back(evaluate_field(generators[k], params, st));
  }
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    os << buf;
  };
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
      const auto& st = traj.states[t];
      os << t;
      for (Eigen::Index i = 0; i < d; ++i) put(st.q(r, i));
      for (Eigen::Index i = 0; i < d; ++i) put(st.p(r, i));
      put(h_vals[t](r, 0));
      for (std::size_t k = 0; k < generators.size(); ++k) put(g_vals[k][t](r, 0));
      os << '\n';
    }
  }
}

namespace fields {

ScalarField half_square_norm(Dependence block, double scale) {
  if (block == Dependence::both) {
    return {"half_square_norm", block, [scale](const ad::Expr& q, const ad::Expr& p) {
              return (0.5 * scale) * (ad::sum_cols(ad::square(q)) + ad::sum_cols(ad::square(p)));
            }};
  }
  const bool pos = block == Dependence::position;
  return {pos ? "U" : "K", block, [pos, scale](const ad::Expr& q, const ad::Expr& p) {
            return (0.5 * scale) * ad::sum_cols(ad::square(pos ? q : p));
          }};
}

ScalarField central_potential(double a, double b) {
  return {"U_central", Dependence::position, [a, b](const ad::Expr& q, const ad::Expr&) {
            const ad::Expr r2 = ad::sum_cols(ad::square(q));
            return a * r2 + b * ad::square(r2);
          }};
}

ScalarField quartic_kinetic(double c) {
  return {"K_quartic", Dependence::momentum, [c](const ad::Expr&, const ad::Expr& p) {
            const ad::Expr r2 = ad::sum_cols(ad::square(p));
            return 0.5 * r2 + c * ad::square(r2);
          }};
}

ScalarField coordinate(Dependence block, int i) {
  if (block == Dependence::both) throw ContractError("fields::coordinate: choose q or p");
  const bool pos = block == Dependence::position;
  return {std::string(pos ? "q" : "p") + std::to_string(i + 1), block,
          [pos, i](const ad::Expr& q, const ad::Expr& p) { return ad::col(pos ? q : p, i); }};
}

ScalarField constant(double c, Dependence block) {
  return {"const", block, [c](const ad::Expr& q, const ad::Expr& p) {
            const ad::Expr& ref = reference_block(q, p);
            return ref.graph().constant(c, ref.rows(), 1);
          }};
}

}  // namespace fields

Hamiltonian harmonic_oscillator() {
  return {fields::half_square_norm(Dependence::momentum), fields::half_square_norm(Dependence::position)};
}

}  // namespace hamflow
