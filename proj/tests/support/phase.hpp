#pragma once

#include <functional>
#include <random>

#include "hamflow/dynamics.hpp"
#include "hamflow/rng.hpp"

namespace hamflow::testing {

/// Evaluates a symbolic phase-space map on a numeric batch.
inline StateBatch apply_map(const std::function<PhaseState(const PhaseState&)>& f, const StateBatch& s,
                            const ParamStore* params = nullptr) {
  ad::Graph g;
  const PhaseState in{g.input(0, s.q.rows(), s.q.cols()), g.input(1, s.p.rows(), s.p.cols())};
  const PhaseState out = f(in);
  ad::Evaluator ev(g, {{s.q, s.p}, params});
  return {ev.value(out.q), ev.value(out.p)};
}

inline StateBatch euler(const ScalarField& f, double eps, const StateBatch& s, const ParamStore* params = nullptr) {
  return apply_map([&](const PhaseState& x) { return infinitesimal_transform(f, eps, x); }, s, params);
}

inline StateBatch random_states(std::uint64_t seed, Eigen::Index n, Eigen::Index d, double scale = 1.0) {
  return {scale * normal_matrix(derive_seed(seed, "q"), n, d), scale * normal_matrix(derive_seed(seed, "p"), n, d)};
}

inline double max_abs_diff(const StateBatch& a, const StateBatch& b) {
  return std::max((a.q - b.q).cwiseAbs().maxCoeff(), (a.p - b.p).cwiseAbs().maxCoeff());
}

/// Per-row Euclidean distance between two batches of states.
inline Eigen::VectorXd row_distance(const StateBatch& a, const StateBatch& b) {
  return ((a.q - b.q).rowwise().squaredNorm() + (a.p - b.p).rowwise().squaredNorm()).cwiseSqrt();
}

/// r(eps, dt) = |T_g^eps(T_H^dt(s)) - T_H^dt(T_g^eps(s))| per row, with both
/// maps the first-order infinitesimal transforms.
inline Eigen::VectorXd equivariance_residual(const ScalarField& h, const ScalarField& g, double eps, double dt,
                                             const StateBatch& s) {
  const StateBatch a = euler(g, eps, euler(h, dt, s));
  const StateBatch b = euler(h, dt, euler(g, eps, s));
  return row_distance(a, b);
}

}  // namespace hamflow::testing
