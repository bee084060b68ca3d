#include <doctest.h>

#include <numbers>

#include "hamflow/densities.hpp"
#include "hamflow/errors.hpp"
#include "hamflow/model.hpp"
#include "hamflow/symmetry.hpp"
#include "phase.hpp"

using namespace hamflow;

namespace {

GeneratorSet so2(double kappa, double lambda = 1.0) { return GeneratorSet{{Generator{angular_momentum(0, 1), kappa, lambda}}}; }

FlowSpec single(const Hamiltonian& h, double dt = 0.1, int steps = 1) { return FlowSpec{{h}, dt, steps}; }

// Rotation-invariant softplus networks of |x|^2.
ScalarField radial_net(const Mlp& net, const ParamStore* store, Dependence block) {
  return {"radial", block, [&net, store, block](const ad::Expr& q, const ad::Expr& p) {
            const ad::Expr& x = block == Dependence::position ? q : p;
            return net.apply(ad::sum_cols(ad::square(x)), *store);
          }};
}

}  // namespace

TEST_SUITE("symmetry") {

TEST_CASE("commutator_penalty examples") {
  const StateBatch s = testing::random_states(1, 64, 2);
  const auto c0 = commutator_penalty(so2(0.0), single(harmonic_oscillator()), nullptr, s);
  CHECK(c0.at(0) == 0.0);

  // H = q1: {g, H} = -q2, so C = mean(q2^2) - kappa.
  const Hamiltonian shift{fields::constant(0.0), fields::coordinate(Dependence::position, 0)};
  StateBatch pm = testing::random_states(2, 4, 2);
  pm.q.col(1) << 1.0, -1.0, 1.0, -1.0;
  CHECK(commutator_penalty(so2(0.0), single(shift), nullptr, pm).at(0) == doctest::Approx(1.0));
  CHECK(commutator_penalty(so2(0.3), single(shift), nullptr, pm).at(0) == doctest::Approx(0.7));
  CHECK(commutator_penalty(so2(1.0), single(shift), nullptr, pm).at(0) == doctest::Approx(0.0));
}

TEST_CASE("commutator_penalty rejects an empty batch") {
  const StateBatch empty{Matrix(0, 2), Matrix(0, 2)};
  CHECK_THROWS_AS(commutator_penalty(so2(0.0), single(harmonic_oscillator()), nullptr, empty), ContractError);
}

TEST_CASE("raw penalty is non-negative for learned Hamiltonians") {
  ExperimentConfig cfg;
  cfg.networks.hamiltonian_hidden = {16, 16};
  cfg.networks.encoder_width = 8;
  cfg.networks.final_layer_scale = 1.0;
  FlowModel m(cfg, 2);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    m.initialize(seed);
    const StateBatch s = m.base().sample(128, seed);
    CHECK(commutator_penalty(so2(0.0), m.flow(), &m.params(), s).at(0) >= 0.0);
  }
}

TEST_CASE("built-in generators have zero momentum Hessian") {
  const StateBatch s = testing::random_states(3, 16, 3);
  CHECK(momentum_hessian_max(angular_momentum(0, 2), nullptr, s) < 1e-14);
  const Matrix a = Matrix::Random(3, 3);
  CHECK(momentum_hessian_max(quadratic_generator(a), nullptr, s) < 1e-14);
  // A kinetic energy is the counterexample.
  CHECK(momentum_hessian_max(fields::half_square_norm(Dependence::momentum), nullptr, s) > 0.5);
}

TEST_CASE("quadratic generator reproduces angular momentum") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = 1.0;
  a(1, 0) = -1.0;
  const StateBatch s = testing::random_states(4, 10, 2);
  const Matrix x = evaluate_field(quadratic_generator(a), nullptr, s);
  const Matrix y = evaluate_field(angular_momentum(0, 1), nullptr, s);
  CHECK((x - y).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("noether_drift examples") {
  const Hamiltonian central{fields::half_square_norm(Dependence::momentum), fields::central_potential(1.0, 0.3)};
  StateBatch s0{Matrix(1, 2), Matrix(1, 2)};
  s0.q << 1.0, 0.0;
  s0.p << 0.0, 1.0;
  CHECK(noether_drift(angular_momentum(0, 1), single(central), nullptr, s0, 100)(0) < 1e-12);
  CHECK(evaluate_field(angular_momentum(0, 1), nullptr, s0)(0) == 1.0);

  // On the circular orbit the dt^2 energy errors of the two coordinates
  // cancel; start from rest instead.
  const Hamiltonian ho = harmonic_oscillator();
  StateBatch rest = s0;
  rest.p.setZero();
  const double d1 = noether_drift(ho.total(), single(ho, 0.1), nullptr, rest, 200)(0);
  const double d2 = noether_drift(ho.total(), single(ho, 0.05), nullptr, rest, 400)(0);
  CHECK(d1 > 0.0);
  CHECK(d1 / d2 == doctest::Approx(4.0).epsilon(0.05));
  CHECK(noether_drift(ho.total(), single(ho, 0.1), nullptr, s0, 0)(0) == 0.0);
}

TEST_CASE("base_invariance_check examples") {
  const StateBatch s = testing::random_states(5, 20, 2);
  const auto normal = BaseDensity::spherical_normal(2);
  const auto g = angular_momentum(0, 1);
  for (double eps : {0.1, 0.01, 1e-4})
    CHECK(base_invariance_check(normal, g, s, eps).maxCoeff() <= 1e-12 + 2.0 * eps * eps * 10.0);
  CHECK(base_invariance_check(normal, g, s, 0.0).maxCoeff() == 0.0);

  // The product soft-uniform is not rotation invariant: the first-order term
  // survives and halving eps halves the residual.
  const auto box = BaseDensity::soft_uniform(2, 4.0, 1.0);
  const Eigen::VectorXd r1 = base_invariance_check(box, g, s, 1e-4);
  const Eigen::VectorXd r2 = base_invariance_check(box, g, s, 5e-5);
  for (Eigen::Index i = 0; i < r1.size(); ++i)
    if (r1(i) > 1e-6) CHECK(r1(i) / r2(i) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("spherical normal residual is second order") {
  // Euler rotation scales radii by sqrt(1 + eps^2), so the residual is
  // eps^2 |s|^2 / 2 exactly to leading order.
  const StateBatch s = testing::random_states(6, 10, 2);
  const auto normal = BaseDensity::spherical_normal(2);
  const Eigen::VectorXd r1 = base_invariance_check(normal, angular_momentum(0, 1), s, 1e-3);
  const Eigen::VectorXd r2 = base_invariance_check(normal, angular_momentum(0, 1), s, 5e-4);
  for (Eigen::Index i = 0; i < r1.size(); ++i) CHECK(r1(i) / r2(i) == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("density_invariance_probe") {
  ExperimentConfig cfg;
  cfg.networks.hamiltonian_hidden = {16, 16};
  cfg.networks.encoder_width = 8;
  FlowModel m(cfg, 2);
  m.initialize(3);
  const Matrix qs = normal_matrix(1, 200, 2);
  const Matrix noise = normal_matrix(2, 200, 2);

  const auto zero = density_invariance_probe(m.density(), 0.0, qs, noise);
  CHECK(zero.joint == 0.0);
  CHECK(zero.marginal == 0.0);

  // Identity flow: the spherical-normal base symmetry passes through.
  for (std::size_t h = 0; h < m.flow().hamiltonians.size(); ++h) {
    const auto& kn = m.kinetic_net(h);
    const auto& un = m.potential_net(h);
    for (const Mlp* net : {&kn, &un}) m.params().matrix(net->weight_entry(net->layer_count() - 1)).setZero();
  }
  for (double a : {std::numbers::pi / 7, std::numbers::pi / 3, std::numbers::pi / 2})
    CHECK(density_invariance_probe(m.density(), a, qs, noise).joint <= 1e-6);

  // Analytic rotation-invariant potential: marginal proxy vanishes.
  ModelDensity analytic = m.density();
  analytic.flow = FlowSpec{{Hamiltonian{fields::quartic_kinetic(0.01), fields::central_potential(0.5, 0.05)}}, 0.2, 2};
  const auto r = density_invariance_probe(analytic, 1.0, qs, noise);
  CHECK(r.marginal < 1e-12);
  CHECK(r.joint < 1e-10);

  ExperimentConfig cfg3 = cfg;
  FlowModel m3(cfg3, 3);
  CHECK_THROWS_AS(density_invariance_probe(m3.density(), 0.5, Matrix::Zero(4, 3), Matrix::Zero(4, 3)),
                  UnsupportedError);
}

TEST_CASE("invariant networks give an invariant density") {
  // {g, U} = {g, K} = 0 by construction: networks see only |q|^2 and |p|^2.
  ParamStore store;
  const Mlp u(MlpSpec{{1, 16, 16, 1}, Activation::softplus, "u"}, store);
  const Mlp k(MlpSpec{{1, 16, 16, 1}, Activation::softplus, "k"}, store);
  const GaussianEncoder enc(2, 8, store);
  store.freeze();
  u.initialize(store, 2, 1.0);
  k.initialize(store, 3, 1.0);
  enc.initialize(store, 4);
  const Hamiltonian h{radial_net(k, &store, Dependence::momentum), radial_net(u, &store, Dependence::position)};
  const ModelDensity md{FlowSpec{{h, h}, 0.5, 2}, BaseDensity::spherical_normal(2), enc, &store};

  const Matrix qs = normal_matrix(4, 300, 2);
  const Matrix noise = normal_matrix(5, 300, 2);
  for (double a : {std::numbers::pi / 7, std::numbers::pi / 3, std::numbers::pi / 2, 2.0}) {
    const auto r = density_invariance_probe(md, a, qs, noise);
    CHECK(r.joint <= 1e-6);
    CHECK(r.marginal <= 1e-6);
  }
}

TEST_CASE("rotate_rows") {
  Matrix x(1, 2);
  x << 1.0, 0.0;
  const Matrix r = rotate_rows(x, std::numbers::pi / 2);
  CHECK(std::abs(r(0)) < 1e-16);
  CHECK(r(1) == doctest::Approx(1.0));
}

}  // TEST_SUITE
