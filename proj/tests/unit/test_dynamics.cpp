#include <doctest.h>

#include <sstream>

#include "hamflow/dynamics.hpp"
#include "hamflow/errors.hpp"
#include "hamflow/model.hpp"
#include "hamflow/symmetry.hpp"
#include "phase.hpp"

using namespace hamflow;
using testing::apply_map;

namespace {

StateBatch state(std::initializer_list<double> q, std::initializer_list<double> p) {
  StateBatch s{Matrix(1, static_cast<Eigen::Index>(q.size())), Matrix(1, static_cast<Eigen::Index>(p.size()))};
  Eigen::Index i = 0;
  for (double v : q) s.q(0, i++) = v;
  i = 0;
  for (double v : p) s.p(0, i++) = v;
  return s;
}

double bracket(const ScalarField& f, const ScalarField& g, const StateBatch& s) {
  ad::Graph gr;
  const PhaseState x{gr.input(0, s.q.rows(), s.q.cols()), gr.input(1, s.p.rows(), s.p.cols())};
  return ad::Evaluator(gr, {{s.q, s.p}, nullptr}).value(poisson_bracket(f, g, x))(0);
}

ScalarField field(std::string name, std::function<ad::Expr(const ad::Expr&, const ad::Expr&)> fn) {
  return {std::move(name), Dependence::both, std::move(fn)};
}

FlowSpec single(const Hamiltonian& h, double dt, int steps) { return FlowSpec{{h}, dt, steps}; }

// Small trained-looking flow: random softplus networks at full output scale.
struct RandomFlow {
  ExperimentConfig cfg;
  std::unique_ptr<FlowModel> model;
  explicit RandomFlow(std::uint64_t seed, int hamiltonians = 2) {
    cfg.networks.hamiltonian_hidden = {16, 16};
    cfg.networks.encoder_width = 8;
    cfg.networks.final_layer_scale = 1.0;
    cfg.flow.hamiltonians = hamiltonians;
    model = std::make_unique<FlowModel>(cfg, 2);
    model->initialize(seed);
  }
};

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("poisson_bracket examples") {
  const auto q1 = fields::coordinate(Dependence::position, 0);
  const auto p1 = fields::coordinate(Dependence::momentum, 0);
  CHECK(bracket(q1, p1, state({0.3, 2.0}, {-1.0, 4.0})) == doctest::Approx(1.0));

  const auto q1sq = field("q1^2", [](const ad::Expr& q, const ad::Expr&) { return ad::square(ad::col(q, 0)); });
  const auto p1sq = field("p1^2", [](const ad::Expr&, const ad::Expr& p) { return ad::square(ad::col(p, 0)); });
  CHECK(bracket(q1sq, p1sq, state({1.0}, {2.0})) == doctest::Approx(8.0));

  const auto g = angular_momentum(0, 1);
  const auto energy = field("|s|^2/2", [](const ad::Expr& q, const ad::Expr& p) {
    return 0.5 * (ad::sum_cols(ad::square(q)) + ad::sum_cols(ad::square(p)));
  });
  const StateBatch s = testing::random_states(2, 20, 2);
  ad::Graph gr;
  const PhaseState x{gr.input(0, 20, 2), gr.input(1, 20, 2)};
  const Matrix v = ad::Evaluator(gr, {{s.q, s.p}, nullptr}).value(poisson_bracket(g, energy, x));
  CHECK(v.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("poisson_bracket is antisymmetric") {
  const auto g = angular_momentum(0, 1);
  const auto h = harmonic_oscillator();
  const auto k = fields::quartic_kinetic(0.3);
  const StateBatch s = state({0.4, -1.2}, {0.7, 0.1});
  CHECK(bracket(g, k, s) == doctest::Approx(-bracket(k, g, s)));
  CHECK(bracket(h.potential, fields::coordinate(Dependence::momentum, 1), s) ==
        doctest::Approx(-bracket(fields::coordinate(Dependence::momentum, 1), h.potential, s)));
}

TEST_CASE("infinitesimal_transform examples") {
  const auto g = angular_momentum(0, 1);
  const StateBatch s = state({1.0, 0.0}, {0.0, 0.0});
  const StateBatch t = testing::euler(g, 0.01, s);
  CHECK(t.q(0) == doctest::Approx(1.0));
  CHECK(t.q(1) == doctest::Approx(0.01));
  CHECK(t.p.isZero());

  const StateBatch r = testing::random_states(3, 4, 2);
  CHECK(testing::max_abs_diff(testing::euler(g, 0.0, r), r) == 0.0);
  CHECK(testing::max_abs_diff(testing::euler(fields::constant(3.0), 0.5, r), r) == 0.0);
}

TEST_CASE("leapfrog_step examples") {
  const Hamiltonian ho = harmonic_oscillator();
  const StateBatch s = state({1.0}, {0.0});
  const StateBatch f = run_flow(single(ho, 0.1, 1), nullptr, s, Direction::forward);
  CHECK(f.q(0) == doctest::Approx(0.995).epsilon(1e-15));
  CHECK(f.p(0) == doctest::Approx(-0.09975).epsilon(1e-15));
  const StateBatch back = run_flow(single(ho, 0.1, 1), nullptr, f, Direction::inverse);
  CHECK(std::abs(back.q(0) - 1.0) < 1e-14);
  CHECK(std::abs(back.p(0)) < 1e-14);

  const Hamiltonian free{fields::half_square_norm(Dependence::momentum), fields::constant(0.0, Dependence::position)};
  const StateBatch fp = run_flow(single(free, 1.0, 1), nullptr, state({0.0}, {1.0}), Direction::forward);
  CHECK(fp.q(0) == 1.0);
  CHECK(fp.p(0) == 1.0);
}

TEST_CASE("leapfrog_step direction agrees with symbolic form") {
  const Hamiltonian ho = harmonic_oscillator();
  const StateBatch s = testing::random_states(4, 3, 2);
  const StateBatch a =
      apply_map([&](const PhaseState& x) { return leapfrog_step(ho, 0.3, x, Direction::forward); }, s);
  const StateBatch b = run_flow(single(ho, 0.3, 1), nullptr, s, Direction::forward);
  CHECK(testing::max_abs_diff(a, b) < 1e-15);
  const StateBatch c =
      apply_map([&](const PhaseState& x) { return leapfrog_step(ho, 0.3, x, Direction::inverse); }, a);
  CHECK(testing::max_abs_diff(c, s) < 1e-14);
}

TEST_CASE("fields reading the wrong block are rejected") {
  const Hamiltonian bad{fields::coordinate(Dependence::position, 0), fields::half_square_norm(Dependence::position)};
  CHECK_THROWS_AS(single(bad, 0.1, 1).validate(), ContractError);
  const Hamiltonian bad2{fields::half_square_norm(Dependence::momentum), angular_momentum(0, 1)};
  CHECK_THROWS_AS(single(bad2, 0.1, 1).validate(), ContractError);
  CHECK_THROWS_AS(single(harmonic_oscillator(), 0.0, 1).validate(), ContractError);
  CHECK_THROWS_AS(single(harmonic_oscillator(), 0.1, 0).validate(), ContractError);
  CHECK_THROWS_AS(FlowSpec{}.validate(), ContractError);
}

TEST_CASE("flow_forward examples") {
  const StateBatch s = state({1.0}, {0.0});
  const StateBatch f = run_flow(single(harmonic_oscillator(), 0.1, 2), nullptr, s, Direction::forward);
  // Two hand-iterated steps: q = 0.98005, p = -0.1985025.
  CHECK(f.q(0) == doctest::Approx(0.98005).epsilon(1e-14));
  CHECK(f.p(0) == doctest::Approx(-0.1985025).epsilon(1e-14));

  RandomFlow rf(1);
  ParamStore& store = rf.model->params();
  for (double& v : store.values()) v = 0.0;
  const StateBatch r = testing::random_states(5, 10, 2);
  CHECK(testing::max_abs_diff(run_flow(rf.model->flow(), &store, r, Direction::forward), r) == 0.0);
}

TEST_CASE("round trip through a learned flow") {
  RandomFlow rf(2);
  const StateBatch s = testing::random_states(6, 100, 2, 1.5);
  for (double dt : {0.05, 0.5, 2.0}) {
    FlowSpec flow = rf.model->flow();
    flow.dt = dt;
    const StateBatch f = run_flow(flow, &rf.model->params(), s, Direction::forward);
    CHECK(testing::max_abs_diff(f, s) > 1e-3);
    const StateBatch b = run_flow(flow, &rf.model->params(), f, Direction::inverse);
    CHECK(testing::max_abs_diff(b, s) < 1e-10);
  }
}

TEST_CASE("non-finite flows name the leapfrog step") {
  const Hamiltonian blow{fields::half_square_norm(Dependence::momentum),
                         ScalarField{"exp", Dependence::position, [](const ad::Expr& q, const ad::Expr&) {
                                       return ad::sum_cols(ad::exp(ad::exp(ad::square(q))));
                                     }}};
  try {
    run_flow(single(blow, 1.0, 3), nullptr, state({3.0}, {0.0}), Direction::forward);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("leapfrog step") != std::string::npos);
  }
}

TEST_CASE("jacobian_determinant_check") {
  RandomFlow rf(3);
  FlowSpec identity = rf.model->flow();
  std::vector<double> saved(rf.model->params().values().begin(), rf.model->params().values().end());
  for (double& v : rf.model->params().values()) v = 0.0;
  const StateBatch s = testing::random_states(7, 1, 2);
  CHECK(jacobian_determinant_check(identity, &rf.model->params(), s) == doctest::Approx(1.0).epsilon(1e-12));
  std::copy(saved.begin(), saved.end(), rf.model->params().values().begin());

  CHECK(std::abs(jacobian_determinant_check(single(harmonic_oscillator(), 0.1, 2), nullptr, s) - 1.0) < 1e-6);
  const StateBatch many = testing::random_states(8, 10, 2);
  for (Eigen::Index i = 0; i < many.size(); ++i) {
    const StateBatch one{many.q.row(i), many.p.row(i)};
    CHECK(std::abs(jacobian_determinant_check(rf.model->flow(), &rf.model->params(), one) - 1.0) < 1e-5);
  }
}

TEST_CASE("angular momentum is conserved under central forces") {
  const Hamiltonian central{fields::half_square_norm(Dependence::momentum), fields::central_potential(0.5, 0.1)};
  const StateBatch s0 = state({1.0, 0.0}, {0.0, 1.0});
  const auto drift = noether_drift(angular_momentum(0, 1), single(central, 0.1, 1), nullptr, s0, 100);
  CHECK(drift(0) < 1e-12);
  const StateBatch many = testing::random_states(9, 20, 2);
  CHECK(noether_drift(angular_momentum(0, 1), single(central, 0.1, 1), nullptr, many, 100).maxCoeff() < 1e-12);
}

TEST_CASE("equivariance residual scales with eps and dt") {
  const Hamiltonian h{fields::quartic_kinetic(0.25), fields::central_potential(0.5, 0.2)};
  const ScalarField total = h.total();
  const ScalarField g = angular_momentum(0, 1);
  const StateBatch s = testing::random_states(10, 20, 2);
  const std::vector<double> grid{0.1, 0.05, 0.025};
  for (std::size_t a = 0; a + 1 < grid.size(); ++a)
    for (double other : grid) {
      const Eigen::VectorXd r_eps = testing::equivariance_residual(total, g, grid[a], other, s);
      const Eigen::VectorXd r_eps_half = testing::equivariance_residual(total, g, grid[a + 1], other, s);
      CHECK((r_eps.array() / r_eps_half.array()).minCoeff() >= 1.8);
      const Eigen::VectorXd r_dt = testing::equivariance_residual(total, g, other, grid[a], s);
      const Eigen::VectorXd r_dt_half = testing::equivariance_residual(total, g, other, grid[a + 1], s);
      CHECK((r_dt.array() / r_dt_half.array()).minCoeff() >= 1.8);
    }
  // Quadratic invariant Hamiltonians commute exactly.
  const Eigen::VectorXd zero =
      testing::equivariance_residual(harmonic_oscillator().total(), g, 0.1, 0.1, s);
  CHECK(zero.maxCoeff() < 1e-14);
}

TEST_CASE("energy error stays bounded") {
  const FlowSpec flow = single(harmonic_oscillator(), 0.1, 1);
  const ScalarField h = flow.hamiltonians[0].total();
  StateBatch s = state({1.0, 0.3}, {0.0, -0.5});
  const double h0 = evaluate_field(h, nullptr, s)(0);
  double first_step = 0.0;
  double early = 0.0;
  double overall = 0.0;
  double prev = h0;
  for (int t = 1; t <= 10000; ++t) {
    s = run_flow(flow, nullptr, s, Direction::forward);
    const double ht = evaluate_field(h, nullptr, s)(0);
    first_step = std::max(first_step, t <= 100 ? std::abs(ht - prev) : 0.0);
    if (t <= 1000) early = std::max(early, std::abs(ht - h0));
    overall = std::max(overall, std::abs(ht - h0));
    prev = ht;
  }
  CHECK(overall <= 10.0 * first_step);
  CHECK(overall <= 1.01 * early);
}

TEST_CASE("trajectory CSV layout") {
  const FlowSpec flow = single(harmonic_oscillator(), 0.1, 2);
  const StateBatch s0 = testing::random_states(11, 3, 2);
  const Trajectory traj = integrate(flow, nullptr, s0, 2);
  REQUIRE(traj.states.size() == 5);
  std::ostringstream os;
  write_trajectory_csv(os, traj, flow.hamiltonians[0].total(), {angular_momentum(0, 1)}, nullptr);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "step,q1,q2,p1,p2,H,g1");
  int rows = 0;
  int starts = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.rfind("0,", 0) == 0) ++starts;
  }
  CHECK(rows == 15);
  CHECK(starts == 3);
}

}  // TEST_SUITE
