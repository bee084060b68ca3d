#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gradcheck.hpp"
#include "hamflow/errors.hpp"
#include "hamflow/networks.hpp"
#include "hamflow/rng.hpp"

using namespace hamflow;
using ad::Expr;
using ad::Matrix;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

// Zeroes every weight of the encoder and sets constant outputs
// mu = mean, sigma = scale through the final biases.
void constant_encoder(const GaussianEncoder& enc, ParamStore& store, double mean, double scale) {
  for (double& v : store.values()) v = 0.0;
  const auto last = enc.mean_net().layer_count() - 1;
  store.matrix(enc.mean_net().bias_entry(last)).setConstant(mean);
  store.matrix(enc.scale_net().bias_entry(last)).setConstant(inverse_softplus(scale - kEncoderScaleFloor));
}

struct EncoderRun {
  Matrix p, log_density, mean, scale;
};

EncoderRun run_encoder(const GaussianEncoder& enc, const ParamStore& store, const Matrix& q, const Matrix& noise) {
  ad::Graph g;
  const auto s = enc.sample(g.input(0, q.rows(), q.cols()), g.input(1, noise.rows(), noise.cols()), store);
  ad::Evaluator ev(g, {{q, noise}, &store});
  return {ev.value(s.p), ev.value(s.log_density), ev.value(s.mean), ev.value(s.scale)};
}

}  // namespace

TEST_SUITE("networks") {

TEST_CASE("mlp_apply examples") {
  ParamStore store;
  const MlpSpec spec{{2, 4, 4, 1}, Activation::softplus, "u"};
  const Mlp mlp(spec, store);
  store.freeze();
  ad::Graph g;
  const Expr x = g.input(0, 3, 2);
  const Matrix xs = Matrix::Random(3, 2);
  CHECK(ad::Evaluator(g, {{xs}, &store}).value(mlp_apply(spec, x, store)).isZero());

  ParamStore one;
  const MlpSpec lin{{1, 1}, Activation::softplus, "lin"};
  const Mlp l(lin, one);
  one.freeze();
  one.matrix(l.weight_entry(0))(0, 0) = 1.0;
  ad::Graph g2;
  CHECK(ad::evaluate(ad::sum(l.apply(g2.input(0, 1, 1), one)), {Matrix::Constant(1, 1, 2.0)}, &one) == 2.0);
}

TEST_CASE("mlp_apply rejects a wrong input width") {
  ParamStore store;
  const Mlp mlp(MlpSpec{{2, 4, 1}, Activation::softplus, "u"}, store);
  store.freeze();
  ad::Graph g;
  CHECK_THROWS_AS(mlp.apply(g.input(0, 3, 3), store), ContractError);
}

TEST_CASE("softplus network gradients match finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 3; ++trial) {
    const auto e = testing::check_mlp_derivatives(rng, 2, 16, 5);
    CHECK(e.first < 1e-6);
    CHECK(e.second < 1e-4);
  }
}

TEST_CASE("initialization scales the final layer") {
  ParamStore store;
  const Mlp mlp(MlpSpec{{2, 64, 64, 1}, Activation::softplus, "u"}, store);
  store.freeze();
  mlp.initialize(store, 4, 0.01);
  const auto hidden = store.matrix(mlp.weight_entry(1));
  const auto last = store.matrix(mlp.weight_entry(2));
  // Xavier-normal: variance 2 / (fan_in + fan_out).
  const double var = hidden.array().square().mean();
  CHECK(var == doctest::Approx(2.0 / 128.0).epsilon(0.15));
  CHECK(last.array().abs().maxCoeff() < 0.01 * 5.0 * std::sqrt(2.0 / 65.0));
  CHECK(store.matrix(mlp.bias_entry(0)).isZero());
}

TEST_CASE("encoder_sample examples") {
  ParamStore store;
  const GaussianEncoder enc(2, 8, store);
  store.freeze();
  const Matrix q = Matrix::Random(1, 2);

  constant_encoder(enc, store, 0.0, 1.0);
  auto r = run_encoder(enc, store, q, Matrix::Zero(1, 2));
  CHECK(r.p.isZero());
  CHECK(r.log_density(0) == doctest::Approx(-1.837877).epsilon(1e-6));

  r = run_encoder(enc, store, q, (Matrix(1, 2) << 1.0, 0.0).finished());
  CHECK(r.p(0) == doctest::Approx(1.0));
  CHECK(r.p(1) == doctest::Approx(0.0));
  CHECK(r.log_density(0) == doctest::Approx(-2.337877).epsilon(1e-6));

  constant_encoder(enc, store, 2.0, 0.5);
  r = run_encoder(enc, store, q, Matrix::Zero(1, 2));
  CHECK(r.p(0) == doctest::Approx(2.0));
  CHECK(r.p(1) == doctest::Approx(2.0));
  CHECK(r.log_density(0) == doctest::Approx(-1.8378770664093453 - 2.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("encoder scale keeps its floor") {
  ParamStore store;
  const GaussianEncoder enc(2, 8, store);
  store.freeze();
  for (double& v : store.values()) v = 0.0;
  store.matrix(enc.scale_net().bias_entry(enc.scale_net().layer_count() - 1)).setConstant(-800.0);
  const auto r = run_encoder(enc, store, Matrix::Random(4, 2), Matrix::Random(4, 2));
  CHECK((r.scale.array() >= kEncoderScaleFloor).all());
  CHECK(r.log_density.allFinite());
}

TEST_CASE("encoder log-density is self-consistent") {
  ParamStore store;
  const GaussianEncoder enc(2, 16, store);
  store.freeze();
  enc.initialize(store, 3);
  std::normal_distribution<double> nd;
  std::mt19937_64 rng(1);
  for (double& v : store.values()) v += 0.1 * nd(rng);
  const Matrix q = normal_matrix(1, 50, 2);
  const Matrix noise = normal_matrix(2, 50, 2);
  const auto r = run_encoder(enc, store, q, noise);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double lp = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double z = (r.p(i, j) - r.mean(i, j)) / r.scale(i, j);
      lp += -kHalfLog2Pi - std::log(r.scale(i, j)) - 0.5 * z * z;
    }
    CHECK(r.log_density(i) == doctest::Approx(lp).epsilon(1e-12));
  }
}

TEST_CASE("pathwise gradients agree with score-function estimates") {
  // Constant encoder: mu = b_mu, sigma = softplus(b_sigma) + floor. The test
  // objective is E_h[sum_i p_i^2].
  ParamStore store;
  const GaussianEncoder enc(2, 4, store);
  store.freeze();
  constant_encoder(enc, store, 0.7, 1.3);
  const auto last = enc.mean_net().layer_count() - 1;
  const auto mu_entry = enc.mean_net().bias_entry(last);
  const auto raw_entry = enc.scale_net().bias_entry(last);

  const Eigen::Index n = 10000;
  const Matrix q = Matrix::Zero(n, 2);
  const Matrix noise = normal_matrix(99, n, 2);
  ad::Graph g;
  const auto s = enc.sample(g.input(0, n, 2), g.input(1, n, 2), store);
  const Expr obj = (1.0 / n) * ad::sum(ad::square(s.p));
  ad::Evaluator ev(g, {{q, noise}, &store});
  const Eigen::VectorXd gp = ad::grad_params(obj, ev);
  const Matrix p = ev.value(s.p);

  const double mu = 0.7;
  const double raw = store.matrix(raw_entry)(0, 0);
  const double sigma = 1.3;
  const double dsigma_draw = 1.0 / (1.0 + std::exp(-raw));
  const auto& entry_mu = store.entry(mu_entry);
  const auto& entry_raw = store.entry(raw_entry);
  for (int j = 0; j < 2; ++j) {
    Eigen::ArrayXd f = p.array().square().rowwise().sum();
    const Eigen::ArrayXd z = (p.col(j).array() - mu) / sigma;
    const Eigen::ArrayXd score_mu = f * z / sigma;
    const Eigen::ArrayXd score_raw = f * (z.square() - 1.0) / sigma * dsigma_draw;
    auto check = [&](const Eigen::ArrayXd& sc, double pathwise) {
      const double m = sc.mean();
      const double se = std::sqrt((sc - m).square().sum() / (n - 1) / n);
      CHECK(std::abs(pathwise - m) < 3.0 * se);
    };
    check(score_mu, gp(static_cast<Eigen::Index>(entry_mu.offset) + j));
    check(score_raw, gp(static_cast<Eigen::Index>(entry_raw.offset) + j));
  }
}

}  // TEST_SUITE
