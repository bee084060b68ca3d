#pragma once

// Finite-difference oracles for the differentiation engine.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "hamflow/autodiff.hpp"
#include "hamflow/networks.hpp"

namespace hamflow::testing {

using ad::Expr;
using ad::Matrix;

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

struct RandomGraph {
  ad::Graph g;
  Expr x;
  Expr y;
};

/// A random smooth scalar function of a 1 x n input with up to `depth`
/// composed operations drawn from every smooth primitive.
inline std::unique_ptr<RandomGraph> random_graph(std::mt19937_64& rng, int n, int depth) {
  auto rg = std::make_unique<RandomGraph>();
  ad::Graph& g = rg->g;
  rg->x = g.input(0, 1, n);
  std::vector<Expr> pool{rg->x};
  std::uniform_int_distribution<int> op_dist(0, 17);
  std::uniform_real_distribution<double> coef(-1.5, 1.5);
  auto pick = [&]() { return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]; };
  const int ops = std::uniform_int_distribution<int>(1, depth)(rng);
  Expr last = rg->x;
  for (int k = 0; k < ops; ++k) {
    const Expr a = last;
    const Expr b = pick();
    Expr out;
    switch (op_dist(rng)) {
      case 0: out = a + b; break;
      case 1: out = a - b; break;
      case 2: out = a * b; break;
      case 3: out = a / (1.0 + ad::square(b)); break;
      case 4: out = -a + coef(rng); break;
      case 5: out = coef(rng) * a; break;
      case 6: out = ad::exp(ad::tanh(a)); break;
      case 7: out = ad::log(0.5 + ad::softplus(a)); break;
      case 8: out = ad::tanh(a); break;
      case 9: out = ad::sigmoid(a); break;
      case 10: out = ad::softplus(a); break;
      case 11: out = ad::square(ad::tanh(a)); break;
      case 12: out = ad::sqrt(0.5 + ad::square(a)); break;
      case 13: {
        Matrix c(n, n);
        for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = coef(rng) / n;
        out = ad::matmul(a, g.constant(c), false, std::uniform_int_distribution<int>(0, 1)(rng) == 1);
        break;
      }
      case 14: {
        Matrix w(n, n);
        Matrix bias(1, n);
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = coef(rng) / n;
        for (Eigen::Index i = 0; i < bias.size(); ++i) bias(i) = coef(rng);
        out = ad::affine(a, g.constant(w), g.constant(bias));
        break;
      }
      case 15: out = ad::broadcast_cols(ad::sum_cols(ad::tanh(a)), n); break;
      case 16: {
        const int j = std::uniform_int_distribution<int>(0, n - 1)(rng);
        const int k2 = std::uniform_int_distribution<int>(0, n - 1)(rng);
        out = a + ad::scatter_col(ad::col(b, j) * ad::col(a, k2), k2, n);
        break;
      }
      default: out = ad::broadcast_rows(ad::sum_rows(a * b), 1); break;
    }
    pool.push_back(out);
    last = out;
  }
  rg->y = ad::sum(last);
  return rg;
}

struct GradErrors {
  double first = 0.0;
  double second = 0.0;
};

/// Compares dy/dx against central differences of y, and the Hessian-vector
/// product d(v . dy/dx)/dx against central differences of dy/dx.
inline GradErrors check_input_derivatives(RandomGraph& rg, const Matrix& x0, const Matrix& v, double h = 1e-5) {
  ad::Graph& g = rg.g;
  const Expr grad = ad::gradient(rg.y, rg.x);
  const Expr hv = ad::gradient(ad::sum(grad * g.constant(v)), rg.x);
  ad::Evaluator ev(g, ad::Bindings{{x0}, nullptr});
  const Matrix ga = ev.value(grad);
  const Matrix hva = ev.value(hv);
  GradErrors e;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Matrix xp = x0, xm = x0;
    xp(i) += h;
    xm(i) -= h;
    ad::Evaluator ep(g, ad::Bindings{{xp}, nullptr});
    ad::Evaluator em(g, ad::Bindings{{xm}, nullptr});
    const double fd = (ep.scalar(rg.y) - em.scalar(rg.y)) / (2.0 * h);
    e.first = std::max(e.first, rel_err(ga(i), fd));
    const double fd2 = ((ep.value(grad) - em.value(grad)).cwiseProduct(v)).sum() / (2.0 * h);
    e.second = std::max(e.second, rel_err(hva(i), fd2));
  }
  return e;
}

/// A softplus MLP Hamiltonian term f(x) on n x d inputs; checks the input
/// gradient against central differences and the parameter gradient of the
/// squared input-gradient norm (the second-order path of the penalty)
/// against central differences in the parameters.
inline GradErrors check_mlp_derivatives(std::mt19937_64& rng, int d, int width, int n, double h = 1e-5) {
  ParamStore store;
  const Mlp mlp(MlpSpec{{d, width, width, 1}, Activation::softplus, "f"}, store);
  store.freeze();
  mlp.initialize(store, rng(), 1.0);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (double& v : store.values()) v += 0.05 * nd(rng);

  Matrix x0(n, d);
  for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = 2.0 * nd(rng);

  ad::Graph g;
  const Expr x = g.input(0, n, d);
  const Expr f = ad::sum(mlp.apply(x, store));
  const Expr gx = ad::gradient(f, x);
  const Expr pen = ad::sum(ad::square(gx));

  GradErrors e;
  {
    ad::Evaluator ev(g, ad::Bindings{{x0}, &store});
    const Matrix ga = ev.value(gx);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      Matrix xp = x0, xm = x0;
      xp(i) += h;
      xm(i) -= h;
      ad::Evaluator ep(g, ad::Bindings{{xp}, &store});
      ad::Evaluator em(g, ad::Bindings{{xm}, &store});
      e.first = std::max(e.first, rel_err(ga(i), (ep.scalar(f) - em.scalar(f)) / (2.0 * h)));
    }
  }
  ad::Evaluator ev(g, ad::Bindings{{x0}, &store});
  const Eigen::VectorXd gp = ad::grad_params(pen, ev);
  std::uniform_int_distribution<std::size_t> idx(0, store.size() - 1);
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = idx(rng);
    const double orig = store.values()[i];
    store.values()[i] = orig + h;
    const double up = ad::evaluate(pen, {x0}, &store);
    store.values()[i] = orig - h;
    const double down = ad::evaluate(pen, {x0}, &store);
    store.values()[i] = orig;
    e.second = std::max(e.second, rel_err(gp(static_cast<Eigen::Index>(i)), (up - down) / (2.0 * h)));
  }
  return e;
}

}  // namespace hamflow::testing
