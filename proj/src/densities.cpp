#include "hamflow/densities.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "hamflow/errors.hpp"
#include "hamflow/rng.hpp"

namespace hamflow {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                    double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol, int max_depth) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

double soft_uniform_log_kernel(double x, double sigma, double beta) {
  // ln f(z) = -softplus(-z)
  return -softplus(-beta * (x + 0.5 * sigma)) - softplus(beta * (x - 0.5 * sigma));
}

double soft_uniform_log_normalizer(double sigma, double beta) {
  // Beyond 40/beta past the edges the kernel is below e^-40.
  const double half = 0.5 * sigma + 40.0 / beta;
  auto k = [=](double x) { return std::exp(soft_uniform_log_kernel(x, sigma, beta)); };
  // Split at the edges so the initial sampling sees the shoulders.
  const double e = 0.5 * sigma;
  const double z = adaptive_simpson(k, -half, -e, 1e-11) + adaptive_simpson(k, -e, e, 1e-11) +
                   adaptive_simpson(k, e, half, 1e-11);
  return std::log(z);
}

BaseDensity BaseDensity::spherical_normal(int dim) {
  if (dim < 1) throw ContractError("BaseDensity: dimension must be positive");
  BaseDensity b;
  b.kind_ = BaseKind::spherical_normal;
  b.dim_ = dim;
  return b;
}

BaseDensity BaseDensity::soft_uniform(int dim, double sigma, double beta) {
  if (dim < 1) throw ContractError("BaseDensity: dimension must be positive");
  if (!(sigma > 0.0) || !(beta > 0.0)) throw ContractError("BaseDensity: soft-uniform needs sigma > 0 and beta > 0");
  BaseDensity b;
  b.kind_ = BaseKind::soft_uniform;
  b.dim_ = dim;
  b.sigma_ = sigma;
  b.beta_ = beta;
  b.log_z_ = soft_uniform_log_normalizer(sigma, beta);
  return b;
}

ad::Expr BaseDensity::coordinate_log_density(const ad::Expr& x) const {
  return -ad::softplus(-beta_ * (x + 0.5 * sigma_)) - ad::softplus(beta_ * (x - 0.5 * sigma_));
}

ad::Expr BaseDensity::position_log_prob(const ad::Expr& q) const {
  if (q.cols() != dim_) throw ContractError("BaseDensity: position has wrong dimension");
  if (kind_ == BaseKind::spherical_normal) return -0.5 * ad::sum_cols(ad::square(q)) - 0.5 * dim_ * kLog2Pi;
  return ad::sum_cols(coordinate_log_density(q)) - dim_ * log_z_;
}

ad::Expr BaseDensity::log_prob(const PhaseState& s) const {
  if (s.p.cols() != dim_) throw ContractError("BaseDensity: momentum has wrong dimension");
  return position_log_prob(s.q) + position_log_prob(s.p);
}

Matrix BaseDensity::log_prob(const StateBatch& s) const {
  ad::Graph g;
  const PhaseState st{g.input(0, s.q.rows(), s.q.cols()), g.input(1, s.p.rows(), s.p.cols())};
  const ad::Expr lp = log_prob(st);
  ad::Evaluator ev(g, ad::Bindings{{s.q, s.p}, nullptr});
  return ev.value(lp);
}

Matrix BaseDensity::position_log_prob(const Matrix& q) const {
  ad::Graph g;
  const ad::Expr lp = position_log_prob(g.input(0, q.rows(), q.cols()));
  ad::Evaluator ev(g, ad::Bindings{{q}, nullptr});
  return ev.value(lp);
}

double BaseDensity::coordinate_draw(CounterRng& rng) const {
  const double log_peak = soft_uniform_log_kernel(0.0, sigma_, beta_);
  for (;;) {
    const double x = sigma_ * (2.0 * rng.uniform() - 1.0);
    if (std::log(rng.uniform()) <= soft_uniform_log_kernel(x, sigma_, beta_) - log_peak) return x;
  }
}

StateBatch BaseDensity::sample(Eigen::Index count, std::uint64_t seed) const {
  StateBatch s{Matrix(count, dim_), Matrix(count, dim_)};
  for (Eigen::Index r = 0; r < count; ++r) {
    CounterRng rng(seed, static_cast<std::uint64_t>(r));
    for (int i = 0; i < dim_; ++i) s.q(r, i) = kind_ == BaseKind::spherical_normal ? rng.normal() : coordinate_draw(rng);
    for (int i = 0; i < dim_; ++i) s.p(r, i) = kind_ == BaseKind::spherical_normal ? rng.normal() : coordinate_draw(rng);
  }
  return s;
}

double BaseDensity::acceptance_rate() const {
  if (kind_ == BaseKind::spherical_normal) return 1.0;
  // Accepted mass inside the box over the envelope's mass.
  auto k = [=, this](double x) { return std::exp(soft_uniform_log_kernel(x, sigma_, beta_)); };
  const double inside = adaptive_simpson(k, -sigma_, sigma_, 1e-11);
  return inside / (2.0 * sigma_ * std::exp(soft_uniform_log_kernel(0.0, sigma_, beta_)));
}

// ---------------------------------------------------------------------------

ad::Expr model_joint_log_prob(const ModelDensity& m, const PhaseState& s) {
  return m.base.log_prob(flow_inverse(m.flow, s));
}

Matrix model_joint_log_prob(const ModelDensity& m, const StateBatch& s) {
  return m.base.log_prob(run_flow(m.flow, m.params, s, Direction::inverse));
}

Matrix model_sample(const ModelDensity& m, Eigen::Index count, std::uint64_t seed) {
  const StateBatch s0 = m.base.sample(count, seed);
  return run_flow(m.flow, m.params, s0, Direction::forward).q;
}

// ---------------------------------------------------------------------------

Eigen::Vector2d scott_bandwidth(const Matrix& samples) {
  if (samples.rows() < 2 || samples.cols() != 2) throw ContractError("scott_bandwidth: need >= 2 samples in 2-D");
  const double n = static_cast<double>(samples.rows());
  const Eigen::RowVector2d mean = samples.colwise().mean();
  const Eigen::RowVector2d var = (samples.rowwise() - mean).array().square().colwise().sum() / (n - 1.0);
  return (var.array().sqrt() * std::pow(n, -1.0 / 6.0)).transpose();
}

Grid kde_grid(const Matrix& samples, const GridSpec& grid, std::optional<Eigen::Vector2d> bandwidth) {
  if (samples.rows() == 0) throw ContractError("kde_grid: empty sample set");
  if (samples.cols() != 2) throw ContractError("kde_grid: samples must be 2-D");
  if (grid.nx < 2 || grid.ny < 2) throw ContractError("kde_grid: grid needs at least 2 points per axis");
  const Eigen::Vector2d h = bandwidth ? *bandwidth : scott_bandwidth(samples);
  if (!(h(0) > 0.0) || !(h(1) > 0.0)) throw ContractError("kde_grid: bandwidth must be positive");
  const Eigen::Index n = samples.rows();

  auto axis_kernel = [&](int axis, int points, auto coord) {
    Matrix k(n, points);
    const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * h(axis));
    for (int i = 0; i < points; ++i) {
      const double c = coord(i);
      k.col(i) = (norm * (-0.5 * ((samples.col(axis).array() - c) / h(axis)).square()).exp()).matrix();
    }
    return k;
  };
  const Matrix kx = axis_kernel(0, grid.nx, [&](int i) { return grid.x(i); });
  const Matrix ky = axis_kernel(1, grid.ny, [&](int j) { return grid.y(j); });

  Grid out{grid, Matrix(grid.nx, grid.ny)};
  out.values.noalias() = kx.transpose() * ky;
  out.values /= static_cast<double>(n);
  const double mass = out.values.sum() * grid.dx() * grid.dy();
  if (mass > 0.0) out.values /= mass;
  return out;
}

Grid field_grid(const std::function<Matrix(const Matrix& points)>& f, const GridSpec& grid) {
  Matrix pts(static_cast<Eigen::Index>(grid.nx) * grid.ny, 2);
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.ny; ++j) {
      pts(i * grid.ny + j, 0) = grid.x(i);
      pts(i * grid.ny + j, 1) = grid.y(j);
    }
  const Matrix v = f(pts);
  if (v.rows() != pts.rows() || v.cols() != 1) throw ContractError("field_grid: field must return one value per point");
  Grid out{grid, Matrix(grid.nx, grid.ny)};
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.ny; ++j) out.values(i, j) = v(i * grid.ny + j, 0);
  return out;
}

void write_grid_csv(std::ostream& os, const Grid& g) {
  os << "x,y,value\n";
  char buf[96];
  for (int i = 0; i < g.spec.nx; ++i)
    for (int j = 0; j < g.spec.ny; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", g.spec.x(i), g.spec.y(j), g.values(i, j));
      os << buf;
    }
}

}  // namespace hamflow
