#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>

#include "hamflow/dynamics.hpp"
#include "hamflow/networks.hpp"
#include "hamflow/rng.hpp"

namespace hamflow {

enum class BaseKind { spherical_normal, soft_uniform };

/// Base density pi(s) on the 2d-dimensional phase space.
///
/// The soft-uniform density is a product over coordinates of
///   f(beta (x + sigma/2)) f(-beta (x - sigma/2)) / Z,  f = sigmoid,
/// a smoothed box of width sigma. Z is computed once by adaptive Simpson
/// quadrature.
class BaseDensity {
 public:
  static BaseDensity spherical_normal(int dim);
  static BaseDensity soft_uniform(int dim, double sigma, double beta);

  BaseKind kind() const { return kind_; }
  /// d, the position dimension; the state has 2d coordinates.
  int dim() const { return dim_; }
  double sigma() const { return sigma_; }
  double beta() const { return beta_; }
  /// ln Z of one soft-uniform coordinate (0 for the normal).
  double coordinate_log_normalizer() const { return log_z_; }

  /// ln pi(q, p), n x 1.
  ad::Expr log_prob(const PhaseState& s) const;
  /// ln of the q-marginal (exact: the density factorizes over coordinates).
  ad::Expr position_log_prob(const ad::Expr& q) const;

  Matrix log_prob(const StateBatch& s) const;
  Matrix position_log_prob(const Matrix& q) const;

  /// I.i.d. draws; sample r uses the counter stream (seed, r).
  StateBatch sample(Eigen::Index count, std::uint64_t seed) const;

  /// Fraction of proposals accepted by the soft-uniform rejection sampler
  /// (box [-sigma, sigma] per coordinate); 1 for the normal.
  double acceptance_rate() const;

 private:
  ad::Expr coordinate_log_density(const ad::Expr& x) const;  // unnormalized, elementwise
  double coordinate_draw(CounterRng& rng) const;

  BaseKind kind_ = BaseKind::spherical_normal;
  int dim_ = 0;
  double sigma_ = 0.0;
  double beta_ = 0.0;
  double log_z_ = 0.0;
};

/// Adaptive Simpson quadrature on [a, b] to absolute tolerance `tol`.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol, int max_depth = 50);

/// ln of the unnormalized soft-uniform coordinate density.
double soft_uniform_log_kernel(double x, double sigma, double beta);

/// ln Z of one soft-uniform coordinate, by quadrature over a range that
/// holds all but a negligible tail.
double soft_uniform_log_normalizer(double sigma, double beta);

/// Normalizing flow of momentum-augmented states plus its variational
/// encoder. Joint density: ln p(s) = ln pi(flow_inverse(s)).
struct ModelDensity {
  FlowSpec flow;
  BaseDensity base;
  GaussianEncoder encoder;
  const ParamStore* params = nullptr;
};

ad::Expr model_joint_log_prob(const ModelDensity& m, const PhaseState& s);
Matrix model_joint_log_prob(const ModelDensity& m, const StateBatch& s);

/// s0 ~ pi pushed through the forward flow; returns q_n only (n x d).
Matrix model_sample(const ModelDensity& m, Eigen::Index count, std::uint64_t seed);

struct GridSpec {
  double x_min = -4.0;
  double x_max = 4.0;
  double y_min = -4.0;
  double y_max = 4.0;
  int nx = 101;
  int ny = 101;

  double dx() const { return (x_max - x_min) / (nx - 1); }
  double dy() const { return (y_max - y_min) / (ny - 1); }
  double x(int i) const { return x_min + i * dx(); }
  double y(int j) const { return y_min + j * dy(); }
};

/// values(i, j) at (x(i), y(j)).
struct Grid {
  GridSpec spec;
  Matrix values;
};

/// Scott's rule per axis: h_j = N^(-1/6) std_j.
Eigen::Vector2d scott_bandwidth(const Matrix& samples);

/// Gaussian product-kernel density estimate of 2-D samples on the grid,
/// rescaled so that sum(values) dx dy = 1.
Grid kde_grid(const Matrix& samples, const GridSpec& grid, std::optional<Eigen::Vector2d> bandwidth = std::nullopt);

/// Scalar function of 2-D points evaluated on a grid (for U(q), K(p)).
Grid field_grid(const std::function<Matrix(const Matrix& points)>& f, const GridSpec& grid);

/// CSV with header x,y,value; x varies slowest.
void write_grid_csv(std::ostream& os, const Grid& g);

}  // namespace hamflow
