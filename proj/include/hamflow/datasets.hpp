#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hamflow/dynamics.hpp"

namespace hamflow {

enum class DatasetKind { so2_ring, gaussian_mixture, file };

DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);

/// Synthetic 2-D targets with exact log-densities.
///
/// so2-ring: q = r (cos a, sin a), r ~ N(2, 0.2^2) truncated to r > 0,
///   a ~ U[0, 2 pi). Density in q is N_trunc(r) / (2 pi r).
/// gaussian-mixture: four equal-weight isotropic components, std 0.4,
///   centred at (+-2, +-2).
class Target {
 public:
  explicit Target(DatasetKind kind);

  DatasetKind kind() const { return kind_; }
  int dim() const { return 2; }
  bool has_log_density() const { return kind_ != DatasetKind::file; }

  /// n x 1 exact log-density.
  Matrix log_density(const Matrix& q) const;
  /// count x 2; row r uses counter stream (seed, r).
  Matrix sample(Eigen::Index count, std::uint64_t seed) const;

  /// Mixture centres (4 x 2); empty for other kinds.
  Matrix mode_centers() const;

  static constexpr double kRingRadius = 2.0;
  static constexpr double kRingWidth = 0.2;
  static constexpr double kMixtureOffset = 2.0;
  static constexpr double kMixtureStd = 0.4;

 private:
  DatasetKind kind_;
};

/// Train/test positions. An empty training matrix with `infinite` set means
/// batches are drawn fresh from the target.
struct Dataset {
  DatasetKind kind = DatasetKind::so2_ring;
  Matrix train;
  Matrix test;
  bool infinite = false;
  int dim() const { return static_cast<int>(test.cols()); }
};

/// size = 0 selects the infinite-data regime (train holds a fixed
/// `eval_size` reference draw for reporting train ELBO).
Dataset make_dataset(DatasetKind kind, Eigen::Index size, std::uint64_t seed, Eigen::Index test_size = 2048);

/// Positions from a CSV file (optional header, one row per point); the last
/// `test_fraction` of rows is held out.
Dataset load_dataset(const std::filesystem::path& path, double test_fraction = 0.2);

/// Index of the nearest row of `centers` for each row of `q`.
Eigen::VectorXi nearest_center(const Matrix& q, const Matrix& centers);

}  // namespace hamflow
