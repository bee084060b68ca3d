#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace hamflow {

/// Counter-based generator: every draw is a pure function of
/// (key, counter), so a stream keyed by (seed, sample index) yields the
/// same numbers no matter how work is partitioned.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over bytes; stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

/// Sub-seed for a named purpose, derived from the root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index);

/// rows x cols standard normals; row r drawn from stream (seed, r).
Eigen::MatrixXd normal_matrix(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols);

}  // namespace hamflow
