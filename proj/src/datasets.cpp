#include "hamflow/datasets.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "hamflow/errors.hpp"
#include "hamflow/rng.hpp"

namespace hamflow {

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "so2-ring") return DatasetKind::so2_ring;
  if (name == "gaussian-mixture") return DatasetKind::gaussian_mixture;
  if (name == "file") return DatasetKind::file;
  throw ConfigError("unknown dataset kind '" + name + "'", "dataset.kind");
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::so2_ring: return "so2-ring";
    case DatasetKind::gaussian_mixture: return "gaussian-mixture";
    case DatasetKind::file: return "file";
  }
  return "?";
}

Target::Target(DatasetKind kind) : kind_(kind) {}

Matrix Target::mode_centers() const {
  if (kind_ != DatasetKind::gaussian_mixture) return {};
  Matrix c(4, 2);
  const double a = kMixtureOffset;
  c << a, a, -a, a, -a, -a, a, -a;
  return c;
}

Matrix Target::log_density(const Matrix& q) const {
  if (q.cols() != 2) throw ContractError("Target: positions must be 2-D");
  Matrix out(q.rows(), 1);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  switch (kind_) {
    case DatasetKind::so2_ring: {
      // Truncation to r > 0 removes Phi(-R/w) of the radial mass.
      const double log_keep = std::log(0.5 * std::erfc(-kRingRadius / kRingWidth / std::numbers::sqrt2));
      for (Eigen::Index r = 0; r < q.rows(); ++r) {
        const double rad = q.row(r).norm();
        const double z = (rad - kRingRadius) / kRingWidth;
        out(r, 0) = -0.5 * z * z - 0.5 * log2pi - std::log(kRingWidth) - log_keep - std::log(2.0 * std::numbers::pi * rad);
      }
      break;
    }
    case DatasetKind::gaussian_mixture: {
      const Matrix c = mode_centers();
      const double s2 = kMixtureStd * kMixtureStd;
      for (Eigen::Index r = 0; r < q.rows(); ++r) {
        double terms[4];
        double top = -INFINITY;
        for (int k = 0; k < 4; ++k) {
          const double d2 = (q.row(r) - c.row(k)).squaredNorm();
          terms[k] = std::log(0.25) - log2pi - std::log(s2) - 0.5 * d2 / s2;
          top = std::max(top, terms[k]);
        }
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - top);
        out(r, 0) = top + std::log(acc);
      }
      break;
    }
    case DatasetKind::file:
      throw UnsupportedError("file datasets have no known log-density");
  }
  return out;
}

Matrix Target::sample(Eigen::Index count, std::uint64_t seed) const {
  Matrix out(count, 2);
  const Matrix c = mode_centers();
  for (Eigen::Index r = 0; r < count; ++r) {
    CounterRng rng(seed, static_cast<std::uint64_t>(r));
    switch (kind_) {
      case DatasetKind::so2_ring: {
        double rad = -1.0;
        while (rad <= 0.0) rad = kRingRadius + kRingWidth * rng.normal();
        const double a = 2.0 * std::numbers::pi * rng.uniform();
        out(r, 0) = rad * std::cos(a);
        out(r, 1) = rad * std::sin(a);
        break;
      }
      case DatasetKind::gaussian_mixture: {
        const auto k = static_cast<Eigen::Index>(rng.next_u64() % 4);
        out(r, 0) = c(k, 0) + kMixtureStd * rng.normal();
        out(r, 1) = c(k, 1) + kMixtureStd * rng.normal();
        break;
      }
      case DatasetKind::file:
        throw UnsupportedError("file datasets cannot be sampled");
    }
  }
  return out;
}

Dataset make_dataset(DatasetKind kind, Eigen::Index size, std::uint64_t seed, Eigen::Index test_size) {
  if (kind == DatasetKind::file) throw ConfigError("file datasets are loaded with load_dataset", "dataset.kind");
  if (size < 0) throw ConfigError("dataset size must be >= 0", "dataset.size");
  const Target t(kind);
  Dataset ds;
  ds.kind = kind;
  ds.infinite = size == 0;
  // Disjoint streams: train and test never share a counter key.
  ds.train = t.sample(ds.infinite ? test_size : size, derive_seed(seed, "train"));
  ds.test = t.sample(test_size, derive_seed(seed, "test"));
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, double test_fraction) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open dataset file " + path.string(), "dataset.path");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header
      throw ConfigError("dataset file: non-numeric row " + std::to_string(rows.size() + 1), "dataset.path");
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw ConfigError("dataset file: ragged row " + std::to_string(rows.size() + 1), "dataset.path");
    rows.push_back(std::move(vals));
  }
  if (rows.size() < 2) throw ConfigError("dataset file: needs at least two rows", "dataset.path");
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto n_test = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(test_fraction * n)));
  Dataset ds;
  ds.kind = DatasetKind::file;
  ds.train.resize(n - n_test, d);
  ds.test.resize(n_test, d);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < d; ++c) {
      const double v = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (r < n - n_test) ds.train(r, c) = v;
      else ds.test(r - (n - n_test), c) = v;
    }
  return ds;
}

Eigen::VectorXi nearest_center(const Matrix& q, const Matrix& centers) {
  Eigen::VectorXi out(q.rows());
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    Eigen::Index best = 0;
    (centers.rowwise() - q.row(r)).rowwise().squaredNorm().minCoeff(&best);
    out(r) = static_cast<int>(best);
  }
  return out;
}

}  // namespace hamflow
