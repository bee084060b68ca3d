#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "hamflow/config.hpp"
#include "hamflow/datasets.hpp"
#include "hamflow/errors.hpp"
#include "hamflow/model.hpp"

namespace hamflow {

/// Single-sample ELBO per row of q, n x 1:
///   p = mu(q) + sigma(q) noise,  s0 = flow_inverse(q, p),
///   ELBO = ln pi(s0) - ln h(p | q).
ad::Expr elbo(const ModelDensity& m, const ad::Expr& q, const ad::Expr& noise);

struct LagrangianTerms {
  ad::Expr loss;                 // -mean ELBO + sum_k lambda_k C_k
  ad::Expr mean_elbo;            // 1 x 1
  std::vector<ad::Expr> slacks;  // C_k, one 1 x 1 per generator
};

/// lambda is read from `gens` and enters as a constant.
LagrangianTerms lagrangian(const ModelDensity& m, const GeneratorSet& gens, const ad::Expr& q, const ad::Expr& noise,
                           const PhaseState& pi_batch);

/// Per-point ELBO estimates (n x 1), evaluated in chunks; noise row r comes
/// from the counter stream (noise_seed, r).
Matrix elbo_values(const ModelDensity& m, const Matrix& q, std::uint64_t noise_seed, Eigen::Index chunk = 512);
double mean_elbo(const ModelDensity& m, const Matrix& q, std::uint64_t noise_seed);

struct MetricsRow {
  long step = 0;
  double train_elbo = 0.0;
  double test_elbo = 0.0;
  std::vector<double> slack;   // running average of C_k
  std::vector<double> lambda;
  double seconds = 0.0;
};

/// Metrics CSV: step,train_elbo,test_elbo,slack_1..K,lambda_1..K,seconds.
void write_metrics_header(std::ostream& os, std::size_t generators);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::filesystem::path dump) : NumericError(what), dump_(std::move(dump)) {}
  const std::filesystem::path& dump() const { return dump_; }

 private:
  std::filesystem::path dump_;
};

struct TrainOptions {
  /// Empty: keep everything in memory.
  std::filesystem::path output_dir;
  bool export_grids = true;
  std::function<void(const MetricsRow&)> on_eval;
};

struct TrainResult {
  std::unique_ptr<FlowModel> model;
  GeneratorSet generators;
  Dataset dataset;
  std::vector<MetricsRow> history;
  std::vector<std::filesystem::path> artifacts;
};

Dataset dataset_for(const ExperimentConfig& cfg);

/// Alternates an Adam step on the encoder and Hamiltonian parameters with a
/// multiplier ascent step, evaluating every `eval_every` steps. With an
/// output directory it writes metrics.csv, checkpoint.hfps,
/// checkpoint.config.json and (optionally) the export grids.
TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts = {});

/// Writes target_kde.csv, model_kde.csv, potential_U.csv and kinetic_K.csv
/// (d = 2 only; returns nothing otherwise).
std::vector<std::filesystem::path> export_grids(const FlowModel& model, const Matrix& target_samples,
                                                const std::filesystem::path& dir, int sample_count,
                                                std::uint64_t seed, const GridSpec& grid = {});

}  // namespace hamflow
