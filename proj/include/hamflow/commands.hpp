#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hamflow/config.hpp"
#include "hamflow/training.hpp"

namespace hamflow {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitCheckpoint = 4,
  kExitSweepFailed = 5,
};

struct TrainCommand {
  std::filesystem::path config;
  std::optional<std::string> output_dir;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
};

struct EvalCommand {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> output_dir;  // default: <checkpoint dir>/eval
  bool grid = false;
  long samples = 0;
  std::optional<std::vector<double>> invariance_angles;  // default: pi/7, pi/3, pi/2
  int trajectories = 16;
  int flow_applications = 10;
  std::uint64_t seed = 7;
};

struct SweepCommand {
  std::filesystem::path config;
  std::vector<double> kappas;
  std::vector<long> data_sizes;
  int seeds = 1;
  std::optional<std::string> output_dir;
  std::optional<long> steps;
};

struct SampleCommand {
  std::filesystem::path checkpoint;
  long count = 1000;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> output;  // default: <checkpoint dir>/samples.csv
};

int cmd_train(const TrainCommand& c, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalCommand& c, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepCommand& c, std::ostream& out, std::ostream& err);
int cmd_sample(const SampleCommand& c, std::ostream& out, std::ostream& err);

/// A trained model reloaded from `<stem>.hfps` and its `<stem>.config.json`.
struct LoadedModel {
  ExperimentConfig config;
  std::unique_ptr<FlowModel> model;
};

/// Throws ConfigError when either file is missing, corrupt or inconsistent.
LoadedModel load_checkpoint(const std::filesystem::path& checkpoint);

/// Config with one SO(2)-style constraint at precision kappa; kappa = 0
/// removes every generator (the unconstrained model).
ExperimentConfig sweep_cell_config(const ExperimentConfig& base, double kappa, long data_size, int seed_index);

struct SweepCell {
  double kappa = 0.0;
  long data_size = 0;
  int seed_index = 0;
  bool ok = false;
  std::string error;
  double train_elbo = 0.0;
  double test_elbo = 0.0;
  std::filesystem::path directory;
};

/// Trains every (kappa, size, seed) cell sequentially under `root`.
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<double>& kappas,
                                 const std::vector<long>& data_sizes, int seeds, const std::filesystem::path& root,
                                 std::ostream& log);

/// Summary CSV: one row per (kappa, data_size) with mean and standard error
/// over successful seeds.
void write_sweep_summary(std::ostream& os, const std::vector<SweepCell>& cells);

/// Generator diagnostics: current penalty, Noether drift along the learned
/// flow, and slack / lambda history.
nlohmann::json symmetry_report(const FlowModel& model, const GeneratorSet& gens,
                               const std::vector<MetricsRow>& history, std::uint64_t seed);

/// FNV-1a of the config text as 16 hex digits.
std::string config_hash(const std::string& text);

}  // namespace hamflow
