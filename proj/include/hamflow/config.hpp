#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hamflow/datasets.hpp"
#include "hamflow/densities.hpp"
#include "hamflow/optim.hpp"

namespace hamflow {

struct DatasetConfig {
  DatasetKind kind = DatasetKind::so2_ring;
  long size = 0;  // 0 = infinite data
  std::string path;
  long test_size = 2048;
};

struct BaseConfig {
  BaseKind kind = BaseKind::spherical_normal;
  double sigma = 4.0;
  double beta = 5.0;
};

struct NetworkConfig {
  std::vector<int> hamiltonian_hidden{128, 128};
  int encoder_width = 128;
  double final_layer_scale = 0.01;
};

struct FlowConfig {
  double dt = 0.5;
  int leapfrog_steps = 2;
  int hamiltonians = 1;
};

struct GeneratorConfig {
  std::string kind = "angular-momentum";  // or "quadratic"
  int i = 0;
  int j = 1;
  std::vector<std::vector<double>> matrix;  // for "quadratic"
  double kappa = 0.0;
  double lambda_init = 1.0;
};

struct OptimizerConfig {
  AdamSettings adam;
  int batch_size = 128;
};

struct LambdaConfig {
  double rate = 0.01;
  double ema = 0.99;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  BaseConfig base;
  NetworkConfig networks;
  FlowConfig flow;
  std::vector<GeneratorConfig> generators;
  OptimizerConfig optimizer;
  LambdaConfig lambda;
  int penalty_batch = 256;
  long steps = 20000;
  int eval_every = 250;
  long checkpoint_every = 0;  // 0: final checkpoint only
  int export_samples = 10000;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/experiment";
};

/// Parses and validates; violations raise ConfigError whose field() is the
/// JSON path of the offending entry (e.g. "flow.dt").
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

struct LoadedConfig {
  ExperimentConfig config;
  std::string text;  // raw file contents, hashed into the run manifest
};
LoadedConfig load_config(const std::filesystem::path& path);

/// Generator set described by the config, with lambda at its initial value.
GeneratorSet make_generators(const ExperimentConfig& c, int dim);
BaseDensity make_base(const ExperimentConfig& c, int dim);

}  // namespace hamflow
