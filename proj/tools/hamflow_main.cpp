#include <iostream>

#include <CLI11.hpp>

#include "hamflow/commands.hpp"

int main(int argc, char** argv) {
  using namespace hamflow;
  CLI::App app{"Hamiltonian flow density models with symmetry constraints"};
  app.set_version_flag("--version", HAMFLOW_VERSION);
  app.require_subcommand(1);

  TrainCommand train;
  std::string train_out;
  long train_steps = -1;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train a model from a JSON config");
  t->add_option("config", train.config, "Experiment config (JSON)")->required();
  auto* t_out = t->add_option("--output-dir", train_out, "Override output_dir");
  auto* t_steps = t->add_option("--steps", train_steps, "Override steps")->check(CLI::NonNegativeNumber);
  auto* t_seed = t->add_option("--seed", train_seed, "Override the root seed");

  EvalCommand eval;
  std::string eval_out;
  std::vector<double> angles;
  auto* e = app.add_subcommand("eval", "Export grids, samples, invariance probe and trajectories");
  e->add_option("checkpoint", eval.checkpoint, "Checkpoint file (.hfps)")->required();
  e->add_flag("--grid", eval.grid, "Write target/model KDE and U/K grids");
  e->add_option("--samples", eval.samples, "Write N model samples")->check(CLI::NonNegativeNumber);
  auto* e_angles = e->add_option("--invariance-angles", angles, "Rotation angles in radians")->delimiter(',');
  e->add_option("--trajectories", eval.trajectories, "Trajectories to export")->check(CLI::PositiveNumber);
  e->add_option("--flow-applications", eval.flow_applications, "Flow applications per trajectory")
      ->check(CLI::PositiveNumber);
  e->add_option("--seed", eval.seed, "Seed for sampling");
  auto* e_out = e->add_option("--output-dir", eval_out, "Output directory (default <checkpoint dir>/eval)");

  SweepCommand sweep;
  std::string sweep_out;
  long sweep_steps = -1;
  auto* s = app.add_subcommand("sweep", "Train a kappa x data-size x seed grid and summarize");
  s->add_option("config", sweep.config, "Base experiment config (JSON)")->required();
  s->add_option("--kappa", sweep.kappas, "Constraint precisions; 0 means unconstrained")
      ->delimiter(',')
      ->required()
      ->allow_extra_args(false);
  s->add_option("--data-sizes", sweep.data_sizes, "Training set sizes; 0 means infinite data")->delimiter(',');
  s->add_option("--seeds", sweep.seeds, "Seeds per cell");
  auto* s_out = s->add_option("--output-dir", sweep_out, "Sweep root directory");
  auto* s_steps = s->add_option("--steps", sweep_steps, "Override steps")->check(CLI::NonNegativeNumber);

  SampleCommand sample;
  std::string sample_out;
  auto* m = app.add_subcommand("sample", "Draw positions from a trained model");
  m->add_option("checkpoint", sample.checkpoint, "Checkpoint file (.hfps)")->required();
  m->add_option("--count", sample.count, "Number of samples");
  m->add_option("--seed", sample.seed, "Sampling seed");
  auto* m_out = m->add_option("--output", sample_out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : kExitConfig;
  }

  if (t->parsed()) {
    if (*t_out) train.output_dir = train_out;
    if (*t_steps) train.steps = train_steps;
    if (*t_seed) train.seed = train_seed;
    return cmd_train(train, std::cout, std::cerr);
  }
  if (e->parsed()) {
    if (*e_out) eval.output_dir = eval_out;
    if (*e_angles) eval.invariance_angles = angles;
    return cmd_eval(eval, std::cout, std::cerr);
  }
  if (s->parsed()) {
    if (*s_out) sweep.output_dir = sweep_out;
    if (*s_steps) sweep.steps = sweep_steps;
    return cmd_sweep(sweep, std::cout, std::cerr);
  }
  if (*m_out) sample.output = sample_out;
  return cmd_sample(sample, std::cout, std::cerr);
}
