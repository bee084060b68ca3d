#include "hamflow/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "hamflow/io.hpp"
#include "hamflow/rng.hpp"
#include "hamflow/symmetry.hpp"

namespace hamflow {

namespace {

void report_config_error(std::ostream& err, const ConfigError& e) {
  err << "error: " << e.what();
  if (!e.field().empty()) err << " [field: " << e.field() << "]";
  err << "\n";
}

std::filesystem::path config_path_for(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".config.json");
  return p;
}

std::vector<std::string> artifact_strings(const std::vector<std::filesystem::path>& files) {
  std::vector<std::string> out;
  for (const auto& f : files) out.push_back(f.string());
  return out;
}

void write_samples_csv(const std::filesystem::path& path, const Matrix& q) {
  std::ostringstream os;
  for (Eigen::Index c = 0; c < q.cols(); ++c) os << (c ? "," : "") << 'q' << (c + 1);
  os << '\n';
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) os << (c ? "," : "") << format_double(q(r, c));
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

std::string kappa_label(double kappa) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", kappa);
  return buf;
}

}  // namespace

std::string config_hash(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

LoadedModel load_checkpoint(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
  const auto cfg_path = config_path_for(checkpoint);
  if (!std::filesystem::exists(cfg_path)) throw ConfigError("checkpoint config not found: " + cfg_path.string());
  LoadedModel m;
  m.config = load_config(cfg_path).config;
  const int dim = m.config.dataset.kind == DatasetKind::file ? dataset_for(m.config).dim() : 2;
  m.model = std::make_unique<FlowModel>(m.config, dim);
  m.model->load(checkpoint);
  return m;
}

nlohmann::json symmetry_report(const FlowModel& model, const GeneratorSet& gens,
                               const std::vector<MetricsRow>& history, std::uint64_t seed) {
  nlohmann::json report = {{"generators", nlohmann::json::array()}};
  if (gens.empty()) return report;
  const StateBatch pi = model.base().sample(1024, derive_seed(seed, "report-penalty"));
  const auto penalty = commutator_penalty(gens, model.flow(), &model.params(), pi);
  const StateBatch starts = model.base().sample(100, derive_seed(seed, "report-drift"));
  const int steps = model.flow().total_steps();
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const Generator& g = gens.generators[k];
    Eigen::VectorXd drift = noether_drift(g.field, model.flow(), &model.params(), starts, steps);
    std::sort(drift.data(), drift.data() + drift.size());
    nlohmann::json slack = nlohmann::json::array();
    nlohmann::json lambda = nlohmann::json::array();
    for (const auto& row : history) {
      slack.push_back({row.step, row.slack.at(k)});
      lambda.push_back({row.step, row.lambda.at(k)});
    }
    report["generators"].push_back({
        {"name", g.field.name},
        {"kappa", g.kappa},
        {"lambda", g.lambda},
        {"penalty", penalty[k]},
        {"drift", {{"steps", steps}, {"median", drift(drift.size() / 2)}, {"max", drift(drift.size() - 1)}}},
        {"slack_history", slack},
        {"lambda_history", lambda},
    });
  }
  return report;
}

int cmd_train(const TrainCommand& c, std::ostream& out, std::ostream& err) {
  const std::string started = iso_timestamp();
  LoadedConfig loaded;
  try {
    loaded = load_config(c.config);
  } catch (const ConfigError& e) {
    report_config_error(err, e);
    return kExitConfig;
  }
  ExperimentConfig cfg = loaded.config;
  if (c.output_dir) cfg.output_dir = *c.output_dir;
  if (c.steps) cfg.steps = *c.steps;
  if (c.seed) cfg.seed = *c.seed;
  if (cfg.steps < 0) {
    err << "error: steps must be non-negative [field: steps]\n";
    return kExitConfig;
  }
  const auto dir = resolve_output_dir(cfg.output_dir);

  TrainOptions opts;
  opts.output_dir = dir;
  opts.on_eval = [&](const MetricsRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "step %6ld  train_elbo %9.4f  test_elbo %9.4f  (%.1fs)\n", r.step, r.train_elbo,
                  r.test_elbo, r.seconds);
    out << buf << std::flush;
  };
  try {
    TrainResult res = train(cfg, opts);
    std::vector<std::filesystem::path> artifacts = res.artifacts;
    const auto report = dir / "symmetry_report.json";
    write_file_atomic(report, symmetry_report(*res.model, res.generators, res.history, cfg.seed).dump(2) + "\n");
    artifacts.push_back(report);
    nlohmann::json manifest = {
        {"version", HAMFLOW_VERSION},
        {"config_path", c.config.string()},
        {"config_hash", config_hash(loaded.text)},
        {"seeds",
         {{"root", cfg.seed},
          {"init", derive_seed(cfg.seed, "init")},
          {"dataset", derive_seed(cfg.seed, "dataset")},
          {"batches", derive_seed(cfg.seed, "batches")},
          {"eval_noise", derive_seed(cfg.seed, "eval-noise")}}},
        {"started", started},
        {"finished", iso_timestamp()},
        {"steps", cfg.steps},
        {"artifacts", artifact_strings(artifacts)},
    };
    write_file_atomic(dir / "run_manifest.json", manifest.dump(2) + "\n");
    out << "wrote " << dir.string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    report_config_error(err, e);
    return kExitConfig;
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << "\n";
    if (!e.dump().empty()) err << "diagnostic dump: " << e.dump().string() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int cmd_eval(const EvalCommand& c, std::ostream& out, std::ostream& err) {
  LoadedModel lm;
  try {
    lm = load_checkpoint(c.checkpoint);
  } catch (const std::exception& e) {
    err << "error: cannot load checkpoint: " << e.what() << "\n";
    return kExitCheckpoint;
  }
  const FlowModel& model = *lm.model;
  const ExperimentConfig& cfg = lm.config;
  const auto dir = c.output_dir ? *c.output_dir : c.checkpoint.parent_path() / "eval";
  try {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    const Dataset ds = dataset_for(cfg);
    const GeneratorSet gens = make_generators(cfg, model.dim());

    if (c.grid) {
      if (model.dim() != 2) throw UnsupportedError("grid export needs d = 2");
      auto files = export_grids(model, ds.test, dir, cfg.export_samples, derive_seed(c.seed, "export"));
      written.insert(written.end(), files.begin(), files.end());
    }
    if (c.samples > 0) {
      write_samples_csv(dir / "samples.csv", model_sample(model.density(), c.samples, derive_seed(c.seed, "samples")));
      written.push_back(dir / "samples.csv");
    }
    if (model.dim() == 2) {
      const std::vector<double> angles = c.invariance_angles.value_or(
          std::vector<double>{std::numbers::pi / 7.0, std::numbers::pi / 3.0, std::numbers::pi / 2.0});
      const Matrix qs = ds.test.topRows(std::min<Eigen::Index>(ds.test.rows(), 1024));
      const Matrix noise = normal_matrix(derive_seed(c.seed, "probe-noise"), qs.rows(), 2);
      std::ostringstream os;
      os << "angle,joint,marginal\n";
      for (double a : angles) {
        const InvarianceProbe p = density_invariance_probe(model.density(), a, qs, noise);
        os << format_double(a) << ',' << format_double(p.joint) << ',' << format_double(p.marginal) << '\n';
      }
      write_file_atomic(dir / "invariance.csv", os.str());
      written.push_back(dir / "invariance.csv");
    }
    {
      const StateBatch s0 = model.base().sample(c.trajectories, derive_seed(c.seed, "trajectory"));
      const Trajectory traj = integrate(model.flow(), &model.params(), s0, c.flow_applications);
      std::ostringstream os;
      write_trajectory_csv(os, traj, model.flow().hamiltonians.front().total(), gens.fields(), &model.params());
      write_file_atomic(dir / "trajectory.csv", os.str());
      written.push_back(dir / "trajectory.csv");
    }
    const auto report = dir / "symmetry_report.json";
    write_file_atomic(report, symmetry_report(model, gens, {}, c.seed).dump(2) + "\n");
    written.push_back(report);
    for (const auto& f : written) out << "wrote " << f.string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    report_config_error(err, e);
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

ExperimentConfig sweep_cell_config(const ExperimentConfig& base, double kappa, long data_size, int seed_index) {
  ExperimentConfig cfg = base;
  cfg.dataset.size = data_size;
  cfg.seed = base.seed + static_cast<std::uint64_t>(seed_index);
  if (kappa == 0.0) {
    cfg.generators.clear();
  } else {
    if (cfg.generators.empty()) cfg.generators.push_back(GeneratorConfig{});
    for (auto& g : cfg.generators) g.kappa = kappa;
  }
  cfg.name = base.name + "_k" + kappa_label(kappa) + "_n" + std::to_string(data_size) + "_s" +
             std::to_string(seed_index);
  return cfg;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<double>& kappas,
                                 const std::vector<long>& data_sizes, int seeds, const std::filesystem::path& root,
                                 std::ostream& log) {
  std::vector<SweepCell> cells;
  for (double kappa : kappas)
    for (long n : data_sizes)
      for (int s = 0; s < seeds; ++s) {
        SweepCell cell;
        cell.kappa = kappa;
        cell.data_size = n;
        cell.seed_index = s;
        ExperimentConfig cfg = sweep_cell_config(base, kappa, n, s);
        cell.directory = root / ("k" + kappa_label(kappa) + "_n" + std::to_string(n) + "_s" + std::to_string(s));
        cfg.output_dir = cell.directory.string();
        log << "cell kappa=" << kappa_label(kappa) << " n=" << n << " seed=" << s << " ... " << std::flush;
        try {
          TrainOptions opts;
          opts.output_dir = cell.directory;
          opts.export_grids = false;
          const TrainResult res = train(cfg, opts);
          cell.ok = true;
          cell.train_elbo = res.history.back().train_elbo;
          cell.test_elbo = res.history.back().test_elbo;
          log << "test_elbo " << cell.test_elbo << "\n";
        } catch (const std::exception& e) {
          cell.error = e.what();
          log << "failed: " << cell.error << "\n";
        }
        cells.push_back(std::move(cell));
      }
  return cells;
}

void write_sweep_summary(std::ostream& os, const std::vector<SweepCell>& cells) {
  os << "kappa,data_size,seeds_ok,seeds_failed,test_elbo_mean,test_elbo_stderr,train_elbo_mean,train_elbo_stderr,"
        "gap_mean,gap_stderr,errors\n";
  std::map<std::pair<double, long>, std::vector<const SweepCell*>> groups;
  std::vector<std::pair<double, long>> order;
  for (const auto& c : cells) {
    const auto key = std::make_pair(c.kappa, c.data_size);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&c);
  }
  for (const auto& key : order) {
    std::vector<double> test, train_v, gap;
    std::string errors;
    int failed = 0;
    for (const SweepCell* c : groups[key]) {
      if (!c->ok) {
        ++failed;
        std::string msg = c->error;
        for (char& ch : msg)
          if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
        errors += (errors.empty() ? "" : "; ") + msg;
        continue;
      }
      test.push_back(c->test_elbo);
      train_v.push_back(c->train_elbo);
      gap.push_back(c->train_elbo - c->test_elbo);
    }
    const auto [tm, ts] = mean_stderr(test);
    const auto [rm, rs] = mean_stderr(train_v);
    const auto [gm, gs] = mean_stderr(gap);
    os << format_double(key.first) << ',' << key.second << ',' << test.size() << ',' << failed << ','
       << format_double(tm) << ',' << format_double(ts) << ',' << format_double(rm) << ',' << format_double(rs) << ','
       << format_double(gm) << ',' << format_double(gs) << ',' << errors << '\n';
  }
}

int cmd_sweep(const SweepCommand& c, std::ostream& out, std::ostream& err) {
  if (c.kappas.empty()) {
    err << "error: --kappa needs at least one value\n";
    return kExitConfig;
  }
  if (c.seeds < 1) {
    err << "error: --seeds must be at least 1\n";
    return kExitConfig;
  }
  for (double k : c.kappas)
    if (!(k >= 0.0)) {
      err << "error: kappa must be >= 0\n";
      return kExitConfig;
    }
  LoadedConfig loaded;
  try {
    loaded = load_config(c.config);
  } catch (const ConfigError& e) {
    report_config_error(err, e);
    return kExitConfig;
  }
  ExperimentConfig base = loaded.config;
  if (c.steps) base.steps = *c.steps;
  const std::vector<long> sizes = c.data_sizes.empty() ? std::vector<long>{base.dataset.size} : c.data_sizes;
  for (long n : sizes)
    if (n < 0) {
      err << "error: data sizes must be >= 0\n";
      return kExitConfig;
    }
  const auto root = resolve_output_dir(c.output_dir.value_or(base.output_dir + "_sweep"));
  std::filesystem::create_directories(root);
  const std::string started = iso_timestamp();
  const auto cells = run_sweep(base, c.kappas, sizes, c.seeds, root, out);

  std::ostringstream summary;
  write_sweep_summary(summary, cells);
  write_file_atomic(root / "summary.csv", summary.str());
  std::ostringstream runs;
  runs << "kappa,data_size,seed_index,status,train_elbo,test_elbo,directory\n";
  for (const auto& cell : cells)
    runs << format_double(cell.kappa) << ',' << cell.data_size << ',' << cell.seed_index << ','
         << (cell.ok ? "ok" : "failed") << ',' << format_double(cell.train_elbo) << ','
         << format_double(cell.test_elbo) << ',' << cell.directory.string() << '\n';
  write_file_atomic(root / "cells.csv", runs.str());
  nlohmann::json manifest = {
      {"version", HAMFLOW_VERSION},
      {"config_path", c.config.string()},
      {"config_hash", config_hash(loaded.text)},
      {"seeds", {{"root", base.seed}, {"count", c.seeds}}},
      {"started", started},
      {"finished", iso_timestamp()},
      {"artifacts", {(root / "summary.csv").string(), (root / "cells.csv").string()}},
  };
  write_file_atomic(root / "sweep_manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << (root / "summary.csv").string() << "\n";
  const bool any_ok = std::any_of(cells.begin(), cells.end(), [](const SweepCell& s) { return s.ok; });
  return any_ok ? kExitOk : kExitSweepFailed;
}

int cmd_sample(const SampleCommand& c, std::ostream& out, std::ostream& err) {
  if (c.count < 1) {
    err << "error: --count must be positive\n";
    return kExitConfig;
  }
  LoadedModel lm;
  try {
    lm = load_checkpoint(c.checkpoint);
  } catch (const std::exception& e) {
    err << "error: cannot load checkpoint: " << e.what() << "\n";
    return kExitCheckpoint;
  }
  try {
    const auto path = c.output ? *c.output : c.checkpoint.parent_path() / "samples.csv";
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_samples_csv(path, model_sample(lm.model->density(), c.count, c.seed));
    out << "wrote " << path.string() << "\n";
    return kExitOk;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace hamflow
