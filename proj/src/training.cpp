#include "hamflow/training.hpp"

#include <chrono>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "hamflow/io.hpp"
#include "hamflow/optim.hpp"
#include "hamflow/rng.hpp"

namespace hamflow {

ad::Expr elbo(const ModelDensity& m, const ad::Expr& q, const ad::Expr& noise) {
  const auto h = m.encoder.sample(q, noise, *m.params);
  const PhaseState s0 = flow_inverse(m.flow, PhaseState{q, h.p});
  return m.base.log_prob(s0) - h.log_density;
}

LagrangianTerms lagrangian(const ModelDensity& m, const GeneratorSet& gens, const ad::Expr& q, const ad::Expr& noise,
                           const PhaseState& pi_batch) {
  gens.validate();
  LagrangianTerms t;
  t.mean_elbo = (1.0 / static_cast<double>(q.rows())) * ad::sum(elbo(m, q, noise));
  t.loss = -t.mean_elbo;
  if (gens.empty()) return t;
  for (std::size_t k = 0; k < gens.size(); ++k) t.slacks.push_back(q.graph().constant(0.0));
  for (const auto& h : m.flow.hamiltonians) {
    const auto c = commutator_penalty(gens, h, pi_batch);
    for (std::size_t k = 0; k < c.size(); ++k) t.slacks[k] = t.slacks[k] + c[k];
  }
  // Each Hamiltonian's term carries -kappa; keep a single -kappa per generator.
  const double extra = static_cast<double>(m.flow.hamiltonians.size()) - 1.0;
  for (std::size_t k = 0; k < gens.size(); ++k) {
    if (extra > 0.0) t.slacks[k] = t.slacks[k] + extra * gens.generators[k].kappa;
    if (gens.generators[k].lambda != 0.0) t.loss = t.loss + gens.generators[k].lambda * t.slacks[k];
  }
  return t;
}

Matrix elbo_values(const ModelDensity& m, const Matrix& q, std::uint64_t noise_seed, Eigen::Index chunk) {
  const Matrix noise = normal_matrix(noise_seed, q.rows(), q.cols());
  Matrix out(q.rows(), 1);
  for (Eigen::Index start = 0; start < q.rows(); start += chunk) {
    const Eigen::Index n = std::min(chunk, q.rows() - start);
    ad::Graph g;
    const ad::Expr qe = g.input(0, n, q.cols());
    const ad::Expr ze = g.input(1, n, q.cols());
    const ad::Expr e = elbo(m, qe, ze);
    ad::Evaluator ev(g, ad::Bindings{{q.middleRows(start, n), noise.middleRows(start, n)}, m.params});
    out.middleRows(start, n) = ev.value(e);
  }
  return out;
}

double mean_elbo(const ModelDensity& m, const Matrix& q, std::uint64_t noise_seed) {
  return elbo_values(m, q, noise_seed).mean();
}

void write_metrics_header(std::ostream& os, std::size_t generators) {
  os << "step,train_elbo,test_elbo";
  for (std::size_t k = 0; k < generators; ++k) os << ",slack_" << (k + 1);
  for (std::size_t k = 0; k < generators; ++k) os << ",lambda_" << (k + 1);
  os << ",seconds\n";
}

void write_metrics_row(std::ostream& os, const MetricsRow& row) {
  os << row.step << ',' << format_double(row.train_elbo) << ',' << format_double(row.test_elbo);
  for (double v : row.slack) os << ',' << format_double(v);
  for (double v : row.lambda) os << ',' << format_double(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, ",%.3f\n", row.seconds);
  os << buf;
}

Dataset dataset_for(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == DatasetKind::file) return load_dataset(cfg.dataset.path);
  return make_dataset(cfg.dataset.kind, cfg.dataset.size, derive_seed(cfg.seed, "dataset"), cfg.dataset.test_size);
}

namespace {

// Reshuffled passes over a finite training set, or fresh target draws.
class BatchSource {
 public:
  BatchSource(const Dataset& ds, int batch, std::uint64_t seed)
      : ds_(ds), batch_(batch), seed_(seed), target_(ds.kind) {}

  Matrix next(long step) {
    if (ds_.infinite) return target_.sample(batch_, derive_seed(seed_, "batch", static_cast<std::uint64_t>(step)));
    const Eigen::Index n = ds_.train.rows();
    Matrix out(batch_, ds_.train.cols());
    for (Eigen::Index r = 0; r < batch_; ++r) {
      if (cursor_ >= order_.size()) reshuffle();
      out.row(r) = ds_.train.row(order_[cursor_++]);
    }
    (void)n;
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(static_cast<std::size_t>(ds_.train.rows()));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    CounterRng rng(derive_seed(seed_, "shuffle"), epoch_++);
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.next_u64() % i]);
    cursor_ = 0;
  }

  const Dataset& ds_;
  int batch_;
  std::uint64_t seed_;
  Target target_;
  std::vector<Eigen::Index> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  retain_heap_memory();

  TrainResult res;
  res.dataset = dataset_for(cfg);
  const int d = res.dataset.dim();
  res.model = std::make_unique<FlowModel>(cfg, d);
  FlowModel& model = *res.model;
  model.initialize(derive_seed(cfg.seed, "init"));
  res.generators = make_generators(cfg, d);
  GeneratorSet& gens = res.generators;
  const ModelDensity density = model.density();

  std::ofstream metrics;
  const bool to_disk = !opts.output_dir.empty();
  if (to_disk) {
    std::filesystem::create_directories(opts.output_dir);
    metrics.open(opts.output_dir / "metrics.csv", std::ios::trunc);
    if (!metrics) throw ConfigError("cannot write metrics in " + opts.output_dir.string(), "output_dir");
    write_metrics_header(metrics, gens.size());
    metrics.flush();
    res.artifacts.push_back(opts.output_dir / "metrics.csv");
  }

  Adam adam(cfg.optimizer.adam);
  std::vector<double> slack_ema(gens.size(), 0.0);
  BatchSource batches(res.dataset, cfg.optimizer.batch_size, derive_seed(cfg.seed, "batches"));
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval-noise");
  const Matrix train_eval = res.dataset.train.topRows(std::min<Eigen::Index>(res.dataset.train.rows(), 2048));

  auto checkpoint = [&](const std::string& stem) {
    if (!to_disk) return;
    const auto bin = opts.output_dir / (stem + ".hfps");
    const auto js = opts.output_dir / (stem + ".config.json");
    model.save(bin);
    write_file_atomic(js, to_json(cfg).dump(2) + "\n");
    for (const auto& p : {bin, js})
      if (std::find(res.artifacts.begin(), res.artifacts.end(), p) == res.artifacts.end()) res.artifacts.push_back(p);
  };

  auto evaluate = [&](long step) {
    MetricsRow row;
    row.step = step;
    row.train_elbo = mean_elbo(density, train_eval, eval_seed);
    row.test_elbo = mean_elbo(density, res.dataset.test, eval_seed);
    row.slack = slack_ema;
    for (const auto& g : gens.generators) row.lambda.push_back(g.lambda);
    row.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    res.history.push_back(row);
    if (to_disk) {
      write_metrics_row(metrics, row);
      metrics.flush();
    }
    if (opts.on_eval) opts.on_eval(row);
  };

  evaluate(0);
  for (long step = 1; step <= cfg.steps; ++step) {
    const Matrix q = batches.next(step);
    const Matrix noise = normal_matrix(derive_seed(cfg.seed, "noise", static_cast<std::uint64_t>(step)), q.rows(), d);
    StateBatch pi_batch;
    if (!gens.empty())
      pi_batch = model.base().sample(cfg.penalty_batch, derive_seed(cfg.seed, "pi", static_cast<std::uint64_t>(step)));

    std::vector<double> slack(gens.size(), 0.0);
    Eigen::VectorXd grads;
    try {
      ad::Graph g;
      const ad::Expr qe = g.input(0, q.rows(), d);
      const ad::Expr ze = g.input(1, q.rows(), d);
      ad::Bindings b{{q, noise}, &model.params()};
      PhaseState pis;
      if (!gens.empty()) {
        pis = {g.input(2, cfg.penalty_batch, d), g.input(3, cfg.penalty_batch, d)};
        b.inputs.push_back(pi_batch.q);
        b.inputs.push_back(pi_batch.p);
      }
      const LagrangianTerms terms = lagrangian(density, gens, qe, ze, pis);
      ad::Evaluator ev(g, std::move(b));
      ev.value(terms.loss);
      for (std::size_t k = 0; k < gens.size(); ++k) slack[k] = ev.scalar(terms.slacks[k]);
      grads = ad::grad_params(terms.loss, ev);
      if (!grads.allFinite()) throw NumericError("non-finite parameter gradient");
    } catch (const NumericError& e) {
      std::filesystem::path dump;
      if (to_disk) {
        dump = opts.output_dir / "nan_dump.json";
        nlohmann::json j = {{"step", step}, {"error", e.what()}, {"batch", matrix_json(q)}, {"noise", matrix_json(noise)}};
        write_file_atomic(dump, j.dump(1) + "\n");
      }
      throw TrainingAborted("training aborted at step " + std::to_string(step) + ": " + e.what(), dump);
    }

    adam.step(model.params(), std::span<const double>(grads.data(), static_cast<std::size_t>(grads.size())));
    if (!gens.empty()) {
      update_slack_ema(slack_ema, slack, cfg.lambda.ema);
      lambda_ascent(gens, slack_ema, cfg.lambda.rate);
    }
    if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate(step);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) checkpoint("checkpoint");
  }

  checkpoint("checkpoint");
  if (to_disk && opts.export_grids && d == 2) {
    const Matrix target = res.dataset.test;
    auto files = export_grids(model, target, opts.output_dir, cfg.export_samples, derive_seed(cfg.seed, "export"));
    res.artifacts.insert(res.artifacts.end(), files.begin(), files.end());
  }
  return res;
}

std::vector<std::filesystem::path> export_grids(const FlowModel& model, const Matrix& target_samples,
                                                const std::filesystem::path& dir, int sample_count,
                                                std::uint64_t seed, const GridSpec& grid) {
  if (model.dim() != 2) return {};
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  auto write = [&](const std::string& name, const Grid& g) {
    std::ostringstream os;
    write_grid_csv(os, g);
    write_file_atomic(dir / name, os.str());
    out.push_back(dir / name);
  };
  write("target_kde.csv", kde_grid(target_samples, grid));
  write("model_kde.csv", kde_grid(model_sample(model.density(), sample_count, seed), grid));

  const ParamStore* params = &model.params();
  auto summed = [&](bool potential) {
    return [&, potential](const Matrix& pts) {
      Matrix acc = Matrix::Zero(pts.rows(), 1);
      for (const auto& h : model.flow().hamiltonians) {
        const StateBatch s{pts, pts};
        acc += evaluate_field(potential ? h.potential : h.kinetic, params, s);
      }
      return acc;
    };
  };
  write("potential_U.csv", field_grid(summed(true), grid));
  write("kinetic_K.csv", field_grid(summed(false), grid));
  return out;
}

}  // namespace hamflow
