#include "hamflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hamflow/errors.hpp"
#include "hamflow/symmetry.hpp"

namespace hamflow {

using nlohmann::json;

namespace {

// Walks one JSON object, rejecting unknown keys and type mismatches with
// the dotted path of the field.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + " must be an object", path_);
  }

  void keys(std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, _] : j_.items())
      if (!ok.count(k)) throw ConfigError("unknown field '" + where(k) + "'", where(k));
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  double number(const char* key, double def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError("field '" + where(key) + "' must be a number", where(key));
    return v.get<double>();
  }

  long integer(const char* key, long def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError("field '" + where(key) + "' must be an integer", where(key));
    return v.get<long>();
  }

  std::string string(const char* key, const std::string& def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError("field '" + where(key) + "' must be a string", where(key));
    return v.get<std::string>();
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& at(const char* key) const { return j_.at(key); }

 private:
  const json& j_;
  std::string path_;
};

void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError("field '" + field + "' " + msg, field);
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  const Section root(j, "");
  root.keys({"name", "dataset", "base_density", "networks", "flow", "generators", "optimizer", "lambda",
             "penalty_batch", "steps", "eval_every", "checkpoint_every", "export_samples", "seed", "output_dir"});
  if (!root.has("dataset")) throw ConfigError("missing required field 'dataset'", "dataset");
  c.name = root.string("name", c.name);

  {
    const Section s(root.at("dataset"), "dataset");
    s.keys({"kind", "size", "path", "test_size"});
    if (!s.has("kind")) throw ConfigError("missing required field 'dataset.kind'", "dataset.kind");
    c.dataset.kind = parse_dataset_kind(s.string("kind", ""));
    c.dataset.size = s.integer("size", 0);
    c.dataset.path = s.string("path", "");
    c.dataset.test_size = s.integer("test_size", c.dataset.test_size);
    require(c.dataset.size >= 0, "dataset.size", "must be >= 0 (0 means infinite data)");
    require(c.dataset.test_size > 0, "dataset.test_size", "must be positive");
    require(c.dataset.kind != DatasetKind::file || !c.dataset.path.empty(), "dataset.path",
            "is required for file datasets");
  }

  if (root.has("base_density")) {
    const Section s(root.at("base_density"), "base_density");
    s.keys({"kind", "sigma", "beta"});
    const std::string kind = s.string("kind", "spherical-normal");
    if (kind == "spherical-normal") c.base.kind = BaseKind::spherical_normal;
    else if (kind == "soft-uniform") c.base.kind = BaseKind::soft_uniform;
    else throw ConfigError("unknown base density '" + kind + "'", "base_density.kind");
    c.base.sigma = s.number("sigma", c.base.sigma);
    c.base.beta = s.number("beta", c.base.beta);
    require(c.base.sigma > 0, "base_density.sigma", "must be positive");
    require(c.base.beta > 0, "base_density.beta", "must be positive");
  }

  if (root.has("networks")) {
    const Section s(root.at("networks"), "networks");
    s.keys({"hamiltonian_hidden", "encoder_width", "final_layer_scale"});
    if (s.has("hamiltonian_hidden")) {
      const json& h = s.at("hamiltonian_hidden");
      require(h.is_array() && !h.empty(), "networks.hamiltonian_hidden", "must be a non-empty array");
      c.networks.hamiltonian_hidden.clear();
      for (const auto& v : h) {
        require(v.is_number_integer() && v.get<int>() > 0, "networks.hamiltonian_hidden",
                "must hold positive integers");
        c.networks.hamiltonian_hidden.push_back(v.get<int>());
      }
    }
    c.networks.encoder_width = static_cast<int>(s.integer("encoder_width", c.networks.encoder_width));
    c.networks.final_layer_scale = s.number("final_layer_scale", c.networks.final_layer_scale);
    require(c.networks.encoder_width > 0, "networks.encoder_width", "must be positive");
    require(c.networks.final_layer_scale > 0, "networks.final_layer_scale", "must be positive");
  }

  if (root.has("flow")) {
    const Section s(root.at("flow"), "flow");
    s.keys({"dt", "leapfrog_steps", "hamiltonians"});
    c.flow.dt = s.number("dt", c.flow.dt);
    c.flow.leapfrog_steps = static_cast<int>(s.integer("leapfrog_steps", c.flow.leapfrog_steps));
    c.flow.hamiltonians = static_cast<int>(s.integer("hamiltonians", c.flow.hamiltonians));
    require(c.flow.dt > 0, "flow.dt", "must be positive");
    require(c.flow.leapfrog_steps >= 1, "flow.leapfrog_steps", "must be >= 1");
    require(c.flow.hamiltonians >= 1, "flow.hamiltonians", "must be >= 1");
  }

  if (root.has("generators")) {
    const json& gs = root.at("generators");
    require(gs.is_array(), "generators", "must be an array");
    for (std::size_t k = 0; k < gs.size(); ++k) {
      const std::string path = "generators[" + std::to_string(k) + "]";
      const Section s(gs[k], path);
      s.keys({"kind", "i", "j", "matrix", "kappa", "lambda_init"});
      GeneratorConfig g;
      g.kind = s.string("kind", g.kind);
      g.i = static_cast<int>(s.integer("i", g.i));
      g.j = static_cast<int>(s.integer("j", g.j));
      g.kappa = s.number("kappa", g.kappa);
      g.lambda_init = s.number("lambda_init", g.lambda_init);
      require(g.kind == "angular-momentum" || g.kind == "quadratic", path + ".kind",
              "must be 'angular-momentum' or 'quadratic'");
      require(g.kappa >= 0, path + ".kappa", "must be >= 0");
      require(g.lambda_init >= 0, path + ".lambda_init", "must be >= 0");
      if (g.kind == "quadratic") {
        require(s.has("matrix") && s.at("matrix").is_array(), path + ".matrix", "is required for quadratic generators");
        for (const auto& row : s.at("matrix")) {
          require(row.is_array(), path + ".matrix", "must be an array of rows");
          std::vector<double> r;
          for (const auto& v : row) {
            require(v.is_number(), path + ".matrix", "must hold numbers");
            r.push_back(v.get<double>());
          }
          g.matrix.push_back(std::move(r));
        }
      }
      c.generators.push_back(std::move(g));
    }
  }

  if (root.has("optimizer")) {
    const Section s(root.at("optimizer"), "optimizer");
    s.keys({"learning_rate", "beta1", "beta2", "eps", "batch_size"});
    c.optimizer.adam.learning_rate = s.number("learning_rate", c.optimizer.adam.learning_rate);
    c.optimizer.adam.beta1 = s.number("beta1", c.optimizer.adam.beta1);
    c.optimizer.adam.beta2 = s.number("beta2", c.optimizer.adam.beta2);
    c.optimizer.adam.eps = s.number("eps", c.optimizer.adam.eps);
    c.optimizer.batch_size = static_cast<int>(s.integer("batch_size", c.optimizer.batch_size));
    require(c.optimizer.adam.learning_rate > 0, "optimizer.learning_rate", "must be positive");
    require(c.optimizer.adam.beta1 >= 0 && c.optimizer.adam.beta1 < 1, "optimizer.beta1", "must be in [0, 1)");
    require(c.optimizer.adam.beta2 >= 0 && c.optimizer.adam.beta2 < 1, "optimizer.beta2", "must be in [0, 1)");
    require(c.optimizer.adam.eps > 0, "optimizer.eps", "must be positive");
    require(c.optimizer.batch_size > 0, "optimizer.batch_size", "must be positive");
  }

  if (root.has("lambda")) {
    const Section s(root.at("lambda"), "lambda");
    s.keys({"rate", "ema"});
    c.lambda.rate = s.number("rate", c.lambda.rate);
    c.lambda.ema = s.number("ema", c.lambda.ema);
    require(c.lambda.rate > 0, "lambda.rate", "must be positive");
    require(c.lambda.ema >= 0 && c.lambda.ema < 1, "lambda.ema", "must be in [0, 1)");
  }

  c.penalty_batch = static_cast<int>(root.integer("penalty_batch", c.penalty_batch));
  c.steps = root.integer("steps", c.steps);
  c.eval_every = static_cast<int>(root.integer("eval_every", c.eval_every));
  c.checkpoint_every = root.integer("checkpoint_every", c.checkpoint_every);
  c.export_samples = static_cast<int>(root.integer("export_samples", c.export_samples));
  if (root.has("seed")) {
    const json& v = root.at("seed");
    require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), "seed",
            "must be a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  }
  c.output_dir = root.string("output_dir", c.output_dir);
  require(c.penalty_batch > 0, "penalty_batch", "must be positive");
  require(c.steps >= 0, "steps", "must be >= 0");
  require(c.eval_every > 0, "eval_every", "must be positive");
  require(c.checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  require(c.export_samples > 0, "export_samples", "must be positive");
  require(!c.output_dir.empty(), "output_dir", "must not be empty");
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["dataset"] = {{"kind", to_string(c.dataset.kind)}, {"size", c.dataset.size}, {"test_size", c.dataset.test_size}};
  if (!c.dataset.path.empty()) j["dataset"]["path"] = c.dataset.path;
  j["base_density"] = {{"kind", c.base.kind == BaseKind::spherical_normal ? "spherical-normal" : "soft-uniform"},
                       {"sigma", c.base.sigma},
                       {"beta", c.base.beta}};
  j["networks"] = {{"hamiltonian_hidden", c.networks.hamiltonian_hidden},
                   {"encoder_width", c.networks.encoder_width},
                   {"final_layer_scale", c.networks.final_layer_scale}};
  j["flow"] = {{"dt", c.flow.dt}, {"leapfrog_steps", c.flow.leapfrog_steps}, {"hamiltonians", c.flow.hamiltonians}};
  j["generators"] = json::array();
  for (const auto& g : c.generators) {
    json gj = {{"kind", g.kind}, {"kappa", g.kappa}, {"lambda_init", g.lambda_init}};
    if (g.kind == "quadratic") gj["matrix"] = g.matrix;
    else {
      gj["i"] = g.i;
      gj["j"] = g.j;
    }
    j["generators"].push_back(gj);
  }
  j["optimizer"] = {{"learning_rate", c.optimizer.adam.learning_rate}, {"beta1", c.optimizer.adam.beta1},
                    {"beta2", c.optimizer.adam.beta2},                 {"eps", c.optimizer.adam.eps},
                    {"batch_size", c.optimizer.batch_size}};
  j["lambda"] = {{"rate", c.lambda.rate}, {"ema", c.lambda.ema}};
  j["penalty_batch"] = c.penalty_batch;
  j["steps"] = c.steps;
  j["eval_every"] = c.eval_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["export_samples"] = c.export_samples;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string(), "<file>");
  std::stringstream ss;
  ss << is.rdbuf();
  LoadedConfig out;
  out.text = ss.str();
  json j;
  try {
    j = json::parse(out.text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what(), "<root>");
  }
  out.config = parse_config(j);
  return out;
}

GeneratorSet make_generators(const ExperimentConfig& c, int dim) {
  GeneratorSet gens;
  for (std::size_t k = 0; k < c.generators.size(); ++k) {
    const auto& g = c.generators[k];
    const std::string path = "generators[" + std::to_string(k) + "]";
    Generator out;
    out.kappa = g.kappa;
    out.lambda = g.lambda_init;
    if (g.kind == "angular-momentum") {
      if (g.i < 0 || g.j < 0 || g.i >= dim || g.j >= dim || g.i == g.j)
        throw ConfigError("generator indices out of range for d = " + std::to_string(dim), path + ".i");
      out.field = angular_momentum(g.i, g.j);
    } else {
      if (static_cast<int>(g.matrix.size()) != dim)
        throw ConfigError("quadratic generator matrix must be d x d", path + ".matrix");
      Matrix a(dim, dim);
      for (int r = 0; r < dim; ++r) {
        if (static_cast<int>(g.matrix[static_cast<std::size_t>(r)].size()) != dim)
          throw ConfigError("quadratic generator matrix must be d x d", path + ".matrix");
        for (int col = 0; col < dim; ++col) a(r, col) = g.matrix[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
      }
      out.field = quadratic_generator(a);
    }
    gens.generators.push_back(std::move(out));
  }
  return gens;
}

BaseDensity make_base(const ExperimentConfig& c, int dim) {
  return c.base.kind == BaseKind::spherical_normal ? BaseDensity::spherical_normal(dim)
                                                   : BaseDensity::soft_uniform(dim, c.base.sigma, c.base.beta);
}

}  // namespace hamflow
