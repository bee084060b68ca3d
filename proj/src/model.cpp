#include "hamflow/model.hpp"

#include <cmath>

#include "hamflow/errors.hpp"
#include "hamflow/rng.hpp"

namespace hamflow {

namespace {

std::vector<int> layer_sizes(int dim, const std::vector<int>& hidden) {
  std::vector<int> out{dim};
  out.insert(out.end(), hidden.begin(), hidden.end());
  out.push_back(1);
  return out;
}

}  // namespace

FlowModel::FlowModel(const ExperimentConfig& cfg, int dim)
    : dim_(dim), params_(std::make_shared<ParamStore>()), base_(make_base(cfg, dim)) {
  const auto sizes = layer_sizes(dim, cfg.networks.hamiltonian_hidden);
  for (int h = 0; h < cfg.flow.hamiltonians; ++h) {
    const std::string tag = "H" + std::to_string(h);
    kinetic_.emplace_back(MlpSpec{sizes, Activation::softplus, tag + ".K"}, *params_);
    potential_.emplace_back(MlpSpec{sizes, Activation::softplus, tag + ".U"}, *params_);
  }
  encoder_ = GaussianEncoder(dim, cfg.networks.encoder_width, *params_, "enc");
  params_->freeze();

  flow_.dt = cfg.flow.dt;
  flow_.leapfrog_steps = cfg.flow.leapfrog_steps;
  for (std::size_t h = 0; h < kinetic_.size(); ++h) {
    const std::shared_ptr<const ParamStore> store = params_;
    Hamiltonian ham;
    ham.kinetic = {kinetic_[h].spec().prefix, Dependence::momentum,
                   [net = kinetic_[h], store](const ad::Expr&, const ad::Expr& p) { return net.apply(p, *store); }};
    ham.potential = {potential_[h].spec().prefix, Dependence::position,
                     [net = potential_[h], store](const ad::Expr& q, const ad::Expr&) { return net.apply(q, *store); }};
    flow_.hamiltonians.push_back(std::move(ham));
  }
  final_scale_ = cfg.networks.final_layer_scale;
}

void FlowModel::initialize(std::uint64_t seed) {
  for (std::size_t h = 0; h < kinetic_.size(); ++h) {
    kinetic_[h].initialize(*params_, derive_seed(seed, "K", h), final_scale_);
    potential_[h].initialize(*params_, derive_seed(seed, "U", h), final_scale_);
  }
  encoder_.initialize(*params_, derive_seed(seed, "encoder"));
  // softplus(b) = 1 at b = ln(e - 1): start with unit encoder scale.
  const auto& sigma = encoder_.scale_net();
  params_->matrix(sigma.bias_entry(sigma.layer_count() - 1)).setConstant(std::log(std::exp(1.0) - 1.0));
}

void FlowModel::load(const std::filesystem::path& path) {
  ParamStore loaded = ParamStore::load(path);
  if (loaded.entry_count() != params_->entry_count())
    throw ConfigError("checkpoint layout does not match the configured model");
  for (std::size_t i = 0; i < loaded.entry_count(); ++i) {
    const auto& a = loaded.entry(i);
    const auto& b = params_->entry(i);
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols)
      throw ConfigError("checkpoint block '" + a.name + "' does not match the configured model");
  }
  std::copy(loaded.values().begin(), loaded.values().end(), params_->values().begin());
  for (const auto& [name, s] : loaded.slots()) params_->slot(name) = s;
}

}  // namespace hamflow
