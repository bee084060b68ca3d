#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "hamflow/config.hpp"
#include "hamflow/densities.hpp"
#include "hamflow/networks.hpp"
#include "hamflow/symmetry.hpp"

namespace hamflow {

/// Learned Hamiltonian flow: a chain of separable Hamiltonians with softplus
/// MLPs for K(p) and U(q), a relu Gaussian encoder, and a base density.
/// Owns its ParamStore; the fields it hands out share that store.
class FlowModel {
 public:
  FlowModel(const ExperimentConfig& cfg, int dim);
  FlowModel(const FlowModel&) = delete;
  FlowModel& operator=(const FlowModel&) = delete;
  FlowModel(FlowModel&&) = default;
  FlowModel& operator=(FlowModel&&) = default;

  /// Random initialization derived from `seed`. K and U output layers are
  /// scaled by the config's final_layer_scale so the initial flow is
  /// near-identity; the encoder starts with sigma(q) close to 1.
  void initialize(std::uint64_t seed);

  int dim() const { return dim_; }
  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }

  const FlowSpec& flow() const { return flow_; }
  const BaseDensity& base() const { return base_; }
  const GaussianEncoder& encoder() const { return encoder_; }
  ModelDensity density() const { return {flow_, base_, encoder_, params_.get()}; }

  const Mlp& kinetic_net(std::size_t h) const { return kinetic_.at(h); }
  const Mlp& potential_net(std::size_t h) const { return potential_.at(h); }

  void save(const std::filesystem::path& path) const { params_->save(path); }
  /// Replaces parameter values with those of a checkpoint; the layout must
  /// match this model exactly.
  void load(const std::filesystem::path& path);

 private:
  int dim_;
  std::shared_ptr<ParamStore> params_;
  std::vector<Mlp> kinetic_;
  std::vector<Mlp> potential_;
  GaussianEncoder encoder_;
  BaseDensity base_;
  FlowSpec flow_;
  double final_scale_ = 0.01;
};

}  // namespace hamflow
