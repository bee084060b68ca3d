#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hamflow/autodiff.hpp"
#include "hamflow/param_store.hpp"

namespace hamflow {

enum class Activation { softplus, relu };

struct MlpSpec {
  std::vector<int> layers;  // e.g. {d, 128, 128, 1}
  Activation activation = Activation::softplus;
  std::string prefix;
};

/// Dense network with `activation` between layers and a linear output layer.
/// Weights are stored as out x in blocks "<prefix>.w<k>", biases as 1 x out
/// blocks "<prefix>.b<k>".
class Mlp {
 public:
  Mlp() = default;
  /// Registers the layer blocks in `store`.
  Mlp(MlpSpec spec, ParamStore& store);

  const MlpSpec& spec() const { return spec_; }
  int input_dim() const { return spec_.layers.front(); }
  int output_dim() const { return spec_.layers.back(); }
  std::size_t layer_count() const { return weights_.size(); }

  /// x: n x input_dim -> n x output_dim.
  ad::Expr apply(const ad::Expr& x, const ParamStore& store) const;

  /// Xavier-normal weights for softplus nets, He-normal for relu nets, zero
  /// biases; the last layer's weights are multiplied by `final_scale`.
  void initialize(ParamStore& store, std::uint64_t seed, double final_scale = 1.0) const;

  std::size_t weight_entry(std::size_t layer) const { return weights_.at(layer); }
  std::size_t bias_entry(std::size_t layer) const { return biases_.at(layer); }

 private:
  MlpSpec spec_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

/// Free-function form of Mlp::apply for a spec already registered in `store`.
ad::Expr mlp_apply(const MlpSpec& spec, const ad::Expr& x, const ParamStore& store);

inline constexpr double kEncoderScaleFloor = 1e-3;

/// Diagonal Gaussian h(p | q) = N(p; mu(q), sigma(q)) with disjoint relu
/// networks for the mean and for the raw scale; sigma = softplus(raw) + floor.
class GaussianEncoder {
 public:
  GaussianEncoder() = default;
  GaussianEncoder(int dim, int width, ParamStore& store, const std::string& prefix = "enc");

  struct Sample {
    ad::Expr p;            // n x d
    ad::Expr log_density;  // n x 1
    ad::Expr mean;         // n x d
    ad::Expr scale;        // n x d
  };

  /// Reparameterized draw p = mu(q) + sigma(q) * noise together with
  /// ln h(p | q) = sum_i [-ln(2 pi)/2 - ln sigma_i - noise_i^2 / 2].
  Sample sample(const ad::Expr& q, const ad::Expr& noise, const ParamStore& store) const;

  void initialize(ParamStore& store, std::uint64_t seed) const;

  const Mlp& mean_net() const { return mean_; }
  const Mlp& scale_net() const { return scale_; }
  int dim() const { return dim_; }

 private:
  int dim_ = 0;
  Mlp mean_;
  Mlp scale_;
};

}  // namespace hamflow
