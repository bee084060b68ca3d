#include "hamflow/networks.hpp"

#include <cmath>
#include <numbers>

#include "hamflow/errors.hpp"
#include "hamflow/rng.hpp"

namespace hamflow {

Mlp::Mlp(MlpSpec spec, ParamStore& store) : spec_(std::move(spec)) {
  if (spec_.layers.size() < 2) throw ContractError("Mlp '" + spec_.prefix + "': needs at least two layer sizes");
  for (int s : spec_.layers)
    if (s <= 0) throw ContractError("Mlp '" + spec_.prefix + "': layer sizes must be positive");
  for (std::size_t k = 0; k + 1 < spec_.layers.size(); ++k) {
    const auto k_str = std::to_string(k);
    weights_.push_back(store.add(spec_.prefix + ".w" + k_str, spec_.layers[k + 1], spec_.layers[k]));
    biases_.push_back(store.add(spec_.prefix + ".b" + k_str, 1, spec_.layers[k + 1]));
  }
}

ad::Expr Mlp::apply(const ad::Expr& x, const ParamStore& store) const {
  if (x.cols() != input_dim())
    throw ContractError("Mlp '" + spec_.prefix + "': input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(input_dim()));
  ad::Graph& g = x.graph();
  ad::Expr h = x;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    h = ad::affine(h, g.parameter(store, weights_[k]), g.parameter(store, biases_[k]));
    if (k + 1 < weights_.size()) h = spec_.activation == Activation::softplus ? ad::softplus(h) : ad::relu(h);
  }
  return h;
}

void Mlp::initialize(ParamStore& store, std::uint64_t seed, double final_scale) const {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    auto w = store.matrix(weights_[k]);
    const double fan_in = static_cast<double>(w.cols());
    const double fan_out = static_cast<double>(w.rows());
    double std_dev = spec_.activation == Activation::relu ? std::sqrt(2.0 / fan_in) : std::sqrt(2.0 / (fan_in + fan_out));
    if (k + 1 == weights_.size()) std_dev *= final_scale;
    w = std_dev * normal_matrix(derive_seed(seed, spec_.prefix, k), w.rows(), w.cols());
    store.matrix(biases_[k]).setZero();
  }
}

ad::Expr mlp_apply(const MlpSpec& spec, const ad::Expr& x, const ParamStore& store) {
  if (x.cols() != spec.layers.front())
    throw ContractError("mlp_apply: input width does not match first layer size");
  ad::Graph& g = x.graph();
  ad::Expr h = x;
  for (std::size_t k = 0; k + 1 < spec.layers.size(); ++k) {
    const auto k_str = std::to_string(k);
    h = ad::affine(h, g.parameter(store, spec.prefix + ".w" + k_str), g.parameter(store, spec.prefix + ".b" + k_str));
    if (k + 2 < spec.layers.size()) h = spec.activation == Activation::softplus ? ad::softplus(h) : ad::relu(h);
  }
  return h;
}

GaussianEncoder::GaussianEncoder(int dim, int width, ParamStore& store, const std::string& prefix)
    : dim_(dim),
      mean_(MlpSpec{{dim, width, width, dim}, Activation::relu, prefix + ".mu"}, store),
      scale_(MlpSpec{{dim, width, width, dim}, Activation::relu, prefix + ".sigma"}, store) {}

GaussianEncoder::Sample GaussianEncoder::sample(const ad::Expr& q, const ad::Expr& noise,
                                                const ParamStore& store) const {
  if (noise.cols() != dim_ || noise.rows() != q.rows())
    throw ContractError("encoder_sample: noise must be n x " + std::to_string(dim_));
  Sample s;
  s.mean = mean_.apply(q, store);
  s.scale = ad::softplus(scale_.apply(q, store)) + kEncoderScaleFloor;
  s.p = s.mean + s.scale * noise;
  const double log_norm = -0.5 * dim_ * std::log(2.0 * std::numbers::pi);
  s.log_density = ad::sum_cols(-ad::log(s.scale) - 0.5 * ad::square(noise)) + log_norm;
  return s;
}

void GaussianEncoder::initialize(ParamStore& store, std::uint64_t seed) const {
  mean_.initialize(store, derive_seed(seed, "mu"));
  scale_.initialize(store, derive_seed(seed, "sigma"));
}

}  // namespace hamflow
