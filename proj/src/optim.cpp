#include "hamflow/optim.hpp"

#include <cmath>

#include "hamflow/errors.hpp"

namespace hamflow {

Adam::Adam(AdamSettings s) : s_(s) {
  if (!(s_.learning_rate > 0.0)) throw ConfigError("Adam: learning rate must be positive", "optimizer.learning_rate");
  if (!(s_.beta1 >= 0.0 && s_.beta1 < 1.0)) throw ConfigError("Adam: beta1 must be in [0, 1)", "optimizer.beta1");
  if (!(s_.beta2 >= 0.0 && s_.beta2 < 1.0)) throw ConfigError("Adam: beta2 must be in [0, 1)", "optimizer.beta2");
  if (!(s_.eps > 0.0)) throw ConfigError("Adam: eps must be positive", "optimizer.eps");
}

void Adam::step(ParamStore& params, std::span<const double> grads) {
  if (grads.size() != params.size())
    throw ContractError("adam_step: gradient has " + std::to_string(grads.size()) + " entries, parameters " +
                        std::to_string(params.size()));
  auto& m = params.slot("adam.m");
  auto& v = params.slot("adam.v");
  auto x = params.values();
  ++t_;
  const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = s_.beta1 * m[i] + (1.0 - s_.beta1) * grads[i];
    v[i] = s_.beta2 * v[i] + (1.0 - s_.beta2) * grads[i] * grads[i];
    x[i] -= s_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + s_.eps);
  }
}

void update_slack_ema(std::vector<double>& ema, std::span<const double> slack, double momentum) {
  if (ema.size() != slack.size()) throw ContractError("update_slack_ema: size mismatch");
  for (std::size_t k = 0; k < ema.size(); ++k) ema[k] = momentum * ema[k] + (1.0 - momentum) * slack[k];
}

void lambda_ascent(GeneratorSet& gens, std::span<const double> slack_ema, double rate) {
  if (!(rate > 0.0)) throw ConfigError("lambda ascent rate must be positive", "lambda.rate");
  if (slack_ema.size() != gens.size()) throw ContractError("lambda_ascent: one slack per generator expected");
  for (std::size_t k = 0; k < gens.size(); ++k) {
    double& lam = gens.generators[k].lambda;
    lam = std::max(0.0, lam * std::exp(rate * slack_ema[k]));
  }
}

}  // namespace hamflow
