#pragma once

#include <span>
#include <vector>

#include "hamflow/param_store.hpp"
#include "hamflow/symmetry.hpp"

namespace hamflow {

struct AdamSettings {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. First and second moments live in the store's
/// "adam.m" / "adam.v" slots; `step_count` is the number of updates applied.
class Adam {
 public:
  explicit Adam(AdamSettings s = {});

  void step(ParamStore& params, std::span<const double> grads);
  long step_count() const { return t_; }
  const AdamSettings& settings() const { return s_; }

 private:
  AdamSettings s_;
  long t_ = 0;
};

/// ema_k <- momentum ema_k + (1 - momentum) slack_k.
void update_slack_ema(std::vector<double>& ema, std::span<const double> slack, double momentum = 0.99);

/// lambda_k <- max(0, lambda_k exp(rate ema_k)). Positive slack raises the
/// multiplier, negative slack decays it toward zero.
void lambda_ascent(GeneratorSet& gens, std::span<const double> slack_ema, double rate);

}  // namespace hamflow
