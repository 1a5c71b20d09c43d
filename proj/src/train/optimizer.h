// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nn/param.h"
#include "nn/tensor.h"
#include "util/config.h"

namespace twopass {
namespace train {

struct OptimizerConfig {
  std::string method = "sgd";  // sgd | adam
  double learning_rate = 1e-2;
  std::string schedule = "constant";  // constant | exponential_decay
  double decay_rate = 0.95;           // factor applied per decay_steps steps
  int decay_steps = 100;
  double clip_norm = 1.0;  // global gradient norm cap; 0 disables clipping
  int batch_size = 1;
  int max_steps = 0;
  uint64_t seed = 1;
  double ema_decay = 0.999;
  bool ema_enabled = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Keys: optimizer, learning_rate, lr_schedule, lr_decay_rate,
  // lr_decay_steps, clip_norm, batch_size, max_steps, seed, ema_decay,
  // ema_enabled. Unknown schedule or optimizer names are rejected.
  static OptimizerConfig from_config(const Config& cfg);
  void validate() const;

  // Learning rate at a 0-based step. Exponential decay is continuous:
  // learning_rate * decay_rate^(step / decay_steps).
  double lr_at(int step) const;
};

// Euclidean norm over all gradients, treated as one flattened vector.
double global_grad_norm(const std::vector<nn::Parameter*>& params);

// Scales every gradient by clip / norm when the global norm exceeds clip.
// No-op when clip <= 0 or the norm is within the cap.
void clip_gradients(const std::vector<nn::Parameter*>& params, double clip);

// One update = clip, then apply the scheduled rule. Adam moments are keyed by
// parameter identity and persist across steps.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  struct StepInfo {
    double lr = 0.0;
    double grad_norm = 0.0;  // global norm before clipping
  };
  StepInfo step(const std::vector<nn::Parameter*>& params);
  int steps_taken() const { return step_; }

 private:
  OptimizerConfig cfg_;
  int step_ = 0;
  std::map<const nn::Parameter*, nn::Tensor> m_;
  std::map<const nn::Parameter*, nn::Tensor> v_;
};

// Exponential moving average of parameter values, tracked alongside training
// and swapped in for evaluation.
struct EmaState {
  double decay = 0.999;
  std::vector<std::pair<std::string, nn::Tensor>> shadow;  // parallel to params

  static EmaState init(const std::vector<nn::Parameter*>& params, double decay);
  // shadow <- decay * shadow + (1 - decay) * value, elementwise.
  void update(const std::vector<nn::Parameter*>& params);
  // Writes the shadow values into the parameters.
  void copy_to(const std::vector<nn::Parameter*>& params) const;
};

}  // namespace train
}  // namespace twopass
