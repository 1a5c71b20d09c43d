// SPDX-License-Identifier: Apache-2.0
#include "train/optimizer.h"

#include <cmath>

#include "util/common.h"

namespace twopass {
namespace train {

OptimizerConfig OptimizerConfig::from_config(const Config& cfg) {
  OptimizerConfig o;
  o.method = cfg.get_str("optimizer", o.method);
  o.learning_rate = cfg.get_double("learning_rate", o.learning_rate);
  o.schedule = cfg.get_str("lr_schedule", o.schedule);
  o.decay_rate = cfg.get_double("lr_decay_rate", o.decay_rate);
  o.decay_steps = cfg.get_int("lr_decay_steps", o.decay_steps);
  o.clip_norm = cfg.get_double("clip_norm", o.clip_norm);
  o.batch_size = cfg.get_int("batch_size", o.batch_size);
  o.max_steps = cfg.get_int("max_steps", o.max_steps);
  o.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int>(o.seed)));
  o.ema_decay = cfg.get_double("ema_decay", o.ema_decay);
  o.ema_enabled = cfg.get_bool("ema_enabled", o.ema_enabled);
  o.validate();
  return o;
}

void OptimizerConfig::validate() const {
  check_config(method == "sgd" || method == "adam", "unknown optimizer: " + method);
  // Zero is admitted so a run can be pinned in place (the freeze check).
  check_config(learning_rate >= 0.0, "learning_rate must be >= 0");
  check_config(schedule == "constant" || schedule == "exponential_decay",
               "unknown lr_schedule: " + schedule);
  if (schedule == "exponential_decay") {
    check_config(decay_rate > 0.0 && decay_rate <= 1.0, "lr_decay_rate must be in (0, 1]");
    check_config(decay_steps > 0, "lr_decay_steps must be positive");
  }
  check_config(clip_norm >= 0.0, "clip_norm must be >= 0");
  check_config(batch_size >= 1, "batch_size must be >= 1");
  check_config(max_steps >= 0, "max_steps must be >= 0");
  check_config(ema_decay >= 0.0 && ema_decay <= 1.0, "ema_decay must be in [0, 1]");
}

double OptimizerConfig::lr_at(int step) const {
  if (schedule == "constant") return learning_rate;
  return learning_rate * std::pow(decay_rate, static_cast<double>(step) / decay_steps);
}

double global_grad_norm(const std::vector<nn::Parameter*>& params) {
  double sq = 0.0;
  for (const nn::Parameter* p : params) {
    for (double g : p->grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_gradients(const std::vector<nn::Parameter*>& params, double clip) {
  if (clip <= 0.0) return;
  const double norm = global_grad_norm(params);
  if (norm <= clip) return;
  const double scale = clip / norm;
  for (nn::Parameter* p : params) {
    for (double& g : p->grad.data) g *= scale;
  }
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Optimizer::StepInfo Optimizer::step(const std::vector<nn::Parameter*>& params) {
  for (nn::Parameter* p : params) p->ensure_grad();
  StepInfo info;
  info.lr = cfg_.lr_at(step_);
  info.grad_norm = global_grad_norm(params);
  clip_gradients(params, cfg_.clip_norm);
  if (cfg_.method == "sgd") {
    for (nn::Parameter* p : params) {
      for (size_t i = 0; i < p->value.data.size(); ++i) {
        p->value.data[i] -= info.lr * p->grad.data[i];
      }
    }
  } else {
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double t = static_cast<double>(step_ + 1);
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);
    for (nn::Parameter* p : params) {
      nn::Tensor& m = m_.try_emplace(p, nn::Tensor(p->value.shape)).first->second;
      nn::Tensor& v = v_.try_emplace(p, nn::Tensor(p->value.shape)).first->second;
      for (size_t i = 0; i < p->value.data.size(); ++i) {
        const double g = p->grad.data[i];
        m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
        v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        p->value.data[i] -= info.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
      }
    }
  }
  ++step_;
  return info;
}

EmaState EmaState::init(const std::vector<nn::Parameter*>& params, double decay) {
  check_config(decay >= 0.0 && decay <= 1.0, "ema decay must be in [0, 1]");
  EmaState s;
  s.decay = decay;
  s.shadow.reserve(params.size());
  for (const nn::Parameter* p : params) s.shadow.emplace_back(p->name, p->value);
  return s;
}

void EmaState::update(const std::vector<nn::Parameter*>& params) {
  check(params.size() == shadow.size(), "ema tracks a different parameter set");
  for (size_t k = 0; k < params.size(); ++k) {
    check(shadow[k].first == params[k]->name && shadow[k].second.same_shape(params[k]->value),
          "ema shadow mismatch for " + shadow[k].first);
    nn::Tensor& s = shadow[k].second;
    const nn::Tensor& w = params[k]->value;
    for (size_t i = 0; i < s.data.size(); ++i) {
      s.data[i] = decay * s.data[i] + (1.0 - decay) * w.data[i];
    }
  }
}

void EmaState::copy_to(const std::vector<nn::Parameter*>& params) const {
  check(params.size() == shadow.size(), "ema tracks a different parameter set");
  for (size_t k = 0; k < params.size(); ++k) {
    check(shadow[k].first == params[k]->name && shadow[k].second.same_shape(params[k]->value),
          "ema shadow mismatch for " + shadow[k].first);
    params[k]->value = shadow[k].second;
  }
}

}  // namespace train
}  // namespace twopass
