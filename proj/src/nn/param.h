// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>

#include "nn/tensor.h"

namespace twopass {
namespace nn {

// A named trainable tensor. `grad` is filled by Graph::backward and consumed
// by the optimizer; it accumulates across graphs until zeroed.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() { grad = Tensor(value.shape); }
  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape);
  }
};

}  // namespace nn
}  // namespace twopass
