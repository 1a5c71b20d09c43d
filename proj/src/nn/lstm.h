// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nn/ops.h"
#include "nn/param.h"
#include "nn/tensor.h"
#include "util/rng.h"

namespace twopass {
namespace nn {

// Projected LSTM layer. Gate blocks in wx/wh/b follow [input, forget, cell,
// output]; the forget-gate bias is initialized to 1.
struct LstmParams {
  int input_dim = 0;
  int hidden_dim = 0;
  int proj_dim = 0;
  Parameter wx;  // {4*hidden, input}
  Parameter wh;  // {4*hidden, proj}
  Parameter b;   // {1, 4*hidden}
  Parameter wp;  // {proj, hidden}

  void init(const std::string& prefix, int input, int hidden, int proj, Rng& rng);
  std::vector<Parameter*> params();
};

struct LstmState {
  Tensor h;  // {batch, proj}
  Tensor c;  // {batch, hidden}
  static LstmState zeros(int batch, const LstmParams& p);
};

// Advances state by one frame and returns the projected output. Batched over
// rows of x.
Tensor lstm_step(const LstmParams& p, const Tensor& x, LstmState* state);

}  // namespace nn
}  // namespace twopass
