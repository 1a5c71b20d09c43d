// SPDX-License-Identifier: Apache-2.0

#include "nn/lstm.h"

#include "util/common.h"

namespace twopass {
namespace nn {

void LstmParams::init(const std::string& prefix, int input, int hidden, int proj, Rng& rng) {
  check(input > 0 && hidden > 0 && proj > 0, "lstm dims must be positive");
  check(proj <= hidden, "lstm projection dim exceeds hidden dim");
  input_dim = input;
  hidden_dim = hidden;
  proj_dim = proj;
  wx = Parameter(prefix + ".wx", uniform_init({4 * hidden, input}, input, rng));
  wh = Parameter(prefix + ".wh", uniform_init({4 * hidden, proj}, proj, rng));
  b = Parameter(prefix + ".b", Tensor({1, 4 * hidden}));
  for (int j = 0; j < hidden; ++j) b.value.at(0, hidden + j) = 1.0;
  wp = Parameter(prefix + ".wp", uniform_init({proj, hidden}, hidden, rng));
}

std::vector<Parameter*> LstmParams::params() { return {&wx, &wh, &b, &wp}; }

LstmState LstmState::zeros(int batch, const LstmParams& p) {
  LstmState s;
  s.h = Tensor({batch, p.proj_dim});
  s.c = Tensor({batch, p.hidden_dim});
  return s;
}

Tensor lstm_step(const LstmParams& p, const Tensor& x, LstmState* state) {
  check(state != nullptr, "lstm_step needs a state");
  Tensor c_next;
  Tensor h = lstm_cell_forward(p.wx.value, p.wh.value, p.b.value, p.wp.value, x,
                               state->h, state->c, &c_next, nullptr);
  state->h = h;
  state->c = std::move(c_next);
  return h;
}

}  // namespace nn
}  // namespace twopass
