// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "nn/param.h"
#include "nn/tensor.h"

namespace twopass {
namespace nn {

// Reverse-mode tape. Each op records a closure that propagates gradients to
// its inputs; backward() runs them newest-first, then flushes gradients of
// bound parameters into Parameter::grad. One backward per graph.
class Graph {
 public:
  using Id = int;

  struct LstmStepIds {
    Id h;
    Id c;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Id constant(Tensor t);
  Id param(Parameter& p);
  const Tensor& val(Id id) const;
  const Tensor& grad_of(Id id) const;

  Id matmul(Id a, Id b, bool ta = false, bool tb = false);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id add_bias(Id m, Id bias);
  Id scale(Id a, double c);
  Id add_const(Id a, const Tensor& c);
  Id mul(Id a, Id b);
  Id sigmoid(Id a);
  Id tanh(Id a);
  Id exp(Id a);
  Id concat_cols(const std::vector<Id>& parts);
  Id concat_rows(const std::vector<Id>& parts);
  Id gather_rows(Id table, std::vector<int> idx);
  Id log_softmax_rows(Id a);
  Id softmax_rows(Id a);
  Id sum_all(Id a);
  // Scalar sum of w_k * mat[r_k, c_k] over the given cells.
  Id gather_weighted_sum(Id mat, std::vector<std::pair<int, int>> cells,
                         std::vector<double> weights);
  // Scalar dot product with a fixed tensor of the same shape.
  Id dot_const(Id a, Tensor w);

  // Fused projected-LSTM cell; params are already-bound slots.
  LstmStepIds lstm_step(Id x, Id h_prev, Id c_prev, Id wx, Id wh, Id b, Id wp);
  // Row u*num_frames+t of the result is tanh(enc[t] + pred[u]).
  Id joint_combine(Id enc_proj, Id pred_proj);
  // Scalar transducer negative log-likelihood of `labels` under the log-prob
  // grid (rows indexed u*num_frames+t).
  Id rnnt_loss(Id grid, std::vector<int> labels, int num_frames, int blank_id);

  void backward(Id loss);
  size_t num_slots() const { return slots_.size(); }

 private:
  struct Slot {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
  };

  Id new_slot(Tensor val, bool needs_grad);
  void add_step(std::function<void()> fn) { steps_.push_back(std::move(fn)); }
  bool needs(Id id) const { return slots_[id].needs_grad; }
  bool needs_any(const std::vector<Id>& ids) const;
  Tensor& g(Id id) { return slots_[id].grad; }
  const Tensor& v(Id id) const { return slots_[id].val; }

  std::vector<Slot> slots_;
  std::vector<std::function<void()>> steps_;
  std::map<const Parameter*, Id> param_ids_;
  std::vector<std::pair<Parameter*, Id>> bound_;
  bool backward_done_ = false;
};

}  // namespace nn
}  // namespace twopass
