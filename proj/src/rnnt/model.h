// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "nn/graph.h"
#include "nn/lstm.h"
#include "nn/param.h"
#include "nn/tensor.h"
#include "nn/transducer.h"
#include "rnnt/vocab.h"
#include "util/config.h"
#include "util/rng.h"

namespace twopass {
namespace rnnt {

struct RnnTConfig {
  int input_dim = 0;   // stacked features plus domain one-hot
  int vocab_size = 0;  // joint output classes, blank included
  int blank_id = 0;
  int eos_id = 1;
  int enc_layers = 2;
  int enc_hidden = 24;
  int enc_proj = 16;
  bool time_reduction = false;
  int time_reduction_layer = 2;  // reduce after this many encoder layers
  int time_reduction_factor = 2;
  int pred_layers = 1;
  int pred_hidden = 24;
  int pred_proj = 16;
  int embed_dim = 12;
  int joint_dim = 16;

  static RnnTConfig from_config(const Config& cfg, int input_dim, const Vocab& vocab);
  // Writes back every key from_config reads, plus input_dim, so a checkpoint
  // echo always describes the stored architecture.
  Config to_config() const;
  void validate() const;
  int encoder_output_dim() const { return enc_proj; }
};

// First-pass model: encoder LSTM stack, label-embedding prediction network,
// and a single-hidden-layer joint network ending in log-softmax.
struct RnnTParams {
  RnnTConfig cfg;
  std::vector<nn::LstmParams> enc;
  nn::Parameter embed;    // {vocab_size, embed_dim}; blank row doubles as start token
  std::vector<nn::LstmParams> pred;
  nn::Parameter w_enc;    // {joint_dim, enc_proj}
  nn::Parameter w_pred;   // {joint_dim, pred_proj}
  nn::Parameter b_joint;  // {1, joint_dim}
  nn::Parameter w_out;    // {vocab_size, joint_dim}
  nn::Parameter b_out;    // {1, vocab_size}

  void init(const RnnTConfig& c, uint64_t seed);
  std::vector<nn::Parameter*> params();
};

// Causal encoder over stacked feature rows. push() returns the encoder rows
// that became available; with time reduction on, rows are emitted once a full
// group of frames has arrived and finish() flushes a trailing partial group
// by repeating its last frame.
class StreamingEncoder {
 public:
  explicit StreamingEncoder(const RnnTParams& p);
  std::vector<nn::Tensor> push(const nn::Tensor& row);
  std::vector<nn::Tensor> finish();

 private:
  nn::Tensor run_tail(const nn::Tensor& reduced);

  const RnnTParams& p_;
  std::vector<nn::LstmState> states_;
  std::vector<nn::Tensor> group_;
  bool finished_ = false;
};

// Whole-sequence convenience wrapper around StreamingEncoder.
nn::Tensor encode_sequence(const RnnTParams& p, const nn::Tensor& features);

// Prediction-network state after consuming a label prefix.
struct PredState {
  std::vector<nn::LstmState> layers;
  nn::Tensor out;  // {1, pred_proj}
};

// State after zero labels: one step on the start-token embedding.
PredState pred_init(const RnnTParams& p);
void pred_advance(const RnnTParams& p, int token, PredState* s);

// Joint log-probs for one encoder row against a batch of prediction-network
// outputs; returns {rows(pred_rows), vocab_size}.
nn::Tensor joint_logprobs(const RnnTParams& p, const nn::Tensor& enc_row,
                          const nn::Tensor& pred_rows);

// Dense per-(label-prefix, frame) joint log-probs; row u*num_frames+t is the
// output distribution after u labels at encoder frame t.
struct LogProbGrid {
  nn::Tensor grid;  // {(num_labels+1)*num_frames, vocab_size}
  int num_frames = 0;
  int num_labels = 0;
};

LogProbGrid compute_grid(const RnnTParams& p, const nn::Tensor& e_s,
                         const std::vector<int>& labels);

// Transducer negative log-likelihood of `labels` under the grid.
nn::TransducerResult grid_loss(const LogProbGrid& g, const std::vector<int>& labels,
                               int blank_id, bool want_grad = false);

// End-of-query penalty on the `</s>` entries of the last label row. Empty
// enabled_domains turns the `</s>` target and the penalty off everywhere.
struct EndpointerPenaltyConfig {
  double alpha_early = 0.0;
  double alpha_late = 0.0;
  int t_buffer = 0;
  std::set<int> enabled_domains;

  bool enabled_for(int domain) const { return enabled_domains.count(domain) > 0; }
  void validate() const;
  static EndpointerPenaltyConfig from_config(const Config& cfg);
};

// max(0, alpha_early*(t_eos-t)) + max(0, alpha_late*(t-t_eos-t_buffer)).
double eos_penalty_at(int t, int t_eos, const EndpointerPenaltyConfig& cfg);

// Additive offsets matching a grid: zero everywhere except column eos_id of
// rows (U-1)*T+t, which hold -penalty(t).
nn::Tensor eos_penalty_offsets(int num_frames, int num_labels, int vocab_size, int eos_id,
                               int t_eos, const EndpointerPenaltyConfig& cfg);

// Subtracts the penalty from the `</s>` entries of the last label row; no
// renormalization. `labels` must end with eos_id.
LogProbGrid apply_eos_penalty(const LogProbGrid& g, const std::vector<int>& labels,
                              int t_eos, int eos_id, const EndpointerPenaltyConfig& cfg);

// Builds the full training loss on the tape: encoder, prediction network,
// joint log-softmax, eos penalty offsets (when enabled for `domain`), and the
// transducer loss. `tokens` excludes `</s>`; it is appended when enabled.
// `t_eos_frame` is in encoder-input frames and is mapped through time
// reduction internally.
nn::Graph::Id rnnt_training_loss(nn::Graph& g, RnnTParams& p, const nn::Tensor& features,
                                 const std::vector<int>& tokens, int domain, int t_eos_frame,
                                 const EndpointerPenaltyConfig& epc);

}  // namespace rnnt
}  // namespace twopass
