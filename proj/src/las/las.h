// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lattice/lattice.h"
#include "nn/attention.h"
#include "nn/graph.h"
#include "nn/lstm.h"
#include "nn/param.h"
#include "nn/tensor.h"
#include "rnnt/vocab.h"
#include "util/config.h"

namespace twopass {
namespace las {

// Second-pass rescorer: a small additional encoder over the first-pass
// encoder output, an attention cache built during the first pass, and an
// attention decoder scored in teacher-forcing mode over lattice paths.
//
// The output space is the first-pass vocabulary plus one extra column for the
// rescorer's own end-of-sequence symbol; the same extra index doubles as the
// start-of-sequence embedding row.
struct LasConfig {
  int source_dim = 0;  // first-pass encoder output width
  int vocab_size = 0;
  int eos_id = 1;  // first-pass `</s>` id, stripped before rescoring
  int enc_layers = 2;
  int enc_hidden = 24;
  int enc_proj = 16;
  int dec_layers = 1;
  int dec_hidden = 24;
  int dec_proj = 16;
  int embed_dim = 12;
  int attn_heads = 2;
  int attn_head_dim = 8;

  static LasConfig from_config(const Config& cfg, int source_dim, const rnnt::Vocab& vocab);
  // Writes back every key from_config reads, plus source_dim, so a checkpoint
  // echo always describes the stored architecture.
  Config to_config() const;
  void validate() const;
  int num_outputs() const { return vocab_size + 1; }
  int eos_col() const { return vocab_size; }
  int sos_token() const { return vocab_size; }
};

struct LasParams {
  LasConfig cfg;
  std::vector<nn::LstmParams> enc;
  nn::Parameter embed;  // {vocab+1, embed_dim}; last row is start-of-sequence
  std::vector<nn::LstmParams> dec;
  nn::AttentionParams attn;  // query: decoder output; source: additional encoder
  nn::Parameter w_out;       // {vocab+1, dec_proj + attn.out_dim}
  nn::Parameter b_out;       // {1, vocab+1}

  void init(const LasConfig& c, uint64_t seed);
  std::vector<nn::Parameter*> params();
};

// Causal additional-encoder forward over the whole first-pass output.
nn::Tensor additional_encode(const LasParams& p, const nn::Tensor& e_s);

struct AttentionSourceCache {
  std::vector<nn::Tensor> k_heads;  // per head {S, head_dim}
  std::vector<nn::Tensor> v_heads;
  int length = 0;
};

// Projects already-encoded rows into the cache, appending to existing rows.
void extend_attention_cache(const LasParams& p, const nn::Tensor& e_a_rows,
                            AttentionSourceCache* cache);
AttentionSourceCache build_attention_cache(const LasParams& p, const nn::Tensor& e_a);

// Runs the additional encoder and the cache projections one first-pass frame
// at a time, so both ride along with the first pass.
class LasStream {
 public:
  explicit LasStream(const LasParams& p);
  void push(const nn::Tensor& e_s_row);
  const AttentionSourceCache& cache() const { return cache_; }

 private:
  const LasParams& p_;
  std::vector<nn::LstmState> enc_states_;
  AttentionSourceCache cache_;
};

struct DecoderState {
  std::vector<nn::LstmState> layers;
  nn::Tensor ctx;  // last attended context {1, attn.out_dim}
};

DecoderState decoder_init(const LasParams& p);

// One teacher-forced decoder step: consumes prev_token (or the
// start-of-sequence index), attends over the cache, and returns normalized
// log-probs over vocab+1. Advances the state in place.
nn::Tensor teacher_force_step(const LasParams& p, const AttentionSourceCache& cache,
                              int prev_token, DecoderState* state);

// Teacher-forced sequence log-prob: sum of per-step log-probs of each token
// plus the end-of-sequence column after the last one. `tokens` must not
// contain the first-pass `</s>`.
double score_sequence(const LasParams& p, const AttentionSourceCache& cache,
                      const std::vector<int>& tokens);

// Writes las_logp on every arc. Depth-first, children in token order; sibling
// arcs share their parent's decoder step, and child steps are evaluated as one
// batch when `batched` (a loop of single-row steps otherwise). Terminal arcs
// absorb the end-of-sequence log-prob; first-pass `</s>` arcs are stripped
// from the scored path, carrying only that end-of-sequence term. rnnt_logp
// fields are never touched.
void rescore_lattice(lattice::PrefixTreeLattice* lat, const AttentionSourceCache& cache,
                     const LasParams& p, bool batched);

struct RescoreBenchStats {
  double p50_ms = 0.0;
  double p90_ms = 0.0;
  std::vector<double> wall_ms;  // one entry per (lattice, repetition)
};

// Wall time of rescore_lattice alone; caches are prebuilt by the caller.
RescoreBenchStats bench_rescore(std::vector<lattice::PrefixTreeLattice>* lats,
                                const std::vector<AttentionSourceCache>& caches,
                                const LasParams& p, bool batched, int repetitions);

// Tape-built teacher-forced cross-entropy against `targets` (first-pass
// `</s>` excluded; the end-of-sequence column is appended as the final
// target). e_s enters as a constant, so first-pass gradients are zero by
// construction.
nn::Graph::Id las_ce_loss(nn::Graph& g, LasParams& p, const nn::Tensor& e_s,
                          const std::vector<int>& targets);

// Tape-built teacher-forced log-prob of `tokens` (same conventions as
// score_sequence) for sequence-level objectives.
nn::Graph::Id las_sequence_logprob(nn::Graph& g, LasParams& p, const nn::Tensor& e_s,
                                   const std::vector<int>& tokens);

}  // namespace las
}  // namespace twopass
