// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "frontend/dataset.h"
#include "las/las.h"
#include "lattice/lattice.h"
#include "nn/graph.h"
#include "rnnt/beam.h"
#include "rnnt/model.h"
#include "train/optimizer.h"

namespace twopass {
namespace train {

struct LossRow {
  int step = 0;
  double loss = 0.0;  // minibatch mean
  double lr = 0.0;
  double grad_norm = 0.0;  // global norm before clipping
};

std::string loss_curve_csv(const std::vector<LossRow>& rows);
void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows);

struct TrainResult {
  std::vector<LossRow> curve;
  std::optional<EmaState> ema;  // present when the config enables EMA
  int skipped = 0;              // utterances dropped for lack of competitors
};

// Minibatch SGD over the transducer loss. Utterance order reshuffles every
// epoch from the config seed; runs are bit-reproducible. A non-finite loss
// aborts with the offending step and utterance.
TrainResult train_rnnt(const frontend::Dataset& ds, rnnt::RnnTParams* params,
                       const rnnt::EndpointerPenaltyConfig& epc, const OptimizerConfig& opt);

// Teacher-forced cross entropy for the second pass. The first-pass model
// only supplies encoder outputs as constants, so its parameters receive no
// gradient and stay bit-identical.
TrainResult train_las_ce(const frontend::Dataset& ds, const rnnt::RnnTParams& first_pass,
                         las::LasParams* las_params, const OptimizerConfig& opt);

// One n-best entry prepared for the expected-word-errors loss. Tokens carry
// no `</s>`; first_pass_score is the path's transducer log-prob.
struct MwerCandidate {
  std::vector<int> tokens;
  double first_pass_score = 0.0;
  int word_errors = 0;
};

// P over the n-best, renormalized from combined scores on the tape:
// softmax_i((1-lambda)*first_pass_score_i + lambda*las_logprob_i). Gradients
// reach the second pass only. Returns a {1, n} row.
nn::Graph::Id mwer_renormalized_probs(nn::Graph& g, las::LasParams& p, const nn::Tensor& e_s,
                                      const std::vector<MwerCandidate>& cands, double lambda_las);

// Expected word errors relative to the mean: sum_i P_i * (W_i - baseline).
double mwer_baseline(const nn::Tensor& probs, const std::vector<MwerCandidate>& cands);
// The baseline enters as a constant; differentiating through it would make
// the loss identically zero.
nn::Graph::Id mwer_loss_given_baseline(nn::Graph& g, nn::Graph::Id probs,
                                       const std::vector<MwerCandidate>& cands, double baseline);

struct MwerSettings {
  rnnt::BeamConfig beam;
  lattice::ScoreWeights weights;
  int nbest_size = 4;
  // Applied to both reference and candidate words when counting errors; the
  // empty default keeps domain transcript conventions distinct, matching the
  // evaluation metric.
  frontend::SpellingMap normalize;
  void validate() const;
};

// Fine-tunes the second pass on expected word errors over the rescored
// n-best. First-pass decoding happens once per utterance (the first pass is
// frozen); utterances whose n-best has fewer than two entries are skipped
// and counted.
TrainResult mwer_finetune(const frontend::Dataset& ds, const rnnt::RnnTParams& first_pass,
                          las::LasParams* las_params, const MwerSettings& ms,
                          const OptimizerConfig& opt);

}  // namespace train
}  // namespace twopass
