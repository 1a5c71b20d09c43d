// SPDX-License-Identifier: Apache-2.0
#include "train/train.h"

#include <cmath>
#include <functional>
#include <numeric>

#include "harness/metrics.h"
#include "util/common.h"
#include "util/io.h"
#include "util/rng.h"

namespace twopass {
namespace train {

std::string loss_curve_csv(const std::vector<LossRow>& rows) {
  std::string out = "step,loss,lr,grad_norm\n";
  for (const LossRow& r : rows) {
    out += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.lr) +
           "," + format_double(r.grad_norm) + "\n";
  }
  return out;
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
  write_text_file(path, loss_curve_csv(rows));
}

namespace {

// Builds the loss for one item on a fresh tape, or nothing to skip the item.
using ItemLoss = std::function<std::optional<nn::Graph::Id>(nn::Graph&, int)>;

TrainResult run_training(int item_count, const std::vector<nn::Parameter*>& params,
                         const OptimizerConfig& opt, const std::vector<std::string>& item_ids,
                         const ItemLoss& build) {
  opt.validate();
  TrainResult res;
  Optimizer optimizer(opt);
  if (opt.ema_enabled) res.ema = EmaState::init(params, opt.ema_decay);
  std::vector<int> order(static_cast<size_t>(item_count));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = Rng::substream(opt.seed, 0xfeed);
  int pos = item_count;  // forces a shuffle before the first draw
  res.curve.reserve(static_cast<size_t>(opt.max_steps));
  for (int step = 0; step < opt.max_steps; ++step) {
    for (nn::Parameter* p : params) p->zero_grad();
    double batch_loss = 0.0;
    int contributing = 0;
    for (int b = 0; b < opt.batch_size; ++b) {
      if (pos == item_count) {
        for (int i = item_count - 1; i > 0; --i) {
          std::swap(order[static_cast<size_t>(i)],
                    order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);
        }
        pos = 0;
      }
      const int item = order[static_cast<size_t>(pos++)];
      nn::Graph g;
      std::optional<nn::Graph::Id> loss = build(g, item);
      if (!loss) {
        ++res.skipped;
        continue;
      }
      const double lv = g.val(*loss).at(0);
      check(std::isfinite(lv), "non-finite loss at step " + std::to_string(step) + " on " +
                                   item_ids[static_cast<size_t>(item)]);
      g.backward(*loss);
      batch_loss += lv;
      ++contributing;
    }
    const double denom = static_cast<double>(std::max(contributing, 1));
    batch_loss /= denom;
    for (nn::Parameter* p : params) {
      for (double& gv : p->grad.data) gv /= denom;
    }
    const Optimizer::StepInfo info = optimizer.step(params);
    if (res.ema) res.ema->update(params);
    res.curve.push_back({step, batch_loss, info.lr, info.grad_norm});
  }
  return res;
}

std::vector<std::string> utterance_ids(const frontend::Dataset& ds) {
  std::vector<std::string> ids;
  ids.reserve(ds.utts.size());
  for (const frontend::Utterance& u : ds.utts) ids.push_back(u.id);
  return ids;
}

}  // namespace

TrainResult train_rnnt(const frontend::Dataset& ds, rnnt::RnnTParams* params,
                       const rnnt::EndpointerPenaltyConfig& epc, const OptimizerConfig& opt) {
  check_config(!ds.utts.empty(), "dataset is empty");
  std::vector<nn::Tensor> inputs;
  inputs.reserve(ds.utts.size());
  for (const frontend::Utterance& u : ds.utts) inputs.push_back(frontend::encoder_input(ds.meta, u));
  const ItemLoss build = [&](nn::Graph& g, int i) -> std::optional<nn::Graph::Id> {
    const frontend::Utterance& u = ds.utts[static_cast<size_t>(i)];
    return rnnt::rnnt_training_loss(g, *params, inputs[static_cast<size_t>(i)], u.tokens,
                                    u.domain_id, u.t_eos_frame, epc);
  };
  return run_training(static_cast<int>(ds.utts.size()), params->params(), opt, utterance_ids(ds),
                      build);
}

TrainResult train_las_ce(const frontend::Dataset& ds, const rnnt::RnnTParams& first_pass,
                         las::LasParams* las_params, const OptimizerConfig& opt) {
  check_config(!ds.utts.empty(), "dataset is empty");
  // Encoder outputs enter the tape as constants, so the first pass is frozen
  // by construction; compute them once.
  std::vector<nn::Tensor> sources;
  sources.reserve(ds.utts.size());
  for (const frontend::Utterance& u : ds.utts) {
    sources.push_back(rnnt::encode_sequence(first_pass, frontend::encoder_input(ds.meta, u)));
  }
  const ItemLoss build = [&](nn::Graph& g, int i) -> std::optional<nn::Graph::Id> {
    return las::las_ce_loss(g, *las_params, sources[static_cast<size_t>(i)],
                            ds.utts[static_cast<size_t>(i)].tokens);
  };
  return run_training(static_cast<int>(ds.utts.size()), las_params->params(), opt,
                      utterance_ids(ds), build);
}

nn::Graph::Id mwer_renormalized_probs(nn::Graph& g, las::LasParams& p, const nn::Tensor& e_s,
                                      const std::vector<MwerCandidate>& cands, double lambda_las) {
  check(cands.size() >= 2, "renormalization needs at least two hypotheses");
  std::vector<nn::Graph::Id> combined;
  combined.reserve(cands.size());
  for (const MwerCandidate& c : cands) {
    nn::Graph::Id las_lp = las::las_sequence_logprob(g, p, e_s, c.tokens);
    nn::Tensor first({1, 1});
    first.at(0) = (1.0 - lambda_las) * c.first_pass_score;
    combined.push_back(g.add_const(g.scale(las_lp, lambda_las), first));
  }
  return g.softmax_rows(g.concat_cols(combined));
}

double mwer_baseline(const nn::Tensor& probs, const std::vector<MwerCandidate>& cands) {
  check(probs.numel() == static_cast<int>(cands.size()), "probability row size mismatch");
  double mean = 0.0;
  for (size_t i = 0; i < cands.size(); ++i) {
    mean += probs.at(static_cast<int>(i)) * cands[i].word_errors;
  }
  return mean;
}

nn::Graph::Id mwer_loss_given_baseline(nn::Graph& g, nn::Graph::Id probs,
                                       const std::vector<MwerCandidate>& cands, double baseline) {
  nn::Tensor w({1, static_cast<int>(cands.size())});
  for (size_t i = 0; i < cands.size(); ++i) {
    w.at(static_cast<int>(i)) = cands[i].word_errors - baseline;
  }
  return g.dot_const(probs, std::move(w));
}

void MwerSettings::validate() const {
  beam.validate();
  weights.validate();
  check_config(nbest_size >= 2, "nbest_size must be >= 2");
}

TrainResult mwer_finetune(const frontend::Dataset& ds, const rnnt::RnnTParams& first_pass,
                          las::LasParams* las_params, const MwerSettings& ms,
                          const OptimizerConfig& opt) {
  check_config(!ds.utts.empty(), "dataset is empty");
  ms.validate();
  const frontend::SpellingMap& sp = ms.normalize;
  const rnnt::Vocab& vocab = ds.meta.vocab;

  // The first pass is frozen, so encoder outputs, lattices, and reference
  // words are fixed across steps.
  struct Prepared {
    nn::Tensor e_s;
    lattice::PrefixTreeLattice lat;
    std::vector<std::string> ref_words;
  };
  std::vector<Prepared> prep;
  prep.reserve(ds.utts.size());
  for (const frontend::Utterance& u : ds.utts) {
    Prepared pr;
    pr.e_s = rnnt::encode_sequence(first_pass, frontend::encoder_input(ds.meta, u));
    pr.lat = rnnt::streaming_beam_search(first_pass, pr.e_s, ms.beam).lattice;
    pr.ref_words = frontend::canonical_words(vocab, u.tokens, sp);
    prep.push_back(std::move(pr));
  }

  const ItemLoss build = [&](nn::Graph& g, int i) -> std::optional<nn::Graph::Id> {
    Prepared& pr = prep[static_cast<size_t>(i)];
    if (pr.lat.arcs.empty()) return std::nullopt;
    const las::AttentionSourceCache cache =
        las::build_attention_cache(*las_params, las::additional_encode(*las_params, pr.e_s));
    las::rescore_lattice(&pr.lat, cache, *las_params, true);
    const std::vector<lattice::ScoredPath> paths =
        lattice::nbest(pr.lat, ms.nbest_size, ms.weights);
    if (paths.size() < 2) return std::nullopt;
    std::vector<MwerCandidate> cands;
    cands.reserve(paths.size());
    for (const lattice::ScoredPath& path : paths) {
      MwerCandidate c;
      c.tokens = path.tokens;
      if (!c.tokens.empty() && c.tokens.back() == vocab.eos_id) c.tokens.pop_back();
      for (int ai : pr.lat.path_arcs(path.terminal_node)) {
        c.first_pass_score += pr.lat.arcs[static_cast<size_t>(ai)].rnnt_logp;
      }
      c.word_errors =
          harness::edit_distance(pr.ref_words, frontend::canonical_words(vocab, c.tokens, sp))
              .distance;
      cands.push_back(std::move(c));
    }
    const nn::Graph::Id probs =
        mwer_renormalized_probs(g, *las_params, pr.e_s, cands, ms.weights.lambda_las);
    const double baseline = mwer_baseline(g.val(probs), cands);
    return mwer_loss_given_baseline(g, probs, cands, baseline);
  };
  return run_training(static_cast<int>(ds.utts.size()), las_params->params(), opt,
                      utterance_ids(ds), build);
}

}  // namespace train
}  // namespace twopass
