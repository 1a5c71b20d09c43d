// SPDX-License-Identifier: Apache-2.0

#include "rnnt/beam.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "nn/ops.h"
#include "util/common.h"

namespace twopass {
namespace rnnt {

void BeamConfig::validate() const {
  check_config(beam_size >= 1, "beam_size must be >= 1");
  check_config(max_symbols_per_frame >= 1, "max_symbols_per_frame must be >= 1");
  check_config(!std::isnan(eos_decode_penalty), "eos_decode_penalty must not be NaN");
}

namespace {

struct Hyp {
  std::vector<int> tokens;
  double score = 0.0;
  PredState pred;
  std::vector<double> arc_inc;  // per-token score increments
  bool closed = false;          // ends with `</s>`: final, consumes no more frames
};

bool hyp_before(const Hyp& a, const Hyp& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

void prune(std::vector<Hyp>* hyps, int beam_size) {
  std::sort(hyps->begin(), hyps->end(), hyp_before);
  if (static_cast<int>(hyps->size()) > beam_size) hyps->resize(static_cast<size_t>(beam_size));
}

// Same token sequence reached along different alignments: scores add in
// probability space, bookkeeping follows the stronger constituent.
void merge_into(std::map<std::vector<int>, Hyp>* dst, Hyp h) {
  auto it = dst->find(h.tokens);
  if (it == dst->end()) {
    std::vector<int> key = h.tokens;
    dst->emplace(std::move(key), std::move(h));
    return;
  }
  Hyp& kept = it->second;
  double merged = nn::logaddexp(kept.score, h.score);
  if (h.score > kept.score) {
    h.score = merged;
    it->second = std::move(h);
  } else {
    kept.score = merged;
  }
}

// Emission candidate kept cheap until it survives pruning; the prediction
// network only advances for survivors.
struct PendingChild {
  int parent = 0;
  int token = 0;
  double score = 0.0;
  double inc = 0.0;
};

// Orders candidates by score, then by full token sequence (parent tokens plus
// the new token) ascending.
bool pending_before(const std::vector<Hyp>& cur, const PendingChild& a, const PendingChild& b) {
  if (a.score != b.score) return a.score > b.score;
  const std::vector<int>& ta = cur[static_cast<size_t>(a.parent)].tokens;
  const std::vector<int>& tb = cur[static_cast<size_t>(b.parent)].tokens;
  size_t na = ta.size() + 1, nb = tb.size() + 1;
  for (size_t i = 0; i < std::min(na, nb); ++i) {
    int va = i < ta.size() ? ta[i] : a.token;
    int vb = i < tb.size() ? tb[i] : b.token;
    if (va != vb) return va < vb;
  }
  return na < nb;
}

nn::Tensor pred_matrix(const std::vector<Hyp>& hyps, int proj) {
  nn::Tensor m({static_cast<int>(hyps.size()), proj});
  for (size_t i = 0; i < hyps.size(); ++i)
    for (int j = 0; j < proj; ++j) m.at(static_cast<int>(i), j) = hyps[i].pred.out.at(0, j);
  return m;
}

}  // namespace

DecodeResult streaming_beam_search(const RnnTParams& p, const nn::Tensor& e_s,
                                   const BeamConfig& cfg) {
  cfg.validate();
  check(e_s.rows() >= 1 && e_s.cols() == p.cfg.enc_proj, "beam search encoder rows mismatch");
  const int blank = p.cfg.blank_id;
  const int eos = p.cfg.eos_id;
  const bool eos_blocked = std::isinf(cfg.eos_decode_penalty) && cfg.eos_decode_penalty > 0;

  DecodeResult res;
  std::vector<Hyp> beam;
  beam.push_back(Hyp{{}, 0.0, pred_init(p), {}, false});

  for (int t = 0; t < e_s.rows(); ++t) {
    nn::Tensor e_row = e_s.row_at(t);
    std::map<std::vector<int>, Hyp> advanced;  // end-of-frame survivors
    std::vector<Hyp> cur;
    for (Hyp& h : beam) {
      if (h.closed) {
        merge_into(&advanced, std::move(h));  // final: score frozen
      } else {
        cur.push_back(std::move(h));
      }
    }

    for (int step = 0; step <= cfg.max_symbols_per_frame && !cur.empty(); ++step) {
      nn::Tensor lp = joint_logprobs(p, e_row, pred_matrix(cur, p.cfg.pred_proj));
      std::vector<PendingChild> pending;
      for (size_t i = 0; i < cur.size(); ++i) {
        Hyp& h = cur[i];
        int row = static_cast<int>(i);

        Hyp adv = h;
        adv.score = h.score + lp.at(row, blank);
        merge_into(&advanced, std::move(adv));

        if (step == cfg.max_symbols_per_frame) continue;
        for (int k = 0; k < p.cfg.vocab_size; ++k) {
          if (k == blank) continue;
          if (k == eos && eos_blocked) continue;
          double inc = lp.at(row, k) - (k == eos ? cfg.eos_decode_penalty : 0.0);
          pending.push_back(PendingChild{row, k, h.score + inc, inc});
        }
      }
      std::sort(pending.begin(), pending.end(),
                [&cur](const PendingChild& a, const PendingChild& b) {
                  return pending_before(cur, a, b);
                });
      if (static_cast<int>(pending.size()) > cfg.beam_size)
        pending.resize(static_cast<size_t>(cfg.beam_size));

      std::vector<Hyp> next;
      next.reserve(pending.size());
      for (const PendingChild& c : pending) {
        const Hyp& h = cur[static_cast<size_t>(c.parent)];
        Hyp child;
        child.tokens = h.tokens;
        child.tokens.push_back(c.token);
        child.score = c.score;
        child.arc_inc = h.arc_inc;
        child.arc_inc.push_back(c.inc);
        if (c.token == eos) {
          child.closed = true;  // final immediately; its pred state is never used
          child.pred = h.pred;
          merge_into(&advanced, std::move(child));
        } else {
          child.pred = h.pred;
          pred_advance(p, c.token, &child.pred);
          next.push_back(std::move(child));
        }
      }
      cur = std::move(next);
    }

    beam.clear();
    for (auto& [tokens, h] : advanced) beam.push_back(std::move(h));
    prune(&beam, cfg.beam_size);
    check(!beam.empty(), "beam emptied mid-search");

    FrameTrace ft;
    ft.frame = t;
    for (const Hyp& h : beam) ft.beam.emplace_back(h.tokens, h.score);
    res.trace.push_back(std::move(ft));

    if (beam.front().closed) {
      res.mic_close_frame = t + 1;
      break;
    }
  }

  res.best_tokens = beam.front().tokens;
  res.best_score = beam.front().score;

  // Reconcile per-token increments so every survivor's lattice path score sums
  // exactly to its merged score: install shortest-first, first writer fixing
  // shared-prefix arcs, each survivor's last (always newly created) arc
  // absorbing the residual. The empty hypothesis has no arcs and is dropped by
  // the lattice builder.
  std::vector<Hyp*> order;
  for (Hyp& h : beam) order.push_back(&h);
  std::sort(order.begin(), order.end(), [](const Hyp* a, const Hyp* b) {
    if (a->tokens.size() != b->tokens.size()) return a->tokens.size() < b->tokens.size();
    return a->tokens < b->tokens;
  });
  std::map<std::vector<int>, double> arc_value;
  std::vector<lattice::BeamHypothesis> hyps;
  for (Hyp* h : order) {
    lattice::BeamHypothesis bh;
    bh.tokens = h->tokens;
    if (!h->tokens.empty()) {
      std::vector<int> prefix;
      double partial = 0.0;
      for (size_t i = 0; i < h->tokens.size(); ++i) {
        prefix.push_back(h->tokens[i]);
        auto it = arc_value.find(prefix);
        if (it == arc_value.end()) it = arc_value.emplace(prefix, h->arc_inc[i]).first;
        partial += it->second;
      }
      arc_value[prefix] += h->score - partial;
      prefix.clear();
      for (int tok : h->tokens) {
        prefix.push_back(tok);
        bh.token_logps.push_back(arc_value.at(prefix));
      }
    }
    hyps.push_back(std::move(bh));
  }
  res.lattice = lattice::from_beam_hypotheses(hyps);
  return res;
}

}  // namespace rnnt
}  // namespace twopass
