// SPDX-License-Identifier: Apache-2.0

#include "las/las.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "nn/ops.h"
#include "util/common.h"
#include "util/stats.h"

namespace twopass {
namespace las {

LasConfig LasConfig::from_config(const Config& cfg, int source_dim, const rnnt::Vocab& vocab) {
  LasConfig c;
  c.source_dim = source_dim;
  c.vocab_size = vocab.size();
  c.eos_id = vocab.eos_id;
  c.enc_layers = static_cast<int>(cfg.get_int("las_enc_layers", c.enc_layers));
  c.enc_hidden = static_cast<int>(cfg.get_int("las_enc_hidden", c.enc_hidden));
  c.enc_proj = static_cast<int>(cfg.get_int("las_enc_proj", c.enc_proj));
  c.dec_layers = static_cast<int>(cfg.get_int("las_dec_layers", c.dec_layers));
  c.dec_hidden = static_cast<int>(cfg.get_int("las_dec_hidden", c.dec_hidden));
  c.dec_proj = static_cast<int>(cfg.get_int("las_dec_proj", c.dec_proj));
  c.embed_dim = static_cast<int>(cfg.get_int("las_embed_dim", c.embed_dim));
  c.attn_heads = static_cast<int>(cfg.get_int("las_attn_heads", c.attn_heads));
  c.attn_head_dim = static_cast<int>(cfg.get_int("las_attn_head_dim", c.attn_head_dim));
  c.validate();
  return c;
}

Config LasConfig::to_config() const {
  Config cfg;
  cfg.set("source_dim", std::to_string(source_dim));
  cfg.set("las_enc_layers", std::to_string(enc_layers));
  cfg.set("las_enc_hidden", std::to_string(enc_hidden));
  cfg.set("las_enc_proj", std::to_string(enc_proj));
  cfg.set("las_dec_layers", std::to_string(dec_layers));
  cfg.set("las_dec_hidden", std::to_string(dec_hidden));
  cfg.set("las_dec_proj", std::to_string(dec_proj));
  cfg.set("las_embed_dim", std::to_string(embed_dim));
  cfg.set("las_attn_heads", std::to_string(attn_heads));
  cfg.set("las_attn_head_dim", std::to_string(attn_head_dim));
  return cfg;
}

void LasConfig::validate() const {
  check_config(source_dim > 0, "las source_dim must be positive");
  check_config(vocab_size >= 2, "las vocab_size must be >= 2");
  check_config(eos_id >= 0 && eos_id < vocab_size, "las eos_id out of vocab");
  check_config(enc_layers > 0 && enc_hidden > 0 && enc_proj > 0, "las encoder dims");
  check_config(dec_layers > 0 && dec_hidden > 0 && dec_proj > 0, "las decoder dims");
  check_config(embed_dim > 0, "las embed_dim must be positive");
  check_config(attn_heads > 0 && attn_head_dim > 0, "las attention dims");
  check_config(enc_proj <= enc_hidden && dec_proj <= dec_hidden,
               "las projection must not exceed hidden size");
}

void LasParams::init(const LasConfig& c, uint64_t seed) {
  c.validate();
  cfg = c;
  uint64_t stream = 0;
  enc.clear();
  for (int l = 0; l < c.enc_layers; ++l) {
    int in = l == 0 ? c.source_dim : c.enc_proj;
    Rng rng = Rng::substream(seed, stream++);
    nn::LstmParams layer;
    layer.init("las.enc" + std::to_string(l), in, c.enc_hidden, c.enc_proj, rng);
    enc.push_back(std::move(layer));
  }
  {
    Rng rng = Rng::substream(seed, stream++);
    embed = nn::Parameter("las.embed",
                          nn::uniform_init({c.num_outputs(), c.embed_dim}, c.embed_dim, rng));
  }
  {
    Rng rng = Rng::substream(seed, stream++);
    attn.init("las.attn", c.attn_heads, c.dec_proj, c.enc_proj, c.attn_head_dim, rng);
  }
  dec.clear();
  for (int l = 0; l < c.dec_layers; ++l) {
    int in = l == 0 ? c.embed_dim + attn.out_dim : c.dec_proj;
    Rng rng = Rng::substream(seed, stream++);
    nn::LstmParams layer;
    layer.init("las.dec" + std::to_string(l), in, c.dec_hidden, c.dec_proj, rng);
    dec.push_back(std::move(layer));
  }
  Rng rng = Rng::substream(seed, stream++);
  int readout = c.dec_proj + attn.out_dim;
  w_out = nn::Parameter("las.w_out", nn::uniform_init({c.num_outputs(), readout}, readout, rng));
  b_out = nn::Parameter("las.b_out", nn::Tensor({1, c.num_outputs()}));
}

std::vector<nn::Parameter*> LasParams::params() {
  std::vector<nn::Parameter*> out;
  for (nn::LstmParams& l : enc)
    for (nn::Parameter* p : l.params()) out.push_back(p);
  out.push_back(&embed);
  for (nn::Parameter* p : attn.params()) out.push_back(p);
  for (nn::LstmParams& l : dec)
    for (nn::Parameter* p : l.params()) out.push_back(p);
  out.push_back(&w_out);
  out.push_back(&b_out);
  return out;
}

nn::Tensor additional_encode(const LasParams& p, const nn::Tensor& e_s) {
  check(e_s.ndim() == 2 && e_s.rows() >= 1 && e_s.cols() == p.cfg.source_dim,
        "additional encoder input dim mismatch");
  std::vector<nn::LstmState> states;
  for (const nn::LstmParams& l : p.enc) states.push_back(nn::LstmState::zeros(1, l));
  nn::Tensor out;
  for (int t = 0; t < e_s.rows(); ++t) {
    nn::Tensor x = e_s.row_at(t);
    for (size_t l = 0; l < p.enc.size(); ++l) x = nn::lstm_step(p.enc[l], x, &states[l]);
    nn::append_rows(out, x);
  }
  return out;
}

void extend_attention_cache(const LasParams& p, const nn::Tensor& e_a_rows,
                            AttentionSourceCache* cache) {
  if (e_a_rows.shape.empty() || e_a_rows.numel() == 0) return;
  check(e_a_rows.ndim() == 2 && e_a_rows.cols() == p.cfg.enc_proj,
        "attention cache input dim mismatch");
  nn::project_attention_source(p.attn, e_a_rows, e_a_rows, &cache->k_heads, &cache->v_heads);
  cache->length += e_a_rows.rows();
}

AttentionSourceCache build_attention_cache(const LasParams& p, const nn::Tensor& e_a) {
  AttentionSourceCache cache;
  extend_attention_cache(p, e_a, &cache);
  return cache;
}

LasStream::LasStream(const LasParams& p) : p_(p) {
  for (const nn::LstmParams& l : p_.enc) enc_states_.push_back(nn::LstmState::zeros(1, l));
}

void LasStream::push(const nn::Tensor& e_s_row) {
  check(e_s_row.ndim() == 2 && e_s_row.cols() == p_.cfg.source_dim,
        "las stream input dim mismatch");
  for (int r = 0; r < e_s_row.rows(); ++r) {
    nn::Tensor x = e_s_row.rows() == 1 ? e_s_row : e_s_row.row_at(r);
    for (size_t l = 0; l < p_.enc.size(); ++l) x = nn::lstm_step(p_.enc[l], x, &enc_states_[l]);
    extend_attention_cache(p_, x, &cache_);
  }
}

DecoderState decoder_init(const LasParams& p) {
  DecoderState s;
  for (const nn::LstmParams& l : p.dec) s.layers.push_back(nn::LstmState::zeros(1, l));
  s.ctx = nn::Tensor({1, p.attn.out_dim});
  return s;
}

namespace {

// One decoder step for a batch of same-state hypotheses differing only in the
// previous token; row i of the result is the log-prob row after prev_tokens[i].
struct BatchStepResult {
  nn::Tensor logprobs;               // {B, vocab+1}
  std::vector<nn::LstmState> layers;  // batched states {B, ...}
  nn::Tensor ctx;                    // {B, attn.out_dim}
};

nn::Tensor replicate_rows(const nn::Tensor& row, int copies) {
  nn::Tensor out({copies, row.cols()});
  for (int r = 0; r < copies; ++r)
    for (int c = 0; c < row.cols(); ++c) out.at(r, c) = row.at(0, c);
  return out;
}

BatchStepResult batch_step(const LasParams& p, const AttentionSourceCache& cache,
                           const std::vector<int>& prev_tokens, const DecoderState& state) {
  check(cache.length >= 1, "attention cache is empty");
  int batch = static_cast<int>(prev_tokens.size());
  check(batch >= 1, "decoder step needs at least one token");

  nn::Tensor x({batch, p.cfg.embed_dim + p.attn.out_dim});
  for (int i = 0; i < batch; ++i) {
    int tok = prev_tokens[static_cast<size_t>(i)];
    check(tok >= 0 && tok <= p.cfg.sos_token(), "decoder prev token out of range");
    for (int j = 0; j < p.cfg.embed_dim; ++j) x.at(i, j) = p.embed.value.at(tok, j);
    for (int j = 0; j < p.attn.out_dim; ++j)
      x.at(i, p.cfg.embed_dim + j) = state.ctx.at(0, j);
  }

  BatchStepResult out;
  for (size_t l = 0; l < p.dec.size(); ++l) {
    nn::LstmState st;
    st.h = replicate_rows(state.layers[l].h, batch);
    st.c = replicate_rows(state.layers[l].c, batch);
    x = nn::lstm_step(p.dec[l], x, &st);
    out.layers.push_back(std::move(st));
  }
  out.ctx = nn::multi_head_attention_cached(p.attn, x, cache.k_heads, cache.v_heads);
  nn::Tensor readout = nn::concat_cols_pair(x, out.ctx);
  nn::Tensor logits =
      nn::add_rowwise(nn::matmul(readout, p.w_out.value, false, true), p.b_out.value);
  out.logprobs = nn::log_softmax(logits);
  return out;
}

DecoderState extract_state(const BatchStepResult& batch, int row) {
  DecoderState s;
  for (const nn::LstmState& st : batch.layers) {
    nn::LstmState one;
    one.h = st.h.row_at(row);
    one.c = st.c.row_at(row);
    s.layers.push_back(std::move(one));
  }
  s.ctx = batch.ctx.row_at(row);
  return s;
}

}  // namespace

nn::Tensor teacher_force_step(const LasParams& p, const AttentionSourceCache& cache,
                              int prev_token, DecoderState* state) {
  BatchStepResult r = batch_step(p, cache, {prev_token}, *state);
  *state = extract_state(r, 0);
  return r.logprobs;
}

double score_sequence(const LasParams& p, const AttentionSourceCache& cache,
                      const std::vector<int>& tokens) {
  for (int tok : tokens)
    check(tok != p.cfg.eos_id, "first-pass eos must be stripped before scoring");
  DecoderState s = decoder_init(p);
  double total = 0.0;
  int prev = p.cfg.sos_token();
  for (int tok : tokens) {
    nn::Tensor lp = teacher_force_step(p, cache, prev, &s);
    total += lp.at(0, tok);
    prev = tok;
  }
  nn::Tensor lp = teacher_force_step(p, cache, prev, &s);
  total += lp.at(0, p.cfg.eos_col());
  return total;
}

namespace {

struct Rescorer {
  lattice::PrefixTreeLattice* lat;
  const AttentionSourceCache& cache;
  const LasParams& p;
  bool batched;

  void set_las(int arc, double v) {
    lat->arcs[arc].las_logp = v;
    lat->arcs[arc].has_las = true;
  }

  // lp: log-prob row emitted on arrival at `node` (after consuming its path).
  void expand(int node, const DecoderState& state, const nn::Tensor& lp) {
    std::vector<int> child_arcs;
    std::vector<int> child_tokens;
    for (int a : lat->nodes[static_cast<size_t>(node)].out) {
      const lattice::Arc& arc = lat->arcs[static_cast<size_t>(a)];
      if (arc.token == p.cfg.eos_id) {
        // First-pass `</s>` is stripped from the scored path: the arc carries
        // only the rescorer's end-of-sequence term for the path up to here.
        const lattice::Node& child = lat->nodes[static_cast<size_t>(arc.to)];
        check(child.out.empty() && child.terminal, "first-pass eos arc must end a hypothesis");
        set_las(a, lp.at(0, p.cfg.eos_col()));
        continue;
      }
      set_las(a, lp.at(0, arc.token));
      child_arcs.push_back(a);
      child_tokens.push_back(arc.token);
    }
    if (child_arcs.empty()) return;

    if (batched) {
      BatchStepResult step = batch_step(p, cache, child_tokens, state);
      for (size_t i = 0; i < child_arcs.size(); ++i) {
        const lattice::Arc& arc = lat->arcs[static_cast<size_t>(child_arcs[i])];
        nn::Tensor row = step.logprobs.row_at(static_cast<int>(i));
        if (lat->nodes[static_cast<size_t>(arc.to)].terminal)
          lat->arcs[static_cast<size_t>(child_arcs[i])].las_logp += row.at(0, p.cfg.eos_col());
        expand(arc.to, extract_state(step, static_cast<int>(i)), row);
      }
    } else {
      for (size_t i = 0; i < child_arcs.size(); ++i) {
        const lattice::Arc& arc = lat->arcs[static_cast<size_t>(child_arcs[i])];
        DecoderState child_state = state;
        nn::Tensor row = teacher_force_step(p, cache, child_tokens[i], &child_state);
        if (lat->nodes[static_cast<size_t>(arc.to)].terminal)
          lat->arcs[static_cast<size_t>(child_arcs[i])].las_logp += row.at(0, p.cfg.eos_col());
        expand(arc.to, child_state, row);
      }
    }
  }
};

}  // namespace

void rescore_lattice(lattice::PrefixTreeLattice* lat, const AttentionSourceCache& cache,
                     const LasParams& p, bool batched) {
  check(lat != nullptr, "rescore needs a lattice");
  if (lat->num_arcs() == 0) return;
  check(cache.length >= 1, "attention cache is empty");
  DecoderState s = decoder_init(p);
  nn::Tensor lp = teacher_force_step(p, cache, p.cfg.sos_token(), &s);
  Rescorer r{lat, cache, p, batched};
  r.expand(lattice::PrefixTreeLattice::kRoot, s, lp);
}

RescoreBenchStats bench_rescore(std::vector<lattice::PrefixTreeLattice>* lats,
                                const std::vector<AttentionSourceCache>& caches,
                                const LasParams& p, bool batched, int repetitions) {
  check(lats != nullptr && lats->size() == caches.size(), "benchmark lattice/cache mismatch");
  check_config(repetitions >= 1, "bench repetitions must be >= 1");
  RescoreBenchStats stats;
  for (int rep = 0; rep < repetitions; ++rep) {
    for (size_t i = 0; i < lats->size(); ++i) {
      for (lattice::Arc& a : (*lats)[i].arcs) {
        a.has_las = false;
        a.las_logp = 0.0;
      }
      auto begin = std::chrono::steady_clock::now();
      rescore_lattice(&(*lats)[i], caches[i], p, batched);
      auto end = std::chrono::steady_clock::now();
      stats.wall_ms.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
    }
  }
  stats.p50_ms = percentile_nearest_rank(stats.wall_ms, 50.0);
  stats.p90_ms = percentile_nearest_rank(stats.wall_ms, 90.0);
  return stats;
}

namespace {

// Attention pieces bound once per tape: per-head projection blocks and the
// projected source keys/values.
struct TapeAttention {
  std::vector<nn::Graph::Id> wq_h;  // {head_dim, query_dim}
  std::vector<nn::Graph::Id> k_h;   // {S, head_dim}
  std::vector<nn::Graph::Id> v_h;
  nn::Graph::Id wo;
  double inv_scale = 1.0;
};

TapeAttention bind_tape_attention(nn::Graph& g, LasParams& p, nn::Graph::Id e_a) {
  TapeAttention t;
  nn::Graph::Id wq = g.param(p.attn.wq);
  nn::Graph::Id wk = g.param(p.attn.wk);
  nn::Graph::Id wv = g.param(p.attn.wv);
  t.wo = g.param(p.attn.wo);
  t.inv_scale = 1.0 / std::sqrt(static_cast<double>(p.attn.head_dim));
  for (int h = 0; h < p.attn.num_heads; ++h) {
    std::vector<int> rows;
    for (int j = 0; j < p.attn.head_dim; ++j) rows.push_back(h * p.attn.head_dim + j);
    nn::Graph::Id wq_block = g.gather_rows(wq, rows);
    nn::Graph::Id wk_block = g.gather_rows(wk, rows);
    nn::Graph::Id wv_block = g.gather_rows(wv, rows);
    t.wq_h.push_back(wq_block);
    t.k_h.push_back(g.matmul(e_a, wk_block, false, true));
    t.v_h.push_back(g.matmul(e_a, wv_block, false, true));
  }
  return t;
}

nn::Graph::Id tape_attend(nn::Graph& g, const TapeAttention& t, nn::Graph::Id query) {
  std::vector<nn::Graph::Id> ctx;
  for (size_t h = 0; h < t.wq_h.size(); ++h) {
    nn::Graph::Id qh = g.matmul(query, t.wq_h[h], false, true);
    nn::Graph::Id scores = g.scale(g.matmul(qh, t.k_h[h], false, true), t.inv_scale);
    ctx.push_back(g.matmul(g.softmax_rows(scores), t.v_h[h]));
  }
  return g.matmul(g.concat_cols(ctx), t.wo, false, true);
}

// Log-prob rows for teacher-forced steps consuming [sos, tokens...]; row u is
// the distribution over the token following tokens[0..u-1].
nn::Graph::Id tape_step_rows(nn::Graph& g, LasParams& p, const nn::Tensor& e_s,
                             const std::vector<int>& tokens) {
  check(e_s.ndim() == 2 && e_s.rows() >= 1 && e_s.cols() == p.cfg.source_dim,
        "las tape input dim mismatch");
  for (int tok : tokens) {
    check(tok >= 0 && tok < p.cfg.vocab_size, "las target out of vocab");
    check(tok != p.cfg.eos_id, "first-pass eos must be stripped before scoring");
  }
  const LasConfig& c = p.cfg;

  std::vector<nn::Graph::Id> wx, wh, b, wp;
  for (nn::LstmParams& l : p.enc) {
    wx.push_back(g.param(l.wx));
    wh.push_back(g.param(l.wh));
    b.push_back(g.param(l.b));
    wp.push_back(g.param(l.wp));
  }
  std::vector<nn::Graph::Id> h_prev(p.enc.size()), c_prev(p.enc.size());
  for (size_t l = 0; l < p.enc.size(); ++l) {
    h_prev[l] = g.constant(nn::Tensor({1, c.enc_proj}));
    c_prev[l] = g.constant(nn::Tensor({1, c.enc_hidden}));
  }
  std::vector<nn::Graph::Id> e_a_rows;
  for (int t = 0; t < e_s.rows(); ++t) {
    nn::Graph::Id x = g.constant(e_s.row_at(t));
    for (size_t l = 0; l < p.enc.size(); ++l) {
      nn::Graph::LstmStepIds step = g.lstm_step(x, h_prev[l], c_prev[l], wx[l], wh[l], b[l], wp[l]);
      h_prev[l] = step.h;
      c_prev[l] = step.c;
      x = step.h;
    }
    e_a_rows.push_back(x);
  }
  TapeAttention attn = bind_tape_attention(g, p, g.concat_rows(e_a_rows));

  nn::Graph::Id embed_id = g.param(p.embed);
  std::vector<nn::Graph::Id> dwx, dwh, db, dwp;
  for (nn::LstmParams& l : p.dec) {
    dwx.push_back(g.param(l.wx));
    dwh.push_back(g.param(l.wh));
    db.push_back(g.param(l.b));
    dwp.push_back(g.param(l.wp));
  }
  nn::Graph::Id w_out_id = g.param(p.w_out);
  nn::Graph::Id b_out_id = g.param(p.b_out);

  std::vector<nn::Graph::Id> dh(p.dec.size()), dc(p.dec.size());
  for (size_t l = 0; l < p.dec.size(); ++l) {
    dh[l] = g.constant(nn::Tensor({1, c.dec_proj}));
    dc[l] = g.constant(nn::Tensor({1, c.dec_hidden}));
  }
  nn::Graph::Id ctx = g.constant(nn::Tensor({1, p.attn.out_dim}));

  std::vector<nn::Graph::Id> lp_rows;
  for (size_t u = 0; u <= tokens.size(); ++u) {
    int prev = u == 0 ? c.sos_token() : tokens[u - 1];
    nn::Graph::Id emb = g.gather_rows(embed_id, {prev});
    nn::Graph::Id x = g.concat_cols({emb, ctx});
    for (size_t l = 0; l < p.dec.size(); ++l) {
      nn::Graph::LstmStepIds step = g.lstm_step(x, dh[l], dc[l], dwx[l], dwh[l], db[l], dwp[l]);
      dh[l] = step.h;
      dc[l] = step.c;
      x = step.h;
    }
    ctx = tape_attend(g, attn, x);
    nn::Graph::Id logits =
        g.add_bias(g.matmul(g.concat_cols({x, ctx}), w_out_id, false, true), b_out_id);
    lp_rows.push_back(g.log_softmax_rows(logits));
  }
  return g.concat_rows(lp_rows);
}

}  // namespace

nn::Graph::Id las_ce_loss(nn::Graph& g, LasParams& p, const nn::Tensor& e_s,
                          const std::vector<int>& targets) {
  nn::Graph::Id rows = tape_step_rows(g, p, e_s, targets);
  std::vector<std::pair<int, int>> cells;
  std::vector<double> weights;
  for (size_t u = 0; u < targets.size(); ++u) {
    cells.emplace_back(static_cast<int>(u), targets[u]);
    weights.push_back(-1.0);
  }
  cells.emplace_back(static_cast<int>(targets.size()), p.cfg.eos_col());
  weights.push_back(-1.0);
  return g.gather_weighted_sum(rows, cells, weights);
}

nn::Graph::Id las_sequence_logprob(nn::Graph& g, LasParams& p, const nn::Tensor& e_s,
                                   const std::vector<int>& tokens) {
  nn::Graph::Id rows = tape_step_rows(g, p, e_s, tokens);
  std::vector<std::pair<int, int>> cells;
  std::vector<double> weights;
  for (size_t u = 0; u < tokens.size(); ++u) {
    cells.emplace_back(static_cast<int>(u), tokens[u]);
    weights.push_back(1.0);
  }
  cells.emplace_back(static_cast<int>(tokens.size()), p.cfg.eos_col());
  weights.push_back(1.0);
  return g.gather_weighted_sum(rows, cells, weights);
}

}  // namespace las
}  // namespace twopass
