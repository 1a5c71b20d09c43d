// SPDX-License-Identifier: Apache-2.0

#include "rnnt/model.h"

#include <algorithm>
#include <cmath>

#include "nn/ops.h"
#include "util/common.h"

namespace twopass {
namespace rnnt {

RnnTConfig RnnTConfig::from_config(const Config& cfg, int input_dim, const Vocab& vocab) {
  RnnTConfig c;
  c.input_dim = input_dim;
  c.vocab_size = vocab.size();
  c.blank_id = vocab.blank_id;
  c.eos_id = vocab.eos_id;
  c.enc_layers = cfg.get_int("enc_layers", c.enc_layers);
  c.enc_hidden = cfg.get_int("enc_hidden", c.enc_hidden);
  c.enc_proj = cfg.get_int("enc_proj", c.enc_proj);
  c.time_reduction = cfg.get_bool("time_reduction", c.time_reduction);
  c.time_reduction_layer = cfg.get_int("time_reduction_layer", c.time_reduction_layer);
  c.time_reduction_factor = cfg.get_int("time_reduction_factor", c.time_reduction_factor);
  c.pred_layers = cfg.get_int("pred_layers", c.pred_layers);
  c.pred_hidden = cfg.get_int("pred_hidden", c.pred_hidden);
  c.pred_proj = cfg.get_int("pred_proj", c.pred_proj);
  c.embed_dim = cfg.get_int("embed_dim", c.embed_dim);
  c.joint_dim = cfg.get_int("joint_dim", c.joint_dim);
  c.validate();
  return c;
}

Config RnnTConfig::to_config() const {
  Config cfg;
  cfg.set("input_dim", std::to_string(input_dim));
  cfg.set("enc_layers", std::to_string(enc_layers));
  cfg.set("enc_hidden", std::to_string(enc_hidden));
  cfg.set("enc_proj", std::to_string(enc_proj));
  cfg.set("time_reduction", time_reduction ? "true" : "false");
  cfg.set("time_reduction_layer", std::to_string(time_reduction_layer));
  cfg.set("time_reduction_factor", std::to_string(time_reduction_factor));
  cfg.set("pred_layers", std::to_string(pred_layers));
  cfg.set("pred_hidden", std::to_string(pred_hidden));
  cfg.set("pred_proj", std::to_string(pred_proj));
  cfg.set("embed_dim", std::to_string(embed_dim));
  cfg.set("joint_dim", std::to_string(joint_dim));
  return cfg;
}

void RnnTConfig::validate() const {
  check_config(input_dim >= 1, "encoder input dim must be positive");
  check_config(vocab_size >= 2, "vocab must hold blank plus at least one label");
  check_config(blank_id != eos_id, "blank and eos ids must differ");
  check_config(blank_id >= 0 && blank_id < vocab_size, "blank id out of range");
  check_config(eos_id >= 0 && eos_id < vocab_size, "eos id out of range");
  check_config(enc_layers >= 1 && pred_layers >= 1, "need at least one layer per stack");
  check_config(enc_hidden >= 1 && enc_proj >= 1 && pred_hidden >= 1 && pred_proj >= 1 &&
                   embed_dim >= 1 && joint_dim >= 1,
               "model dims must be positive");
  check_config(enc_proj <= enc_hidden && pred_proj <= pred_hidden,
               "projection dim cannot exceed hidden dim");
  if (time_reduction) {
    check_config(time_reduction_factor >= 2, "time reduction factor must be >= 2");
    check_config(time_reduction_layer >= 1 && time_reduction_layer < enc_layers,
                 "time reduction must sit between encoder layers");
  }
}

void RnnTParams::init(const RnnTConfig& c, uint64_t seed) {
  c.validate();
  cfg = c;
  uint64_t stream = 0;
  enc.clear();
  for (int l = 0; l < c.enc_layers; ++l) {
    int in = l == 0 ? c.input_dim : c.enc_proj;
    if (c.time_reduction && l == c.time_reduction_layer) in = c.enc_proj * c.time_reduction_factor;
    Rng rng = Rng::substream(seed, stream++);
    nn::LstmParams layer;
    layer.init("rnnt.enc" + std::to_string(l), in, c.enc_hidden, c.enc_proj, rng);
    enc.push_back(std::move(layer));
  }
  {
    Rng rng = Rng::substream(seed, stream++);
    embed = nn::Parameter("rnnt.embed",
                          nn::uniform_init({c.vocab_size, c.embed_dim}, c.embed_dim, rng));
  }
  pred.clear();
  for (int l = 0; l < c.pred_layers; ++l) {
    int in = l == 0 ? c.embed_dim : c.pred_proj;
    Rng rng = Rng::substream(seed, stream++);
    nn::LstmParams layer;
    layer.init("rnnt.pred" + std::to_string(l), in, c.pred_hidden, c.pred_proj, rng);
    pred.push_back(std::move(layer));
  }
  Rng rng = Rng::substream(seed, stream++);
  w_enc = nn::Parameter("rnnt.w_enc", nn::uniform_init({c.joint_dim, c.enc_proj}, c.enc_proj, rng));
  w_pred =
      nn::Parameter("rnnt.w_pred", nn::uniform_init({c.joint_dim, c.pred_proj}, c.pred_proj, rng));
  b_joint = nn::Parameter("rnnt.b_joint", nn::Tensor({1, c.joint_dim}));
  w_out = nn::Parameter("rnnt.w_out", nn::uniform_init({c.vocab_size, c.joint_dim}, c.joint_dim, rng));
  b_out = nn::Parameter("rnnt.b_out", nn::Tensor({1, c.vocab_size}));
}

std::vector<nn::Parameter*> RnnTParams::params() {
  std::vector<nn::Parameter*> out;
  for (nn::LstmParams& l : enc)
    for (nn::Parameter* p : l.params()) out.push_back(p);
  out.push_back(&embed);
  for (nn::LstmParams& l : pred)
    for (nn::Parameter* p : l.params()) out.push_back(p);
  out.push_back(&w_enc);
  out.push_back(&w_pred);
  out.push_back(&b_joint);
  out.push_back(&w_out);
  out.push_back(&b_out);
  return out;
}

StreamingEncoder::StreamingEncoder(const RnnTParams& p) : p_(p) {
  for (const nn::LstmParams& l : p_.enc) states_.push_back(nn::LstmState::zeros(1, l));
}

nn::Tensor StreamingEncoder::run_tail(const nn::Tensor& reduced) {
  nn::Tensor x = reduced;
  for (int l = p_.cfg.time_reduction_layer; l < p_.cfg.enc_layers; ++l)
    x = nn::lstm_step(p_.enc[static_cast<size_t>(l)], x, &states_[static_cast<size_t>(l)]);
  return x;
}

std::vector<nn::Tensor> StreamingEncoder::push(const nn::Tensor& row) {
  check(!finished_, "encoder already flushed");
  check(row.rows() == 1 && row.cols() == p_.cfg.input_dim, "encoder input dim mismatch");
  int head_layers = p_.cfg.time_reduction ? p_.cfg.time_reduction_layer : p_.cfg.enc_layers;
  nn::Tensor x = row;
  for (int l = 0; l < head_layers; ++l)
    x = nn::lstm_step(p_.enc[static_cast<size_t>(l)], x, &states_[static_cast<size_t>(l)]);
  if (!p_.cfg.time_reduction) return {x};

  group_.push_back(x);
  if (static_cast<int>(group_.size()) < p_.cfg.time_reduction_factor) return {};
  nn::Tensor reduced = group_[0];
  for (size_t i = 1; i < group_.size(); ++i) reduced = nn::concat_cols_pair(reduced, group_[i]);
  group_.clear();
  return {run_tail(reduced)};
}

std::vector<nn::Tensor> StreamingEncoder::finish() {
  check(!finished_, "encoder already flushed");
  finished_ = true;
  if (!p_.cfg.time_reduction || group_.empty()) return {};
  nn::Tensor reduced = group_[0];
  for (int i = 1; i < p_.cfg.time_reduction_factor; ++i) {
    size_t src = std::min(static_cast<size_t>(i), group_.size() - 1);
    reduced = nn::concat_cols_pair(reduced, group_[src]);
  }
  group_.clear();
  return {run_tail(reduced)};
}

nn::Tensor encode_sequence(const RnnTParams& p, const nn::Tensor& features) {
  check(features.rows() >= 1, "encoder needs at least one frame");
  StreamingEncoder enc(p);
  nn::Tensor out;
  for (int t = 0; t < features.rows(); ++t) {
    for (const nn::Tensor& row : enc.push(features.row_at(t))) nn::append_rows(out, row);
  }
  for (const nn::Tensor& row : enc.finish()) nn::append_rows(out, row);
  return out;
}

namespace {

nn::Tensor embed_row(const RnnTParams& p, int token) {
  check(token >= 0 && token < p.cfg.vocab_size, "embedding token out of range");
  nn::Tensor x({1, p.cfg.embed_dim});
  for (int j = 0; j < p.cfg.embed_dim; ++j) x.at(0, j) = p.embed.value.at(token, j);
  return x;
}

}  // namespace

PredState pred_init(const RnnTParams& p) {
  PredState s;
  for (const nn::LstmParams& l : p.pred) s.layers.push_back(nn::LstmState::zeros(1, l));
  s.out = nn::Tensor({1, p.cfg.pred_proj});
  pred_advance(p, p.cfg.blank_id, &s);
  return s;
}

void pred_advance(const RnnTParams& p, int token, PredState* s) {
  check(s->layers.size() == p.pred.size(), "prediction state layer mismatch");
  nn::Tensor x = embed_row(p, token);
  for (size_t l = 0; l < p.pred.size(); ++l) x = nn::lstm_step(p.pred[l], x, &s->layers[l]);
  s->out = x;
}

nn::Tensor joint_logprobs(const RnnTParams& p, const nn::Tensor& enc_row,
                          const nn::Tensor& pred_rows) {
  check(enc_row.rows() == 1 && enc_row.cols() == p.cfg.enc_proj, "joint encoder row mismatch");
  check(pred_rows.cols() == p.cfg.pred_proj, "joint prediction rows mismatch");
  nn::Tensor enc_side = nn::add_rowwise(nn::matmul(enc_row, p.w_enc.value, false, true),
                                        p.b_joint.value);
  nn::Tensor h = nn::add_rowwise(nn::matmul(pred_rows, p.w_pred.value, false, true), enc_side);
  h = nn::tanh_t(h);
  nn::Tensor logits = nn::add_rowwise(nn::matmul(h, p.w_out.value, false, true), p.b_out.value);
  return nn::log_softmax(logits);
}

LogProbGrid compute_grid(const RnnTParams& p, const nn::Tensor& e_s,
                         const std::vector<int>& labels) {
  check(e_s.cols() == p.cfg.enc_proj, "encoder output dim mismatch");
  check(e_s.rows() >= 1, "grid needs at least one frame");
  for (int y : labels)
    check(y >= 0 && y < p.cfg.vocab_size && y != p.cfg.blank_id, "label out of vocab");

  int num_frames = e_s.rows();
  int num_labels = static_cast<int>(labels.size());

  nn::Tensor enc_side =
      nn::add_rowwise(nn::matmul(e_s, p.w_enc.value, false, true), p.b_joint.value);
  nn::Tensor pred_side({num_labels + 1, p.cfg.joint_dim});
  PredState s = pred_init(p);
  for (int u = 0; u <= num_labels; ++u) {
    nn::Tensor proj = nn::matmul(s.out, p.w_pred.value, false, true);
    for (int j = 0; j < p.cfg.joint_dim; ++j) pred_side.at(u, j) = proj.at(0, j);
    if (u < num_labels) pred_advance(p, labels[static_cast<size_t>(u)], &s);
  }

  nn::Tensor h({(num_labels + 1) * num_frames, p.cfg.joint_dim});
  for (int u = 0; u <= num_labels; ++u)
    for (int t = 0; t < num_frames; ++t)
      for (int j = 0; j < p.cfg.joint_dim; ++j)
        h.at(u * num_frames + t, j) = std::tanh(enc_side.at(t, j) + pred_side.at(u, j));

  nn::Tensor logits = nn::add_rowwise(nn::matmul(h, p.w_out.value, false, true), p.b_out.value);
  LogProbGrid g;
  g.grid = nn::log_softmax(logits);
  g.num_frames = num_frames;
  g.num_labels = num_labels;
  return g;
}

nn::TransducerResult grid_loss(const LogProbGrid& g, const std::vector<int>& labels,
                               int blank_id, bool want_grad) {
  check(static_cast<int>(labels.size()) == g.num_labels, "labels inconsistent with grid");
  return nn::transducer_forward_backward(g.grid, labels, g.num_frames, blank_id, want_grad);
}

void EndpointerPenaltyConfig::validate() const {
  check_config(alpha_early >= 0.0 && alpha_late >= 0.0, "penalty scales must be >= 0");
  check_config(t_buffer >= 0, "t_buffer must be >= 0");
}

EndpointerPenaltyConfig EndpointerPenaltyConfig::from_config(const Config& cfg) {
  EndpointerPenaltyConfig c;
  c.alpha_early = cfg.get_double("eos_alpha_early", c.alpha_early);
  c.alpha_late = cfg.get_double("eos_alpha_late", c.alpha_late);
  c.t_buffer = cfg.get_int("eos_t_buffer", c.t_buffer);
  if (cfg.has("eos_enabled_domains"))
    for (int d : cfg.get_int_list("eos_enabled_domains")) c.enabled_domains.insert(d);
  c.validate();
  return c;
}

double eos_penalty_at(int t, int t_eos, const EndpointerPenaltyConfig& cfg) {
  double early = cfg.alpha_early * (t_eos - t);
  double late = cfg.alpha_late * (t - t_eos - cfg.t_buffer);
  return std::max(0.0, early) + std::max(0.0, late);
}

nn::Tensor eos_penalty_offsets(int num_frames, int num_labels, int vocab_size, int eos_id,
                               int t_eos, const EndpointerPenaltyConfig& cfg) {
  cfg.validate();
  check(num_frames >= 1 && num_labels >= 1, "penalty needs a non-empty grid");
  check(eos_id >= 0 && eos_id < vocab_size, "eos id out of range");
  check(t_eos >= 0, "t_eos must be >= 0");
  nn::Tensor off({(num_labels + 1) * num_frames, vocab_size});
  for (int t = 0; t < num_frames; ++t)
    off.at((num_labels - 1) * num_frames + t, eos_id) = -eos_penalty_at(t, t_eos, cfg);
  return off;
}

LogProbGrid apply_eos_penalty(const LogProbGrid& g, const std::vector<int>& labels,
                              int t_eos, int eos_id, const EndpointerPenaltyConfig& cfg) {
  check(!labels.empty() && labels.back() == eos_id, "penalty labels must end with eos");
  check(static_cast<int>(labels.size()) == g.num_labels, "labels inconsistent with grid");
  LogProbGrid out = g;
  nn::Tensor off = eos_penalty_offsets(g.num_frames, g.num_labels, out.grid.cols(), eos_id,
                                       t_eos, cfg);
  nn::accumulate(out.grid, off);
  return out;
}

nn::Graph::Id rnnt_training_loss(nn::Graph& g, RnnTParams& p, const nn::Tensor& features,
                                 const std::vector<int>& tokens, int domain, int t_eos_frame,
                                 const EndpointerPenaltyConfig& epc) {
  epc.validate();
  check(features.rows() >= 1 && features.cols() == p.cfg.input_dim,
        "training features dim mismatch");
  std::vector<int> labels = tokens;
  bool eos_on = epc.enabled_for(domain);
  if (eos_on) labels.push_back(p.cfg.eos_id);
  for (int y : labels)
    check(y >= 0 && y < p.cfg.vocab_size && y != p.cfg.blank_id, "label out of vocab");
  check(eos_on || std::find(tokens.begin(), tokens.end(), p.cfg.eos_id) == tokens.end(),
        "eos appears mid-transcript");

  const RnnTConfig& c = p.cfg;
  std::vector<nn::Graph::Id> enc_wx, enc_wh, enc_b, enc_wp;
  for (nn::LstmParams& l : p.enc) {
    enc_wx.push_back(g.param(l.wx));
    enc_wh.push_back(g.param(l.wh));
    enc_b.push_back(g.param(l.b));
    enc_wp.push_back(g.param(l.wp));
  }

  int head_layers = c.time_reduction ? c.time_reduction_layer : c.enc_layers;
  std::vector<nn::Graph::Id> h_prev(static_cast<size_t>(c.enc_layers));
  std::vector<nn::Graph::Id> c_prev(static_cast<size_t>(c.enc_layers));
  for (int l = 0; l < c.enc_layers; ++l) {
    h_prev[static_cast<size_t>(l)] = g.constant(nn::Tensor({1, c.enc_proj}));
    c_prev[static_cast<size_t>(l)] = g.constant(nn::Tensor({1, c.enc_hidden}));
  }

  std::vector<nn::Graph::Id> mid_rows;
  for (int t = 0; t < features.rows(); ++t) {
    nn::Graph::Id x = g.constant(features.row_at(t));
    for (int l = 0; l < head_layers; ++l) {
      size_t li = static_cast<size_t>(l);
      nn::Graph::LstmStepIds step =
          g.lstm_step(x, h_prev[li], c_prev[li], enc_wx[li], enc_wh[li], enc_b[li], enc_wp[li]);
      h_prev[li] = step.h;
      c_prev[li] = step.c;
      x = step.h;
    }
    mid_rows.push_back(x);
  }

  std::vector<nn::Graph::Id> enc_rows;
  int t_eos_grid = t_eos_frame;
  if (c.time_reduction) {
    t_eos_grid = (t_eos_frame + c.time_reduction_factor - 1) / c.time_reduction_factor;
    for (size_t start = 0; start < mid_rows.size();
         start += static_cast<size_t>(c.time_reduction_factor)) {
      std::vector<nn::Graph::Id> group;
      for (int i = 0; i < c.time_reduction_factor; ++i) {
        size_t src = std::min(start + static_cast<size_t>(i), mid_rows.size() - 1);
        group.push_back(mid_rows[src]);
      }
      nn::Graph::Id x = g.concat_cols(group);
      for (int l = c.time_reduction_layer; l < c.enc_layers; ++l) {
        size_t li = static_cast<size_t>(l);
        nn::Graph::LstmStepIds step =
            g.lstm_step(x, h_prev[li], c_prev[li], enc_wx[li], enc_wh[li], enc_b[li], enc_wp[li]);
        h_prev[li] = step.h;
        c_prev[li] = step.c;
        x = step.h;
      }
      enc_rows.push_back(x);
    }
  } else {
    enc_rows = mid_rows;
  }
  nn::Graph::Id enc_mat = g.concat_rows(enc_rows);
  int num_frames = static_cast<int>(enc_rows.size());

  nn::Graph::Id embed_id = g.param(p.embed);
  std::vector<nn::Graph::Id> pred_wx, pred_wh, pred_b, pred_wp;
  for (nn::LstmParams& l : p.pred) {
    pred_wx.push_back(g.param(l.wx));
    pred_wh.push_back(g.param(l.wh));
    pred_b.push_back(g.param(l.b));
    pred_wp.push_back(g.param(l.wp));
  }
  std::vector<nn::Graph::Id> ph(static_cast<size_t>(c.pred_layers));
  std::vector<nn::Graph::Id> pc(static_cast<size_t>(c.pred_layers));
  for (int l = 0; l < c.pred_layers; ++l) {
    ph[static_cast<size_t>(l)] = g.constant(nn::Tensor({1, c.pred_proj}));
    pc[static_cast<size_t>(l)] = g.constant(nn::Tensor({1, c.pred_hidden}));
  }
  std::vector<nn::Graph::Id> pred_rows;
  int num_labels = static_cast<int>(labels.size());
  for (int u = 0; u <= num_labels; ++u) {
    int token = u == 0 ? c.blank_id : labels[static_cast<size_t>(u - 1)];
    nn::Graph::Id x = g.gather_rows(embed_id, {token});
    for (int l = 0; l < c.pred_layers; ++l) {
      size_t li = static_cast<size_t>(l);
      nn::Graph::LstmStepIds step =
          g.lstm_step(x, ph[li], pc[li], pred_wx[li], pred_wh[li], pred_b[li], pred_wp[li]);
      ph[li] = step.h;
      pc[li] = step.c;
      x = step.h;
    }
    pred_rows.push_back(x);
  }
  nn::Graph::Id pred_mat = g.concat_rows(pred_rows);

  nn::Graph::Id enc_side =
      g.add_bias(g.matmul(enc_mat, g.param(p.w_enc), false, true), g.param(p.b_joint));
  nn::Graph::Id pred_side = g.matmul(pred_mat, g.param(p.w_pred), false, true);
  nn::Graph::Id comb = g.joint_combine(enc_side, pred_side);
  nn::Graph::Id logits =
      g.add_bias(g.matmul(comb, g.param(p.w_out), false, true), g.param(p.b_out));
  nn::Graph::Id logp = g.log_softmax_rows(logits);

  if (eos_on) {
    nn::Tensor off = eos_penalty_offsets(num_frames, num_labels, c.vocab_size, c.eos_id,
                                         t_eos_grid, epc);
    if (off.abs_max() > 0.0) logp = g.add_const(logp, off);
  }
  return g.rnnt_loss(logp, labels, num_frames, c.blank_id);
}

}  // namespace rnnt
}  // namespace twopass
