// SPDX-License-Identifier: Apache-2.0

#include "nn/graph.h"

#include <cmath>
#include <memory>

#include "nn/ops.h"
#include "nn/transducer.h"
#include "util/common.h"

namespace twopass {
namespace nn {

Graph::Id Graph::new_slot(Tensor val, bool needs_grad) {
  Slot s;
  s.grad = Tensor(val.shape);
  s.val = std::move(val);
  s.needs_grad = needs_grad;
  slots_.push_back(std::move(s));
  return static_cast<Id>(slots_.size()) - 1;
}

bool Graph::needs_any(const std::vector<Id>& ids) const {
  for (Id id : ids)
    if (needs(id)) return true;
  return false;
}

Graph::Id Graph::constant(Tensor t) { return new_slot(std::move(t), false); }

Graph::Id Graph::param(Parameter& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return it->second;
  Id id = new_slot(p.value, true);
  param_ids_.emplace(&p, id);
  bound_.emplace_back(&p, id);
  return id;
}

const Tensor& Graph::val(Id id) const { return slots_.at(id).val; }

const Tensor& Graph::grad_of(Id id) const {
  check(backward_done_, "grad_of before backward");
  return slots_.at(id).grad;
}

Graph::Id Graph::matmul(Id a, Id b, bool ta, bool tb) {
  Id out = new_slot(nn::matmul(v(a), v(b), ta, tb), needs_any({a, b}));
  if (!needs(out)) return out;
  add_step([this, a, b, ta, tb, out] {
    const Tensor& dc = g(out);
    if (needs(a)) {
      Tensor da;
      if (!ta)
        da = nn::matmul(dc, v(b), false, !tb);
      else if (!tb)
        da = nn::matmul(v(b), dc, false, true);
      else
        da = nn::matmul(v(b), dc, true, true);
      accumulate(g(a), da);
    }
    if (needs(b)) {
      Tensor db;
      if (!tb)
        db = nn::matmul(v(a), dc, !ta, false);
      else if (!ta)
        db = nn::matmul(dc, v(a), true, false);
      else
        db = nn::matmul(dc, v(a), true, true);
      accumulate(g(b), db);
    }
  });
  return out;
}

Graph::Id Graph::add(Id a, Id b) {
  Id out = new_slot(elem_add(v(a), v(b)), needs_any({a, b}));
  if (!needs(out)) return out;
  add_step([this, a, b, out] {
    if (needs(a)) accumulate(g(a), g(out));
    if (needs(b)) accumulate(g(b), g(out));
  });
  return out;
}

Graph::Id Graph::sub(Id a, Id b) {
  Id out = new_slot(elem_sub(v(a), v(b)), needs_any({a, b}));
  if (!needs(out)) return out;
  add_step([this, a, b, out] {
    if (needs(a)) accumulate(g(a), g(out));
    if (needs(b)) {
      const Tensor& dc = g(out);
      Tensor& db = g(b);
      for (size_t i = 0; i < db.data.size(); ++i) db.data[i] -= dc.data[i];
    }
  });
  return out;
}

Graph::Id Graph::add_bias(Id m, Id bias) {
  Id out = new_slot(add_rowwise(v(m), v(bias)), needs_any({m, bias}));
  if (!needs(out)) return out;
  add_step([this, m, bias, out] {
    if (needs(m)) accumulate(g(m), g(out));
    if (needs(bias)) accumulate(g(bias), colsum(g(out)));
  });
  return out;
}

Graph::Id Graph::scale(Id a, double c) {
  Tensor t = v(a);
  for (double& x : t.data) x *= c;
  Id out = new_slot(std::move(t), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, c, out] {
    const Tensor& dc = g(out);
    Tensor& da = g(a);
    for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += c * dc.data[i];
  });
  return out;
}

Graph::Id Graph::add_const(Id a, const Tensor& c) {
  Id out = new_slot(elem_add(v(a), c), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, out] { accumulate(g(a), g(out)); });
  return out;
}

Graph::Id Graph::mul(Id a, Id b) {
  Id out = new_slot(elem_mul(v(a), v(b)), needs_any({a, b}));
  if (!needs(out)) return out;
  add_step([this, a, b, out] {
    if (needs(a)) accumulate(g(a), elem_mul(g(out), v(b)));
    if (needs(b)) accumulate(g(b), elem_mul(g(out), v(a)));
  });
  return out;
}

Graph::Id Graph::sigmoid(Id a) {
  Id out = new_slot(sigmoid_t(v(a)), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, out] {
    const Tensor& y = v(out);
    const Tensor& dc = g(out);
    Tensor& da = g(a);
    for (size_t i = 0; i < da.data.size(); ++i)
      da.data[i] += dc.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
  return out;
}

Graph::Id Graph::tanh(Id a) {
  Id out = new_slot(tanh_t(v(a)), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, out] {
    const Tensor& y = v(out);
    const Tensor& dc = g(out);
    Tensor& da = g(a);
    for (size_t i = 0; i < da.data.size(); ++i)
      da.data[i] += dc.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
  return out;
}

Graph::Id Graph::exp(Id a) {
  Tensor t = v(a);
  for (double& x : t.data) x = std::exp(x);
  Id out = new_slot(std::move(t), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, out] {
    const Tensor& y = v(out);
    const Tensor& dc = g(out);
    Tensor& da = g(a);
    for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dc.data[i] * y.data[i];
  });
  return out;
}

Graph::Id Graph::concat_cols(const std::vector<Id>& parts) {
  check(!parts.empty(), "concat_cols needs at least one part");
  int rows = v(parts[0]).rows();
  int cols = 0;
  for (Id p : parts) {
    check(v(p).rows() == rows, "concat_cols row mismatch");
    cols += v(p).cols();
  }
  Tensor t({rows, cols});
  int off = 0;
  for (Id p : parts) {
    const Tensor& src = v(p);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < src.cols(); ++j) t.at(r, off + j) = src.at(r, j);
    off += src.cols();
  }
  Id out = new_slot(std::move(t), needs_any(parts));
  if (!needs(out)) return out;
  add_step([this, parts, out] {
    const Tensor& dc = g(out);
    int off2 = 0;
    for (Id p : parts) {
      int pc = v(p).cols();
      if (needs(p)) {
        Tensor& dp = g(p);
        for (int r = 0; r < dp.rows(); ++r)
          for (int j = 0; j < pc; ++j) dp.at(r, j) += dc.at(r, off2 + j);
      }
      off2 += pc;
    }
  });
  return out;
}

Graph::Id Graph::concat_rows(const std::vector<Id>& parts) {
  check(!parts.empty(), "concat_rows needs at least one part");
  int cols = v(parts[0]).cols();
  Tensor t;
  for (Id p : parts) {
    check(v(p).cols() == cols, "concat_rows column mismatch");
    append_rows(t, v(p));
  }
  Id out = new_slot(std::move(t), needs_any(parts));
  if (!needs(out)) return out;
  add_step([this, parts, out] {
    const Tensor& dc = g(out);
    int r0 = 0;
    for (Id p : parts) {
      int pr = v(p).rows();
      if (needs(p)) {
        Tensor& dp = g(p);
        for (int r = 0; r < pr; ++r)
          for (int j = 0; j < dp.cols(); ++j) dp.at(r, j) += dc.at(r0 + r, j);
      }
      r0 += pr;
    }
  });
  return out;
}

Graph::Id Graph::gather_rows(Id table, std::vector<int> idx) {
  const Tensor& tab = v(table);
  Tensor t({static_cast<int>(idx.size()), tab.cols()});
  for (size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < tab.rows(), "gather_rows index out of range");
    for (int j = 0; j < tab.cols(); ++j) t.at(static_cast<int>(i), j) = tab.at(idx[i], j);
  }
  Id out = new_slot(std::move(t), needs(table));
  if (!needs(out)) return out;
  add_step([this, table, idx = std::move(idx), out] {
    const Tensor& dc = g(out);
    Tensor& dt = g(table);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < dt.cols(); ++j)
        dt.at(idx[i], j) += dc.at(static_cast<int>(i), j);
  });
  return out;
}

Graph::Id Graph::log_softmax_rows(Id a) {
  Id out = new_slot(log_softmax(v(a)), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, out] {
    const Tensor& y = v(out);
    const Tensor& dc = g(out);
    Tensor& da = g(a);
    int n = y.cols();
    for (int r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += dc.at(r, j);
      for (int j = 0; j < n; ++j)
        da.at(r, j) += dc.at(r, j) - std::exp(y.at(r, j)) * s;
    }
  });
  return out;
}

Graph::Id Graph::softmax_rows(Id a) {
  Id out = new_slot(nn::softmax_rows(v(a)), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, out] {
    const Tensor& y = v(out);
    const Tensor& dc = g(out);
    Tensor& da = g(a);
    int n = y.cols();
    for (int r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += dc.at(r, j) * y.at(r, j);
      for (int j = 0; j < n; ++j) da.at(r, j) += y.at(r, j) * (dc.at(r, j) - s);
    }
  });
  return out;
}

Graph::Id Graph::sum_all(Id a) {
  double s = 0.0;
  for (double x : v(a).data) s += x;
  Id out = new_slot(Tensor::from({1, 1}, {s}), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, out] {
    double dc = g(out).data[0];
    for (double& x : g(a).data) x += dc;
  });
  return out;
}

Graph::Id Graph::gather_weighted_sum(Id mat, std::vector<std::pair<int, int>> cells,
                                     std::vector<double> weights) {
  check(cells.size() == weights.size(), "gather_weighted_sum size mismatch");
  const Tensor& m = v(mat);
  double s = 0.0;
  for (size_t k = 0; k < cells.size(); ++k) s += weights[k] * m.at(cells[k].first, cells[k].second);
  Id out = new_slot(Tensor::from({1, 1}, {s}), needs(mat));
  if (!needs(out)) return out;
  add_step([this, mat, cells = std::move(cells), weights = std::move(weights), out] {
    double dc = g(out).data[0];
    Tensor& dm = g(mat);
    for (size_t k = 0; k < cells.size(); ++k)
      dm.at(cells[k].first, cells[k].second) += dc * weights[k];
  });
  return out;
}

Graph::Id Graph::dot_const(Id a, Tensor w) {
  check(v(a).same_shape(w), "dot_const shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < w.data.size(); ++i) s += v(a).data[i] * w.data[i];
  Id out = new_slot(Tensor::from({1, 1}, {s}), needs(a));
  if (!needs(out)) return out;
  add_step([this, a, w = std::move(w), out] {
    double dc = g(out).data[0];
    Tensor& da = g(a);
    for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dc * w.data[i];
  });
  return out;
}

Graph::LstmStepIds Graph::lstm_step(Id x, Id h_prev, Id c_prev, Id wx, Id wh, Id b, Id wp) {
  auto scratch = std::make_shared<LstmCellScratch>();
  Tensor c_next;
  Tensor h = lstm_cell_forward(v(wx), v(wh), v(b), v(wp), v(x), v(h_prev), v(c_prev),
                               &c_next, scratch.get());
  bool ng = needs_any({x, h_prev, c_prev, wx, wh, b, wp});
  Id h_id = new_slot(std::move(h), ng);
  Id c_id = new_slot(std::move(c_next), ng);
  if (!ng) return {h_id, c_id};
  add_step([this, x, h_prev, c_prev, wx, wh, b, wp, h_id, c_id, scratch] {
    const Tensor& dh = g(h_id);
    const Tensor& dc_ext = g(c_id);
    // h = h_full * wp^T
    Tensor dh_full = nn::matmul(dh, v(wp));
    if (needs(wp)) accumulate(g(wp), nn::matmul(dh, scratch->h_full, true, false));
    Tensor d_o = elem_mul(dh_full, scratch->tc);
    Tensor dc = elem_mul(dh_full, scratch->o);
    for (size_t i = 0; i < dc.data.size(); ++i) {
      double tc = scratch->tc.data[i];
      dc.data[i] = dc.data[i] * (1.0 - tc * tc) + dc_ext.data[i];
    }
    Tensor d_f = elem_mul(dc, v(c_prev));
    Tensor d_i = elem_mul(dc, scratch->g);
    Tensor d_g = elem_mul(dc, scratch->i);
    if (needs(c_prev)) accumulate(g(c_prev), elem_mul(dc, scratch->f));
    int batch = dh.rows();
    int hidden = scratch->i.cols();
    Tensor dgates({batch, 4 * hidden});
    for (int r = 0; r < batch; ++r) {
      for (int j = 0; j < hidden; ++j) {
        double iv = scratch->i.at(r, j), fv = scratch->f.at(r, j);
        double gv = scratch->g.at(r, j), ov = scratch->o.at(r, j);
        dgates.at(r, j) = d_i.at(r, j) * iv * (1.0 - iv);
        dgates.at(r, hidden + j) = d_f.at(r, j) * fv * (1.0 - fv);
        dgates.at(r, 2 * hidden + j) = d_g.at(r, j) * (1.0 - gv * gv);
        dgates.at(r, 3 * hidden + j) = d_o.at(r, j) * ov * (1.0 - ov);
      }
    }
    if (needs(x)) accumulate(g(x), nn::matmul(dgates, v(wx)));
    if (needs(h_prev)) accumulate(g(h_prev), nn::matmul(dgates, v(wh)));
    if (needs(wx)) accumulate(g(wx), nn::matmul(dgates, v(x), true, false));
    if (needs(wh)) accumulate(g(wh), nn::matmul(dgates, v(h_prev), true, false));
    if (needs(b)) accumulate(g(b), colsum(dgates));
  });
  return {h_id, c_id};
}

Graph::Id Graph::joint_combine(Id enc_proj, Id pred_proj) {
  const Tensor& enc = v(enc_proj);
  const Tensor& pred = v(pred_proj);
  check(enc.cols() == pred.cols(), "joint_combine width mismatch");
  int t_len = enc.rows();
  int u_len1 = pred.rows();
  int width = enc.cols();
  Tensor t({u_len1 * t_len, width});
  for (int u = 0; u < u_len1; ++u)
    for (int tt = 0; tt < t_len; ++tt)
      for (int j = 0; j < width; ++j)
        t.at(u * t_len + tt, j) = std::tanh(enc.at(tt, j) + pred.at(u, j));
  Id out = new_slot(std::move(t), needs_any({enc_proj, pred_proj}));
  if (!needs(out)) return out;
  add_step([this, enc_proj, pred_proj, t_len, u_len1, width, out] {
    const Tensor& y = v(out);
    const Tensor& dc = g(out);
    for (int u = 0; u < u_len1; ++u) {
      for (int tt = 0; tt < t_len; ++tt) {
        int r = u * t_len + tt;
        for (int j = 0; j < width; ++j) {
          double yv = y.at(r, j);
          double d = dc.at(r, j) * (1.0 - yv * yv);
          if (needs(enc_proj)) g(enc_proj).at(tt, j) += d;
          if (needs(pred_proj)) g(pred_proj).at(u, j) += d;
        }
      }
    }
  });
  return out;
}

Graph::Id Graph::rnnt_loss(Id grid, std::vector<int> labels, int num_frames, int blank_id) {
  TransducerResult res =
      transducer_forward_backward(v(grid), labels, num_frames, blank_id, needs(grid));
  Id out = new_slot(Tensor::from({1, 1}, {res.loss}), needs(grid));
  if (!needs(out)) return out;
  auto saved = std::make_shared<Tensor>(std::move(res.grid_grad));
  add_step([this, grid, saved, out] {
    double dc = g(out).data[0];
    Tensor& dg = g(grid);
    for (size_t i = 0; i < dg.data.size(); ++i) dg.data[i] += dc * saved->data[i];
  });
  return out;
}

void Graph::backward(Id loss) {
  check(!backward_done_, "backward already run on this graph");
  check(v(loss).numel() == 1, "backward target must be a scalar");
  slots_[loss].grad.data[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  for (auto& [p, id] : bound_) {
    p->ensure_grad();
    accumulate(p->grad, slots_[id].grad);
  }
  backward_done_ = true;
}

}  // namespace nn
}  // namespace twopass
