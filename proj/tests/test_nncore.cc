// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "nn/attention.h"
#include "nn/gradcheck.h"
#include "nn/graph.h"
#include "nn/lstm.h"
#include "nn/ops.h"
#include "nn/tensor.h"
#include "util/common.h"
#include "util/rng.h"

using namespace twopass;
using nn::Tensor;

namespace {

Tensor identity(int n) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("tensor shape/data consistency is enforced") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1.0, 2.0}), ContractError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.data.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
}

TEST_CASE("matmul matches naive triple loop in all transpose variants") {
  Rng rng(1);
  Tensor a = nn::gaussian_tensor({3, 4}, rng);
  Tensor b = nn::gaussian_tensor({4, 2}, rng);
  Tensor at = nn::transpose(a);
  Tensor bt = nn::transpose(b);
  Tensor ref({3, 2});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 4; ++k) ref.at(i, j) += a.at(i, k) * b.at(k, j);
  CHECK(nn::max_abs_diff(nn::matmul(a, b), ref) <= 1e-12);
  CHECK(nn::max_abs_diff(nn::matmul(a, bt, false, true), ref) <= 1e-12);
  CHECK(nn::max_abs_diff(nn::matmul(at, b, true, false), ref) <= 1e-12);
  CHECK(nn::max_abs_diff(nn::matmul(at, bt, true, true), ref) <= 1e-12);
  CHECK_THROWS_AS(nn::matmul(a, a), ContractError);
}

TEST_CASE("log_softmax symmetric two-way case") {
  Tensor out = nn::log_softmax(Tensor::row({0.0, 0.0}));
  CHECK(out.at(0, 0) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("log_softmax is stable for extreme logits") {
  Tensor out = nn::log_softmax(Tensor::row({1000.0, 0.0}));
  CHECK(out.all_finite());
  CHECK(out.at(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(out.at(0, 1) == doctest::Approx(-1000.0).epsilon(1e-9));
}

TEST_CASE("log_softmax matches direct computation") {
  Tensor out = nn::log_softmax(Tensor::row({1.0, 2.0, 3.0}));
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int j = 0; j < 3; ++j)
    CHECK(out.at(0, j) == doctest::Approx(std::log(std::exp(1.0 + j) / z)).epsilon(1e-12));
}

TEST_CASE("log_softmax rows exponentiate to unit sum") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Tensor x = nn::gaussian_tensor({3, 5}, rng, 0.0, 10.0);
    Tensor out = nn::log_softmax(x);
    for (int r = 0; r < 3; ++r) {
      double s = 0.0;
      for (int j = 0; j < 5; ++j) s += std::exp(out.at(r, j));
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("lstm_step zero weights give zero output") {
  nn::LstmParams p;
  Rng rng(1);
  p.init("z", 3, 4, 2, rng);
  for (nn::Parameter* q : p.params()) q->value.fill(0.0);
  nn::LstmState st = nn::LstmState::zeros(1, p);
  Rng rx(2);
  Tensor out = nn::lstm_step(p, nn::gaussian_tensor({1, 3}, rx), &st);
  CHECK(out.abs_max() == 0.0);
}

TEST_CASE("lstm_step zero input and zero biases give zero output") {
  nn::LstmParams p;
  Rng rng(3);
  p.init("z", 3, 4, 2, rng);
  p.b.value.fill(0.0);
  nn::LstmState st = nn::LstmState::zeros(1, p);
  Tensor out = nn::lstm_step(p, Tensor({1, 3}), &st);
  CHECK(out.abs_max() == 0.0);
  CHECK(st.c.abs_max() == 0.0);
}

TEST_CASE("lstm_step matches straight-line formula evaluation") {
  const int in_dim = 4, hidden = 8, proj = 4;
  nn::LstmParams p;
  Rng rng(7);
  p.init("l", in_dim, hidden, proj, rng);
  Tensor x = nn::gaussian_tensor({1, in_dim}, rng);
  Tensor h_prev = nn::gaussian_tensor({1, proj}, rng, 0.0, 0.5);
  Tensor c_prev = nn::gaussian_tensor({1, hidden}, rng, 0.0, 0.5);

  nn::LstmState st;
  st.h = h_prev;
  st.c = c_prev;
  Tensor got = nn::lstm_step(p, x, &st);

  std::vector<double> pre(4 * hidden);
  for (int k = 0; k < 4 * hidden; ++k) {
    double s = p.b.value.at(0, k);
    for (int j = 0; j < in_dim; ++j) s += p.wx.value.at(k, j) * x.at(0, j);
    for (int j = 0; j < proj; ++j) s += p.wh.value.at(k, j) * h_prev.at(0, j);
    pre[k] = s;
  }
  std::vector<double> h_full(hidden), c_new(hidden);
  for (int j = 0; j < hidden; ++j) {
    double ig = 1.0 / (1.0 + std::exp(-pre[j]));
    double fg = 1.0 / (1.0 + std::exp(-pre[hidden + j]));
    double gg = std::tanh(pre[2 * hidden + j]);
    double og = 1.0 / (1.0 + std::exp(-pre[3 * hidden + j]));
    c_new[j] = fg * c_prev.at(0, j) + ig * gg;
    h_full[j] = og * std::tanh(c_new[j]);
  }
  for (int pr = 0; pr < proj; ++pr) {
    double s = 0.0;
    for (int j = 0; j < hidden; ++j) s += p.wp.value.at(pr, j) * h_full[j];
    CHECK(got.at(0, pr) == doctest::Approx(s).epsilon(1e-12));
  }
  for (int j = 0; j < hidden; ++j)
    CHECK(st.c.at(0, j) == doctest::Approx(c_new[j]).epsilon(1e-12));
}

TEST_CASE("lstm_step is bit-identical across repeated evaluation") {
  nn::LstmParams p;
  Rng rng(13);
  p.init("l", 3, 5, 3, rng);
  Tensor x = nn::gaussian_tensor({2, 3}, rng);
  nn::LstmState s1 = nn::LstmState::zeros(2, p);
  nn::LstmState s2 = nn::LstmState::zeros(2, p);
  Tensor o1 = nn::lstm_step(p, x, &s1);
  Tensor o2 = nn::lstm_step(p, x, &s2);
  for (size_t i = 0; i < o1.data.size(); ++i) CHECK(o1.data[i] == o2.data[i]);
  for (size_t i = 0; i < s1.c.data.size(); ++i) CHECK(s1.c.data[i] == s2.c.data[i]);
}

TEST_CASE("lstm_step rejects dimension mismatch") {
  nn::LstmParams p;
  Rng rng(4);
  p.init("l", 3, 4, 2, rng);
  nn::LstmState st = nn::LstmState::zeros(1, p);
  CHECK_THROWS_AS(nn::lstm_step(p, Tensor({1, 5}), &st), ContractError);
}

TEST_CASE("lstm init rejects projection wider than hidden") {
  nn::LstmParams p;
  Rng rng(4);
  CHECK_THROWS_AS(p.init("l", 3, 2, 4, rng), ContractError);
}

TEST_CASE("attention with S=1 returns the single value row under identity projections") {
  nn::AttentionParams p;
  Rng rng(1);
  p.init("a", 1, 3, 3, 3, rng);
  p.wq.value = identity(3);
  p.wk.value = identity(3);
  p.wv.value = identity(3);
  p.wo.value = identity(3);
  Tensor value = Tensor::from({1, 3}, {0.4, -1.2, 2.5});
  Tensor key = Tensor::from({1, 3}, {9.0, 9.0, 9.0});
  Tensor q1 = Tensor::from({1, 3}, {1.0, 0.0, 0.0});
  Tensor ctx = nn::multi_head_attention(p, q1, key, value);
  CHECK(nn::max_abs_diff(ctx, value) <= 1e-12);
}

TEST_CASE("attention with S=1 ignores the query entirely") {
  nn::AttentionParams p;
  Rng rng(21);
  p.init("a", 2, 4, 3, 2, rng);
  Tensor key = nn::gaussian_tensor({1, 3}, rng);
  Tensor value = nn::gaussian_tensor({1, 3}, rng);
  Tensor c1 = nn::multi_head_attention(p, nn::gaussian_tensor({1, 4}, rng), key, value);
  Tensor c2 = nn::multi_head_attention(p, nn::gaussian_tensor({1, 4}, rng), key, value);
  CHECK(nn::max_abs_diff(c1, c2) <= 1e-12);
}

TEST_CASE("attention with identical keys averages the value rows") {
  nn::AttentionParams p;
  Rng rng(1);
  p.init("a", 1, 2, 2, 2, rng);
  p.wq.value = identity(2);
  p.wk.value = identity(2);
  p.wv.value = identity(2);
  p.wo.value = identity(2);
  Tensor keys = Tensor::from({2, 2}, {1.0, 2.0, 1.0, 2.0});
  Tensor values = Tensor::from({2, 2}, {1.0, 0.0, 3.0, -2.0});
  Tensor ctx = nn::multi_head_attention(p, Tensor::from({1, 2}, {0.3, -0.7}), keys, values);
  CHECK(ctx.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ctx.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("attention matches direct formula evaluation") {
  const int heads = 2, qdim = 4, sdim = 4, hdim = 2, S = 3;
  nn::AttentionParams p;
  Rng rng(11);
  p.init("a", heads, qdim, sdim, hdim, rng);
  Tensor keys = nn::gaussian_tensor({S, sdim}, rng);
  Tensor values = nn::gaussian_tensor({S, sdim}, rng);
  Tensor query = nn::gaussian_tensor({1, qdim}, rng);
  Tensor got = nn::multi_head_attention(p, query, keys, values);

  int packed = heads * hdim;
  std::vector<double> qp(packed, 0.0);
  for (int k = 0; k < packed; ++k)
    for (int j = 0; j < qdim; ++j) qp[k] += p.wq.value.at(k, j) * query.at(0, j);
  std::vector<std::vector<double>> kp(S, std::vector<double>(packed, 0.0)), vp = kp;
  for (int s = 0; s < S; ++s)
    for (int k = 0; k < packed; ++k)
      for (int j = 0; j < sdim; ++j) {
        kp[s][k] += p.wk.value.at(k, j) * keys.at(s, j);
        vp[s][k] += p.wv.value.at(k, j) * values.at(s, j);
      }
  std::vector<double> ctx(packed, 0.0);
  for (int h = 0; h < heads; ++h) {
    std::vector<double> sc(S, 0.0);
    for (int s = 0; s < S; ++s) {
      for (int j = 0; j < hdim; ++j) sc[s] += qp[h * hdim + j] * kp[s][h * hdim + j];
      sc[s] /= std::sqrt(static_cast<double>(hdim));
    }
    double mx = std::max({sc[0], sc[1], sc[2]});
    double z = 0.0;
    for (int s = 0; s < S; ++s) z += std::exp(sc[s] - mx);
    for (int s = 0; s < S; ++s) {
      double a = std::exp(sc[s] - mx) / z;
      for (int j = 0; j < hdim; ++j) ctx[h * hdim + j] += a * vp[s][h * hdim + j];
    }
  }
  for (int k = 0; k < p.out_dim; ++k) {
    double s = 0.0;
    for (int j = 0; j < packed; ++j) s += p.wo.value.at(k, j) * ctx[j];
    CHECK(got.at(0, k) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("attention rejects an empty source") {
  nn::AttentionParams p;
  Rng rng(2);
  p.init("a", 1, 2, 2, 2, rng);
  CHECK_THROWS_AS(
      nn::multi_head_attention(p, Tensor({1, 2}), Tensor({0, 2}), Tensor({0, 2})),
      ContractError);
}

TEST_CASE("backward on a parameter sum yields all-one gradients") {
  nn::Parameter w("w", Tensor({3, 2}, 0.7));
  w.zero_grad();
  nn::Graph g;
  auto loss = g.sum_all(g.param(w));
  g.backward(loss);
  for (double v : w.grad.data) CHECK(v == 1.0);
}

TEST_CASE("backward through a zero-scaled loss yields zero gradients") {
  Rng rng(8);
  nn::Parameter w("w", nn::gaussian_tensor({3, 2}, rng));
  w.zero_grad();
  nn::Graph g;
  auto loss = g.scale(g.sum_all(g.tanh(g.param(w))), 0.0);
  g.backward(loss);
  CHECK(w.grad.abs_max() == 0.0);
}

TEST_CASE("gradient access before backward is a state error") {
  nn::Parameter w("w", Tensor({2, 2}, 1.0));
  nn::Graph g;
  auto id = g.param(w);
  CHECK_THROWS_AS(g.grad_of(id), ContractError);
  auto loss = g.sum_all(id);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), ContractError);
}

TEST_CASE("gradient_check is near-exact for a quadratic") {
  Rng rng(5);
  nn::Parameter w("w", nn::gaussian_tensor({3, 3}, rng));
  auto loss_fn = [&]() {
    nn::Graph g;
    auto wid = g.param(w);
    auto l = g.scale(g.sum_all(g.mul(wid, wid)), 0.5);
    g.backward(l);
    return g.val(l).data[0];
  };
  CHECK(nn::gradient_check(loss_fn, {&w}, 1e-5) <= 1e-8);
}

TEST_CASE("gradient_check validates the fused lstm step") {
  nn::LstmParams p;
  Rng rng(3);
  p.init("l", 3, 4, 2, rng);
  Tensor x1 = nn::gaussian_tensor({1, 3}, rng);
  Tensor x2 = nn::gaussian_tensor({1, 3}, rng);
  auto loss_fn = [&]() {
    nn::Graph g;
    auto wx = g.param(p.wx), wh = g.param(p.wh), b = g.param(p.b), wp = g.param(p.wp);
    auto h0 = g.constant(Tensor({1, 2}));
    auto c0 = g.constant(Tensor({1, 4}));
    auto s1 = g.lstm_step(g.constant(x1), h0, c0, wx, wh, b, wp);
    auto s2 = g.lstm_step(g.constant(x2), s1.h, s1.c, wx, wh, b, wp);
    auto l = g.add(g.sum_all(s2.h), g.scale(g.sum_all(s2.c), 0.25));
    g.backward(l);
    return g.val(l).data[0];
  };
  std::vector<nn::Parameter*> params = p.params();
  CHECK(nn::gradient_check(loss_fn, params, 1e-5) <= 1e-5);
}

TEST_CASE("gradient_check rejects out-of-range epsilon") {
  nn::Parameter w("w", Tensor({1, 1}, 1.0));
  auto loss_fn = [&]() { return 0.0; };
  CHECK_THROWS_AS(nn::gradient_check(loss_fn, {&w}, 1e-2), ContractError);
}

namespace {

// Exercises every differentiable op in one scalar loss.
struct CompositeModel {
  nn::Parameter p1, p2, p3, p4, bias, table, pred, readout, b2;
  nn::LstmParams lstm;
  Tensor shift, wconst;

  void init(uint64_t seed) {
    Rng rng(seed);
    p1 = nn::Parameter("p1", nn::gaussian_tensor({2, 3}, rng, 0.0, 0.4));
    p2 = nn::Parameter("p2", nn::gaussian_tensor({3, 2}, rng, 0.0, 0.4));
    p3 = nn::Parameter("p3", nn::gaussian_tensor({2, 3}, rng, 0.0, 0.4));
    p4 = nn::Parameter("p4", nn::gaussian_tensor({3, 2}, rng, 0.0, 0.4));
    bias = nn::Parameter("bias", nn::gaussian_tensor({1, 2}, rng, 0.0, 0.4));
    table = nn::Parameter("table", nn::gaussian_tensor({4, 3}, rng, 0.0, 0.4));
    pred = nn::Parameter("pred", nn::gaussian_tensor({2, 2}, rng, 0.0, 0.4));
    readout = nn::Parameter("readout", nn::gaussian_tensor({3, 2}, rng, 0.0, 0.4));
    b2 = nn::Parameter("b2", nn::gaussian_tensor({1, 3}, rng, 0.0, 0.4));
    lstm.init("lstm", 2, 3, 2, rng);
    shift = nn::gaussian_tensor({2, 2}, rng, 0.0, 0.2);
    wconst = nn::gaussian_tensor({4, 3}, rng, 0.0, 0.5);
  }

  std::vector<nn::Parameter*> params() {
    std::vector<nn::Parameter*> out = {&p1, &p2, &p3, &p4,      &bias,
                                       &table, &pred, &readout, &b2};
    for (nn::Parameter* q : lstm.params()) out.push_back(q);
    return out;
  }

  double loss() {
    nn::Graph g;
    auto a = g.param(p1), b = g.param(p2), c = g.param(p3), d = g.param(p4);
    auto m =
        g.add(g.sub(g.add(g.matmul(a, b), g.matmul(a, c, false, true)),
                    g.matmul(d, b, true, false)),
              g.matmul(d, c, true, true));
    auto xc = g.add_const(g.scale(g.add_bias(m, g.param(bias)), 0.7), shift);
    auto sg = g.sigmoid(xc);
    auto th = g.tanh(xc);
    auto ex = g.exp(g.scale(xc, 0.3));
    auto cc = g.concat_cols({g.mul(sg, th), ex});
    auto cr = g.concat_rows({cc, cc});
    auto s1 = g.sum_all(cr);

    auto gr = g.gather_rows(g.param(table), {0, 2, 1, 2});
    auto ls = g.log_softmax_rows(gr);
    auto sm = g.softmax_rows(gr);
    auto gw = g.gather_weighted_sum(ls, {{0, 1}, {2, 0}, {3, 2}}, {-1.0, -0.5, 0.25});
    auto dc = g.dot_const(sm, wconst);

    auto sel1 = g.constant(Tensor::from({1, 2}, {1.0, 0.0}));
    auto sel2 = g.constant(Tensor::from({1, 2}, {0.0, 1.0}));
    auto wx = g.param(lstm.wx), wh = g.param(lstm.wh);
    auto lb = g.param(lstm.b), wp = g.param(lstm.wp);
    auto st1 = g.lstm_step(g.matmul(sel1, xc), g.constant(Tensor({1, 2})),
                           g.constant(Tensor({1, 3})), wx, wh, lb, wp);
    auto st2 = g.lstm_step(g.matmul(sel2, xc), st1.h, st1.c, wx, wh, lb, wp);
    auto s2 = g.add(g.sum_all(st2.h), g.scale(g.sum_all(st2.c), 0.5));

    auto jc = g.joint_combine(m, g.param(pred));
    auto grid = g.log_softmax_rows(g.add_bias(g.matmul(jc, g.param(readout), false, true),
                                              g.param(b2)));
    auto rl = g.rnnt_loss(grid, {2}, 2, 0);

    auto total = g.add(g.add(gw, dc), g.add(s2, g.add(g.scale(s1, 0.05), rl)));
    g.backward(total);
    return g.val(total).data[0];
  }
};

}  // namespace

TEST_CASE("every graph op passes gradient_check across 20 seeds") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    CompositeModel m;
    m.init(seed);
    auto fn = [&]() { return m.loss(); };
    CHECK(nn::gradient_check(fn, m.params(), 1e-5) <= 1e-5);
  }
}
