// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "frontend/dataset.h"
#include "las/las.h"
#include "nn/gradcheck.h"
#include "nn/graph.h"
#include "rnnt/model.h"
#include "train/checkpoint.h"
#include "train/optimizer.h"
#include "train/train.h"
#include "util/common.h"
#include "util/config.h"
#include "util/io.h"
#include "util/rng.h"

using namespace twopass;
using nn::Parameter;
using nn::Tensor;
using train::Checkpoint;
using train::EmaState;
using train::MwerCandidate;
using train::Optimizer;
using train::OptimizerConfig;
using train::TensorEntry;
using train::TrainResult;

namespace {

// Single-domain digit corpus small enough for in-test training runs.
frontend::Dataset tiny_dataset(int count, uint64_t seed, int len_max = 2) {
  frontend::SynthSpec s;
  s.count = count;
  s.seed = seed;
  s.d0 = 4;
  s.template_frames = 3;
  s.stack_k = 2;
  s.subsample_s = 3;
  s.noise_sigma = 0.03;
  s.domain_mix = {1.0};
  s.len_min = {1};
  s.len_max = {len_max};
  s.sil_min = {12};
  s.sil_max = {18};
  s.filler_prob = 0.0;
  s.lead_sil_min = 2;
  s.lead_sil_max = 5;
  s.fillers = {};
  return frontend::synth_dataset(s);
}

rnnt::RnnTConfig tiny_rnnt_config(const frontend::Dataset& ds) {
  rnnt::RnnTConfig c;
  c.input_dim = frontend::encoder_input_dim(ds.meta, 4);
  c.vocab_size = ds.meta.vocab.size();
  c.enc_layers = 1;
  c.enc_hidden = 8;
  c.enc_proj = 6;
  c.pred_layers = 1;
  c.pred_hidden = 6;
  c.pred_proj = 5;
  c.embed_dim = 4;
  c.joint_dim = 6;
  return c;
}

las::LasConfig tiny_las_config(const frontend::Dataset& ds) {
  las::LasConfig c;
  c.source_dim = 6;  // first-pass encoder projection
  c.vocab_size = ds.meta.vocab.size();
  c.enc_layers = 1;
  c.enc_hidden = 6;
  c.enc_proj = 5;
  c.dec_layers = 1;
  c.dec_hidden = 6;
  c.dec_proj = 5;
  c.embed_dim = 4;
  c.attn_heads = 2;
  c.attn_head_dim = 3;
  return c;
}

OptimizerConfig sgd(double lr, int steps, int batch = 1) {
  OptimizerConfig o;
  o.learning_rate = lr;
  o.max_steps = steps;
  o.batch_size = batch;
  return o;
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& ps) {
  std::vector<Tensor> out;
  out.reserve(ps.size());
  for (const Parameter* p : ps) out.push_back(p->value);
  return out;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

bool identical(const std::vector<Tensor>& before, const std::vector<Parameter*>& ps) {
  if (before.size() != ps.size()) return false;
  for (size_t i = 0; i < before.size(); ++i) {
    if (!same_bits(before[i], ps[i]->value)) return false;
  }
  return true;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void dump(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("optimizer config defaults and parsing") {
  OptimizerConfig d;
  d.validate();
  CHECK(d.method == "sgd");
  CHECK(d.learning_rate == 1e-2);
  CHECK(d.schedule == "constant");
  CHECK(d.clip_norm == 1.0);
  CHECK(d.ema_decay == 0.999);
  CHECK(d.ema_enabled);

  Config cfg = Config::from_string(
      "optimizer = adam\nlearning_rate = 0.5\nlr_schedule = exponential_decay\n"
      "lr_decay_rate = 0.5\nlr_decay_steps = 10\nclip_norm = 2.0\nbatch_size = 4\n"
      "max_steps = 100\nseed = 7\nema_decay = 0.9\nema_enabled = false\n");
  OptimizerConfig o = OptimizerConfig::from_config(cfg);
  CHECK(o.method == "adam");
  CHECK(o.learning_rate == 0.5);
  CHECK(o.schedule == "exponential_decay");
  CHECK(o.decay_rate == 0.5);
  CHECK(o.decay_steps == 10);
  CHECK(o.clip_norm == 2.0);
  CHECK(o.batch_size == 4);
  CHECK(o.max_steps == 100);
  CHECK(o.seed == 7);
  CHECK(o.ema_decay == 0.9);
  CHECK_FALSE(o.ema_enabled);
}

TEST_CASE("optimizer config rejects bad settings") {
  auto reject = [](const std::string& text) {
    CHECK_THROWS_AS(OptimizerConfig::from_config(Config::from_string(text)), ConfigError);
  };
  reject("optimizer = rmsprop\n");
  reject("learning_rate = -1\n");
  reject("lr_schedule = linear\n");
  reject("lr_schedule = exponential_decay\nlr_decay_rate = 0\n");
  reject("lr_schedule = exponential_decay\nlr_decay_rate = 1.5\n");
  reject("lr_schedule = exponential_decay\nlr_decay_steps = 0\n");
  reject("batch_size = 0\n");
  reject("max_steps = -1\n");
  reject("clip_norm = -0.5\n");
  reject("ema_decay = 1.5\n");
}

TEST_CASE("learning rate schedules") {
  OptimizerConfig c;
  c.learning_rate = 0.25;
  CHECK(c.lr_at(0) == 0.25);
  CHECK(c.lr_at(7) == 0.25);
  CHECK(c.lr_at(100000) == 0.25);

  OptimizerConfig e;
  e.learning_rate = 1.0;
  e.schedule = "exponential_decay";
  e.decay_rate = 0.5;
  e.decay_steps = 10;
  CHECK(e.lr_at(0) == 1.0);
  CHECK(e.lr_at(10) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.lr_at(20) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(e.lr_at(5) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("global norm clipping") {
  Parameter a("a", Tensor::row({1.0}));
  Parameter b("b", Tensor::row({1.0}));
  std::vector<Parameter*> ps = {&a, &b};
  for (Parameter* p : ps) p->zero_grad();
  a.grad.at(0) = 3.0;
  b.grad.at(0) = 4.0;
  CHECK(train::global_grad_norm(ps) == doctest::Approx(5.0).epsilon(1e-15));

  SUBCASE("norm above the cap rescales exactly") {
    train::clip_gradients(ps, 1.0);
    CHECK(a.grad.at(0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(b.grad.at(0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(train::global_grad_norm(ps) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("norm within the cap is untouched") {
    train::clip_gradients(ps, 10.0);
    CHECK(a.grad.at(0) == 3.0);
    CHECK(b.grad.at(0) == 4.0);
  }
  SUBCASE("zero cap disables clipping") {
    train::clip_gradients(ps, 0.0);
    CHECK(a.grad.at(0) == 3.0);
    CHECK(b.grad.at(0) == 4.0);
  }
}

TEST_CASE("sgd step arithmetic") {
  Parameter a("a", Tensor::row({1.0}));
  a.zero_grad();
  a.grad.at(0) = 0.25;
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.clip_norm = 0.0;
  Optimizer opt(cfg);
  Optimizer::StepInfo info = opt.step({&a});
  CHECK(info.lr == 0.1);
  CHECK(info.grad_norm == 0.25);
  CHECK(a.value.at(0) == 1.0 - 0.1 * 0.25);
}

TEST_CASE("sgd reports the pre-clip norm and applies the clipped update") {
  Parameter a("a", Tensor::row({0.0, 0.0}));
  a.zero_grad();
  a.grad.at(0) = 3.0;
  a.grad.at(1) = 4.0;
  OptimizerConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.clip_norm = 1.0;
  Optimizer opt(cfg);
  Optimizer::StepInfo info = opt.step({&a});
  CHECK(info.grad_norm == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(a.value.at(0) == doctest::Approx(-0.6).epsilon(1e-15));
  CHECK(a.value.at(1) == doctest::Approx(-0.8).epsilon(1e-15));
}

TEST_CASE("adam step matches the closed form") {
  Parameter a("a", Tensor::row({1.0}));
  a.zero_grad();
  a.grad.at(0) = 2.0;
  OptimizerConfig cfg;
  cfg.method = "adam";
  cfg.learning_rate = 0.1;
  cfg.clip_norm = 0.0;
  Optimizer opt(cfg);
  opt.step({&a});
  const double m = 0.1 * 2.0;           // (1 - beta1) * g
  const double v = 0.001 * 4.0;         // (1 - beta2) * g^2
  const double mhat = m / (1.0 - 0.9);  // bias-corrected, step 1
  const double vhat = v / (1.0 - 0.999);
  const double expect = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(a.value.at(0) == doctest::Approx(expect).epsilon(1e-15));

  // Moments persist: a second identical gradient keeps moving the value.
  const double after_one = a.value.at(0);
  a.zero_grad();
  a.grad.at(0) = 2.0;
  opt.step({&a});
  CHECK(a.value.at(0) < after_one);
}

TEST_CASE("ema decay endpoints") {
  Parameter a("a", Tensor::row({2.0, -3.0}));
  SUBCASE("decay zero tracks the parameters exactly") {
    EmaState s = EmaState::init({&a}, 0.0);
    a.value.at(0) = 7.0;
    a.value.at(1) = 0.5;
    s.update({&a});
    CHECK(same_bits(s.shadow[0].second, a.value));
  }
  SUBCASE("decay one never moves") {
    EmaState s = EmaState::init({&a}, 1.0);
    Tensor frozen = s.shadow[0].second;
    a.value.at(0) = 100.0;
    s.update({&a});
    CHECK(same_bits(s.shadow[0].second, frozen));
  }
}

TEST_CASE("ema two-update closed form") {
  Parameter a("a", Tensor::row({0.0}));
  EmaState s = EmaState::init({&a}, 0.9);
  a.value.at(0) = 1.0;
  s.update({&a});
  CHECK(s.shadow[0].second.at(0) == doctest::Approx(0.1).epsilon(1e-15));
  s.update({&a});
  CHECK(s.shadow[0].second.at(0) == doctest::Approx(0.19).epsilon(1e-15));
}

TEST_CASE("ema shadow stays inside the parameter history envelope") {
  Rng rng(11);
  Parameter a("a", nn::gaussian_tensor({3, 4}, rng));
  EmaState s = EmaState::init({&a}, 0.7);
  Tensor lo = a.value;
  Tensor hi = a.value;
  for (int it = 0; it < 20; ++it) {
    for (double& v : a.value.data) v += rng.gaussian() * 0.5;
    for (int i = 0; i < a.value.numel(); ++i) {
      lo.at(i) = std::min(lo.at(i), a.value.at(i));
      hi.at(i) = std::max(hi.at(i), a.value.at(i));
    }
    s.update({&a});
    for (int i = 0; i < a.value.numel(); ++i) {
      CHECK(s.shadow[0].second.at(i) >= lo.at(i) - 1e-12);
      CHECK(s.shadow[0].second.at(i) <= hi.at(i) + 1e-12);
    }
  }
}

TEST_CASE("ema rejects a mismatched parameter set") {
  Parameter a("a", Tensor::row({1.0}));
  Parameter b("b", Tensor::row({2.0}));
  EmaState s = EmaState::init({&a, &b}, 0.5);
  CHECK_THROWS_AS(s.update({&a}), ContractError);
  Parameter renamed("c", Tensor::row({2.0}));
  CHECK_THROWS_AS(s.update({&a, &renamed}), ContractError);
  Parameter reshaped("b", Tensor::row({2.0, 3.0}));
  CHECK_THROWS_AS(s.update({&a, &reshaped}), ContractError);
}

TEST_CASE("ema copy_to installs the shadow") {
  Parameter a("a", Tensor::row({1.0}));
  EmaState s = EmaState::init({&a}, 0.5);
  a.value.at(0) = 3.0;
  s.update({&a});  // shadow = 2.0
  s.copy_to({&a});
  CHECK(a.value.at(0) == 2.0);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  frontend::Dataset ds = tiny_dataset(1, 21);
  rnnt::RnnTConfig cfg = tiny_rnnt_config(ds);
  rnnt::RnnTParams source;
  source.init(cfg, 3);
  const std::string echo = "alpha = 1\nbeta = two\n";
  Checkpoint c = Checkpoint::from_params(source.params(), ds.meta.vocab, echo);
  CHECK(c.version == 1);
  CHECK(c.flags == 0);

  const std::string path = tmp_path("twopass_ckpt_roundtrip.bin");
  train::save_checkpoint(c, path);
  Checkpoint back = train::load_checkpoint(path);
  CHECK(back.version == 1);
  CHECK(back.config_echo == echo);
  CHECK(back.vocab_tokens == ds.meta.vocab.tokens);
  CHECK(back.vocab().eos_id == ds.meta.vocab.eos_id);
  REQUIRE(back.entries.size() == c.entries.size());
  for (size_t i = 0; i < c.entries.size(); ++i) {
    CHECK(back.entries[i].name == c.entries[i].name);
    CHECK(back.entries[i].dims == c.entries[i].dims);
    CHECK(back.entries[i].f64 == c.entries[i].f64);
  }

  rnnt::RnnTParams target;
  target.init(cfg, 99);
  back.to_params(target.params());
  std::vector<Parameter*> sp = source.params();
  std::vector<Parameter*> tp = target.params();
  REQUIRE(sp.size() == tp.size());
  for (size_t i = 0; i < sp.size(); ++i) CHECK(same_bits(sp[i]->value, tp[i]->value));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint load then re-save is byte-identical") {
  frontend::Dataset ds = tiny_dataset(1, 22);
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 4);
  Checkpoint c = Checkpoint::from_params(p.params(), ds.meta.vocab, "k = v\n");
  const std::string a = tmp_path("twopass_ckpt_a.bin");
  const std::string b = tmp_path("twopass_ckpt_b.bin");
  train::save_checkpoint(c, a);
  train::save_checkpoint(train::load_checkpoint(a), b);
  CHECK(slurp(a) == slurp(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("checkpoint rejects corruption cleanly") {
  frontend::Dataset ds = tiny_dataset(1, 23);
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 5);
  Checkpoint c = Checkpoint::from_params(p.params(), ds.meta.vocab, "");
  const std::string path = tmp_path("twopass_ckpt_corrupt.bin");
  train::save_checkpoint(c, path);
  const std::string good = slurp(path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    dump(path, bad);
    CHECK_THROWS_AS(train::load_checkpoint(path), ContractError);
  }
  SUBCASE("unsupported version") {
    std::string bad = good;
    bad[4] = 2;  // little-endian low byte of the version word
    dump(path, bad);
    CHECK_THROWS_AS(train::load_checkpoint(path), ContractError);
  }
  SUBCASE("truncated payload") {
    dump(path, good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(train::load_checkpoint(path), ContractError);
  }
  SUBCASE("trailing bytes") {
    dump(path, good + "junk");
    CHECK_THROWS_AS(train::load_checkpoint(path), ContractError);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint carries quantized tensors") {
  Checkpoint c;
  c.flags = 1;
  c.vocab_tokens = {"<blank>", "</s>", "x"};
  c.config_echo = "";
  TensorEntry e;
  e.name = "w";
  e.dtype = 1;
  e.dims = {1, 3};
  e.scale = 0.02;
  e.i8 = {-127, 0, 42};
  c.entries.push_back(e);

  const std::string path = tmp_path("twopass_ckpt_quant.bin");
  train::save_checkpoint(c, path);
  Checkpoint back = train::load_checkpoint(path);
  REQUIRE(back.entries.size() == 1);
  CHECK(back.flags == 1);
  CHECK(back.entries[0].dtype == 1);
  CHECK(back.entries[0].scale == 0.02);
  CHECK(back.entries[0].i8 == e.i8);

  Parameter w("w", Tensor({1, 3}));
  back.to_params({&w});
  CHECK(w.value.at(0) == 0.02 * -127.0);
  CHECK(w.value.at(1) == 0.0);
  CHECK(w.value.at(2) == 0.02 * 42.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint to_params validates the tensor set") {
  Parameter a("a", Tensor::row({1.0}));
  Parameter b("b", Tensor::row({2.0}));
  Checkpoint c = Checkpoint::from_params({&a, &b}, rnnt::Vocab{{"<blank>", "</s>"}, 0, 1}, "");

  SUBCASE("missing tensor") {
    Parameter other("zzz", Tensor::row({0.0}));
    CHECK_THROWS_AS(c.to_params({&a, &other}), ContractError);
  }
  SUBCASE("cardinality mismatch") { CHECK_THROWS_AS(c.to_params({&a}), ContractError); }
  SUBCASE("shape mismatch") {
    Parameter wide("b", Tensor::row({0.0, 0.0}));
    CHECK_THROWS_AS(c.to_params({&a, &wide}), ContractError);
  }
}

TEST_CASE("loss curve csv layout") {
  std::vector<train::LossRow> rows = {{0, 0.5, 0.01, 1.25}, {1, 0.25, 0.01, 2.0}};
  CHECK(train::loss_curve_csv(rows) ==
        "step,loss,lr,grad_norm\n0,0.5,0.01,1.25\n1,0.25,0.01,2\n");
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  frontend::Dataset ds = tiny_dataset(3, 31);
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 7);
  const std::vector<Tensor> before = snapshot(p.params());

  OptimizerConfig opt = sgd(0.0, 4, 2);
  TrainResult res = train::train_rnnt(ds, &p, rnnt::EndpointerPenaltyConfig{}, opt);
  CHECK(identical(before, p.params()));
  REQUIRE(res.curve.size() == 4);
  for (const train::LossRow& r : res.curve) {
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss > 0.0);
    CHECK(r.grad_norm > 0.0);
    CHECK(r.lr == 0.0);
  }
  // With static parameters the shadow cannot drift away from them.
  REQUIRE(res.ema.has_value());
  std::vector<Parameter*> ps = p.params();
  for (size_t i = 0; i < ps.size(); ++i) CHECK(same_bits(res.ema->shadow[i].second, ps[i]->value));
}

TEST_CASE("one-utterance transducer training memorizes") {
  frontend::Dataset ds = tiny_dataset(1, 32, 1);
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 8);
  OptimizerConfig opt = sgd(0.1, 200);
  TrainResult res = train::train_rnnt(ds, &p, rnnt::EndpointerPenaltyConfig{}, opt);
  REQUIRE(res.curve.size() == 200);
  const double first = res.curve.front().loss;
  const double last = res.curve.back().loss;
  CHECK(last < 0.5 * first);
}

TEST_CASE("training is bit-reproducible") {
  frontend::Dataset ds = tiny_dataset(3, 33);
  rnnt::RnnTConfig cfg = tiny_rnnt_config(ds);
  OptimizerConfig opt = sgd(0.05, 10, 2);

  rnnt::RnnTParams p1;
  p1.init(cfg, 9);
  rnnt::RnnTParams p2;
  p2.init(cfg, 9);
  TrainResult r1 = train::train_rnnt(ds, &p1, rnnt::EndpointerPenaltyConfig{}, opt);
  TrainResult r2 = train::train_rnnt(ds, &p2, rnnt::EndpointerPenaltyConfig{}, opt);

  REQUIRE(r1.curve.size() == r2.curve.size());
  for (size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].loss == r2.curve[i].loss);
    CHECK(r1.curve[i].grad_norm == r2.curve[i].grad_norm);
  }
  std::vector<Parameter*> a = p1.params();
  std::vector<Parameter*> b = p2.params();
  for (size_t i = 0; i < a.size(); ++i) CHECK(same_bits(a[i]->value, b[i]->value));
}

TEST_CASE("constant and decayed schedules diverge") {
  frontend::Dataset ds = tiny_dataset(2, 34);
  rnnt::RnnTConfig cfg = tiny_rnnt_config(ds);

  rnnt::RnnTParams pc;
  pc.init(cfg, 10);
  rnnt::RnnTParams pd;
  pd.init(cfg, 10);
  OptimizerConfig oc = sgd(0.05, 10);
  OptimizerConfig od = sgd(0.05, 10);
  od.schedule = "exponential_decay";
  od.decay_rate = 0.5;
  od.decay_steps = 5;
  train::train_rnnt(ds, &pc, rnnt::EndpointerPenaltyConfig{}, oc);
  train::train_rnnt(ds, &pd, rnnt::EndpointerPenaltyConfig{}, od);

  bool any_diff = false;
  std::vector<Parameter*> a = pc.params();
  std::vector<Parameter*> b = pd.params();
  for (size_t i = 0; i < a.size(); ++i) {
    if (!same_bits(a[i]->value, b[i]->value)) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("ema diverges from raw weights during training and can be disabled") {
  frontend::Dataset ds = tiny_dataset(2, 35);
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 11);
  OptimizerConfig opt = sgd(0.05, 15);
  opt.ema_decay = 0.9;
  TrainResult res = train::train_rnnt(ds, &p, rnnt::EndpointerPenaltyConfig{}, opt);
  REQUIRE(res.ema.has_value());
  bool lags = false;
  std::vector<Parameter*> ps = p.params();
  for (size_t i = 0; i < ps.size(); ++i) {
    if (!same_bits(res.ema->shadow[i].second, ps[i]->value)) lags = true;
  }
  CHECK(lags);

  opt.ema_enabled = false;
  rnnt::RnnTParams q;
  q.init(tiny_rnnt_config(ds), 11);
  TrainResult off = train::train_rnnt(ds, &q, rnnt::EndpointerPenaltyConfig{}, opt);
  CHECK_FALSE(off.ema.has_value());
}

TEST_CASE("endpointer penalty stays on through training") {
  frontend::Dataset ds = tiny_dataset(2, 36);
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 12);
  rnnt::EndpointerPenaltyConfig epc;
  epc.alpha_early = 0.5;
  epc.alpha_late = 1.0;
  epc.t_buffer = 2;
  epc.enabled_domains = {0};
  TrainResult res = train::train_rnnt(ds, &p, epc, sgd(0.05, 5));
  for (const train::LossRow& r : res.curve) CHECK(std::isfinite(r.loss));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  frontend::Dataset ds = tiny_dataset(1, 37);
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 13);
  p.enc[0].wx.value.at(0) = std::nan("");
  CHECK_THROWS_AS(
      train::train_rnnt(ds, &p, rnnt::EndpointerPenaltyConfig{}, sgd(0.05, 1)),
      ContractError);
}

TEST_CASE("training rejects an empty dataset") {
  frontend::Dataset ds = tiny_dataset(1, 38);
  ds.utts.clear();
  rnnt::RnnTParams p;
  p.init(tiny_rnnt_config(ds), 14);
  CHECK_THROWS_AS(train::train_rnnt(ds, &p, rnnt::EndpointerPenaltyConfig{}, sgd(0.05, 1)),
                  ConfigError);
}

TEST_CASE("las cross-entropy training freezes the first pass") {
  frontend::Dataset ds = tiny_dataset(2, 41);
  rnnt::RnnTParams first;
  first.init(tiny_rnnt_config(ds), 15);
  const std::vector<Tensor> first_before = snapshot(first.params());

  las::LasParams las_params;
  las_params.init(tiny_las_config(ds), 16);

  SUBCASE("zero steps change nothing") {
    const std::vector<Tensor> las_before = snapshot(las_params.params());
    TrainResult res = train::train_las_ce(ds, first, &las_params, sgd(0.1, 0));
    CHECK(res.curve.empty());
    CHECK(identical(las_before, las_params.params()));
  }
  SUBCASE("the shared encoder is bit-identical after training") {
    TrainResult res = train::train_las_ce(ds, first, &las_params, sgd(0.1, 10));
    CHECK(res.curve.size() == 10);
    CHECK(identical(first_before, first.params()));
  }
}

TEST_CASE("one-utterance las cross-entropy memorizes") {
  frontend::Dataset ds = tiny_dataset(1, 42, 2);
  rnnt::RnnTParams first;
  first.init(tiny_rnnt_config(ds), 17);
  las::LasParams las_params;
  las_params.init(tiny_las_config(ds), 18);

  TrainResult res = train::train_las_ce(ds, first, &las_params, sgd(0.1, 50));
  REQUIRE(res.curve.size() == 50);
  const double first_loss = res.curve.front().loss;
  const double last_loss = res.curve.back().loss;
  CHECK(last_loss < 0.5 * first_loss);
  // Monotone within noise: allow brief plateaus, not a rising trend.
  int increases = 0;
  for (size_t i = 1; i < res.curve.size(); ++i) {
    if (res.curve[i].loss > res.curve[i - 1].loss + 1e-9) ++increases;
  }
  CHECK(increases <= 10);
}

namespace {

struct MwerRig {
  frontend::Dataset ds = tiny_dataset(1, 51);
  las::LasParams las_params;
  Tensor e_s;
  std::vector<MwerCandidate> cands;  // two entries with equal combined score
  double lambda = 0.5;

  MwerRig() {
    las_params.init(tiny_las_config(ds), 19);
    Rng rng(77);
    e_s = nn::gaussian_tensor({6, 6}, rng);

    MwerCandidate c0;
    c0.tokens = {2};
    c0.word_errors = 0;
    MwerCandidate c1;
    c1.tokens = {3, 4};
    c1.word_errors = 2;
    // Pin both combined scores to the same constant so P = (1/2, 1/2)
    // exactly: first = (K - lambda*las) / (1 - lambda).
    const double K = -1.0;
    for (MwerCandidate* c : {&c0, &c1}) {
      nn::Graph g;
      las::LasParams& lp = las_params;
      const double las_lp = g.val(las::las_sequence_logprob(g, lp, e_s, c->tokens)).at(0);
      c->first_pass_score = (K - lambda * las_lp) / (1.0 - lambda);
    }
    cands = {c0, c1};
  }

  double loss_value(double baseline) {
    nn::Graph g;
    nn::Graph::Id probs = train::mwer_renormalized_probs(g, las_params, e_s, cands, lambda);
    return g.val(train::mwer_loss_given_baseline(g, probs, cands, baseline)).at(0);
  }
};

}  // namespace

TEST_CASE("mwer rigged pair: zero loss, nonzero gradient toward the better hypothesis") {
  MwerRig rig;

  nn::Graph g;
  nn::Graph::Id probs = train::mwer_renormalized_probs(g, rig.las_params, rig.e_s, rig.cands,
                                                       rig.lambda);
  const Tensor& pv = g.val(probs);
  CHECK(pv.at(0) == 0.5);
  CHECK(pv.at(1) == 0.5);
  const double baseline = train::mwer_baseline(pv, rig.cands);
  CHECK(baseline == doctest::Approx(1.0).epsilon(1e-15));
  nn::Graph::Id loss = train::mwer_loss_given_baseline(g, probs, rig.cands, baseline);
  CHECK(g.val(loss).at(0) == 0.0);

  for (Parameter* p : rig.las_params.params()) p->zero_grad();
  g.backward(loss);
  CHECK(train::global_grad_norm(rig.las_params.params()) > 0.0);

  // Raising the W=0 hypothesis's first-pass score lowers the expected edit
  // distance below the (frozen) baseline.
  MwerRig shifted;
  shifted.cands[0].first_pass_score += 0.01;
  CHECK(shifted.loss_value(1.0) < 0.0);

  // Finite differences against the frozen-baseline loss.
  MwerRig fd;
  const double err = nn::gradient_check([&fd] {
    nn::Graph gg;
    nn::Graph::Id pr = train::mwer_renormalized_probs(gg, fd.las_params, fd.e_s, fd.cands,
                                                      fd.lambda);
    nn::Graph::Id l = train::mwer_loss_given_baseline(gg, pr, fd.cands, 1.0);
    gg.backward(l);
    return gg.val(l).at(0);
  }, fd.las_params.params(), 1e-5, 3);
  CHECK(err <= 1e-5);
}

TEST_CASE("mwer loss vanishes with equal word errors") {
  MwerRig rig;
  rig.cands[0].word_errors = 1;
  rig.cands[1].word_errors = 1;
  nn::Graph g;
  nn::Graph::Id probs = train::mwer_renormalized_probs(g, rig.las_params, rig.e_s, rig.cands,
                                                       rig.lambda);
  const double baseline = train::mwer_baseline(g.val(probs), rig.cands);
  CHECK(baseline == doctest::Approx(1.0).epsilon(1e-15));
  nn::Graph::Id loss = train::mwer_loss_given_baseline(g, probs, rig.cands, baseline);
  CHECK(g.val(loss).at(0) == 0.0);
  for (Parameter* p : rig.las_params.params()) p->zero_grad();
  g.backward(loss);
  CHECK(train::global_grad_norm(rig.las_params.params()) == 0.0);
}

TEST_CASE("mwer loss is invariant to shifting all scores") {
  MwerRig base;
  MwerRig shifted;
  for (MwerCandidate& c : shifted.cands) c.first_pass_score += 7.25;

  nn::Graph g1;
  nn::Graph::Id p1 = train::mwer_renormalized_probs(g1, base.las_params, base.e_s, base.cands,
                                                    base.lambda);
  nn::Graph g2;
  nn::Graph::Id p2 = train::mwer_renormalized_probs(g2, shifted.las_params, shifted.e_s,
                                                    shifted.cands, shifted.lambda);
  CHECK(nn::max_abs_diff(g1.val(p1), g2.val(p2)) <= 1e-12);

  const double b1 = train::mwer_baseline(g1.val(p1), base.cands);
  const double b2 = train::mwer_baseline(g2.val(p2), shifted.cands);
  CHECK(b1 == doctest::Approx(b2).epsilon(1e-12));
  CHECK(std::abs(g1.val(train::mwer_loss_given_baseline(g1, p1, base.cands, b1)).at(0) -
                 g2.val(train::mwer_loss_given_baseline(g2, p2, shifted.cands, b2)).at(0)) <=
        1e-12);
}

TEST_CASE("mwer fine-tuning trains the second pass only") {
  frontend::Dataset ds = tiny_dataset(3, 52);
  rnnt::RnnTParams first;
  first.init(tiny_rnnt_config(ds), 20);
  const std::vector<Tensor> first_before = snapshot(first.params());
  las::LasParams las_params;
  las_params.init(tiny_las_config(ds), 21);
  const std::vector<Tensor> las_before = snapshot(las_params.params());

  train::MwerSettings ms;
  ms.beam.beam_size = 4;
  ms.beam.max_symbols_per_frame = 2;
  ms.nbest_size = 3;
  ms.weights.lambda_las = 0.5;

  OptimizerConfig opt = sgd(0.05, 4, 2);
  TrainResult res = train::mwer_finetune(ds, first, &las_params, ms, opt);
  REQUIRE(res.curve.size() == 4);
  for (const train::LossRow& r : res.curve) CHECK(std::isfinite(r.loss));
  CHECK(identical(first_before, first.params()));
  CHECK_FALSE(identical(las_before, las_params.params()));
  CHECK(res.skipped == 0);
}

TEST_CASE("mwer skips utterances without competitors") {
  frontend::Dataset ds = tiny_dataset(1, 53);
  rnnt::RnnTParams first;
  first.init(tiny_rnnt_config(ds), 22);
  las::LasParams las_params;
  las_params.init(tiny_las_config(ds), 23);
  const std::vector<Tensor> las_before = snapshot(las_params.params());

  train::MwerSettings ms;
  ms.beam.beam_size = 1;  // a one-hypothesis n-best carries no signal
  ms.nbest_size = 2;
  OptimizerConfig opt = sgd(0.05, 2);
  TrainResult res = train::mwer_finetune(ds, first, &las_params, ms, opt);
  CHECK(res.skipped == 2);
  CHECK(identical(las_before, las_params.params()));
  for (const train::LossRow& r : res.curve) {
    CHECK(r.loss == 0.0);
    CHECK(r.grad_norm == 0.0);
  }
}

TEST_CASE("mwer settings are validated") {
  train::MwerSettings ms;
  ms.nbest_size = 1;
  CHECK_THROWS_AS(ms.validate(), ConfigError);
}
