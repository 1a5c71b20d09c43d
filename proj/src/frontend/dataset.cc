// SPDX-License-Identifier: Apache-2.0

#include "frontend/dataset.h"

#include <cmath>
#include <cstdio>

#include "frontend/features.h"
#include "util/common.h"
#include "util/io.h"
#include "util/rng.h"

namespace twopass {
namespace frontend {

namespace {

const char* kDigitWords[10] = {"zero", "one", "two",   "three", "four",
                               "five", "six", "seven", "eight", "nine"};

rnnt::Vocab build_vocab(const std::vector<std::string>& fillers) {
  rnnt::Vocab v;
  v.tokens = {"<blank>", "</s>"};
  v.blank_id = 0;
  v.eos_id = 1;
  for (int d = 0; d < 10; ++d) v.tokens.push_back(std::string(1, '0' + d));
  for (int d = 0; d < 10; ++d) v.tokens.push_back(kDigitWords[d]);
  for (const std::string& f : fillers) {
    check_config(v.id_of(f) < 0, "filler word collides with vocab: " + f);
    v.tokens.push_back(f);
  }
  return v;
}

int sample_categorical(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

SynthSpec SynthSpec::from_config(const Config& cfg) {
  SynthSpec s;
  s.count = cfg.get_int("count", s.count);
  s.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int>(s.seed)));
  s.d0 = cfg.get_int("d0", s.d0);
  s.template_frames = cfg.get_int("template_frames", s.template_frames);
  s.hop_ms = cfg.get_double("hop_ms", s.hop_ms);
  s.stack_k = cfg.get_int("stack_k", s.stack_k);
  s.subsample_s = cfg.get_int("subsample_s", s.subsample_s);
  s.noise_sigma = cfg.get_double("noise_sigma", s.noise_sigma);
  if (cfg.has("domain_mix")) s.domain_mix = cfg.get_double_list("domain_mix");
  if (cfg.has("len_min")) s.len_min = cfg.get_int_list("len_min");
  if (cfg.has("len_max")) s.len_max = cfg.get_int_list("len_max");
  if (cfg.has("sil_min")) s.sil_min = cfg.get_int_list("sil_min");
  if (cfg.has("sil_max")) s.sil_max = cfg.get_int_list("sil_max");
  s.filler_prob = cfg.get_double("filler_prob", s.filler_prob);
  s.lead_sil_min = cfg.get_int("lead_sil_min", s.lead_sil_min);
  s.lead_sil_max = cfg.get_int("lead_sil_max", s.lead_sil_max);
  s.template_seed =
      static_cast<uint64_t>(cfg.get_int("template_seed", static_cast<int>(s.template_seed)));
  if (cfg.has("fillers")) s.fillers = cfg.get_list("fillers");
  s.validate();
  return s;
}

void SynthSpec::validate() const {
  check_config(count >= 1, "dataset count must be >= 1");
  check_config(!domain_mix.empty(), "need at least one domain");
  check_config(d0 >= 1 && template_frames >= 1, "feature dims must be positive");
  check_config(stack_k >= 1 && subsample_s >= 1 && hop_ms > 0, "frontend factors invalid");
  check_config(noise_sigma >= 0.0, "noise sigma must be non-negative");
  size_t d = domain_mix.size();
  check_config(len_min.size() >= 1 && len_max.size() >= 1 && sil_min.size() >= 1 &&
                   sil_max.size() >= 1,
               "per-domain ranges must be non-empty");
  for (size_t i = 0; i < d; ++i) {
    check_config(domain_mix[i] > 0.0, "domain mix weights must be positive");
    int lmin = len_min[i % len_min.size()], lmax = len_max[i % len_max.size()];
    int smin = sil_min[i % sil_min.size()], smax = sil_max[i % sil_max.size()];
    check_config(lmin >= 1 && lmax >= lmin, "invalid utterance length range");
    check_config(smin >= 1 && smax >= smin, "invalid silence range");
  }
  check_config(filler_prob >= 0.0 && filler_prob < 1.0, "filler_prob must be in [0,1)");
  check_config(lead_sil_min >= 0 && lead_sil_max >= lead_sil_min, "invalid lead silence range");
}

Dataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.meta.vocab = build_vocab(spec.fillers);
  ds.meta.num_domains = static_cast<int>(spec.domain_mix.size());
  ds.meta.hop_ms = spec.hop_ms;
  ds.meta.stack_k = spec.stack_k;
  ds.meta.subsample_s = spec.subsample_s;

  int n_units = 10 + static_cast<int>(spec.fillers.size());
  std::vector<nn::Tensor> templates;
  templates.reserve(n_units);
  for (int u = 0; u < n_units; ++u) {
    Rng trng = Rng::substream(spec.template_seed, static_cast<uint64_t>(u));
    templates.push_back(nn::gaussian_tensor({spec.template_frames, spec.d0}, trng));
  }

  const rnnt::Vocab& vocab = ds.meta.vocab;
  ds.utts.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    Rng rng = Rng::substream(spec.seed, static_cast<uint64_t>(i));
    int domain = sample_categorical(spec.domain_mix, rng);
    int lmin = spec.len_min[domain % spec.len_min.size()];
    int lmax = spec.len_max[domain % spec.len_max.size()];
    int smin = spec.sil_min[domain % spec.sil_min.size()];
    int smax = spec.sil_max[domain % spec.sil_max.size()];
    int n_content = rng.uniform_int(lmin, lmax);
    int lead = rng.uniform_int(spec.lead_sil_min, spec.lead_sil_max);
    int trail = rng.uniform_int(smin, smax);

    std::vector<int> units;
    std::vector<int> tokens;
    for (int k = 0; k < n_content; ++k) {
      bool filler = !spec.fillers.empty() && rng.uniform() < spec.filler_prob;
      if (filler) {
        int f = rng.uniform_int(0, static_cast<int>(spec.fillers.size()) - 1);
        units.push_back(10 + f);
        tokens.push_back(22 + f);
      } else {
        int d = rng.uniform_int(0, 9);
        units.push_back(d);
        // Even domains transcribe digits as digit tokens, odd ones as words.
        tokens.push_back(domain % 2 == 0 ? 2 + d : 12 + d);
      }
    }

    int content_frames = n_content * spec.template_frames;
    int t0 = lead + content_frames + trail;
    nn::Tensor frames({t0, spec.d0});
    int row = lead;
    for (int u : units) {
      const nn::Tensor& tpl = templates[u];
      for (int r = 0; r < spec.template_frames; ++r)
        for (int c = 0; c < spec.d0; ++c) frames.at(row + r, c) = tpl.at(r, c);
      row += spec.template_frames;
    }
    if (spec.noise_sigma > 0.0)
      for (double& v : frames.data) v += rng.gaussian(0.0, spec.noise_sigma);

    Utterance utt;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%06d", i);
    utt.id = buf;
    int n_speech = lead + content_frames;
    utt.features.frames = std::move(frames);
    utt.features.speech_end_ms = n_speech * spec.hop_ms;
    utt.features.domain_id = domain;
    utt.tokens = std::move(tokens);
    utt.t_eos_frame = (n_speech + spec.subsample_s - 1) / spec.subsample_s;
    utt.domain_id = domain;
    check(!utt.tokens.empty(), "generated utterance has no tokens");
    for (int t : utt.tokens) check(t >= 0 && t < vocab.size(), "token id out of vocab");
    ds.utts.push_back(std::move(utt));
  }
  return ds;
}

namespace {
constexpr char kMagic[4] = {'T', 'P', 'D', 'A'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  BinWriter w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(ds.meta.vocab.size()));
  for (const std::string& t : ds.meta.vocab.tokens) w.str(t);
  w.u32(static_cast<uint32_t>(ds.meta.vocab.blank_id));
  w.u32(static_cast<uint32_t>(ds.meta.vocab.eos_id));
  w.u32(static_cast<uint32_t>(ds.meta.num_domains));
  w.f64(ds.meta.hop_ms);
  w.u32(static_cast<uint32_t>(ds.meta.stack_k));
  w.u32(static_cast<uint32_t>(ds.meta.subsample_s));
  w.u64(ds.utts.size());
  for (const Utterance& u : ds.utts) {
    w.str(u.id);
    w.u32(static_cast<uint32_t>(u.features.frames.rows()));
    w.u32(static_cast<uint32_t>(u.features.frames.cols()));
    for (double v : u.features.frames.data) w.f32(static_cast<float>(v));
    w.u32(static_cast<uint32_t>(u.tokens.size()));
    for (int t : u.tokens) w.u32(static_cast<uint32_t>(t));
    w.u32(static_cast<uint32_t>(u.domain_id));
    w.f64(u.features.speech_end_ms);
    w.u32(static_cast<uint32_t>(u.t_eos_frame));
  }
  w.close();
}

Dataset load_dataset(const std::string& path) {
  BinReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  check(std::equal(magic, magic + 4, kMagic), "not a dataset archive: " + path);
  uint32_t version = r.u32();
  check(version == kVersion, "unsupported dataset archive version");
  Dataset ds;
  uint32_t vsize = r.u32();
  for (uint32_t i = 0; i < vsize; ++i) ds.meta.vocab.tokens.push_back(r.str());
  ds.meta.vocab.blank_id = static_cast<int>(r.u32());
  ds.meta.vocab.eos_id = static_cast<int>(r.u32());
  ds.meta.vocab.validate();
  ds.meta.num_domains = static_cast<int>(r.u32());
  ds.meta.hop_ms = r.f64();
  ds.meta.stack_k = static_cast<int>(r.u32());
  ds.meta.subsample_s = static_cast<int>(r.u32());
  uint64_t count = r.u64();
  ds.utts.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Utterance u;
    u.id = r.str();
    int t0 = static_cast<int>(r.u32());
    int d0 = static_cast<int>(r.u32());
    u.features.frames = nn::Tensor({t0, d0});
    for (double& v : u.features.frames.data) v = static_cast<double>(r.f32());
    uint32_t nt = r.u32();
    for (uint32_t k = 0; k < nt; ++k) u.tokens.push_back(static_cast<int>(r.u32()));
    u.domain_id = static_cast<int>(r.u32());
    u.features.domain_id = u.domain_id;
    u.features.speech_end_ms = r.f64();
    u.t_eos_frame = static_cast<int>(r.u32());
    ds.utts.push_back(std::move(u));
  }
  return ds;
}

std::vector<std::string> token_strings(const rnnt::Vocab& vocab, const std::vector<int>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.str(id));
  return out;
}

SpellingMap digit_spelling() {
  SpellingMap sp;
  for (int d = 0; d < 10; ++d) sp.add(std::string(1, '0' + d), kDigitWords[d]);
  return sp;
}

std::vector<std::string> canonical_words(const rnnt::Vocab& vocab, const std::vector<int>& ids,
                                         const SpellingMap& sp) {
  return normalize_transcript(token_strings(vocab, ids), sp);
}

int encoder_input_dim(const DatasetMeta& meta, int d0) {
  return d0 * meta.stack_k + meta.num_domains;
}

nn::Tensor encoder_input(const DatasetMeta& meta, const Utterance& u) {
  nn::Tensor stacked = stack_and_subsample(u.features.frames, meta.stack_k, meta.subsample_s);
  return attach_domain_onehot(stacked, u.domain_id, meta.num_domains);
}

}  // namespace frontend
}  // namespace twopass
