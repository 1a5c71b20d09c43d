// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frontend/spelling.h"
#include "nn/tensor.h"
#include "rnnt/vocab.h"
#include "util/config.h"

namespace twopass {
namespace frontend {

struct FeatureSequence {
  nn::Tensor frames;  // T0 x d0 at the raw frame rate
  double speech_end_ms = 0.0;
  int domain_id = 0;
};

struct Utterance {
  std::string id;
  FeatureSequence features;
  std::vector<int> tokens;  // transcript token ids, no `</s>`
  int t_eos_frame = 0;      // subsampled index just after the last speech frame
  int domain_id = 0;
};

struct DatasetMeta {
  rnnt::Vocab vocab;
  int num_domains = 2;
  double hop_ms = 10.0;
  int stack_k = 4;
  int subsample_s = 3;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Utterance> utts;
};

// Generator settings. Domains alternate transcript conventions: even domains
// write digits as digit tokens ("7"), odd domains as number words ("seven");
// filler words share one surface form everywhere. Acoustic templates are
// drawn from template_seed only, so independently seeded datasets share the
// same sound inventory.
struct SynthSpec {
  int count = 100;
  uint64_t seed = 1;
  int d0 = 8;
  int template_frames = 4;
  double hop_ms = 10.0;
  int stack_k = 4;
  int subsample_s = 3;
  double noise_sigma = 0.05;
  std::vector<double> domain_mix = {0.875, 0.125};
  std::vector<int> len_min = {2, 4};
  std::vector<int> len_max = {5, 8};
  std::vector<int> sil_min = {35, 60};
  std::vector<int> sil_max = {60, 120};
  double filler_prob = 0.25;
  int lead_sil_min = 2;
  int lead_sil_max = 8;
  uint64_t template_seed = 9001;
  std::vector<std::string> fillers = {"uh", "um", "please", "call",
                                      "play", "stop", "the", "to"};

  static SynthSpec from_config(const Config& cfg);
  void validate() const;
};

Dataset synth_dataset(const SynthSpec& spec);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Transcript token strings for a token-id sequence.
std::vector<std::string> token_strings(const rnnt::Vocab& vocab, const std::vector<int>& ids);

// Maps written digits to their spoken forms ("3" -> "three"), the canonical
// spelling used for scoring.
SpellingMap digit_spelling();

// Token strings normalized to canonical spelling. Callers strip `</s>` first.
std::vector<std::string> canonical_words(const rnnt::Vocab& vocab, const std::vector<int>& ids,
                                         const SpellingMap& sp);

// Width of the encoder input rows produced by encoder_input.
int encoder_input_dim(const DatasetMeta& meta, int d0);

// Stacked, subsampled features with the domain one-hot attached: the tensor
// the first-pass encoder consumes.
nn::Tensor encoder_input(const DatasetMeta& meta, const Utterance& u);

}  // namespace frontend
}  // namespace twopass
