// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "frontend/dataset.h"
#include "harness/metrics.h"
#include "las/las.h"
#include "lattice/lattice.h"
#include "rnnt/beam.h"
#include "rnnt/model.h"

namespace twopass {
namespace harness {

// Wall time covered by one decoder frame: raw hop times subsampling times the
// encoder's internal time reduction (when enabled).
double frame_duration_ms(const frontend::DatasetMeta& meta, const rnnt::RnnTConfig& cfg);

// Energy endpointer over raw frames: closes once speech (any frame at or
// above the threshold) has been observed and the mean-square energy stays
// below the threshold for silence_interval_ms continuously. Returns the
// number of raw frames consumed at close (close time = frames * hop_ms), or
// nothing if the utterance never satisfies the rule.
std::optional<int> vad_endpoint(const nn::Tensor& frames, double energy_threshold,
                                double silence_interval_ms, double hop_ms);

// Microphone-close latency relative to the end of speech; negative values
// mean the mic closed early and are reported as-is.
double ep_latency_ms(int mic_close_frame, double speech_end_ms, double frame_duration_ms);

// One scored utterance. mic_close_frame is in units of frame_duration_ms
// (which differs between the joint endpointer and the raw-hop VAD), so
// ep_latency_ms is always mic_close_frame * frame_duration_ms minus
// speech_end_ms; both are set when any endpointer closed, neither otherwise.
struct EvalRecord {
  std::string utt_id;
  std::vector<std::string> ref_words;
  std::vector<std::string> hyp_words;
  std::optional<int> mic_close_frame;
  double frame_duration_ms = 0.0;
  double speech_end_ms = 0.0;
  std::optional<double> ep_latency_ms;
  bool early_cutoff = false;  // closed before the end of speech
  EditCounts edits;
};

struct EvalConfig {
  rnnt::BeamConfig beam;
  lattice::ScoreWeights weights;
  bool rescore = false;       // run the second pass over the lattice
  bool use_joint_ep = true;   // close from the decoder's `</s>`
  bool use_vad = false;       // close from the external energy endpointer
  double vad_energy_threshold = 0.1;
  double vad_silence_ms = 400.0;
  // Latency charged to utterances that never close; unset means the time
  // from end of speech to the end of the utterance.
  std::optional<double> fallback_latency_ms;
  // Applied to both reference and hypothesis words before scoring. The empty
  // default preserves each domain's transcript convention ("3" and "three"
  // stay distinct); digit_spelling() merges written and spoken digit forms.
  frontend::SpellingMap normalize;

  void validate() const;
};

// Decodes one utterance and scores it. With both endpointers enabled the
// earlier close (in wall time) wins. Rescoring sees only the encoder rows
// consumed before the close.
EvalRecord run_utterance(const rnnt::RnnTParams& first_pass, const las::LasParams* second_pass,
                         const frontend::DatasetMeta& meta, const frontend::Utterance& utt,
                         const EvalConfig& cfg);

struct EvalResult {
  std::vector<EvalRecord> records;  // sorted by utterance id
  double wer = 0.0;
  long substitutions = 0;
  long insertions = 0;
  long deletions = 0;
  long ref_words = 0;
  double deletion_rate = 0.0;  // deletions / reference words
  // Percentiles over per-utterance latency; utterances that never closed
  // contribute the fallback latency (utterance end) and are counted.
  double ep50_ms = 0.0;
  double ep90_ms = 0.0;
  // Median close wall time (latency plus end of speech), same fallback rule.
  double close50_ms = 0.0;
  int n_utts = 0;
  int n_no_close = 0;
  int n_early_cutoff = 0;
};

EvalResult eval_dataset(const rnnt::RnnTParams& first_pass, const las::LasParams* second_pass,
                        const frontend::Dataset& ds, const EvalConfig& cfg);

// One metrics CSV row: config_id,wer,sub,ins,del,ep50_ms,ep90_ms,n_utts,n_no_close.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& config_id, const EvalResult& r);

}  // namespace harness
}  // namespace twopass
