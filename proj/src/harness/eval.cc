// SPDX-License-Identifier: Apache-2.0
#include "harness/eval.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "util/common.h"
#include "util/io.h"
#include "util/stats.h"

namespace twopass {
namespace harness {

double frame_duration_ms(const frontend::DatasetMeta& meta, const rnnt::RnnTConfig& cfg) {
  const int reduction = cfg.time_reduction ? cfg.time_reduction_factor : 1;
  return meta.hop_ms * meta.subsample_s * reduction;
}

std::optional<int> vad_endpoint(const nn::Tensor& frames, double energy_threshold,
                                double silence_interval_ms, double hop_ms) {
  check_config(silence_interval_ms > 0.0, "silence interval must be positive");
  check_config(hop_ms > 0.0, "hop must be positive");
  const int needed = static_cast<int>(std::ceil(silence_interval_ms / hop_ms));
  bool speech_seen = false;
  int silence_run = 0;
  for (int t = 0; t < frames.rows(); ++t) {
    double energy = 0.0;
    for (int j = 0; j < frames.cols(); ++j) energy += frames.at(t, j) * frames.at(t, j);
    energy /= frames.cols();
    if (energy >= energy_threshold) {
      speech_seen = true;
      silence_run = 0;
    } else if (speech_seen) {
      if (++silence_run == needed) return t + 1;
    }
  }
  return std::nullopt;
}

double ep_latency_ms(int mic_close_frame, double speech_end_ms, double frame_duration_ms) {
  return mic_close_frame * frame_duration_ms - speech_end_ms;
}

void EvalConfig::validate() const {
  beam.validate();
  weights.validate();
  if (use_vad) {
    check_config(vad_energy_threshold > 0.0, "vad energy threshold must be positive");
    check_config(vad_silence_ms > 0.0, "vad silence interval must be positive");
  }
}

namespace {

nn::Tensor first_rows(const nn::Tensor& m, int rows) {
  check(rows >= 0 && rows <= m.rows(), "row slice out of range");
  nn::Tensor out({rows, m.cols()});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < m.cols(); ++c) out.at(r, c) = m.at(r, c);
  }
  return out;
}

std::vector<int> strip_eos(std::vector<int> tokens, int eos_id) {
  if (!tokens.empty() && tokens.back() == eos_id) tokens.pop_back();
  return tokens;
}

}  // namespace

EvalRecord run_utterance(const rnnt::RnnTParams& first_pass, const las::LasParams* second_pass,
                         const frontend::DatasetMeta& meta, const frontend::Utterance& utt,
                         const EvalConfig& cfg) {
  const double joint_dur = frame_duration_ms(meta, first_pass.cfg);
  const nn::Tensor x = frontend::encoder_input(meta, utt);
  nn::Tensor e_s = rnnt::encode_sequence(first_pass, x);

  rnnt::BeamConfig beam_cfg = cfg.beam;
  // Without the joint endpointer the first pass models no end of query; the
  // `</s>` token is blocked outright so the beam never closes on its own.
  if (!cfg.use_joint_ep) beam_cfg.eos_decode_penalty = std::numeric_limits<double>::infinity();
  rnnt::DecodeResult res = rnnt::streaming_beam_search(first_pass, e_s, beam_cfg);

  const double inf = std::numeric_limits<double>::infinity();
  std::optional<int> joint_close;
  double joint_ms = inf;
  if (cfg.use_joint_ep && res.mic_close_frame) {
    joint_close = *res.mic_close_frame;
    joint_ms = *joint_close * joint_dur;
  }
  std::optional<int> vad_close;
  double vad_ms = inf;
  if (cfg.use_vad) {
    vad_close = vad_endpoint(utt.features.frames, cfg.vad_energy_threshold, cfg.vad_silence_ms,
                             meta.hop_ms);
    if (vad_close) vad_ms = *vad_close * meta.hop_ms;
  }

  EvalRecord rec;
  rec.utt_id = utt.id;
  rec.speech_end_ms = utt.features.speech_end_ms;
  rec.frame_duration_ms = joint_dur;
  if (vad_close && vad_ms < joint_ms) {
    // The external endpointer wins: the decoder only ever saw the rows that
    // fit before the close.
    const int rows = std::min(e_s.rows(), static_cast<int>(std::floor(vad_ms / joint_dur + 1e-9)));
    e_s = first_rows(e_s, rows);
    res = rnnt::streaming_beam_search(first_pass, e_s, beam_cfg);
    rec.mic_close_frame = *vad_close;
    rec.frame_duration_ms = meta.hop_ms;
  } else if (joint_close) {
    rec.mic_close_frame = *joint_close;
  }
  if (rec.mic_close_frame) {
    rec.ep_latency_ms = ep_latency_ms(*rec.mic_close_frame, rec.speech_end_ms,
                                      rec.frame_duration_ms);
    rec.early_cutoff = *rec.ep_latency_ms < 0.0;
  }

  std::vector<int> hyp_tokens;
  if (cfg.rescore) {
    check_config(second_pass != nullptr, "rescoring requires second-pass parameters");
    if (res.lattice.arcs.empty()) {
      hyp_tokens = res.best_tokens;
    } else {
      const int rows_seen = res.mic_close_frame ? *res.mic_close_frame : e_s.rows();
      const las::AttentionSourceCache cache = las::build_attention_cache(
          *second_pass, las::additional_encode(*second_pass, first_rows(e_s, rows_seen)));
      las::rescore_lattice(&res.lattice, cache, *second_pass, true);
      hyp_tokens = lattice::best_path(res.lattice, cfg.weights).tokens;
    }
  } else {
    hyp_tokens = res.best_tokens;
  }

  rec.ref_words = frontend::canonical_words(meta.vocab, utt.tokens, cfg.normalize);
  rec.hyp_words = frontend::canonical_words(
      meta.vocab, strip_eos(std::move(hyp_tokens), meta.vocab.eos_id), cfg.normalize);
  rec.edits = edit_distance(rec.ref_words, rec.hyp_words);
  return rec;
}

EvalResult eval_dataset(const rnnt::RnnTParams& first_pass, const las::LasParams* second_pass,
                        const frontend::Dataset& ds, const EvalConfig& cfg) {
  check_config(!ds.utts.empty(), "evaluation set is empty");
  cfg.validate();
  EvalResult r;
  r.records.reserve(ds.utts.size());
  std::vector<double> latencies;
  std::vector<double> close_times;
  latencies.reserve(ds.utts.size());
  close_times.reserve(ds.utts.size());
  for (const frontend::Utterance& u : ds.utts) {
    r.records.push_back(run_utterance(first_pass, second_pass, ds.meta, u, cfg));
    const EvalRecord& rec = r.records.back();
    if (rec.ep_latency_ms) {
      latencies.push_back(*rec.ep_latency_ms);
    } else if (cfg.fallback_latency_ms) {
      latencies.push_back(*cfg.fallback_latency_ms);
      ++r.n_no_close;
    } else {
      // Default fallback: the mic stays open to the end of the utterance.
      const double end_ms = u.features.frames.rows() * ds.meta.hop_ms;
      latencies.push_back(end_ms - rec.speech_end_ms);
      ++r.n_no_close;
    }
    close_times.push_back(latencies.back() + rec.speech_end_ms);
    if (rec.early_cutoff) ++r.n_early_cutoff;
  }
  std::sort(r.records.begin(), r.records.end(),
            [](const EvalRecord& a, const EvalRecord& b) { return a.utt_id < b.utt_id; });

  std::vector<EditCounts> counts;
  std::vector<int> ref_lens;
  for (const EvalRecord& rec : r.records) {
    counts.push_back(rec.edits);
    ref_lens.push_back(static_cast<int>(rec.ref_words.size()));
    r.substitutions += rec.edits.substitutions;
    r.insertions += rec.edits.insertions;
    r.deletions += rec.edits.deletions;
    r.ref_words += static_cast<long>(rec.ref_words.size());
  }
  r.wer = wer_percent(counts, ref_lens);
  r.deletion_rate = static_cast<double>(r.deletions) / static_cast<double>(r.ref_words);
  r.ep50_ms = percentile_nearest_rank(latencies, 50.0);
  r.ep90_ms = percentile_nearest_rank(latencies, 90.0);
  r.close50_ms = percentile_nearest_rank(close_times, 50.0);
  r.n_utts = static_cast<int>(ds.utts.size());
  return r;
}

std::string metrics_csv_header() {
  return "config_id,wer,sub,ins,del,ep50_ms,ep90_ms,n_utts,n_no_close\n";
}

std::string metrics_csv_row(const std::string& config_id, const EvalResult& r) {
  return config_id + "," + format_double(r.wer) + "," + std::to_string(r.substitutions) + "," +
         std::to_string(r.insertions) + "," + std::to_string(r.deletions) + "," +
         format_double(r.ep50_ms) + "," + format_double(r.ep90_ms) + "," +
         std::to_string(r.n_utts) + "," + std::to_string(r.n_no_close) + "\n";
}

}  // namespace harness
}  // namespace twopass
