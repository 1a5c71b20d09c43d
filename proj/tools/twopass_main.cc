// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end wiring the pipeline together: data synthesis,
// first- and second-pass training, MWER fine-tuning, decoding, rescoring,
// evaluation, endpointer sweeps, rescoring benchmarks, and quantization.
// Exit codes: 0 success, 2 configuration error, 3 contract violation.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "frontend/dataset.h"
#include "harness/eval.h"
#include "harness/metrics.h"
#include "harness/sweep.h"
#include "las/las.h"
#include "lattice/lattice.h"
#include "nn/tensor.h"
#include "quant/quant.h"
#include "rnnt/beam.h"
#include "rnnt/model.h"
#include "train/checkpoint.h"
#include "train/optimizer.h"
#include "train/train.h"
#include "util/common.h"
#include "util/config.h"
#include "util/io.h"

namespace {

using namespace twopass;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "key = value configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args->seed, "overrides the config's seed");
  cmd->add_option("--out", args->out_dir, "output directory (created if missing)");
}

// Loads the config file and applies the --seed override, so every consumer
// (including checkpoint echoes) sees one merged view.
Config merged_config(const CommonArgs& args) {
  Config cfg = Config::from_file(args.config_path);
  if (args.seed) cfg.set("seed", std::to_string(*args.seed));
  return cfg;
}

std::string out_path(const CommonArgs& args, const std::string& name) {
  std::filesystem::create_directories(args.out_dir);
  return (std::filesystem::path(args.out_dir) / name).string();
}

frontend::Dataset load_data(const Config& cfg) {
  return frontend::load_dataset(cfg.get_str("data"));
}

int dataset_feature_dim(const frontend::Dataset& ds) {
  check_config(!ds.utts.empty(), "dataset has no utterances");
  return ds.utts[0].features.frames.cols();
}

void check_vocab_match(const rnnt::Vocab& a, const rnnt::Vocab& b, const std::string& what) {
  check_config(a.hash() == b.hash(), what + ": vocabulary mismatch");
}

rnnt::Vocab load_checkpoint_vocab(const std::string& path) {
  return train::load_checkpoint(path).vocab();
}

// First-pass weights travel with the merged training config; input_dim is
// recorded there so the model shape can be rebuilt without the dataset.
rnnt::RnnTParams load_first_pass(const std::string& path) {
  train::Checkpoint c = train::load_checkpoint(path);
  Config echo = Config::from_string(c.config_echo);
  const int input_dim = echo.get_int("input_dim", 0);
  check_config(input_dim > 0, path + ": checkpoint does not record input_dim");
  rnnt::RnnTParams p;
  p.init(rnnt::RnnTConfig::from_config(echo, input_dim, c.vocab()), 1);
  c.to_params(p.params());
  return p;
}

las::LasParams load_second_pass(const std::string& path) {
  train::Checkpoint c = train::load_checkpoint(path);
  Config echo = Config::from_string(c.config_echo);
  const int source_dim = echo.get_int("source_dim", 0);
  check_config(source_dim > 0, path + ": checkpoint does not record source_dim");
  las::LasParams p;
  p.init(las::LasConfig::from_config(echo, source_dim, c.vocab()), 1);
  c.to_params(p.params());
  return p;
}

void save_params(const std::vector<nn::Parameter*>& params, const rnnt::Vocab& vocab,
                 const Config& echo, const std::string& path) {
  train::save_checkpoint(train::Checkpoint::from_params(params, vocab, echo.echo()), path);
}

// Run provenance plus the model's own architecture keys; the latter win, so
// reloading a checkpoint always rebuilds the stored shape.
Config echo_with_arch(const Config& run_cfg, const Config& arch) {
  Config echo = run_cfg;
  echo.merge(arch);
  return echo;
}

// Saves the averaged weights as a sibling checkpoint, leaving the live
// parameters untouched.
void save_ema(const train::TrainResult& result, std::vector<nn::Parameter*> params,
              const rnnt::Vocab& vocab, const Config& echo, const std::string& path) {
  if (!result.ema) return;
  std::vector<nn::Tensor> keep;
  keep.reserve(params.size());
  for (const nn::Parameter* p : params) keep.push_back(p->value);
  result.ema->copy_to(params);
  save_params(params, vocab, echo, path);
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = keep[i];
}

rnnt::BeamConfig beam_from_config(const Config& cfg) {
  rnnt::BeamConfig b;
  b.beam_size = cfg.get_int("beam_size", b.beam_size);
  b.max_symbols_per_frame = cfg.get_int("max_symbols_per_frame", b.max_symbols_per_frame);
  b.eos_decode_penalty = cfg.get_double("eos_decode_penalty", b.eos_decode_penalty);
  return b;
}

harness::EvalConfig eval_from_config(const Config& cfg) {
  harness::EvalConfig e;
  e.beam = beam_from_config(cfg);
  e.weights.lambda_las = cfg.get_double("lambda", e.weights.lambda_las);
  e.rescore = cfg.get_bool("rescore", e.rescore);
  e.use_joint_ep = cfg.get_bool("use_joint_ep", e.use_joint_ep);
  e.use_vad = cfg.get_bool("use_vad", e.use_vad);
  e.vad_energy_threshold = cfg.get_double("vad_energy_threshold", e.vad_energy_threshold);
  e.vad_silence_ms = cfg.get_double("vad_silence_ms", e.vad_silence_ms);
  if (cfg.has("fallback_latency_ms")) {
    e.fallback_latency_ms = cfg.get_double("fallback_latency_ms", 0.0);
  }
  if (cfg.get_bool("normalize_digits", false)) e.normalize = frontend::digit_spelling();
  return e;
}

std::string summary_line(const std::string& config_id, const harness::EvalResult& r) {
  return config_id + ": wer=" + format_double(r.wer) + " ep50_ms=" + format_double(r.ep50_ms) +
         " ep90_ms=" + format_double(r.ep90_ms) + " no_close=" + std::to_string(r.n_no_close) +
         "/" + std::to_string(r.n_utts);
}

int cmd_gen_data(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = frontend::synth_dataset(frontend::SynthSpec::from_config(cfg));
  const std::string path = out_path(args, "data.bin");
  frontend::save_dataset(ds, path);
  std::cout << "wrote " << path << " (" << ds.utts.size() << " utterances)\n";
  return 0;
}

int cmd_train_rnnt(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);
  const int input_dim = frontend::encoder_input_dim(ds.meta, dataset_feature_dim(ds));

  rnnt::RnnTParams params;
  params.init(rnnt::RnnTConfig::from_config(cfg, input_dim, ds.meta.vocab),
              static_cast<uint64_t>(cfg.get_int("seed", 1)));
  rnnt::EndpointerPenaltyConfig epc = rnnt::EndpointerPenaltyConfig::from_config(cfg);
  train::OptimizerConfig opt = train::OptimizerConfig::from_config(cfg);

  train::TrainResult result = train::train_rnnt(ds, &params, epc, opt);
  write_text_file(out_path(args, "train_rnnt_loss.csv"), train::loss_curve_csv(result.curve));
  const Config echo = echo_with_arch(cfg, params.cfg.to_config());
  save_params(params.params(), ds.meta.vocab, echo, out_path(args, "rnnt.ckpt"));
  save_ema(result, params.params(), ds.meta.vocab, echo, out_path(args, "rnnt_ema.ckpt"));
  if (!result.curve.empty()) {
    std::cout << "final loss " << format_double(result.curve.back().loss) << " after "
              << result.curve.size() << " steps\n";
  }
  return 0;
}

int cmd_train_las(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);
  rnnt::RnnTParams first_pass = load_first_pass(cfg.get_str("first_pass"));
  check_vocab_match(load_checkpoint_vocab(cfg.get_str("first_pass")), ds.meta.vocab,
                    "first pass vs dataset");

  las::LasParams las_params;
  las_params.init(
      las::LasConfig::from_config(cfg, first_pass.cfg.encoder_output_dim(), ds.meta.vocab),
      static_cast<uint64_t>(cfg.get_int("seed", 1)));
  train::OptimizerConfig opt = train::OptimizerConfig::from_config(cfg);

  train::TrainResult result = train::train_las_ce(ds, first_pass, &las_params, opt);
  write_text_file(out_path(args, "train_las_loss.csv"), train::loss_curve_csv(result.curve));
  const Config echo = echo_with_arch(cfg, las_params.cfg.to_config());
  save_params(las_params.params(), ds.meta.vocab, echo, out_path(args, "las.ckpt"));
  save_ema(result, las_params.params(), ds.meta.vocab, echo, out_path(args, "las_ema.ckpt"));
  if (!result.curve.empty()) {
    std::cout << "final loss " << format_double(result.curve.back().loss) << " after "
              << result.curve.size() << " steps\n";
  }
  return 0;
}

int cmd_mwer(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);
  rnnt::RnnTParams first_pass = load_first_pass(cfg.get_str("first_pass"));
  las::LasParams las_params = load_second_pass(cfg.get_str("second_pass"));

  train::MwerSettings ms;
  ms.beam = beam_from_config(cfg);
  ms.weights.lambda_las = cfg.get_double("lambda", ms.weights.lambda_las);
  ms.nbest_size = cfg.get_int("nbest_size", ms.nbest_size);
  if (cfg.get_bool("normalize_digits", false)) ms.normalize = frontend::digit_spelling();
  train::OptimizerConfig opt = train::OptimizerConfig::from_config(cfg);

  train::TrainResult result = train::mwer_finetune(ds, first_pass, &las_params, ms, opt);
  write_text_file(out_path(args, "mwer_loss.csv"), train::loss_curve_csv(result.curve));
  const Config echo = echo_with_arch(cfg, las_params.cfg.to_config());
  save_params(las_params.params(), ds.meta.vocab, echo, out_path(args, "las_mwer.ckpt"));
  save_ema(result, las_params.params(), ds.meta.vocab, echo, out_path(args, "las_mwer_ema.ckpt"));
  std::cout << "skipped " << result.skipped << " utterances with fewer than 2 candidates\n";
  return 0;
}

int cmd_decode(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);
  rnnt::RnnTParams first_pass = load_first_pass(cfg.get_str("first_pass"));
  check_vocab_match(load_checkpoint_vocab(cfg.get_str("first_pass")), ds.meta.vocab,
                    "first pass vs dataset");

  harness::EvalConfig ecfg = eval_from_config(cfg);
  ecfg.rescore = false;

  const std::string lat_dir = out_path(args, "lattices");
  std::filesystem::create_directories(lat_dir);
  for (const frontend::Utterance& u : ds.utts) {
    nn::Tensor e_s = rnnt::encode_sequence(first_pass, frontend::encoder_input(ds.meta, u));
    rnnt::DecodeResult res = rnnt::streaming_beam_search(first_pass, e_s, ecfg.beam);
    write_text_file((std::filesystem::path(lat_dir) / (u.id + ".lat")).string(),
                    lattice::dump_lattice(res.lattice));
  }

  harness::EvalResult r = harness::eval_dataset(first_pass, nullptr, ds, ecfg);
  const std::string config_id = cfg.get_str("config_id", "decode");
  write_text_file(out_path(args, "metrics.csv"),
                  harness::metrics_csv_header() + harness::metrics_csv_row(config_id, r));
  std::cout << summary_line(config_id, r) << "\n";
  return 0;
}

int cmd_rescore(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);
  rnnt::RnnTParams first_pass = load_first_pass(cfg.get_str("first_pass"));
  las::LasParams las_params = load_second_pass(cfg.get_str("second_pass"));

  harness::EvalConfig ecfg = eval_from_config(cfg);
  ecfg.rescore = true;

  harness::EvalResult r = harness::eval_dataset(first_pass, &las_params, ds, ecfg);
  const std::string config_id = cfg.get_str("config_id", "rescore");
  write_text_file(out_path(args, "metrics.csv"),
                  harness::metrics_csv_header() + harness::metrics_csv_row(config_id, r));
  std::cout << summary_line(config_id, r) << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, bool quantized) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);

  rnnt::RnnTParams first_pass = load_first_pass(cfg.get_str("first_pass"));
  las::LasParams las_params;
  harness::EvalConfig ecfg = eval_from_config(cfg);
  const bool has_second = cfg.has("second_pass");
  if (has_second) las_params = load_second_pass(cfg.get_str("second_pass"));
  check_config(!ecfg.rescore || has_second, "rescore = true needs a second_pass checkpoint");

  if (quantized) {
    // Round weights through the 8-bit container, then evaluate what a
    // quantized deployment would run.
    train::Checkpoint fp8 = quant::quantize_checkpoint(train::Checkpoint::from_params(
        first_pass.params(), ds.meta.vocab, cfg.echo()));
    fp8.to_params(first_pass.params());
    if (has_second) {
      train::Checkpoint sp8 = quant::quantize_checkpoint(train::Checkpoint::from_params(
          las_params.params(), ds.meta.vocab, cfg.echo()));
      sp8.to_params(las_params.params());
    }
  }

  harness::EvalResult r =
      harness::eval_dataset(first_pass, has_second ? &las_params : nullptr, ds, ecfg);
  std::string config_id = cfg.get_str("config_id", "eval");
  if (quantized) config_id += "-int8";
  write_text_file(out_path(args, quantized ? "metrics_int8.csv" : "metrics.csv"),
                  harness::metrics_csv_header() + harness::metrics_csv_row(config_id, r));
  std::cout << summary_line(config_id, r) << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);
  rnnt::RnnTParams first_pass = load_first_pass(cfg.get_str("first_pass"));
  las::LasParams las_params;
  const bool has_second = cfg.has("second_pass");
  if (has_second) las_params = load_second_pass(cfg.get_str("second_pass"));

  const harness::EvalConfig base = eval_from_config(cfg);
  std::vector<harness::SweepEntry> entries;
  std::vector<double> penalties = {0.0, 1.0, 2.0, 4.0};
  if (cfg.has("eos_penalty_grid")) penalties = cfg.get_double_list("eos_penalty_grid");
  for (double pen : penalties) {
    harness::SweepEntry e{"pen" + format_double(pen), base};
    e.cfg.beam.eos_decode_penalty = pen;
    entries.push_back(e);
  }
  if (cfg.has("lambda_grid")) {
    check_config(has_second, "lambda_grid needs a second_pass checkpoint");
    for (double lam : cfg.get_double_list("lambda_grid")) {
      harness::SweepEntry e{"lambda" + format_double(lam), base};
      e.cfg.rescore = true;
      e.cfg.weights.lambda_las = lam;
      entries.push_back(e);
    }
  }
  if (cfg.get_bool("include_vad", false)) {
    harness::SweepEntry e{"vad", base};
    e.cfg.use_joint_ep = false;
    e.cfg.use_vad = true;
    entries.push_back(e);
  }

  std::vector<harness::SweepPoint> points =
      harness::sweep_tradeoff(first_pass, has_second ? &las_params : nullptr, ds, entries);
  write_text_file(out_path(args, "sweep.csv"), harness::sweep_csv(points));
  write_text_file(out_path(args, "sweep.svg"), harness::sweep_svg(points));
  for (const harness::SweepPoint& p : points) std::cout << summary_line(p.config_id, p.result) << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& args) {
  Config cfg = merged_config(args);
  frontend::Dataset ds = load_data(cfg);
  rnnt::RnnTParams first_pass = load_first_pass(cfg.get_str("first_pass"));
  las::LasParams las_params = load_second_pass(cfg.get_str("second_pass"));

  rnnt::BeamConfig beam = beam_from_config(cfg);
  const int n_utts = std::min<int>(cfg.get_int("n_utts", 20), static_cast<int>(ds.utts.size()));
  const int reps = cfg.get_int("repetitions", 5);

  std::vector<lattice::PrefixTreeLattice> lats;
  std::vector<las::AttentionSourceCache> caches;
  for (int i = 0; i < n_utts; ++i) {
    const frontend::Utterance& u = ds.utts[static_cast<size_t>(i)];
    nn::Tensor e_s = rnnt::encode_sequence(first_pass, frontend::encoder_input(ds.meta, u));
    rnnt::DecodeResult res = rnnt::streaming_beam_search(first_pass, e_s, beam);
    if (res.lattice.arcs.empty()) continue;
    lats.push_back(res.lattice);
    caches.push_back(las::build_attention_cache(las_params, las::additional_encode(las_params, e_s)));
  }
  check_config(!lats.empty(), "no non-empty lattices to benchmark");

  std::vector<lattice::PrefixTreeLattice> batched_lats = lats;
  las::RescoreBenchStats batched =
      las::bench_rescore(&batched_lats, caches, las_params, true, reps);
  std::vector<lattice::PrefixTreeLattice> loop_lats = lats;
  las::RescoreBenchStats unbatched =
      las::bench_rescore(&loop_lats, caches, las_params, false, reps);

  std::string csv = "mode,p50_ms,p90_ms\n";
  csv += "batched," + format_double(batched.p50_ms) + "," + format_double(batched.p90_ms) + "\n";
  csv += "unbatched," + format_double(unbatched.p50_ms) + "," + format_double(unbatched.p90_ms) + "\n";
  write_text_file(out_path(args, "bench.csv"), csv);
  std::cout << "batched p50=" << format_double(batched.p50_ms)
            << "ms p90=" << format_double(batched.p90_ms) << "ms\n"
            << "unbatched p50=" << format_double(unbatched.p50_ms)
            << "ms p90=" << format_double(unbatched.p90_ms) << "ms\n";
  return 0;
}

int cmd_quantize(const CommonArgs& args) {
  Config cfg = merged_config(args);
  train::Checkpoint c = train::load_checkpoint(cfg.get_str("input"));
  train::Checkpoint q = quant::quantize_checkpoint(c);
  const std::string path = out_path(args, "quantized.ckpt");
  train::save_checkpoint(q, path);
  quant::SizeReport report = quant::model_size_report(q);
  write_text_file(out_path(args, "size_report.txt"), report.text);
  std::cout << "wrote " << path << " (payload ratio " << format_double(report.ratio) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-pass streaming speech recognizer pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  bool quantized = false;

  CLI::App* gen = app.add_subcommand("gen-data", "synthesize a dataset");
  add_common(gen, &args);
  CLI::App* trnnt = app.add_subcommand("train-rnnt", "train the first pass");
  add_common(trnnt, &args);
  CLI::App* tlas = app.add_subcommand("train-las", "train the second pass (cross entropy)");
  add_common(tlas, &args);
  CLI::App* mwer = app.add_subcommand("mwer-finetune", "fine-tune the second pass on word errors");
  add_common(mwer, &args);
  CLI::App* dec = app.add_subcommand("decode", "first-pass decode; emits lattices and metrics");
  add_common(dec, &args);
  CLI::App* resc = app.add_subcommand("rescore", "two-pass decode; emits metrics");
  add_common(resc, &args);
  CLI::App* ev = app.add_subcommand("eval", "evaluate per the config");
  add_common(ev, &args);
  ev->add_flag("--quantized", quantized, "evaluate with weights rounded through int8");
  CLI::App* sweep = app.add_subcommand("sweep-endpoint", "operating-point sweep; CSV and SVG");
  add_common(sweep, &args);
  CLI::App* bench = app.add_subcommand("bench-rescore", "batched vs sequential rescoring times");
  add_common(bench, &args);
  CLI::App* qz = app.add_subcommand("quantize", "quantize a checkpoint and report its size");
  add_common(qz, &args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    if (gen->parsed()) return cmd_gen_data(args);
    if (trnnt->parsed()) return cmd_train_rnnt(args);
    if (tlas->parsed()) return cmd_train_las(args);
    if (mwer->parsed()) return cmd_mwer(args);
    if (dec->parsed()) return cmd_decode(args);
    if (resc->parsed()) return cmd_rescore(args);
    if (ev->parsed()) return cmd_eval(args, quantized);
    if (sweep->parsed()) return cmd_sweep(args);
    if (bench->parsed()) return cmd_bench(args);
    if (qz->parsed()) return cmd_quantize(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
