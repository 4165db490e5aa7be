#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "pararec/checkpoint.hpp"
#include "pararec/errors.hpp"
#include "pararec/pipeline.hpp"

namespace {

using namespace pararec;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitData = 3;

std::vector<std::string> read_corpus_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open corpus file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

WbsOptions wbs_options_from(const RunConfig& cfg) {
  WbsOptions o;
  o.beam_width = cfg.beam_width;
  o.mode = cfg.wbs_mode == "words" ? WbsMode::words : WbsMode::ngrams;
  return o;
}

struct TrainArgs {
  std::string data_dir, out_path, config_path, pretrain_dir;
  std::vector<std::string> overrides;
};

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw DataError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
}

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = args.config_path.empty()
                      ? RunConfig()
                      : RunConfig::from_file(args.config_path);
  apply_overrides(cfg, args.overrides);

  const DatasetManifest manifest = DatasetManifest::load(args.data_dir);
  cfg.target_height = manifest.height;
  cfg.target_width = manifest.width;

  Model model(cfg, manifest.alphabet);
  Rng init_rng(cfg.seed);
  model.init_params(init_rng);

  const std::string log_path =
      cfg.log_file.empty() ? args.out_path + ".losses.csv" : cfg.log_file;
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write loss log " + log_path);
  log << "iteration,ctc_loss,ce_loss\n";

  auto load_preprocessed = [&](const std::string& dir) {
    std::vector<ParagraphSample> samples;
    for (const ParagraphSample& s : load_split(dir, "train"))
      samples.push_back(
          preprocess_sample(s, cfg.target_height, cfg.target_width));
    return samples;
  };

  std::uint64_t iterations_done = 0;
  try {
    if (!args.pretrain_dir.empty() && cfg.pretrain_iterations > 0) {
      const DatasetManifest pre_manifest =
          DatasetManifest::load(args.pretrain_dir);
      if (pre_manifest.alphabet != manifest.alphabet)
        throw DataError("pretraining dataset alphabet differs from " +
                        args.data_dir);
      Trainer pre(model, load_preprocessed(args.pretrain_dir), cfg);
      pre.set_lambda(0);  // recognition only, no end-detection loss
      for (int i = 0; i < cfg.pretrain_iterations; ++i) {
        const IterationStats st = pre.run_iteration();
        log << "pre" << st.iteration << "," << st.ctc << "," << st.ce << "\n";
      }
      model.set_lambda(cfg.lambda);
    }

    Trainer trainer(model, load_preprocessed(args.data_dir), cfg);
    for (int i = 0; i < cfg.iterations; ++i) {
      const IterationStats st = trainer.run_iteration();
      log << st.iteration << "," << st.ctc << "," << st.ce << "\n";
      if (st.iteration % 100 == 0 || st.iteration == 1)
        std::printf("iteration %d loss %.6f (ctc %.6f, ce %.6f)\n",
                    st.iteration, st.total, st.ctc, st.ce);
    }
    iterations_done = static_cast<std::uint64_t>(trainer.iterations_done());
  } catch (const NumericError& e) {
    log.flush();
    std::fprintf(stderr, "numeric failure in %s: %s\n", e.where().c_str(),
                 e.what());
    return kExitNumeric;
  }

  save_checkpoint(args.out_path, cfg, manifest.alphabet, iterations_done,
                  model.params());
  std::printf("saved checkpoint %s after %llu iterations\n",
              args.out_path.c_str(),
              static_cast<unsigned long long>(iterations_done));
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& split, const std::string& decode,
             const std::string& corpus_path,
             const std::vector<std::string>& overrides) {
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg = ckpt.config;
  apply_overrides(cfg, overrides);

  const DatasetManifest manifest = DatasetManifest::load(data_dir);
  if (manifest.alphabet != ckpt.alphabet)
    throw DataError("dataset alphabet does not match checkpoint alphabet");

  Model model(cfg, ckpt.alphabet);
  restore_params(ckpt, model.params());

  std::vector<ParagraphSample> samples;
  for (const ParagraphSample& s : load_split(data_dir, split))
    samples.push_back(preprocess_sample(s, cfg.target_height, cfg.target_width));

  EvalOptions options;
  options.greedy = decode == "greedy" || decode == "both";
  options.wbs = decode == "wbs" || decode == "both";
  options.wbs_options = wbs_options_from(cfg);
  if (!corpus_path.empty()) options.corpus = read_corpus_file(corpus_path);

  const EvalResult result = evaluate_split(model, samples, options);
  if (result.greedy) {
    std::printf("-- greedy decoding --\n%s", result.greedy->table().c_str());
  }
  if (result.wbs) {
    std::printf("-- word beam search (%s, width %d) --\n%s",
                cfg.wbs_mode.c_str(), cfg.beam_width,
                result.wbs->table().c_str());
  }
  std::printf("===\n");
  if (result.greedy)
    std::printf("%s", result.greedy->key_values("greedy_").c_str());
  if (result.wbs) std::printf("%s", result.wbs->key_values("wbs_").c_str());
  int correct_lines = 0;
  for (std::size_t i = 0; i < result.true_line_counts.size(); ++i)
    if (result.true_line_counts[i] == result.predicted_line_counts[i])
      ++correct_lines;
  std::printf("line_count_matches=%d/%zu\n", correct_lines,
              result.true_line_counts.size());
  return kExitOk;
}

int cmd_infer(const std::string& ckpt_path, const std::string& image_path,
              const std::string& decode, const std::string& corpus_path) {
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  Model model(ckpt.config, ckpt.alphabet);
  restore_params(ckpt, model.params());

  const Tensor raw = read_pgm(image_path);
  const Tensor image =
      preprocess(raw, ckpt.config.target_height, ckpt.config.target_width);
  const std::vector<Tensor> lines = model.infer(image);
  if (lines.empty()) {
    std::printf("\n");
    return kExitOk;
  }
  if (decode == "greedy") {
    std::printf("%s\n", model.greedy_text(lines).c_str());
  } else {
    if (corpus_path.empty())
      throw DataError("wbs decoding needs --corpus");
    const Lexicon lexicon =
        build_lexicon(read_corpus_file(corpus_path),
                      CharClassing::alphabetic(model.alphabet()));
    std::printf("%s\n",
                decode_paragraph(lines, model.alphabet(), lexicon,
                                 wbs_options_from(ckpt.config))
                    .c_str());
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int seeds) {
  bool ok = true;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t run_seed = seed + static_cast<std::uint64_t>(s);
    std::printf("seed %llu\n", static_cast<unsigned long long>(run_seed));
    for (const GradCheckEntry& e : model_gradient_check(run_seed)) {
      std::printf("  %-32s %10.3e  %s\n", e.param.c_str(), e.max_rel_err,
                  e.pass ? "pass" : "FAIL");
      ok = ok && e.pass;
    }
  }
  std::printf("gradient check: %s\n", ok ? "all layers pass" : "FAILURES");
  return ok ? kExitOk : kExitNumeric;
}

int cmd_synth(const std::string& out_dir, const SynthConfig& cfg) {
  synthesize(out_dir, cfg);
  std::printf("wrote dataset to %s\n", out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paragraph handwriting recognition pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  SynthConfig synth_cfg;
  int synth_train = 10, synth_test = 5;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_cfg.seed, "generator seed");
  synth->add_option("--train", synth_train, "training samples");
  synth->add_option("--test", synth_test, "test samples");
  synth->add_option("--height", synth_cfg.height, "image height");
  synth->add_option("--width", synth_cfg.width, "image width");
  synth->add_option("--min-lines", synth_cfg.min_lines, "min lines per paragraph");
  synth->add_option("--max-lines", synth_cfg.max_lines, "max lines per paragraph");
  synth->add_option("--glyph-scale", synth_cfg.glyph_scale, "font scale factor");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  TrainArgs train_args;
  train->add_option("--data", train_args.data_dir, "dataset directory")->required();
  train->add_option("--out", train_args.out_path, "checkpoint output path")->required();
  train->add_option("--config", train_args.config_path, "key=value config file");
  train->add_option("--set", train_args.overrides, "config override key=value");
  train->add_option("--pretrain-lines", train_args.pretrain_dir,
                    "line-level dataset for CTC-only pretraining");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_decode = "both";
  std::string eval_corpus;
  std::vector<std::string> eval_overrides;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "split name");
  eval->add_option("--decode", eval_decode, "greedy|wbs|both")
      ->check(CLI::IsMember({"greedy", "wbs", "both"}));
  eval->add_option("--corpus", eval_corpus, "corpus file for the lexicon");
  eval->add_option("--set", eval_overrides, "config override key=value");
  std::string eval_wbs_mode, eval_beam;
  eval->add_option("--wbs-mode", eval_wbs_mode, "words|ngrams");
  eval->add_option("--beam-width", eval_beam, "beam width");

  // infer
  auto* infer = app.add_subcommand("infer", "recognize a single image");
  std::string infer_ckpt, infer_image, infer_decode = "greedy", infer_corpus;
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint path")->required();
  infer->add_option("--image", infer_image, "PGM image path")->required();
  infer->add_option("--decode", infer_decode, "greedy|wbs")
      ->check(CLI::IsMember({"greedy", "wbs"}));
  infer->add_option("--corpus", infer_corpus, "corpus file for wbs");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference suite");
  std::uint64_t gc_seed = 1;
  int gc_seeds = 5;
  gradcheck->add_option("--seed", gc_seed, "first seed");
  gradcheck->add_option("--seeds", gc_seeds, "number of seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      synth_cfg.splits = {{"train", synth_train}, {"test", synth_test}};
      return cmd_synth(synth_out, synth_cfg);
    }
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) {
      if (!eval_wbs_mode.empty())
        eval_overrides.push_back("wbs_mode=" + eval_wbs_mode);
      if (!eval_beam.empty())
        eval_overrides.push_back("beam_width=" + eval_beam);
      return cmd_eval(eval_ckpt, eval_data, eval_split, eval_decode,
                      eval_corpus, eval_overrides);
    }
    if (infer->parsed())
      return cmd_infer(infer_ckpt, infer_image, infer_decode, infer_corpus);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_seeds);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure in %s: %s\n", e.where().c_str(), e.what());
    return kExitNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
