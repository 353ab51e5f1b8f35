// tools/seqvc_cli.cpp
//
// Command-line entry point: corpus generation, speaker statistics, model
// training, conversion, objective evaluation, gradient checking, and
// attention-matrix export.

// Copyright 2026  seqvc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <iostream>

#include "seqvc/config.hpp"
#include "seqvc/gradcheck.hpp"
#include "seqvc/plot.hpp"

extern char **environ;

namespace seqvc {
namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::string manifest;
  std::string out_dir;
  std::string checkpoint;
  std::string mode;
  std::string speaker_src, speaker_trg;
  std::string route;
  long seed = -1;
  long iterations = -1;
  bool forward_attention = false;
  bool force = false;
};

void add_common(CLI::App *cmd, CommonArgs &args, bool needs_out = true) {
  cmd->add_option("--config", args.config_path, "configuration file")->required();
  if (needs_out) cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--seed", args.seed, "override the seed");
  cmd->add_option("--mode", args.mode, "override the model mode")
      ->check(CLI::IsMember({"pairwise", "many2many", "any2many", "realtime"}));
}

// Loads the config, applies environment and flag overrides, and returns
// both the typed view and the (override-resolved) file for archiving.
std::pair<RunConfig, ConfigFile> resolve_config(const CommonArgs &args) {
  ConfigFile cf = ConfigFile::load(args.config_path);
  cf.apply_environment(environ);
  if (!args.mode.empty()) cf.set("model", "mode", args.mode);
  if (args.seed >= 0) {
    cf.set("train", "seed", std::to_string(args.seed));
    cf.set("corpus", "seed", std::to_string(args.seed));
  }
  if (args.iterations >= 0) cf.set("train", "iterations", std::to_string(args.iterations));
  if (!args.speaker_src.empty()) cf.set("train", "src_speaker", args.speaker_src);
  if (!args.speaker_trg.empty()) cf.set("train", "trg_speaker", args.speaker_trg);
  if (!args.manifest.empty()) cf.set("paths", "manifest", args.manifest);
  if (args.forward_attention) cf.set("inference", "forward_attention", "true");
  if (!args.route.empty()) cf.set("inference", "output", args.route);
  return {RunConfig::from_file(cf), cf};
}

void archive_config(const ConfigFile &cf, const std::string &out_dir) {
  fs::create_directories(out_dir);
  cf.save((fs::path(out_dir) / "config_resolved.txt").string());
}

std::string require_manifest(const RunConfig &rc) {
  require(!rc.manifest_path.empty(), "no manifest given (paths.manifest or --manifest)");
  return rc.manifest_path;
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const CommonArgs &args) {
  auto [rc, cf] = resolve_config(args);
  archive_config(cf, args.out_dir);
  auto manifest = generate_corpus(rc.corpus, args.out_dir);
  manifest = split_manifest(manifest, rc.train_fraction, derive_seed(rc.corpus.seed, 99));
  write_manifest((fs::path(args.out_dir) / "manifest.txt").string(), manifest);
  std::cout << "corpus: " << manifest.speakers.size() << " speakers, "
            << manifest.sentences("train").size() << " train / "
            << manifest.sentences("eval").size() << " eval sentences in " << args.out_dir
            << "\n";
  return 0;
}

int cmd_stats(const CommonArgs &args) {
  auto [rc, cf] = resolve_config(args);
  archive_config(cf, args.out_dir);
  auto manifest = read_manifest(require_manifest(rc));
  auto corpus = prepare_corpus(manifest, rc.model.num_mcc, rc.model.reduction);
  for (const auto &p : corpus.profiles) {
    const auto path = (fs::path(args.out_dir) / ("profile_" + p.name + ".txt")).string();
    write_profile(path, p);
    std::cout << "profile " << p.name << ": " << path << "\n";
  }
  return 0;
}

int cmd_train(const CommonArgs &args) {
  auto [rc, cf] = resolve_config(args);
  archive_config(cf, args.out_dir);
  auto manifest = read_manifest(require_manifest(rc));
  rc.model.num_speakers = static_cast<int>(manifest.speakers.size());
  rc.model.validate();
  auto corpus = prepare_corpus(manifest, rc.model.num_mcc, rc.model.reduction);
  TrainSession session(rc.model, rc.train);
  auto result = train(session, corpus, rc.model, rc.train, args.out_dir);

  const auto final_path = (fs::path(args.out_dir) / "checkpoint_final.svck").string();
  save_checkpoint_file(final_path, session.model, session.adam, session.iteration, session.rng,
                       fnv1a(canonical_config_string(rc.model, rc.train)));
  std::ofstream hist((fs::path(args.out_dir) / "loss_history.txt").string());
  hist << "# iteration total dec rec dal oal\n";
  char buf[160];
  for (std::size_t i = 0; i < result.history_total.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu %.9g %.9g %.9g %.9g %.9g\n", i + 1,
                  result.history_total[i], result.history_dec[i], result.history_rec[i],
                  result.history_dal[i], result.history_oal[i]);
    hist << buf;
  }
  if (result.diverged) {
    std::cerr << "training diverged at iteration " << session.iteration
              << "; restored last good checkpoint\n";
    return 5;
  }
  std::snprintf(buf, sizeof(buf), "trained %ld iterations, final loss %.6f -> %s\n",
                result.iterations_run,
                result.history_total.empty() ? 0.0 : result.history_total.back(),
                final_path.c_str());
  std::cout << buf;
  return 0;
}

LoadedCheckpoint open_checkpoint(const CommonArgs &args, const RunConfig &rc) {
  require(!args.checkpoint.empty(), "no checkpoint given (--checkpoint)");
  return load_checkpoint_file(args.checkpoint,
                              fnv1a(canonical_config_string(rc.model, rc.train)), args.force);
}

int cmd_convert(const CommonArgs &args, const std::string &input) {
  auto [rc, cf] = resolve_config(args);
  archive_config(cf, args.out_dir);
  auto ck = open_checkpoint(args, rc);
  auto raw = read_fseq(input);
  const std::string trg = !args.speaker_trg.empty() ? args.speaker_trg : rc.train.trg_speaker;
  std::string src = !args.speaker_src.empty() ? args.speaker_src : rc.train.src_speaker;
  if (ck.model.cfg.mode == ModelMode::kAnyToMany && args.speaker_src.empty()) src.clear();
  auto out = convert_utterance(ck.model, raw, src, trg, rc.inference, rc.route);
  const auto base = fs::path(args.out_dir);
  write_fseq((base / "converted.fsq").string(), out.converted);
  write_attention((base / "attention.fsq").string(), (base / "attention.pgm").string(),
                  out.raw.attention, out.raw.attn_rows, out.raw.attn_cols,
                  ck.model.cfg.reduced_period_ms());
  std::cout << "converted " << input << " (" << raw.length << " frames) -> "
            << (base / "converted.fsq").string() << " (" << out.converted.length
            << " frames), route "
            << (out.route_used == OutputRoute::kReconstructor ? "rec" : "dec") << "\n";
  return 0;
}

int cmd_plot_attention(const CommonArgs &args, const std::string &input) {
  auto [rc, cf] = resolve_config(args);
  archive_config(cf, args.out_dir);
  auto ck = open_checkpoint(args, rc);
  auto raw = read_fseq(input);
  const std::string trg = !args.speaker_trg.empty() ? args.speaker_trg : rc.train.trg_speaker;
  std::string src = !args.speaker_src.empty() ? args.speaker_src : rc.train.src_speaker;
  if (ck.model.cfg.mode == ModelMode::kAnyToMany && args.speaker_src.empty()) src.clear();
  auto out = convert_utterance(ck.model, raw, src, trg, rc.inference, rc.route);
  const auto base = fs::path(args.out_dir);
  write_attention((base / "attention.fsq").string(), (base / "attention.pgm").string(),
                  out.raw.attention, out.raw.attn_rows, out.raw.attn_cols,
                  ck.model.cfg.reduced_period_ms());
  std::cout << "attention " << out.raw.attn_rows << "x" << out.raw.attn_cols << " -> "
            << (base / "attention.pgm").string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs &args, const std::string &split,
                 const std::string &converted_dir) {
  auto [rc, cf] = resolve_config(args);
  archive_config(cf, args.out_dir);
  auto manifest = read_manifest(require_manifest(rc));
  const std::string src = !args.speaker_src.empty() ? args.speaker_src : rc.train.src_speaker;
  const std::string trg = !args.speaker_trg.empty() ? args.speaker_trg : rc.train.trg_speaker;
  require(!src.empty() && !trg.empty(), "evaluate needs --speaker-src and --speaker-trg");

  std::optional<LoadedCheckpoint> ck;
  if (converted_dir.empty()) ck.emplace(open_checkpoint(args, rc));

  std::vector<UtteranceEval> rows;
  const auto conv_dir = fs::path(args.out_dir) / "converted";
  fs::create_directories(conv_dir);
  for (const auto &sid : manifest.sentences(split)) {
    const auto *src_entry = manifest.find(sid, src);
    const auto *trg_entry = manifest.find(sid, trg);
    require(src_entry != nullptr && trg_entry != nullptr,
            "sentence " + sid + " missing a rendition for " + src + " or " + trg);
    auto reference = read_fseq(manifest.resolve(trg_entry->path));
    FeatureSequence converted;
    if (!converted_dir.empty()) {
      converted = read_fseq((fs::path(converted_dir) / (sid + ".fsq")).string());
    } else {
      auto raw = read_fseq(manifest.resolve(src_entry->path));
      std::string src_for_model = ck->model.cfg.mode == ModelMode::kAnyToMany ? "" : src;
      auto out = convert_utterance(ck->model, raw, src_for_model, trg, rc.inference, rc.route);
      converted = out.converted;
      write_fseq((conv_dir / (sid + ".fsq")).string(), converted);
    }
    UtteranceEval row;
    row.sentence = sid;
    row.source = src;
    row.target = trg;
    row.mcd = utterance_mcd(converted, reference, rc.model.num_mcc);
    try {
      row.lfc_value = lfc(converted, reference, rc.model.num_mcc);
      row.lfc_valid = true;
    } catch (const DataError &) {
      row.lfc_valid = false;
    }
    row.ldr_value = ldr(converted, reference, rc.model.num_mcc);
    if (!row.ldr_value)
      std::cerr << "warning: " << sid << ": alignment path shorter than one LDR window\n";
    rows.push_back(std::move(row));
  }
  const auto report_path = (fs::path(args.out_dir) / "report.txt").string();
  std::ofstream report(report_path);
  write_evaluation_report(report, rows);
  report.close();
  std::ifstream echo(report_path);
  std::cout << echo.rdbuf();
  return 0;
}

int cmd_gradcheck(const CommonArgs &args) {
  auto [rc, cf] = resolve_config(args);
  rc.model.num_speakers = rc.model.multi_speaker() ? 3 : 2;
  rc.model.dropout_ratio = 0;  // gradient checking needs a deterministic map
  rc.model.validate();
  Model model(rc.model);
  Rng init(derive_seed(rc.train.seed, 1));
  init_parameters(model, init);

  // micro-batch of random utterances through the full training loss
  const int d = rc.model.feature_dim_stacked();
  Rng data_rng(derive_seed(rc.train.seed, 7));
  std::uniform_real_distribution<double> u(-1, 1);
  TrainBatch batch;
  batch.src = make_tensor({2, d, 7});
  batch.trg_in = make_tensor({2, d, 6});
  batch.trg_ref = make_tensor({2, d, 6});
  for (auto *t : {&batch.src, &batch.trg_in, &batch.trg_ref})
    for (auto &v : (*t)->v) v = static_cast<real>(u(data_rng));
  batch.src_lens = {7, 5};
  batch.trg_lens = {6, 4};
  batch.identity_pair = {0, 0};
  if (rc.model.mode == ModelMode::kManyToMany || rc.model.mode == ModelMode::kRealtime)
    batch.src_speakers = {0, 1};
  if (rc.model.multi_speaker()) batch.trg_speakers = {1, 2};
  // zero the padded tails so the batch is consistent with its lengths
  for (int c = 0; c < d; ++c) {
    batch.src->v[(static_cast<std::size_t>(1) * d + c) * 7 + 5] = 0;
    batch.src->v[(static_cast<std::size_t>(1) * d + c) * 7 + 6] = 0;
    batch.trg_in->v[(static_cast<std::size_t>(1) * d + c) * 6 + 4] = 0;
    batch.trg_in->v[(static_cast<std::size_t>(1) * d + c) * 6 + 5] = 0;
    batch.trg_ref->v[(static_cast<std::size_t>(1) * d + c) * 6 + 4] = 0;
    batch.trg_ref->v[(static_cast<std::size_t>(1) * d + c) * 6 + 5] = 0;
  }

  GradCheckOptions opts;
  opts.max_coords_per_tensor = 3;
  opts.seed = derive_seed(rc.train.seed, 8);
  auto report = grad_check(
      [&]() {
        Rng r(1);
        return total_loss(model, batch, rc.train.weights, true, r).total;
      },
      model.parameters(), opts);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "gradcheck: %zu coordinates, max relative error %.3e (%s mode, hidden %d)\n",
                report.coords_checked, report.max_rel_err, mode_name(rc.model.mode),
                rc.model.hidden);
  std::cout << buf;
  if (!(report.max_rel_err < 1e-4)) {
    std::cerr << "gradcheck failed: max relative error >= 1e-4\n";
    return 5;
  }
  return 0;
}

int dispatch(int argc, char **argv) {
  CLI::App app{"fully convolutional sequence-to-sequence voice conversion toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, stats_args, train_args, convert_args, eval_args, grad_args, plot_args;
  std::string convert_input, plot_input, eval_split = "eval", eval_converted_dir;

  auto *gen = app.add_subcommand("gen-corpus", "generate a synthetic parallel corpus");
  add_common(gen, gen_args);

  auto *stats = app.add_subcommand("stats", "compute speaker profiles from the train split");
  add_common(stats, stats_args);
  stats->add_option("--manifest", stats_args.manifest, "corpus manifest");

  auto *tr = app.add_subcommand("train", "train a conversion model");
  add_common(tr, train_args);
  tr->add_option("--manifest", train_args.manifest, "corpus manifest");
  tr->add_option("--iterations", train_args.iterations, "override training iterations");
  tr->add_option("--speaker-src", train_args.speaker_src, "pairwise source speaker");
  tr->add_option("--speaker-trg", train_args.speaker_trg, "pairwise target speaker");

  auto *cv = app.add_subcommand("convert", "convert one utterance");
  add_common(cv, convert_args);
  cv->add_option("--checkpoint", convert_args.checkpoint, "trained checkpoint")->required();
  cv->add_option("--input", convert_input, "input FSEQ file")->required();
  cv->add_option("--speaker-src", convert_args.speaker_src, "source speaker");
  cv->add_option("--speaker-trg", convert_args.speaker_trg, "target speaker");
  cv->add_flag("--forward-attention", convert_args.forward_attention, "window the attention");
  cv->add_option("--route", convert_args.route, "output route")
      ->check(CLI::IsMember({"auto", "rec", "dec"}));
  cv->add_flag("--force", convert_args.force, "load checkpoints with mismatched config hash");

  auto *ev = app.add_subcommand("evaluate", "objective evaluation over a manifest split");
  add_common(ev, eval_args);
  ev->add_option("--manifest", eval_args.manifest, "corpus manifest");
  ev->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint");
  ev->add_option("--speaker-src", eval_args.speaker_src, "source speaker");
  ev->add_option("--speaker-trg", eval_args.speaker_trg, "target speaker");
  ev->add_option("--split", eval_split, "manifest split to evaluate");
  ev->add_option("--converted-dir", eval_converted_dir,
                 "evaluate precomputed <sentence>.fsq files instead of converting");
  ev->add_flag("--forward-attention", eval_args.forward_attention, "window the attention");
  ev->add_flag("--force", eval_args.force, "load checkpoints with mismatched config hash");

  auto *gc = app.add_subcommand("gradcheck", "verify analytic gradients of the training loss");
  add_common(gc, grad_args, /*needs_out=*/false);

  auto *pl = app.add_subcommand("plot-attention", "export an attention matrix (PGM + FSEQ)");
  add_common(pl, plot_args);
  pl->add_option("--checkpoint", plot_args.checkpoint, "trained checkpoint")->required();
  pl->add_option("--input", plot_input, "input FSEQ file")->required();
  pl->add_option("--speaker-src", plot_args.speaker_src, "source speaker");
  pl->add_option("--speaker-trg", plot_args.speaker_trg, "target speaker");
  pl->add_flag("--forward-attention", plot_args.forward_attention, "window the attention");
  pl->add_flag("--force", plot_args.force, "load checkpoints with mismatched config hash");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return cmd_gen_corpus(gen_args);
  if (stats->parsed()) return cmd_stats(stats_args);
  if (tr->parsed()) return cmd_train(train_args);
  if (cv->parsed()) return cmd_convert(convert_args, convert_input);
  if (ev->parsed()) return cmd_evaluate(eval_args, eval_split, eval_converted_dir);
  if (gc->parsed()) return cmd_gradcheck(grad_args);
  if (pl->parsed()) return cmd_plot_attention(plot_args, plot_input);
  return 1;
}

}  // namespace
}  // namespace seqvc

int main(int argc, char **argv) {
  try {
    return seqvc::dispatch(argc, argv);
  } catch (const seqvc::ConfigError &e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 1;
  } catch (const seqvc::IoError &e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 2;
  } catch (const seqvc::ShapeError &e) {
    std::cerr << "error (shape): " << e.what() << "\n";
    return 3;
  } catch (const seqvc::DataError &e) {
    std::cerr << "error (data): " << e.what() << "\n";
    return 3;
  } catch (const seqvc::ModeError &e) {
    std::cerr << "error (mode): " << e.what() << "\n";
    return 4;
  } catch (const seqvc::NumericError &e) {
    std::cerr << "error (numeric): " << e.what() << "\n";
    return 5;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 6;
  }
}
