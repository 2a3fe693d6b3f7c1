#include "voxbuild/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "voxbuild/checkpoint.hpp"
#include "voxbuild/error.hpp"
#include "voxbuild/hash.hpp"
#include "voxbuild/manifest.hpp"
#include "voxbuild/rng.hpp"

namespace voxbuild {

namespace fs = std::filesystem;

namespace {

void ensure_run_dirs(const std::string& out_dir) {
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/checkpoints");
  fs::create_directories(out_dir + "/csv");
  fs::create_directories(out_dir + "/report");
}

void add_artifact(Manifest& m, const std::string& out_dir,
                  const std::string& rel) {
  m.artifacts[rel] = hash_file(out_dir + "/" + rel);
}

std::vector<Episode> load_or_synth_train(const RunConfig& cfg,
                                         Manifest& manifest) {
  if (!cfg.corpus_train.empty()) {
    manifest.inputs["corpus.train"] = hash_file(cfg.corpus_train);
    return load_corpus(cfg.corpus_train);
  }
  manifest.notes["corpus.train"] =
      "synth(seed=" + std::to_string(cfg.synth_seed()) +
      ",episodes=" + std::to_string(cfg.synth_train_episodes) + ")";
  return synth_corpus(cfg.synth_seed(), cfg.synth_train_episodes, cfg.grid);
}

std::vector<Episode> load_or_synth_test(const RunConfig& cfg,
                                        Manifest& manifest) {
  if (!cfg.corpus_test.empty()) {
    manifest.inputs["corpus.test"] = hash_file(cfg.corpus_test);
    return load_corpus(cfg.corpus_test);
  }
  const std::uint64_t seed = mix_seed(cfg.synth_seed(), 0x74657374ull);
  manifest.notes["corpus.test"] =
      "synth(seed=" + std::to_string(seed) +
      ",episodes=" + std::to_string(cfg.synth_test_episodes) + ")";
  return synth_corpus(seed, cfg.synth_test_episodes, cfg.grid);
}

std::string metrics_line(const char* name, const Metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s: recall=%.1f precision=%.1f f1=%.1f",
                name, 100.0 * m.recall, 100.0 * m.precision, 100.0 * m.f1);
  return buf;
}

}  // namespace

int cmd_synth(const SynthArgs& args, std::ostream& os) {
  fs::create_directories(args.out_dir);
  const std::string file =
      args.file.empty() ? args.out_dir + "/corpus.jsonl" : args.file;
  if (!file.empty()) {
    fs::path parent = fs::path(file).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
  }
  const std::vector<Episode> episodes =
      synth_corpus(args.seed, args.episodes, args.grid);
  save_corpus(episodes, file);

  Manifest m;
  m.command = "synth";
  m.config_text = "episodes=" + std::to_string(args.episodes) + "\nfile=" +
                  file + "\ngrid=" + std::to_string(args.grid.sx) + "x" +
                  std::to_string(args.grid.sy) + "x" +
                  std::to_string(args.grid.sz) + "\nseed=" +
                  std::to_string(args.seed) + "\n";
  m.artifacts["corpus"] = hash_file(file);
  save_manifest(m, args.out_dir + "/manifest");
  os << "wrote " << episodes.size() << " episodes to " << file << "\n";
  return 0;
}

CorpusStats corpus_stats(const std::vector<Episode>& episodes) {
  CorpusStats s;
  std::set<std::string> distinct;
  s.episodes = episodes.size();
  for (const Episode& ep : episodes) {
    s.turns += ep.turns.size();
    for (const Turn& t : ep.turns) {
      if (!t.utterance.empty()) {
        ++s.utterances;
        for (const std::string& tok : split_tokens(t.utterance)) {
          ++s.tokens;
          distinct.insert(tok);
        }
      }
      if (t.speaker == Speaker::Builder && !t.actions.empty()) {
        ++s.builder_action_turns;
      }
      s.actions += t.actions.size();
    }
  }
  s.distinct_tokens = distinct.size();
  return s;
}

int cmd_stats(const StatsArgs& args, std::ostream& os) {
  if (args.corpus.empty()) {
    throw std::invalid_argument("stats: --corpus is required");
  }
  const std::vector<Episode> episodes = load_corpus(args.corpus);
  const CorpusStats s = corpus_stats(episodes);
  os << "episodes: " << s.episodes << "\n"
     << "turns: " << s.turns << "\n"
     << "utterances: " << s.utterances << "\n"
     << "tokens: " << s.tokens << "\n"
     << "distinct_tokens: " << s.distinct_tokens << "\n"
     << "vocab_size(min_freq=1): " << s.distinct_tokens + kNumSpecials << "\n"
     << "builder_action_turns: " << s.builder_action_turns << "\n"
     << "actions: " << s.actions << "\n";

  fs::create_directories(args.out_dir);
  Manifest m;
  m.command = "stats";
  m.config_text = "corpus=" + args.corpus + "\n";
  m.inputs["corpus"] = hash_file(args.corpus);
  m.notes["episodes"] = std::to_string(s.episodes);
  m.notes["turns"] = std::to_string(s.turns);
  m.notes["tokens"] = std::to_string(s.tokens);
  m.notes["distinct_tokens"] = std::to_string(s.distinct_tokens);
  save_manifest(m, args.out_dir + "/manifest");
  return 0;
}

namespace {

// Shared by pretrain and pipeline: vocabulary over generic text plus the
// task training utterances, so the adapted encoder needs no resizing.
Vocab pipeline_vocab(const RunConfig& cfg,
                     const std::vector<Episode>& train_episodes,
                     const std::vector<std::string>& generic) {
  std::vector<std::string> texts = generic;
  for (const std::string& u : collect_utterances(train_episodes)) {
    texts.push_back(u);
  }
  // Speaker tags appear in builder contexts; make sure they tokenize to
  // themselves rather than UNK even on corpora that never mention them.
  texts.push_back("architect builder");
  return build_vocab(texts, cfg.min_freq);
}

}  // namespace

int cmd_pretrain(const RunConfig& cfg, std::ostream& os) {
  cfg.validate();
  ensure_run_dirs(cfg.out_dir);
  Manifest m;
  m.command = "pretrain";
  m.config_text = run_config_to_string(cfg);

  const std::vector<Episode> train = load_or_synth_train(cfg, m);
  const std::vector<std::string> generic =
      synth_generic_text(cfg.pretrain_stage_seed(), cfg.pretrain_sentences);
  const Vocab vocab = pipeline_vocab(cfg, train, generic);
  save_vocab(vocab, cfg.out_dir + "/vocab.txt");

  EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.vocab_size = vocab.size();
  EncoderState base = init_encoder(enc_cfg, cfg.pretrain_stage_seed());

  TrainConfig tc = cfg.pretrain;
  tc.seed = cfg.pretrain_stage_seed();
  MaskingConfig mc = cfg.mask;
  mc.seed = cfg.mask_stage_seed();
  MlmTrainResult result = pretrain_generic(generic, vocab, base, mc, tc);

  save_checkpoint(result.state, cfg.out_dir + "/checkpoints/base.ckpt");
  save_history_csv(result.history, cfg.out_dir + "/csv/pretrain_loss.csv");
  add_artifact(m, cfg.out_dir, "vocab.txt");
  add_artifact(m, cfg.out_dir, "checkpoints/base.ckpt");
  add_artifact(m, cfg.out_dir, "csv/pretrain_loss.csv");
  save_manifest(m, cfg.out_dir + "/manifest");
  os << "pretrain: " << result.history.epochs.size() << " epochs, final train loss "
     << result.history.epochs.back().train_loss << "\n";
  return 0;
}

int cmd_adapt(const RunConfig& cfg, const std::string& base_checkpoint,
              const std::string& vocab_path, std::ostream& os) {
  cfg.validate();
  ensure_run_dirs(cfg.out_dir);
  Manifest m;
  m.command = "adapt";
  m.config_text = run_config_to_string(cfg);
  m.inputs["base_checkpoint"] = hash_file(base_checkpoint);
  m.inputs["vocab"] = hash_file(vocab_path);

  const Vocab vocab = load_vocab(vocab_path);
  EncoderState base = load_checkpoint(base_checkpoint);
  if (base.config.vocab_size != vocab.size()) {
    throw DataError("adapt: checkpoint vocab_size does not match vocab file");
  }
  const std::vector<Episode> train = load_or_synth_train(cfg, m);

  TrainConfig tc = cfg.adapt;
  tc.seed = cfg.adapt_stage_seed();
  MaskingConfig mc = cfg.mask;
  mc.seed = cfg.mask_stage_seed();
  MlmTrainResult result = train_mlm(train, vocab, base, mc, tc);

  save_checkpoint(result.state, cfg.out_dir + "/checkpoints/adapted.ckpt");
  save_history_csv(result.history, cfg.out_dir + "/csv/adapt_loss.csv");
  add_artifact(m, cfg.out_dir, "checkpoints/adapted.ckpt");
  add_artifact(m, cfg.out_dir, "csv/adapt_loss.csv");
  save_manifest(m, cfg.out_dir + "/manifest");
  os << "adapt: " << result.history.epochs.size() << " epochs, final train loss "
     << result.history.epochs.back().train_loss << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& init_checkpoint,
              const std::string& vocab_path, std::ostream& os) {
  cfg.validate();
  ensure_run_dirs(cfg.out_dir);
  Manifest m;
  m.command = "train";
  m.config_text = run_config_to_string(cfg);
  m.inputs["vocab"] = hash_file(vocab_path);

  const Vocab vocab = load_vocab(vocab_path);
  const std::vector<Episode> train = load_or_synth_train(cfg, m);

  EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.vocab_size = vocab.size();
  TrainConfig tc = cfg.builder;
  tc.seed = cfg.builder_stage_seed();

  BuilderInit init = ScratchInit{mix_seed(tc.seed, 0x73637261746368ull)};
  if (!init_checkpoint.empty()) {
    m.inputs["init_checkpoint"] = hash_file(init_checkpoint);
    m.notes["builder_init"] = "checkpoint";
    EncoderState enc = load_checkpoint(init_checkpoint);
    if (enc.config.vocab_size != vocab.size()) {
      throw DataError("train: checkpoint vocab_size does not match vocab file");
    }
    enc_cfg = enc.config;
    init = FromCheckpoint{std::move(enc)};
  } else {
    m.notes["builder_init"] = "scratch";
  }

  BuilderTrainResult result = train_builder(train, vocab, init, enc_cfg,
                                            cfg.grid, tc, cfg.history_turns);
  save_builder_checkpoint(result.model,
                          cfg.out_dir + "/checkpoints/builder.ckpt");
  save_history_csv(result.history, cfg.out_dir + "/csv/builder_loss.csv");
  add_artifact(m, cfg.out_dir, "checkpoints/builder.ckpt");
  add_artifact(m, cfg.out_dir, "csv/builder_loss.csv");
  save_manifest(m, cfg.out_dir + "/manifest");
  os << "train(" << m.notes["builder_init"] << "): "
     << result.history.epochs.size() << " epochs, final train loss "
     << result.history.epochs.back().train_loss << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& builder_checkpoint,
             const std::string& vocab_path, std::ostream& os) {
  cfg.validate();
  ensure_run_dirs(cfg.out_dir);
  Manifest m;
  m.command = "eval";
  m.config_text = run_config_to_string(cfg);
  m.inputs["builder_checkpoint"] = hash_file(builder_checkpoint);
  m.inputs["vocab"] = hash_file(vocab_path);

  const Vocab vocab = load_vocab(vocab_path);
  const BuilderModel model = load_builder_checkpoint(builder_checkpoint);
  const std::vector<Episode> test = load_or_synth_test(cfg, m);

  const EvalReport report =
      evaluate_model(model, test, vocab, cfg.decode, cfg.history_turns);
  save_report_csv(report, cfg.out_dir + "/report/eval.csv");
  add_artifact(m, cfg.out_dir, "report/eval.csv");
  save_manifest(m, cfg.out_dir + "/manifest");
  os << metrics_line("eval", report.micro) << "\n";
  return 0;
}

PipelineOutcome run_pipeline(const RunConfig& cfg, std::ostream& os) {
  cfg.validate();
  ensure_run_dirs(cfg.out_dir);
  fs::create_directories(cfg.out_dir + "/corpus");
  Manifest m;
  m.command = "pipeline";
  m.config_text = run_config_to_string(cfg);

  // Step 0: corpora and vocabulary.
  const std::vector<Episode> train = load_or_synth_train(cfg, m);
  const std::vector<Episode> test = load_or_synth_test(cfg, m);
  save_corpus(train, cfg.out_dir + "/corpus/train.jsonl");
  save_corpus(test, cfg.out_dir + "/corpus/test.jsonl");
  const std::vector<std::string> generic =
      synth_generic_text(cfg.pretrain_stage_seed(), cfg.pretrain_sentences);
  const Vocab vocab = pipeline_vocab(cfg, train, generic);
  save_vocab(vocab, cfg.out_dir + "/vocab.txt");

  EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.vocab_size = vocab.size();
  MaskingConfig mc = cfg.mask;
  mc.seed = cfg.mask_stage_seed();

  // Step 1: generic pretraining stands in for choosing a pretrained model.
  EncoderState base = init_encoder(enc_cfg, cfg.pretrain_stage_seed());
  TrainConfig pre_tc = cfg.pretrain;
  pre_tc.seed = cfg.pretrain_stage_seed();
  MlmTrainResult pretrained = pretrain_generic(generic, vocab, base, mc, pre_tc);
  save_checkpoint(pretrained.state, cfg.out_dir + "/checkpoints/base.ckpt");
  save_history_csv(pretrained.history, cfg.out_dir + "/csv/pretrain_loss.csv");
  os << "pipeline: pretrain done (final train loss "
     << pretrained.history.epochs.back().train_loss << ")\n";

  // Step 2/3: adapt the language model to the task text.
  TrainConfig adapt_tc = cfg.adapt;
  adapt_tc.seed = cfg.adapt_stage_seed();
  MlmTrainResult adapted = train_mlm(train, vocab, pretrained.state, mc, adapt_tc);
  save_checkpoint(adapted.state, cfg.out_dir + "/checkpoints/adapted.ckpt");
  save_history_csv(adapted.history, cfg.out_dir + "/csv/adapt_loss.csv");
  os << "pipeline: adapt done (final train loss "
     << adapted.history.epochs.back().train_loss << ")\n";

  // Step 4: train the builder twice; only the encoder initialization
  // differs between the runs.
  TrainConfig btc = cfg.builder;
  btc.seed = cfg.builder_stage_seed();
  BuilderTrainResult scratch_run = train_builder(
      train, vocab, ScratchInit{mix_seed(btc.seed, 0x73637261746368ull)},
      enc_cfg, cfg.grid, btc, cfg.history_turns);
  save_builder_checkpoint(scratch_run.model,
                          cfg.out_dir + "/checkpoints/builder_scratch.ckpt");
  save_history_csv(scratch_run.history,
                   cfg.out_dir + "/csv/builder_scratch_loss.csv");
  os << "pipeline: builder(scratch) done (final train loss "
     << scratch_run.history.epochs.back().train_loss << ")\n";

  BuilderTrainResult adapted_run =
      train_builder(train, vocab, FromCheckpoint{adapted.state}, enc_cfg,
                    cfg.grid, btc, cfg.history_turns);
  save_builder_checkpoint(adapted_run.model,
                          cfg.out_dir + "/checkpoints/builder_adapted.ckpt");
  save_history_csv(adapted_run.history,
                   cfg.out_dir + "/csv/builder_adapted_loss.csv");
  os << "pipeline: builder(adapted) done (final train loss "
     << adapted_run.history.epochs.back().train_loss << ")\n";

  // Evaluation and comparison.
  PipelineOutcome outcome;
  outcome.scratch_report = evaluate_model(scratch_run.model, test, vocab,
                                          cfg.decode, cfg.history_turns);
  outcome.adapted_report = evaluate_model(adapted_run.model, test, vocab,
                                          cfg.decode, cfg.history_turns);
  outcome.delta = compare_runs(outcome.scratch_report, outcome.adapted_report);
  save_report_csv(outcome.scratch_report,
                  cfg.out_dir + "/report/eval_scratch.csv");
  save_report_csv(outcome.adapted_report,
                  cfg.out_dir + "/report/eval_adapted.csv");

  {
    std::ofstream sum(cfg.out_dir + "/report/summary.csv", std::ios::binary);
    if (!sum) throw DataError("cannot write pipeline summary");
    char buf[160];
    sum << "model,recall,precision,f1\n";
    std::snprintf(buf, sizeof(buf), "scratch-init,%.1f,%.1f,%.1f\n",
                  100.0 * outcome.scratch_report.micro.recall,
                  100.0 * outcome.scratch_report.micro.precision,
                  100.0 * outcome.scratch_report.micro.f1);
    sum << buf;
    std::snprintf(buf, sizeof(buf), "adapted-init,%.1f,%.1f,%.1f\n",
                  100.0 * outcome.adapted_report.micro.recall,
                  100.0 * outcome.adapted_report.micro.precision,
                  100.0 * outcome.adapted_report.micro.f1);
    sum << buf;
  }
  {
    std::ofstream cmp(cfg.out_dir + "/report/compare.csv", std::ios::binary);
    if (!cmp) throw DataError("cannot write pipeline comparison");
    char buf[160];
    cmp << "metric,delta\n";
    std::snprintf(buf, sizeof(buf),
                  "recall,%.1f\nprecision,%.1f\nf1,%.1f\n",
                  outcome.delta.d_recall, outcome.delta.d_precision,
                  outcome.delta.d_f1);
    cmp << buf;
  }

  m.notes["builder_init.scratch"] = "scratch";
  m.notes["builder_init.adapted"] = "checkpoints/adapted.ckpt";
  for (const char* rel :
       {"corpus/train.jsonl", "corpus/test.jsonl", "vocab.txt",
        "checkpoints/base.ckpt", "checkpoints/adapted.ckpt",
        "checkpoints/builder_scratch.ckpt", "checkpoints/builder_adapted.ckpt",
        "csv/pretrain_loss.csv", "csv/adapt_loss.csv",
        "csv/builder_scratch_loss.csv", "csv/builder_adapted_loss.csv",
        "report/eval_scratch.csv", "report/eval_adapted.csv",
        "report/summary.csv", "report/compare.csv"}) {
    add_artifact(m, cfg.out_dir, rel);
  }
  save_manifest(m, cfg.out_dir + "/manifest");

  os << metrics_line("scratch-init", outcome.scratch_report.micro) << "\n"
     << metrics_line("adapted-init", outcome.adapted_report.micro) << "\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "delta (adapted - scratch): recall=%+.1f precision=%+.1f "
                "f1=%+.1f\n",
                outcome.delta.d_recall, outcome.delta.d_precision,
                outcome.delta.d_f1);
  os << buf;
  return outcome;
}

int cmd_pipeline(const RunConfig& cfg, std::ostream& os) {
  run_pipeline(cfg, os);
  return 0;
}

int cmd_play(const RunConfig& cfg, const std::string& builder_checkpoint,
             const std::string& vocab_path, std::istream& in,
             std::ostream& os) {
  fs::create_directories(cfg.out_dir);
  const Vocab vocab = load_vocab(vocab_path);
  const BuilderModel model = load_builder_checkpoint(builder_checkpoint);

  const std::string log_path = cfg.out_dir + "/play.log";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw DataError("cannot write session log: " + log_path);

  auto log_world = [&](const WorldState& w) {
    log << "world:";
    for (const auto& [x, y, z, c] : sorted_blocks(w)) {
      log << " [" << x << "," << y << "," << z << "," << color_name(c) << "]";
    }
    log << "\n";
  };

  std::vector<Turn> session;
  std::vector<WorldState> undo_stack;
  WorldState world(model.grid);

  os << "interactive builder session; type an instruction, or undo / reset / "
        "quit\n";
  std::string line;
  while (true) {
    os << "architect> " << std::flush;
    if (!std::getline(in, line)) break;
    if (line == "quit") break;
    if (line.empty()) continue;
    if (line == "undo") {
      if (undo_stack.empty()) {
        os << "nothing to undo\n";
        continue;
      }
      world = undo_stack.back();
      undo_stack.pop_back();
      session.resize(session.size() >= 2 ? session.size() - 2 : 0);
      log << "undo\n";
      log_world(world);
      os << render_text(world);
      continue;
    }
    if (line == "reset") {
      undo_stack.clear();
      session.clear();
      world = WorldState(model.grid);
      log << "reset\n";
      log_world(world);
      os << render_text(world);
      continue;
    }

    undo_stack.push_back(world);
    Turn instr;
    instr.speaker = Speaker::Architect;
    instr.utterance = line;
    session.push_back(instr);

    DialogueContext ctx;
    ctx.tokens = build_context_tokens(session, session.size(), vocab,
                                      model.encoder.config.max_seq_len,
                                      cfg.history_turns);
    ctx.world = world;
    const std::vector<BlockAction> actions =
        decode_actions(model, ctx, cfg.decode);
    log << "instruction: " << line << "\n";
    for (const BlockAction& a : actions) {
      world = apply(world, a, cfg.decode.rule);
      os << "  " << action_to_string(a) << "\n";
      log << "action: " << action_to_string(a) << "\n";
    }
    if (actions.empty()) os << "  (no actions)\n";
    log_world(world);
    os << render_text(world);

    Turn done;
    done.speaker = Speaker::Builder;
    done.actions = actions;
    session.push_back(done);
  }
  log << "quit\n";
  log_world(world);
  log.close();

  Manifest m;
  m.command = "play";
  m.config_text = run_config_to_string(cfg);
  m.inputs["builder_checkpoint"] = hash_file(builder_checkpoint);
  m.inputs["vocab"] = hash_file(vocab_path);
  m.artifacts["play.log"] = hash_file(log_path);
  save_manifest(m, cfg.out_dir + "/manifest");
  return 0;
}

}  // namespace voxbuild
