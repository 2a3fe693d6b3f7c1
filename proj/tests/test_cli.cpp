#include "voxbuild/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "voxbuild/error.hpp"
#include "voxbuild/hash.hpp"
#include "voxbuild/manifest.hpp"
#include "voxbuild/runconfig.hpp"

using namespace voxbuild;

namespace {

namespace fs = std::filesystem;

std::string temp_dir(const std::string& name) {
  const std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small everything: meant to finish in seconds.
RunConfig micro_config(const std::string& out_dir) {
  RunConfig cfg = default_run_config();
  cfg.out_dir = out_dir;
  cfg.seed = 5;
  cfg.synth_train_episodes = 12;
  cfg.synth_test_episodes = 6;
  cfg.pretrain_sentences = 40;
  cfg.encoder.n_layers = 1;
  cfg.encoder.d_model = 16;
  cfg.encoder.n_heads = 2;
  cfg.encoder.d_ff = 32;
  cfg.encoder.max_seq_len = 32;
  cfg.grid = GridDims{5, 3, 5};
  cfg.pretrain.epochs = 2;
  cfg.pretrain.batch_size = 16;
  cfg.adapt.epochs = 2;
  cfg.adapt.batch_size = 16;
  cfg.builder.epochs = 2;
  cfg.builder.batch_size = 16;
  cfg.decode.max_actions = 4;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("run config parsing, overrides, and canonical round trip") {
  RunConfig cfg = parse_run_config_text(
      "# comment\n"
      "adapt.epochs=42\n"
      "mask.mode=static\n"
      "encoder.d_model=32   # trailing comment\n"
      "decode.rule=unrestricted\n"
      "seed=99\n");
  CHECK(cfg.adapt.epochs == 42);
  CHECK(cfg.mask.mode == MaskingMode::Static);
  CHECK(cfg.encoder.d_model == 32);
  CHECK(cfg.decode.rule == FeasibilityRule::Unrestricted);
  CHECK(cfg.seed == 99);

  apply_override(cfg, "builder.epochs", "7");
  CHECK(cfg.builder.epochs == 7);
  CHECK_THROWS_AS(apply_override(cfg, "no.such.key", "1"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config_text("garbage line\n"),
                  std::invalid_argument);

  // Canonical serialization is a fixed point of parse -> serialize.
  const std::string canon = run_config_to_string(cfg);
  CHECK(run_config_to_string(parse_run_config_text(canon)) == canon);
  CHECK(canon.find("adapt.epochs=42\n") != std::string::npos);
}

TEST_CASE("stage seeds derive from the master seed unless pinned") {
  RunConfig a = default_run_config();
  a.seed = 1;
  RunConfig b = default_run_config();
  b.seed = 2;
  CHECK(a.synth_seed() != b.synth_seed());
  CHECK(a.pretrain_stage_seed() != a.adapt_stage_seed());
  apply_override(a, "adapt.seed", "777");
  CHECK(a.adapt_stage_seed() == 777);
}

TEST_CASE("manifest serialization is deterministic and sectioned") {
  Manifest m;
  m.command = "demo";
  m.config_text = "b=2\na=1\n";
  m.inputs["corpus"] = "abc";
  m.artifacts["x.csv"] = "def";
  m.notes["init"] = "scratch";
  const std::string s = manifest_to_string(m);
  CHECK(s == manifest_to_string(m));
  CHECK(s.find("command=demo\n") == 0);
  CHECK(s.find("note.init=scratch\n") != std::string::npos);
  CHECK(s.find("config.b=2\n") != std::string::npos);
  CHECK(s.find("input.corpus=abc\n") != std::string::npos);
  CHECK(s.find("artifact.x.csv=def\n") != std::string::npos);
}

TEST_CASE("cmd_synth writes a corpus and a reproducible manifest") {
  const std::string dir = temp_dir("vx_cli_synth");
  SynthArgs args;
  args.out_dir = dir;
  args.seed = 3;
  args.episodes = 8;
  std::ostringstream os;
  CHECK(cmd_synth(args, os) == 0);
  CHECK(fs::exists(dir + "/corpus.jsonl"));
  CHECK(fs::exists(dir + "/manifest"));
  const std::string manifest1 = read_file(dir + "/manifest");
  const std::string corpus1 = read_file(dir + "/corpus.jsonl");

  // Rerun into a second directory: identical corpus bytes and hash.
  SynthArgs again = args;
  again.out_dir = temp_dir("vx_cli_synth2");
  std::ostringstream os2;
  CHECK(cmd_synth(again, os2) == 0);
  CHECK(read_file(again.out_dir + "/corpus.jsonl") == corpus1);
  const std::string manifest2 = read_file(again.out_dir + "/manifest");
  CHECK(manifest1.substr(manifest1.find("artifact.")) ==
        manifest2.substr(manifest2.find("artifact.")));
}

TEST_CASE("cmd_stats matches a brute-force recount") {
  const std::string dir = temp_dir("vx_cli_stats");
  SynthArgs synth;
  synth.out_dir = dir;
  synth.seed = 4;
  synth.episodes = 10;
  std::ostringstream ignore;
  cmd_synth(synth, ignore);

  StatsArgs args;
  args.out_dir = dir + "/stats";
  args.corpus = dir + "/corpus.jsonl";
  std::ostringstream os;
  CHECK(cmd_stats(args, os) == 0);

  const std::vector<Episode> eps = load_corpus(args.corpus);
  std::size_t turns = 0, tokens = 0;
  for (const Episode& ep : eps) {
    turns += ep.turns.size();
    for (const Turn& t : ep.turns) tokens += split_tokens(t.utterance).size();
  }
  const std::string out = os.str();
  CHECK(out.find("episodes: 10\n") != std::string::npos);
  CHECK(out.find("turns: " + std::to_string(turns) + "\n") !=
        std::string::npos);
  CHECK(out.find("tokens: " + std::to_string(tokens) + "\n") !=
        std::string::npos);

  const CorpusStats s = corpus_stats(eps);
  CHECK(s.episodes == 10);
  CHECK(s.turns == turns);
  CHECK(s.tokens == tokens);
  CHECK(corpus_stats({}).episodes == 0);
  CHECK(corpus_stats({}).tokens == 0);
}

TEST_CASE("micro pipeline produces the full artifact tree") {
  const std::string dir = temp_dir("vx_cli_pipe");
  RunConfig cfg = micro_config(dir);
  std::ostringstream os;
  const PipelineOutcome outcome = run_pipeline(cfg, os);

  for (const char* rel :
       {"manifest", "vocab.txt", "corpus/train.jsonl", "corpus/test.jsonl",
        "checkpoints/base.ckpt", "checkpoints/adapted.ckpt",
        "checkpoints/builder_scratch.ckpt",
        "checkpoints/builder_adapted.ckpt", "csv/pretrain_loss.csv",
        "csv/adapt_loss.csv", "report/summary.csv", "report/compare.csv"}) {
    CAPTURE(rel);
    CHECK(fs::exists(dir + "/" + std::string(rel)));
  }

  // Summary: header plus exactly 2 rows x 3 metric columns, recomputable
  // from the returned reports.
  const std::string summary = read_file(dir + "/report/summary.csv");
  std::istringstream lines(summary);
  std::string header, row_scratch, row_adapted, extra;
  CHECK(std::getline(lines, header));
  CHECK(std::getline(lines, row_scratch));
  CHECK(std::getline(lines, row_adapted));
  CHECK(!std::getline(lines, extra));
  CHECK(header == "model,recall,precision,f1");
  CHECK(std::count(row_scratch.begin(), row_scratch.end(), ',') == 3);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "scratch-init,%.1f,%.1f,%.1f",
                100.0 * outcome.scratch_report.micro.recall,
                100.0 * outcome.scratch_report.micro.precision,
                100.0 * outcome.scratch_report.micro.f1);
  CHECK(row_scratch == buf);
  std::snprintf(buf, sizeof(buf), "adapted-init,%.1f,%.1f,%.1f",
                100.0 * outcome.adapted_report.micro.recall,
                100.0 * outcome.adapted_report.micro.precision,
                100.0 * outcome.adapted_report.micro.f1);
  CHECK(row_adapted == buf);

  // Per-row sums reproduce the micro counts.
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const EvalRow& row : outcome.adapted_report.rows) {
    tp += row.tp;
    fp += row.fp;
    fn += row.fn;
  }
  CHECK(tp == outcome.adapted_report.tp);
  CHECK(fp == outcome.adapted_report.fp);
  CHECK(fn == outcome.adapted_report.fn);

  // The manifest records every seed (resolved) and every artifact hash.
  const std::string manifest = read_file(dir + "/manifest");
  CHECK(manifest.find("config.seed=5\n") != std::string::npos);
  CHECK(manifest.find("config.adapt.seed=") != std::string::npos);
  CHECK(manifest.find("artifact.checkpoints/base.ckpt=") !=
        std::string::npos);
}

TEST_CASE("pipeline reruns are bitwise reproducible") {
  const std::string dir1 = temp_dir("vx_cli_rep1");
  const std::string dir2 = temp_dir("vx_cli_rep2");
  RunConfig cfg1 = micro_config(dir1);
  RunConfig cfg2 = micro_config(dir2);
  std::ostringstream os;
  run_pipeline(cfg1, os);
  run_pipeline(cfg2, os);
  for (const char* rel :
       {"vocab.txt", "corpus/train.jsonl", "checkpoints/base.ckpt",
        "checkpoints/adapted.ckpt", "checkpoints/builder_scratch.ckpt",
        "checkpoints/builder_adapted.ckpt", "csv/pretrain_loss.csv",
        "csv/adapt_loss.csv", "report/eval_scratch.csv",
        "report/eval_adapted.csv", "report/summary.csv"}) {
    CAPTURE(rel);
    CHECK(hash_file(dir1 + "/" + std::string(rel)) ==
          hash_file(dir2 + "/" + std::string(rel)));
  }
}

TEST_CASE("standalone stage commands chain into an evaluation") {
  const std::string dir = temp_dir("vx_cli_stages");
  RunConfig cfg = micro_config(dir + "/pre");
  std::ostringstream os;
  CHECK(cmd_pretrain(cfg, os) == 0);
  CHECK(fs::exists(dir + "/pre/vocab.txt"));
  CHECK(fs::exists(dir + "/pre/checkpoints/base.ckpt"));
  {
    const std::string csv = read_file(dir + "/pre/csv/pretrain_loss.csv");
    // header + one line per epoch
    CHECK(std::count(csv.begin(), csv.end(), '\n') ==
          static_cast<long>(cfg.pretrain.epochs) + 1);
  }

  RunConfig adapt_cfg = micro_config(dir + "/adapt");
  CHECK(cmd_adapt(adapt_cfg, dir + "/pre/checkpoints/base.ckpt",
                  dir + "/pre/vocab.txt", os) == 0);
  CHECK(fs::exists(dir + "/adapt/checkpoints/adapted.ckpt"));

  RunConfig train_cfg = micro_config(dir + "/train");
  CHECK(cmd_train(train_cfg, dir + "/adapt/checkpoints/adapted.ckpt",
                  dir + "/pre/vocab.txt", os) == 0);
  CHECK(fs::exists(dir + "/train/checkpoints/builder.ckpt"));
  CHECK(read_file(dir + "/train/manifest").find("note.builder_init=checkpoint") !=
        std::string::npos);

  RunConfig scratch_cfg = micro_config(dir + "/scratch");
  CHECK(cmd_train(scratch_cfg, "", dir + "/pre/vocab.txt", os) == 0);
  CHECK(read_file(dir + "/scratch/manifest").find("note.builder_init=scratch") !=
        std::string::npos);

  RunConfig eval_cfg = micro_config(dir + "/eval");
  CHECK(cmd_eval(eval_cfg, dir + "/train/checkpoints/builder.ckpt",
                 dir + "/pre/vocab.txt", os) == 0);
  CHECK(fs::exists(dir + "/eval/report/eval.csv"));

  // Determinism across a rerun of the same stage.
  RunConfig again = micro_config(dir + "/adapt2");
  CHECK(cmd_adapt(again, dir + "/pre/checkpoints/base.ckpt",
                  dir + "/pre/vocab.txt", os) == 0);
  CHECK(hash_file(dir + "/adapt/checkpoints/adapted.ckpt") ==
        hash_file(dir + "/adapt2/checkpoints/adapted.ckpt"));
}

TEST_CASE("cmd_play drives a session with undo and quit") {
  const std::string dir = temp_dir("vx_cli_play");
  fs::create_directories(dir);
  const GridDims grid{5, 3, 5};
  const std::vector<Episode> seed_corpus = synth_corpus(1, 10, grid);
  const Vocab vocab = build_vocab(seed_corpus, 1);
  EncoderConfig ecfg;
  ecfg.n_layers = 1;
  ecfg.d_model = 16;
  ecfg.n_heads = 2;
  ecfg.d_ff = 32;
  ecfg.max_seq_len = 32;
  ecfg.vocab_size = vocab.size();

  // A model that always wants one specific placement, then stops.
  BuilderModel model = init_builder_model(ScratchInit{2}, ecfg, grid, 3);
  model.head_w.fill(0.0);
  model.head_b.fill(0.0);
  const BlockAction favorite = BlockAction::place(1, 0, 1, Color::Red);
  model.head_b.data[action_to_index(favorite, grid)] = 10.0;
  model.head_b.data[stop_index(grid)] = 5.0;

  const std::string ckpt = dir + "/toy_builder.ckpt";
  const std::string vocab_path = dir + "/vocab.txt";
  save_builder_checkpoint(model, ckpt);
  save_vocab(vocab, vocab_path);

  RunConfig cfg = micro_config(dir + "/session");
  cfg.decode.max_actions = 3;
  std::istringstream in(
      "put a red block at 1 1\n"
      "put a red block at 1 1\n"
      "undo\n"
      "undo\n"
      "quit\n");
  std::ostringstream os;
  CHECK(cmd_play(cfg, ckpt, vocab_path, in, os) == 0);
  const std::string out = os.str();
  // Renders: one block after each instruction, one after the first undo,
  // none after the second.
  CHECK(std::count(out.begin(), out.end(), 'R') == 3);
  CHECK(out.find("place red (1,0,1)") != std::string::npos);

  const std::string log = read_file(dir + "/session/play.log");
  CHECK(log.find("instruction: put a red block at 1 1\n") !=
        std::string::npos);
  // Final world after two undos is empty again.
  const std::size_t last_world = log.rfind("world:");
  CHECK(log.substr(last_world) == "world:\n");
  CHECK(fs::exists(dir + "/session/manifest"));
}

TEST_SUITE_END();
