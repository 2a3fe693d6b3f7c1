#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxbuild/commands.hpp"
#include "voxbuild/error.hpp"

namespace {

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_file,
                  "run configuration file (key=value lines)");
  cmd->add_option("--set", flags.overrides,
                  "config override, key=value (repeatable)");
  cmd->add_option("--out", flags.out_dir, "run directory");
  cmd->add_option("--seed", flags.seed, "master seed")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
}

voxbuild::RunConfig resolve_config(const ConfigFlags& flags) {
  voxbuild::RunConfig cfg = flags.config_file.empty()
                                ? voxbuild::default_run_config()
                                : voxbuild::load_run_config(flags.config_file);
  for (const std::string& kv : flags.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got: " + kv);
    }
    voxbuild::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed_set) {
    voxbuild::apply_override(cfg, "seed", std::to_string(flags.seed));
  }
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxbuild: domain-adaptive MLM pretraining for a voxel-world "
               "builder agent"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  voxbuild::SynthArgs synth_args;
  std::string synth_grid = "11x9x11";
  synth->add_option("--out", synth_args.out_dir, "run directory");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--episodes", synth_args.episodes, "episode count");
  synth->add_option("--grid", synth_grid, "grid dims, e.g. 11x9x11");
  synth->add_option("--file", synth_args.file,
                    "corpus output path (default <out>/corpus.jsonl)");

  // stats
  auto* stats = app.add_subcommand("stats", "print corpus statistics");
  voxbuild::StatsArgs stats_args;
  stats->add_option("--out", stats_args.out_dir, "run directory");
  stats->add_option("--corpus", stats_args.corpus, "corpus file")->required();

  // pretrain
  auto* pretrain = app.add_subcommand(
      "pretrain", "generic MLM pretraining (creates the base checkpoint)");
  ConfigFlags pretrain_flags;
  add_config_flags(pretrain, pretrain_flags);

  // adapt
  auto* adapt = app.add_subcommand(
      "adapt", "domain-adapt a base checkpoint on task utterances");
  ConfigFlags adapt_flags;
  std::string adapt_base, adapt_vocab;
  add_config_flags(adapt, adapt_flags);
  adapt->add_option("--base", adapt_base, "base encoder checkpoint")
      ->required();
  adapt->add_option("--vocab", adapt_vocab, "vocab file")->required();

  // train
  auto* train = app.add_subcommand(
      "train", "train the builder (scratch or from a checkpoint)");
  ConfigFlags train_flags;
  std::string train_init, train_vocab;
  add_config_flags(train, train_flags);
  train->add_option("--init", train_init,
                    "encoder checkpoint to initialize from (omit for scratch)");
  train->add_option("--vocab", train_vocab, "vocab file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a builder checkpoint");
  ConfigFlags eval_flags;
  std::string eval_model, eval_vocab;
  add_config_flags(eval, eval_flags);
  eval->add_option("--model", eval_model, "builder checkpoint")->required();
  eval->add_option("--vocab", eval_vocab, "vocab file")->required();

  // pipeline
  auto* pipeline = app.add_subcommand(
      "pipeline", "pretrain -> adapt -> train both inits -> eval -> compare");
  ConfigFlags pipeline_flags;
  add_config_flags(pipeline, pipeline_flags);

  // play
  auto* play = app.add_subcommand("play", "interactive builder session");
  ConfigFlags play_flags;
  std::string play_model, play_vocab;
  add_config_flags(play, play_flags);
  play->add_option("--model", play_model, "builder checkpoint")->required();
  play->add_option("--vocab", play_vocab, "vocab file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      if (std::sscanf(synth_grid.c_str(), "%dx%dx%d", &synth_args.grid.sx,
                      &synth_args.grid.sy, &synth_args.grid.sz) != 3 ||
          !synth_args.grid.valid()) {
        throw std::invalid_argument("synth: bad --grid value: " + synth_grid);
      }
      return voxbuild::cmd_synth(synth_args, std::cout);
    }
    if (stats->parsed()) return voxbuild::cmd_stats(stats_args, std::cout);
    if (pretrain->parsed()) {
      return voxbuild::cmd_pretrain(resolve_config(pretrain_flags), std::cout);
    }
    if (adapt->parsed()) {
      return voxbuild::cmd_adapt(resolve_config(adapt_flags), adapt_base,
                                 adapt_vocab, std::cout);
    }
    if (train->parsed()) {
      return voxbuild::cmd_train(resolve_config(train_flags), train_init,
                                 train_vocab, std::cout);
    }
    if (eval->parsed()) {
      return voxbuild::cmd_eval(resolve_config(eval_flags), eval_model,
                                eval_vocab, std::cout);
    }
    if (pipeline->parsed()) {
      return voxbuild::cmd_pipeline(resolve_config(pipeline_flags), std::cout);
    }
    if (play->parsed()) {
      return voxbuild::cmd_play(resolve_config(play_flags), play_model,
                                play_vocab, std::cin, std::cout);
    }
  } catch (const voxbuild::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const voxbuild::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
