#ifndef VOXBUILD_COMMANDS_HPP_
#define VOXBUILD_COMMANDS_HPP_

#include <iosfwd>
#include <string>

#include "voxbuild/eval.hpp"
#include "voxbuild/runconfig.hpp"

namespace voxbuild {

// Command implementations behind the CLI verbs. Each writes its artifacts
// plus a run manifest under the config's out directory and returns the
// process exit code. The CLI wrapper maps exceptions to exit codes 1-3.

struct SynthArgs {
  std::string out_dir = "runs/synth";
  std::uint64_t seed = 1;
  int episodes = 100;
  GridDims grid;
  std::string file;  // defaults to <out_dir>/corpus.jsonl
};
int cmd_synth(const SynthArgs& args, std::ostream& os);

struct CorpusStats {
  std::size_t episodes = 0;
  std::size_t turns = 0;
  std::size_t utterances = 0;
  std::size_t tokens = 0;
  std::size_t distinct_tokens = 0;
  std::size_t builder_action_turns = 0;
  std::size_t actions = 0;
};
CorpusStats corpus_stats(const std::vector<Episode>& episodes);

struct StatsArgs {
  std::string out_dir = "runs/stats";
  std::string corpus;
};
int cmd_stats(const StatsArgs& args, std::ostream& os);

// Fig-3-shaped stages. Artifacts land in out_dir subdirectories:
// checkpoints/, csv/, report/, corpus/.
int cmd_pretrain(const RunConfig& cfg, std::ostream& os);

int cmd_adapt(const RunConfig& cfg, const std::string& base_checkpoint,
              const std::string& vocab_path, std::ostream& os);

// init_checkpoint empty -> scratch initialization.
int cmd_train(const RunConfig& cfg, const std::string& init_checkpoint,
              const std::string& vocab_path, std::ostream& os);

int cmd_eval(const RunConfig& cfg, const std::string& builder_checkpoint,
             const std::string& vocab_path, std::ostream& os);

struct PipelineOutcome {
  EvalReport scratch_report;
  EvalReport adapted_report;
  CompareResult delta;
};
// pretrain -> adapt -> train(adapted) and train(scratch) -> eval both.
// The two builder runs share corpora, seeds, and configs; only encoder
// initialization differs.
PipelineOutcome run_pipeline(const RunConfig& cfg, std::ostream& os);
int cmd_pipeline(const RunConfig& cfg, std::ostream& os);

int cmd_play(const RunConfig& cfg, const std::string& builder_checkpoint,
             const std::string& vocab_path, std::istream& in,
             std::ostream& os);

}  // namespace voxbuild

#endif  // VOXBUILD_COMMANDS_HPP_
