#ifndef VOXBUILD_RUNCONFIG_HPP_
#define VOXBUILD_RUNCONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxbuild/builder.hpp"
#include "voxbuild/encoder.hpp"
#include "voxbuild/mlm.hpp"
#include "voxbuild/world.hpp"

namespace voxbuild {

// Flat key=value run configuration with section prefixes
// (e.g. adapt.epochs=100). Every key has a default; files and command-line
// overrides only need to name what they change. The fully resolved set is
// what manifests record.
struct RunConfig {
  std::string out_dir = "runs/run";
  std::string corpus_train;  // path; empty -> synthesize
  std::string corpus_test;
  int synth_train_episodes = 400;
  int synth_test_episodes = 100;
  GridDims grid;
  int min_freq = 1;
  std::uint64_t seed = 1;

  int pretrain_sentences = 600;
  EncoderConfig encoder;  // vocab_size resolved from the corpus at run time
  MaskingConfig mask;
  TrainConfig pretrain;
  TrainConfig adapt;
  TrainConfig builder;
  int history_turns = kDefaultHistoryTurns;
  DecodeConfig decode;

  // Stage seeds derive from the master seed unless set explicitly.
  std::uint64_t synth_seed() const;
  std::uint64_t pretrain_stage_seed() const;
  std::uint64_t adapt_stage_seed() const;
  std::uint64_t builder_stage_seed() const;
  std::uint64_t mask_stage_seed() const;

  bool synth_seed_set = false;
  std::uint64_t synth_seed_value = 0;
  bool mask_seed_set = false;

  void validate() const;
};

RunConfig default_run_config();

// Parses `key=value` lines ('#' comments, blank lines ignored). Unknown
// keys are errors.
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Applies one `key=value` override in place.
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

// Canonical serialization: every key, sorted, one per line.
std::string run_config_to_string(const RunConfig& cfg);

}  // namespace voxbuild

#endif  // VOXBUILD_RUNCONFIG_HPP_
