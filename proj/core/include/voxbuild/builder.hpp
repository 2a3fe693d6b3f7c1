#ifndef VOXBUILD_BUILDER_HPP_
#define VOXBUILD_BUILDER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "voxbuild/corpus.hpp"
#include "voxbuild/encoder.hpp"
#include "voxbuild/mlm.hpp"
#include "voxbuild/world.hpp"

namespace voxbuild {

// Flat action enumeration over the grid: cells sorted (y, z, x), each cell
// contributing Place Red..Purple then Remove, with STOP as the last index.
inline constexpr int kActionsPerCell = kNumColors + 1;

std::size_t action_space_size(GridDims grid);  // includes STOP
std::size_t stop_index(GridDims grid);
std::size_t action_to_index(const BlockAction& action, GridDims grid);
BlockAction index_to_action(std::size_t index, GridDims grid);

// Dialogue history fused with the current world state.
struct DialogueContext {
  std::vector<int> tokens;  // CLS-framed history window
  WorldState world;
};

inline constexpr int kDefaultHistoryTurns = 3;

// Most recent `history_turns` turns before `turn_index`, each rendered as
// [speaker-tag token, utterance tokens..., SEP]; oldest tokens truncated
// first to fit max_seq_len.
std::vector<int> build_context_tokens(std::span<const Turn> turns,
                                      std::size_t turn_index,
                                      const Vocab& vocab, int max_seq_len,
                                      int history_turns = kDefaultHistoryTurns);

struct BuilderModel {
  EncoderState encoder;
  GridDims grid;
  Tensor world_w;  // [cells * 7, d_model]: 6 colors + empty, per cell
  Tensor world_b;  // [d_model]
  Tensor head_w;   // [d_model, action_space]
  Tensor head_b;   // [action_space]
};

struct DecodeConfig {
  int max_actions = 10;
  FeasibilityRule rule = FeasibilityRule::Grounded;

  void validate() const;
};

// Per-cell occupancy category (color index, or 6 for empty) in cell order.
std::vector<std::uint8_t> world_categories(const WorldState& world);

// CLS hidden state plus the projected world embedding.
std::vector<double> encode_context(const BuilderModel& model,
                                   const DialogueContext& ctx);

std::vector<double> action_logits(const BuilderModel& model,
                                  std::span<const double> fused);

// Greedy decoding with feasibility masking against the simulated world;
// ties break toward the lower action index.
std::vector<BlockAction> decode_actions(const BuilderModel& model,
                                        const DialogueContext& ctx,
                                        const DecodeConfig& cfg);

// Teacher-forcing example: at (episode, builder turn, gold prefix length),
// predict the next gold action (or STOP past the end).
struct BuilderExample {
  std::string episode_id;
  int turn_index = 0;
  int prefix_len = 0;
  std::vector<int> tokens;
  std::vector<std::uint8_t> cell_cats;
  std::size_t target = 0;
};

std::vector<BuilderExample> make_builder_examples(
    const std::vector<Episode>& episodes, const Vocab& vocab, GridDims grid,
    int max_seq_len, int history_turns = kDefaultHistoryTurns);

// Mean cross-entropy of the model on the examples, accumulated in canonical
// (episode, turn, prefix) order so the result is invariant to input order.
double builder_examples_loss(const BuilderModel& model,
                             std::span<const BuilderExample> examples);

struct BuilderGrads {
  EncoderGrads encoder;
  Tensor world_w, world_b, head_w, head_b;
};

// Mean cross-entropy on the examples (single batch) plus gradients for
// every parameter, encoder included.
double builder_loss_and_grads(const BuilderModel& model,
                              std::span<const BuilderExample> examples,
                              BuilderGrads& grads);

struct ScratchInit {
  std::uint64_t encoder_seed = 0;
};
struct FromCheckpoint {
  EncoderState encoder;
};
using BuilderInit = std::variant<ScratchInit, FromCheckpoint>;

struct BuilderTrainResult {
  BuilderModel model;
  LossHistory history;
};

// Model as it stands before the first optimizer step: encoder from `init`
// (bitwise, for FromCheckpoint), world/head weights seeded by head_seed.
BuilderModel init_builder_model(const BuilderInit& init,
                                const EncoderConfig& encoder_cfg,
                                GridDims grid, std::uint64_t head_seed);

BuilderTrainResult train_builder(const std::vector<Episode>& episodes,
                                 const Vocab& vocab, const BuilderInit& init,
                                 const EncoderConfig& encoder_cfg,
                                 GridDims grid, const TrainConfig& train_cfg,
                                 int history_turns = kDefaultHistoryTurns);

// Builder checkpoints extend the encoder checkpoint with grid dims and the
// world/head tensors.
void save_builder_checkpoint(const BuilderModel& model,
                             const std::string& path);
BuilderModel load_builder_checkpoint(const std::string& path);

}  // namespace voxbuild

#endif  // VOXBUILD_BUILDER_HPP_
