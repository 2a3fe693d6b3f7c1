#ifndef VOXBUILD_MLM_HPP_
#define VOXBUILD_MLM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "voxbuild/corpus.hpp"
#include "voxbuild/encoder.hpp"
#include "voxbuild/optim.hpp"

namespace voxbuild {

enum class MaskingMode : std::uint8_t { Static, Dynamic };

struct MaskingConfig {
  double rate = 0.15;
  MaskingMode mode = MaskingMode::Dynamic;
  double mask_frac = 0.8;
  double random_frac = 0.1;
  double keep_frac = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr int kIgnoreLabel = -1;

// One corrupted sequence: input ids, original ids at masked positions
// (ignore marker elsewhere), and the masked position set.
struct MaskedRow {
  std::vector<int> input_ids;
  std::vector<int> labels;
  std::vector<std::size_t> masked_positions;
};

// Selects round-half-up(rate * k) of the k non-special positions uniformly
// without replacement, then corrupts each selected position per the
// mask/random/keep split. Static mode draws from (seed, sequence_index)
// only, so the corruption repeats across epochs; Dynamic mode also mixes
// in the epoch.
MaskedRow mask_tokens(const TokenSeq& seq, const MaskingConfig& config,
                      std::size_t sequence_index, std::size_t epoch,
                      int vocab_size);

struct TrainConfig {
  int epochs = 100;
  double peak_lr = 1e-4;
  double warmup_frac = 0.1;
  int batch_size = 8;
  double val_frac = 0.1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;
  bool freeze_encoder = false;  // builder fine-tuning only

  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double mean_lr = 0.0;
};

struct LossHistory {
  std::vector<EpochStats> epochs;
};

std::string history_to_csv(const LossHistory& history);
void save_history_csv(const LossHistory& history, const std::string& path);

// Linear warmup from 0 to peak_lr over warmup_frac * total_steps, then
// linear decay to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps,
             const TrainConfig& config);

// Mean of -log softmax(logits)[label] over rows with a non-ignored label.
// Throws DataError when no row carries a label (degenerate batch).
double mlm_loss(const std::vector<double>& logits, std::size_t rows,
                std::size_t vocab, const std::vector<int>& labels);

// Same, also writing dloss/dlogits (zero rows at ignored positions).
double mlm_loss_and_grad(const std::vector<double>& logits, std::size_t rows,
                         std::size_t vocab, const std::vector<int>& labels,
                         std::vector<double>& dlogits);

struct MlmTrainResult {
  EncoderState state;
  LossHistory history;
};

// Domain-adaptation loop: masked-LM training of `init` on the corpus
// utterances. Deterministic given the seeds in both configs.
MlmTrainResult train_mlm(const std::vector<Episode>& episodes,
                         const Vocab& vocab, const EncoderState& init,
                         const MaskingConfig& mask_cfg,
                         const TrainConfig& train_cfg);

// Same loop on raw sentences: the desk-scale stand-in for starting from a
// generically pretrained model.
MlmTrainResult pretrain_generic(const std::vector<std::string>& sentences,
                                const Vocab& vocab, const EncoderState& init,
                                const MaskingConfig& mask_cfg,
                                const TrainConfig& train_cfg);

}  // namespace voxbuild

#endif  // VOXBUILD_MLM_HPP_
