#include "voxbuild/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "voxbuild/error.hpp"
#include "voxbuild/rng.hpp"

namespace voxbuild {

void MaskingConfig::validate() const {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("MaskingConfig: rate out of [0, 1]");
  }
  const double sum = mask_frac + random_frac + keep_frac;
  if (mask_frac < 0.0 || random_frac < 0.0 || keep_frac < 0.0 ||
      std::fabs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("MaskingConfig: corruption split must sum to 1");
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
  if (!(peak_lr > 0.0)) throw std::invalid_argument("TrainConfig: peak_lr <= 0");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) {
    throw std::invalid_argument("TrainConfig: warmup_frac out of [0, 1)");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (val_frac < 0.0 || val_frac >= 1.0) {
    throw std::invalid_argument("TrainConfig: val_frac out of [0, 1)");
  }
}

namespace {

// round-half-up of rate * k
std::size_t masked_count(double rate, std::size_t k) {
  return static_cast<std::size_t>(
      std::floor(rate * static_cast<double>(k) + 0.5));
}

}  // namespace

MaskedRow mask_tokens(const TokenSeq& seq, const MaskingConfig& config,
                      std::size_t sequence_index, std::size_t epoch,
                      int vocab_size) {
  config.validate();
  MaskedRow row;
  row.input_ids = seq.ids;
  row.labels.assign(seq.ids.size(), kIgnoreLabel);

  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.ids[i] >= kNumSpecials) maskable.push_back(i);
  }
  const std::size_t n = masked_count(config.rate, maskable.size());
  if (n == 0) return row;

  const std::uint64_t stream =
      config.mode == MaskingMode::Static
          ? mix_seed(config.seed, sequence_index)
          : mix_seed(config.seed, sequence_index, epoch);
  Rng rng(stream);

  // Partial Fisher-Yates selection without replacement.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j =
        i + static_cast<std::size_t>(rng.below(maskable.size() - i));
    std::swap(maskable[i], maskable[j]);
  }
  row.masked_positions.assign(maskable.begin(),
                              maskable.begin() + static_cast<long>(n));
  std::sort(row.masked_positions.begin(), row.masked_positions.end());

  for (std::size_t pos : row.masked_positions) {
    row.labels[pos] = seq.ids[pos];
    const double u = rng.next_double();
    if (u < config.mask_frac) {
      row.input_ids[pos] = kMaskId;
    } else if (u < config.mask_frac + config.random_frac) {
      if (vocab_size > kNumSpecials) {
        row.input_ids[pos] =
            kNumSpecials + static_cast<int>(rng.below(
                               static_cast<std::uint64_t>(vocab_size) -
                               kNumSpecials));
      } else {
        row.input_ids[pos] = kMaskId;  // no non-special ids to draw from
      }
    }
    // else: keep the original token
  }
  return row;
}

double lr_at(std::size_t step, std::size_t total_steps,
             const TrainConfig& config) {
  config.validate();
  if (step > total_steps) {
    throw std::invalid_argument("lr_at: step > total_steps");
  }
  if (total_steps == 0) return 0.0;
  const std::size_t warmup = static_cast<std::size_t>(
      std::llround(config.warmup_frac * static_cast<double>(total_steps)));
  if (warmup > 0 && step <= warmup) {
    return config.peak_lr * static_cast<double>(step) /
           static_cast<double>(warmup);
  }
  if (total_steps == warmup) return config.peak_lr;
  return config.peak_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

namespace {

double log_sum_exp(const double* row, std::size_t n) {
  double maxv = row[0];
  for (std::size_t i = 1; i < n; ++i) maxv = std::max(maxv, row[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(row[i] - maxv);
  return maxv + std::log(sum);
}

}  // namespace

double mlm_loss(const std::vector<double>& logits, std::size_t rows,
                std::size_t vocab, const std::vector<int>& labels) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label == kIgnoreLabel) continue;
    const double* lrow = &logits[r * vocab];
    total += log_sum_exp(lrow, vocab) - lrow[static_cast<std::size_t>(label)];
    ++count;
  }
  if (count == 0) {
    throw DataError("mlm_loss: no masked positions in batch");
  }
  return total / static_cast<double>(count);
}

double mlm_loss_and_grad(const std::vector<double>& logits, std::size_t rows,
                         std::size_t vocab, const std::vector<int>& labels,
                         std::vector<double>& dlogits) {
  dlogits.assign(rows * vocab, 0.0);
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] != kIgnoreLabel) ++count;
  }
  if (count == 0) {
    throw DataError("mlm_loss: no masked positions in batch");
  }
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label == kIgnoreLabel) continue;
    const double* lrow = &logits[r * vocab];
    double* drow = &dlogits[r * vocab];
    const double lse = log_sum_exp(lrow, vocab);
    total += lse - lrow[static_cast<std::size_t>(label)];
    for (std::size_t v = 0; v < vocab; ++v) {
      drow[v] = std::exp(lrow[v] - lse) * inv;
    }
    drow[static_cast<std::size_t>(label)] -= inv;
  }
  return total * inv;
}

std::string history_to_csv(const LossHistory& history) {
  std::string out = "epoch,train_loss,val_loss,mean_lr\n";
  char buf[128];
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochStats& s = history.epochs[e];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e, s.train_loss,
                  s.val_loss, s.mean_lr);
    out += buf;
  }
  return out;
}

void save_history_csv(const LossHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write history csv: " + path);
  out << history_to_csv(history);
}

namespace {

struct MlmItem {
  TokenSeq seq;
  std::size_t index = 0;  // stable sequence index for masking streams
};

MlmTrainResult train_mlm_on_sequences(std::vector<MlmItem> items,
                                      const EncoderState& init,
                                      const MaskingConfig& mask_cfg,
                                      const TrainConfig& train_cfg) {
  mask_cfg.validate();
  train_cfg.validate();
  if (items.empty()) {
    throw DataError("train_mlm: empty utterance set");
  }

  MlmTrainResult result;
  result.state = init;
  EncoderState& state = result.state;
  const std::size_t vocab = static_cast<std::size_t>(state.config.vocab_size);

  // Sequences whose deterministic mask count is zero can never contribute
  // loss; drop them before splitting.
  std::erase_if(items, [&](const MlmItem& item) {
    std::size_t k = 0;
    for (int id : item.seq.ids) {
      if (id >= kNumSpecials) ++k;
    }
    return masked_count(mask_cfg.rate, k) == 0;
  });
  if (items.empty()) {
    throw DataError("train_mlm: no maskable sequences in corpus");
  }

  // Held-out validation split by seeded shuffle, fixed for the whole run.
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(mix_seed(train_cfg.seed, 0x76616c5f73706c69ull));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(train_cfg.val_frac * static_cast<double>(items.size())));
  if (train_cfg.val_frac > 0.0 && n_val == 0 && items.size() >= 2) n_val = 1;
  if (n_val >= items.size()) n_val = items.size() - 1;
  std::vector<std::size_t> val_idx(order.begin(),
                                   order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val),
                                     order.end());

  EncoderGrads grads = zero_grads_like(state);
  std::vector<std::pair<Tensor*, const Tensor*>> opt_params;
  {
    auto ps = named_params(state);
    auto gs = named_params(grads);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      opt_params.emplace_back(ps[i].tensor, gs[i].tensor);
    }
  }
  Optimizer opt(OptimizerConfig{.kind = train_cfg.optimizer,
                                .momentum = train_cfg.momentum},
                opt_params);

  const std::size_t batch_size = static_cast<std::size_t>(train_cfg.batch_size);
  const std::size_t steps_per_epoch =
      (train_idx.size() + batch_size - 1) / batch_size;
  const std::size_t total_steps =
      steps_per_epoch * static_cast<std::size_t>(train_cfg.epochs);

  // Validation masking is fixed (static derivation) so the per-epoch curve
  // measures the model, not a new sample of corruptions.
  MaskingConfig val_mask = mask_cfg;
  val_mask.mode = MaskingMode::Static;

  EncoderActivations acts;
  std::vector<double> dlogits;
  std::size_t global_step = 0;

  result.history.epochs.reserve(static_cast<std::size_t>(train_cfg.epochs));
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    Rng epoch_rng(mix_seed(train_cfg.seed, 0x65706f6368ull,
                           static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(train_idx);

    double epoch_nll = 0.0;
    std::size_t epoch_masked = 0;
    double lr_sum = 0.0;

    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * batch_size;
      const std::size_t hi = std::min(lo + batch_size, train_idx.size());
      std::vector<std::vector<int>> rows;
      std::vector<MaskedRow> masked;
      rows.reserve(hi - lo);
      masked.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) {
        const MlmItem& item = items[train_idx[i]];
        masked.push_back(mask_tokens(item.seq, mask_cfg, item.index,
                                     static_cast<std::size_t>(epoch),
                                     state.config.vocab_size));
        rows.push_back(masked.back().input_ids);
      }
      TokenBatch batch = make_batch(rows);
      std::vector<int> labels(batch.batch * batch.seq, kIgnoreLabel);
      std::size_t n_masked = 0;
      for (std::size_t r = 0; r < masked.size(); ++r) {
        for (std::size_t pos : masked[r].masked_positions) {
          labels[r * batch.seq + pos] = masked[r].labels[pos];
          ++n_masked;
        }
      }
      const double lr = lr_at(global_step, total_steps, train_cfg);
      lr_sum += lr;
      ++global_step;
      if (n_masked == 0) continue;  // degenerate batch, schedule still advances

      encoder_forward(state, batch, acts, /*want_logits=*/true, nullptr);
      const double loss = mlm_loss_and_grad(acts.logits, batch.batch * batch.seq,
                                            vocab, labels, dlogits);
      if (!std::isfinite(loss)) {
        throw NumericalError("train_mlm: non-finite loss at epoch " +
                             std::to_string(epoch) + " step " +
                             std::to_string(global_step - 1));
      }
      epoch_nll += loss * static_cast<double>(n_masked);
      epoch_masked += n_masked;

      zero_grads(grads);
      encoder_backward(state, batch, acts, dlogits.data(), nullptr, grads);
      opt.step(lr);
    }

    // Validation pass, forward only.
    double val_nll = 0.0;
    std::size_t val_masked = 0;
    for (std::size_t lo = 0; lo < val_idx.size(); lo += batch_size) {
      const std::size_t hi = std::min(lo + batch_size, val_idx.size());
      std::vector<std::vector<int>> rows;
      std::vector<MaskedRow> masked;
      for (std::size_t i = lo; i < hi; ++i) {
        const MlmItem& item = items[val_idx[i]];
        masked.push_back(
            mask_tokens(item.seq, val_mask, item.index, 0,
                        state.config.vocab_size));
        rows.push_back(masked.back().input_ids);
      }
      TokenBatch batch = make_batch(rows);
      std::vector<int> labels(batch.batch * batch.seq, kIgnoreLabel);
      std::size_t n_masked = 0;
      for (std::size_t r = 0; r < masked.size(); ++r) {
        for (std::size_t pos : masked[r].masked_positions) {
          labels[r * batch.seq + pos] = masked[r].labels[pos];
          ++n_masked;
        }
      }
      if (n_masked == 0) continue;
      encoder_forward(state, batch, acts, /*want_logits=*/true, nullptr);
      const double loss = mlm_loss(acts.logits, batch.batch * batch.seq, vocab,
                                   labels);
      val_nll += loss * static_cast<double>(n_masked);
      val_masked += n_masked;
    }

    EpochStats stats;
    stats.train_loss =
        epoch_masked > 0 ? epoch_nll / static_cast<double>(epoch_masked) : 0.0;
    stats.val_loss =
        val_masked > 0 ? val_nll / static_cast<double>(val_masked) : 0.0;
    stats.mean_lr = steps_per_epoch > 0
                        ? lr_sum / static_cast<double>(steps_per_epoch)
                        : 0.0;
    result.history.epochs.push_back(stats);
  }
  return result;
}

std::vector<MlmItem> items_from_texts(const std::vector<std::string>& texts,
                                      const Vocab& vocab, int max_seq_len) {
  std::vector<MlmItem> items;
  items.reserve(texts.size());
  for (const std::string& text : texts) {
    if (text.empty()) continue;
    MlmItem item;
    item.seq = tokenize(text, vocab, max_seq_len);
    item.index = items.size();
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace

MlmTrainResult train_mlm(const std::vector<Episode>& episodes,
                         const Vocab& vocab, const EncoderState& init,
                         const MaskingConfig& mask_cfg,
                         const TrainConfig& train_cfg) {
  if (vocab.size() != init.config.vocab_size) {
    throw DataError("train_mlm: vocab size does not match encoder config");
  }
  return train_mlm_on_sequences(
      items_from_texts(collect_utterances(episodes), vocab,
                       init.config.max_seq_len),
      init, mask_cfg, train_cfg);
}

MlmTrainResult pretrain_generic(const std::vector<std::string>& sentences,
                                const Vocab& vocab, const EncoderState& init,
                                const MaskingConfig& mask_cfg,
                                const TrainConfig& train_cfg) {
  if (vocab.size() != init.config.vocab_size) {
    throw DataError("pretrain_generic: vocab size does not match encoder config");
  }
  return train_mlm_on_sequences(
      items_from_texts(sentences, vocab, init.config.max_seq_len), init,
      mask_cfg, train_cfg);
}

}  // namespace voxbuild
