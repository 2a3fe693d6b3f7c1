#include "voxbuild/mlm.hpp"

#include <cmath>
#include <set>

#include "doctest.h"
#include "voxbuild/checkpoint.hpp"
#include "voxbuild/error.hpp"
#include "voxbuild/rng.hpp"

using namespace voxbuild;

namespace {

TokenSeq frame(std::vector<int> content) {
  TokenSeq seq;
  seq.ids.push_back(kClsId);
  for (int id : content) seq.ids.push_back(id);
  seq.ids.push_back(kSepId);
  return seq;
}

TokenSeq long_seq(int k, int vocab) {
  std::vector<int> content;
  for (int i = 0; i < k; ++i) {
    content.push_back(kNumSpecials + (i % (vocab - kNumSpecials)));
  }
  return frame(content);
}

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace

TEST_SUITE_BEGIN("mlm");

TEST_CASE("mask_tokens with rate 0 leaves everything untouched") {
  MaskingConfig cfg;
  cfg.rate = 0.0;
  const TokenSeq seq = long_seq(20, 30);
  const MaskedRow row = mask_tokens(seq, cfg, 0, 0, 30);
  CHECK(row.masked_positions.empty());
  CHECK(row.input_ids == seq.ids);
  for (int l : row.labels) CHECK(l == kIgnoreLabel);
}

TEST_CASE("mask_tokens selects exactly round(m*k) positions") {
  MaskingConfig cfg;
  const TokenSeq seq = long_seq(100, 40);
  const MaskedRow row = mask_tokens(seq, cfg, 3, 1, 40);
  CHECK(row.masked_positions.size() == 15);

  for (int k : {1, 2, 3, 4, 7, 10, 13, 33, 64}) {
    const TokenSeq s = long_seq(k, 40);
    const MaskedRow r = mask_tokens(s, cfg, 5, 2, 40);
    CHECK(r.masked_positions.size() == round_half_up(0.15 * k));
  }
}

TEST_CASE("special tokens are never selected, corrupted, or labeled") {
  MaskingConfig cfg;
  cfg.rate = 1.0;  // select every maskable position
  for (std::size_t idx = 0; idx < 50; ++idx) {
    TokenSeq seq = frame({7, kUnkId, 9, 11, kUnkId, 13});
    const MaskedRow row = mask_tokens(seq, cfg, idx, 0, 40);
    CHECK(row.input_ids.front() == kClsId);
    CHECK(row.input_ids.back() == kSepId);
    CHECK(row.labels.front() == kIgnoreLabel);
    CHECK(row.labels.back() == kIgnoreLabel);
    for (std::size_t pos : row.masked_positions) {
      CHECK(seq.ids[pos] >= kNumSpecials);
      CHECK(row.labels[pos] == seq.ids[pos]);
      // Random replacements draw non-special ids only.
      CHECK((row.input_ids[pos] == kMaskId ||
             row.input_ids[pos] >= kNumSpecials));
    }
    // UNK positions (a special) stay untouched.
    CHECK(row.input_ids[2] == kUnkId);
    CHECK(row.labels[2] == kIgnoreLabel);
  }
}

TEST_CASE("labels are set exactly on the masked positions") {
  MaskingConfig cfg;
  const TokenSeq seq = long_seq(40, 60);
  const MaskedRow row = mask_tokens(seq, cfg, 9, 4, 60);
  std::set<std::size_t> masked(row.masked_positions.begin(),
                               row.masked_positions.end());
  for (std::size_t i = 0; i < row.labels.size(); ++i) {
    if (masked.count(i)) {
      CHECK(row.labels[i] == seq.ids[i]);
    } else {
      CHECK(row.labels[i] == kIgnoreLabel);
      CHECK(row.input_ids[i] == seq.ids[i]);
    }
  }
}

TEST_CASE("static masking repeats across epochs, dynamic does not") {
  const TokenSeq seq = long_seq(100, 50);

  MaskingConfig stat;
  stat.mode = MaskingMode::Static;
  stat.seed = 77;
  const MaskedRow s0 = mask_tokens(seq, stat, 4, 0, 50);
  const MaskedRow s57 = mask_tokens(seq, stat, 4, 57, 50);
  CHECK(s0.masked_positions == s57.masked_positions);
  CHECK(s0.input_ids == s57.input_ids);
  CHECK(s0.labels == s57.labels);

  MaskingConfig dyn;
  dyn.mode = MaskingMode::Dynamic;
  dyn.seed = 77;
  int distinct = 0;
  for (std::size_t idx = 0; idx < 200; ++idx) {
    const MaskedRow e0 = mask_tokens(seq, dyn, idx, 0, 50);
    const MaskedRow e1 = mask_tokens(seq, dyn, idx, 1, 50);
    if (e0.masked_positions != e1.masked_positions ||
        e0.input_ids != e1.input_ids) {
      ++distinct;
    }
  }
  CHECK(distinct == 200);  // expected collisions over 100-token sequences: ~0
}

TEST_CASE("corruption split fractions are roughly honored") {
  MaskingConfig cfg;
  const TokenSeq seq = long_seq(60, 200);
  std::size_t n_mask = 0, n_same = 0, n_other = 0, total = 0;
  for (std::size_t idx = 0; idx < 400; ++idx) {
    const MaskedRow row = mask_tokens(seq, cfg, idx, 0, 200);
    for (std::size_t pos : row.masked_positions) {
      ++total;
      if (row.input_ids[pos] == kMaskId) {
        ++n_mask;
      } else if (row.input_ids[pos] == seq.ids[pos]) {
        ++n_same;
      } else {
        ++n_other;
      }
    }
  }
  const double mask_frac = static_cast<double>(n_mask) / total;
  // Random replacement can coincide with the original id, so "same"
  // slightly exceeds 0.1 and "other" slightly trails it.
  const double keepish = static_cast<double>(n_same) / total;
  const double randomish = static_cast<double>(n_other) / total;
  CHECK(mask_frac == doctest::Approx(0.8).epsilon(0.05));
  CHECK(keepish == doctest::Approx(0.1).epsilon(0.3));
  CHECK(randomish == doctest::Approx(0.1).epsilon(0.3));
}

TEST_CASE("mlm_loss on uniform logits equals ln(vocab)") {
  const std::size_t V = 100;
  std::vector<double> logits(2 * V, 0.25);  // constant rows are uniform
  std::vector<int> labels = {7, kIgnoreLabel};
  CHECK(mlm_loss(logits, 2, V, labels) ==
        doctest::Approx(std::log(100.0)).epsilon(1e-12));
}

TEST_CASE("mlm_loss with a dominant correct logit is near zero") {
  const std::size_t V = 50;
  std::vector<double> logits(V, 0.0);
  logits[13] = 1000.0;
  std::vector<int> labels = {13};
  CHECK(mlm_loss(logits, 1, V, labels) < 1e-9);
}

TEST_CASE("mlm_loss matches a two-position hand computation") {
  // Row 0: logits [1,2,3], label 2. Row 1: logits [0,0,0], label 0.
  std::vector<double> logits = {1.0, 2.0, 3.0, 0.0, 0.0, 0.0};
  std::vector<int> labels = {2, 0};
  const double lse0 =
      std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  const double expected = ((lse0 - 3.0) + std::log(3.0)) / 2.0;
  CHECK(mlm_loss(logits, 2, 3, labels) ==
        doctest::Approx(expected).epsilon(1e-12));

  std::vector<double> dlogits;
  const double again = mlm_loss_and_grad(logits, 2, 3, labels, dlogits);
  CHECK(again == doctest::Approx(expected).epsilon(1e-12));
  // Gradient row 0: softmax - onehot, halved.
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(dlogits[0] == doctest::Approx(std::exp(1.0) / z / 2.0));
  CHECK(dlogits[2] == doctest::Approx((std::exp(3.0) / z - 1.0) / 2.0));
}

TEST_CASE("mlm_loss rejects a batch with no masked positions") {
  std::vector<double> logits(10, 0.0);
  std::vector<int> labels = {kIgnoreLabel};
  CHECK_THROWS_AS(mlm_loss(logits, 1, 10, labels), DataError);
}

TEST_CASE("mlm_loss is nonnegative on random inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t V = 8;
    std::vector<double> logits(3 * V);
    for (double& v : logits) v = rng.normal() * 3.0;
    std::vector<int> labels = {static_cast<int>(rng.below(V)),
                               static_cast<int>(rng.below(V)), kIgnoreLabel};
    CHECK(mlm_loss(logits, 3, V, labels) >= 0.0);
  }
}

TEST_CASE("lr_at traces the warmup/decay triangle") {
  TrainConfig cfg;
  cfg.peak_lr = 1e-4;
  cfg.warmup_frac = 0.1;
  const std::size_t total = 1000;
  CHECK(lr_at(0, total, cfg) == 0.0);
  CHECK(lr_at(100, total, cfg) == 1e-4);  // warmup boundary hits the peak
  CHECK(lr_at(total, total, cfg) == 0.0);
  CHECK(lr_at(50, total, cfg) == doctest::Approx(0.5e-4));
  CHECK(lr_at(550, total, cfg) == doctest::Approx(0.5e-4));

  double prev = lr_at(100, total, cfg);
  double peak = 0.0;
  for (std::size_t s = 100; s <= total; ++s) {
    const double lr = lr_at(s, total, cfg);
    CHECK(lr <= prev);
    prev = lr;
  }
  for (std::size_t s = 0; s <= total; ++s) {
    peak = std::max(peak, lr_at(s, total, cfg));
  }
  CHECK(peak == 1e-4);
  CHECK_THROWS_AS(lr_at(total + 1, total, cfg), std::invalid_argument);
}

TEST_CASE("train_mlm produces a full history and is deterministic") {
  const std::vector<Episode> corpus = synth_corpus(7, 30);
  const Vocab vocab = build_vocab(corpus, 1);
  EncoderConfig ecfg;
  ecfg.n_layers = 1;
  ecfg.d_model = 16;
  ecfg.n_heads = 2;
  ecfg.d_ff = 32;
  ecfg.max_seq_len = 32;
  ecfg.vocab_size = vocab.size();
  EncoderState init = init_encoder(ecfg, 1);

  MaskingConfig mask;
  mask.seed = 5;
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 16;
  tc.seed = 9;

  MlmTrainResult a = train_mlm(corpus, vocab, init, mask, tc);
  MlmTrainResult b = train_mlm(corpus, vocab, init, mask, tc);
  CHECK(a.history.epochs.size() == 4);
  CHECK(history_to_csv(a.history) == history_to_csv(b.history));
  auto pa = named_params(a.state);
  auto pb = named_params(b.state);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].tensor->data == pb[i].tensor->data);
  }
  // Loss moves downward across the short run.
  CHECK(a.history.epochs.back().train_loss <
        a.history.epochs.front().train_loss);

  CHECK_THROWS_AS(
      train_mlm(std::vector<Episode>{}, vocab, init, mask, tc), DataError);
}

TEST_CASE("epoch-0 train loss starts near ln(vocab)") {
  const std::vector<Episode> corpus = synth_corpus(13, 60);
  const Vocab vocab = build_vocab(corpus, 1);
  EncoderConfig ecfg;
  ecfg.n_layers = 2;
  ecfg.d_model = 32;
  ecfg.n_heads = 4;
  ecfg.d_ff = 64;
  ecfg.max_seq_len = 32;
  ecfg.vocab_size = vocab.size();
  EncoderState init = init_encoder(ecfg, 3);

  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 32;
  MlmTrainResult r = train_mlm(corpus, vocab, init, MaskingConfig{}, tc);
  const double ln_v = std::log(static_cast<double>(vocab.size()));
  CHECK(r.history.epochs[0].train_loss ==
        doctest::Approx(ln_v).epsilon(0.05));
}

TEST_CASE("pretrain_generic is deterministic and transfers to task text") {
  const std::vector<Episode> corpus = synth_corpus(21, 60);
  const std::vector<std::string> generic = synth_generic_text(4, 250);
  std::vector<std::string> all_text = generic;
  for (const std::string& u : collect_utterances(corpus)) {
    all_text.push_back(u);
  }
  const Vocab vocab = build_vocab(all_text, 1);

  EncoderConfig ecfg;
  ecfg.n_layers = 1;
  ecfg.d_model = 32;
  ecfg.n_heads = 4;
  ecfg.d_ff = 64;
  ecfg.max_seq_len = 32;
  ecfg.vocab_size = vocab.size();
  EncoderState init = init_encoder(ecfg, 12);

  MaskingConfig mask;
  mask.seed = 2;
  TrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 32;
  tc.peak_lr = 1e-3;
  tc.seed = 6;

  MlmTrainResult a = pretrain_generic(generic, vocab, init, mask, tc);
  MlmTrainResult b = pretrain_generic(generic, vocab, init, mask, tc);
  CHECK(a.history.epochs.size() == 12);
  {
    auto pa = named_params(a.state);
    auto pb = named_params(b.state);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].tensor->data == pb[i].tensor->data);
    }
  }

  // Measured MLM loss on task utterances: pretrained base beats random init.
  auto task_loss = [&](const EncoderState& st) {
    MaskingConfig eval_mask;
    eval_mask.mode = MaskingMode::Static;
    eval_mask.seed = 99;
    double nll = 0.0;
    std::size_t n = 0;
    std::size_t index = 0;
    for (const std::string& u : collect_utterances(corpus)) {
      const TokenSeq seq = tokenize(u, vocab, ecfg.max_seq_len);
      const MaskedRow row =
          mask_tokens(seq, eval_mask, index++, 0, vocab.size());
      if (row.masked_positions.empty()) continue;
      TokenBatch batch = make_batch({row.input_ids});
      EncoderActivations acts;
      encoder_forward(st, batch, acts, true, nullptr);
      std::vector<int> labels(batch.seq, kIgnoreLabel);
      for (std::size_t pos : row.masked_positions) {
        labels[pos] = row.labels[pos];
      }
      nll += mlm_loss(acts.logits, batch.seq,
                      static_cast<std::size_t>(vocab.size()), labels) *
             static_cast<double>(row.masked_positions.size());
      n += row.masked_positions.size();
    }
    return nll / static_cast<double>(n);
  };
  CHECK(task_loss(a.state) < task_loss(init));
}

TEST_SUITE_END();
