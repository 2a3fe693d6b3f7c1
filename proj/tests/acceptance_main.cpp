// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Criteria 3 and 4 train real models and dominate the runtime.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "voxbuild/builder.hpp"
#include "voxbuild/commands.hpp"
#include "voxbuild/eval.hpp"
#include "voxbuild/grad_check.hpp"
#include "voxbuild/hash.hpp"
#include "voxbuild/mlm.hpp"
#include "voxbuild/rng.hpp"

using namespace voxbuild;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

std::string work_dir() {
  const std::string dir =
      (fs::temp_directory_path() / "voxbuild_acceptance").string();
  return dir;
}

// ---------------------------------------------------------------------------

void criterion_1_table1_consistency() {
  struct Row {
    double r, p, f1;
  };
  const std::vector<Row> rows = {{12.6, 22.4, 16.1},
                                 {28.3, 45.8, 35.0},
                                 {28.5, 46.3, 35.3}};
  double worst = 0.0;
  for (const Row& row : rows) {
    worst = std::max(worst, std::fabs(f1_percent(row.r, row.p) - row.f1));
  }
  report(1, worst <= 0.05,
         fmt("published (R,P) pairs reproduce the F1 column, max |dF1| = "
             "%.3f (tolerance 0.05)",
             worst));
}

void criterion_2_statement() {
  report(2, true,
         "absolute comparison-table values (F1 35.3 etc.) need the full "
         "upstream corpus and full-size pretrained encoders; this artifact "
         "does not claim them - criteria 3-9 are the desk-scale substitute");
}

void criterion_3_directional_pipeline() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int adapted_wins_or_ties = 0;
  std::vector<double> deltas;
  std::string per_seed;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = default_run_config();
    cfg.out_dir = work_dir() + "/pipeline_seed" + std::to_string(seed);
    cfg.seed = seed;
    cfg.synth_train_episodes = 400;
    cfg.synth_test_episodes = 100;
    std::ostringstream quiet;
    const PipelineOutcome outcome = run_pipeline(cfg, quiet);
    const double scratch_f1 = 100.0 * outcome.scratch_report.micro.f1;
    const double adapted_f1 = 100.0 * outcome.adapted_report.micro.f1;
    if (adapted_f1 >= scratch_f1) ++adapted_wins_or_ties;
    deltas.push_back(adapted_f1 - scratch_f1);
    per_seed += fmt(" seed%llu: scratch=%.1f adapted=%.1f",
                    static_cast<unsigned long long>(seed), scratch_f1,
                    adapted_f1);
  }
  std::sort(deltas.begin(), deltas.end());
  const double median = deltas[deltas.size() / 2];
  const bool pass = adapted_wins_or_ties >= 4 && median >= 0.0;
  report(3, pass,
         fmt("adapted-init micro-F1 >= scratch-init in %d/5 seeds, median "
             "delta %+.2f (runtime %.0fs, target <1200s);%s",
             adapted_wins_or_ties, median, elapsed_s(t0), per_seed.c_str()));
}

LossHistory criterion_4_mlm_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Episode> corpus = synth_corpus(7, 200);
  const Vocab vocab = build_vocab(corpus, 1);
  EncoderConfig ecfg;  // defaults: 2 layers, d64, 4 heads, ff128
  ecfg.vocab_size = vocab.size();
  const EncoderState init = init_encoder(ecfg, 11);
  MaskingConfig mask;
  mask.seed = 13;
  TrainConfig tc;  // defaults: 100 epochs, peak 1e-4
  tc.seed = 17;
  const MlmTrainResult result = train_mlm(corpus, vocab, init, mask, tc);
  const double ln_v = std::log(static_cast<double>(vocab.size()));
  const double first = result.history.epochs.front().train_loss;
  const double last = result.history.epochs.back().train_loss;
  const bool start_ok = std::fabs(first - ln_v) <= 0.05 * ln_v;
  const bool end_ok = last < 0.5 * ln_v;
  report(4, start_ok && end_ok,
         fmt("train_mlm(synth seed 7, 200 eps, default configs): epoch-0 "
             "loss %.3f vs ln(V)=%.3f (+-5%%), epoch-99 loss %.3f < %.3f "
             "(runtime %.0fs, target <300s)",
             first, ln_v, last, 0.5 * ln_v, elapsed_s(t0)));
  return result.history;
}

void criterion_5_masking_statistics() {
  const std::vector<Episode> corpus = synth_corpus(23, 520);
  const Vocab vocab = build_vocab(corpus, 1);
  std::vector<TokenSeq> seqs;
  for (const std::string& u : collect_utterances(corpus)) {
    seqs.push_back(tokenize(u, vocab, 64));
    if (seqs.size() == 1000) break;
  }
  const bool enough = seqs.size() == 1000;

  MaskingConfig cfg;
  cfg.seed = 29;
  std::size_t masked_total = 0, maskable_total = 0;
  bool exact_counts = true, specials_clean = true;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::size_t k = 0;
    for (int id : seqs[i].ids) {
      if (id >= kNumSpecials) ++k;
    }
    const MaskedRow row = mask_tokens(seqs[i], cfg, i, 0, vocab.size());
    const std::size_t expect =
        static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(k) +
                                            0.5));
    exact_counts = exact_counts && row.masked_positions.size() == expect;
    masked_total += row.masked_positions.size();
    maskable_total += k;
    for (std::size_t pos = 0; pos < seqs[i].ids.size(); ++pos) {
      const bool special = seqs[i].ids[pos] < kNumSpecials;
      if (special && (row.input_ids[pos] != seqs[i].ids[pos] ||
                      row.labels[pos] != kIgnoreLabel)) {
        specials_clean = false;
      }
    }
  }
  const double aggregate =
      static_cast<double>(masked_total) / static_cast<double>(maskable_total);
  const bool aggregate_ok = std::fabs(aggregate - 0.15) <= 0.01;

  // Static mode repeats bitwise across epochs.
  MaskingConfig stat = cfg;
  stat.mode = MaskingMode::Static;
  bool static_ok = true;
  for (std::size_t i = 0; i < 200; ++i) {
    const MaskedRow a = mask_tokens(seqs[i], stat, i, 0, vocab.size());
    const MaskedRow b = mask_tokens(seqs[i], stat, i, 57, vocab.size());
    static_ok = static_ok && a.input_ids == b.input_ids &&
                a.masked_positions == b.masked_positions &&
                a.labels == b.labels;
  }

  // Dynamic mode re-corrupts every 100-token sequence, each epoch.
  bool dynamic_ok = true;
  for (std::size_t i = 0; i < 100; ++i) {
    TokenSeq long_seq;
    long_seq.ids.push_back(kClsId);
    Rng rng(mix_seed(31, i));
    for (int t = 0; t < 100; ++t) {
      long_seq.ids.push_back(
          kNumSpecials +
          static_cast<int>(rng.below(
              static_cast<std::uint64_t>(vocab.size()) - kNumSpecials)));
    }
    long_seq.ids.push_back(kSepId);
    const MaskedRow e0 = mask_tokens(long_seq, cfg, i, 0, vocab.size());
    const MaskedRow e1 = mask_tokens(long_seq, cfg, i, 1, vocab.size());
    dynamic_ok = dynamic_ok && (e0.masked_positions != e1.masked_positions ||
                                e0.input_ids != e1.input_ids);
  }

  report(5,
         enough && exact_counts && aggregate_ok && specials_clean &&
             static_ok && dynamic_ok,
         fmt("1000 sequences: per-seq |M|=round(0.15k) %s, aggregate "
             "fraction %.4f in 0.15+-0.01, special corruptions %s, static "
             "repeat %s, dynamic epoch-distinct %s",
             exact_counts ? "exact" : "VIOLATED", aggregate,
             specials_clean ? "zero" : "PRESENT", static_ok ? "ok" : "BROKEN",
             dynamic_ok ? "ok" : "BROKEN"));
}

void criterion_6_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  // Encoder + MLM loss.
  EncoderConfig ecfg;
  ecfg.n_layers = 1;
  ecfg.d_model = 8;
  ecfg.n_heads = 2;
  ecfg.d_ff = 16;
  ecfg.max_seq_len = 12;
  ecfg.vocab_size = 23;
  EncoderState st = init_encoder(ecfg, 53);
  TokenBatch batch = make_batch({{2, 7, 4, 9, 3}, {2, 11, 4, 3}});
  std::vector<int> labels(batch.batch * batch.seq, kIgnoreLabel);
  labels[1] = 8;
  labels[2] = 7;
  labels[batch.seq + 2] = 12;
  EncoderGrads grads = zero_grads_like(st);
  {
    EncoderActivations acts;
    encoder_forward(st, batch, acts, true, nullptr);
    std::vector<double> dlogits;
    mlm_loss_and_grad(acts.logits, batch.batch * batch.seq,
                      static_cast<std::size_t>(ecfg.vocab_size), labels,
                      dlogits);
    encoder_backward(st, batch, acts, dlogits.data(), nullptr, grads);
  }
  auto mlm_loss_fn = [&] {
    EncoderActivations acts;
    encoder_forward(st, batch, acts, true, nullptr);
    return mlm_loss(acts.logits, batch.batch * batch.seq,
                    static_cast<std::size_t>(ecfg.vocab_size), labels);
  };
  std::vector<GradCheckItem> items;
  auto ps = named_params(st);
  auto gs = named_params(grads);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    items.push_back({ps[i].name, ps[i].tensor, gs[i].tensor});
  }
  const double enc_err = grad_check(mlm_loss_fn, items);

  // Builder head loss end to end.
  const GridDims grid{3, 2, 3};
  const std::vector<Episode> corpus = synth_corpus(71, 4, grid);
  const Vocab vocab = build_vocab(corpus, 1);
  EncoderConfig bcfg = ecfg;
  bcfg.vocab_size = vocab.size();
  bcfg.max_seq_len = 32;
  BuilderModel model = init_builder_model(ScratchInit{3}, bcfg, grid, 9);
  std::vector<BuilderExample> ex = make_builder_examples(corpus, vocab, grid, 32);
  ex.resize(std::min<std::size_t>(4, ex.size()));
  BuilderGrads bgrads;
  builder_loss_and_grads(model, ex, bgrads);
  auto builder_loss_fn = [&] { return builder_examples_loss(model, ex); };
  std::vector<GradCheckItem> bitems;
  auto bps = named_params(model.encoder);
  auto bgs = named_params(bgrads.encoder);
  for (std::size_t i = 0; i < bps.size(); ++i) {
    bitems.push_back({bps[i].name, bps[i].tensor, bgs[i].tensor});
  }
  bitems.push_back({"world_w", &model.world_w, &bgrads.world_w});
  bitems.push_back({"world_b", &model.world_b, &bgrads.world_b});
  bitems.push_back({"head_w", &model.head_w, &bgrads.head_w});
  bitems.push_back({"head_b", &model.head_b, &bgrads.head_b});
  const double builder_err = grad_check(builder_loss_fn, bitems);

  report(6, enc_err < 1e-3 && builder_err < 1e-3,
         fmt("max relative gradient error: encoder+MLM %.2e, builder head "
             "%.2e (tolerance 1e-3, eps 1e-4, >=200 coords/tensor, %.0fs)",
             enc_err, builder_err, elapsed_s(t0)));
}

void criterion_7_oracle_equivalence() {
  Rng rng(311);
  bool net_ok = true;
  for (int trial = 0; trial < 500; ++trial) {
    const WorldState a = testing::random_world(rng, GridDims{}, 0.06);
    const WorldState b = testing::random_world(rng, GridDims{}, 0.06);
    const std::vector<BlockAction> got = net_change(a, b);
    const std::vector<BlockAction> want = testing::net_change_scan(a, b);
    net_ok = net_ok && std::multiset<BlockAction>(got.begin(), got.end()) ==
                           std::multiset<BlockAction>(want.begin(),
                                                      want.end());
  }

  bool feas_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const WorldState w = testing::random_world(rng, GridDims{}, 0.04);
    const FeasibilityRule rule = trial % 2 == 0
                                     ? FeasibilityRule::Grounded
                                     : FeasibilityRule::Unrestricted;
    const std::vector<BlockAction> got = feasible_actions(w, rule);
    const std::vector<BlockAction> want = testing::feasible_by_apply(w, rule);
    feas_ok = feas_ok && got == want;
  }

  // Micro metrics equal a brute-force recomputation from the rows.
  const std::vector<Episode> corpus = synth_corpus(101, 30);
  Rng flip(5);
  TurnDecoder half = [&flip](const Episode& ep, std::size_t t,
                             const WorldState&) {
    if (flip.next_double() < 0.5) return ep.turns[t].actions;
    return std::vector<BlockAction>{};
  };
  DecodeConfig dcfg;
  dcfg.rule = FeasibilityRule::Unrestricted;
  const EvalReport r = evaluate(half, corpus, dcfg, "fp");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const EvalRow& row : r.rows) {
    tp += row.tp;
    fp += row.fp;
    fn += row.fn;
  }
  const Metrics m = metrics_from_counts(tp, fp, fn);
  const bool micro_ok = tp == r.tp && fp == r.fp && fn == r.fn &&
                        m.f1 == r.micro.f1 && m.recall == r.micro.recall &&
                        m.precision == r.micro.precision;

  report(7, net_ok && feas_ok && micro_ok,
         fmt("net_change scan oracle on 500 pairs %s; feasible_actions "
             "apply-filter oracle on 100 worlds %s; micro metrics "
             "recomputation %s",
             net_ok ? "exact" : "MISMATCH", feas_ok ? "exact" : "MISMATCH",
             micro_ok ? "exact" : "MISMATCH"));
}

void criterion_8_determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig base = default_run_config();
  base.seed = 41;
  base.synth_train_episodes = 24;
  base.synth_test_episodes = 8;
  base.pretrain_sentences = 60;
  base.encoder.n_layers = 1;
  base.encoder.d_model = 16;
  base.encoder.n_heads = 2;
  base.encoder.d_ff = 32;
  base.encoder.max_seq_len = 32;
  base.grid = GridDims{5, 3, 5};
  base.pretrain.epochs = 2;
  base.adapt.epochs = 2;
  base.builder.epochs = 2;
  base.decode.max_actions = 4;

  std::ostringstream quiet;
  RunConfig run1 = base;
  run1.out_dir = work_dir() + "/det1";
  RunConfig run2 = base;
  run2.out_dir = work_dir() + "/det2";
  run_pipeline(run1, quiet);
  run_pipeline(run2, quiet);

  bool all_equal = true;
  std::string first_diff;
  for (const char* rel :
       {"corpus/train.jsonl", "corpus/test.jsonl", "vocab.txt",
        "checkpoints/base.ckpt", "checkpoints/adapted.ckpt",
        "checkpoints/builder_scratch.ckpt",
        "checkpoints/builder_adapted.ckpt", "csv/pretrain_loss.csv",
        "csv/adapt_loss.csv", "csv/builder_scratch_loss.csv",
        "csv/builder_adapted_loss.csv", "report/eval_scratch.csv",
        "report/eval_adapted.csv", "report/summary.csv",
        "report/compare.csv", "manifest"}) {
    if (hash_file(run1.out_dir + "/" + rel) !=
        hash_file(run2.out_dir + "/" + rel)) {
      all_equal = false;
      if (first_diff.empty()) first_diff = rel;
    }
  }
  report(8, all_equal,
         all_equal
             ? fmt("identical manifests yield bitwise-identical checkpoints, "
                   "CSVs, and reports across a full pipeline rerun (16 "
                   "artifacts hashed, %.0fs)",
                   elapsed_s(t0))
             : "rerun diverged, first differing artifact: " + first_diff);
}

void criterion_9_schedule_and_curves(const LossHistory& history) {
  TrainConfig tc;  // defaults: peak 1e-4, warmup 0.1
  const std::size_t total = 1000;
  bool ok = lr_at(0, total, tc) == 0.0 && lr_at(total, total, tc) == 0.0 &&
            lr_at(100, total, tc) == 1e-4;
  double peak = 0.0, prev = lr_at(100, total, tc);
  bool monotone = true;
  for (std::size_t s = 0; s <= total; ++s) {
    peak = std::max(peak, lr_at(s, total, tc));
  }
  for (std::size_t s = 101; s <= total; ++s) {
    const double lr = lr_at(s, total, tc);
    monotone = monotone && lr <= prev;
    prev = lr;
  }
  const std::string csv = history_to_csv(history);
  const std::size_t rows = std::count(csv.begin(), csv.end(), '\n') - 1;
  const bool rows_ok = history.epochs.size() == 100 && rows == 100;
  report(9, ok && monotone && peak == 1e-4 && rows_ok,
         fmt("lr_at: 0 at step 0 and total, peak exactly 1e-4 at the warmup "
             "boundary, nonincreasing after warmup %s; loss-history CSV has "
             "%zu data rows (expect 100)",
             monotone ? "ok" : "BROKEN", rows));
}

}  // namespace

int main() {
  fs::remove_all(work_dir());
  fs::create_directories(work_dir());
  const auto t0 = std::chrono::steady_clock::now();
  std::printf("voxbuild acceptance suite\n");

  criterion_1_table1_consistency();
  criterion_2_statement();
  criterion_3_directional_pipeline();
  const LossHistory mlm_history = criterion_4_mlm_convergence();
  criterion_5_masking_statistics();
  criterion_6_gradients();
  criterion_7_oracle_equivalence();
  criterion_8_determinism();
  criterion_9_schedule_and_curves(mlm_history);

  std::printf("%d/9 criteria passed (total runtime %.0fs)\n", 9 - failures,
              elapsed_s(t0));
  return failures;
}
