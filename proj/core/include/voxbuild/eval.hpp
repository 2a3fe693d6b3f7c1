#ifndef VOXBUILD_EVAL_HPP_
#define VOXBUILD_EVAL_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "voxbuild/builder.hpp"
#include "voxbuild/corpus.hpp"
#include "voxbuild/world.hpp"

namespace voxbuild {

// Fractions in [0, 1]; reported x100 to one decimal.
struct Metrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// F1 from already-percent recall/precision, as printed in run summaries.
double f1_percent(double recall_pct, double precision_pct);

struct PrfResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  Metrics metrics;
};

// Set comparison of net-change actions: actions match iff kind, cell, and
// color all agree. Empty pred yields precision 0, empty gold recall 0.
PrfResult prf(const std::vector<BlockAction>& pred,
              const std::vector<BlockAction>& gold);

struct EvalRow {
  std::string episode_id;
  int turn_index = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  Metrics micro;
  std::string fingerprint;  // evaluation corpus + decode config
};

// Predicts the action sequence for one builder turn, starting from the
// gold world state before the turn.
using TurnDecoder = std::function<std::vector<BlockAction>(
    const Episode&, std::size_t turn_index, const WorldState& world_before)>;

std::string eval_fingerprint(const std::vector<Episode>& episodes,
                             const DecodeConfig& cfg);

// Scores every builder action turn: the decoded end state's net change
// against the gold end state's net change, both relative to the gold world
// before the turn. Micro-averages by summing tp/fp/fn.
EvalReport evaluate(const TurnDecoder& decoder,
                    const std::vector<Episode>& episodes,
                    const DecodeConfig& cfg, const std::string& fingerprint);

EvalReport evaluate_model(const BuilderModel& model,
                          const std::vector<Episode>& episodes,
                          const Vocab& vocab, const DecodeConfig& cfg,
                          int history_turns = kDefaultHistoryTurns);

struct CompareResult {
  // Percent-scale deltas (b - a), rounded to one decimal.
  double d_recall = 0.0;
  double d_precision = 0.0;
  double d_f1 = 0.0;
};

// Throws DataError when the two reports' corpus fingerprints differ.
CompareResult compare_runs(const EvalReport& a, const EvalReport& b);

std::string report_to_csv(const EvalReport& report);
void save_report_csv(const EvalReport& report, const std::string& path);

}  // namespace voxbuild

#endif  // VOXBUILD_EVAL_HPP_
