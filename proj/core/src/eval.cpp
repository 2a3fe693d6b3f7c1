#include "voxbuild/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "voxbuild/error.hpp"
#include "voxbuild/hash.hpp"

namespace voxbuild {

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m;
  const std::size_t pred = tp + fp;
  const std::size_t gold = tp + fn;
  m.precision = pred > 0 ? static_cast<double>(tp) / static_cast<double>(pred)
                         : 0.0;
  m.recall =
      gold > 0 ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

double f1_percent(double recall_pct, double precision_pct) {
  const double sum = recall_pct + precision_pct;
  return sum > 0.0 ? 2.0 * recall_pct * precision_pct / sum : 0.0;
}

PrfResult prf(const std::vector<BlockAction>& pred,
              const std::vector<BlockAction>& gold) {
  const std::set<BlockAction> pred_set(pred.begin(), pred.end());
  const std::set<BlockAction> gold_set(gold.begin(), gold.end());
  PrfResult r;
  for (const BlockAction& a : pred_set) {
    if (gold_set.count(a) > 0) {
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = gold_set.size() - r.tp;
  r.metrics = metrics_from_counts(r.tp, r.fp, r.fn);
  return r;
}

std::string eval_fingerprint(const std::vector<Episode>& episodes,
                             const DecodeConfig& cfg) {
  std::string blob = serialize_corpus(episodes);
  blob += "|max_actions=" + std::to_string(cfg.max_actions);
  blob += "|rule=";
  blob += cfg.rule == FeasibilityRule::Grounded ? "grounded" : "unrestricted";
  return hash_hex(fnv1a64(blob));
}

EvalReport evaluate(const TurnDecoder& decoder,
                    const std::vector<Episode>& episodes,
                    const DecodeConfig& cfg, const std::string& fingerprint) {
  cfg.validate();
  EvalReport report;
  report.fingerprint = fingerprint;
  for (const Episode& ep : episodes) {
    for (std::size_t t = 0; t < ep.turns.size(); ++t) {
      const Turn& turn = ep.turns[t];
      if (turn.speaker != Speaker::Builder || turn.actions.empty()) continue;

      WorldState gold_end = turn.world_before;
      for (const BlockAction& a : turn.actions) {
        gold_end = apply(gold_end, a, FeasibilityRule::Unrestricted);
      }
      const std::vector<BlockAction> pred = decoder(ep, t, turn.world_before);
      WorldState pred_end = turn.world_before;
      for (const BlockAction& a : pred) {
        pred_end = apply(pred_end, a, cfg.rule);
      }

      const PrfResult r = prf(net_change(turn.world_before, pred_end),
                              net_change(turn.world_before, gold_end));
      report.rows.push_back(EvalRow{ep.id, static_cast<int>(t), r.tp, r.fp,
                                    r.fn});
      report.tp += r.tp;
      report.fp += r.fp;
      report.fn += r.fn;
    }
  }
  report.micro = metrics_from_counts(report.tp, report.fp, report.fn);
  return report;
}

EvalReport evaluate_model(const BuilderModel& model,
                          const std::vector<Episode>& episodes,
                          const Vocab& vocab, const DecodeConfig& cfg,
                          int history_turns) {
  TurnDecoder decoder = [&](const Episode& ep, std::size_t turn_index,
                            const WorldState& world_before) {
    DialogueContext ctx;
    ctx.tokens =
        build_context_tokens(ep.turns, turn_index, vocab,
                             model.encoder.config.max_seq_len, history_turns);
    ctx.world = world_before;
    return decode_actions(model, ctx, cfg);
  };
  return evaluate(decoder, episodes, cfg, eval_fingerprint(episodes, cfg));
}

namespace {

double round1(double v) { return std::round(v * 10.0) / 10.0; }

}  // namespace

CompareResult compare_runs(const EvalReport& a, const EvalReport& b) {
  if (a.fingerprint != b.fingerprint) {
    throw DataError("compare_runs: evaluation corpus fingerprint mismatch");
  }
  CompareResult r;
  r.d_recall = round1(100.0 * (b.micro.recall - a.micro.recall));
  r.d_precision = round1(100.0 * (b.micro.precision - a.micro.precision));
  r.d_f1 = round1(100.0 * (b.micro.f1 - a.micro.f1));
  return r;
}

std::string report_to_csv(const EvalReport& report) {
  std::string out = "episode,turn,tp,fp,fn\n";
  char buf[160];
  for (const EvalRow& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%zu,%zu,%zu\n",
                  row.episode_id.c_str(), row.turn_index, row.tp, row.fp,
                  row.fn);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "micro,,%zu,%zu,%zu\nsummary,recall=%.1f,precision=%.1f,"
                "f1=%.1f,fingerprint=%s\n",
                report.tp, report.fp, report.fn, 100.0 * report.micro.recall,
                100.0 * report.micro.precision, 100.0 * report.micro.f1,
                report.fingerprint.c_str());
  out += buf;
  return out;
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write eval report: " + path);
  out << report_to_csv(report);
}

}  // namespace voxbuild
