#include "voxbuild/builder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxbuild/checkpoint.hpp"
#include "voxbuild/error.hpp"
#include "voxbuild/rng.hpp"

namespace voxbuild {

std::size_t action_space_size(GridDims grid) {
  return grid.cell_count() * kActionsPerCell + 1;
}

std::size_t stop_index(GridDims grid) {
  return grid.cell_count() * kActionsPerCell;
}

std::size_t action_to_index(const BlockAction& action, GridDims grid) {
  const std::size_t cell_rank =
      (static_cast<std::size_t>(action.y) * grid.sz +
       static_cast<std::size_t>(action.z)) *
          grid.sx +
      static_cast<std::size_t>(action.x);
  const std::size_t sub = action.kind == ActionKind::Place
                              ? static_cast<std::size_t>(action.color)
                              : static_cast<std::size_t>(kNumColors);
  return cell_rank * kActionsPerCell + sub;
}

BlockAction index_to_action(std::size_t index, GridDims grid) {
  if (index >= stop_index(grid)) {
    throw std::invalid_argument("index_to_action: index is STOP or beyond");
  }
  const std::size_t sub = index % kActionsPerCell;
  std::size_t cell_rank = index / kActionsPerCell;
  const int x = static_cast<int>(cell_rank % grid.sx);
  cell_rank /= grid.sx;
  const int z = static_cast<int>(cell_rank % grid.sz);
  const int y = static_cast<int>(cell_rank / grid.sz);
  if (sub == static_cast<std::size_t>(kNumColors)) {
    return BlockAction::remove(x, y, z);
  }
  return BlockAction::place(x, y, z, static_cast<Color>(sub));
}

void DecodeConfig::validate() const {
  if (max_actions < 1) {
    throw std::invalid_argument("DecodeConfig: max_actions < 1");
  }
}

std::vector<int> build_context_tokens(std::span<const Turn> turns,
                                      std::size_t turn_index,
                                      const Vocab& vocab, int max_seq_len,
                                      int history_turns) {
  if (history_turns < 1) {
    throw std::invalid_argument("build_context_tokens: history_turns < 1");
  }
  const std::size_t start =
      turn_index > static_cast<std::size_t>(history_turns)
          ? turn_index - static_cast<std::size_t>(history_turns)
          : 0;
  std::vector<int> body;
  for (std::size_t t = start; t < turn_index && t < turns.size(); ++t) {
    const Turn& turn = turns[t];
    body.push_back(vocab.lookup(
        turn.speaker == Speaker::Architect ? "architect" : "builder"));
    for (const std::string& w : split_tokens(turn.utterance)) {
      body.push_back(vocab.lookup(w));
    }
    body.push_back(kSepId);
  }
  const std::size_t limit = static_cast<std::size_t>(max_seq_len) - 1;
  std::vector<int> out;
  out.push_back(kClsId);
  if (body.size() > limit) {
    // Drop the oldest tokens first.
    out.insert(out.end(), body.end() - static_cast<long>(limit), body.end());
  } else {
    out.insert(out.end(), body.begin(), body.end());
  }
  if (out.size() == 1) out.push_back(kSepId);
  return out;
}

std::vector<std::uint8_t> world_categories(const WorldState& world) {
  std::vector<std::uint8_t> cats(world.dims.cell_count(),
                                 static_cast<std::uint8_t>(kNumColors));
  for (const auto& [cell, color] : world.occupancy) {
    const std::size_t rank =
        (static_cast<std::size_t>(cell.y) * world.dims.sz +
         static_cast<std::size_t>(cell.z)) *
            world.dims.sx +
        static_cast<std::size_t>(cell.x);
    cats[rank] = static_cast<std::uint8_t>(color);
  }
  return cats;
}

namespace {

// fused[d] = world_b[d] + sum over cells of world_w[cell*7 + cat, d]
void add_world_embedding(const BuilderModel& model,
                         std::span<const std::uint8_t> cats, double* fused) {
  const std::size_t d_model =
      static_cast<std::size_t>(model.encoder.config.d_model);
  for (std::size_t d = 0; d < d_model; ++d) fused[d] += model.world_b.data[d];
  for (std::size_t cell = 0; cell < cats.size(); ++cell) {
    const double* row =
        &model.world_w.data[(cell * kActionsPerCell + cats[cell]) * d_model];
    for (std::size_t d = 0; d < d_model; ++d) fused[d] += row[d];
  }
}

std::vector<double> head_logits(const BuilderModel& model,
                                std::span<const double> fused) {
  const std::size_t d_model =
      static_cast<std::size_t>(model.encoder.config.d_model);
  const std::size_t n_actions = action_space_size(model.grid);
  std::vector<double> logits(n_actions);
  linear_forward(fused.data(), model.head_w.data.data(),
                 model.head_b.data.data(), logits.data(), 1, d_model,
                 n_actions);
  return logits;
}

std::vector<double> cls_hidden(const EncoderState& encoder,
                               const std::vector<int>& tokens) {
  TokenBatch batch = make_batch({tokens});
  EncoderActivations acts;
  encoder_forward(encoder, batch, acts, /*want_logits=*/false, nullptr);
  const std::size_t d = static_cast<std::size_t>(encoder.config.d_model);
  return std::vector<double>(acts.hidden.begin(), acts.hidden.begin() + d);
}

}  // namespace

std::vector<double> encode_context(const BuilderModel& model,
                                   const DialogueContext& ctx) {
  std::vector<double> fused = cls_hidden(model.encoder, ctx.tokens);
  const std::vector<std::uint8_t> cats = world_categories(ctx.world);
  add_world_embedding(model, cats, fused.data());
  return fused;
}

std::vector<double> action_logits(const BuilderModel& model,
                                  std::span<const double> fused) {
  return head_logits(model, fused);
}

std::vector<BlockAction> decode_actions(const BuilderModel& model,
                                        const DialogueContext& ctx,
                                        const DecodeConfig& cfg) {
  cfg.validate();
  // The dialogue tokens are fixed during a turn; only the world part of the
  // fused vector changes, so the encoder runs once.
  const std::vector<double> cls = cls_hidden(model.encoder, ctx.tokens);
  const std::size_t stop = stop_index(model.grid);
  WorldState world = ctx.world;
  std::vector<BlockAction> out;
  for (int step = 0; step < cfg.max_actions; ++step) {
    std::vector<double> fused = cls;
    add_world_embedding(model, world_categories(world), fused.data());
    const std::vector<double> logits = head_logits(model, fused);
    // Argmax over feasible actions plus STOP, ties to the lower enumeration
    // index. Feasibility is probed only for candidates that would win,
    // which is equivalent to masking infeasible logits to -inf first.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::size_t best = kNone;
    double best_v = 0.0;
    for (std::size_t a = 0; a <= stop; ++a) {
      if (best != kNone && logits[a] <= best_v) continue;
      if (a < stop &&
          check_action(world, index_to_action(a, model.grid), cfg.rule)) {
        continue;
      }
      best = a;
      best_v = logits[a];
    }
    if (best == stop) break;
    const BlockAction action = index_to_action(best, model.grid);
    world = apply(world, action, cfg.rule);
    out.push_back(action);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

std::vector<BuilderExample> make_builder_examples(
    const std::vector<Episode>& episodes, const Vocab& vocab, GridDims grid,
    int max_seq_len, int history_turns) {
  std::vector<BuilderExample> out;
  for (const Episode& ep : episodes) {
    for (std::size_t t = 0; t < ep.turns.size(); ++t) {
      const Turn& turn = ep.turns[t];
      if (turn.speaker != Speaker::Builder || turn.actions.empty()) continue;
      std::vector<int> tokens = build_context_tokens(
          ep.turns, t, vocab, max_seq_len, history_turns);
      WorldState world = turn.world_before;
      for (std::size_t p = 0; p <= turn.actions.size(); ++p) {
        BuilderExample ex;
        ex.episode_id = ep.id;
        ex.turn_index = static_cast<int>(t);
        ex.prefix_len = static_cast<int>(p);
        ex.tokens = tokens;
        ex.cell_cats = world_categories(world);
        ex.target = p < turn.actions.size()
                        ? action_to_index(turn.actions[p], grid)
                        : stop_index(grid);
        out.push_back(std::move(ex));
        if (p < turn.actions.size()) {
          try {
            world = apply(world, turn.actions[p],
                          FeasibilityRule::Unrestricted);
          } catch (const DataError& e) {
            throw DataError("infeasible gold action in episode " + ep.id +
                            ": " + e.what());
          }
        }
      }
    }
  }
  return out;
}

namespace {

struct HeadGrads {
  Tensor world_w, world_b, head_w, head_b;
};

HeadGrads zero_head_grads(const BuilderModel& model) {
  HeadGrads g;
  g.world_w = model.world_w;
  g.world_w.fill(0.0);
  g.world_b = model.world_b;
  g.world_b.fill(0.0);
  g.head_w = model.head_w;
  g.head_w.fill(0.0);
  g.head_b = model.head_b;
  g.head_b.fill(0.0);
  return g;
}

// Canonical processing order: examples sorted by (episode, turn, prefix).
std::vector<std::size_t> canonical_order(
    std::span<const BuilderExample> examples) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     const BuilderExample& ea = examples[a];
                     const BuilderExample& eb = examples[b];
                     return std::tie(ea.episode_id, ea.turn_index,
                                     ea.prefix_len) <
                            std::tie(eb.episode_id, eb.turn_index,
                                     eb.prefix_len);
                   });
  return order;
}

// Forward + optional backward on one batch of examples. Returns the summed
// negative log-likelihood over the batch.
double builder_batch_pass(const BuilderModel& model,
                          std::span<const BuilderExample> examples,
                          std::span<const std::size_t> batch_idx,
                          EncoderGrads* enc_grads, HeadGrads* head_grads) {
  const std::size_t B = batch_idx.size();
  const std::size_t D = static_cast<std::size_t>(model.encoder.config.d_model);
  const std::size_t A = action_space_size(model.grid);

  std::vector<std::vector<int>> rows;
  rows.reserve(B);
  for (std::size_t i : batch_idx) rows.push_back(examples[i].tokens);
  TokenBatch batch = make_batch(rows);
  EncoderActivations acts;
  encoder_forward(model.encoder, batch, acts, /*want_logits=*/false, nullptr);

  std::vector<double> fused(B * D);
  for (std::size_t b = 0; b < B; ++b) {
    // CLS hidden state is row 0 of each sequence.
    const double* cls = &acts.hidden[b * batch.seq * D];
    std::copy(cls, cls + D, &fused[b * D]);
    add_world_embedding(model, examples[batch_idx[b]].cell_cats,
                        &fused[b * D]);
  }

  std::vector<double> logits(B * A);
  linear_forward(fused.data(), model.head_w.data.data(),
                 model.head_b.data.data(), logits.data(), B, D, A);

  double nll_sum = 0.0;
  std::vector<double> dlogits;
  if (head_grads != nullptr) dlogits.assign(B * A, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const double* lrow = &logits[b * A];
    const std::size_t target = examples[batch_idx[b]].target;
    double maxv = lrow[0];
    for (std::size_t a = 1; a < A; ++a) maxv = std::max(maxv, lrow[a]);
    double sum = 0.0;
    for (std::size_t a = 0; a < A; ++a) sum += std::exp(lrow[a] - maxv);
    const double lse = maxv + std::log(sum);
    nll_sum += lse - lrow[target];
    if (head_grads != nullptr) {
      double* drow = &dlogits[b * A];
      const double inv = 1.0 / static_cast<double>(B);
      for (std::size_t a = 0; a < A; ++a) {
        drow[a] = std::exp(lrow[a] - lse) * inv;
      }
      drow[target] -= inv;
    }
  }

  if (head_grads != nullptr) {
    std::vector<double> dfused(B * D, 0.0);
    linear_backward(fused.data(), model.head_w.data.data(), dlogits.data(),
                    dfused.data(), head_grads->head_w.data.data(),
                    head_grads->head_b.data.data(), B, D, A);
    for (std::size_t b = 0; b < B; ++b) {
      const double* df = &dfused[b * D];
      for (std::size_t d = 0; d < D; ++d) {
        head_grads->world_b.data[d] += df[d];
      }
    }
    for (std::size_t b = 0; b < B; ++b) {
      const double* df = &dfused[b * D];
      const auto& cats = examples[batch_idx[b]].cell_cats;
      for (std::size_t cell = 0; cell < cats.size(); ++cell) {
        double* row = &head_grads->world_w
                           .data[(cell * kActionsPerCell + cats[cell]) * D];
        for (std::size_t d = 0; d < D; ++d) row[d] += df[d];
      }
    }
    if (enc_grads != nullptr) {
      std::vector<double> dhidden(batch.batch * batch.seq * D, 0.0);
      for (std::size_t b = 0; b < B; ++b) {
        std::copy(&dfused[b * D], &dfused[b * D] + D,
                  &dhidden[b * batch.seq * D]);
      }
      encoder_backward(model.encoder, batch, acts, nullptr, dhidden.data(),
                       *enc_grads);
    }
  }
  return nll_sum;
}

}  // namespace

double builder_examples_loss(const BuilderModel& model,
                             std::span<const BuilderExample> examples) {
  if (examples.empty()) {
    throw DataError("builder_examples_loss: no examples");
  }
  const std::vector<std::size_t> order = canonical_order(examples);
  double nll = 0.0;
  const std::size_t chunk = 32;
  for (std::size_t lo = 0; lo < order.size(); lo += chunk) {
    const std::size_t hi = std::min(lo + chunk, order.size());
    nll += builder_batch_pass(
        model, examples,
        std::span<const std::size_t>(order.data() + lo, hi - lo), nullptr,
        nullptr);
  }
  return nll / static_cast<double>(order.size());
}

double builder_loss_and_grads(const BuilderModel& model,
                              std::span<const BuilderExample> examples,
                              BuilderGrads& grads) {
  if (examples.empty()) {
    throw DataError("builder_loss_and_grads: no examples");
  }
  grads.encoder = zero_grads_like(model.encoder);
  HeadGrads head = zero_head_grads(model);
  const std::vector<std::size_t> order = canonical_order(examples);
  const double nll =
      builder_batch_pass(model, examples, order, &grads.encoder, &head);
  grads.world_w = std::move(head.world_w);
  grads.world_b = std::move(head.world_b);
  grads.head_w = std::move(head.head_w);
  grads.head_b = std::move(head.head_b);
  return nll / static_cast<double>(order.size());
}

BuilderModel init_builder_model(const BuilderInit& init,
                                const EncoderConfig& encoder_cfg,
                                GridDims grid, std::uint64_t head_seed) {
  if (!grid.valid()) {
    throw std::invalid_argument("init_builder_model: invalid grid");
  }
  BuilderModel model;
  model.grid = grid;
  if (std::holds_alternative<ScratchInit>(init)) {
    model.encoder =
        init_encoder(encoder_cfg, std::get<ScratchInit>(init).encoder_seed);
  } else {
    model.encoder = std::get<FromCheckpoint>(init).encoder;
    if (!(model.encoder.config == encoder_cfg)) {
      throw DataError(
          "init_builder_model: checkpoint encoder config does not match");
    }
  }
  const std::size_t D = static_cast<std::size_t>(encoder_cfg.d_model);
  const std::size_t A = action_space_size(grid);
  model.world_w = Tensor{{grid.cell_count() * kActionsPerCell, D}};
  model.world_b = Tensor{{D}};
  model.head_w = Tensor{{D, A}};
  model.head_b = Tensor{{A}};
  // Head init depends only on head_seed, so scratch and
  // checkpoint-initialized runs start from identical heads.
  Rng rng(mix_seed(head_seed, 0x6865616421ull));
  for (double& v : model.world_w.data) v = rng.normal(0.0, 0.02);
  for (double& v : model.head_w.data) v = rng.normal(0.0, 0.02);
  return model;
}

BuilderTrainResult train_builder(const std::vector<Episode>& episodes,
                                 const Vocab& vocab, const BuilderInit& init,
                                 const EncoderConfig& encoder_cfg,
                                 GridDims grid, const TrainConfig& train_cfg,
                                 int history_turns) {
  train_cfg.validate();

  BuilderTrainResult result;
  BuilderModel& model = result.model;
  model = init_builder_model(init, encoder_cfg, grid, train_cfg.seed);
  if (vocab.size() != model.encoder.config.vocab_size) {
    throw DataError("train_builder: vocab size does not match encoder");
  }

  std::vector<BuilderExample> examples = make_builder_examples(
      episodes, vocab, grid, encoder_cfg.max_seq_len, history_turns);
  if (examples.empty()) {
    throw DataError("train_builder: corpus has no builder action turns");
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(mix_seed(train_cfg.seed, 0x76616c5f73706c69ull));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(train_cfg.val_frac * static_cast<double>(examples.size())));
  if (train_cfg.val_frac > 0.0 && n_val == 0 && examples.size() >= 2) n_val = 1;
  if (n_val >= examples.size()) n_val = examples.size() - 1;
  std::vector<std::size_t> val_idx(order.begin(),
                                   order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val),
                                     order.end());
  std::vector<BuilderExample> val_examples;
  for (std::size_t i : val_idx) val_examples.push_back(examples[i]);

  EncoderGrads enc_grads = zero_grads_like(model.encoder);
  HeadGrads head_grads = zero_head_grads(model);
  std::vector<std::pair<Tensor*, const Tensor*>> opt_params;
  opt_params.emplace_back(&model.world_w, &head_grads.world_w);
  opt_params.emplace_back(&model.world_b, &head_grads.world_b);
  opt_params.emplace_back(&model.head_w, &head_grads.head_w);
  opt_params.emplace_back(&model.head_b, &head_grads.head_b);
  if (!train_cfg.freeze_encoder) {
    auto ps = named_params(model.encoder);
    auto gs = named_params(enc_grads);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      opt_params.emplace_back(ps[i].tensor, gs[i].tensor);
    }
  }
  Optimizer opt(OptimizerConfig{.kind = train_cfg.optimizer,
                                .momentum = train_cfg.momentum},
                opt_params);

  const std::size_t batch_size =
      static_cast<std::size_t>(train_cfg.batch_size);
  const std::size_t steps_per_epoch =
      (train_idx.size() + batch_size - 1) / batch_size;
  const std::size_t total_steps =
      steps_per_epoch * static_cast<std::size_t>(train_cfg.epochs);
  std::size_t global_step = 0;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    Rng epoch_rng(mix_seed(train_cfg.seed, 0x65706f6368ull,
                           static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(train_idx);

    double epoch_nll = 0.0;
    double lr_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * batch_size;
      const std::size_t hi = std::min(lo + batch_size, train_idx.size());
      std::vector<std::size_t> batch_idx(train_idx.begin() + static_cast<long>(lo),
                                         train_idx.begin() + static_cast<long>(hi));
      // Canonical in-batch order keeps gradient reduction order fixed.
      std::sort(batch_idx.begin(), batch_idx.end());

      zero_grads(enc_grads);
      head_grads.world_w.fill(0.0);
      head_grads.world_b.fill(0.0);
      head_grads.head_w.fill(0.0);
      head_grads.head_b.fill(0.0);
      const double nll = builder_batch_pass(
          model, examples, batch_idx,
          train_cfg.freeze_encoder ? nullptr : &enc_grads, &head_grads);
      if (!std::isfinite(nll)) {
        throw NumericalError("train_builder: non-finite loss at epoch " +
                             std::to_string(epoch) + " step " +
                             std::to_string(global_step));
      }
      epoch_nll += nll;
      const double lr = lr_at(global_step, total_steps, train_cfg);
      lr_sum += lr;
      ++global_step;
      opt.step(lr);
    }

    EpochStats stats;
    stats.train_loss = train_idx.empty()
                           ? 0.0
                           : epoch_nll / static_cast<double>(train_idx.size());
    stats.val_loss =
        val_examples.empty() ? 0.0
                             : builder_examples_loss(model, val_examples);
    stats.mean_lr = steps_per_epoch > 0
                        ? lr_sum / static_cast<double>(steps_per_epoch)
                        : 0.0;
    result.history.epochs.push_back(stats);
  }
  return result;
}

void save_builder_checkpoint(const BuilderModel& model,
                             const std::string& path) {
  RawCheckpoint ckpt;
  ckpt.kind = kKindBuilder;
  ckpt.config = model.encoder.config;
  ckpt.extra = {static_cast<std::uint32_t>(model.grid.sx),
                static_cast<std::uint32_t>(model.grid.sy),
                static_cast<std::uint32_t>(model.grid.sz)};
  for (const auto& p :
       named_params(const_cast<EncoderState&>(model.encoder))) {
    ckpt.tensors.emplace_back("encoder." + p.name, *p.tensor);
  }
  ckpt.tensors.emplace_back("world_w", model.world_w);
  ckpt.tensors.emplace_back("world_b", model.world_b);
  ckpt.tensors.emplace_back("head_w", model.head_w);
  ckpt.tensors.emplace_back("head_b", model.head_b);
  save_raw_checkpoint(path, ckpt);
}

BuilderModel load_builder_checkpoint(const std::string& path) {
  RawCheckpoint ckpt = load_raw_checkpoint(path);
  if (ckpt.kind != kKindBuilder) {
    throw DataError("checkpoint is not a builder checkpoint: " + path);
  }
  if (ckpt.extra.size() != 3) {
    throw DataError("builder checkpoint missing grid dims: " + path);
  }
  BuilderModel model;
  model.grid = GridDims{static_cast<int>(ckpt.extra[0]),
                        static_cast<int>(ckpt.extra[1]),
                        static_cast<int>(ckpt.extra[2])};
  model.encoder = make_encoder_state(ckpt.config);
  auto params = named_params(model.encoder);
  const std::size_t expected = params.size() + 4;
  if (ckpt.tensors.size() != expected) {
    throw DataError("builder checkpoint tensor count mismatch: " + path);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = ckpt.tensors[i];
    if (name != "encoder." + params[i].name) {
      throw DataError("builder checkpoint tensor name mismatch: " + name);
    }
    if (tensor.shape != params[i].tensor->shape) {
      throw DataError("builder checkpoint shape mismatch for " + name);
    }
    params[i].tensor->data = tensor.data;
  }
  auto take = [&](std::size_t i, const char* name, Tensor& dst,
                  std::initializer_list<std::size_t> shape) {
    const auto& [tname, tensor] = ckpt.tensors[params.size() + i];
    if (tname != name) {
      throw DataError("builder checkpoint tensor name mismatch: " + tname);
    }
    if (tensor.shape != std::vector<std::size_t>(shape)) {
      throw DataError("builder checkpoint shape mismatch for " + tname);
    }
    dst = tensor;
  };
  const std::size_t D = static_cast<std::size_t>(ckpt.config.d_model);
  take(0, "world_w", model.world_w,
       {model.grid.cell_count() * kActionsPerCell, D});
  take(1, "world_b", model.world_b, {D});
  take(2, "head_w", model.head_w, {D, action_space_size(model.grid)});
  take(3, "head_b", model.head_b, {action_space_size(model.grid)});
  return model;
}

}  // namespace voxbuild
