#include "voxbuild/runconfig.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "voxbuild/error.hpp"
#include "voxbuild/rng.hpp"

namespace voxbuild {

namespace {

std::string format_double(double v) {
  // Shortest representation that round-trips exactly.
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double parsed = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty()) {
    throw std::invalid_argument("config " + key + ": bad number \"" + v + "\"");
  }
  return parsed;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long parsed = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument("config " + key + ": bad integer \"" + v +
                                "\"");
  }
  return parsed;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t parsed = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument("config " + key + ": bad seed \"" + v + "\"");
  }
  return parsed;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config " + key + ": bad flag \"" + v + "\"");
}

struct KeyHandler {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string grid_to_string(GridDims g) {
  return std::to_string(g.sx) + "x" + std::to_string(g.sy) + "x" +
         std::to_string(g.sz);
}

GridDims parse_grid(const std::string& key, const std::string& v) {
  GridDims g;
  if (std::sscanf(v.c_str(), "%dx%dx%d", &g.sx, &g.sy, &g.sz) != 3 ||
      !g.valid()) {
    throw std::invalid_argument("config " + key + ": bad grid \"" + v + "\"");
  }
  return g;
}

void add_train_keys(std::vector<KeyHandler>& keys, const std::string& prefix,
                    TrainConfig RunConfig::* stage) {
  keys.push_back({prefix + "epochs",
                  [stage, prefix](RunConfig& c, const std::string& v) {
                    (c.*stage).epochs =
                        static_cast<int>(parse_int(prefix + "epochs", v));
                  },
                  [stage](const RunConfig& c) {
                    return std::to_string((c.*stage).epochs);
                  }});
  keys.push_back({prefix + "peak_lr",
                  [stage, prefix](RunConfig& c, const std::string& v) {
                    (c.*stage).peak_lr = parse_double(prefix + "peak_lr", v);
                  },
                  [stage](const RunConfig& c) {
                    return format_double((c.*stage).peak_lr);
                  }});
  keys.push_back({prefix + "warmup_frac",
                  [stage, prefix](RunConfig& c, const std::string& v) {
                    (c.*stage).warmup_frac =
                        parse_double(prefix + "warmup_frac", v);
                  },
                  [stage](const RunConfig& c) {
                    return format_double((c.*stage).warmup_frac);
                  }});
  keys.push_back({prefix + "batch_size",
                  [stage, prefix](RunConfig& c, const std::string& v) {
                    (c.*stage).batch_size =
                        static_cast<int>(parse_int(prefix + "batch_size", v));
                  },
                  [stage](const RunConfig& c) {
                    return std::to_string((c.*stage).batch_size);
                  }});
  keys.push_back({prefix + "val_frac",
                  [stage, prefix](RunConfig& c, const std::string& v) {
                    (c.*stage).val_frac = parse_double(prefix + "val_frac", v);
                  },
                  [stage](const RunConfig& c) {
                    return format_double((c.*stage).val_frac);
                  }});
  keys.push_back(
      {prefix + "optimizer",
       [stage, prefix](RunConfig& c, const std::string& v) {
         if (v == "adam") {
           (c.*stage).optimizer = OptimizerKind::Adam;
         } else if (v == "sgd") {
           (c.*stage).optimizer = OptimizerKind::SgdMomentum;
         } else {
           throw std::invalid_argument("config " + prefix +
                                       "optimizer: expected adam|sgd");
         }
       },
       [stage](const RunConfig& c) {
         return (c.*stage).optimizer == OptimizerKind::Adam ? "adam" : "sgd";
       }});
  keys.push_back({prefix + "momentum",
                  [stage, prefix](RunConfig& c, const std::string& v) {
                    (c.*stage).momentum = parse_double(prefix + "momentum", v);
                  },
                  [stage](const RunConfig& c) {
                    return format_double((c.*stage).momentum);
                  }});
}

}  // namespace

std::uint64_t RunConfig::synth_seed() const {
  return synth_seed_set ? synth_seed_value : mix_seed(seed, 0x73796e7468ull);
}
std::uint64_t RunConfig::pretrain_stage_seed() const {
  return pretrain.seed != 0 ? pretrain.seed : mix_seed(seed, 0x70726521ull);
}
std::uint64_t RunConfig::adapt_stage_seed() const {
  return adapt.seed != 0 ? adapt.seed : mix_seed(seed, 0x61646170ull);
}
std::uint64_t RunConfig::builder_stage_seed() const {
  return builder.seed != 0 ? builder.seed : mix_seed(seed, 0x6275696cull);
}
std::uint64_t RunConfig::mask_stage_seed() const {
  return mask_seed_set ? mask.seed : mix_seed(seed, 0x6d61736bull);
}

void RunConfig::validate() const {
  if (out_dir.empty()) throw std::invalid_argument("config out: empty");
  if (!grid.valid()) throw std::invalid_argument("config corpus.grid invalid");
  if (min_freq < 1) throw std::invalid_argument("config corpus.min_freq < 1");
  if (synth_train_episodes < 0 || synth_test_episodes < 0) {
    throw std::invalid_argument("config corpus.synth_*_episodes < 0");
  }
  if (pretrain_sentences < 1) {
    throw std::invalid_argument("config pretrain.sentences < 1");
  }
  if (history_turns < 1) {
    throw std::invalid_argument("config builder.history_turns < 1");
  }
  mask.validate();
  pretrain.validate();
  adapt.validate();
  builder.validate();
  decode.validate();
  // vocab_size is resolved later; validate the rest of the encoder config.
  EncoderConfig probe = encoder;
  probe.vocab_size = std::max(probe.vocab_size, kNumSpecials + 1);
  probe.validate();
}

namespace {

const std::vector<KeyHandler>& key_registry() {
  static std::vector<KeyHandler>* keys = [] {
    auto* k = new std::vector<KeyHandler>;
    k->push_back({"out",
                  [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                  [](const RunConfig& c) { return c.out_dir; }});
    k->push_back(
        {"corpus.train",
         [](RunConfig& c, const std::string& v) { c.corpus_train = v; },
         [](const RunConfig& c) { return c.corpus_train; }});
    k->push_back(
        {"corpus.test",
         [](RunConfig& c, const std::string& v) { c.corpus_test = v; },
         [](const RunConfig& c) { return c.corpus_test; }});
    k->push_back({"corpus.synth_train_episodes",
                  [](RunConfig& c, const std::string& v) {
                    c.synth_train_episodes = static_cast<int>(
                        parse_int("corpus.synth_train_episodes", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.synth_train_episodes);
                  }});
    k->push_back({"corpus.synth_test_episodes",
                  [](RunConfig& c, const std::string& v) {
                    c.synth_test_episodes = static_cast<int>(
                        parse_int("corpus.synth_test_episodes", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.synth_test_episodes);
                  }});
    k->push_back({"corpus.grid",
                  [](RunConfig& c, const std::string& v) {
                    c.grid = parse_grid("corpus.grid", v);
                  },
                  [](const RunConfig& c) { return grid_to_string(c.grid); }});
    k->push_back({"corpus.min_freq",
                  [](RunConfig& c, const std::string& v) {
                    c.min_freq =
                        static_cast<int>(parse_int("corpus.min_freq", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.min_freq);
                  }});
    k->push_back({"seed",
                  [](RunConfig& c, const std::string& v) {
                    c.seed = parse_u64("seed", v);
                  },
                  [](const RunConfig& c) { return std::to_string(c.seed); }});
    k->push_back({"synth.seed",
                  [](RunConfig& c, const std::string& v) {
                    c.synth_seed_set = true;
                    c.synth_seed_value = parse_u64("synth.seed", v);
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.synth_seed());
                  }});
    k->push_back({"pretrain.sentences",
                  [](RunConfig& c, const std::string& v) {
                    c.pretrain_sentences =
                        static_cast<int>(parse_int("pretrain.sentences", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.pretrain_sentences);
                  }});

    k->push_back({"encoder.n_layers",
                  [](RunConfig& c, const std::string& v) {
                    c.encoder.n_layers =
                        static_cast<int>(parse_int("encoder.n_layers", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.encoder.n_layers);
                  }});
    k->push_back({"encoder.d_model",
                  [](RunConfig& c, const std::string& v) {
                    c.encoder.d_model =
                        static_cast<int>(parse_int("encoder.d_model", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.encoder.d_model);
                  }});
    k->push_back({"encoder.n_heads",
                  [](RunConfig& c, const std::string& v) {
                    c.encoder.n_heads =
                        static_cast<int>(parse_int("encoder.n_heads", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.encoder.n_heads);
                  }});
    k->push_back({"encoder.d_ff",
                  [](RunConfig& c, const std::string& v) {
                    c.encoder.d_ff =
                        static_cast<int>(parse_int("encoder.d_ff", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.encoder.d_ff);
                  }});
    k->push_back({"encoder.max_seq_len",
                  [](RunConfig& c, const std::string& v) {
                    c.encoder.max_seq_len =
                        static_cast<int>(parse_int("encoder.max_seq_len", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.encoder.max_seq_len);
                  }});
    k->push_back({"encoder.dropout",
                  [](RunConfig& c, const std::string& v) {
                    c.encoder.dropout_rate =
                        parse_double("encoder.dropout", v);
                  },
                  [](const RunConfig& c) {
                    return format_double(c.encoder.dropout_rate);
                  }});
    k->push_back({"encoder.tied",
                  [](RunConfig& c, const std::string& v) {
                    c.encoder.tied_output = parse_bool("encoder.tied", v);
                  },
                  [](const RunConfig& c) {
                    return c.encoder.tied_output ? "1" : "0";
                  }});

    k->push_back({"mask.rate",
                  [](RunConfig& c, const std::string& v) {
                    c.mask.rate = parse_double("mask.rate", v);
                  },
                  [](const RunConfig& c) {
                    return format_double(c.mask.rate);
                  }});
    k->push_back(
        {"mask.mode",
         [](RunConfig& c, const std::string& v) {
           if (v == "static") {
             c.mask.mode = MaskingMode::Static;
           } else if (v == "dynamic") {
             c.mask.mode = MaskingMode::Dynamic;
           } else {
             throw std::invalid_argument(
                 "config mask.mode: expected static|dynamic");
           }
         },
         [](const RunConfig& c) {
           return c.mask.mode == MaskingMode::Static ? "static" : "dynamic";
         }});
    k->push_back({"mask.mask_frac",
                  [](RunConfig& c, const std::string& v) {
                    c.mask.mask_frac = parse_double("mask.mask_frac", v);
                  },
                  [](const RunConfig& c) {
                    return format_double(c.mask.mask_frac);
                  }});
    k->push_back({"mask.random_frac",
                  [](RunConfig& c, const std::string& v) {
                    c.mask.random_frac = parse_double("mask.random_frac", v);
                  },
                  [](const RunConfig& c) {
                    return format_double(c.mask.random_frac);
                  }});
    k->push_back({"mask.keep_frac",
                  [](RunConfig& c, const std::string& v) {
                    c.mask.keep_frac = parse_double("mask.keep_frac", v);
                  },
                  [](const RunConfig& c) {
                    return format_double(c.mask.keep_frac);
                  }});
    k->push_back({"mask.seed",
                  [](RunConfig& c, const std::string& v) {
                    c.mask_seed_set = true;
                    c.mask.seed = parse_u64("mask.seed", v);
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.mask_stage_seed());
                  }});

    add_train_keys(*k, "pretrain.", &RunConfig::pretrain);
    add_train_keys(*k, "adapt.", &RunConfig::adapt);
    add_train_keys(*k, "builder.", &RunConfig::builder);
    k->push_back({"pretrain.seed",
                  [](RunConfig& c, const std::string& v) {
                    c.pretrain.seed = parse_u64("pretrain.seed", v);
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.pretrain_stage_seed());
                  }});
    k->push_back({"adapt.seed",
                  [](RunConfig& c, const std::string& v) {
                    c.adapt.seed = parse_u64("adapt.seed", v);
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.adapt_stage_seed());
                  }});
    k->push_back({"builder.seed",
                  [](RunConfig& c, const std::string& v) {
                    c.builder.seed = parse_u64("builder.seed", v);
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.builder_stage_seed());
                  }});
    k->push_back({"builder.freeze_encoder",
                  [](RunConfig& c, const std::string& v) {
                    c.builder.freeze_encoder =
                        parse_bool("builder.freeze_encoder", v);
                  },
                  [](const RunConfig& c) {
                    return c.builder.freeze_encoder ? "1" : "0";
                  }});
    k->push_back({"builder.history_turns",
                  [](RunConfig& c, const std::string& v) {
                    c.history_turns =
                        static_cast<int>(parse_int("builder.history_turns", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.history_turns);
                  }});

    k->push_back({"decode.max_actions",
                  [](RunConfig& c, const std::string& v) {
                    c.decode.max_actions =
                        static_cast<int>(parse_int("decode.max_actions", v));
                  },
                  [](const RunConfig& c) {
                    return std::to_string(c.decode.max_actions);
                  }});
    k->push_back(
        {"decode.rule",
         [](RunConfig& c, const std::string& v) {
           if (v == "grounded") {
             c.decode.rule = FeasibilityRule::Grounded;
           } else if (v == "unrestricted") {
             c.decode.rule = FeasibilityRule::Unrestricted;
           } else {
             throw std::invalid_argument(
                 "config decode.rule: expected grounded|unrestricted");
           }
         },
         [](const RunConfig& c) {
           return c.decode.rule == FeasibilityRule::Grounded ? "grounded"
                                                             : "unrestricted";
         }});
    return k;
  }();
  return *keys;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  // Pipeline-stage budgets; the TrainConfig type default (100 epochs)
  // applies when callers use the library directly.
  cfg.pretrain.epochs = 16;
  cfg.adapt.epochs = 30;
  cfg.builder.epochs = 10;
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  for (const KeyHandler& h : key_registry()) {
    if (key == h.key) {
      h.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key: " + key);
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg = default_run_config();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' ||
                             line.back() == '\r')) {
      line.pop_back();
    }
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value");
    }
    apply_override(cfg, line.substr(start, eq - start), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str());
}

std::string run_config_to_string(const RunConfig& cfg) {
  std::vector<std::string> lines;
  for (const KeyHandler& h : key_registry()) {
    lines.push_back(h.key + "=" + h.get(cfg));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const std::string& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace voxbuild
