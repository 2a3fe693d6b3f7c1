#include "voxbuild/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "voxbuild/error.hpp"
#include "voxbuild/rng.hpp"

namespace voxbuild {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr const char* kSpecialTokens[kNumSpecials] = {"[PAD]", "[UNK]",
                                                      "[CLS]", "[SEP]",
                                                      "[MASK]"};

[[noreturn]] void record_error(std::size_t line_no, const std::string& what) {
  std::ostringstream os;
  os << "line " << line_no << ": " << what;
  throw DataError(os.str());
}

Color color_or_throw(const std::string& name, std::size_t line_no,
                     const std::string& where) {
  auto c = parse_color(name);
  if (!c) record_error(line_no, "unknown color \"" + name + "\" in " + where);
  return *c;
}

BlockAction parse_action(const json& j, std::size_t line_no,
                         const std::string& episode_id) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    record_error(line_no, "malformed action in episode " + episode_id);
  }
  const std::string kind = j["kind"].get<std::string>();
  if (!j.contains("x") || !j.contains("y") || !j.contains("z") ||
      !j["x"].is_number_integer() || !j["y"].is_number_integer() ||
      !j["z"].is_number_integer()) {
    record_error(line_no, "malformed action coordinates in episode " +
                              episode_id);
  }
  int x = j["x"].get<int>();
  int y = j["y"].get<int>();
  int z = j["z"].get<int>();
  if (kind == "place") {
    if (!j.contains("color") || !j["color"].is_string()) {
      record_error(line_no,
                   "place action without color in episode " + episode_id);
    }
    return BlockAction::place(
        x, y, z,
        color_or_throw(j["color"].get<std::string>(), line_no,
                       "episode " + episode_id));
  }
  if (kind == "remove") {
    if (j.contains("color")) {
      record_error(line_no,
                   "remove action carries a color in episode " + episode_id);
    }
    return BlockAction::remove(x, y, z);
  }
  record_error(line_no,
               "unknown action kind \"" + kind + "\" in episode " +
                   episode_id);
}

}  // namespace

std::vector<Episode> load_corpus(const std::string& path,
                                 const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);

  std::vector<Episode> episodes;
  std::map<std::string, std::size_t> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      record_error(line_no, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
        !j.contains("target") || !j["target"].is_array() ||
        !j.contains("turns") || !j["turns"].is_array()) {
      record_error(line_no, "malformed record: missing id/target/turns");
    }

    Episode ep;
    ep.id = j["id"].get<std::string>();
    if (auto [it, inserted] = seen_ids.emplace(ep.id, line_no); !inserted) {
      record_error(line_no, "duplicate episode id \"" + ep.id +
                                "\" (first seen on line " +
                                std::to_string(it->second) + ")");
    }

    GridDims grid;  // 11x9x11 default, matching the wire format contract
    ep.target = WorldState(grid);
    for (const auto& cell : j["target"]) {
      if (!cell.is_array() || cell.size() != 4 ||
          !cell[0].is_number_integer() || !cell[1].is_number_integer() ||
          !cell[2].is_number_integer() || !cell[3].is_string()) {
        record_error(line_no, "malformed target cell in episode " + ep.id);
      }
      int x = cell[0].get<int>();
      int y = cell[1].get<int>();
      int z = cell[2].get<int>();
      Color c = color_or_throw(cell[3].get<std::string>(), line_no,
                               "episode " + ep.id + " target");
      if (!ep.target.in_bounds(x, y, z)) {
        record_error(line_no, "target coordinate out of bounds in episode " +
                                  ep.id);
      }
      if (!ep.target.occupancy.emplace(Cell{x, y, z}, c).second) {
        record_error(line_no,
                     "duplicate target cell in episode " + ep.id);
      }
    }

    WorldState world(grid);
    for (const auto& jt : j["turns"]) {
      if (!jt.is_object() || !jt.contains("speaker") ||
          !jt["speaker"].is_string() || !jt.contains("utterance") ||
          !jt["utterance"].is_string() || !jt.contains("actions") ||
          !jt["actions"].is_array()) {
        record_error(line_no, "malformed turn in episode " + ep.id);
      }
      Turn turn;
      const std::string speaker = jt["speaker"].get<std::string>();
      if (speaker == "architect") {
        turn.speaker = Speaker::Architect;
      } else if (speaker == "builder") {
        turn.speaker = Speaker::Builder;
      } else {
        record_error(line_no, "unknown speaker \"" + speaker +
                                  "\" in episode " + ep.id);
      }
      turn.utterance = jt["utterance"].get<std::string>();
      turn.world_before = world;
      for (const auto& ja : jt["actions"]) {
        BlockAction a = parse_action(ja, line_no, ep.id);
        if (!world.in_bounds(a.x, a.y, a.z)) {
          record_error(line_no, "action coordinate out of bounds in episode " +
                                    ep.id + ": " + action_to_string(a));
        }
        if (opts.validate_replay) {
          if (auto err = check_action(world, a, opts.rule)) {
            record_error(line_no, "infeasible action sequence in episode " +
                                      ep.id + ": " +
                                      apply_error_message(*err) + ": " +
                                      action_to_string(a));
          }
          world = apply(world, a, opts.rule);
        } else {
          // Replay without feasibility: apply bounds-checked overwrite.
          Cell cell{a.x, a.y, a.z};
          if (a.kind == ActionKind::Place) {
            world.occupancy[cell] = a.color;
          } else {
            world.occupancy.erase(cell);
          }
        }
        turn.actions.push_back(a);
      }
      ep.turns.push_back(std::move(turn));
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

std::string serialize_episode(const Episode& ep) {
  ordered_json j;
  j["id"] = ep.id;
  ordered_json target = ordered_json::array();
  for (const auto& [x, y, z, c] : sorted_blocks(ep.target)) {
    target.push_back(ordered_json::array({x, y, z, color_name(c)}));
  }
  j["target"] = std::move(target);
  ordered_json turns = ordered_json::array();
  for (const Turn& t : ep.turns) {
    ordered_json jt;
    jt["speaker"] = t.speaker == Speaker::Architect ? "architect" : "builder";
    jt["utterance"] = t.utterance;
    ordered_json actions = ordered_json::array();
    for (const BlockAction& a : t.actions) {
      ordered_json ja;
      ja["kind"] = a.kind == ActionKind::Place ? "place" : "remove";
      ja["x"] = a.x;
      ja["y"] = a.y;
      ja["z"] = a.z;
      if (a.kind == ActionKind::Place) ja["color"] = color_name(a.color);
      actions.push_back(std::move(ja));
    }
    jt["actions"] = std::move(actions);
    turns.push_back(std::move(jt));
  }
  j["turns"] = std::move(turns);
  return j.dump();
}

std::string serialize_corpus(const std::vector<Episode>& episodes) {
  std::string out;
  for (const Episode& ep : episodes) {
    out += serialize_episode(ep);
    out += '\n';
  }
  return out;
}

void save_corpus(const std::vector<Episode>& episodes,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  out << serialize_corpus(episodes);
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      tokens.push_back(word);
      word.clear();
    }
  };
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      flush();
      tokens.push_back(std::string(1, static_cast<char>(c)));
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

Vocab build_vocab(const std::vector<std::string>& utterances, int min_freq) {
  if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq < 1");
  std::map<std::string, std::size_t> freq;
  for (const std::string& u : utterances) {
    for (const std::string& tok : split_tokens(u)) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(),
                                                           freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocab v;
  for (const char* s : kSpecialTokens) v.id_to_token.emplace_back(s);
  for (const auto& [tok, n] : entries) {
    if (n >= static_cast<std::size_t>(min_freq)) v.id_to_token.push_back(tok);
  }
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

std::vector<std::string> collect_utterances(
    const std::vector<Episode>& episodes) {
  std::vector<std::string> out;
  for (const Episode& ep : episodes) {
    for (const Turn& t : ep.turns) {
      if (!t.utterance.empty()) out.push_back(t.utterance);
    }
  }
  return out;
}

Vocab build_vocab(const std::vector<Episode>& episodes, int min_freq) {
  return build_vocab(collect_utterances(episodes), min_freq);
}

TokenSeq tokenize(const std::string& text, const Vocab& vocab,
                  int max_seq_len) {
  if (max_seq_len < 2) throw std::invalid_argument("tokenize: max_seq_len < 2");
  TokenSeq seq;
  seq.ids.push_back(kClsId);
  std::vector<std::string> words = split_tokens(text);
  std::size_t limit = static_cast<std::size_t>(max_seq_len) - 2;
  for (std::size_t i = 0; i < words.size() && i < limit; ++i) {
    seq.ids.push_back(vocab.lookup(words[i]));
  }
  seq.ids.push_back(kSepId);
  return seq;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file: " + path);
  for (const std::string& tok : vocab.id_to_token) out << tok << '\n';
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocab file: " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.id_to_token.push_back(line);
  }
  if (v.size() < kNumSpecials) {
    throw DataError("vocab file too short: " + path);
  }
  for (int i = 0; i < kNumSpecials; ++i) {
    if (v.id_to_token[i] != kSpecialTokens[i]) {
      throw DataError("vocab file missing special token " +
                      std::string(kSpecialTokens[i]) + ": " + path);
    }
  }
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation

namespace {

std::string num(int v) { return std::to_string(v); }

struct SynthWorld {
  WorldState world;

  explicit SynthWorld(GridDims grid) : world(grid) {}

  // Triangular marginal peaked at the grid center: architects favor the
  // middle of the build area, so cell/color patterns repeat across
  // episodes the way real construction dialogues do.
  static int sample_coord(Rng& rng, int extent) {
    const int a = static_cast<int>(rng.below(extent));
    const int b = static_cast<int>(rng.below(extent));
    return (a + b) / 2;
  }

  // Picks a column (x, z) whose cells y = 0..height-1 are all empty.
  // Falls back to a canonical scan when sampling keeps missing.
  bool pick_free_column(Rng& rng, int height, int& x, int& z) const {
    auto column_free = [&](int cx, int cz) {
      for (int y = 0; y < height; ++y) {
        if (world.color_at(cx, y, cz)) return false;
      }
      return true;
    };
    for (int attempt = 0; attempt < 64; ++attempt) {
      int cx = sample_coord(rng, world.dims.sx);
      int cz = sample_coord(rng, world.dims.sz);
      if (column_free(cx, cz)) {
        x = cx;
        z = cz;
        return true;
      }
    }
    for (int cz = 0; cz < world.dims.sz; ++cz) {
      for (int cx = 0; cx < world.dims.sx; ++cx) {
        if (column_free(cx, cz)) {
          x = cx;
          z = cz;
          return true;
        }
      }
    }
    return false;
  }

  Cell pick_block(Rng& rng) const {
    std::size_t idx = rng.below(world.occupancy.size());
    auto it = world.occupancy.begin();
    std::advance(it, static_cast<long>(idx));
    return it->first;
  }
};

Turn architect_turn(std::string utterance) {
  Turn t;
  t.speaker = Speaker::Architect;
  t.utterance = std::move(utterance);
  return t;
}

Turn builder_turn(std::vector<BlockAction> actions,
                  std::string utterance = "") {
  Turn t;
  t.speaker = Speaker::Builder;
  t.utterance = std::move(utterance);
  t.actions = std::move(actions);
  return t;
}

}  // namespace

std::vector<Episode> synth_corpus(std::uint64_t seed, int n_episodes,
                                  GridDims grid) {
  if (n_episodes < 0) throw std::invalid_argument("synth_corpus: n_episodes < 0");
  if (!grid.valid()) throw std::invalid_argument("synth_corpus: invalid grid");
  std::vector<Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(n_episodes));
  const int max_tower = std::min(3, grid.sy);

  for (int e = 0; e < n_episodes; ++e) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
    Episode ep;
    {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "ep%06d", e);
      ep.id = buf;
    }
    SynthWorld sw(grid);

    if (rng.next_double() < 0.15) {
      ep.turns.push_back(architect_turn(
          rng.next_double() < 0.5
              ? "hello builder i am the architect and we will build something nice"
              : "hi builder are you ready to start"));
    }

    double pair_roll = rng.next_double();
    int n_pairs = pair_roll < 0.92 ? 1 : 2;

    for (int p = 0; p < n_pairs; ++p) {
      std::string utterance;
      std::vector<BlockAction> actions;
      const bool can_remove = !sw.world.occupancy.empty();
      // Template weights; removal templates drop out on an empty world.
      double r = rng.next_double();
      int tmpl;
      if (can_remove) {
        if (r < 0.30) tmpl = 0;        // put
        else if (r < 0.42) tmpl = 1;   // please put ... for me
        else if (r < 0.60) tmpl = 2;   // remove
        else if (r < 0.72) tmpl = 3;   // now remove ... please
        else if (r < 0.86) tmpl = 4;   // stack two
        else tmpl = 5;                 // tower of three
      } else {
        if (r < 0.42) tmpl = 0;
        else if (r < 0.60) tmpl = 1;
        else if (r < 0.80) tmpl = 4;
        else tmpl = 5;
      }
      if (tmpl == 5 && max_tower < 3) tmpl = 4;
      if (tmpl == 4 && grid.sy < 2) tmpl = 0;

      Color color = static_cast<Color>(rng.below(kNumColors));
      const std::string article = color == Color::Orange ? "an " : "a ";
      int x = 0, z = 0;
      switch (tmpl) {
        case 0:
        case 1: {
          if (!sw.pick_free_column(rng, 1, x, z)) {
            continue;  // world saturated; skip this instruction
          }
          actions.push_back(BlockAction::place(x, 0, z, color));
          utterance = (tmpl == 0 ? "put " : "please put ") + article +
                      std::string(color_name(color)) + " block at " + num(x) +
                      " " + num(z) + (tmpl == 0 ? "" : " for me");
          break;
        }
        case 2:
        case 3: {
          Cell cell = sw.pick_block(rng);
          actions.push_back(BlockAction::remove(cell.x, cell.y, cell.z));
          std::string coords =
              num(cell.x) + " " + num(cell.y) + " " + num(cell.z);
          utterance = tmpl == 2
                          ? "remove the block at " + coords
                          : "now remove the block at " + coords + " please";
          break;
        }
        case 4: {
          if (!sw.pick_free_column(rng, 2, x, z)) continue;
          actions.push_back(BlockAction::place(x, 0, z, color));
          actions.push_back(BlockAction::place(x, 1, z, color));
          utterance = "stack two " + std::string(color_name(color)) +
                      " blocks at " + num(x) + " " + num(z);
          break;
        }
        default: {
          if (!sw.pick_free_column(rng, 3, x, z)) continue;
          for (int y = 0; y < 3; ++y) {
            actions.push_back(BlockAction::place(x, y, z, color));
          }
          utterance = "build " + article + std::string(color_name(color)) +
                      " tower of three at " + num(x) + " " + num(z);
          break;
        }
      }

      Turn instr = architect_turn(utterance);
      instr.world_before = sw.world;
      ep.turns.push_back(std::move(instr));

      Turn act = builder_turn(actions);
      act.world_before = sw.world;
      for (const BlockAction& a : actions) {
        sw.world = apply(sw.world, a, FeasibilityRule::Grounded);
      }
      ep.turns.push_back(std::move(act));

      if (rng.next_double() < 0.05) {
        Turn confirm = builder_turn({}, "ok the blocks are placed now");
        confirm.world_before = sw.world;
        ep.turns.push_back(std::move(confirm));
      }
    }

    ep.target = sw.world;
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

std::vector<std::string> synth_generic_text(std::uint64_t seed,
                                            int n_sentences) {
  if (n_sentences < 0) {
    throw std::invalid_argument("synth_generic_text: n_sentences < 0");
  }
  static const char* kThings[] = {"block",  "tower", "wall",
                                  "row",    "cube",  "house",
                                  "bridge", "floor", "corner"};
  static const char* kAdjectives[] = {"nice", "tall", "small", "big",
                                      "old",  "new",  "long"};
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n_sentences));
  for (int i = 0; i < n_sentences; ++i) {
    Rng rng(mix_seed(seed ^ 0x67656e65726963ull, static_cast<std::uint64_t>(i)));
    auto color = [&] {
      return std::string(color_name(static_cast<Color>(rng.below(kNumColors))));
    };
    auto thing = [&] { return std::string(kThings[rng.below(9)]); };
    auto adj = [&] { return std::string(kAdjectives[rng.below(7)]); };
    auto number = [&] { return num(static_cast<int>(rng.below(11))); };
    std::string s;
    switch (rng.below(8)) {
      case 0:
        s = "the " + color() + " " + thing() + " is near the " + color() +
            " " + thing();
        break;
      case 1:
        s = "we can build a " + adj() + " " + thing() + " with " + number() +
            " blocks";
        break;
      case 2:
        s = number() + " is more than " + number() + " but less than " +
            number();
        break;
      case 3: {
        const std::string c = color();
        s = "the builder will place " + std::string(c == "orange" ? "an " : "a ") +
            c + " block at " + number() + " " + number();
        break;
      }
      case 4:
        s = "i like the " + color() + " " + thing() + " more than the " +
            adj() + " one";
        break;
      case 5:
        s = "please stack the " + color() + " blocks and remove the " + adj() +
            " ones";
        break;
      case 6:
        s = "a " + adj() + " " + thing() + " needs " + number() + " or " +
            number() + " blocks";
        break;
      default:
        s = "put the " + adj() + " " + thing() + " next to the " + color() +
            " " + thing();
        break;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace voxbuild
