#ifndef VOXBUILD_CORPUS_HPP_
#define VOXBUILD_CORPUS_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxbuild/world.hpp"

namespace voxbuild {

enum class Speaker : std::uint8_t { Architect, Builder };

struct Turn {
  Speaker speaker = Speaker::Architect;
  std::string utterance;
  std::vector<BlockAction> actions;
  // Derived on load by replaying from the empty world; not serialized.
  WorldState world_before;
};

struct Episode {
  std::string id;
  std::vector<Turn> turns;
  WorldState target;
};

// Special token ids. Fixed: PAD=0, UNK=1, CLS=2, SEP=3, MASK=4.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecials = 5;

struct Vocab {
  std::vector<std::string> id_to_token;  // dense ids, specials first
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnkId : it->second;
  }
  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.id_to_token == b.id_to_token;
  }
};

struct TokenSeq {
  std::vector<int> ids;  // CLS ... SEP

  std::size_t size() const { return ids.size(); }
};

struct LoadOptions {
  bool validate_replay = true;
  FeasibilityRule rule = FeasibilityRule::Unrestricted;
};

// Line-delimited episode records; throws DataError naming the line on any
// malformed record, unknown color, out-of-bounds coordinate, or (when
// validate_replay is set) infeasible action sequence.
std::vector<Episode> load_corpus(const std::string& path,
                                 const LoadOptions& opts = {});

// Canonical wire form of one episode (single line, no trailing newline).
std::string serialize_episode(const Episode& ep);

// Canonical corpus file: one serialized episode per line.
std::string serialize_corpus(const std::vector<Episode>& episodes);
void save_corpus(const std::vector<Episode>& episodes,
                 const std::string& path);

// Lowercase word splitting; punctuation characters become their own tokens.
std::vector<std::string> split_tokens(const std::string& text);

// Specials first, then tokens with frequency >= min_freq ordered by
// descending frequency (ties lexicographic).
Vocab build_vocab(const std::vector<std::string>& utterances, int min_freq);
Vocab build_vocab(const std::vector<Episode>& episodes, int min_freq);

std::vector<std::string> collect_utterances(
    const std::vector<Episode>& episodes);

// CLS + content + SEP; content truncated to max_seq_len - 2 words.
TokenSeq tokenize(const std::string& text, const Vocab& vocab,
                  int max_seq_len);

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

// Deterministic synthetic dialogue corpus. Instructions come from fixed
// templates whose gold actions a rule-based parser can recover exactly.
std::vector<Episode> synth_corpus(std::uint64_t seed, int n_episodes,
                                  GridDims grid = GridDims{});

// Deterministic generic sentences over a word pool that overlaps the task
// templates: the stand-in corpus for the generic pretraining stage.
std::vector<std::string> synth_generic_text(std::uint64_t seed,
                                            int n_sentences);

}  // namespace voxbuild

#endif  // VOXBUILD_CORPUS_HPP_
