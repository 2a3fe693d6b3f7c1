// Test-side oracles, independent of the implementation paths they check.
#ifndef VOXBUILD_TESTS_ORACLES_HPP_
#define VOXBUILD_TESTS_ORACLES_HPP_

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxbuild/corpus.hpp"
#include "voxbuild/rng.hpp"
#include "voxbuild/world.hpp"

namespace voxbuild::testing {

// Rule-based parser for the synthetic instruction templates. Returns the
// gold action list implied by an utterance, or throws if the utterance
// matches no known template.
inline std::vector<BlockAction> parse_template(const std::string& utterance) {
  const std::vector<std::string> t = split_tokens(utterance);
  auto num = [&](std::size_t i) { return std::stoi(t.at(i)); };
  auto color_at = [&](std::size_t i) {
    auto c = parse_color(t.at(i));
    if (!c) throw std::runtime_error("oracle: bad color in " + utterance);
    return *c;
  };

  if (t.empty()) return {};
  // Pure-dialogue templates.
  if (t[0] == "hello" || t[0] == "hi" || t[0] == "ok") return {};

  std::size_t i = 0;
  if (t[i] == "please" || t[i] == "now") ++i;

  if (t.at(i) == "put") {
    // put a|an <color> block at <x> <z> [for me]
    const Color c = color_at(i + 2);
    return {BlockAction::place(num(i + 5), 0, num(i + 6), c)};
  }
  if (t.at(i) == "remove") {
    // remove the block at <x> <y> <z> [please]
    return {BlockAction::remove(num(i + 4), num(i + 5), num(i + 6))};
  }
  if (t.at(i) == "stack") {
    // stack two <color> blocks at <x> <z>
    const Color c = color_at(i + 2);
    const int x = num(i + 5);
    const int z = num(i + 6);
    return {BlockAction::place(x, 0, z, c), BlockAction::place(x, 1, z, c)};
  }
  if (t.at(i) == "build") {
    // build a|an <color> tower of three at <x> <z>
    const Color c = color_at(i + 2);
    const int x = num(i + 7);
    const int z = num(i + 8);
    return {BlockAction::place(x, 0, z, c), BlockAction::place(x, 1, z, c),
            BlockAction::place(x, 2, z, c)};
  }
  throw std::runtime_error("oracle: unknown template: " + utterance);
}

// Independent per-cell scan computing the action diff between two worlds.
inline std::vector<BlockAction> net_change_scan(const WorldState& before,
                                                const WorldState& after) {
  std::vector<BlockAction> removals, placements;
  for (int y = 0; y < before.dims.sy; ++y) {
    for (int z = 0; z < before.dims.sz; ++z) {
      for (int x = 0; x < before.dims.sx; ++x) {
        const std::optional<Color> b = before.color_at(x, y, z);
        const std::optional<Color> a = after.color_at(x, y, z);
        if (b == a) continue;
        if (b.has_value()) removals.push_back(BlockAction::remove(x, y, z));
        if (a.has_value()) {
          placements.push_back(BlockAction::place(x, y, z, *a));
        }
      }
    }
  }
  removals.insert(removals.end(), placements.begin(), placements.end());
  return removals;
}

// Random sparse world: each cell occupied with probability `fill`.
inline WorldState random_world(Rng& rng, GridDims dims, double fill) {
  WorldState w(dims);
  for (int y = 0; y < dims.sy; ++y) {
    for (int z = 0; z < dims.sz; ++z) {
      for (int x = 0; x < dims.sx; ++x) {
        if (rng.next_double() < fill) {
          w.occupancy[Cell{x, y, z}] =
              static_cast<Color>(rng.below(kNumColors));
        }
      }
    }
  }
  return w;
}

// Brute-force feasibility filter: every (cell, action) candidate that
// apply() accepts, probed by actually applying it.
inline std::vector<BlockAction> feasible_by_apply(const WorldState& world,
                                                  FeasibilityRule rule) {
  std::vector<BlockAction> out;
  for (int y = 0; y < world.dims.sy; ++y) {
    for (int z = 0; z < world.dims.sz; ++z) {
      for (int x = 0; x < world.dims.sx; ++x) {
        for (int c = 0; c < kNumColors; ++c) {
          const BlockAction a =
              BlockAction::place(x, y, z, static_cast<Color>(c));
          try {
            (void)apply(world, a, rule);
            out.push_back(a);
          } catch (const std::exception&) {
          }
        }
        const BlockAction r = BlockAction::remove(x, y, z);
        try {
          (void)apply(world, r, rule);
          out.push_back(r);
        } catch (const std::exception&) {
        }
      }
    }
  }
  return out;
}

}  // namespace voxbuild::testing

#endif  // VOXBUILD_TESTS_ORACLES_HPP_
