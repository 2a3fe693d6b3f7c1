#include "voxbuild/world.hpp"

#include <array>
#include <cstdio>
#include <sstream>

#include "voxbuild/error.hpp"

namespace voxbuild {

namespace {

constexpr std::array<const char*, kNumColors> kColorNames = {
    "red", "orange", "yellow", "green", "blue", "purple"};
constexpr std::array<char, kNumColors> kColorInitials = {'R', 'O', 'Y',
                                                         'G', 'B', 'P'};

}  // namespace

const char* color_name(Color c) {
  return kColorNames[static_cast<std::size_t>(c)];
}

char color_initial(Color c) {
  return kColorInitials[static_cast<std::size_t>(c)];
}

std::optional<Color> parse_color(const std::string& name) {
  for (int i = 0; i < kNumColors; ++i) {
    if (name == kColorNames[i]) return static_cast<Color>(i);
  }
  return std::nullopt;
}

std::string action_to_string(const BlockAction& a) {
  char buf[64];
  if (a.kind == ActionKind::Place) {
    std::snprintf(buf, sizeof(buf), "place %s (%d,%d,%d)",
                  color_name(a.color), a.x, a.y, a.z);
  } else {
    std::snprintf(buf, sizeof(buf), "remove (%d,%d,%d)", a.x, a.y, a.z);
  }
  return buf;
}

const char* apply_error_message(ApplyError e) {
  switch (e) {
    case ApplyError::OutOfBounds:
      return "coordinates out of bounds";
    case ApplyError::PlaceOnOccupied:
      return "placement on an occupied cell";
    case ApplyError::RemoveFromEmpty:
      return "removal from an empty cell";
    case ApplyError::UngroundedPlacement:
      return "ungrounded placement";
  }
  return "unknown apply error";
}

namespace {

bool has_occupied_neighbor(const WorldState& w, int x, int y, int z) {
  static constexpr int kOffsets[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                         {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
  for (const auto& o : kOffsets) {
    int nx = x + o[0], ny = y + o[1], nz = z + o[2];
    if (w.in_bounds(nx, ny, nz) && w.color_at(nx, ny, nz)) return true;
  }
  return false;
}

}  // namespace

std::optional<ApplyError> check_action(const WorldState& world,
                                       const BlockAction& action,
                                       FeasibilityRule rule) {
  if (!world.in_bounds(action.x, action.y, action.z)) {
    return ApplyError::OutOfBounds;
  }
  const bool occupied =
      world.color_at(action.x, action.y, action.z).has_value();
  if (action.kind == ActionKind::Place) {
    if (occupied) return ApplyError::PlaceOnOccupied;
    if (rule == FeasibilityRule::Grounded && action.y != 0 &&
        !has_occupied_neighbor(world, action.x, action.y, action.z)) {
      return ApplyError::UngroundedPlacement;
    }
  } else {
    if (!occupied) return ApplyError::RemoveFromEmpty;
  }
  return std::nullopt;
}

WorldState apply(const WorldState& world, const BlockAction& action,
                 FeasibilityRule rule) {
  if (auto err = check_action(world, action, rule)) {
    throw DataError(std::string(apply_error_message(*err)) + ": " +
                    action_to_string(action));
  }
  WorldState next = world;
  Cell cell{action.x, action.y, action.z};
  if (action.kind == ActionKind::Place) {
    next.occupancy.emplace(cell, action.color);
  } else {
    next.occupancy.erase(cell);
  }
  return next;
}

std::vector<BlockAction> feasible_actions(const WorldState& world,
                                          FeasibilityRule rule) {
  std::vector<BlockAction> out;
  for (int y = 0; y < world.dims.sy; ++y) {
    for (int z = 0; z < world.dims.sz; ++z) {
      for (int x = 0; x < world.dims.sx; ++x) {
        for (int c = 0; c < kNumColors; ++c) {
          BlockAction a = BlockAction::place(x, y, z, static_cast<Color>(c));
          if (!check_action(world, a, rule)) out.push_back(a);
        }
        BlockAction r = BlockAction::remove(x, y, z);
        if (!check_action(world, r, rule)) out.push_back(r);
      }
    }
  }
  return out;
}

std::vector<BlockAction> net_change(const WorldState& before,
                                    const WorldState& after) {
  if (!(before.dims == after.dims)) {
    throw DataError("net_change: dimension mismatch");
  }
  std::vector<BlockAction> removals;
  std::vector<BlockAction> placements;
  // Both maps are ordered by (y, z, x); walk them together.
  auto bi = before.occupancy.begin();
  auto ai = after.occupancy.begin();
  while (bi != before.occupancy.end() || ai != after.occupancy.end()) {
    if (ai == after.occupancy.end() ||
        (bi != before.occupancy.end() && bi->first < ai->first)) {
      removals.push_back(
          BlockAction::remove(bi->first.x, bi->first.y, bi->first.z));
      ++bi;
    } else if (bi == before.occupancy.end() || ai->first < bi->first) {
      placements.push_back(BlockAction::place(ai->first.x, ai->first.y,
                                              ai->first.z, ai->second));
      ++ai;
    } else {
      if (bi->second != ai->second) {
        removals.push_back(
            BlockAction::remove(bi->first.x, bi->first.y, bi->first.z));
        placements.push_back(BlockAction::place(ai->first.x, ai->first.y,
                                                ai->first.z, ai->second));
      }
      ++bi;
      ++ai;
    }
  }
  std::vector<BlockAction> out;
  out.reserve(removals.size() + placements.size());
  out.insert(out.end(), removals.begin(), removals.end());
  out.insert(out.end(), placements.begin(), placements.end());
  return out;
}

std::string render_text(const WorldState& world) {
  std::ostringstream os;
  for (int y = 0; y < world.dims.sy; ++y) {
    os << "y=" << y << "\n";
    for (int z = 0; z < world.dims.sz; ++z) {
      for (int x = 0; x < world.dims.sx; ++x) {
        auto c = world.color_at(x, y, z);
        os << (c ? color_initial(*c) : '.');
      }
      os << "\n";
    }
  }
  return os.str();
}

std::vector<std::tuple<int, int, int, Color>> sorted_blocks(
    const WorldState& world) {
  std::vector<std::tuple<int, int, int, Color>> out;
  out.reserve(world.occupancy.size());
  for (const auto& [cell, color] : world.occupancy) {
    out.emplace_back(cell.x, cell.y, cell.z, color);
  }
  return out;
}

}  // namespace voxbuild
