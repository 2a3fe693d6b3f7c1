#ifndef VOXBUILD_WORLD_HPP_
#define VOXBUILD_WORLD_HPP_

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace voxbuild {

enum class Color : std::uint8_t { Red, Orange, Yellow, Green, Blue, Purple };

inline constexpr int kNumColors = 6;

const char* color_name(Color c);           // "red", "orange", ...
char color_initial(Color c);                // 'R', 'O', ...
std::optional<Color> parse_color(const std::string& name);

enum class ActionKind : std::uint8_t { Place, Remove };

// One grounded block edit. Color is meaningful only for Place.
struct BlockAction {
  ActionKind kind = ActionKind::Place;
  int x = 0;
  int y = 0;
  int z = 0;
  Color color = Color::Red;

  static BlockAction place(int x, int y, int z, Color c) {
    return BlockAction{ActionKind::Place, x, y, z, c};
  }
  static BlockAction remove(int x, int y, int z) {
    return BlockAction{ActionKind::Remove, x, y, z, Color::Red};
  }

  // Identity for set semantics: kind, cell, and (for Place) color.
  friend auto operator<=>(const BlockAction& a, const BlockAction& b) {
    auto ka = std::tuple(a.y, a.z, a.x, a.kind,
                         a.kind == ActionKind::Place ? a.color : Color::Red);
    auto kb = std::tuple(b.y, b.z, b.x, b.kind,
                         b.kind == ActionKind::Place ? b.color : Color::Red);
    return ka <=> kb;
  }
  friend bool operator==(const BlockAction& a, const BlockAction& b) {
    return (a <=> b) == std::strong_ordering::equal;
  }
};

std::string action_to_string(const BlockAction& a);

struct GridDims {
  int sx = 11;
  int sy = 9;
  int sz = 11;

  bool valid() const { return sx >= 1 && sy >= 1 && sz >= 1; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(sx) * sy * sz;
  }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

enum class FeasibilityRule : std::uint8_t {
  Unrestricted,  // any in-bounds empty cell accepts a block
  Grounded,      // placement needs y=0 or a face-adjacent occupied cell
};

struct Cell {
  int x = 0;
  int y = 0;
  int z = 0;
  friend auto operator<=>(const Cell& a, const Cell& b) {
    return std::tuple(a.y, a.z, a.x) <=> std::tuple(b.y, b.z, b.x);
  }
  friend bool operator==(const Cell&, const Cell&) = default;
};

// Sparse voxel occupancy. Value semantics: apply() returns a new state.
struct WorldState {
  GridDims dims;
  std::map<Cell, Color> occupancy;

  WorldState() = default;
  explicit WorldState(GridDims d) : dims(d) {}

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims.sx && y >= 0 && y < dims.sy && z >= 0 &&
           z < dims.sz;
  }
  std::optional<Color> color_at(int x, int y, int z) const {
    auto it = occupancy.find(Cell{x, y, z});
    if (it == occupancy.end()) return std::nullopt;
    return it->second;
  }
  std::size_t block_count() const { return occupancy.size(); }

  friend bool operator==(const WorldState& a, const WorldState& b) {
    return a.dims == b.dims && a.occupancy == b.occupancy;
  }
};

enum class ApplyError : std::uint8_t {
  OutOfBounds,
  PlaceOnOccupied,
  RemoveFromEmpty,
  UngroundedPlacement,
};

const char* apply_error_message(ApplyError e);

// Non-throwing feasibility check; apply() accepts exactly the actions for
// which this returns nullopt.
std::optional<ApplyError> check_action(const WorldState& world,
                                       const BlockAction& action,
                                       FeasibilityRule rule);

// Returns the updated state; throws DataError when the action is infeasible.
WorldState apply(const WorldState& world, const BlockAction& action,
                 FeasibilityRule rule);

// All actions accepted by apply() on this state, in canonical enumeration
// order: cells sorted (y, z, x), then Place Red..Purple, then Remove.
std::vector<BlockAction> feasible_actions(const WorldState& world,
                                          FeasibilityRule rule);

// Per-cell diff expressed as actions: removals first, then placements,
// each group sorted (y, z, x). Replaying the result on `before` under the
// Unrestricted rule reproduces `after`.
std::vector<BlockAction> net_change(const WorldState& before,
                                    const WorldState& after);

// One y-layer per block of lines; '.' for empty cells, color initials
// otherwise. Deterministic.
std::string render_text(const WorldState& world);

// Sorted [x, y, z, color] block list (sort key y, z, x) used inside episode
// records and run reports.
std::vector<std::tuple<int, int, int, Color>> sorted_blocks(
    const WorldState& world);

}  // namespace voxbuild

#endif  // VOXBUILD_WORLD_HPP_
