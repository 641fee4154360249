#pragma once

// Egocentric tracking world: a wall grid, a target walking a waypoint loop,
// an agent driven by discrete actions, and the tracking reward.
//
// World frame: x east, y north, heading 0 faces +y, positive heading turns
// counterclockwise (to the left).

#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "atg/action.hpp"

namespace atg {

// Wraps into (-pi, pi].
double normalize_angle(double radians) noexcept;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  friend bool operator==(const Pose&, const Pose&) = default;
};

// Unit vector the pose faces, and the unit vector to its right.
Vec2 forward_of(double heading) noexcept;
Vec2 right_of(double heading) noexcept;

// Target pose expressed in the agent-centred frame: x to the agent's right,
// y ahead, a = relative heading.
struct LocalCoords {
  double x = 0.0;
  double y = 0.0;
  double a = 0.0;
  friend bool operator==(const LocalCoords&, const LocalCoords&) = default;
};

// Occupancy grid. Cell (i, j) spans [i*cs, (i+1)*cs) x [j*cs, (j+1)*cs).
// Everything outside the grid counts as wall.
class WallGrid {
 public:
  WallGrid() = default;
  WallGrid(int width, int height, double cell_size);

  // Rows as text, first row is the northmost (highest j). '#' wall, '.' free.
  static WallGrid from_rows(const std::vector<std::string>& rows,
                            double cell_size);
  std::vector<std::string> to_rows() const;

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  double cell_size() const noexcept { return cell_size_; }

  bool is_wall_cell(int i, int j) const noexcept;
  bool is_wall_at(double x, double y) const noexcept;
  void set_wall(int i, int j, bool wall);
  Vec2 cell_center(int i, int j) const noexcept;
  int cell_of(double coord) const noexcept;

  friend bool operator==(const WallGrid&, const WallGrid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 1.0;
  std::vector<std::uint8_t> cells_;
};

enum class Direction { Clockwise, Counterclockwise };
enum class SpriteShape { Rect, Ellipse, Diamond };

struct Distractor {
  Pose pose;
  int palette = 0;
  SpriteShape shape = SpriteShape::Rect;
  bool visible = true;
  friend bool operator==(const Distractor&, const Distractor&) = default;
};

struct EnvSpec {
  std::string name = "custom";
  WallGrid walls;
  // Listed in clockwise order; Counterclockwise walks them in reverse.
  std::vector<Vec2> waypoints;
  Direction direction = Direction::Clockwise;
  std::size_t first_waypoint = 0;
  double target_speed = 0.25;
  double zigzag_prob = 0.0;
  double zigzag_amplitude = 0.0;
  double capture_radius = 0.3;
  int target_palette = 4;
  SpriteShape target_shape = SpriteShape::Rect;
  int floor_palette = 1;
  int ceiling_palette = 2;
  int wall_palette = 3;
  std::vector<Distractor> distractors;
  Pose initial_target;
  Pose agent_start;
  bool flip = false;

  // Throws ValidationError naming the offending field.
  void validate() const;

  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

struct RewardParams {
  double A = 1.0;
  double c = 1.0;
  double d = 1.5;
  double lambda = 0.5;
  void validate() const;
};

struct Kinematics {
  double turn_step = std::numbers::pi / 12.0;
  double move_step = 0.3;
  void validate() const;
};

struct TerminationConfig {
  int max_length = 500;
  double threshold = -75.0;

  static TerminationConfig paper_scale() { return {3000, -450.0}; }
  void validate() const;
};

struct StepOutcome {
  double reward = 0.0;
  bool terminal = false;
  LocalCoords local;
};

// Mutable episode state. Owns its generator; copyable so callers can fork
// or replay an episode.
struct WorldState {
  std::shared_ptr<const EnvSpec> spec;
  Pose agent;
  Pose target;
  std::size_t waypoint_index = 0;
  int step_count = 0;
  double accumulated_reward = 0.0;
  bool terminal = false;
  std::mt19937_64 rng;
};

LocalCoords local_coords(const Pose& agent, const Pose& target) noexcept;

double reward(const LocalCoords& local, const RewardParams& p) noexcept;

// Moves the target one step along its path (with optional zig-zag jitter)
// and returns the new pose. Updates waypoint_index and consumes rng.
Pose advance_target(WorldState& state);

Pose apply_action(const Pose& agent, Action action, const Kinematics& kin,
                  const WallGrid& walls) noexcept;

bool is_terminal(const WorldState& state,
                 const TerminationConfig& term) noexcept;

// One environment transition. Flipped specs mirror the incoming action
// before applying it, so a flipped episode sees a mirrored world.
// Throws UsageError on a terminal state.
StepOutcome step(WorldState& state, Action action, const RewardParams& p,
                 const Kinematics& kin, const TerminationConfig& term);

WorldState spawn_episode(std::shared_ptr<const EnvSpec> spec,
                         std::uint64_t seed);
WorldState spawn_episode(const EnvSpec& spec, std::uint64_t seed);

std::string_view direction_name(Direction d) noexcept;
std::string_view shape_name(SpriteShape s) noexcept;

}  // namespace atg
