#include "atg/world.hpp"

#include <algorithm>
#include <cmath>

#include "atg/errors.hpp"

namespace atg {

namespace {

constexpr double kPi = std::numbers::pi;

bool finite_pose(const Pose& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.heading);
}

std::size_t next_waypoint(const EnvSpec& spec, std::size_t k) {
  const std::size_t n = spec.waypoints.size();
  return spec.direction == Direction::Clockwise ? (k + 1) % n : (k + n - 1) % n;
}

}  // namespace

double normalize_angle(double radians) noexcept {
  double r = std::remainder(radians, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  if (r > kPi) r -= 2.0 * kPi;
  return r;
}

Vec2 forward_of(double heading) noexcept {
  return {-std::sin(heading), std::cos(heading)};
}

Vec2 right_of(double heading) noexcept {
  return {std::cos(heading), std::sin(heading)};
}

std::string_view action_name(Action a) noexcept {
  switch (a) {
    case Action::TurnLeft: return "turn-left";
    case Action::TurnRight: return "turn-right";
    case Action::TurnLeftMove: return "turn-left-and-move-forward";
    case Action::TurnRightMove: return "turn-right-and-move-forward";
    case Action::MoveForward: return "move-forward";
    case Action::NoOp: return "no-op";
  }
  return "no-op";
}

std::optional<Action> parse_action(std::string_view name) noexcept {
  for (Action a : kAllActions) {
    if (action_name(a) == name) return a;
  }
  return std::nullopt;
}

std::string_view direction_name(Direction d) noexcept {
  return d == Direction::Clockwise ? "clockwise" : "counterclockwise";
}

std::string_view shape_name(SpriteShape s) noexcept {
  switch (s) {
    case SpriteShape::Rect: return "rect";
    case SpriteShape::Ellipse: return "ellipse";
    case SpriteShape::Diamond: return "diamond";
  }
  return "rect";
}

// ---------------------------------------------------------------- WallGrid

WallGrid::WallGrid(int width, int height, double cell_size)
    : width_(width), height_(height), cell_size_(cell_size) {
  if (width < 0 || height < 0) throw ValidationError("walls", "negative grid size");
  cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

WallGrid WallGrid::from_rows(const std::vector<std::string>& rows,
                             double cell_size) {
  if (rows.empty()) throw ValidationError("walls", "no rows");
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.front().size());
  WallGrid grid(w, h, cell_size);
  for (int r = 0; r < h; ++r) {
    const std::string& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<int>(row.size()) != w)
      throw ValidationError("walls", "ragged row " + std::to_string(r));
    const int j = h - 1 - r;
    for (int i = 0; i < w; ++i) {
      const char ch = row[static_cast<std::size_t>(i)];
      if (ch != '#' && ch != '.')
        throw ValidationError("walls", std::string("unexpected cell character '") + ch + "'");
      grid.set_wall(i, j, ch == '#');
    }
  }
  return grid;
}

std::vector<std::string> WallGrid::to_rows() const {
  std::vector<std::string> rows;
  rows.reserve(static_cast<std::size_t>(height_));
  for (int j = height_ - 1; j >= 0; --j) {
    std::string row(static_cast<std::size_t>(width_), '.');
    for (int i = 0; i < width_; ++i)
      if (is_wall_cell(i, j)) row[static_cast<std::size_t>(i)] = '#';
    rows.push_back(std::move(row));
  }
  return rows;
}

bool WallGrid::is_wall_cell(int i, int j) const noexcept {
  if (i < 0 || j < 0 || i >= width_ || j >= height_) return true;
  return cells_[static_cast<std::size_t>(j) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(i)] != 0;
}

int WallGrid::cell_of(double coord) const noexcept {
  return static_cast<int>(std::floor(coord / cell_size_));
}

bool WallGrid::is_wall_at(double x, double y) const noexcept {
  if (!std::isfinite(x) || !std::isfinite(y)) return true;
  return is_wall_cell(cell_of(x), cell_of(y));
}

void WallGrid::set_wall(int i, int j, bool wall) {
  if (i < 0 || j < 0 || i >= width_ || j >= height_)
    throw ValidationError("walls", "cell index out of range");
  cells_[static_cast<std::size_t>(j) * static_cast<std::size_t>(width_) +
         static_cast<std::size_t>(i)] = wall ? 1 : 0;
}

Vec2 WallGrid::cell_center(int i, int j) const noexcept {
  return {(i + 0.5) * cell_size_, (j + 0.5) * cell_size_};
}

// ------------------------------------------------------------- validation

void EnvSpec::validate() const {
  if (!(walls.cell_size() > 0.0) || !std::isfinite(walls.cell_size()))
    throw ValidationError("cell_size", "must be positive");
  if (walls.width() <= 0 || walls.height() <= 0)
    throw ValidationError("walls", "grid is empty");
  if (waypoints.size() < 2)
    throw ValidationError("waypoints", "need at least 2 waypoints, got " +
                                           std::to_string(waypoints.size()));
  for (const Vec2& w : waypoints)
    if (!std::isfinite(w.x) || !std::isfinite(w.y))
      throw ValidationError("waypoints", "non-finite coordinate");
  if (first_waypoint >= waypoints.size())
    throw ValidationError("first_waypoint", "index out of range");
  if (!(target_speed > 0.0) || !std::isfinite(target_speed))
    throw ValidationError("target_speed", "must be positive");
  if (!(capture_radius > 0.0) || !std::isfinite(capture_radius))
    throw ValidationError("capture_radius", "must be positive");
  if (!(zigzag_prob >= 0.0 && zigzag_prob <= 1.0))
    throw ValidationError("zigzag_prob", "must lie in [0, 1]");
  if (!(zigzag_amplitude >= 0.0) || !std::isfinite(zigzag_amplitude))
    throw ValidationError("zigzag_amplitude", "must be non-negative");
  for (int palette : {target_palette, floor_palette, ceiling_palette, wall_palette})
    if (palette < 0) throw ValidationError("palette", "negative palette id");
  if (!finite_pose(initial_target))
    throw ValidationError("initial_target", "non-finite pose");
  if (walls.is_wall_at(initial_target.x, initial_target.y))
    throw ValidationError("initial_target", "lies inside a wall cell");
  if (!finite_pose(agent_start))
    throw ValidationError("agent_start", "non-finite pose");
  if (walls.is_wall_at(agent_start.x, agent_start.y))
    throw ValidationError("agent_start", "lies inside a wall cell");
  for (const Distractor& d : distractors) {
    if (!finite_pose(d.pose)) throw ValidationError("distractors", "non-finite pose");
    if (d.palette < 0) throw ValidationError("distractors", "negative palette id");
  }
}

void RewardParams::validate() const {
  if (!(A > 0.0)) throw ValidationError("reward.A", "must be positive");
  if (!(c > 0.0)) throw ValidationError("reward.c", "must be positive");
  if (!(d > 0.0)) throw ValidationError("reward.d", "must be positive");
  if (!(lambda > 0.0)) throw ValidationError("reward.lambda", "must be positive");
}

void Kinematics::validate() const {
  if (!(turn_step > 0.0 && turn_step <= kPi / 2.0))
    throw ValidationError("kinematics.turn_step", "must lie in (0, pi/2]");
  if (!(move_step > 0.0)) throw ValidationError("kinematics.move_step", "must be positive");
}

void TerminationConfig::validate() const {
  if (max_length < 1) throw ValidationError("termination.max_length", "must be >= 1");
  if (!std::isfinite(threshold))
    throw ValidationError("termination.threshold", "must be finite");
}

// ------------------------------------------------------------- operations

LocalCoords local_coords(const Pose& agent, const Pose& target) noexcept {
  const double dx = target.x - agent.x;
  const double dy = target.y - agent.y;
  const Vec2 r = right_of(agent.heading);
  const Vec2 f = forward_of(agent.heading);
  return {dx * r.x + dy * r.y, dx * f.x + dy * f.y,
          normalize_angle(target.heading - agent.heading)};
}

double reward(const LocalCoords& local, const RewardParams& p) noexcept {
  return p.A - (std::hypot(local.x, local.y - p.d) / p.c + p.lambda * std::abs(local.a));
}

Pose advance_target(WorldState& state) {
  const EnvSpec& spec = *state.spec;
  Pose& t = state.target;

  for (std::size_t guard = 0; guard < spec.waypoints.size(); ++guard) {
    const Vec2& w = spec.waypoints[state.waypoint_index];
    if (std::hypot(w.x - t.x, w.y - t.y) > spec.capture_radius) break;
    state.waypoint_index = next_waypoint(spec, state.waypoint_index);
  }

  const Vec2& goal = spec.waypoints[state.waypoint_index];
  const double gx = goal.x - t.x;
  const double gy = goal.y - t.y;
  const double dist = std::hypot(gx, gy);
  Vec2 dir{0.0, 0.0};
  if (dist > 0.0) dir = {gx / dist, gy / dist};
  const double len = std::min(spec.target_speed, dist);
  Vec2 disp{dir.x * len, dir.y * len};

  if (spec.zigzag_prob > 0.0 && dist > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(state.rng) < spec.zigzag_prob) {
      const double sign = unit(state.rng) < 0.5 ? -1.0 : 1.0;
      // (dir.y, -dir.x) points to the right of the walking direction.
      const Vec2 jittered{disp.x + sign * spec.zigzag_amplitude * dir.y,
                          disp.y - sign * spec.zigzag_amplitude * dir.x};
      if (!spec.walls.is_wall_at(t.x + jittered.x, t.y + jittered.y)) disp = jittered;
    }
  }

  if (spec.walls.is_wall_at(t.x + disp.x, t.y + disp.y)) disp = {0.0, 0.0};
  t.x += disp.x;
  t.y += disp.y;
  if (disp.x != 0.0 || disp.y != 0.0) t.heading = normalize_angle(std::atan2(-disp.x, disp.y));
  return t;
}

Pose apply_action(const Pose& agent, Action action, const Kinematics& kin,
                  const WallGrid& walls) noexcept {
  Pose p = agent;
  if (action_turns_left(action)) p.heading = normalize_angle(p.heading + kin.turn_step);
  if (action_turns_right(action)) p.heading = normalize_angle(p.heading - kin.turn_step);
  if (action_moves(action)) {
    const Vec2 f = forward_of(p.heading);
    const double nx = p.x + f.x * kin.move_step;
    const double ny = p.y + f.y * kin.move_step;
    if (!walls.is_wall_at(nx, ny)) {
      p.x = nx;
      p.y = ny;
    }
  }
  return p;
}

bool is_terminal(const WorldState& state, const TerminationConfig& term) noexcept {
  return state.accumulated_reward < term.threshold || state.step_count >= term.max_length;
}

StepOutcome step(WorldState& state, Action action, const RewardParams& p,
                 const Kinematics& kin, const TerminationConfig& term) {
  if (!state.spec) throw UsageError("step: world state has no spec");
  if (state.terminal || is_terminal(state, term))
    throw UsageError("step: episode already terminal");
  const EnvSpec& spec = *state.spec;
  const Action applied = spec.flip ? flip_action(action) : action;
  state.agent = apply_action(state.agent, applied, kin, spec.walls);
  advance_target(state);

  StepOutcome out;
  out.local = local_coords(state.agent, state.target);
  out.reward = reward(out.local, p);
  state.step_count += 1;
  state.accumulated_reward += out.reward;
  state.terminal = is_terminal(state, term);
  out.terminal = state.terminal;
  return out;
}

WorldState spawn_episode(std::shared_ptr<const EnvSpec> spec, std::uint64_t seed) {
  if (!spec) throw UsageError("spawn_episode: null spec");
  spec->validate();
  WorldState s;
  s.agent = spec->agent_start;
  s.agent.heading = normalize_angle(s.agent.heading);
  s.target = spec->initial_target;
  s.target.heading = normalize_angle(s.target.heading);
  s.waypoint_index = spec->first_waypoint;
  s.rng.seed(seed);
  s.spec = std::move(spec);
  return s;
}

WorldState spawn_episode(const EnvSpec& spec, std::uint64_t seed) {
  return spawn_episode(std::make_shared<const EnvSpec>(spec), seed);
}

}  // namespace atg
