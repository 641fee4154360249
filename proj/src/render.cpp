#include "atg/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atg/errors.hpp"

namespace atg {

std::vector<Rgb> default_palette() {
  return {
      {0, 0, 0},        // 0 black
      {92, 80, 64},     // 1 floor, brown
      {56, 60, 84},     // 2 ceiling, slate
      {150, 150, 150},  // 3 wall, grey
      {210, 40, 40},    // 4 target, red
      {225, 120, 30},   // 5 alternate target, orange
      {60, 140, 70},    // 6 alternate floor, green
      {120, 100, 150},  // 7 alternate ceiling, violet
      {110, 90, 60},    // 8 interior wall, dark tan
      {200, 200, 80},   // 9 yellow
  };
}

void RenderConfig::validate() const {
  if (!(fov > 0.0 && fov < std::numbers::pi))
    throw ValidationError("render.fov", "must lie in (0, pi)");
  if (columns <= 0 || rows <= 0)
    throw ValidationError("render.size", "columns and rows must be positive");
  if (!(max_view_distance > 0.0))
    throw ValidationError("render.max_view_distance", "must be positive");
  if (!(sprite_width > 0.0) || !(sprite_height > 0.0))
    throw ValidationError("render.sprite_size", "must be positive");
  if (!(eye_height > 0.0) || !(wall_height > 0.0))
    throw ValidationError("render.eye_height", "must be positive");
  if (palette.empty()) throw ValidationError("render.palette", "empty palette");
}

Rgb RenderConfig::color(int palette_id) const {
  if (palette_id < 0 || static_cast<std::size_t>(palette_id) >= palette.size())
    throw ValidationError("palette", "unknown palette id " + std::to_string(palette_id));
  return palette[static_cast<std::size_t>(palette_id)];
}

void Frame::set_pixel(int row, int col, Rgb c) noexcept {
  float* p = &at(row, col, 0);
  p[0] = static_cast<float>(c.r) / 255.0f;
  p[1] = static_cast<float>(c.g) / 255.0f;
  p[2] = static_cast<float>(c.b) / 255.0f;
}

std::vector<std::uint8_t> Frame::to_bytes() const {
  std::vector<std::uint8_t> out(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = std::clamp(static_cast<double>(data_[i]), 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
  }
  return out;
}

double bearing_to_column(double bearing, const RenderConfig& cfg) noexcept {
  return (0.5 + bearing / cfg.fov) * cfg.columns;
}

namespace {

constexpr double kNearClip = 0.05;

struct Sprite {
  LocalCoords local;
  int palette;
  SpriteShape shape;
  std::uint8_t id;
};

struct Layers {
  Frame frame;
  std::vector<std::uint8_t> ids;
};

double column_angle(int j, const RenderConfig& cfg) {
  return ((j + 0.5) / cfg.columns - 0.5) * cfg.fov;
}

// Distance along a unit ray to the first wall cell, or +inf past the grid
// bounds check budget.
double cast_ray(const WallGrid& walls, double ox, double oy, double dx, double dy) {
  const double cs = walls.cell_size();
  const double px = ox / cs;
  const double py = oy / cs;
  int mx = static_cast<int>(std::floor(px));
  int my = static_cast<int>(std::floor(py));
  if (walls.is_wall_cell(mx, my)) return 0.0;

  const double inf = std::numeric_limits<double>::infinity();
  const double delta_x = dx == 0.0 ? inf : std::abs(1.0 / dx);
  const double delta_y = dy == 0.0 ? inf : std::abs(1.0 / dy);
  const int step_x = dx < 0.0 ? -1 : 1;
  const int step_y = dy < 0.0 ? -1 : 1;
  double side_x = dx < 0.0 ? (px - mx) * delta_x : (mx + 1.0 - px) * delta_x;
  double side_y = dy < 0.0 ? (py - my) * delta_y : (my + 1.0 - py) * delta_y;
  if (dx == 0.0) side_x = inf;
  if (dy == 0.0) side_y = inf;

  const int budget = walls.width() + walls.height() + 4;
  for (int n = 0; n < budget; ++n) {
    double t;
    if (side_x < side_y) {
      t = side_x;
      side_x += delta_x;
      mx += step_x;
    } else {
      t = side_y;
      side_y += delta_y;
      my += step_y;
    }
    if (walls.is_wall_cell(mx, my)) return t * cs;
  }
  return inf;
}

bool inside_shape(SpriteShape shape, double u, double v) {
  const double du = u - 0.5;
  const double dv = v - 0.5;
  switch (shape) {
    case SpriteShape::Rect: return true;
    case SpriteShape::Ellipse: return du * du + dv * dv <= 0.25;
    case SpriteShape::Diamond: return std::abs(du) + std::abs(dv) <= 0.5;
  }
  return true;
}

Layers rasterize(const WorldState& state, const RenderConfig& cfg) {
  const EnvSpec& spec = *state.spec;
  const int W = cfg.columns;
  const int H = cfg.rows;
  const double half = H / 2.0;
  const double focal = half / std::tan(cfg.fov / 2.0);

  Layers out{Frame(W, H), std::vector<std::uint8_t>(static_cast<std::size_t>(W) * H, 0)};
  Frame& f = out.frame;

  const Rgb ceiling = cfg.color(spec.ceiling_palette);
  const Rgb floor = cfg.color(spec.floor_palette);
  const Rgb wall = cfg.color(spec.wall_palette);
  const Rgb fog{0, 0, 0};

  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) f.set_pixel(r, c, r + 0.5 < half ? ceiling : floor);

  const Pose& eye = state.agent;
  const Vec2 fw = forward_of(eye.heading);
  const Vec2 rt = right_of(eye.heading);

  std::vector<double> zbuf(static_cast<std::size_t>(W));
  for (int j = 0; j < W; ++j) {
    const double theta = column_angle(j, cfg);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    const double dx = fw.x * ct + rt.x * st;
    const double dy = fw.y * ct + rt.y * st;
    const double dist = cast_ray(spec.walls, eye.x, eye.y, dx, dy);
    const double perp = std::max(dist * ct, 1e-6);
    zbuf[static_cast<std::size_t>(j)] = perp;
    if (!std::isfinite(dist)) continue;
    const Rgb color = dist > cfg.max_view_distance ? fog : wall;
    const double top = half - focal * (cfg.wall_height - cfg.eye_height) / perp;
    const double bottom = half + focal * cfg.eye_height / perp;
    for (int r = 0; r < H; ++r) {
      const double rc = r + 0.5;
      if (rc >= top && rc < bottom) f.set_pixel(r, j, color);
    }
  }

  std::vector<Sprite> sprites;
  sprites.push_back({local_coords(eye, state.target), spec.target_palette, spec.target_shape, 1});
  for (std::size_t k = 0; k < spec.distractors.size(); ++k) {
    const Distractor& d = spec.distractors[k];
    if (!d.visible) continue;
    sprites.push_back({local_coords(eye, d.pose), d.palette, d.shape,
                       static_cast<std::uint8_t>(std::min<std::size_t>(2 + k, 255))});
  }
  // Painter's order, far to near; ties broken by id for determinism.
  std::sort(sprites.begin(), sprites.end(), [](const Sprite& a, const Sprite& b) {
    if (a.local.y != b.local.y) return a.local.y > b.local.y;
    return a.id > b.id;
  });

  const double sw = cfg.sprite_width;
  for (const Sprite& s : sprites) {
    const double depth = s.local.y;
    if (depth <= kNearClip || depth > cfg.max_view_distance) continue;
    const double left = s.local.x - sw / 2.0;
    const double theta_l = std::atan2(left, depth);
    const double theta_r = std::atan2(s.local.x + sw / 2.0, depth);
    const double top = half - focal * (cfg.sprite_height - cfg.eye_height) / depth;
    const double bottom = half + focal * cfg.eye_height / depth;
    const Rgb color = cfg.color(s.palette);
    for (int j = 0; j < W; ++j) {
      const double theta = column_angle(j, cfg);
      if (theta < theta_l || theta > theta_r) continue;
      if (depth >= zbuf[static_cast<std::size_t>(j)]) continue;
      const double u = (depth * std::tan(theta) - left) / sw;
      for (int r = 0; r < H; ++r) {
        const double rc = r + 0.5;
        if (rc < top || rc >= bottom) continue;
        const double v = (rc - top) / (bottom - top);
        if (!inside_shape(s.shape, u, v)) continue;
        f.set_pixel(r, j, color);
        out.ids[static_cast<std::size_t>(r) * W + j] = s.id;
      }
    }
  }

  if (spec.flip) {
    f = flip_frame(f);
    for (int r = 0; r < H; ++r) {
      auto row = out.ids.begin() + static_cast<std::ptrdiff_t>(r) * W;
      std::reverse(row, row + W);
    }
  }
  return out;
}

}  // namespace

Frame render_frame(const WorldState& state, const RenderConfig& cfg) {
  return rasterize(state, cfg).frame;
}

std::vector<std::uint8_t> render_ids(const WorldState& state, const RenderConfig& cfg) {
  return rasterize(state, cfg).ids;
}

std::optional<BBox> ground_truth_bbox(const WorldState& state, const RenderConfig& cfg) {
  const std::vector<std::uint8_t> ids = render_ids(state, cfg);
  const int W = cfg.columns;
  const int H = cfg.rows;
  int c0 = W, c1 = -1, r0 = H, r1 = -1;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (ids[static_cast<std::size_t>(r) * W + c] != 1) continue;
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
    }
  }
  if (c1 < 0) return std::nullopt;
  BBox b;
  b.x = (c0 + c1 + 1) / 2.0;
  b.y = (r0 + r1 + 1) / 2.0;
  b.w = c1 - c0 + 1;
  b.h = r1 - r0 + 1;
  return b;
}

Frame flip_frame(const Frame& f) {
  Frame out(f.width(), f.height());
  const int W = f.width();
  for (int r = 0; r < f.height(); ++r)
    for (int c = 0; c < W; ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, W - 1 - c, ch) = f.at(r, c, ch);
  return out;
}

}  // namespace atg
