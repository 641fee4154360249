#pragma once

// First-person column raycaster over the wall grid, with billboard sprites
// for the target and distractors.
//
// Projection is equiangular horizontally: column c = (0.5 + angle/fov) * W,
// angle measured to the right of the view direction. Vertical extents use
// the perpendicular depth with focal length (H/2) / tan(fov/2).

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "atg/world.hpp"

namespace atg {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Default palette table, indexed by the palette ids used in EnvSpec.
std::vector<Rgb> default_palette();

struct RenderConfig {
  double fov = std::numbers::pi / 2.0;
  int columns = 84;
  int rows = 84;
  double max_view_distance = 20.0;
  double sprite_width = 0.52;
  double sprite_height = 2.0;
  double eye_height = 1.0;
  double wall_height = 2.0;
  std::vector<Rgb> palette = default_palette();

  void validate() const;
  Rgb color(int palette_id) const;
};

// H x W x 3, row-major, channel-interleaved, values in [0, 1].
class Frame {
 public:
  Frame() : Frame(84, 84) {}
  Frame(int width, int height)
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, 0.0f) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  static constexpr int channels() noexcept { return 3; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  float& at(int row, int col, int ch) noexcept {
    return data_[(static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                  static_cast<std::size_t>(col)) * 3 + static_cast<std::size_t>(ch)];
  }
  float at(int row, int col, int ch) const noexcept {
    return data_[(static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                  static_cast<std::size_t>(col)) * 3 + static_cast<std::size_t>(ch)];
  }
  void set_pixel(int row, int col, Rgb c) noexcept;

  // round(v * 255), ties up.
  std::vector<std::uint8_t> to_bytes() const;

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  int width_;
  int height_;
  std::vector<float> data_;
};

// Box centre and size in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double area() const noexcept { return w * h; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

Frame render_frame(const WorldState& state, const RenderConfig& cfg);

// Tight box around the visible target pixels; nullopt when nothing of the
// target is on screen.
std::optional<BBox> ground_truth_bbox(const WorldState& state, const RenderConfig& cfg);

// Per-pixel owner ids: 0 background, 1 target, 2 + k distractor k.
// Mirrored when the spec is flipped, like the frame.
std::vector<std::uint8_t> render_ids(const WorldState& state, const RenderConfig& cfg);

Frame flip_frame(const Frame& f);

// Column of a bearing (radians, positive to the right) under the
// equiangular projection.
double bearing_to_column(double bearing, const RenderConfig& cfg) noexcept;

}  // namespace atg
