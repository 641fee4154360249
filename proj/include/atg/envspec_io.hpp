#pragma once

// Plain-text EnvSpec documents: one `key: value` per line, lists in
// bracketed flow form. The text is valid YAML and is parsed as such.
//
//   name: Standard
//   cell_size: 1
//   walls: ["#####", "#...#", "#####"]
//   waypoints: [[3.5, 3], [3.5, 9]]
//   direction: clockwise            # or counterclockwise
//   first_waypoint: 1
//   target_speed: 0.25
//   zigzag_prob: 0.1
//   zigzag_amplitude: 0.2
//   capture_radius: 0.3
//   target_palette: 4
//   target_shape: rect              # rect | ellipse | diamond
//   floor_palette: 1
//   ceiling_palette: 2
//   wall_palette: 3
//   distractors: [[x, y, heading, palette, shape, visible], ...]
//   initial_target: [x, y, heading]
//   agent_start: [x, y, heading]
//   flip: false
//
// Wall rows are listed north first. Unknown keys are rejected.

#include <filesystem>
#include <string>
#include <string_view>

#include "atg/world.hpp"

namespace atg {

std::string spec_to_document(const EnvSpec& spec);
EnvSpec spec_from_document(std::string_view text);

EnvSpec load_spec(const std::filesystem::path& path);
void save_spec(const EnvSpec& spec, const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace atg
