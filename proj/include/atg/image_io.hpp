#pragma once

#include <filesystem>
#include <span>

#include "atg/render.hpp"

namespace atg {

// Binary P6, max value 255, bytes from Frame::to_bytes().
void write_ppm(const Frame& frame, const std::filesystem::path& path);
Frame read_ppm(const std::filesystem::path& path);

// Binary P5 of a row-major map with values in [0, 1]; round(v * 255), ties up.
void write_pgm(std::span<const double> values, int width, int height,
               const std::filesystem::path& path);

}  // namespace atg
