#include "atg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "atg/errors.hpp"

namespace atg {

void write_ppm(const Frame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  const std::vector<std::uint8_t> bytes = frame.to_bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw IoError(path.string() + ": not an 8-bit binary PPM");
  in.get();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError(path.string() + ": truncated pixel data");
  Frame f(w, h);
  auto data = f.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = static_cast<float>(bytes[i]) / 255.0f;
  return f;
}

void write_pgm(std::span<const double> values, int width, int height,
               const std::filesystem::path& path) {
  if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw UsageError("write_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<std::uint8_t> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::floor(std::clamp(values[i], 0.0, 1.0) * 255.0 + 0.5));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace atg
