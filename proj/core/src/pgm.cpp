#include "sifm/pgm.hpp"

#include <cmath>
#include <fstream>

namespace sifm {

std::uint8_t residual_pixel(double residual) {
  const double px = std::round(128.0 + 256.0 * residual);
  if (px < 0.0) return 0;
  if (px > 255.0) return 255;
  return static_cast<std::uint8_t>(px);
}

void write_pgm(const std::string& path, std::int64_t height, std::int64_t width,
               std::span<const std::uint8_t> pixels) {
  if (height <= 0 || width <= 0 ||
      static_cast<std::int64_t>(pixels.size()) != height * width) {
    throw DimensionError("write_pgm: " + std::to_string(pixels.size()) + " pixels for " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  out.flush();
  if (!out) throw FormatError("write failed for '" + path + "'");
}

void write_residual_pgm(const std::string& path, const SicGrid& residual) {
  std::vector<std::uint8_t> px(residual.values.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = residual_pixel(residual.values[i]);
  write_pgm(path, residual.height, residual.width, px);
}

}  // namespace sifm
