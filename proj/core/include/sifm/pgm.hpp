#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "sifm/grid.hpp"

namespace sifm {

// Residual (pred − truth) to 8-bit gray: 0 → 128, ±0.5 → 255/0, clipped.
std::uint8_t residual_pixel(double residual);

// Binary (P5) portable graymap, maxval 255.
void write_pgm(const std::string& path, std::int64_t height, std::int64_t width,
               std::span<const std::uint8_t> pixels);

// Convenience: residual map image for one grid of residual values.
void write_residual_pgm(const std::string& path, const SicGrid& residual);

}  // namespace sifm
