#pragma once

#include <string>

#include "sifm/grid.hpp"

namespace sifm {

// SICG grid file format, version 1. Little-endian throughout:
//   bytes 0-3  magic ASCII "SICG"
//   u32        version = 1
//   u32        T (frames), u32 H, u32 W
//   u8         has_mask
//   [H·W u8]   mask, row-major (present iff has_mask)
//   i64        t0
//   T·H·W f32  values, row-major, frame-major
// Values are stored as f32; in-memory grids quantized through f32 (as the
// synthetic generator produces) round-trip bitwise.
void save_grid_file(const SicSeries& series, const std::string& path);
SicSeries load_grid_file(const std::string& path);

}  // namespace sifm
