#pragma once

#include <optional>
#include <string>

#include "sifm/adam.hpp"
#include "sifm/config.hpp"
#include "sifm/model.hpp"

namespace sifm {

// Checkpoint file format "SIFM", version 1, little-endian:
//   bytes 0-3   magic ASCII "SIFM"
//   u32         version = 1
//   u32 n, n×u8 canonical model descriptor (config.hpp syntax)
//   u32         tensor count
//   per tensor  u16 name length, name bytes; u8 rank; rank×i64 dims;
//               u64 byte offset into the payload block
//   u64         payload byte length, then the payloads (f32, row-major),
//               laid out back to back in manifest order
//   u8          optimizer flag; if 1: i64 step count; f64 lr, beta1, beta2,
//               eps; u32 array count; per array u16 name length, name bytes,
//               u64 value count; then the arrays' f32 payloads in order
//
// Model weights train in f32, so a save → load round-trip is bitwise.
struct Checkpoint {
  ModelConfig config;
  GranularityMode mode = GranularityMode::multi;
  ModelParams<float> params;
  std::optional<AdamState<float>> opt;
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg, GranularityMode mode,
                     ModelParams<float>& params, const AdamState<float>* opt = nullptr);
// FormatError on malformed bytes; CheckpointError when the file parses but
// its manifest contradicts its own descriptor. Loaded parameters have
// requires_grad set.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sifm
