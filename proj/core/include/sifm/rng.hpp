#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sifm {

// Deterministic random source. The raw stream is std::mt19937_64 (which the
// standard pins bit-for-bit); the real-valued transforms are written out
// here rather than taken from <random>'s distributions, whose outputs are
// implementation-defined and would break cross-toolchain reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) by rejection (unbiased). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  // Normal(0, stddev) resampled until within limit*stddev of zero.
  double truncated_normal(double stddev, double limit = 2.0);

  // Stable sub-seed derivation so independent consumers (data synthesis,
  // init, batch shuffling) get decorrelated streams from one user seed.
  static std::uint64_t derive(std::uint64_t seed, std::string_view tag);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Shared parameter-init rule keyed on the segment after the last underscore
// of a parameter name: "g" → ones (LN gains), "b…" → zeros (biases), all
// else → truncated normal(0.02) drawn in for_each order.
enum class ParamInit { ones, zeros, random };
ParamInit param_init_class(std::string_view name);

}  // namespace sifm
