#include "sifm/rng.hpp"

#include <cmath>

#include "sifm/errors.hpp"

namespace sifm {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw RangeError("Rng::below(0)");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = gen_();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::truncated_normal(double stddev, double limit) {
  if (!(stddev > 0.0) || !(limit > 0.0)) {
    throw RangeError("truncated_normal: stddev and limit must be positive");
  }
  for (;;) {
    const double v = normal();
    if (std::abs(v) <= limit) return v * stddev;
  }
}

std::uint64_t Rng::derive(std::uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag, then splitmix64 finalization mixed with the seed.
  std::uint64_t h = 1469598103934665603ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

ParamInit param_init_class(std::string_view name) {
  const std::size_t us = name.rfind('_');
  if (us == std::string_view::npos) return ParamInit::random;
  const std::string_view suffix = name.substr(us + 1);
  if (suffix == "g") return ParamInit::ones;
  if (!suffix.empty() && suffix[0] == 'b') return ParamInit::zeros;
  return ParamInit::random;
}

}  // namespace sifm
