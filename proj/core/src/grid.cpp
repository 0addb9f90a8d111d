#include "sifm/grid.hpp"

#include <cmath>
#include <string>

#include "sifm/rng.hpp"

namespace sifm {

const char* granularity_name(Granularity g) {
  switch (g) {
    case Granularity::daily: return "daily";
    case Granularity::weekly: return "weekly";
    case Granularity::monthly: return "monthly";
  }
  throw RangeError("bad granularity");
}

Granularity granularity_from_name(const std::string& name) {
  for (Granularity g : kGranularities) {
    if (name == granularity_name(g)) return g;
  }
  throw ConfigError("unknown granularity '" + name + "' (daily|weekly|monthly)");
}

int granularity_len(Granularity g) {
  switch (g) {
    case Granularity::daily: return kDailyLen;
    case Granularity::weekly: return kWeeklyLen;
    case Granularity::monthly: return kMonthlyLen;
  }
  throw RangeError("bad granularity");
}

std::int64_t granularity_days(Granularity g) {
  switch (g) {
    case Granularity::daily: return 1;
    case Granularity::weekly: return kWeekDays;
    case Granularity::monthly: return kMonthDays;
  }
  throw RangeError("bad granularity");
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// ----------------------------------------------------------------- SicGrid

SicGrid::SicGrid(std::int64_t h, std::int64_t w) : height(h), width(w) {
  if (h <= 0 || w <= 0) {
    throw DimensionError("SicGrid: non-positive dims " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  values.assign(static_cast<std::size_t>(h * w), 0.0);
}

void SicGrid::validate() const {
  if (height <= 0 || width <= 0) {
    throw DimensionError("SicGrid: non-positive dims " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  if (static_cast<std::int64_t>(values.size()) != height * width) {
    throw DimensionError("SicGrid: " + std::to_string(values.size()) + " values for " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("SicGrid: concentration " + std::to_string(v) + " outside [0,1]");
    }
  }
}

// --------------------------------------------------------------- SicSeries

std::int64_t SicSeries::height() const {
  if (frames.empty()) throw ContractError("SicSeries: empty");
  return frames[0].height;
}

std::int64_t SicSeries::width() const {
  if (frames.empty()) throw ContractError("SicSeries: empty");
  return frames[0].width;
}

bool SicSeries::covers(std::int64_t first_day, std::int64_t last_day) const {
  return !frames.empty() && t0 <= first_day && last_day <= t0 + num_days() - 1;
}

const SicGrid& SicSeries::frame_at_day(std::int64_t t) const {
  if (!covers(t, t)) {
    throw RangeError("day " + std::to_string(t) + " outside series [" + std::to_string(t0) +
                     ", " + std::to_string(t0 + num_days() - 1) + "]");
  }
  return frames[static_cast<std::size_t>(t - t0)];
}

void SicSeries::validate() const {
  if (frames.empty()) throw DimensionError("SicSeries: no frames");
  const std::int64_t h = frames[0].height, w = frames[0].width;
  for (const SicGrid& f : frames) {
    f.validate();
    if (f.height != h || f.width != w) {
      throw DimensionError("SicSeries: frame dims " + std::to_string(f.height) + "x" +
                           std::to_string(f.width) + " differ from " + std::to_string(h) + "x" +
                           std::to_string(w));
    }
  }
  if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != h * w) {
    throw DimensionError("SicSeries: mask size " + std::to_string(mask.size()) + " for " +
                         std::to_string(h) + "x" + std::to_string(w) + " grid");
  }
  for (std::uint8_t m : mask) {
    if (m > 1) throw DomainError("SicSeries: mask value " + std::to_string(m) + " not 0/1");
  }
}

// ------------------------------------------------------------- aggregation

namespace {

std::vector<SicGrid> aggregate_blocks(const SicSeries& series, std::int64_t end_t, int count,
                                      std::int64_t block_days, const char* what) {
  if (count <= 0) throw RangeError(std::string(what) + ": count must be positive");
  const std::int64_t first = end_t - count * block_days + 1;
  if (!series.covers(first, end_t)) {
    throw RangeError(std::string(what) + ": needs days [" + std::to_string(first) + ", " +
                     std::to_string(end_t) + "], series has [" + std::to_string(series.t0) +
                     ", " + std::to_string(series.t0 + series.num_days() - 1) + "]");
  }
  const std::int64_t h = series.height(), w = series.width();
  const std::size_t n = static_cast<std::size_t>(h * w);
  std::vector<SicGrid> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const std::int64_t block_first = first + k * block_days;
    SicGrid g(h, w);
    for (std::int64_t d = 0; d < block_days; ++d) {
      const SicGrid& f = series.frame_at_day(block_first + d);
      for (std::size_t i = 0; i < n; ++i) g.values[i] += f.values[i];
    }
    const double inv = 1.0 / static_cast<double>(block_days);
    for (std::size_t i = 0; i < n; ++i) g.values[i] *= inv;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

std::vector<SicGrid> aggregate_weekly(const SicSeries& series, std::int64_t end_t, int count) {
  return aggregate_blocks(series, end_t, count, kWeekDays, "aggregate_weekly");
}

std::vector<SicGrid> aggregate_monthly(const SicSeries& series, std::int64_t end_t, int count) {
  return aggregate_blocks(series, end_t, count, kMonthDays, "aggregate_monthly");
}

// ---------------------------------------------------------------- sampling

PerGranularity<std::vector<SicGrid>> make_input_windows(const SicSeries& series,
                                                        std::int64_t anchor_t) {
  PerGranularity<std::vector<SicGrid>> in;
  in.daily.reserve(kDailyLen);
  for (int d = kDailyLen - 1; d >= 0; --d) {
    in.daily.push_back(series.frame_at_day(anchor_t - d));
  }
  in.weekly = aggregate_weekly(series, anchor_t, kWeeklyLen);
  in.monthly = aggregate_monthly(series, anchor_t, kMonthlyLen);
  return in;
}

MultiGranularitySample make_sample(const SicSeries& series, std::int64_t anchor_t) {
  const std::int64_t first = anchor_t - kSampleHistoryDays + 1;
  const std::int64_t last = anchor_t + kSampleHorizonDays;
  if (!series.covers(first, last)) {
    throw RangeError("make_sample: anchor " + std::to_string(anchor_t) + " needs days [" +
                     std::to_string(first) + ", " + std::to_string(last) + "], series has [" +
                     std::to_string(series.t0) + ", " +
                     std::to_string(series.t0 + series.num_days() - 1) + "]");
  }
  MultiGranularitySample s;
  s.anchor_t = anchor_t;
  s.inputs = make_input_windows(series, anchor_t);
  s.targets.daily.reserve(kDailyLen);
  for (int d = 1; d <= kDailyLen; ++d) {
    s.targets.daily.push_back(series.frame_at_day(anchor_t + d));
  }
  // Backward tiling from the end of the horizon puts block 0 at anchor+1.
  s.targets.weekly = aggregate_weekly(series, anchor_t + kWeeklyLen * kWeekDays, kWeeklyLen);
  s.targets.monthly = aggregate_monthly(series, anchor_t + kMonthlyLen * kMonthDays, kMonthlyLen);
  return s;
}

std::pair<std::int64_t, std::int64_t> anchor_range(const SicSeries& series) {
  const std::int64_t first = series.t0 + kSampleHistoryDays - 1;
  const std::int64_t last = series.t0 + series.num_days() - 1 - kSampleHorizonDays;
  if (last < first) {
    throw RangeError("series of " + std::to_string(series.num_days()) +
                     " days is too short for any sample (needs " +
                     std::to_string(kSampleHistoryDays + kSampleHorizonDays) + ")");
  }
  return {first, last};
}

// --------------------------------------------------------------- synthesis

void SynthConfig::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("synth: dims must be positive");
  if (num_days < 1) throw ConfigError("synth: num_days must be >= 1");
  if (period_days < 2) throw ConfigError("synth: period_days must be >= 2");
  if (seasonal_amplitude < 0) throw ConfigError("synth: seasonal_amplitude must be >= 0");
  if (noise_std < 0) throw ConfigError("synth: noise_std must be >= 0");
  if (spatial_gradient_strength < 0) {
    throw ConfigError("synth: spatial_gradient_strength must be >= 0");
  }
}

SicSeries synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(Rng::derive(cfg.rng_seed, "synth"));

  std::vector<double> base(static_cast<std::size_t>(cfg.height));
  for (std::int64_t y = 0; y < cfg.height; ++y) {
    const double frac =
        cfg.height > 1 ? 1.0 - static_cast<double>(y) / static_cast<double>(cfg.height - 1) : 1.0;
    base[static_cast<std::size_t>(y)] = cfg.spatial_gradient_strength * frac;
  }

  SicSeries series;
  series.t0 = 0;
  series.frames.reserve(static_cast<std::size_t>(cfg.num_days));
  const double omega = 2.0 * M_PI / static_cast<double>(cfg.period_days);
  for (std::int64_t t = 0; t < cfg.num_days; ++t) {
    const double seasonal = cfg.seasonal_amplitude * std::cos(omega * static_cast<double>(t));
    const double trend = cfg.linear_trend_per_day * static_cast<double>(t);
    SicGrid g(cfg.height, cfg.width);
    for (std::int64_t y = 0; y < cfg.height; ++y) {
      const double row = base[static_cast<std::size_t>(y)] + seasonal + trend;
      for (std::int64_t x = 0; x < cfg.width; ++x) {
        const double eps = cfg.noise_std > 0 ? cfg.noise_std * rng.normal() : 0.0;
        // Quantize through f32 so the f32 file payload round-trips bitwise.
        g.at(y, x) = static_cast<double>(static_cast<float>(clamp01(row + eps)));
      }
    }
    series.frames.push_back(std::move(g));
  }
  return series;
}

}  // namespace sifm
