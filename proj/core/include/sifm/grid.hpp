#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sifm/errors.hpp"

namespace sifm {

// Forecast granularities. Input length L equals prediction length P per
// granularity: 7 daily steps, 8 weekly means, 6 monthly means. A "week" is a
// fixed 7-day block and a "month" a fixed 30-day block, tiled backward from
// the anchor day (no calendar arithmetic).
enum class Granularity { daily = 0, weekly = 1, monthly = 2 };

inline constexpr std::array<Granularity, 3> kGranularities{Granularity::daily,
                                                           Granularity::weekly,
                                                           Granularity::monthly};
inline constexpr int kDailyLen = 7;
inline constexpr int kWeeklyLen = 8;
inline constexpr int kMonthlyLen = 6;
inline constexpr std::int64_t kWeekDays = 7;
inline constexpr std::int64_t kMonthDays = 30;

const char* granularity_name(Granularity g);
Granularity granularity_from_name(const std::string& name);  // ConfigError if unknown
int granularity_len(Granularity g);        // L (= P)
std::int64_t granularity_days(Granularity g);  // days per step

template <typename T>
struct PerGranularity {
  T daily{};
  T weekly{};
  T monthly{};

  T& operator[](Granularity g) {
    switch (g) {
      case Granularity::daily: return daily;
      case Granularity::weekly: return weekly;
      case Granularity::monthly: return monthly;
    }
    throw RangeError("bad granularity");
  }
  const T& operator[](Granularity g) const {
    return const_cast<PerGranularity&>(*this)[g];
  }
};

// One day's sea-ice-concentration field, fraction of cell area in [0, 1].
// Values are held in f64 so granularity means and metric sums stay exact to
// the 1e-12 tolerances the tests demand; on-disk payload is f32.
struct SicGrid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<double> values;  // row-major H×W

  SicGrid() = default;
  SicGrid(std::int64_t h, std::int64_t w);

  double& at(std::int64_t y, std::int64_t x) { return values[static_cast<std::size_t>(y * width + x)]; }
  double at(std::int64_t y, std::int64_t x) const { return values[static_cast<std::size_t>(y * width + x)]; }
  void validate() const;  // dims positive, sizes consistent, values in [0,1]
};

// Daily time series over a fixed grid, with an optional ocean mask
// (1 = ocean, 0 = land/ignore). Immutable by convention after construction.
struct SicSeries {
  std::int64_t t0 = 0;                // day index of frames[0]
  std::vector<SicGrid> frames;        // one per consecutive day
  std::vector<std::uint8_t> mask;     // empty, or H×W

  std::int64_t num_days() const { return static_cast<std::int64_t>(frames.size()); }
  std::int64_t height() const;
  std::int64_t width() const;
  bool covers(std::int64_t first_day, std::int64_t last_day) const;
  const SicGrid& frame_at_day(std::int64_t t) const;  // RangeError if outside
  void validate() const;
};

// Mean over fixed backward-tiled blocks ending at end_t, oldest first.
// Weekly: `count` 7-day blocks; pre: series covers [end_t − count·7 + 1, end_t].
std::vector<SicGrid> aggregate_weekly(const SicSeries& series, std::int64_t end_t,
                                      int count = kWeeklyLen);
std::vector<SicGrid> aggregate_monthly(const SicSeries& series, std::int64_t end_t,
                                       int count = kMonthlyLen);

// Inputs end at anchor_t, targets start at anchor_t + 1 (in each
// granularity's own step). daily: 7 in / 7 out; weekly: 8/8; monthly: 6/6.
struct MultiGranularitySample {
  std::int64_t anchor_t = 0;
  PerGranularity<std::vector<SicGrid>> inputs;
  PerGranularity<std::vector<SicGrid>> targets;
};

// Widest window each side of the anchor: monthly input and target, 180 days.
inline constexpr std::int64_t kSampleHistoryDays = kMonthlyLen * kMonthDays;   // 180
inline constexpr std::int64_t kSampleHorizonDays = kMonthlyLen * kMonthDays;   // 180

MultiGranularitySample make_sample(const SicSeries& series, std::int64_t anchor_t);
// Input half only (for forecasting without targets).
PerGranularity<std::vector<SicGrid>> make_input_windows(const SicSeries& series,
                                                        std::int64_t anchor_t);
// [first, last] valid anchors for make_sample; RangeError if series too short.
std::pair<std::int64_t, std::int64_t> anchor_range(const SicSeries& series);

// Synthetic pan-Arctic-like data: a latitude-like meridional gradient plus a
// seasonal cosine, a slow linear trend, and white noise, clamped to [0, 1].
struct SynthConfig {
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t num_days = 3650;
  double seasonal_amplitude = 0.3;
  std::int64_t period_days = 365;
  double linear_trend_per_day = -2e-5;
  double noise_std = 0.02;
  double spatial_gradient_strength = 1.0;
  std::uint64_t rng_seed = 42;

  void validate() const;
};

// value(x,y,t) = clamp01(base(y) + A·cos(2π·t/period) + trend·t + ε);
// base(y) falls linearly from `strength` at the top row to 0 at the bottom.
// Deterministic given rng_seed; every value is quantized through f32 so a
// save/load round-trip through the f32 file payload is bitwise.
SicSeries synth_generate(const SynthConfig& cfg);

double clamp01(double v);

}  // namespace sifm
