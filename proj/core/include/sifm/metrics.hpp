#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sifm/grid.hpp"

namespace sifm {

// Verification suite over gridded forecasts. All scalar metrics run over the
// masked cell population only (empty mask span = every cell); r2 and nse
// coincide under these definitions (both 1 − RSS/TSS with the truth-mean
// baseline) and are reported separately because the source tables do.

inline constexpr double kSieThreshold = 0.15;
inline constexpr double kCellKm = 25.0;

double rmse(std::span<const double> pred, std::span<const double> truth,
            std::span<const std::uint8_t> mask = {});
double mae(std::span<const double> pred, std::span<const double> truth,
           std::span<const std::uint8_t> mask = {});
// 1 − RSS/TSS; DomainError "constant truth" when TSS == 0.
double r2(std::span<const double> pred, std::span<const double> truth,
          std::span<const std::uint8_t> mask = {});
double nse(std::span<const double> pred, std::span<const double> truth,
           std::span<const std::uint8_t> mask = {});

// Cell is ice-extent iff concentration strictly exceeds the threshold.
std::vector<std::uint8_t> sie_mask(std::span<const double> grid,
                                   double threshold = kSieThreshold);

struct IieeResult {
  std::int64_t iiee = 0;   // over + under, in cells
  std::int64_t over = 0;   // pred-extent cells that truth lacks
  std::int64_t under = 0;  // truth-extent cells that pred lacks
};
IieeResult iiee(std::span<const double> pred, std::span<const double> truth,
                std::span<const std::uint8_t> mask = {});

// Σ|SIE_pred − SIE_truth| · cell_km² / 10⁶  (millions of km²).
double sie_dif(std::span<const double> pred, std::span<const double> truth,
               std::span<const std::uint8_t> mask = {}, double cell_km = kCellKm);

struct MetricReport {
  Granularity granularity = Granularity::daily;
  int lead = -1;  // 0-based lead step; -1 marks the per-granularity aggregate
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  double nse = 0.0;
  std::int64_t iiee = 0;
  double sie_dif = 0.0;
};

// Streaming pooled accumulation: aggregate metrics are computed over the
// pooled cell population across samples/leads, not means of per-lead scores.
struct MetricAccumulator {
  std::int64_t n = 0;
  double sum_sq_err = 0.0;
  double sum_abs_err = 0.0;
  double sum_truth = 0.0;
  double sum_truth_sq = 0.0;
  std::int64_t over = 0;
  std::int64_t under = 0;

  void add(std::span<const double> pred, std::span<const double> truth,
           std::span<const std::uint8_t> mask = {});
  MetricReport report(Granularity g, int lead) const;  // DomainError on n==0 / TSS==0
};

using GranularityForecast = PerGranularity<std::vector<SicGrid>>;

// Per-(granularity, lead) rows followed by that granularity's pooled
// aggregate row (lead = −1): 7+1, 8+1, 6+1 rows for the default lengths.
std::vector<MetricReport> evaluate_forecast(std::span<const GranularityForecast> preds,
                                            std::span<const GranularityForecast> truths,
                                            std::span<const std::uint8_t> mask = {});

// CSV with header granularity,lead,rmse,mae,r2,nse,iiee,sie_dif.
std::string metrics_csv(std::span<const MetricReport> reports);

}  // namespace sifm
