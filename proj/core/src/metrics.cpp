#include "sifm/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "sifm/errors.hpp"

namespace sifm {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth,
                std::span<const std::uint8_t> mask) {
  if (pred.size() != truth.size())
    throw DimensionError("metric inputs differ in size: " + std::to_string(pred.size()) +
                         " vs " + std::to_string(truth.size()));
  if (!mask.empty() && mask.size() != pred.size())
    throw DimensionError("mask size " + std::to_string(mask.size()) +
                         " does not match grids of " + std::to_string(pred.size()));
}

bool cell_on(std::span<const std::uint8_t> mask, std::size_t i) {
  return mask.empty() || mask[i] != 0;
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth,
            std::span<const std::uint8_t> mask) {
  check_pair(pred, truth, mask);
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!cell_on(mask, i)) continue;
    const double d = pred[i] - truth[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw DomainError("empty mask");
  return std::sqrt(sum / static_cast<double>(n));
}

double mae(std::span<const double> pred, std::span<const double> truth,
           std::span<const std::uint8_t> mask) {
  check_pair(pred, truth, mask);
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!cell_on(mask, i)) continue;
    sum += std::abs(pred[i] - truth[i]);
    ++n;
  }
  if (n == 0) throw DomainError("empty mask");
  return sum / static_cast<double>(n);
}

double r2(std::span<const double> pred, std::span<const double> truth,
          std::span<const std::uint8_t> mask) {
  check_pair(pred, truth, mask);
  double truth_sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!cell_on(mask, i)) continue;
    truth_sum += truth[i];
    ++n;
  }
  if (n == 0) throw DomainError("empty mask");
  const double mean = truth_sum / static_cast<double>(n);
  double rss = 0.0, tss = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!cell_on(mask, i)) continue;
    const double r = truth[i] - pred[i];
    const double t = truth[i] - mean;
    rss += r * r;
    tss += t * t;
  }
  if (tss == 0.0) throw DomainError("constant truth");
  return 1.0 - rss / tss;
}

double nse(std::span<const double> pred, std::span<const double> truth,
           std::span<const std::uint8_t> mask) {
  // Standard Nash-Sutcliffe form; identical to r2 with the truth-mean
  // baseline over the same mask.
  return r2(pred, truth, mask);
}

std::vector<std::uint8_t> sie_mask(std::span<const double> grid, double threshold) {
  std::vector<std::uint8_t> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = grid[i] > threshold ? 1 : 0;
  return out;
}

IieeResult iiee(std::span<const double> pred, std::span<const double> truth,
                std::span<const std::uint8_t> mask) {
  check_pair(pred, truth, mask);
  IieeResult r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!cell_on(mask, i)) continue;
    const bool p = pred[i] > kSieThreshold;
    const bool t = truth[i] > kSieThreshold;
    if (p && !t) ++r.over;
    if (t && !p) ++r.under;
  }
  r.iiee = r.over + r.under;
  return r;
}

double sie_dif(std::span<const double> pred, std::span<const double> truth,
               std::span<const std::uint8_t> mask, double cell_km) {
  check_pair(pred, truth, mask);
  std::int64_t disagree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!cell_on(mask, i)) continue;
    const int p = pred[i] > kSieThreshold ? 1 : 0;
    const int t = truth[i] > kSieThreshold ? 1 : 0;
    disagree += std::abs(p - t);
  }
  return static_cast<double>(disagree) * cell_km * cell_km / 1e6;
}

void MetricAccumulator::add(std::span<const double> pred, std::span<const double> truth,
                            std::span<const std::uint8_t> mask) {
  check_pair(pred, truth, mask);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!cell_on(mask, i)) continue;
    const double d = pred[i] - truth[i];
    sum_sq_err += d * d;
    sum_abs_err += std::abs(d);
    sum_truth += truth[i];
    sum_truth_sq += truth[i] * truth[i];
    ++n;
    const bool p = pred[i] > kSieThreshold;
    const bool t = truth[i] > kSieThreshold;
    if (p && !t) ++over;
    if (t && !p) ++under;
  }
}

MetricReport MetricAccumulator::report(Granularity g, int lead) const {
  if (n == 0) throw DomainError("empty mask");
  MetricReport rep;
  rep.granularity = g;
  rep.lead = lead;
  const double dn = static_cast<double>(n);
  rep.rmse = std::sqrt(sum_sq_err / dn);
  rep.mae = sum_abs_err / dn;
  const double tss = sum_truth_sq - sum_truth * sum_truth / dn;
  if (tss <= 0.0) throw DomainError("constant truth");
  rep.r2 = 1.0 - sum_sq_err / tss;
  rep.nse = rep.r2;
  rep.iiee = over + under;
  rep.sie_dif = static_cast<double>(rep.iiee) * kCellKm * kCellKm / 1e6;
  return rep;
}

std::vector<MetricReport> evaluate_forecast(std::span<const GranularityForecast> preds,
                                            std::span<const GranularityForecast> truths,
                                            std::span<const std::uint8_t> mask) {
  if (preds.size() != truths.size())
    throw DimensionError("forecast sets differ in sample count: " +
                         std::to_string(preds.size()) + " vs " +
                         std::to_string(truths.size()));
  if (preds.empty()) throw DomainError("no samples to evaluate");
  std::vector<MetricReport> out;
  for (Granularity g : kGranularities) {
    const int len = granularity_len(g);
    // A granularity absent from every sample (single-granularity runs) gets
    // no rows; absent from only some samples is a shape error below.
    if (preds[0][g].empty() && truths[0][g].empty()) {
      for (std::size_t s = 0; s < preds.size(); ++s) {
        if (!preds[s][g].empty() || !truths[s][g].empty())
          throw DimensionError(std::string("sample ") + std::to_string(s) + " has " +
                               granularity_name(g) + " grids but sample 0 does not");
      }
      continue;
    }
    std::vector<MetricAccumulator> per_lead(static_cast<std::size_t>(len));
    MetricAccumulator pooled;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      const auto& pg = preds[s][g];
      const auto& tg = truths[s][g];
      if (static_cast<int>(pg.size()) != len || static_cast<int>(tg.size()) != len)
        throw DimensionError(std::string("sample ") + std::to_string(s) + " has " +
                             std::to_string(pg.size()) + "/" + std::to_string(tg.size()) +
                             " grids for " + granularity_name(g) + ", expected " +
                             std::to_string(len));
      for (int lead = 0; lead < len; ++lead) {
        const auto& pv = pg[static_cast<std::size_t>(lead)].values;
        const auto& tv = tg[static_cast<std::size_t>(lead)].values;
        per_lead[static_cast<std::size_t>(lead)].add(pv, tv, mask);
        pooled.add(pv, tv, mask);
      }
    }
    for (int lead = 0; lead < len; ++lead)
      out.push_back(per_lead[static_cast<std::size_t>(lead)].report(g, lead));
    out.push_back(pooled.report(g, -1));
  }
  return out;
}

std::string metrics_csv(std::span<const MetricReport> reports) {
  std::string csv = "granularity,lead,rmse,mae,r2,nse,iiee,sie_dif\n";
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%s,%d,%.10g,%.10g,%.10g,%.10g,%lld,%.10g\n",
                  granularity_name(r.granularity), r.lead, r.rmse, r.mae, r.r2, r.nse,
                  static_cast<long long>(r.iiee), r.sie_dif);
    csv += line;
  }
  return csv;
}

}  // namespace sifm
