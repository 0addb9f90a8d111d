#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sifm/adam.hpp"
#include "sifm/checkpoint.hpp"
#include "sifm/config.hpp"
#include "sifm/metrics.hpp"
#include "sifm/model.hpp"

namespace sifm {

// Sample anchors at `anchor_stride`-day intervals over the valid range,
// split chronologically: first train_frac of the anchors, then val_frac,
// then the remainder as test. Anchors never shuffle across the split
// boundary, so every ablation run sees identical indices.
struct SplitIndices {
  std::vector<std::int64_t> train, val, test;
};

SplitIndices split_anchors(const SicSeries& series, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParams<float> params;  // best-validation weights
  AdamState<float> opt;       // optimizer state captured alongside them
  std::vector<EpochLog> log;  // one entry per epoch actually run
  int best_epoch = -1;
  double best_val = 0.0;
  SplitIndices split;
};

// Seeded, deterministic: Adam over stride-sampled training anchors in
// batches, per-epoch validation, early stop after `early_stop_patience`
// epochs without a new validation best. `progress`, when given, receives
// one human-readable line per epoch.
TrainResult train(const SicSeries& series, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  std::ostream* progress = nullptr);

// Baseline: repeat each granularity's most recent observed frame.
PerGranularity<std::vector<SicGrid>> persistence_forecast(
    const PerGranularity<std::vector<SicGrid>>& inputs);

// Test-protocol metrics over `anchors` (per-lead rows + aggregates, active
// granularities only). `threads` > 1 fans the forward passes out; results
// merge in anchor order, so the report is identical at any thread count.
std::vector<MetricReport> evaluate_model(const SicSeries& series,
                                         std::span<const std::int64_t> anchors,
                                         const ModelParams<float>& params,
                                         const ModelConfig& mcfg, GranularityMode mode,
                                         int threads = 1);
std::vector<MetricReport> evaluate_persistence(const SicSeries& series,
                                               std::span<const std::int64_t> anchors,
                                               GranularityMode mode);

struct AblationRun {
  std::string label;  // "<mode>/<backbone>"
  GranularityMode mode = GranularityMode::multi;
  Backbone backbone = Backbone::variate;
  TrainResult result;
  std::vector<MetricReport> metrics;  // test-split reports
};

// The default 6-run matrix — {multi, daily_only, weekly_only, monthly_only}
// on the variate backbone plus multi on {temporal, mixer} — trained on
// identical data, splits, and seeds.
std::vector<AblationRun> run_ablation(const SicSeries& series, const ModelConfig& mcfg,
                                      const TrainConfig& tcfg, std::ostream* progress = nullptr,
                                      int threads = 1);

// "epoch,train_loss,val_loss" CSV for cmd_train.
std::string train_log_csv(std::span<const EpochLog> log);

}  // namespace sifm
