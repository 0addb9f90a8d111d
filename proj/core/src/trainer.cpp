#include "sifm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <thread>

#include "sifm/errors.hpp"
#include "sifm/ops.hpp"
#include "sifm/rng.hpp"

namespace sifm {

SplitIndices split_anchors(const SicSeries& series, const TrainConfig& cfg) {
  cfg.validate();
  const auto [first, last] = anchor_range(series);
  std::vector<std::int64_t> anchors;
  for (std::int64_t t = first; t <= last; t += cfg.anchor_stride) anchors.push_back(t);
  const auto n = static_cast<double>(anchors.size());
  const auto n_train = static_cast<std::size_t>(n * cfg.train_frac);
  const auto n_val = static_cast<std::size_t>(n * cfg.val_frac);
  if (n_train == 0 || n_val == 0 || n_train + n_val >= anchors.size()) {
    throw RangeError("series yields " + std::to_string(anchors.size()) +
                     " anchors at stride " + std::to_string(cfg.anchor_stride) +
                     ", too few for a train/val/test split");
  }
  SplitIndices s;
  s.train.assign(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(anchors.begin() + static_cast<std::ptrdiff_t>(n_train),
               anchors.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(anchors.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), anchors.end());
  return s;
}

namespace {

ModelParams<float> clone_params(ModelParams<float>& src, const ModelConfig& cfg) {
  auto dst = ModelParams<float>::shaped(cfg);
  auto s = src.tensors();
  auto d = dst.tensors();
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto from = s[i]->values();
    auto to = d[i]->values_mut();
    std::copy(from.begin(), from.end(), to.begin());
  }
  return dst;
}

// Targets restricted to the active granularities, matching forecast output.
PerGranularity<std::vector<SicGrid>> active_targets(PerGranularity<std::vector<SicGrid>> t,
                                                    GranularityMode mode) {
  for (Granularity g : kGranularities)
    if (!mode_active(mode, g)) t[g].clear();
  return t;
}

double mean_val_loss(const SicSeries& series, std::span<const std::int64_t> anchors,
                     const ModelParams<float>& params, const ModelConfig& mcfg,
                     GranularityMode mode) {
  double sum = 0.0;
  for (std::int64_t a : anchors) {
    auto sample = make_sample(series, a);
    auto pred = forward_sifm(sample.inputs, params, mcfg, mode);
    sum += static_cast<double>(loss_sifm(pred, sample.targets, mode).item());
  }
  return sum / static_cast<double>(anchors.size());
}

}  // namespace

TrainResult train(const SicSeries& series, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  std::ostream* progress) {
  series.validate();
  mcfg.validate();
  tcfg.validate();
  if (series.height() != mcfg.height || series.width() != mcfg.width) {
    throw DimensionError("train: series is " + std::to_string(series.height()) + "x" +
                         std::to_string(series.width()) + ", model wants " +
                         std::to_string(mcfg.height) + "x" + std::to_string(mcfg.width));
  }
  const GranularityMode mode = tcfg.granularity_mode;
  if (single_granularity(mode) && mcfg.fusion.backbone != Backbone::variate)
    throw ConfigError("single-granularity modes require the variate backbone");

  TrainResult res;
  res.split = split_anchors(series, tcfg);

  auto params = ModelParams<float>::init(mcfg, tcfg.rng_seed);
  auto ptrs = params.tensors();
  std::vector<Tensor<float>> opt_view;  // shallow handles sharing storage
  opt_view.reserve(ptrs.size());
  for (auto* p : ptrs) opt_view.push_back(*p);

  AdamState<float> opt;
  opt.lr = tcfg.lr;
  opt.beta1 = tcfg.beta1;
  opt.beta2 = tcfg.beta2;
  opt.eps = tcfg.eps;

  res.best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::vector<std::int64_t> order = res.split.train;
    Rng shuffle(Rng::derive(tcfg.rng_seed, "shuffle." + std::to_string(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(shuffle.below(i + 1))]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      for (auto* p : ptrs) p->zero_grad();
      const float inv_batch = 1.0f / static_cast<float>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        auto sample = make_sample(series, order[i]);
        Tape<float> tape;
        auto pred = forward_sifm(sample.inputs, params, mcfg, mode);
        auto loss = loss_sifm(pred, sample.targets, mode);
        loss_sum += static_cast<double>(loss.item());
        backward(scale(loss, inv_batch));
      }
      adam_step(std::span<Tensor<float>>(opt_view), opt);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.val_loss = mean_val_loss(series, res.split.val, params, mcfg, mode);
    res.log.push_back(log);

    const bool improved = log.val_loss < res.best_val;
    if (improved) {
      res.best_val = log.val_loss;
      res.best_epoch = epoch;
      res.params = clone_params(params, mcfg);
      res.opt = opt;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    if (progress) {
      char line[160];
      std::snprintf(line, sizeof(line), "epoch %3d  train %.6f  val %.6f%s", epoch,
                    log.train_loss, log.val_loss, improved ? "  *" : "");
      (*progress) << line << std::endl;
    }
    if (epochs_since_best >= tcfg.early_stop_patience) break;
  }
  return res;
}

PerGranularity<std::vector<SicGrid>> persistence_forecast(
    const PerGranularity<std::vector<SicGrid>>& inputs) {
  PerGranularity<std::vector<SicGrid>> out;
  for (Granularity g : kGranularities) {
    if (inputs[g].empty()) continue;
    const SicGrid& last = inputs[g].back();
    out[g].assign(static_cast<std::size_t>(granularity_len(g)), last);
  }
  return out;
}

std::vector<MetricReport> evaluate_model(const SicSeries& series,
                                         std::span<const std::int64_t> anchors,
                                         const ModelParams<float>& params,
                                         const ModelConfig& mcfg, GranularityMode mode,
                                         int threads) {
  if (anchors.empty()) throw RangeError("evaluate: no anchors");
  const std::size_t n = anchors.size();
  std::vector<GranularityForecast> preds(n), truths(n);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto sample = make_sample(series, anchors[i]);
      preds[i] = forecast_sifm(sample.inputs, params, mcfg, mode);
      truths[i] = active_targets(std::move(sample.targets), mode);
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
      pool.emplace_back(work, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return evaluate_forecast(preds, truths, series.mask);
}

std::vector<MetricReport> evaluate_persistence(const SicSeries& series,
                                               std::span<const std::int64_t> anchors,
                                               GranularityMode mode) {
  if (anchors.empty()) throw RangeError("evaluate: no anchors");
  std::vector<GranularityForecast> preds, truths;
  preds.reserve(anchors.size());
  truths.reserve(anchors.size());
  for (std::int64_t a : anchors) {
    auto sample = make_sample(series, a);
    auto inputs = active_targets(std::move(sample.inputs), mode);
    preds.push_back(persistence_forecast(inputs));
    truths.push_back(active_targets(std::move(sample.targets), mode));
  }
  return evaluate_forecast(preds, truths, series.mask);
}

std::vector<AblationRun> run_ablation(const SicSeries& series, const ModelConfig& mcfg,
                                      const TrainConfig& tcfg, std::ostream* progress,
                                      int threads) {
  struct Cell {
    GranularityMode mode;
    Backbone backbone;
  };
  const Cell matrix[] = {
      {GranularityMode::multi, Backbone::variate},
      {GranularityMode::daily_only, Backbone::variate},
      {GranularityMode::weekly_only, Backbone::variate},
      {GranularityMode::monthly_only, Backbone::variate},
      {GranularityMode::multi, Backbone::temporal},
      {GranularityMode::multi, Backbone::mixer},
  };
  std::vector<AblationRun> out;
  for (const Cell& cell : matrix) {
    AblationRun run;
    run.mode = cell.mode;
    run.backbone = cell.backbone;
    run.label = std::string(mode_name(cell.mode)) + "/" + backbone_name(cell.backbone);
    ModelConfig m = mcfg;
    m.fusion.backbone = cell.backbone;
    TrainConfig t = tcfg;
    t.granularity_mode = cell.mode;
    if (progress) (*progress) << "== " << run.label << " ==" << std::endl;
    run.result = train(series, m, t, progress);
    run.metrics =
        evaluate_model(series, run.result.split.test, run.result.params, m, cell.mode, threads);
    out.push_back(std::move(run));
  }
  return out;
}

std::string train_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,train_loss,val_loss\n";
  char row[96];
  for (const EpochLog& e : log) {
    std::snprintf(row, sizeof(row), "%d,%.10g,%.10g\n", e.epoch, e.train_loss, e.val_loss);
    out += row;
  }
  return out;
}

}  // namespace sifm
