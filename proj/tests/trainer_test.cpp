#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sifm/errors.hpp"
#include "sifm/trainer.hpp"

using namespace sifm;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.codec.stem_channels = 8;
  cfg.codec.num_merge_stages = 1;
  cfg.codec.attn_window = 2;
  cfg.codec.heads_per_stage = {1, 2};
  cfg.codec.token_dim = 8;
  cfg.fusion.d = 16;
  cfg.fusion.num_layers = 1;
  cfg.fusion.num_heads = 2;
  return cfg;
}

const SicSeries& series600() {
  static const SicSeries s = [] {
    SynthConfig sc;
    sc.height = 16;
    sc.width = 16;
    sc.num_days = 600;
    sc.rng_seed = 21;
    return synth_generate(sc);
  }();
  return s;
}

const SicSeries& series450_clean() {
  static const SicSeries s = [] {
    SynthConfig sc;
    sc.height = 16;
    sc.width = 16;
    sc.num_days = 450;
    sc.noise_std = 0.0;
    sc.rng_seed = 22;
    return synth_generate(sc);
  }();
  return s;
}

TrainConfig quick_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.rng_seed = 123;
  t.early_stop_patience = 50;  // effectively off unless a test wants it
  return t;
}

bool rows_equal(const MetricReport& a, const MetricReport& b) {
  return a.granularity == b.granularity && a.lead == b.lead && a.rmse == b.rmse &&
         a.mae == b.mae && a.r2 == b.r2 && a.nse == b.nse && a.iiee == b.iiee &&
         a.sie_dif == b.sie_dif;
}

}  // namespace

TEST_CASE("anchors split chronologically at the configured stride") {
  TrainConfig t;
  SplitIndices s = split_anchors(series600(), t);

  CHECK(!s.train.empty());
  CHECK(!s.val.empty());
  CHECK(!s.test.empty());
  // 600 days → anchors 179, 186, … 419
  CHECK(s.train.front() == 179);
  std::vector<std::int64_t> all;
  for (auto* part : {&s.train, &s.val, &s.test})
    all.insert(all.end(), part->begin(), part->end());
  CHECK(all.size() == 35);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i] - all[i - 1] == 7);
  CHECK(s.train.back() < s.val.front());
  CHECK(s.val.back() < s.test.front());
  // 70/10/20 of 35 → 24/3/8
  CHECK(s.train.size() == 24);
  CHECK(s.val.size() == 3);
  CHECK(s.test.size() == 8);

  // deterministic
  SplitIndices again = split_anchors(series600(), t);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);

  // too short for any anchor
  SynthConfig sc;
  sc.height = 16;
  sc.width = 16;
  sc.num_days = 361;  // exactly one anchor → no room for three splits
  CHECK_THROWS_AS(split_anchors(synth_generate(sc), t), RangeError);

  TrainConfig wide;
  wide.anchor_stride = 90;
  CHECK_THROWS_AS(split_anchors(series600(), wide), RangeError);
}

TEST_CASE("persistence repeats the last observed frame") {
  auto sample = make_sample(series600(), 250);
  auto pred = persistence_forecast(sample.inputs);
  CHECK(pred.daily.size() == 7);
  CHECK(pred.weekly.size() == 8);
  CHECK(pred.monthly.size() == 6);
  for (Granularity g : kGranularities)
    for (const auto& grid : pred[g]) CHECK(grid.values == sample.inputs[g].back().values);

  PerGranularity<std::vector<SicGrid>> weekly_only;
  weekly_only.weekly = sample.inputs.weekly;
  auto partial = persistence_forecast(weekly_only);
  CHECK(partial.daily.empty());
  CHECK(partial.weekly.size() == 8);
}

TEST_CASE("two epochs on a 16x16 600-day series complete and log two entries") {
  auto res = train(series600(), small_cfg(), quick_train(2));
  REQUIRE(res.log.size() == 2);
  CHECK(res.log[0].epoch == 0);
  CHECK(res.log[1].epoch == 1);
  CHECK(res.best_epoch >= 0);
  CHECK(std::isfinite(res.log[1].train_loss));
  CHECK(res.best_val <= res.log.front().val_loss);
  CHECK(res.params.value_count() == model_param_count(small_cfg()));
  // best-val params must reproduce the recorded best validation loss
  double val = 0.0;
  for (auto a : res.split.val) {
    auto sample = make_sample(series600(), a);
    auto pred = forward_sifm(sample.inputs, res.params, small_cfg());
    val += loss_sifm(pred, sample.targets).item();
  }
  CHECK(val / static_cast<double>(res.split.val.size()) ==
        doctest::Approx(res.best_val).epsilon(1e-6));
}

TEST_CASE("training is deterministic under a fixed seed") {
  auto a = train(series600(), small_cfg(), quick_train(2));
  auto b = train(series600(), small_cfg(), quick_train(2));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_loss == b.log[i].val_loss);
  }
  auto ta = a.params.tensors();
  auto tb = b.params.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    auto va = ta[i]->values();
    auto vb = tb[i]->values();
    CHECK(std::equal(va.begin(), va.end(), vb.begin(), vb.end()));
  }

  TrainConfig other = quick_train(2);
  other.rng_seed = 124;
  auto c = train(series600(), small_cfg(), other);
  CHECK(c.log.back().train_loss != a.log.back().train_loss);
}

TEST_CASE("training loss decreases over the first five epochs on clean data") {
  auto res = train(series450_clean(), small_cfg(), quick_train(5));
  REQUIRE(res.log.size() == 5);
  for (std::size_t i = 1; i < res.log.size(); ++i)
    CHECK(res.log[i].train_loss < res.log[i - 1].train_loss);
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
  TrainConfig t = quick_train(30);
  t.lr = 1e-12;  // updates vanish below f32 resolution, so val loss never improves
  t.early_stop_patience = 2;
  auto res = train(series450_clean(), small_cfg(), t);
  CHECK(res.log.size() == 3);  // epoch 0 sets the best, two stale epochs exhaust patience
  CHECK(res.best_epoch == 0);
}

TEST_CASE("single-granularity training runs and stays in its lane") {
  TrainConfig t = quick_train(1);
  t.granularity_mode = GranularityMode::daily_only;
  auto res = train(series600(), small_cfg(), t);
  CHECK(res.log.size() == 1);

  // parameters of the untouched granularities kept their init values
  auto fresh = ModelParams<float>::init(small_cfg(), t.rng_seed);
  auto now = res.params.named_tensors();
  auto was = fresh.named_tensors();
  for (std::size_t i = 0; i < now.size(); ++i) {
    const std::string& name = now[i].first;
    if (name.find("weekly") == std::string::npos && name.find("monthly") == std::string::npos)
      continue;
    auto a = now[i].second->values();
    auto b = was[i].second->values();
    INFO(name);
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }

  ModelConfig bad = small_cfg();
  bad.fusion.backbone = Backbone::temporal;
  CHECK_THROWS_AS(train(series600(), bad, t), ConfigError);
}

TEST_CASE("model evaluation is identical at any thread count") {
  auto cfg = small_cfg();
  auto params = ModelParams<float>::init(cfg, 77);
  TrainConfig t;
  SplitIndices s = split_anchors(series600(), t);

  auto rows1 = evaluate_model(series600(), s.test, params, cfg, GranularityMode::multi, 1);
  auto rows2 = evaluate_model(series600(), s.test, params, cfg, GranularityMode::multi, 3);
  REQUIRE(rows1.size() == 24);
  REQUIRE(rows2.size() == 24);
  for (std::size_t i = 0; i < rows1.size(); ++i) CHECK(rows_equal(rows1[i], rows2[i]));

  auto weekly = evaluate_model(series600(), s.test, params, cfg, GranularityMode::weekly_only, 1);
  CHECK(weekly.size() == 9);  // 8 leads + aggregate
  for (const auto& r : weekly) CHECK(r.granularity == Granularity::weekly);

  auto base = evaluate_persistence(series600(), s.test, GranularityMode::multi);
  CHECK(base.size() == 24);
  // persistence on slowly varying synthetic data is a sane baseline
  for (const auto& r : base) CHECK(r.rmse < 0.5);
}

TEST_CASE("train log serializes as CSV") {
  std::vector<EpochLog> log{{0, 0.5, 0.625}, {1, 0.25, 0.5}};
  const std::string csv = train_log_csv(log);
  CHECK(csv == "epoch,train_loss,val_loss\n0,0.5,0.625\n1,0.25,0.5\n");
}
