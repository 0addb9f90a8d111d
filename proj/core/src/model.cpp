#include "sifm/model.hpp"

#include <string>

#include "sifm/errors.hpp"
#include "sifm/ops.hpp"

namespace sifm {

const char* mode_name(GranularityMode m) {
  switch (m) {
    case GranularityMode::multi: return "multi";
    case GranularityMode::daily_only: return "daily_only";
    case GranularityMode::weekly_only: return "weekly_only";
    case GranularityMode::monthly_only: return "monthly_only";
  }
  throw RangeError("bad granularity mode");
}

GranularityMode mode_from_name(const std::string& name) {
  if (name == "multi") return GranularityMode::multi;
  if (name == "daily_only") return GranularityMode::daily_only;
  if (name == "weekly_only") return GranularityMode::weekly_only;
  if (name == "monthly_only") return GranularityMode::monthly_only;
  throw ConfigError("unknown granularity mode '" + name + "'");
}

std::optional<Granularity> single_granularity(GranularityMode m) {
  switch (m) {
    case GranularityMode::multi: return std::nullopt;
    case GranularityMode::daily_only: return Granularity::daily;
    case GranularityMode::weekly_only: return Granularity::weekly;
    case GranularityMode::monthly_only: return Granularity::monthly;
  }
  throw RangeError("bad granularity mode");
}

bool mode_active(GranularityMode m, Granularity g) {
  auto only = single_granularity(m);
  return !only || *only == g;
}

void ModelConfig::validate() const {
  codec.validate(height, width);
  fusion.validate();
}

template <typename S>
std::vector<Tensor<S>*> ModelParams<S>::tensors() {
  std::vector<Tensor<S>*> out;
  for_each([&out](const std::string&, Tensor<S>& t) { out.push_back(&t); });
  return out;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>*>> ModelParams<S>::named_tensors() {
  std::vector<std::pair<std::string, Tensor<S>*>> out;
  for_each([&out](const std::string& name, Tensor<S>& t) { out.emplace_back(name, &t); });
  return out;
}

template <typename S>
std::int64_t ModelParams<S>::value_count() {
  std::int64_t n = 0;
  for_each([&n](const std::string&, Tensor<S>& t) { n += t.size(); });
  return n;
}

template <typename S>
void ModelParams<S>::set_requires_grad(bool on) {
  for_each([on](const std::string&, Tensor<S>& t) { t.set_requires_grad(on); });
}

template <typename S>
ModelParams<S> ModelParams<S>::shaped(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.backbone = cfg.fusion.backbone;
  p.codec = CodecParams<S>::shaped(cfg.codec, cfg.height, cfg.width);
  switch (p.backbone) {
    case Backbone::variate:
      p.variate = VariateParams<S>::shaped(cfg.fusion, cfg.codec.token_dim);
      break;
    case Backbone::temporal:
      p.temporal = TemporalParams<S>::shaped(cfg.fusion, cfg.codec.token_dim);
      break;
    case Backbone::mixer:
      p.mixer = MixerParams<S>::shaped(cfg.fusion, cfg.codec.token_dim);
      break;
  }
  p.skip = SkipParams<S>::shaped(cfg.codec.token_dim);
  p.set_requires_grad(true);
  return p;
}

template <typename S>
ModelParams<S> ModelParams<S>::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.backbone = cfg.fusion.backbone;
  // Independent streams per module: the codec draw is identical across
  // backbone choices, so ablation runs share their codec starting point.
  Rng codec_rng(Rng::derive(seed, "init.codec"));
  Rng fusion_rng(Rng::derive(seed, "init.fusion"));
  Rng skip_rng(Rng::derive(seed, "init.skip"));
  p.codec = CodecParams<S>::init(cfg.codec, cfg.height, cfg.width, codec_rng);
  switch (p.backbone) {
    case Backbone::variate:
      p.variate = VariateParams<S>::init(cfg.fusion, cfg.codec.token_dim, fusion_rng);
      break;
    case Backbone::temporal:
      p.temporal = TemporalParams<S>::init(cfg.fusion, cfg.codec.token_dim, fusion_rng);
      break;
    case Backbone::mixer:
      p.mixer = MixerParams<S>::init(cfg.fusion, cfg.codec.token_dim, fusion_rng);
      break;
  }
  p.skip = SkipParams<S>::init(cfg.codec.token_dim, skip_rng);
  p.set_requires_grad(true);
  return p;
}

template <typename S>
Tensor<S> tensor_from_grid(const SicGrid& g) {
  if (g.height <= 0 || g.width <= 0) throw DimensionError("tensor_from_grid: empty grid");
  std::vector<S> vals(g.values.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<S>(g.values[i]);
  return Tensor<S>({g.height, g.width}, std::move(vals));
}

template <typename S>
SicGrid grid_from_tensor(const Tensor<S>& t, bool clamp) {
  if (t.rank() != 2) throw DimensionError("grid_from_tensor: want rank 2, got " + shape_str(t.shape()));
  SicGrid g(t.extent(0), t.extent(1));
  auto v = t.values();
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double x = static_cast<double>(v[i]);
    g.values[i] = clamp ? clamp01(x) : x;
  }
  return g;
}

namespace {

template <typename S>
void check_inputs(const PerGranularity<std::vector<SicGrid>>& inputs, const ModelConfig& cfg,
                  GranularityMode mode) {
  for (Granularity g : kGranularities) {
    if (!mode_active(mode, g)) continue;
    const auto& frames = inputs[g];
    const auto want = static_cast<std::size_t>(granularity_len(g));
    if (frames.size() != want) {
      throw DimensionError(std::string("forward: ") + granularity_name(g) + " input has " +
                           std::to_string(frames.size()) + " frames, want " +
                           std::to_string(want));
    }
    for (const auto& f : frames) {
      if (f.height != cfg.height || f.width != cfg.width) {
        throw DimensionError(std::string("forward: ") + granularity_name(g) + " frame is " +
                             std::to_string(f.height) + "x" + std::to_string(f.width) +
                             ", model is " + std::to_string(cfg.height) + "x" +
                             std::to_string(cfg.width));
      }
    }
  }
}

}  // namespace

template <typename S>
PerGranularity<std::vector<Tensor<S>>> forward_sifm(
    const PerGranularity<std::vector<SicGrid>>& inputs, const ModelParams<S>& params,
    const ModelConfig& cfg, GranularityMode mode) {
  check_inputs<S>(inputs, cfg, mode);
  if (params.backbone != cfg.fusion.backbone)
    throw ConfigError("forward: params were built for a different backbone");
  const auto only = single_granularity(mode);
  if (only && params.backbone != Backbone::variate)
    throw ConfigError("single-granularity modes require the variate backbone");

  const std::int64_t td = cfg.codec.token_dim;

  // Shared encoder over every input frame; keep each granularity's token
  // sequence and the skip feature of its most recent frame.
  PerGranularity<Tensor<S>> seq;
  PerGranularity<Tensor<S>> last_skip;
  for (Granularity g : kGranularities) {
    if (!mode_active(mode, g)) continue;
    std::vector<Tensor<S>> rows;
    rows.reserve(inputs[g].size());
    for (const auto& frame : inputs[g]) {
      auto enc = encode_frame(tensor_from_grid<S>(frame), params.codec, cfg.codec);
      rows.push_back(reshape(enc.token, {1, td}));
      last_skip[g] = enc.skip;
    }
    seq[g] = concat(std::span<const Tensor<S>>(rows), 0);
  }

  // Fusion backbone → predicted token block per active granularity.
  PerGranularity<Tensor<S>> predicted;
  switch (params.backbone) {
    case Backbone::variate: {
      std::vector<Tensor<S>> variates;
      for (Granularity g : kGranularities)
        if (mode_active(mode, g))
          variates.push_back(
              embed_variate(seq[g], params.variate.embed_w[g], params.variate.embed_b[g]));
      Tensor<S> fused = fuse_variates(concat(std::span<const Tensor<S>>(variates), 0),
                                      params.variate, cfg.fusion);
      std::int64_t row = 0;
      for (Granularity g : kGranularities) {
        if (!mode_active(mode, g)) continue;
        predicted[g] = predict_head(slice(fused, 0, row++, 1), params.variate.head_w[g],
                                    params.variate.head_b[g], granularity_len(g), td);
      }
      break;
    }
    case Backbone::temporal: {
      Tensor<S> all = concat({seq.daily, seq.weekly, seq.monthly}, 0);
      predicted = temporal_fusion(all, params.temporal, cfg.fusion);
      break;
    }
    case Backbone::mixer: {
      Tensor<S> all = concat({seq.daily, seq.weekly, seq.monthly}, 0);
      predicted = mixer_fusion(all, params.mixer, cfg.fusion);
      break;
    }
  }

  // Sequential skip, then decode each predicted token against the skip
  // feature of the granularity's last observed frame.
  PerGranularity<std::vector<Tensor<S>>> out;
  for (Granularity g : kGranularities) {
    if (!mode_active(mode, g)) continue;
    Tensor<S> tokens = sequential_skip(seq[g], predicted[g], params.skip);
    const std::int64_t p_len = granularity_len(g);
    out[g].reserve(static_cast<std::size_t>(p_len));
    for (std::int64_t k = 0; k < p_len; ++k) {
      Tensor<S> token = reshape(slice(tokens, 0, k, 1), {td});
      out[g].push_back(
          decode_frame(token, last_skip[g], params.codec, cfg.codec, cfg.height, cfg.width));
    }
  }
  return out;
}

template <typename S>
Tensor<S> loss_sifm(const PerGranularity<std::vector<Tensor<S>>>& pred,
                    const PerGranularity<std::vector<SicGrid>>& targets, GranularityMode mode) {
  std::vector<Tensor<S>> per_gran;
  for (Granularity g : kGranularities) {
    if (!mode_active(mode, g)) continue;
    const auto& p = pred[g];
    const auto& t = targets[g];
    if (p.size() != t.size() || p.empty()) {
      throw DimensionError(std::string("loss: ") + granularity_name(g) + " has " +
                           std::to_string(p.size()) + " predictions for " +
                           std::to_string(t.size()) + " targets");
    }
    std::vector<Tensor<S>> frame_losses;
    frame_losses.reserve(p.size());
    for (std::size_t k = 0; k < p.size(); ++k)
      frame_losses.push_back(mse(p[k], tensor_from_grid<S>(t[k])));
    per_gran.push_back(mean_all(concat(std::span<const Tensor<S>>(frame_losses), 0)));
  }
  return mean_all(concat(std::span<const Tensor<S>>(per_gran), 0));
}

template <typename S>
PerGranularity<std::vector<SicGrid>> forecast_sifm(
    const PerGranularity<std::vector<SicGrid>>& inputs, const ModelParams<S>& params,
    const ModelConfig& cfg, GranularityMode mode) {
  // No tape in scope: ops run forward-only.
  auto raw = forward_sifm(inputs, params, cfg, mode);
  PerGranularity<std::vector<SicGrid>> out;
  for (Granularity g : kGranularities)
    for (const auto& t : raw[g]) out[g].push_back(grid_from_tensor(t, /*clamp=*/true));
  return out;
}

std::int64_t model_param_count(const ModelConfig& cfg) {
  auto p = ModelParams<float>::shaped(cfg);
  return p.value_count();
}

#define SIFM_MODEL_INSTANTIATE(S)                                                           \
  template struct ModelParams<S>;                                                           \
  template Tensor<S> tensor_from_grid(const SicGrid&);                                      \
  template SicGrid grid_from_tensor(const Tensor<S>&, bool);                                \
  template PerGranularity<std::vector<Tensor<S>>> forward_sifm(                             \
      const PerGranularity<std::vector<SicGrid>>&, const ModelParams<S>&,                   \
      const ModelConfig&, GranularityMode);                                                 \
  template Tensor<S> loss_sifm(const PerGranularity<std::vector<Tensor<S>>>&,               \
                               const PerGranularity<std::vector<SicGrid>>&,                 \
                               GranularityMode);                                            \
  template PerGranularity<std::vector<SicGrid>> forecast_sifm(                              \
      const PerGranularity<std::vector<SicGrid>>&, const ModelParams<S>&,                   \
      const ModelConfig&, GranularityMode);

SIFM_MODEL_INSTANTIATE(float)
SIFM_MODEL_INSTANTIATE(double)
#undef SIFM_MODEL_INSTANTIATE

}  // namespace sifm
