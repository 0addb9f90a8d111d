#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sifm/codec.hpp"
#include "sifm/fusion.hpp"
#include "sifm/grid.hpp"
#include "sifm/tensor.hpp"

namespace sifm {

// Which granularities participate in the forward pass and the loss. The
// single modes exist for the ablation harness ("trained solely on
// single-granularity data") and run the variate backbone with V = 1.
enum class GranularityMode { multi, daily_only, weekly_only, monthly_only };

const char* mode_name(GranularityMode m);
GranularityMode mode_from_name(const std::string& name);  // ConfigError on unknown
// The one active granularity, or nullopt in multi mode.
std::optional<Granularity> single_granularity(GranularityMode m);
bool mode_active(GranularityMode m, Granularity g);

struct ModelConfig {
  std::int64_t height = 64;
  std::int64_t width = 64;
  CodecConfig codec;
  FusionConfig fusion;

  void validate() const;
};

// Full parameter set. The codec is shared by every frame of every
// granularity; exactly one fusion backbone is populated (cfg.fusion.backbone
// selects it); one sequential-skip parameter set is shared across
// granularities, which is well-formed because every granularity's token
// sequence has the same width.
template <typename S>
struct ModelParams {
  CodecParams<S> codec;
  VariateParams<S> variate;
  TemporalParams<S> temporal;
  MixerParams<S> mixer;
  SkipParams<S> skip;
  Backbone backbone = Backbone::variate;

  // Visits every tensor of the ACTIVE backbone as (name, tensor&) in the
  // fixed order init() draws and checkpoints serialize.
  template <typename F>
  void for_each(F&& f) {
    codec.template for_each<F&>("codec.", f);
    switch (backbone) {
      case Backbone::variate: variate.template for_each<F&>("fusion.", f); break;
      case Backbone::temporal: temporal.template for_each<F&>("fusion.", f); break;
      case Backbone::mixer: mixer.template for_each<F&>("fusion.", f); break;
    }
    skip.template for_each<F&>("skip.", f);
  }

  std::vector<Tensor<S>*> tensors();                            // for_each order
  std::vector<std::pair<std::string, Tensor<S>*>> named_tensors();
  std::int64_t value_count();
  void set_requires_grad(bool on);

  static ModelParams shaped(const ModelConfig& cfg);
  // Deterministic init; each module draws from its own derived stream, so
  // e.g. the codec starts identically across backbone ablations.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
};

// Input grid → [H, W] tensor (not a gradient leaf).
template <typename S>
Tensor<S> tensor_from_grid(const SicGrid& g);
// Raw decoder output → grid; clamps to [0, 1] when `clamp` (inference only).
template <typename S>
SicGrid grid_from_tensor(const Tensor<S>& t, bool clamp);

// Raw predicted frames per active granularity (inactive ones stay empty):
// encode all input frames through the shared codec, fuse per backbone,
// apply the sequential skip, decode every predicted token against the skip
// feature of that granularity's most recent input frame.
template <typename S>
PerGranularity<std::vector<Tensor<S>>> forward_sifm(
    const PerGranularity<std::vector<SicGrid>>& inputs, const ModelParams<S>& params,
    const ModelConfig& cfg, GranularityMode mode = GranularityMode::multi);

// Mean of the active granularities' MSEs (equal weights).
template <typename S>
Tensor<S> loss_sifm(const PerGranularity<std::vector<Tensor<S>>>& pred,
                    const PerGranularity<std::vector<SicGrid>>& targets,
                    GranularityMode mode = GranularityMode::multi);

// Inference wrapper: forward + clamp to [0, 1] grids. No tape is left
// behind (the internal tape is dropped unused).
template <typename S>
PerGranularity<std::vector<SicGrid>> forecast_sifm(
    const PerGranularity<std::vector<SicGrid>>& inputs, const ModelParams<S>& params,
    const ModelConfig& cfg, GranularityMode mode = GranularityMode::multi);

std::int64_t model_param_count(const ModelConfig& cfg);

#define SIFM_MODEL_EXTERN(S)                                                                \
  extern template struct ModelParams<S>;                                                    \
  extern template Tensor<S> tensor_from_grid(const SicGrid&);                               \
  extern template SicGrid grid_from_tensor(const Tensor<S>&, bool);                         \
  extern template PerGranularity<std::vector<Tensor<S>>> forward_sifm(                      \
      const PerGranularity<std::vector<SicGrid>>&, const ModelParams<S>&,                   \
      const ModelConfig&, GranularityMode);                                                 \
  extern template Tensor<S> loss_sifm(const PerGranularity<std::vector<Tensor<S>>>&,        \
                                      const PerGranularity<std::vector<SicGrid>>&,          \
                                      GranularityMode);                                     \
  extern template PerGranularity<std::vector<SicGrid>> forecast_sifm(                       \
      const PerGranularity<std::vector<SicGrid>>&, const ModelParams<S>&,                   \
      const ModelConfig&, GranularityMode);

SIFM_MODEL_EXTERN(float)
SIFM_MODEL_EXTERN(double)
#undef SIFM_MODEL_EXTERN

}  // namespace sifm
