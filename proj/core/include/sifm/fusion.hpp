#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sifm/grid.hpp"
#include "sifm/ops.hpp"
#include "sifm/rng.hpp"
#include "sifm/tensor.hpp"

namespace sifm {

// Sequential backbones over the per-granularity token sequences. The primary
// (variate) backbone embeds each granularity's whole sequence into one
// variate token, attends across the three variates, and predicts each
// granularity's future tokens from its fused variate. Two ablation
// backbones — a temporal-token transformer and an MLP-mixer — consume the
// same 21-token concatenation and emit identically shaped predictions.

enum class Backbone { variate, temporal, mixer };

const char* backbone_name(Backbone b);
Backbone backbone_from_name(const std::string& name);  // ConfigError on unknown

struct FusionConfig {
  int d = 128;         // variate token width
  int num_layers = 2;
  int num_heads = 4;
  int ffn_hidden = 0;  // 0 → 4 × working width
  Backbone backbone = Backbone::variate;
  double ln_eps = 1e-5;

  int ffn_width(int dim) const { return ffn_hidden > 0 ? ffn_hidden : 4 * dim; }
  void validate() const;
};

// One pre-norm encoder layer (self-attention + FFN), width agnostic.
template <typename S>
struct EncoderLayerParams {
  Tensor<S> ln1_g, ln1_b;
  Tensor<S> qkv_w, qkv_b;  // [dim, 3·dim]
  Tensor<S> proj_w, proj_b;
  Tensor<S> ln2_g, ln2_b;
  Tensor<S> ffn_w1, ffn_b1;  // [dim, hidden]
  Tensor<S> ffn_w2, ffn_b2;  // [hidden, dim]
};

template <typename S>
struct VariateParams {
  PerGranularity<Tensor<S>> embed_w;  // [L_g·token_dim, D]
  PerGranularity<Tensor<S>> embed_b;  // [D]
  std::vector<EncoderLayerParams<S>> layers;
  PerGranularity<Tensor<S>> head_w;  // [D, P_g·token_dim]
  PerGranularity<Tensor<S>> head_b;

  template <typename F>
  void for_each(const std::string& prefix, F&& f);
  static VariateParams shaped(const FusionConfig& cfg, int token_dim);
  static VariateParams init(const FusionConfig& cfg, int token_dim, Rng& rng);
};

template <typename S>
struct TemporalParams {
  Tensor<S> gran_embed;  // [3, token_dim], one learned row per granularity
  Tensor<S> pos_embed;   // [21, token_dim]
  std::vector<EncoderLayerParams<S>> layers;
  PerGranularity<Tensor<S>> head_w;  // [L_g·token_dim, P_g·token_dim]
  PerGranularity<Tensor<S>> head_b;

  template <typename F>
  void for_each(const std::string& prefix, F&& f);
  static TemporalParams shaped(const FusionConfig& cfg, int token_dim);
  static TemporalParams init(const FusionConfig& cfg, int token_dim, Rng& rng);
};

template <typename S>
struct MixerLayerParams {
  Tensor<S> ln1_g, ln1_b;    // pre token-mix norm (over channels)
  Tensor<S> tok_w1, tok_b1;  // [21, hidden_n]
  Tensor<S> tok_w2, tok_b2;  // [hidden_n, 21]
  Tensor<S> ln2_g, ln2_b;    // pre channel-mix norm
  Tensor<S> ch_w1, ch_b1;    // [token_dim, hidden_c]
  Tensor<S> ch_w2, ch_b2;    // [hidden_c, token_dim]
};

template <typename S>
struct MixerParams {
  std::vector<MixerLayerParams<S>> layers;
  PerGranularity<Tensor<S>> head_w;
  PerGranularity<Tensor<S>> head_b;

  template <typename F>
  void for_each(const std::string& prefix, F&& f);
  static MixerParams shaped(const FusionConfig& cfg, int token_dim);
  static MixerParams init(const FusionConfig& cfg, int token_dim, Rng& rng);
};

// Cross-attention sequential skip: Q from the encoder-side token sequence,
// K = V from the predicted tokens, single head, zero-initialized output
// projection (identity at init).
template <typename S>
struct SkipParams {
  Tensor<S> q_w, q_b;
  Tensor<S> kv_w, kv_b;
  Tensor<S> out_w, out_b;

  template <typename F>
  void for_each(const std::string& prefix, F&& f);
  static SkipParams shaped(int token_dim);
  static SkipParams init(int token_dim, Rng& rng);
};

template <typename S>
struct FusionProbe {
  std::vector<Tensor<S>> probs;
};

// [L_g, token_dim] sequence → [1, D] variate token.
template <typename S>
Tensor<S> embed_variate(const Tensor<S>& seq, const Tensor<S>& w, const Tensor<S>& b);

// [V, D] stacked variate tokens → [V, D]; V may be 1 (single-granularity
// ablations) or 3.
template <typename S>
Tensor<S> fuse_variates(const Tensor<S>& tokens, const VariateParams<S>& params,
                        const FusionConfig& cfg, FusionProbe<S>* probe = nullptr);

// [1, D] fused variate → [P, token_dim] predicted tokens.
template <typename S>
Tensor<S> predict_head(const Tensor<S>& fused, const Tensor<S>& w, const Tensor<S>& b,
                       std::int64_t predict_len, std::int64_t token_dim);

// predicted + cross_attention(Q=proj(pre_tokens), K=V=proj(predicted)).
template <typename S>
Tensor<S> sequential_skip(const Tensor<S>& pre_tokens, const Tensor<S>& predicted,
                          const SkipParams<S>& params, FusionProbe<S>* probe = nullptr);

// Ablation backbones: the 21-token concatenation (daily, weekly, monthly
// order) → per-granularity predicted token blocks.
template <typename S>
PerGranularity<Tensor<S>> temporal_fusion(const Tensor<S>& tokens,
                                          const TemporalParams<S>& params,
                                          const FusionConfig& cfg,
                                          FusionProbe<S>* probe = nullptr);

template <typename S>
PerGranularity<Tensor<S>> mixer_fusion(const Tensor<S>& tokens, const MixerParams<S>& params,
                                       const FusionConfig& cfg, FusionProbe<S>* probe = nullptr);

template <typename S>
template <typename F>
void VariateParams<S>::for_each(const std::string& prefix, F&& f) {
  for (Granularity g : kGranularities) {
    const std::string gn = granularity_name(g);
    f(prefix + "embed." + gn + "_w", embed_w[g]);
    f(prefix + "embed." + gn + "_b", embed_b[g]);
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + "layer" + std::to_string(l) + ".";
    auto& lay = layers[l];
    f(lp + "ln1_g", lay.ln1_g);
    f(lp + "ln1_b", lay.ln1_b);
    f(lp + "qkv_w", lay.qkv_w);
    f(lp + "qkv_b", lay.qkv_b);
    f(lp + "proj_w", lay.proj_w);
    f(lp + "proj_b", lay.proj_b);
    f(lp + "ln2_g", lay.ln2_g);
    f(lp + "ln2_b", lay.ln2_b);
    f(lp + "ffn_w1", lay.ffn_w1);
    f(lp + "ffn_b1", lay.ffn_b1);
    f(lp + "ffn_w2", lay.ffn_w2);
    f(lp + "ffn_b2", lay.ffn_b2);
  }
  for (Granularity g : kGranularities) {
    const std::string gn = granularity_name(g);
    f(prefix + "head." + gn + "_w", head_w[g]);
    f(prefix + "head." + gn + "_b", head_b[g]);
  }
}

template <typename S>
template <typename F>
void TemporalParams<S>::for_each(const std::string& prefix, F&& f) {
  f(prefix + "gran_embed", gran_embed);
  f(prefix + "pos_embed", pos_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + "layer" + std::to_string(l) + ".";
    auto& lay = layers[l];
    f(lp + "ln1_g", lay.ln1_g);
    f(lp + "ln1_b", lay.ln1_b);
    f(lp + "qkv_w", lay.qkv_w);
    f(lp + "qkv_b", lay.qkv_b);
    f(lp + "proj_w", lay.proj_w);
    f(lp + "proj_b", lay.proj_b);
    f(lp + "ln2_g", lay.ln2_g);
    f(lp + "ln2_b", lay.ln2_b);
    f(lp + "ffn_w1", lay.ffn_w1);
    f(lp + "ffn_b1", lay.ffn_b1);
    f(lp + "ffn_w2", lay.ffn_w2);
    f(lp + "ffn_b2", lay.ffn_b2);
  }
  for (Granularity g : kGranularities) {
    const std::string gn = granularity_name(g);
    f(prefix + "head." + gn + "_w", head_w[g]);
    f(prefix + "head." + gn + "_b", head_b[g]);
  }
}

template <typename S>
template <typename F>
void MixerParams<S>::for_each(const std::string& prefix, F&& f) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + "layer" + std::to_string(l) + ".";
    auto& lay = layers[l];
    f(lp + "ln1_g", lay.ln1_g);
    f(lp + "ln1_b", lay.ln1_b);
    f(lp + "tok_w1", lay.tok_w1);
    f(lp + "tok_b1", lay.tok_b1);
    f(lp + "tok_w2", lay.tok_w2);
    f(lp + "tok_b2", lay.tok_b2);
    f(lp + "ln2_g", lay.ln2_g);
    f(lp + "ln2_b", lay.ln2_b);
    f(lp + "ch_w1", lay.ch_w1);
    f(lp + "ch_b1", lay.ch_b1);
    f(lp + "ch_w2", lay.ch_w2);
    f(lp + "ch_b2", lay.ch_b2);
  }
  for (Granularity g : kGranularities) {
    const std::string gn = granularity_name(g);
    f(prefix + "head." + gn + "_w", head_w[g]);
    f(prefix + "head." + gn + "_b", head_b[g]);
  }
}

template <typename S>
template <typename F>
void SkipParams<S>::for_each(const std::string& prefix, F&& f) {
  f(prefix + "q_w", q_w);
  f(prefix + "q_b", q_b);
  f(prefix + "kv_w", kv_w);
  f(prefix + "kv_b", kv_b);
  f(prefix + "out_w", out_w);
  f(prefix + "out_b", out_b);
}

#define SIFM_FUSION_EXTERN(S)                                                                 \
  extern template struct EncoderLayerParams<S>;                                               \
  extern template struct VariateParams<S>;                                                    \
  extern template struct TemporalParams<S>;                                                   \
  extern template struct MixerParams<S>;                                                      \
  extern template struct SkipParams<S>;                                                       \
  extern template Tensor<S> embed_variate(const Tensor<S>&, const Tensor<S>&,                 \
                                          const Tensor<S>&);                                  \
  extern template Tensor<S> fuse_variates(const Tensor<S>&, const VariateParams<S>&,          \
                                          const FusionConfig&, FusionProbe<S>*);              \
  extern template Tensor<S> predict_head(const Tensor<S>&, const Tensor<S>&,                  \
                                         const Tensor<S>&, std::int64_t, std::int64_t);       \
  extern template Tensor<S> sequential_skip(const Tensor<S>&, const Tensor<S>&,               \
                                            const SkipParams<S>&, FusionProbe<S>*);           \
  extern template PerGranularity<Tensor<S>> temporal_fusion(const Tensor<S>&,                 \
                                                            const TemporalParams<S>&,        \
                                                            const FusionConfig&,             \
                                                            FusionProbe<S>*);                \
  extern template PerGranularity<Tensor<S>> mixer_fusion(const Tensor<S>&,                    \
                                                         const MixerParams<S>&,              \
                                                         const FusionConfig&,                \
                                                         FusionProbe<S>*);

SIFM_FUSION_EXTERN(float)
SIFM_FUSION_EXTERN(double)
#undef SIFM_FUSION_EXTERN

}  // namespace sifm
