#include "sifm/fusion.hpp"

#include <cmath>
#include <cstddef>

#include "sifm/errors.hpp"

namespace sifm {

const char* backbone_name(Backbone b) {
  switch (b) {
    case Backbone::variate: return "variate";
    case Backbone::temporal: return "temporal";
    case Backbone::mixer: return "mixer";
  }
  return "?";
}

Backbone backbone_from_name(const std::string& name) {
  if (name == "variate") return Backbone::variate;
  if (name == "temporal") return Backbone::temporal;
  if (name == "mixer") return Backbone::mixer;
  throw ConfigError("unknown fusion backbone '" + name +
                    "' (expected variate, temporal, or mixer)");
}

void FusionConfig::validate() const {
  if (d < 1) throw ConfigError("fusion d must be positive");
  if (num_layers < 1) throw ConfigError("fusion num_layers must be positive");
  if (num_heads < 1) throw ConfigError("fusion num_heads must be positive");
  if (d % num_heads != 0)
    throw ConfigError("fusion d " + std::to_string(d) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  if (ffn_hidden < 0) throw ConfigError("fusion ffn_hidden must be non-negative");
  if (ln_eps <= 0.0) throw ConfigError("fusion ln_eps must be positive");
}

namespace {

constexpr std::int64_t kAllLen = kDailyLen + kWeeklyLen + kMonthlyLen;  // 21

// Pre-norm multi-head self-attention + FFN over x: [n, dim].
template <typename S>
Tensor<S> encoder_layer(const Tensor<S>& x, const EncoderLayerParams<S>& p, int heads,
                        double eps, FusionProbe<S>* probe) {
  const std::int64_t n = x.extent(0), dim = x.extent(1);
  const std::int64_t hd = heads, dh = dim / hd;

  Tensor<S> h = layer_norm(x, p.ln1_g, p.ln1_b, eps);
  Tensor<S> qkv = add(matmul(h, p.qkv_w), p.qkv_b);              // [n, 3·dim]
  qkv = transpose(reshape(qkv, {n, 3, hd, dh}), {1, 2, 0, 3});   // [3, hd, n, dh]
  Tensor<S> q = reshape(slice(qkv, 0, 0, 1), {hd, n, dh});
  Tensor<S> k = reshape(slice(qkv, 0, 1, 1), {hd, n, dh});
  Tensor<S> v = reshape(slice(qkv, 0, 2, 1), {hd, n, dh});
  Tensor<S> scores = scale(matmul(q, transpose(k, {0, 2, 1})),
                           static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh))));
  Tensor<S> attn = softmax(scores);
  if (probe) probe->probs.push_back(attn);
  Tensor<S> ctx = reshape(transpose(matmul(attn, v), {1, 0, 2}), {n, dim});
  Tensor<S> y = add(x, add(matmul(ctx, p.proj_w), p.proj_b));

  Tensor<S> h2 = layer_norm(y, p.ln2_g, p.ln2_b, eps);
  Tensor<S> f = add(matmul(gelu(add(matmul(h2, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
  return add(y, f);
}

template <typename S>
EncoderLayerParams<S> shaped_layer(std::int64_t dim, std::int64_t hidden) {
  EncoderLayerParams<S> l;
  l.ln1_g = Tensor<S>({dim});
  l.ln1_b = Tensor<S>({dim});
  l.qkv_w = Tensor<S>({dim, 3 * dim});
  l.qkv_b = Tensor<S>({3 * dim});
  l.proj_w = Tensor<S>({dim, dim});
  l.proj_b = Tensor<S>({dim});
  l.ln2_g = Tensor<S>({dim});
  l.ln2_b = Tensor<S>({dim});
  l.ffn_w1 = Tensor<S>({dim, hidden});
  l.ffn_b1 = Tensor<S>({hidden});
  l.ffn_w2 = Tensor<S>({hidden, dim});
  l.ffn_b2 = Tensor<S>({dim});
  return l;
}

// Shared init rule (see param_init_class); the skip's out_w is zeroed by its
// own init instead.
template <typename S, typename P>
void fill_params(P& params, Rng& rng) {
  params.for_each("", [&rng](const std::string& name, Tensor<S>& t) {
    t.set_requires_grad(true);
    auto v = t.values_mut();
    switch (param_init_class(name)) {
      case ParamInit::ones:
        for (auto& x : v) x = S(1);
        break;
      case ParamInit::zeros:
        break;
      case ParamInit::random:
        for (auto& x : v) x = static_cast<S>(rng.truncated_normal(0.02, 2.0));
        break;
    }
  });
}

template <typename S>
Tensor<S> segment_head(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                       std::int64_t start, std::int64_t len, std::int64_t token_dim) {
  Tensor<S> seg = reshape(slice(x, 0, start, len), {1, len * token_dim});
  return reshape(add(matmul(seg, w), b), {len, token_dim});
}

}  // namespace

template <typename S>
Tensor<S> embed_variate(const Tensor<S>& seq, const Tensor<S>& w, const Tensor<S>& b) {
  if (seq.rank() != 2)
    throw DimensionError("embed_variate expects [L, token_dim], got " + shape_str(seq.shape()));
  const std::int64_t flat = seq.extent(0) * seq.extent(1);
  if (flat != w.extent(0))
    throw DimensionError("sequence " + shape_str(seq.shape()) + " does not match embedding " +
                         shape_str(w.shape()));
  return add(matmul(reshape(seq, {1, flat}), w), b);
}

template <typename S>
Tensor<S> fuse_variates(const Tensor<S>& tokens, const VariateParams<S>& params,
                        const FusionConfig& cfg, FusionProbe<S>* probe) {
  if (tokens.rank() != 2 || tokens.extent(1) != cfg.d)
    throw DimensionError("fuse_variates expects [V, d], got " + shape_str(tokens.shape()));
  Tensor<S> x = tokens;
  for (const auto& layer : params.layers)
    x = encoder_layer(x, layer, cfg.num_heads, cfg.ln_eps, probe);
  return x;
}

template <typename S>
Tensor<S> predict_head(const Tensor<S>& fused, const Tensor<S>& w, const Tensor<S>& b,
                       std::int64_t predict_len, std::int64_t token_dim) {
  if (fused.rank() != 2 || fused.extent(0) != 1)
    throw DimensionError("predict_head expects [1, d], got " + shape_str(fused.shape()));
  return reshape(add(matmul(fused, w), b), {predict_len, token_dim});
}

template <typename S>
Tensor<S> sequential_skip(const Tensor<S>& pre_tokens, const Tensor<S>& predicted,
                          const SkipParams<S>& params, FusionProbe<S>* probe) {
  if (pre_tokens.rank() != 2 || predicted.rank() != 2 ||
      pre_tokens.extent(1) != predicted.extent(1))
    throw DimensionError("sequential_skip expects [L, token_dim] and [P, token_dim], got " +
                         shape_str(pre_tokens.shape()) + " and " +
                         shape_str(predicted.shape()));
  if (pre_tokens.extent(0) != predicted.extent(0))
    throw DimensionError("sequential_skip needs L == P, got L=" +
                         std::to_string(pre_tokens.extent(0)) + " P=" +
                         std::to_string(predicted.extent(0)));
  const std::int64_t td = predicted.extent(1);
  Tensor<S> q = add(matmul(pre_tokens, params.q_w), params.q_b);
  Tensor<S> kv = add(matmul(predicted, params.kv_w), params.kv_b);  // K = V
  Tensor<S> scores = scale(matmul(q, transpose(kv, {1, 0})),
                           static_cast<S>(1.0 / std::sqrt(static_cast<double>(td))));
  Tensor<S> attn = softmax(scores);
  if (probe) probe->probs.push_back(attn);
  Tensor<S> ctx = matmul(attn, kv);
  return add(predicted, add(matmul(ctx, params.out_w), params.out_b));
}

template <typename S>
PerGranularity<Tensor<S>> temporal_fusion(const Tensor<S>& tokens,
                                          const TemporalParams<S>& params,
                                          const FusionConfig& cfg, FusionProbe<S>* probe) {
  if (tokens.rank() != 2 || tokens.extent(0) != kAllLen)
    throw DimensionError("temporal_fusion expects [21, token_dim], got " +
                         shape_str(tokens.shape()));
  const std::int64_t td = tokens.extent(1);
  std::vector<std::int64_t> gran_rows(static_cast<std::size_t>(kAllLen));
  {
    std::size_t i = 0;
    for (Granularity g : kGranularities)
      for (int k = 0; k < granularity_len(g); ++k)
        gran_rows[i++] = static_cast<std::int64_t>(g);
  }
  Tensor<S> x = add(tokens, gather_rows(params.gran_embed, gran_rows));
  x = add(x, params.pos_embed);
  for (const auto& layer : params.layers)
    x = encoder_layer(x, layer, cfg.num_heads, cfg.ln_eps, probe);
  PerGranularity<Tensor<S>> out;
  std::int64_t start = 0;
  for (Granularity g : kGranularities) {
    const std::int64_t len = granularity_len(g);
    out[g] = segment_head(x, params.head_w[g], params.head_b[g], start, len, td);
    start += len;
  }
  return out;
}

template <typename S>
PerGranularity<Tensor<S>> mixer_fusion(const Tensor<S>& tokens, const MixerParams<S>& params,
                                       const FusionConfig& cfg, FusionProbe<S>* probe) {
  (void)probe;  // no attention in the mixer
  if (tokens.rank() != 2 || tokens.extent(0) != kAllLen)
    throw DimensionError("mixer_fusion expects [21, token_dim], got " +
                         shape_str(tokens.shape()));
  const std::int64_t td = tokens.extent(1);
  Tensor<S> x = tokens;
  for (const auto& l : params.layers) {
    Tensor<S> t = transpose(layer_norm(x, l.ln1_g, l.ln1_b, cfg.ln_eps), {1, 0});  // [td, 21]
    t = add(matmul(gelu(add(matmul(t, l.tok_w1), l.tok_b1)), l.tok_w2), l.tok_b2);
    x = add(x, transpose(t, {1, 0}));
    Tensor<S> c = layer_norm(x, l.ln2_g, l.ln2_b, cfg.ln_eps);
    c = add(matmul(gelu(add(matmul(c, l.ch_w1), l.ch_b1)), l.ch_w2), l.ch_b2);
    x = add(x, c);
  }
  PerGranularity<Tensor<S>> out;
  std::int64_t start = 0;
  for (Granularity g : kGranularities) {
    const std::int64_t len = granularity_len(g);
    out[g] = segment_head(x, params.head_w[g], params.head_b[g], start, len, td);
    start += len;
  }
  return out;
}

template <typename S>
VariateParams<S> VariateParams<S>::shaped(const FusionConfig& cfg, int token_dim) {
  cfg.validate();
  if (token_dim < 1) throw ConfigError("token_dim must be positive");
  VariateParams<S> p;
  for (Granularity g : kGranularities) {
    const std::int64_t flat = static_cast<std::int64_t>(granularity_len(g)) * token_dim;
    p.embed_w[g] = Tensor<S>({flat, cfg.d});
    p.embed_b[g] = Tensor<S>({cfg.d});
    p.head_w[g] = Tensor<S>({cfg.d, flat});
    p.head_b[g] = Tensor<S>({flat});
  }
  for (int l = 0; l < cfg.num_layers; ++l)
    p.layers.push_back(shaped_layer<S>(cfg.d, cfg.ffn_width(cfg.d)));
  return p;
}

template <typename S>
VariateParams<S> VariateParams<S>::init(const FusionConfig& cfg, int token_dim, Rng& rng) {
  VariateParams<S> p = shaped(cfg, token_dim);
  fill_params<S>(p, rng);
  return p;
}

template <typename S>
TemporalParams<S> TemporalParams<S>::shaped(const FusionConfig& cfg, int token_dim) {
  cfg.validate();
  if (token_dim < 1) throw ConfigError("token_dim must be positive");
  if (token_dim % cfg.num_heads != 0)
    throw ConfigError("temporal backbone: token_dim " + std::to_string(token_dim) +
                      " not divisible by " + std::to_string(cfg.num_heads) + " heads");
  TemporalParams<S> p;
  p.gran_embed = Tensor<S>({3, token_dim});
  p.pos_embed = Tensor<S>({kAllLen, token_dim});
  for (int l = 0; l < cfg.num_layers; ++l)
    p.layers.push_back(shaped_layer<S>(token_dim, cfg.ffn_width(token_dim)));
  for (Granularity g : kGranularities) {
    const std::int64_t flat = static_cast<std::int64_t>(granularity_len(g)) * token_dim;
    p.head_w[g] = Tensor<S>({flat, flat});
    p.head_b[g] = Tensor<S>({flat});
  }
  return p;
}

template <typename S>
TemporalParams<S> TemporalParams<S>::init(const FusionConfig& cfg, int token_dim, Rng& rng) {
  TemporalParams<S> p = shaped(cfg, token_dim);
  fill_params<S>(p, rng);
  return p;
}

template <typename S>
MixerParams<S> MixerParams<S>::shaped(const FusionConfig& cfg, int token_dim) {
  cfg.validate();
  if (token_dim < 1) throw ConfigError("token_dim must be positive");
  MixerParams<S> p;
  const std::int64_t hidden_n = 4 * kAllLen;
  const std::int64_t hidden_c = cfg.ffn_width(token_dim);
  for (int l = 0; l < cfg.num_layers; ++l) {
    MixerLayerParams<S> lay;
    lay.ln1_g = Tensor<S>({token_dim});
    lay.ln1_b = Tensor<S>({token_dim});
    lay.tok_w1 = Tensor<S>({kAllLen, hidden_n});
    lay.tok_b1 = Tensor<S>({hidden_n});
    lay.tok_w2 = Tensor<S>({hidden_n, kAllLen});
    lay.tok_b2 = Tensor<S>({kAllLen});
    lay.ln2_g = Tensor<S>({token_dim});
    lay.ln2_b = Tensor<S>({token_dim});
    lay.ch_w1 = Tensor<S>({token_dim, hidden_c});
    lay.ch_b1 = Tensor<S>({hidden_c});
    lay.ch_w2 = Tensor<S>({hidden_c, token_dim});
    lay.ch_b2 = Tensor<S>({token_dim});
    p.layers.push_back(std::move(lay));
  }
  for (Granularity g : kGranularities) {
    const std::int64_t flat = static_cast<std::int64_t>(granularity_len(g)) * token_dim;
    p.head_w[g] = Tensor<S>({flat, flat});
    p.head_b[g] = Tensor<S>({flat});
  }
  return p;
}

template <typename S>
MixerParams<S> MixerParams<S>::init(const FusionConfig& cfg, int token_dim, Rng& rng) {
  MixerParams<S> p = shaped(cfg, token_dim);
  fill_params<S>(p, rng);
  return p;
}

template <typename S>
SkipParams<S> SkipParams<S>::shaped(int token_dim) {
  if (token_dim < 1) throw ConfigError("token_dim must be positive");
  const std::int64_t td = token_dim;
  SkipParams<S> p;
  p.q_w = Tensor<S>({td, td});
  p.q_b = Tensor<S>({td});
  p.kv_w = Tensor<S>({td, td});
  p.kv_b = Tensor<S>({td});
  p.out_w = Tensor<S>({td, td});
  p.out_b = Tensor<S>({td});
  return p;
}

template <typename S>
SkipParams<S> SkipParams<S>::init(int token_dim, Rng& rng) {
  SkipParams<S> p = shaped(token_dim);
  p.for_each("", [&rng](const std::string& name, Tensor<S>& t) {
    t.set_requires_grad(true);
    if (name == "q_w" || name == "kv_w") {
      auto v = t.values_mut();
      for (auto& x : v) x = static_cast<S>(rng.truncated_normal(0.02, 2.0));
    }
    // out_w, out_b and the biases stay zero: the skip is exact identity at
    // init, so an untrained model is unaffected by the skip path.
  });
  return p;
}

#define SIFM_FUSION_INSTANTIATE(S)                                                            \
  template struct EncoderLayerParams<S>;                                                      \
  template struct VariateParams<S>;                                                           \
  template struct TemporalParams<S>;                                                          \
  template struct MixerParams<S>;                                                             \
  template struct SkipParams<S>;                                                              \
  template Tensor<S> embed_variate(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);     \
  template Tensor<S> fuse_variates(const Tensor<S>&, const VariateParams<S>&,                 \
                                   const FusionConfig&, FusionProbe<S>*);                     \
  template Tensor<S> predict_head(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,       \
                                  std::int64_t, std::int64_t);                                \
  template Tensor<S> sequential_skip(const Tensor<S>&, const Tensor<S>&,                      \
                                     const SkipParams<S>&, FusionProbe<S>*);                  \
  template PerGranularity<Tensor<S>> temporal_fusion(const Tensor<S>&,                        \
                                                     const TemporalParams<S>&,               \
                                                     const FusionConfig&, FusionProbe<S>*);  \
  template PerGranularity<Tensor<S>> mixer_fusion(const Tensor<S>&, const MixerParams<S>&,    \
                                                  const FusionConfig&, FusionProbe<S>*);

SIFM_FUSION_INSTANTIATE(float)
SIFM_FUSION_INSTANTIATE(double)
#undef SIFM_FUSION_INSTANTIATE

}  // namespace sifm
