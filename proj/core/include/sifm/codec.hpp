#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sifm/ops.hpp"
#include "sifm/rng.hpp"
#include "sifm/tensor.hpp"

namespace sifm {

// Shared spatial codec: every SIC frame of every granularity runs through
// one parameter set. Encoder: 2×2 patch partition → stem attention pair
// (skip feature captured here) → num_merge_stages × (merge → pair) →
// flatten → linear to a 1-D token. Decoder mirrors it with patch expanding,
// adds the stem-resolution skip elementwise, and ends in a per-patch linear
// head back to H×W.
struct CodecConfig {
  int patch_size = 2;  // fixed at 2 ("smallest 2 by 2 window")
  int stem_channels = 32;
  int num_merge_stages = 2;
  int attn_window = 4;
  std::vector<int> heads_per_stage = {2, 4, 8};  // stem, then each merged stage
  int token_dim = 64;
  double ln_eps = 1e-5;

  // Channels after `stage` merges (stage 0 = stem).
  int stage_channels(int stage) const { return stem_channels << stage; }
  int num_stages() const { return num_merge_stages + 1; }
  std::int64_t map_side(std::int64_t side, int stage) const {
    return side >> (1 + stage);
  }
  void validate(std::int64_t height, std::int64_t width) const;
};

inline constexpr int kMlpRatio = 4;  // Swin block FFN hidden = 4·channels

template <typename S>
struct SwinBlockParams {
  Tensor<S> qkv_w, qkv_b;    // [c, 3c], [3c]
  Tensor<S> proj_w, proj_b;  // [c, c], [c]
  Tensor<S> ln1_g, ln1_b;    // post-attention norm
  Tensor<S> mlp_w1, mlp_b1;  // [c, 4c], [4c]
  Tensor<S> mlp_w2, mlp_b2;  // [4c, c], [c]
  Tensor<S> ln2_g, ln2_b;    // post-MLP norm
  Tensor<S> relpos;          // [(2w−1)², heads] learned relative-position bias
};

template <typename S>
struct SwinPairParams {
  SwinBlockParams<S> b0;  // unshifted
  SwinBlockParams<S> b1;  // shifted by window/2
};

template <typename S>
struct CodecParams {
  Tensor<S> patch_w, patch_b;  // [p², stem], [stem]
  SwinPairParams<S> stem;
  struct EncStage {
    Tensor<S> merge_w, merge_b;  // [4c, 2c], [2c]
    SwinPairParams<S> pair;
  };
  std::vector<EncStage> enc;
  Tensor<S> token_w, token_b;      // [hb·wb·cb, token_dim]
  Tensor<S> detoken_w, detoken_b;  // [token_dim, hb·wb·cb]
  struct DecStage {
    SwinPairParams<S> pair;
    Tensor<S> expand_w, expand_b;  // [c, 2c], [2c]
  };
  std::vector<DecStage> dec;
  Tensor<S> head_w, head_b;  // [stem, p²], [p²]

  // Visits every tensor as (name, tensor&) in a fixed construction order —
  // the same order init() draws values and checkpoints serialize.
  template <typename F>
  void for_each(const std::string& prefix, F&& f);

  static CodecParams init(const CodecConfig& cfg, std::int64_t height, std::int64_t width,
                          Rng& rng);
  // Shapes allocated but values untouched (zeros) — for checkpoint loading.
  static CodecParams shaped(const CodecConfig& cfg, std::int64_t height, std::int64_t width);
};

template <typename S>
template <typename F>
void CodecParams<S>::for_each(const std::string& prefix, F&& f) {
  auto block = [&f](const std::string& bp, SwinBlockParams<S>& b) {
    f(bp + ".qkv_w", b.qkv_w);
    f(bp + ".qkv_b", b.qkv_b);
    f(bp + ".proj_w", b.proj_w);
    f(bp + ".proj_b", b.proj_b);
    f(bp + ".ln1_g", b.ln1_g);
    f(bp + ".ln1_b", b.ln1_b);
    f(bp + ".mlp_w1", b.mlp_w1);
    f(bp + ".mlp_b1", b.mlp_b1);
    f(bp + ".mlp_w2", b.mlp_w2);
    f(bp + ".mlp_b2", b.mlp_b2);
    f(bp + ".ln2_g", b.ln2_g);
    f(bp + ".ln2_b", b.ln2_b);
    f(bp + ".relpos", b.relpos);
  };
  auto pair = [&block](const std::string& pp, SwinPairParams<S>& p) {
    block(pp + ".b0", p.b0);
    block(pp + ".b1", p.b1);
  };
  f(prefix + "patch_w", patch_w);
  f(prefix + "patch_b", patch_b);
  pair(prefix + "stem", stem);
  for (std::size_t i = 0; i < enc.size(); ++i) {
    const std::string sp = prefix + "enc" + std::to_string(i);
    f(sp + ".merge_w", enc[i].merge_w);
    f(sp + ".merge_b", enc[i].merge_b);
    pair(sp, enc[i].pair);
  }
  f(prefix + "token_w", token_w);
  f(prefix + "token_b", token_b);
  f(prefix + "detoken_w", detoken_w);
  f(prefix + "detoken_b", detoken_b);
  for (std::size_t i = 0; i < dec.size(); ++i) {
    const std::string sp = prefix + "dec" + std::to_string(i);
    pair(sp, dec[i].pair);
    f(sp + ".expand_w", dec[i].expand_w);
    f(sp + ".expand_b", dec[i].expand_b);
  }
  f(prefix + "head_w", head_w);
  f(prefix + "head_b", head_b);
}

// Captured attention probability tensors ([nW, heads, T, T]), for tests.
template <typename S>
struct AttnProbe {
  std::vector<Tensor<S>> probs;
};

// [H, W] frame → [H/p, W/p, c] learned linear patch embedding.
template <typename S>
Tensor<S> patch_partition(const Tensor<S>& frame, const Tensor<S>& w, const Tensor<S>& b,
                          int patch);

// One W-MSA/SW-MSA + MLP block with residual-post-norm:
//   z_s = LN(WMSA(z)) + z;  z' = LN(MLP(z_s)) + z_s.
template <typename S>
Tensor<S> swin_block(const Tensor<S>& x, const SwinBlockParams<S>& p, int window, int heads,
                     bool shifted, double ln_eps, AttnProbe<S>* probe = nullptr);

// Unshifted block then shifted block.
template <typename S>
Tensor<S> swin_block_pair(const Tensor<S>& x, const SwinPairParams<S>& p, int window, int heads,
                          double ln_eps, AttnProbe<S>* probe = nullptr);

// [h, w, c] → [h/2, w/2, 2c]: 2×2 concat (row-major patch order) + linear.
template <typename S>
Tensor<S> patch_merge(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);

// [h, w, c] → [2h, 2w, c/2]: linear to 2c + pixel-shuffle rearrangement.
template <typename S>
Tensor<S> patch_expand(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);

// Additive attention mask for shifted windows: [nW, T, T], entries 0 or
// kMaskOff so cyclically wrapped cells cannot attend across the seam.
template <typename S>
Tensor<S> make_shift_mask(std::int64_t h, std::int64_t w, int window, int shift);

// Relative-position bias row index for each (query, key) pair in a window.
std::vector<std::int64_t> relative_position_index(int window);

template <typename S>
struct EncodeResult {
  Tensor<S> token;  // [token_dim]
  Tensor<S> skip;   // [H/p, W/p, stem_channels]
};

template <typename S>
EncodeResult<S> encode_frame(const Tensor<S>& frame, const CodecParams<S>& params,
                             const CodecConfig& cfg, AttnProbe<S>* probe = nullptr);

// Raw decoder output (no clamping) of shape [H, W].
template <typename S>
Tensor<S> decode_frame(const Tensor<S>& token, const Tensor<S>& skip,
                       const CodecParams<S>& params, const CodecConfig& cfg, std::int64_t height,
                       std::int64_t width, AttnProbe<S>* probe = nullptr);

// Total tensor-element count of a codec parameter set (audit helper).
std::int64_t codec_param_count(const CodecConfig& cfg, std::int64_t height, std::int64_t width);

#define SIFM_CODEC_EXTERN(S)                                                                  \
  extern template struct SwinBlockParams<S>;                                                  \
  extern template struct CodecParams<S>;                                                      \
  extern template Tensor<S> patch_partition(const Tensor<S>&, const Tensor<S>&,               \
                                            const Tensor<S>&, int);                           \
  extern template Tensor<S> swin_block(const Tensor<S>&, const SwinBlockParams<S>&, int, int, \
                                       bool, double, AttnProbe<S>*);                          \
  extern template Tensor<S> swin_block_pair(const Tensor<S>&, const SwinPairParams<S>&, int,  \
                                            int, double, AttnProbe<S>*);                      \
  extern template Tensor<S> patch_merge(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  extern template Tensor<S> patch_expand(const Tensor<S>&, const Tensor<S>&,                  \
                                         const Tensor<S>&);                                   \
  extern template Tensor<S> make_shift_mask(std::int64_t, std::int64_t, int, int);            \
  extern template EncodeResult<S> encode_frame(const Tensor<S>&, const CodecParams<S>&,       \
                                               const CodecConfig&, AttnProbe<S>*);            \
  extern template Tensor<S> decode_frame(const Tensor<S>&, const Tensor<S>&,                  \
                                         const CodecParams<S>&, const CodecConfig&,           \
                                         std::int64_t, std::int64_t, AttnProbe<S>*);

SIFM_CODEC_EXTERN(float)
SIFM_CODEC_EXTERN(double)
#undef SIFM_CODEC_EXTERN

}  // namespace sifm
