#include "sifm/codec.hpp"

#include <cmath>
#include <cstddef>

#include "sifm/errors.hpp"

namespace sifm {

void CodecConfig::validate(std::int64_t height, std::int64_t width) const {
  if (patch_size != 2) throw ConfigError("codec patch_size must be 2");
  if (stem_channels < 1) throw ConfigError("codec stem_channels must be positive");
  if (num_merge_stages < 0) throw ConfigError("codec num_merge_stages must be non-negative");
  if (token_dim < 1) throw ConfigError("codec token_dim must be positive");
  if (ln_eps <= 0.0) throw ConfigError("codec ln_eps must be positive");
  if (attn_window < 2 || attn_window % 2 != 0)
    throw ConfigError("codec attn_window must be an even number >= 2");
  if (static_cast<int>(heads_per_stage.size()) != num_stages())
    throw ConfigError("codec heads_per_stage needs num_merge_stages + 1 entries");
  for (int k = 0; k < num_stages(); ++k) {
    const int heads = heads_per_stage[static_cast<std::size_t>(k)];
    if (heads < 1) throw ConfigError("codec heads_per_stage entries must be positive");
    if (stage_channels(k) % heads != 0)
      throw ConfigError("codec stage " + std::to_string(k) + " channels " +
                        std::to_string(stage_channels(k)) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
  if (height < 1 || width < 1) throw ConfigError("grid size must be positive");
  if (height % patch_size != 0 || width % patch_size != 0)
    throw ConfigError("grid size " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by patch size");
  for (int k = 0; k < num_stages(); ++k) {
    const std::int64_t hs = map_side(height, k);
    const std::int64_t ws = map_side(width, k);
    if (hs < attn_window || ws < attn_window || hs % attn_window != 0 || ws % attn_window != 0)
      throw ConfigError("stage " + std::to_string(k) + " map " + std::to_string(hs) + "x" +
                        std::to_string(ws) + " not tileable by window " +
                        std::to_string(attn_window));
    if (k + 1 < num_stages() && (hs % 2 != 0 || ws % 2 != 0))
      throw ConfigError("stage " + std::to_string(k) + " map not halvable");
  }
}

namespace {

// out[y][x] = in[(y + dy) mod h][(x + dx) mod w]; offsets already in [0, dim).
template <typename S>
Tensor<S> roll2d(const Tensor<S>& x, std::int64_t dy, std::int64_t dx) {
  Tensor<S> y = x;
  if (dy != 0)
    y = concat({slice(y, 0, dy, y.extent(0) - dy), slice(y, 0, 0, dy)}, 0);
  if (dx != 0)
    y = concat({slice(y, 1, dx, y.extent(1) - dx), slice(y, 1, 0, dx)}, 1);
  return y;
}

// [h, w, c] → [nW, window², c], windows in row-major order.
template <typename S>
Tensor<S> window_partition(const Tensor<S>& x, std::int64_t win) {
  const std::int64_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor<S> y = reshape(x, {h / win, win, w / win, win, c});
  y = transpose(y, {0, 2, 1, 3, 4});
  return reshape(y, {(h / win) * (w / win), win * win, c});
}

template <typename S>
Tensor<S> window_reverse(const Tensor<S>& x, std::int64_t h, std::int64_t w, std::int64_t win) {
  const std::int64_t c = x.extent(2);
  Tensor<S> y = reshape(x, {h / win, w / win, win, win, c});
  y = transpose(y, {0, 2, 1, 3, 4});
  return reshape(y, {h, w, c});
}

// Learned relative-position bias rearranged for broadcasting: [heads, T, T].
template <typename S>
Tensor<S> relpos_bias(const Tensor<S>& table, int window) {
  const std::int64_t t = static_cast<std::int64_t>(window) * window;
  const std::int64_t heads = table.extent(1);
  Tensor<S> rows = gather_rows(table, relative_position_index(window));  // [T², heads]
  rows = reshape(rows, {t, t, heads});
  return transpose(rows, {2, 0, 1});
}

template <typename S>
Tensor<S> wmsa(const Tensor<S>& x, const SwinBlockParams<S>& p, int window, int heads,
               bool shifted, AttnProbe<S>* probe) {
  const std::int64_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  const std::int64_t win = window;
  const std::int64_t t = win * win;
  const std::int64_t nw = (h / win) * (w / win);
  const std::int64_t hd = heads;
  const std::int64_t d = c / hd;
  const std::int64_t shift = win / 2;

  Tensor<S> z = shifted ? roll2d(x, shift, shift) : x;
  Tensor<S> windows = window_partition(z, win);  // [nW, T, c]

  Tensor<S> qkv = add(matmul(reshape(windows, {nw * t, c}), p.qkv_w), p.qkv_b);
  qkv = transpose(reshape(qkv, {nw, t, 3, hd, d}), {2, 0, 3, 1, 4});  // [3, nW, hd, T, d]
  Tensor<S> q = reshape(slice(qkv, 0, 0, 1), {nw, hd, t, d});
  Tensor<S> k = reshape(slice(qkv, 0, 1, 1), {nw, hd, t, d});
  Tensor<S> v = reshape(slice(qkv, 0, 2, 1), {nw, hd, t, d});

  Tensor<S> scores = scale(matmul(q, transpose(k, {0, 1, 3, 2})),
                           static_cast<S>(1.0 / std::sqrt(static_cast<double>(d))));
  scores = add(scores, relpos_bias(p.relpos, window));
  if (shifted) {
    Tensor<S> m = make_shift_mask<S>(h, w, window, static_cast<int>(shift));  // [nW, T, T]
    Tensor<S> full({nw, hd, t, t});
    auto fv = full.values_mut();
    const auto mv = m.values();
    for (std::int64_t b = 0; b < nw; ++b)
      for (std::int64_t hh = 0; hh < hd; ++hh)
        for (std::int64_t ij = 0; ij < t * t; ++ij)
          fv[static_cast<std::size_t>(((b * hd + hh) * t * t) + ij)] =
              mv[static_cast<std::size_t>(b * t * t + ij)];
    scores = add(scores, full);
  }
  Tensor<S> attn = softmax(scores);
  if (probe) probe->probs.push_back(attn);

  Tensor<S> out = matmul(attn, v);                     // [nW, hd, T, d]
  out = transpose(out, {0, 2, 1, 3});                  // [nW, T, hd, d]
  out = reshape(out, {nw * t, c});
  out = add(matmul(out, p.proj_w), p.proj_b);
  out = window_reverse(reshape(out, {nw, t, c}), h, w, win);
  if (shifted) out = roll2d(out, h - shift, w - shift);
  return out;
}

template <typename S>
Tensor<S> mlp(const Tensor<S>& x, const SwinBlockParams<S>& p) {
  const std::int64_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor<S> y = reshape(x, {h * w, c});
  y = gelu(add(matmul(y, p.mlp_w1), p.mlp_b1));
  y = add(matmul(y, p.mlp_w2), p.mlp_b2);
  return reshape(y, {h, w, c});
}

template <typename S>
SwinBlockParams<S> shaped_block(int channels, int heads, int window) {
  const std::int64_t c = channels;
  const std::int64_t span = 2 * static_cast<std::int64_t>(window) - 1;
  SwinBlockParams<S> b;
  b.qkv_w = Tensor<S>({c, 3 * c});
  b.qkv_b = Tensor<S>({3 * c});
  b.proj_w = Tensor<S>({c, c});
  b.proj_b = Tensor<S>({c});
  b.ln1_g = Tensor<S>({c});
  b.ln1_b = Tensor<S>({c});
  b.mlp_w1 = Tensor<S>({c, kMlpRatio * c});
  b.mlp_b1 = Tensor<S>({kMlpRatio * c});
  b.mlp_w2 = Tensor<S>({kMlpRatio * c, c});
  b.mlp_b2 = Tensor<S>({c});
  b.ln2_g = Tensor<S>({c});
  b.ln2_b = Tensor<S>({c});
  b.relpos = Tensor<S>({span * span, heads});
  return b;
}

template <typename S>
SwinPairParams<S> shaped_pair(int channels, int heads, int window) {
  return {shaped_block<S>(channels, heads, window), shaped_block<S>(channels, heads, window)};
}

}  // namespace

std::vector<std::int64_t> relative_position_index(int window) {
  const std::int64_t w = window;
  const std::int64_t t = w * w;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(t * t));
  for (std::int64_t q = 0; q < t; ++q)
    for (std::int64_t k = 0; k < t; ++k) {
      const std::int64_t dy = q / w - k / w + w - 1;
      const std::int64_t dx = q % w - k % w + w - 1;
      idx[static_cast<std::size_t>(q * t + k)] = dy * (2 * w - 1) + dx;
    }
  return idx;
}

template <typename S>
Tensor<S> make_shift_mask(std::int64_t h, std::int64_t w, int window, int shift) {
  const std::int64_t win = window;
  const std::int64_t t = win * win;
  const std::int64_t nwy = h / win, nwx = w / win;
  // Region bands in shifted coordinates; cells from different bands were not
  // neighbors before the cyclic roll, so attention between them is masked.
  auto band = [&](std::int64_t pos, std::int64_t dim) -> int {
    if (pos < dim - win) return 0;
    if (pos < dim - shift) return 1;
    return 2;
  };
  Tensor<S> mask({nwy * nwx, t, t});
  auto mv = mask.values_mut();
  for (std::int64_t wy = 0; wy < nwy; ++wy)
    for (std::int64_t wx = 0; wx < nwx; ++wx) {
      const std::int64_t base = (wy * nwx + wx) * t * t;
      for (std::int64_t i = 0; i < t; ++i)
        for (std::int64_t j = 0; j < t; ++j) {
          const std::int64_t iy = wy * win + i / win, ix = wx * win + i % win;
          const std::int64_t jy = wy * win + j / win, jx = wx * win + j % win;
          const int ri = band(iy, h) * 3 + band(ix, w);
          const int rj = band(jy, h) * 3 + band(jx, w);
          mv[static_cast<std::size_t>(base + i * t + j)] =
              ri == rj ? S(0) : static_cast<S>(kMaskOff);
        }
    }
  return mask;
}

template <typename S>
Tensor<S> patch_partition(const Tensor<S>& frame, const Tensor<S>& w, const Tensor<S>& b,
                          int patch) {
  if (frame.rank() != 2)
    throw DimensionError("patch_partition expects a rank-2 frame, got " +
                         shape_str(frame.shape()));
  const std::int64_t h = frame.extent(0), ww = frame.extent(1), p = patch;
  if (h % p != 0 || ww % p != 0)
    throw DimensionError("frame " + shape_str(frame.shape()) + " not divisible by patch " +
                         std::to_string(patch));
  Tensor<S> x = reshape(frame, {h / p, p, ww / p, p});
  x = transpose(x, {0, 2, 1, 3});
  x = reshape(x, {(h / p) * (ww / p), p * p});
  x = add(matmul(x, w), b);
  return reshape(x, {h / p, ww / p, w.extent(1)});
}

template <typename S>
Tensor<S> swin_block(const Tensor<S>& x, const SwinBlockParams<S>& p, int window, int heads,
                     bool shifted, double ln_eps, AttnProbe<S>* probe) {
  if (x.rank() != 3)
    throw DimensionError("swin_block expects [h, w, c], got " + shape_str(x.shape()));
  if (x.extent(0) % window != 0 || x.extent(1) % window != 0)
    throw DimensionError("map " + shape_str(x.shape()) + " not tileable by window " +
                         std::to_string(window));
  if (x.extent(2) % heads != 0)
    throw DimensionError("channels " + std::to_string(x.extent(2)) + " not divisible by " +
                         std::to_string(heads) + " heads");
  Tensor<S> zs = add(layer_norm(wmsa(x, p, window, heads, shifted, probe), p.ln1_g, p.ln1_b,
                                ln_eps),
                     x);
  return add(layer_norm(mlp(zs, p), p.ln2_g, p.ln2_b, ln_eps), zs);
}

template <typename S>
Tensor<S> swin_block_pair(const Tensor<S>& x, const SwinPairParams<S>& p, int window, int heads,
                          double ln_eps, AttnProbe<S>* probe) {
  Tensor<S> y = swin_block(x, p.b0, window, heads, false, ln_eps, probe);
  return swin_block(y, p.b1, window, heads, true, ln_eps, probe);
}

template <typename S>
Tensor<S> patch_merge(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.rank() != 3)
    throw DimensionError("patch_merge expects [h, w, c], got " + shape_str(x.shape()));
  const std::int64_t h = x.extent(0), ww = x.extent(1), c = x.extent(2);
  if (h % 2 != 0 || ww % 2 != 0)
    throw DimensionError("patch_merge needs even map sides, got " + shape_str(x.shape()));
  Tensor<S> y = reshape(x, {h / 2, 2, ww / 2, 2, c});
  y = transpose(y, {0, 2, 1, 3, 4});  // [h/2, w/2, dy, dx, c]
  y = reshape(y, {(h / 2) * (ww / 2), 4 * c});
  y = add(matmul(y, w), b);
  return reshape(y, {h / 2, ww / 2, w.extent(1)});
}

template <typename S>
Tensor<S> patch_expand(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.rank() != 3)
    throw DimensionError("patch_expand expects [h, w, c], got " + shape_str(x.shape()));
  const std::int64_t h = x.extent(0), ww = x.extent(1), c = x.extent(2);
  if (c % 2 != 0)
    throw DimensionError("patch_expand needs even channels, got " + shape_str(x.shape()));
  Tensor<S> y = reshape(x, {h * ww, c});
  y = add(matmul(y, w), b);  // [h·w, 2c]
  y = reshape(y, {h, ww, 2, 2, c / 2});
  y = transpose(y, {0, 2, 1, 3, 4});  // [h, dy, w, dx, c/2]
  return reshape(y, {2 * h, 2 * ww, c / 2});
}

template <typename S>
EncodeResult<S> encode_frame(const Tensor<S>& frame, const CodecParams<S>& params,
                             const CodecConfig& cfg, AttnProbe<S>* probe) {
  Tensor<S> x = patch_partition(frame, params.patch_w, params.patch_b, cfg.patch_size);
  x = swin_block_pair(x, params.stem, cfg.attn_window, cfg.heads_per_stage[0], cfg.ln_eps,
                      probe);
  EncodeResult<S> out;
  out.skip = x;
  for (std::size_t i = 0; i < params.enc.size(); ++i) {
    x = patch_merge(x, params.enc[i].merge_w, params.enc[i].merge_b);
    x = swin_block_pair(x, params.enc[i].pair, cfg.attn_window, cfg.heads_per_stage[i + 1],
                        cfg.ln_eps, probe);
  }
  const std::int64_t flat = x.extent(0) * x.extent(1) * x.extent(2);
  Tensor<S> token = add(matmul(reshape(x, {1, flat}), params.token_w), params.token_b);
  out.token = reshape(token, {cfg.token_dim});
  return out;
}

template <typename S>
Tensor<S> decode_frame(const Tensor<S>& token, const Tensor<S>& skip,
                       const CodecParams<S>& params, const CodecConfig& cfg, std::int64_t height,
                       std::int64_t width, AttnProbe<S>* probe) {
  if (token.rank() != 1 || token.extent(0) != cfg.token_dim)
    throw DimensionError("decode_frame expects a [token_dim] token, got " +
                         shape_str(token.shape()));
  const int s = cfg.num_merge_stages;
  const std::int64_t hb = cfg.map_side(height, s), wb = cfg.map_side(width, s);
  const std::int64_t cb = cfg.stage_channels(s);
  Tensor<S> x = add(matmul(reshape(token, {1, cfg.token_dim}), params.detoken_w),
                    params.detoken_b);
  x = reshape(x, {hb, wb, cb});
  for (std::size_t i = 0; i < params.dec.size(); ++i) {
    const int stage = s - static_cast<int>(i);
    x = swin_block_pair(x, params.dec[i].pair, cfg.attn_window, cfg.heads_per_stage[stage],
                        cfg.ln_eps, probe);
    x = patch_expand(x, params.dec[i].expand_w, params.dec[i].expand_b);
  }
  if (x.shape() != skip.shape())
    throw DimensionError("skip " + shape_str(skip.shape()) + " does not match decoder map " +
                         shape_str(x.shape()));
  x = add(x, skip);
  const std::int64_t hs = x.extent(0), ws = x.extent(1), p = cfg.patch_size;
  Tensor<S> y = add(matmul(reshape(x, {hs * ws, x.extent(2)}), params.head_w), params.head_b);
  y = reshape(y, {hs, ws, p, p});
  y = transpose(y, {0, 2, 1, 3});
  return reshape(y, {hs * p, ws * p});
}

template <typename S>
CodecParams<S> CodecParams<S>::shaped(const CodecConfig& cfg, std::int64_t height,
                                      std::int64_t width) {
  cfg.validate(height, width);
  const int s = cfg.num_merge_stages;
  const int win = cfg.attn_window;
  CodecParams<S> p;
  const std::int64_t pp = static_cast<std::int64_t>(cfg.patch_size) * cfg.patch_size;
  p.patch_w = Tensor<S>({pp, cfg.stem_channels});
  p.patch_b = Tensor<S>({cfg.stem_channels});
  p.stem = shaped_pair<S>(cfg.stem_channels, cfg.heads_per_stage[0], win);
  for (int i = 0; i < s; ++i) {
    typename CodecParams<S>::EncStage st;
    const std::int64_t cin = cfg.stage_channels(i);
    st.merge_w = Tensor<S>({4 * cin, 2 * cin});
    st.merge_b = Tensor<S>({2 * cin});
    st.pair = shaped_pair<S>(cfg.stage_channels(i + 1),
                             cfg.heads_per_stage[static_cast<std::size_t>(i) + 1], win);
    p.enc.push_back(std::move(st));
  }
  const std::int64_t flat = cfg.map_side(height, s) * cfg.map_side(width, s) *
                            cfg.stage_channels(s);
  p.token_w = Tensor<S>({flat, cfg.token_dim});
  p.token_b = Tensor<S>({cfg.token_dim});
  p.detoken_w = Tensor<S>({cfg.token_dim, flat});
  p.detoken_b = Tensor<S>({flat});
  for (int i = 0; i < s; ++i) {
    typename CodecParams<S>::DecStage st;
    const int stage = s - i;
    const std::int64_t c = cfg.stage_channels(stage);
    st.pair = shaped_pair<S>(static_cast<int>(c),
                             cfg.heads_per_stage[static_cast<std::size_t>(stage)], win);
    st.expand_w = Tensor<S>({c, 2 * c});
    st.expand_b = Tensor<S>({2 * c});
    p.dec.push_back(std::move(st));
  }
  p.head_w = Tensor<S>({cfg.stem_channels, pp});
  p.head_b = Tensor<S>({pp});
  p.for_each("", [](const std::string&, Tensor<S>& t) { t.set_requires_grad(true); });
  return p;
}

template <typename S>
CodecParams<S> CodecParams<S>::init(const CodecConfig& cfg, std::int64_t height,
                                    std::int64_t width, Rng& rng) {
  CodecParams<S> p = shaped(cfg, height, width);
  p.for_each("", [&rng](const std::string& name, Tensor<S>& t) {
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
  return p;
}

std::int64_t codec_param_count(const CodecConfig& cfg, std::int64_t height, std::int64_t width) {
  auto p = CodecParams<float>::shaped(cfg, height, width);
  std::int64_t n = 0;
  p.for_each("", [&n](const std::string&, Tensor<float>& t) { n += t.size(); });
  return n;
}

#define SIFM_CODEC_INSTANTIATE(S)                                                             \
  template struct SwinBlockParams<S>;                                                         \
  template struct CodecParams<S>;                                                             \
  template Tensor<S> patch_partition(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,    \
                                     int);                                                    \
  template Tensor<S> swin_block(const Tensor<S>&, const SwinBlockParams<S>&, int, int, bool,  \
                                double, AttnProbe<S>*);                                       \
  template Tensor<S> swin_block_pair(const Tensor<S>&, const SwinPairParams<S>&, int, int,    \
                                     double, AttnProbe<S>*);                                  \
  template Tensor<S> patch_merge(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);       \
  template Tensor<S> patch_expand(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);      \
  template Tensor<S> make_shift_mask(std::int64_t, std::int64_t, int, int);                   \
  template EncodeResult<S> encode_frame(const Tensor<S>&, const CodecParams<S>&,              \
                                        const CodecConfig&, AttnProbe<S>*);                   \
  template Tensor<S> decode_frame(const Tensor<S>&, const Tensor<S>&, const CodecParams<S>&,  \
                                  const CodecConfig&, std::int64_t, std::int64_t,             \
                                  AttnProbe<S>*);

SIFM_CODEC_INSTANTIATE(float)
SIFM_CODEC_INSTANTIATE(double)
#undef SIFM_CODEC_INSTANTIATE

}  // namespace sifm
