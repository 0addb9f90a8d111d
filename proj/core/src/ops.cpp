#include "sifm/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numeric>

namespace sifm {
namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using CMatMap = Eigen::Map<const Mat<S>>;

// Row-major strides.
std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Validates that b broadcasts onto a (trailing alignment, extents equal or
// b's 1) and returns, per axis of a, the step through b's flat storage.
std::vector<std::int64_t> broadcast_strides(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size()) {
    throw DimensionError(std::string(op) + ": " + shape_str(b) + " does not broadcast onto " +
                         shape_str(a));
  }
  std::vector<std::int64_t> bst = strides_of(b);
  std::vector<std::int64_t> out(a.size(), 0);
  std::size_t off = a.size() - b.size();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] == a[off + i]) {
      out[off + i] = bst[i];
    } else if (b[i] == 1) {
      out[off + i] = 0;
    } else {
      throw DimensionError(std::string(op) + ": " + shape_str(b) + " does not broadcast onto " +
                           shape_str(a));
    }
  }
  return out;
}

// Calls f(a_flat, b_flat) for every element of a, where b_flat follows the
// broadcast strides. Odometer walk, no divisions.
template <typename F>
void for_each_broadcast(const Shape& a, const std::vector<std::int64_t>& bstride, F&& f) {
  std::int64_t n = 1;
  for (std::int64_t e : a) n *= e;
  const int rank = static_cast<int>(a.size());
  std::vector<std::int64_t> idx(a.size(), 0);
  std::int64_t bflat = 0;
  for (std::int64_t aflat = 0; aflat < n; ++aflat) {
    f(aflat, bflat);
    for (int ax = rank - 1; ax >= 0; --ax) {
      ++idx[static_cast<std::size_t>(ax)];
      bflat += bstride[static_cast<std::size_t>(ax)];
      if (idx[static_cast<std::size_t>(ax)] < a[static_cast<std::size_t>(ax)]) break;
      idx[static_cast<std::size_t>(ax)] = 0;
      bflat -= bstride[static_cast<std::size_t>(ax)] * a[static_cast<std::size_t>(ax)];
    }
  }
}

template <typename S>
void check_defined(const Tensor<S>& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor argument");
}

}  // namespace

// ----------------------------------------------------------------- matmul

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() != sa.size()) {
    throw DimensionError("matmul: ranks must match and be >= 2, got " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  std::int64_t batch = 1;
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) {
    if (sa[i] != sb[i]) {
      throw DimensionError("matmul: leading dims differ, " + shape_str(sa) + " vs " +
                           shape_str(sb));
    }
    batch *= sa[i];
  }
  const std::int64_t m = sa[sa.size() - 2];
  const std::int64_t k = sa[sa.size() - 1];
  const std::int64_t k2 = sb[sb.size() - 2];
  const std::int64_t n = sb[sb.size() - 1];
  if (k != k2) {
    throw DimensionError("matmul: inner dims differ, " + shape_str(sa) + " vs " + shape_str(sb));
  }

  Shape so(sa.begin(), sa.end() - 2);
  so.push_back(m);
  so.push_back(n);
  Tensor<S> out(so);
  {
    const S* ap = a.values().data();
    const S* bp = b.values().data();
    S* op = out.values_mut().data();
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      CMatMap<S> A(ap + bi * m * k, m, k);
      CMatMap<S> B(bp + bi * k * n, k, n);
      MatMap<S> C(op + bi * m * n, m, n);
      C.noalias() = A * B;
    }
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&a, &b})) {
    const bool need_a = tp->wants_grad(a);
    const bool need_b = tp->wants_grad(b);
    std::int32_t ia = tp->track(a);
    std::int32_t ib = tp->track(b);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [a, b, ia, ib, io, need_a, need_b, batch, m, k, n](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      if (need_a) {
        S* dap = t.grad_buffer(ia).data();
        const S* bp = b.values().data();
        for (std::int64_t bi = 0; bi < batch; ++bi) {
          CMatMap<S> G(gp + bi * m * n, m, n);
          CMatMap<S> B(bp + bi * k * n, k, n);
          MatMap<S> dA(dap + bi * m * k, m, k);
          dA.noalias() += G * B.transpose();
        }
      }
      if (need_b) {
        S* dbp = t.grad_buffer(ib).data();
        const S* ap = a.values().data();
        for (std::int64_t bi = 0; bi < batch; ++bi) {
          CMatMap<S> G(gp + bi * m * n, m, n);
          CMatMap<S> A(ap + bi * m * k, m, k);
          MatMap<S> dB(dbp + bi * k * n, k, n);
          dB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------- elementwise binary

namespace {

enum class BinKind { add, sub, mul };

template <typename S>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, BinKind kind, const char* name) {
  check_defined(a, name);
  check_defined(b, name);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::vector<std::int64_t> bstride = broadcast_strides(sa, sb, name);

  Tensor<S> out(sa);
  {
    const S* ap = a.values().data();
    const S* bp = b.values().data();
    S* op = out.values_mut().data();
    if (sa == sb) {  // fast path, no odometer
      const std::int64_t nn = a.size();
      switch (kind) {
        case BinKind::add:
          for (std::int64_t i = 0; i < nn; ++i) op[i] = ap[i] + bp[i];
          break;
        case BinKind::sub:
          for (std::int64_t i = 0; i < nn; ++i) op[i] = ap[i] - bp[i];
          break;
        case BinKind::mul:
          for (std::int64_t i = 0; i < nn; ++i) op[i] = ap[i] * bp[i];
          break;
      }
    } else {
      switch (kind) {
        case BinKind::add:
          for_each_broadcast(sa, bstride, [&](std::int64_t i, std::int64_t j) { op[i] = ap[i] + bp[j]; });
          break;
        case BinKind::sub:
          for_each_broadcast(sa, bstride, [&](std::int64_t i, std::int64_t j) { op[i] = ap[i] - bp[j]; });
          break;
        case BinKind::mul:
          for_each_broadcast(sa, bstride, [&](std::int64_t i, std::int64_t j) { op[i] = ap[i] * bp[j]; });
          break;
      }
    }
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&a, &b})) {
    const bool need_a = tp->wants_grad(a);
    const bool need_b = tp->wants_grad(b);
    std::int32_t ia = tp->track(a);
    std::int32_t ib = tp->track(b);
    std::int32_t io = tp->track_output(out);
    Shape sa_c = sa;
    tp->record(io, [a, b, ia, ib, io, need_a, need_b, kind, sa_c,
                    bstride = std::move(bstride)](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      const std::int64_t nn = static_cast<std::int64_t>(t.grad_of(io).size());
      if (need_a) {
        S* da = t.grad_buffer(ia).data();
        if (kind == BinKind::mul) {
          const S* bp = b.values().data();
          for_each_broadcast(sa_c, bstride,
                             [&](std::int64_t i, std::int64_t j) { da[i] += gp[i] * bp[j]; });
        } else {
          for (std::int64_t i = 0; i < nn; ++i) da[i] += gp[i];
        }
      }
      if (need_b) {
        S* db = t.grad_buffer(ib).data();
        switch (kind) {
          case BinKind::add:
            for_each_broadcast(sa_c, bstride,
                               [&](std::int64_t i, std::int64_t j) { db[j] += gp[i]; });
            break;
          case BinKind::sub:
            for_each_broadcast(sa_c, bstride,
                               [&](std::int64_t i, std::int64_t j) { db[j] -= gp[i]; });
            break;
          case BinKind::mul: {
            const S* ap = a.values().data();
            for_each_broadcast(sa_c, bstride,
                               [&](std::int64_t i, std::int64_t j) { db[j] += gp[i] * ap[i]; });
            break;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(a, b, BinKind::add, "add");
}
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(a, b, BinKind::sub, "sub");
}
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(a, b, BinKind::mul, "mul");
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  check_defined(a, "scale");
  Tensor<S> out(a.shape());
  const S* ap = a.values().data();
  S* op = out.values_mut().data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) op[i] = ap[i] * c;

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&a})) {
    std::int32_t ia = tp->track(a);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [ia, io, c, n](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      S* da = t.grad_buffer(ia).data();
      for (std::int64_t i = 0; i < n; ++i) da[i] += gp[i] * c;
    });
  }
  return out;
}

// ------------------------------------------------------------------- gelu

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
  check_defined(x, "gelu");
  Tensor<S> out(x.shape());
  const S* xp = x.values().data();
  S* op = out.values_mut().data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(xp[i]);
    op[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    std::int32_t ix = tp->track(x);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [x, ix, io, n](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      const S* xp2 = x.values().data();
      S* dx = t.grad_buffer(ix).data();
      constexpr double kInvSqrt2Pi = 0.3989422804014326779;
      for (std::int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(xp2[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] += gp[i] * static_cast<S>(cdf + v * pdf);
      }
    });
  }
  return out;
}

// -------------------------------------------------------------- layer_norm

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     double eps) {
  check_defined(x, "layer_norm");
  check_defined(gain, "layer_norm");
  check_defined(bias, "layer_norm");
  if (x.rank() < 1) throw DimensionError("layer_norm: rank-0 input");
  const std::int64_t c = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.size() != c || bias.size() != c) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " must be rank-1 of extent " +
                         std::to_string(c));
  }
  const std::int64_t rows = x.size() / c;

  Tensor<S> out(x.shape());
  auto xhat = std::make_shared<std::vector<S>>(static_cast<std::size_t>(x.size()));
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows));
  {
    const S* xp = x.values().data();
    const S* gp = gain.values().data();
    const S* bp = bias.values().data();
    S* op = out.values_mut().data();
    S* hp = xhat->data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const S* row = xp + r * c;
      double mean = 0;
      for (std::int64_t j = 0; j < c; ++j) mean += static_cast<double>(row[j]);
      mean /= static_cast<double>(c);
      double var = 0;
      for (std::int64_t j = 0; j < c; ++j) {
        const double d = static_cast<double>(row[j]) - mean;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(r)] = static_cast<S>(inv);
      for (std::int64_t j = 0; j < c; ++j) {
        const S h = static_cast<S>((static_cast<double>(row[j]) - mean) * inv);
        hp[r * c + j] = h;
        op[r * c + j] = h * gp[j] + bp[j];
      }
    }
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x, &gain, &bias})) {
    const bool need_x = tp->wants_grad(x);
    const bool need_g = tp->wants_grad(gain);
    const bool need_b = tp->wants_grad(bias);
    std::int32_t ix = tp->track(x);
    std::int32_t ig = tp->track(gain);
    std::int32_t ib = tp->track(bias);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [gain, xhat, inv_std, ix, ig, ib, io, need_x, need_g, need_b, rows,
                    c](Tape<S>& t) {
      const S* gy = t.grad_of(io).data();
      const S* hp = xhat->data();
      if (need_g) {
        S* dg = t.grad_buffer(ig).data();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < c; ++j) dg[j] += gy[r * c + j] * hp[r * c + j];
      }
      if (need_b) {
        S* db = t.grad_buffer(ib).data();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < c; ++j) db[j] += gy[r * c + j];
      }
      if (need_x) {
        const S* gw = gain.values().data();
        S* dx = t.grad_buffer(ix).data();
        for (std::int64_t r = 0; r < rows; ++r) {
          const S* gyr = gy + r * c;
          const S* hr = hp + r * c;
          double m1 = 0, m2 = 0;
          for (std::int64_t j = 0; j < c; ++j) {
            const double dh = static_cast<double>(gyr[j]) * static_cast<double>(gw[j]);
            m1 += dh;
            m2 += dh * static_cast<double>(hr[j]);
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          const double inv = static_cast<double>((*inv_std)[static_cast<std::size_t>(r)]);
          for (std::int64_t j = 0; j < c; ++j) {
            const double dh = static_cast<double>(gyr[j]) * static_cast<double>(gw[j]);
            dx[r * c + j] +=
                static_cast<S>(inv * (dh - m1 - static_cast<double>(hr[j]) * m2));
          }
        }
      }
    });
  }
  return out;
}

// ----------------------------------------------------------------- softmax

template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
  check_defined(x, "softmax");
  if (x.rank() < 1) throw DimensionError("softmax: rank-0 input");
  const std::int64_t c = x.shape().back();
  const std::int64_t rows = x.size() / c;

  Tensor<S> out(x.shape());
  {
    const S* xp = x.values().data();
    S* op = out.values_mut().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const S* row = xp + r * c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < c; ++j) {
        const double v = static_cast<double>(row[j]);
        if (v > kMaskHard && v > mx) mx = v;
      }
      if (!std::isfinite(mx)) {
        throw DomainError("softmax: fully masked row " + std::to_string(r));
      }
      double sum = 0;
      for (std::int64_t j = 0; j < c; ++j) {
        const double v = static_cast<double>(row[j]);
        double e = 0;
        if (v > kMaskHard) {
          e = std::exp(v - mx);
          sum += e;
        }
        op[r * c + j] = static_cast<S>(e);
      }
      const double invsum = 1.0 / sum;
      for (std::int64_t j = 0; j < c; ++j) {
        op[r * c + j] = static_cast<S>(static_cast<double>(op[r * c + j]) * invsum);
      }
    }
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    std::int32_t ix = tp->track(x);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [out, ix, io, rows, c](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      const S* pp = out.values().data();
      S* dx = t.grad_buffer(ix).data();
      for (std::int64_t r = 0; r < rows; ++r) {
        double dot = 0;
        for (std::int64_t j = 0; j < c; ++j) {
          dot += static_cast<double>(gp[r * c + j]) * static_cast<double>(pp[r * c + j]);
        }
        for (std::int64_t j = 0; j < c; ++j) {
          dx[r * c + j] += static_cast<S>(static_cast<double>(pp[r * c + j]) *
                                          (static_cast<double>(gp[r * c + j]) - dot));
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------- data movement

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  check_defined(x, "reshape");
  const std::int64_t n = shape_size(shape);
  if (n != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " (" + std::to_string(x.size()) +
                         " values) to " + shape_str(shape) + " (" + std::to_string(n) + ")");
  }
  Tensor<S> out(std::move(shape), std::vector<S>(x.values().begin(), x.values().end()));

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    std::int32_t ix = tp->track(x);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [ix, io, n](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      S* dx = t.grad_buffer(ix).data();
      for (std::int64_t i = 0; i < n; ++i) dx[i] += gp[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x, std::vector<int> perm) {
  check_defined(x, "transpose");
  const Shape& sx = x.shape();
  const int rank = static_cast<int>(sx.size());
  if (static_cast<int>(perm.size()) != rank) {
    throw DimensionError("transpose: perm size " + std::to_string(perm.size()) + " vs rank " +
                         std::to_string(rank));
  }
  std::vector<char> seen(static_cast<std::size_t>(rank), 0);
  for (int p : perm) {
    if (p < 0 || p >= rank || seen[static_cast<std::size_t>(p)]) {
      throw RangeError("transpose: perm is not a permutation of 0.." + std::to_string(rank - 1));
    }
    seen[static_cast<std::size_t>(p)] = 1;
  }

  Shape so(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) so[static_cast<std::size_t>(i)] = sx[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  std::vector<std::int64_t> in_strides = strides_of(sx);
  // Walking the output in order, the input flat index advances by the input
  // stride of the axis each output axis came from.
  std::vector<std::int64_t> walk(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) walk[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];

  Tensor<S> out(so);
  {
    const S* xp = x.values().data();
    S* op = out.values_mut().data();
    for_each_broadcast(so, walk, [&](std::int64_t o, std::int64_t i) { op[o] = xp[i]; });
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    std::int32_t ix = tp->track(x);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [ix, io, so, walk](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      S* dx = t.grad_buffer(ix).data();
      for_each_broadcast(so, walk, [&](std::int64_t o, std::int64_t i) { dx[i] += gp[o]; });
    });
  }
  return out;
}

namespace {
template <typename S>
void axis_split(const Tensor<S>& x, int axis, const char* op, std::int64_t& outer,
                std::int64_t& extent, std::int64_t& inner) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw RangeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  extent = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, std::int64_t start, std::int64_t len) {
  check_defined(x, "slice");
  std::int64_t outer, extent, inner;
  axis_split(x, axis, "slice", outer, extent, inner);
  if (start < 0 || len <= 0 || start + len > extent) {
    throw RangeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for extent " + std::to_string(extent) + " of " +
                     shape_str(x.shape()));
  }

  Shape so = x.shape();
  so[static_cast<std::size_t>(axis)] = len;
  Tensor<S> out(so);
  {
    const S* xp = x.values().data();
    S* op = out.values_mut().data();
    for (std::int64_t o = 0; o < outer; ++o) {
      const S* src = xp + (o * extent + start) * inner;
      S* dst = op + o * len * inner;
      std::copy(src, src + len * inner, dst);
    }
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    std::int32_t ix = tp->track(x);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [ix, io, outer, extent, inner, start, len](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      S* dx = t.grad_buffer(ix).data();
      for (std::int64_t o = 0; o < outer; ++o) {
        S* dst = dx + (o * extent + start) * inner;
        const S* src = gp + o * len * inner;
        for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(std::span<const Tensor<S>> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const auto& p : parts) check_defined(p, "concat");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) {
    throw RangeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s0));
  }
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& sp = p.shape();
    if (sp.size() != s0.size()) {
      throw DimensionError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(sp));
    }
    for (std::size_t i = 0; i < s0.size(); ++i) {
      if (static_cast<int>(i) != axis && sp[i] != s0[i]) {
        throw DimensionError("concat: shape mismatch off axis, " + shape_str(s0) + " vs " +
                             shape_str(sp));
      }
    }
    total += sp[static_cast<std::size_t>(axis)];
  }

  Shape so = s0;
  so[static_cast<std::size_t>(axis)] = total;
  Tensor<S> out(so);
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s0.size(); ++i) inner *= s0[i];
  {
    S* op = out.values_mut().data();
    std::int64_t off = 0;
    for (const auto& p : parts) {
      const std::int64_t e = p.shape()[static_cast<std::size_t>(axis)];
      const S* pp = p.values().data();
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy(pp + o * e * inner, pp + (o + 1) * e * inner, op + (o * total + off) * inner);
      }
      off += e;
    }
  }

  Tape<S>* tp = Tape<S>::active();
  bool rec = false;
  if (tp && !tp->consumed()) {
    for (const auto& p : parts) {
      if (tp->wants_grad(p)) {
        rec = true;
        break;
      }
    }
  }
  if (rec) {
    struct Piece {
      std::int32_t slot;
      std::int64_t offset, extent;
      bool need;
    };
    std::vector<Piece> pieces;
    std::int64_t off = 0;
    for (const auto& p : parts) {
      const std::int64_t e = p.shape()[static_cast<std::size_t>(axis)];
      pieces.push_back(Piece{tp->track(p), off, e, tp->wants_grad(p)});
      off += e;
    }
    std::int32_t io = tp->track_output(out);
    tp->record(io, [io, outer, inner, total, pieces = std::move(pieces)](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      for (const auto& pc : pieces) {
        if (!pc.need) continue;
        S* dp = t.grad_buffer(pc.slot).data();
        for (std::int64_t o = 0; o < outer; ++o) {
          const S* src = gp + (o * total + pc.offset) * inner;
          S* dst = dp + o * pc.extent * inner;
          for (std::int64_t i = 0; i < pc.extent * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(std::initializer_list<Tensor<S>> parts, int axis) {
  std::vector<Tensor<S>> v(parts);
  return concat(std::span<const Tensor<S>>(v), axis);
}

// -------------------------------------------------------------- reductions

template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis) {
  check_defined(x, "mean_axis");
  std::int64_t outer, extent, inner;
  axis_split(x, axis, "mean_axis", outer, extent, inner);

  Shape so;
  for (int i = 0; i < x.rank(); ++i) {
    if (i != axis) so.push_back(x.shape()[static_cast<std::size_t>(i)]);
  }
  if (so.empty()) so.push_back(1);
  Tensor<S> out(so);
  {
    const S* xp = x.values().data();
    S* op = out.values_mut().data();
    const S invE = S(1) / static_cast<S>(extent);
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        S acc = 0;
        for (std::int64_t e = 0; e < extent; ++e) acc += xp[(o * extent + e) * inner + i];
        op[o * inner + i] = acc * invE;
      }
    }
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    std::int32_t ix = tp->track(x);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [ix, io, outer, extent, inner](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      S* dx = t.grad_buffer(ix).data();
      const S invE = S(1) / static_cast<S>(extent);
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t e = 0; e < extent; ++e) {
          for (std::int64_t i = 0; i < inner; ++i) {
            dx[(o * extent + e) * inner + i] += gp[o * inner + i] * invE;
          }
        }
      }
    });
  }
  return out;
}

namespace {
template <typename S>
Tensor<S> reduce_all(const Tensor<S>& x, bool mean, const char* name) {
  check_defined(x, name);
  const std::int64_t n = x.size();
  double acc = 0;
  const S* xp = x.values().data();
  for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(xp[i]);
  if (mean) acc /= static_cast<double>(n);
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc));

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    std::int32_t ix = tp->track(x);
    std::int32_t io = tp->track_output(out);
    const S w = mean ? S(1) / static_cast<S>(n) : S(1);
    tp->record(io, [ix, io, n, w](Tape<S>& t) {
      const S g = t.grad_of(io)[0] * w;
      S* dx = t.grad_buffer(ix).data();
      for (std::int64_t i = 0; i < n; ++i) dx[i] += g;
    });
  }
  return out;
}
}  // namespace

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  return reduce_all(x, false, "sum_all");
}
template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  return reduce_all(x, true, "mean_all");
}

// ------------------------------------------------------------- gather_rows

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, std::span<const std::int64_t> rows) {
  check_defined(table, "gather_rows");
  if (table.rank() != 2) {
    throw DimensionError("gather_rows: table must be rank-2, got " + shape_str(table.shape()));
  }
  const std::int64_t r = table.extent(0);
  const std::int64_t c = table.extent(1);
  for (std::int64_t row : rows) {
    if (row < 0 || row >= r) {
      throw RangeError("gather_rows: row " + std::to_string(row) + " out of range [0, " +
                       std::to_string(r) + ")");
    }
  }
  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  if (n == 0) throw DimensionError("gather_rows: empty row list");
  Tensor<S> out({n, c});
  {
    const S* tpv = table.values().data();
    S* op = out.values_mut().data();
    for (std::int64_t i = 0; i < n; ++i) {
      const S* src = tpv + rows[static_cast<std::size_t>(i)] * c;
      std::copy(src, src + c, op + i * c);
    }
  }

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&table})) {
    std::int32_t it = tp->track(table);
    std::int32_t io = tp->track_output(out);
    std::vector<std::int64_t> rows_copy(rows.begin(), rows.end());
    tp->record(io, [it, io, c, n, rows_copy = std::move(rows_copy)](Tape<S>& t) {
      const S* gp = t.grad_of(io).data();
      S* dt = t.grad_buffer(it).data();
      for (std::int64_t i = 0; i < n; ++i) {
        S* dst = dt + rows_copy[static_cast<std::size_t>(i)] * c;
        const S* src = gp + i * c;
        for (std::int64_t j = 0; j < c; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// -------------------------------------------------------------------- mse

template <typename S>
Tensor<S> mse(const Tensor<S>& pred, const Tensor<S>& target) {
  check_defined(pred, "mse");
  check_defined(target, "mse");
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const std::int64_t n = pred.size();
  const S* pp = pred.values().data();
  const S* tv = target.values().data();
  double acc = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pp[i]) - static_cast<double>(tv[i]);
    acc += d * d;
  }
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));

  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&pred, &target})) {
    const bool need_p = tp->wants_grad(pred);
    const bool need_t = tp->wants_grad(target);
    std::int32_t ip = tp->track(pred);
    std::int32_t it = tp->track(target);
    std::int32_t io = tp->track_output(out);
    tp->record(io, [pred, target, ip, it, io, need_p, need_t, n](Tape<S>& t) {
      const S g = t.grad_of(io)[0];
      const S* pp2 = pred.values().data();
      const S* tv2 = target.values().data();
      const S w = g * S(2) / static_cast<S>(n);
      if (need_p) {
        S* dp = t.grad_buffer(ip).data();
        for (std::int64_t i = 0; i < n; ++i) dp[i] += w * (pp2[i] - tv2[i]);
      }
      if (need_t) {
        S* dt = t.grad_buffer(it).data();
        for (std::int64_t i = 0; i < n; ++i) dt[i] -= w * (pp2[i] - tv2[i]);
      }
    });
  }
  return out;
}

template <typename S>
void backward(const Tensor<S>& loss) {
  Tape<S>* tp = Tape<S>::active();
  if (!tp) throw ContractError("backward(): no active tape");
  tp->backward(loss, /*publish=*/true);
}

#define SIFM_OPS_INSTANTIATE(S)                                                       \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> scale(const Tensor<S>&, S);                                      \
  template Tensor<S> gelu(const Tensor<S>&);                                          \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
                                double);                                              \
  template Tensor<S> softmax(const Tensor<S>&);                                       \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                \
  template Tensor<S> transpose(const Tensor<S>&, std::vector<int>);                   \
  template Tensor<S> slice(const Tensor<S>&, int, std::int64_t, std::int64_t);        \
  template Tensor<S> concat(std::span<const Tensor<S>>, int);                         \
  template Tensor<S> concat(std::initializer_list<Tensor<S>>, int);                   \
  template Tensor<S> mean_axis(const Tensor<S>&, int);                                \
  template Tensor<S> sum_all(const Tensor<S>&);                                       \
  template Tensor<S> mean_all(const Tensor<S>&);                                      \
  template Tensor<S> gather_rows(const Tensor<S>&, std::span<const std::int64_t>);    \
  template Tensor<S> mse(const Tensor<S>&, const Tensor<S>&);                         \
  template void backward(const Tensor<S>&);

SIFM_OPS_INSTANTIATE(float)
SIFM_OPS_INSTANTIATE(double)
#undef SIFM_OPS_INSTANTIATE

}  // namespace sifm
