#pragma once

#include <span>
#include <vector>

#include "sifm/tensor.hpp"

namespace sifm {

// Differentiable ops. Every op validates shapes eagerly (DimensionError with
// both shapes in the message), computes the forward result, and — if a Tape
// is active and any input is differentiable — records a backward rule on it.
// Gradients accumulate additively into each input's buffer.
//
// Broadcasting: binary elementwise ops (add/sub/mul) broadcast the *second*
// argument onto the first by trailing-axis alignment; each aligned extent of
// b must equal a's or be 1. The output always has a's shape.

// Additive attention-mask convention: entries at 0 keep a logit, entries at
// kMaskOff force it off. softmax() zeroes probabilities exactly for logits
// below kMaskHard and renormalizes over the rest; a fully masked row is a
// DomainError.
inline constexpr double kMaskOff = -1e9;
inline constexpr double kMaskHard = -1e8;

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);  // 2-D, or batched with equal leading dims

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c);

template <typename S>
Tensor<S> gelu(const Tensor<S>& x);  // exact erf form

// Normalizes the last axis; gain/bias are rank-1 of that extent.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     double eps = 1e-5);

// Softmax over the last axis, with the hard-mask semantics described above.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x);

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape);
template <typename S>
Tensor<S> transpose(const Tensor<S>& x, std::vector<int> perm);
template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, std::int64_t start, std::int64_t len);
template <typename S>
Tensor<S> concat(std::span<const Tensor<S>> parts, int axis);
template <typename S>
Tensor<S> concat(std::initializer_list<Tensor<S>> parts, int axis);

template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis);  // drops the axis
template <typename S>
Tensor<S> sum_all(const Tensor<S>& x);  // -> shape [1]
template <typename S>
Tensor<S> mean_all(const Tensor<S>& x);

// out[i, :] = table[rows[i], :]; gradient scatter-adds back into the table.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, std::span<const std::int64_t> rows);

// Sum of squared differences / count, over everything.
template <typename S>
Tensor<S> mse(const Tensor<S>& pred, const Tensor<S>& target);

// Runs the active tape's reverse sweep and publishes leaf gradients.
template <typename S>
void backward(const Tensor<S>& loss);

#define SIFM_OPS_EXTERN(S)                                                                  \
  extern template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                    \
  extern template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                       \
  extern template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                       \
  extern template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                       \
  extern template Tensor<S> scale(const Tensor<S>&, S);                                    \
  extern template Tensor<S> gelu(const Tensor<S>&);                                        \
  extern template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
                                       double);                                            \
  extern template Tensor<S> softmax(const Tensor<S>&);                                     \
  extern template Tensor<S> reshape(const Tensor<S>&, Shape);                              \
  extern template Tensor<S> transpose(const Tensor<S>&, std::vector<int>);                 \
  extern template Tensor<S> slice(const Tensor<S>&, int, std::int64_t, std::int64_t);      \
  extern template Tensor<S> concat(std::span<const Tensor<S>>, int);                       \
  extern template Tensor<S> concat(std::initializer_list<Tensor<S>>, int);                 \
  extern template Tensor<S> mean_axis(const Tensor<S>&, int);                              \
  extern template Tensor<S> sum_all(const Tensor<S>&);                                     \
  extern template Tensor<S> mean_all(const Tensor<S>&);                                    \
  extern template Tensor<S> gather_rows(const Tensor<S>&, std::span<const std::int64_t>);  \
  extern template Tensor<S> mse(const Tensor<S>&, const Tensor<S>&);                       \
  extern template void backward(const Tensor<S>&);

SIFM_OPS_EXTERN(float)
SIFM_OPS_EXTERN(double)
#undef SIFM_OPS_EXTERN

}  // namespace sifm
