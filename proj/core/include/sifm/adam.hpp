#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sifm/tensor.hpp"

namespace sifm {

// Adam optimizer state over a fixed, ordered parameter list. First and
// second moments are stored concatenated in parameter order, so the state
// serializes as two flat arrays plus the step count.
template <typename S>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<S> m;  // first moment, concatenated
  std::vector<S> v;  // second moment, concatenated

  void validate() const;
};

// One Adam update over `params` in order. Every parameter must carry a
// gradient (ContractError otherwise — a parameter outside the graph is a
// wiring bug, not a choice). Gradients are consumed: buffers are zeroed
// after the step so the next backward accumulates from scratch.
template <typename S>
void adam_step(std::span<Tensor<S>> params, AdamState<S>& state);

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
extern template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace sifm
