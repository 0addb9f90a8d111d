#include "sifm/adam.hpp"

#include <cmath>

namespace sifm {

template <typename S>
void AdamState<S>::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
  if (step_count < 0) throw ConfigError("adam: negative step count");
  if (m.size() != v.size()) throw ContractError("adam: moment buffers out of sync");
}

template <typename S>
void adam_step(std::span<Tensor<S>> params, AdamState<S>& state) {
  state.validate();
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].defined()) throw ContractError("adam: undefined parameter " + std::to_string(i));
    if (!params[i].has_grad()) {
      throw ContractError("adam: parameter " + std::to_string(i) + " " +
                          shape_str(params[i].shape()) + " has no gradient");
    }
    total += static_cast<std::size_t>(params[i].size());
  }
  if (state.m.empty()) {
    state.m.assign(total, S(0));
    state.v.assign(total, S(0));
  } else if (state.m.size() != total) {
    throw ContractError("adam: state sized for " + std::to_string(state.m.size()) +
                        " values, parameters have " + std::to_string(total));
  }

  const double t = static_cast<double>(++state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2;
  const double lr = state.lr, eps = state.eps;

  std::size_t off = 0;
  for (auto& p : params) {
    S* w = p.values_mut().data();
    std::span<S> g = p.grad_mut();
    S* mp = state.m.data() + off;
    S* vp = state.v.data() + off;
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(mp[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(vp[i]) + (1.0 - b2) * gi * gi;
      mp[i] = static_cast<S>(mi);
      vp[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<S>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + eps));
      g[i] = S(0);
    }
    off += n;
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace sifm
