#pragma once

#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "sifm/ops.hpp"
#include "sifm/rng.hpp"
#include "sifm/tensor.hpp"

namespace sifm {

// Central finite-difference gradient oracle. A check takes a list of leaf
// shapes and a builder that maps leaves to a scalar loss; the builder must
// be generic over the scalar type (a generic lambda calling the templated
// ops), so the same graph runs in f64 (analytic + numeric reference) and
// optionally f32 (analytic only, compared against the f64 numeric grads).
//
// Error metric per element: |analytic - numeric| / max(1, |analytic|,
// |numeric|) — absolute for small gradients, relative for large ones.

struct FdOptions {
  double step = 1e-5;
  double tol64 = 1e-6;
  double tol32 = 1e-4;  // <= 0 disables the f32 pass
  double init_lo = -0.5;
  double init_hi = 0.5;
  // 0 probes every element; otherwise at most this many per leaf, drawn
  // deterministically (keeps large end-to-end checks inside a time budget
  // while still touching every leaf tensor).
  std::int64_t max_coords_per_leaf = 0;
  std::uint64_t sample_seed = 0x51f3'5eedULL;
};

struct FdReport {
  std::string name;
  std::size_t checked = 0;  // number of leaf elements probed
  double max_err64 = 0.0;
  double max_err32 = 0.0;
  bool ran32 = false;
  bool pass = true;
  double seconds = 0.0;
};

double grad_rel_err(double analytic, double numeric);
std::string fd_report_line(const FdReport& r);

namespace detail {

template <typename S>
std::vector<Tensor<S>> make_leaves(const std::vector<Shape>& shapes,
                                   const std::vector<std::vector<double>>& master) {
  std::vector<Tensor<S>> leaves;
  leaves.reserve(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::vector<S> vals(master[i].size());
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = static_cast<S>(master[i][k]);
    leaves.emplace_back(shapes[i], std::move(vals));
    leaves.back().set_requires_grad();
  }
  return leaves;
}

template <typename S, typename Builder>
std::vector<std::vector<double>> analytic_grads(const std::vector<Shape>& shapes,
                                                const std::vector<std::vector<double>>& master,
                                                Builder&& builder) {
  std::vector<Tensor<S>> leaves = make_leaves<S>(shapes, master);
  Tape<S> tape;
  Tensor<S> loss = builder(std::span<Tensor<S>>(leaves));
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("fd_check: builder must return a scalar loss");
  }
  tape.backward(loss, /*publish=*/false);
  std::vector<std::vector<double>> out(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    out[i].assign(master[i].size(), 0.0);
    if (!tape.tracked(leaves[i])) continue;  // unused leaf: gradient is zero
    std::span<const S> g = tape.gradient(leaves[i]);
    for (std::size_t k = 0; k < g.size(); ++k) out[i][k] = static_cast<double>(g[k]);
  }
  return out;
}

}  // namespace detail

template <typename Builder>
FdReport fd_check(std::string name, const std::vector<Shape>& leaf_shapes, Builder&& builder,
                  Rng& rng, const FdOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  FdReport rep;
  rep.name = std::move(name);

  std::vector<std::vector<double>> master(leaf_shapes.size());
  for (std::size_t i = 0; i < leaf_shapes.size(); ++i) {
    master[i].resize(static_cast<std::size_t>(shape_size(leaf_shapes[i])));
    for (double& v : master[i]) {
      v = opts.init_lo + (opts.init_hi - opts.init_lo) * rng.uniform();
    }
  }

  auto eval64 = [&](const std::vector<std::vector<double>>& vals) -> double {
    std::vector<Tensor<double>> leaves;
    leaves.reserve(leaf_shapes.size());
    for (std::size_t i = 0; i < leaf_shapes.size(); ++i) {
      leaves.emplace_back(leaf_shapes[i], vals[i]);
    }
    return builder(std::span<Tensor<double>>(leaves)).item();
  };

  std::vector<std::vector<double>> a64 =
      detail::analytic_grads<double>(leaf_shapes, master, builder);
  std::vector<std::vector<double>> a32;
  if (opts.tol32 > 0) {
    a32 = detail::analytic_grads<float>(leaf_shapes, master, builder);
    rep.ran32 = true;
  }

  for (std::size_t i = 0; i < leaf_shapes.size(); ++i) {
    std::vector<std::size_t> coords(master[i].size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (opts.max_coords_per_leaf > 0 &&
        static_cast<std::int64_t>(coords.size()) > opts.max_coords_per_leaf) {
      Rng pick(Rng::derive(opts.sample_seed, rep.name + "#" + std::to_string(i)));
      const std::size_t want = static_cast<std::size_t>(opts.max_coords_per_leaf);
      for (std::size_t k = 0; k < want; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(pick.below(coords.size() - k));
        std::swap(coords[k], coords[j]);
      }
      coords.resize(want);
    }
    for (const std::size_t k : coords) {
      const double keep = master[i][k];
      master[i][k] = keep + opts.step;
      const double fp = eval64(master);
      master[i][k] = keep - opts.step;
      const double fm = eval64(master);
      master[i][k] = keep;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      rep.max_err64 = std::max(rep.max_err64, grad_rel_err(a64[i][k], numeric));
      if (rep.ran32) {
        rep.max_err32 = std::max(rep.max_err32, grad_rel_err(a32[i][k], numeric));
      }
      ++rep.checked;
    }
  }

  rep.pass = rep.max_err64 < opts.tol64 && (!rep.ran32 || rep.max_err32 < opts.tol32);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace sifm
