#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "sifm/fdcheck.hpp"

namespace sifm {

// Registry of finite-difference gradient checks: one case per differentiable
// op, plus an end-to-end case that differentiates the full micro model's
// training loss with respect to every parameter tensor.
struct GradcheckOptions {
  bool include_model = true;
  // Appends a case wired through a deliberately sign-flipped backward rule.
  // That row must FAIL; it proves the harness actually detects wrong
  // gradients rather than vacuously passing.
  bool inject_fault = false;
  std::int64_t model_coords_per_leaf = 3;  // 0 probes every parameter element
  std::uint64_t rng_seed = 977;
};

inline constexpr const char* kFaultCaseName = "selftest.flipped_sign";

std::vector<FdReport> run_gradcheck(const GradcheckOptions& opts = {});

bool gradcheck_passed(std::span<const FdReport> reports);

// One fd_report_line per case plus a tail summary line.
void print_gradcheck(std::ostream& os, std::span<const FdReport> reports);

}  // namespace sifm
