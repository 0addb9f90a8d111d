#include "sifm/fdcheck.hpp"

#include <cmath>
#include <cstdio>

namespace sifm {

double grad_rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

std::string fd_report_line(const FdReport& r) {
  char buf[256];
  if (r.ran32) {
    std::snprintf(buf, sizeof(buf), "%-34s %7zu probes  err64 %.3e  err32 %.3e  %6.2fs  %s",
                  r.name.c_str(), r.checked, r.max_err64, r.max_err32, r.seconds,
                  r.pass ? "pass" : "FAIL");
  } else {
    std::snprintf(buf, sizeof(buf), "%-34s %7zu probes  err64 %.3e  %6.2fs  %s", r.name.c_str(),
                  r.checked, r.max_err64, r.seconds, r.pass ? "pass" : "FAIL");
  }
  return buf;
}

}  // namespace sifm
