#pragma once

// Test-only numerical oracles. Nothing here calls into the reverse-mode
// machinery; values are obtained purely by re-evaluating forward functions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace savn::oracle {

inline constexpr double kFdStep = 1e-5;

/// Central differences of a scalar function of a flat vector.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = kFdStep) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central differences of a vector-valued function along direction `v`.
inline std::vector<double> directional_difference(
    const std::function<std::vector<double>(const std::vector<double>&)>& f, const std::vector<double>& x,
    const std::vector<double>& v, double h = kFdStep) {
  std::vector<double> up = x, down = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    up[i] += h * v[i];
    down[i] -= h * v[i];
  }
  auto fu = f(up);
  auto fd = f(down);
  std::vector<double> out(fu.size());
  for (std::size_t i = 0; i < fu.size(); ++i) out[i] = (fu[i] - fd[i]) / (2.0 * h);
  return out;
}

inline double norm2(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

/// ||a - b|| / max(||a||, ||b||, floor). The floor keeps identically-zero
/// gradients from turning rounding noise into a large ratio.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return norm2(d) / std::max({norm2(a), norm2(b), floor});
}

}  // namespace savn::oracle
