#pragma once

// Shared test-only helpers: an independent quadrature oracle for dirichlet
// moment integrals and small statistics utilities. Nothing here touches the
// library's own moment code path.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace test_support {

enum class Rule { trapezoid, simpson };

// Integrates a1^y1 a2^y2 (1-a1-a2)^r against the dirichlet(theta) density on
// the 2-simplex, via the substitution a2 = (1-a1) u that maps the simplex to
// the unit square (jacobian 1-a1). Composite trapezoid or Simpson with n
// intervals per axis (n even for Simpson).
inline double dirichlet_moment_quadrature(std::array<double, 3> theta, double y1, double y2,
                                          double r, int n, Rule rule) {
  const double e1 = theta[0] + y1 - 1.0;
  const double e2 = theta[1] + y2 - 1.0;
  const double e3 = theta[2] + r - 1.0;
  const double log_beta = std::lgamma(theta[0]) + std::lgamma(theta[1]) + std::lgamma(theta[2]) -
                          std::lgamma(theta[0] + theta[1] + theta[2]);
  const double h = 1.0 / n;

  auto weight = [&](int i) -> double {
    if (rule == Rule::trapezoid) return (i == 0 || i == n) ? 0.5 : 1.0;
    if (i == 0 || i == n) return 1.0 / 3.0;
    return (i % 2 == 1 ? 4.0 : 2.0) / 3.0;
  };
  auto powz = [](double base, double expo) {
    if (expo == 0.0) return 1.0;  // 0^0 := 1 at the boundary
    return std::pow(base, expo);
  };

  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    double a1 = i * h;
    double fa = powz(a1, e1) * powz(1.0 - a1, e2 + e3 + 1.0);
    if (fa == 0.0) continue;
    double inner = 0.0;
    for (int j = 0; j <= n; ++j) {
      double u = j * h;
      inner += weight(j) * powz(u, e2) * powz(1.0 - u, e3);
    }
    acc += weight(i) * fa * inner;
  }
  return acc * h * h / std::exp(log_beta);
}

struct RunningStats {
  std::uint64_t count = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double x) {
    ++count;
    sum += x;
    sumsq += x * x;
  }
  double mean() const { return sum / static_cast<double>(count); }
  double variance() const {
    double m = mean();
    return std::max(0.0, sumsq / static_cast<double>(count) - m * m);
  }
  double stderr_of_mean() const { return std::sqrt(variance() / static_cast<double>(count)); }
};

inline double binomial_stderr(double p, std::uint64_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace test_support
