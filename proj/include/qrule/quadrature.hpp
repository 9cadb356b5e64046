#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace qrule::quad {

struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss–Legendre rule on [−1, 1] (Newton on P_n).
inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  return r;
}

inline const GaussLegendre& gl256() {
  static const GaussLegendre rule = gauss_legendre(256);
  return rule;
}

/// ∫_lo^hi f(x) dx under x = mid + half·sin θ, θ ∈ [−π/2, π/2]. The cos θ
/// Jacobian absorbs inverse-square-root endpoint behaviour, and √(endpoint
/// distance) integrands become smooth in θ.
template <typename F>
double sine_substituted(F&& f, double lo, double hi,
                        const GaussLegendre& rule = gl256()) {
  if (!(hi > lo)) return 0.0;
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double hp = 0.5 * std::numbers::pi;
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double theta = hp * rule.nodes[i];
    const double x = mid + half * std::sin(theta);
    acc += rule.weights[i] * f(x, half * std::cos(theta));
  }
  return acc * hp;
}

}  // namespace qrule::quad
