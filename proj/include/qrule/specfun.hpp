#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "qrule/error.hpp"

namespace qrule::specfun {

struct SeriesControl {
  int max_terms = 4000;
  double rel_tol = 1e-18;
  double overflow_guard = 1e300;

  void validate() const {
    if (max_terms < 64)
      throw Error(ErrorKind::invalid_parameter, "max_terms must be >= 64");
    if (!(rel_tol > 0.0 && rel_tol <= 1e-6))
      throw Error(ErrorKind::invalid_parameter, "rel_tol must be in (0, 1e-6]");
  }
};

template <typename T>
struct LogGamma {
  T value;  // log|Γ(x)|
  int sign;
};

namespace detail {

template <typename T>
T sin_pi(T x) {
  // Reduce to [-1, 1] first so large |x| keeps full precision.
  const T r = x - 2 * std::round(x / 2);
  return std::sin(std::numbers::pi_v<T> * r);
}

template <typename T>
bool is_nonpositive_integer(T x) {
  return x <= 0 && x == std::floor(x);
}

}  // namespace detail

/// log|Γ(x)| with sign. Shifted Stirling series (B_2..B_20), reflection for
/// x < 1/2. Accurate to a few ulps of T on [−50, 50] away from poles.
template <typename T = double>
LogGamma<T> log_gamma(T x) {
  if (detail::is_nonpositive_integer(x))
    throw Error(ErrorKind::pole,
                "Gamma pole at x=" + std::to_string(static_cast<double>(x)));
  if (x < T(0.5)) {
    const T s = detail::sin_pi(x);
    const auto g = log_gamma<T>(1 - x);
    return {std::log(std::numbers::pi_v<T> / std::abs(s)) - g.value,
            (s < 0 ? -1 : 1) * g.sign};
  }
  T shift = 0;
  T y = x;
  while (y < 15) {
    shift += std::log(y);
    y += 1;
  }
  // Bernoulli numbers B_2k / (2k (2k − 1)).
  static constexpr long double kStirling[] = {
      1.0L / 12.0L,           -1.0L / 360.0L,         1.0L / 1260.0L,
      -1.0L / 1680.0L,        1.0L / 1188.0L,         -691.0L / 360360.0L,
      1.0L / 156.0L,          -3617.0L / 122400.0L,   43867.0L / 244188.0L,
      -174611.0L / 125400.0L,
  };
  const T inv = 1 / y;
  const T inv2 = inv * inv;
  T series = 0;
  T pw = inv;
  for (long double c : kStirling) {
    series += static_cast<T>(c) * pw;
    pw *= inv2;
  }
  const T half_log_2pi = T(0.91893853320467274178032973640561764L);
  const T v = (y - T(0.5)) * std::log(y) - y + half_log_2pi + series - shift;
  return {v, 1};
}

/// 1/Γ(x), zero at the poles.
template <typename T>
T recip_gamma(T x) {
  if (detail::is_nonpositive_integer(x)) return 0;
  const auto g = log_gamma<T>(x);
  return g.sign * std::exp(-g.value);
}

/// Confluent hypergeometric M(a, b, x) by direct series, with the Kummer
/// transformation for x < −30.
template <typename T = double>
T kummer_m(T a, T b, T x, const SeriesControl& ctl = {}) {
  ctl.validate();
  if (detail::is_nonpositive_integer(b))
    throw Error(ErrorKind::pole, "M(a,b,x) with b a non-positive integer");
  if (std::abs(x) > 400)
    throw Error(ErrorKind::out_of_range, "|x| > 400 in kummer_m");
  if (x < -30) return std::exp(x) * kummer_m<T>(b - a, b, -x, ctl);

  T term = 1;
  T sum = 1;
  const T tol = static_cast<T>(ctl.rel_tol);
  const T settle = std::abs(a) + std::abs(b) + std::abs(x) + 2;
  for (int n = 0; n < ctl.max_terms; ++n) {
    term *= (a + n) * x / ((b + n) * (n + 1));
    sum += term;
    if (term == 0) return sum;
    if (std::abs(sum) > ctl.overflow_guard)
      throw Error(ErrorKind::overflow, "kummer_m series overflow");
    if (n > settle && std::abs(term) <= tol * std::abs(sum)) return sum;
  }
  throw Error(ErrorKind::non_convergence,
              "kummer_m did not converge in " + std::to_string(ctl.max_terms) +
                  " terms");
}

namespace detail {

inline void check_hermite_range(double nu, double x) {
  if (std::abs(nu) > 60)
    throw Error(ErrorKind::out_of_range, "|nu| > 60 in hermite_nu");
  if (x * x > 400)
    throw Error(ErrorKind::out_of_range, "x^2 > 400 in hermite_nu");
}

}  // namespace detail

/// Hermite function of real order ν (analytic continuation of the
/// polynomials through Kummer's M), evaluated in extended precision.
inline long double hermite_nu_ext(double nu, double x,
                                  const SeriesControl& ctl = {}) {
  detail::check_hermite_range(nu, x);
  using L = long double;
  const L v = nu;
  const L z = x;
  const L z2 = z * z;
  const L r1 = recip_gamma<L>((1 - v) / 2);
  const L r2 = recip_gamma<L>(-v / 2);
  L even = 0;
  L odd = 0;
  if (r1 != 0) even = kummer_m<L>(-v / 2, L(0.5), z2, ctl) * r1;
  if (r2 != 0 && z != 0) odd = 2 * z * kummer_m<L>((1 - v) / 2, L(1.5), z2, ctl) * r2;
  return std::exp2(v) * std::sqrt(std::numbers::pi_v<L>) * (even - odd);
}

inline double hermite_nu(double nu, double x, const SeriesControl& ctl = {}) {
  return static_cast<double>(hermite_nu_ext(nu, x, ctl));
}

/// Parabolic cylinder function D_ν(z) = 2^{−ν/2} e^{−z²/4} H_ν(z/√2).
inline double pcf_d(double nu, double z, const SeriesControl& ctl = {}) {
  using L = long double;
  const L h = hermite_nu_ext(nu, static_cast<double>(z / std::numbers::sqrt2), ctl);
  const L zz = z;
  return static_cast<double>(std::exp2(-L(nu) / 2) * std::exp(-zz * zz / 4) * h);
}

/// H_{ν+1}(x) / H_ν(x) through log magnitudes; throws ratio_pole when the
/// denominator vanishes.
inline double hermite_ratio(double nu, double x, const SeriesControl& ctl = {}) {
  const long double num = hermite_nu_ext(nu + 1, x, ctl);
  const long double den = hermite_nu_ext(nu, x, ctl);
  if (den == 0)
    throw Error(ErrorKind::ratio_pole, "H_nu(x) = 0 in ratio");
  const int sign = ((num < 0) != (den < 0)) ? -1 : 1;
  if (num == 0) return 0.0;
  return sign * static_cast<double>(
                    std::exp(std::log(std::abs(num)) - std::log(std::abs(den))));
}

}  // namespace qrule::specfun
