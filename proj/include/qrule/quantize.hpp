#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qrule/error.hpp"
#include "qrule/potential.hpp"
#include "qrule/propagate.hpp"
#include "qrule/quadrature.hpp"

namespace qrule {

inline constexpr int kDefaultFilms = 4096;
inline constexpr double kReportTol = 1e-3 * std::numbers::pi;

struct RegionContribution {
  Interval interval;
  RegionKind kind = RegionKind::allowed;
  /// ∫k dx on allowed regions, ∫κ dx on forbidden ones.
  double momentum_integral = 0.0;
  /// ∫ k′/(log φ)′ dx on allowed regions; the film-ledger form of
  /// ∫ φκ′/(κ² − φ²) dx on forbidden ones.
  double correction_integral = 0.0;
  double boundary_term_left = 0.0;
  double boundary_term_right = 0.0;
  /// φ zeros (allowed) or φ = +κ crossings (forbidden).
  int count = 0;
  double value = 0.0;
  long nearest_multiple = 0;
  double residual = 0.0;
  /// Forbidden regions only: see ForbiddenContribution::ledger_residual.
  double ledger_residual = 0.0;
};

struct QuantizationReport {
  double energy = 0.0;
  std::vector<RegionContribution> regions;
  std::vector<TurningPoint> turning_points;
  /// Σ of the arctan boundary terms at every turning point; zero when V is
  /// continuous at all of them.
  double discontinuity_correction = 0.0;
  double total_value = 0.0;
  long nearest_total = 0;
  /// Set only when |total_residual| ≤ tolerance.
  std::optional<long> total_N;
  double total_residual = 0.0;
  int psi_nodes = 0;

  bool eigenstate() const { return total_N.has_value(); }
};

/// Round half away from zero.
inline long nearest_multiple_of_pi(double v) {
  return std::lround(v / std::numbers::pi);
}

namespace detail {

/// Pieces of an interval split at interior joints; each piece lies inside a
/// single segment.
inline std::vector<Interval> split_at_joints(const Potential& p, const Interval& iv) {
  std::vector<Interval> out;
  double a = iv.lo;
  for (double j : p.joints()) {
    if (j > iv.lo && j < iv.hi) {
      out.push_back({a, j});
      a = j;
    }
  }
  out.push_back({a, iv.hi});
  return out;
}

inline double radicand_tol(double energy) { return 1e-9 * (1.0 + std::abs(energy)); }

inline double region_sqrt_integral(const Potential& p, double energy,
                                   const Interval& iv, int sign) {
  if (!(iv.hi > iv.lo)) return 0.0;
  if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi))
    throw Error(ErrorKind::invalid_parameter, "momentum integral over an infinite interval");
  double total = 0.0;
  for (const auto& piece : split_at_joints(p, iv)) {
    const Segment& seg = cell_segment(p, piece.lo, piece.hi);
    total += quad::sine_substituted(
        [&](double x, double jac) {
          const double r = sign * (energy - seg.value(x));
          if (r < -radicand_tol(energy))
            throw Error(ErrorKind::negative_radicand,
                        "radicand " + std::to_string(r) + " at x=" + std::to_string(x));
          return std::sqrt(std::max(0.0, r)) * jac;
        },
        piece.lo, piece.hi);
  }
  return total;
}

}  // namespace detail

/// ∫√(E − V) dx over an allowed interval.
inline double momentum_integral(const Potential& p, double energy, const Interval& region) {
  return detail::region_sqrt_integral(p, energy, region, +1);
}

/// ∫√(V − E) dx over a forbidden interval.
inline double forbidden_integral(const Potential& p, double energy, const Interval& region) {
  return detail::region_sqrt_integral(p, energy, region, -1);
}

/// ∫ k′ φ/φ′ dx with φ′ = −(k² + φ²), i.e. ∫ −k′ψψ′/(k²ψ² + ψ′²) dx.
inline double correction_allowed(const LogDerivTrace& t, const Potential& p,
                                  double energy, const Interval& region) {
  if (region.lo < t.lo() || region.hi > t.hi())
    throw Error(ErrorKind::coverage, "trace does not cover the region");
  double total = 0.0;
  for (const auto& piece : detail::split_at_joints(p, region)) {
    const Segment& seg = detail::cell_segment(p, piece.lo, piece.hi);
    if (std::holds_alternative<Constant>(seg.form)) continue;
    total += quad::sine_substituted(
        [&](double x, double jac) {
          const double k2 = std::max(0.0, energy - seg.value(x));
          const double k = std::sqrt(k2);
          if (k == 0.0) return 0.0;
          const double dk = -seg.slope(x) / (2.0 * k);
          const State s = t.state_at(x);
          const double den = k2 * s.psi * s.psi + s.dpsi * s.dpsi;
          if (den == 0.0) return 0.0;
          return -dk * jac * s.psi * s.dpsi / den;
        },
        piece.lo, piece.hi);
  }
  return total;
}

namespace detail {

/// arctan(k/φ(x)) with k taken from the side of x that lies inside the
/// region.
inline double arctan_term(const LogDerivTrace& t, const Potential& p, double energy,
                          double x, int side) {
  const double k = std::sqrt(std::max(0.0, energy - p.eval_side(x, side)));
  if (k == 0.0) return 0.0;
  const State s = t.state_at(x);
  if (s.dpsi == 0.0)
    throw Error(ErrorKind::degenerate_state,
                "phi = 0 exactly at turning point x=" + std::to_string(x));
  return std::atan(k * s.psi / s.dpsi);
}

}  // namespace detail

/// Σ of −arctan(k_a/φ_a) + arctan(k_b/φ_b) over allowed regions. The
/// arctanh pieces at forbidden-region ends are carried by the crossing
/// ledger (their real parts enter only through the iπ/2 sheet jumps).
inline double boundary_terms(const Potential& p, double energy,
                             const RegionPartition& part, const LogDerivTrace& t) {
  double total = 0.0;
  for (const auto& r : part.regions) {
    if (r.kind != RegionKind::allowed) continue;
    total += -detail::arctan_term(t, p, energy, r.interval.lo, +1) +
             detail::arctan_term(t, p, energy, r.interval.hi, -1);
  }
  return total;
}

struct ForbiddenContribution {
  /// Real part of the bracket, −m·π.
  double value = 0.0;
  /// Net (upward minus downward) φ = +κ crossings.
  int m_total = 0;
  /// ∫κ dx − Σ(film atanh differences): the i-coefficient of the bracket,
  /// which vanishes in the continuum. Ill-conditioned for opaque barriers
  /// because Re atanh(κ/φ) needs φ − κ to full relative precision.
  double ledger_residual = 0.0;
  double correction = 0.0;
  double boundary_in = 0.0;
  double boundary_out = 0.0;
};

/// Forbidden bracket by pure film recursion from φ at the region entry.
inline ForbiddenContribution correction_forbidden(const Potential& p, double energy,
                                                  const Interval& region, double phi_in,
                                                  int n_films = kDefaultFilms) {
  if (n_films < 1024)
    throw Error(ErrorKind::invalid_parameter, "n_films must be >= 1024");
  const FilmResult f = film_propagate(p, energy, region, n_films, phi_in);
  ForbiddenContribution c;
  c.m_total = f.net_crossings;
  c.correction = f.interior_sum();
  c.boundary_in = f.boundary_in();
  c.boundary_out = f.boundary_out();
  c.ledger_residual =
      forbidden_integral(p, energy, region) - (c.correction + c.boundary_in + c.boundary_out);
  c.value = -c.m_total * std::numbers::pi;
  return c;
}

/// Forbidden bracket with every film anchored to the trace's φ at its edges;
/// the crossing count comes from the trace. Stable for barriers of any
/// opacity because no growth is amplified across films.
inline ForbiddenContribution correction_forbidden(const LogDerivTrace& t, const Potential& p,
                                                  double energy, const Interval& region,
                                                  int n_films = kDefaultFilms) {
  if (n_films < 1024)
    throw Error(ErrorKind::invalid_parameter, "n_films must be >= 1024");
  const double d = region.width() / n_films;
  std::vector<State> edges;
  edges.reserve(n_films + 1);
  for (int j = 0; j <= n_films; ++j)
    edges.push_back(t.state_at(j == n_films ? region.hi : region.lo + j * d));
  ForbiddenContribution c;
  double out_prev = 0.0;
  for (int j = 1; j <= n_films; ++j) {
    const double xm = region.lo + (j - 0.5) * d;
    const double k = std::sqrt(std::max(0.0, p.eval(xm) - energy));
    const double in = detail::re_atanh_ratio(k, edges[j - 1]);
    const double out = detail::re_atanh_ratio(k, edges[j]);
    if (j == 1) c.boundary_in = -in;
    else c.correction += out_prev - in;
    out_prev = out;
  }
  c.boundary_out = out_prev;
  c.m_total = crossings(t, p, energy, region, +1).net;
  c.ledger_residual =
      forbidden_integral(p, energy, region) - (c.correction + c.boundary_in + c.boundary_out);
  c.value = -c.m_total * std::numbers::pi;
  return c;
}

/// Midpoint of the allowed region with the largest ∫k dx at `energy`.
inline double choose_match_point(const Potential& p, double energy) {
  const auto part = partition(p, energy);
  double best = -1.0;
  double x = 0.0;
  for (const auto& r : part.regions) {
    if (r.kind != RegionKind::allowed) continue;
    const double v = momentum_integral(p, energy, r.interval);
    if (v > best) {
      best = v;
      x = 0.5 * (r.interval.lo + r.interval.hi);
    }
  }
  return x;
}

/// Midpoints of every allowed region at `energy`.
inline std::vector<double> allowed_midpoints(const Potential& p, double energy) {
  std::vector<double> out;
  for (const auto& r : partition(p, energy).regions)
    if (r.kind == RegionKind::allowed) out.push_back(0.5 * (r.interval.lo + r.interval.hi));
  return out;
}

/// Full-line trace at an eigenvalue, joined in the well where the left and
/// right marches agree best. A state localized in one well can only be
/// joined there: on the far side of an opaque barrier the march against
/// the decay direction loses the state to rounding.
inline LogDerivTrace eigen_trace(const Potential& p, double energy,
                                 int n_steps = kDefaultSteps) {
  double best_x = 0.0;
  double best = kInf;
  for (double x : allowed_midpoints(p, energy)) {
    const double m = std::abs(matching_mismatch(p, energy, x, n_steps));
    if (m < best) {
      best = m;
      best_x = x;
    }
  }
  return full_trace(p, energy, best_x, n_steps);
}

struct VerifyOptions {
  int n_steps = kDefaultSteps;
  int n_films = kDefaultFilms;
  double tolerance = kReportTol;
};

inline QuantizationReport verify_rule(const Potential& p, double energy,
                                      const VerifyOptions& opt = {}) {
  const auto part = partition(p, energy);
  const LogDerivTrace t = eigen_trace(p, energy, opt.n_steps);

  QuantizationReport rep;
  rep.energy = energy;
  rep.turning_points = part.turning_points;
  rep.psi_nodes = count_psi_nodes(t);
  for (const auto& r : part.interior()) {
    RegionContribution c;
    c.interval = r.interval;
    c.kind = r.kind;
    if (r.kind == RegionKind::allowed) {
      c.momentum_integral = momentum_integral(p, energy, r.interval);
      c.correction_integral = correction_allowed(t, p, energy, r.interval);
      c.boundary_term_left = -detail::arctan_term(t, p, energy, r.interval.lo, +1);
      c.boundary_term_right = detail::arctan_term(t, p, energy, r.interval.hi, -1);
      c.count = count_phi_zeros(t, r.interval);
      c.value = c.momentum_integral - c.correction_integral -
                (c.boundary_term_left + c.boundary_term_right);
      rep.discontinuity_correction += c.boundary_term_left + c.boundary_term_right;
    } else {
      const auto f = correction_forbidden(t, p, energy, r.interval, opt.n_films);
      c.momentum_integral = forbidden_integral(p, energy, r.interval);
      c.correction_integral = f.correction;
      c.boundary_term_left = f.boundary_in;
      c.boundary_term_right = f.boundary_out;
      c.count = f.m_total;
      c.value = f.value;
      c.ledger_residual = f.ledger_residual;
    }
    c.nearest_multiple = nearest_multiple_of_pi(c.value);
    c.residual = c.value - c.nearest_multiple * std::numbers::pi;
    rep.total_value += c.value;
    rep.regions.push_back(c);
  }
  rep.nearest_total = nearest_multiple_of_pi(rep.total_value);
  rep.total_residual = rep.total_value - rep.nearest_total * std::numbers::pi;
  if (std::abs(rep.total_residual) <= opt.tolerance) rep.total_N = rep.nearest_total;
  return rep;
}

struct ProperRuleCheck {
  double lhs = 0.0;        // ∫k dx at E_n
  double reference = 0.0;  // ∫k₀ dx at E_0
  int n = 0;
  double residual() const { return lhs - n * std::numbers::pi - reference; }
};

/// Single-well check ∫k dx (E_n) = nπ + ∫k₀ dx (E_0).
inline ProperRuleCheck proper_rule_check(const Potential& p, double energy_n,
                                         double energy_0, int n) {
  auto single = [&](double e) {
    const auto part = partition(p, e);
    if (part.count() != 2)
      throw Error(ErrorKind::multi_well, std::to_string(part.count()) +
                                             " turning points at E=" + std::to_string(e));
    return momentum_integral(p, e, part.regions[1].interval);
  };
  return {single(energy_n), single(energy_0), n};
}

}  // namespace qrule
