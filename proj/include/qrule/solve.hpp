#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "qrule/error.hpp"
#include "qrule/potential.hpp"
#include "qrule/propagate.hpp"
#include "qrule/quantize.hpp"
#include "qrule/specfun.hpp"

namespace qrule {

enum class Route { shooting, analytic, fd_oracle };

inline std::string to_string(Route r) {
  switch (r) {
    case Route::shooting: return "shooting";
    case Route::analytic: return "analytic";
    case Route::fd_oracle: return "fd-oracle";
  }
  return "?";
}

struct EigenSolution {
  int index = 0;  // ψ node count
  double energy = 0.0;
  Route route = Route::shooting;
  double residual = 0.0;
};

struct EnergyWindow {
  double lo = 0.0;
  double hi = 0.0;
  int grid_points = 256;

  void validate() const {
    if (!(lo < hi)) throw Error(ErrorKind::invalid_parameter, "window needs lo < hi");
    if (grid_points < 64)
      throw Error(ErrorKind::invalid_parameter, "grid_points must be >= 64");
  }
};

inline constexpr double kRootTol = 1e-9;
inline constexpr double kWindowClamp = 1e-6;
inline constexpr double kShootingAccept = 1e-6;

namespace detail {

inline EnergyWindow clamped(EnergyWindow w) {
  w.validate();
  w.lo += kWindowClamp;
  w.hi -= kWindowClamp;
  if (!(w.lo < w.hi)) throw Error(ErrorKind::invalid_parameter, "window too narrow");
  return w;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  return out;
}

/// Lowest E in [lo, hi] where count(E) > k, given count(lo) <= k < count(hi).
template <typename Count>
double bisect_count(Count&& count, double lo, double hi, int k, double tol) {
  while (hi - lo > tol * std::max(1.0, std::abs(lo))) {
    const double mid = 0.5 * (lo + hi);
    if (count(mid) > k)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

/// Roots of every k-crossing of a monotone counting function on a window.
template <typename Count>
std::vector<std::pair<int, double>> count_roots(Count&& count, const EnergyWindow& w,
                                                double tol) {
  const auto es = linspace(w.lo, w.hi, w.grid_points);
  std::vector<int> ns;
  ns.reserve(es.size());
  for (double e : es) ns.push_back(count(e));
  std::vector<std::pair<int, double>> out;
  for (std::size_t i = 0; i + 1 < es.size(); ++i) {
    if (ns[i + 1] < ns[i])
      throw Error(ErrorKind::non_convergence,
                  "eigenvalue count decreased between E=" + std::to_string(es[i]) +
                      " and " + std::to_string(es[i + 1]));
    for (int k = ns[i]; k < ns[i + 1]; ++k)
      out.emplace_back(k, bisect_count(count, es[i], es[i + 1], k, tol));
  }
  return out;
}

/// Nudges E off a tangency or turning-point collision before evaluating.
template <typename F>
auto retry_nudged(F&& f, double energy) {
  for (int attempt = 0;; ++attempt) {
    try {
      return f(energy);
    } catch (const Error& e) {
      if (attempt >= 3 || (e.kind() != ErrorKind::tangency &&
                           e.kind() != ErrorKind::degenerate_state))
        throw;
      energy += 1e-11 * std::max(1.0, std::abs(energy));
    }
  }
}

}  // namespace detail

/// Number of eigenvalues below E from the unwrapped matching phase
/// (Sturm counting; independent of the match point).
inline int eigenvalue_count(const Potential& p, double energy,
                            int n_steps = kDefaultSteps) {
  return detail::retry_nudged(
      [&](double e) {
        if (turning_points(p, e).empty()) return 0;
        const double x_m = choose_match_point(p, e);
        const double d = matching_phase(p, e, x_m, n_steps);
        return static_cast<int>(std::ceil(d / std::numbers::pi - 1e-12));
      },
      energy);
}

/// Smallest |atan φ_L − atan φ_R| over the allowed-region midpoints.
inline double best_mismatch(const Potential& p, double energy,
                            int n_steps = kDefaultSteps) {
  double best = kInf;
  for (double x : allowed_midpoints(p, energy))
    best = std::min(best, std::abs(matching_mismatch(p, energy, x, n_steps)));
  return best;
}

/// Generic shooting. Eigenvalues are bracketed on the window grid by the
/// Sturm count from the matching phase, bisected to 1e−9, then indexed by
/// the ψ node count of an independent full-line trace.
inline std::vector<EigenSolution> solve_shooting(const Potential& p, EnergyWindow window,
                                                 int n_steps = kDefaultSteps) {
  const EnergyWindow w = detail::clamped(window);
  auto count = [&](double e) { return eigenvalue_count(p, e, n_steps); };
  std::vector<EigenSolution> out;
  for (const auto& [k, e] : detail::count_roots(count, w, kRootTol)) {
    const double res = best_mismatch(p, e, n_steps);
    if (!(res < kShootingAccept))
      throw Error(ErrorKind::non_convergence,
                  "matching residual " + std::to_string(res) + " at E=" + std::to_string(e));
    const int nodes = count_psi_nodes(eigen_trace(p, e, n_steps));
    if (nodes != k)
      throw Error(ErrorKind::bracket_collision,
                  "node count " + std::to_string(nodes) + " disagrees with root order " +
                      std::to_string(k) + " at E=" + std::to_string(e));
    out.push_back({nodes, e, Route::shooting, res});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

namespace detail {

struct Tridiagonal {
  std::vector<double> diag;
  double off = 0.0;  // constant off-diagonal
};

/// Cell-averaged V so jumps between grid points stay second order.
inline double cell_potential(const Potential& p, double x, double h) {
  const double a = x - 0.5 * h;
  const double b = x + 0.5 * h;
  double acc = 0.0;
  double lo = a;
  for (double j : p.joints()) {
    if (j <= lo || j >= b) continue;
    acc += (j - lo) * p.eval(0.5 * (lo + j));
    lo = j;
  }
  acc += (b - lo) * p.eval(0.5 * (lo + b));
  return acc / h;
}

inline Tridiagonal fd_matrix(const Potential& p, const Interval& dom, int n) {
  const double h = dom.width() / n;
  Tridiagonal t;
  t.off = -1.0 / (h * h);
  t.diag.resize(n - 1);
  for (int i = 1; i < n; ++i)
    t.diag[i - 1] = 2.0 / (h * h) + cell_potential(p, dom.lo + i * h, h);
  return t;
}

/// Number of eigenvalues below λ (Sturm sequence / LDLᵀ inertia).
inline int sturm_count(const Tridiagonal& t, double lambda) {
  const double b2 = t.off * t.off;
  int neg = 0;
  double d = 1.0;
  for (std::size_t i = 0; i < t.diag.size(); ++i) {
    d = t.diag[i] - lambda - (i ? b2 / d : 0.0);
    if (d == 0.0) d = -1e-300;
    if (d < 0) ++neg;
  }
  return neg;
}

inline std::vector<double> lowest_eigenvalues(const Tridiagonal& t, int count) {
  double lo = kInf, hi = -kInf;
  for (double d : t.diag) {
    lo = std::min(lo, d - 2 * std::abs(t.off));
    hi = std::max(hi, d + 2 * std::abs(t.off));
  }
  std::vector<double> out;
  for (int k = 0; k < count; ++k) {
    double a = lo, b = hi;
    for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, std::abs(a)); ++it) {
      const double m = 0.5 * (a + b);
      if (sturm_count(t, m) > k)
        b = m;
      else
        a = m;
    }
    out.push_back(0.5 * (a + b));
  }
  return out;
}

/// Normalized eigenvector by two sweeps of inverse iteration.
inline std::vector<double> eigenvector(const Tridiagonal& t, double lambda) {
  const std::size_t n = t.diag.size();
  const double shift = lambda + 1e-10 * std::max(1.0, std::abs(lambda));
  std::vector<double> x(n, 1.0), c(n), d(n);
  for (int sweep = 0; sweep < 3; ++sweep) {
    // Thomas algorithm on (T − shift).
    double denom = t.diag[0] - shift;
    c[0] = t.off / denom;
    d[0] = x[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
      denom = t.diag[i] - shift - t.off * c[i - 1];
      if (denom == 0.0) denom = 1e-300;
      c[i] = t.off / denom;
      d[i] = (x[i] - t.off * d[i - 1]) / denom;
    }
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
    double norm = 0.0;
    for (double v : x) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : x) v /= norm;
  }
  return x;
}

inline double end_mass(const std::vector<double>& v) {
  double m = 0.0;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < 5 && i < n; ++i) m += v[i] * v[i] + v[n - 1 - i] * v[n - 1 - i];
  return m;
}

}  // namespace detail

/// Lowest `count` eigenvalues of the 3-point discretization with Dirichlet
/// ends, Richardson-extrapolated from grid_n and 2·grid_n. residual is the
/// extrapolation correction.
inline std::vector<EigenSolution> solve_fd_oracle(const Potential& p, const Interval& domain,
                                                  int grid_n, int count) {
  if (grid_n < 2000)
    throw Error(ErrorKind::invalid_parameter, "grid_n must be >= 2000");
  if (count < 1) throw Error(ErrorKind::invalid_parameter, "count must be >= 1");
  if (!(domain.width() > 0) || !std::isfinite(domain.width()))
    throw Error(ErrorKind::invalid_parameter, "domain must be finite with lo < hi");
  const auto coarse_t = detail::fd_matrix(p, domain, grid_n);
  const auto fine_t = detail::fd_matrix(p, domain, 2 * grid_n);
  const auto coarse = detail::lowest_eigenvalues(coarse_t, count);
  const auto fine = detail::lowest_eigenvalues(fine_t, count);
  std::vector<EigenSolution> out;
  for (int k = 0; k < count; ++k) {
    const double m = detail::end_mass(detail::eigenvector(fine_t, fine[k]));
    if (m > 1e-8)
      throw Error(ErrorKind::domain_too_small,
                  "eigenvector " + std::to_string(k) + " has end mass " + std::to_string(m));
    const double e = (4.0 * fine[k] - coarse[k]) / 3.0;
    out.push_back({k, e, Route::fd_oracle, e - fine[k]});
  }
  return out;
}

/// Domain for the FD oracle: past each outer turning point at E_max until
/// ∫κ dx ≥ 24, so Dirichlet ends sit where ψ² < e^{−48}.
inline Interval oracle_domain(const Potential& p, double energy_max) {
  const auto tps = turning_points(p, energy_max);
  if (tps.empty())
    throw Error(ErrorKind::odd_turning_points,
                "no classically allowed region at E=" + std::to_string(energy_max));
  auto extend = [&](double x0, int dir) {
    constexpr double dx = 1e-3;
    double x = x0;
    double acc = 0.0;
    for (long it = 0; it < 2000000; ++it) {
      acc += std::sqrt(std::max(0.0, p.eval(x + dir * 0.5 * dx) - energy_max)) * dx;
      x += dir * dx;
      if (acc >= 24.0) return x;
    }
    throw Error(ErrorKind::truncation_too_shallow, "tail too shallow for the FD oracle");
  };
  return {extend(tps.front().x, -1), extend(tps.back().x, +1)};
}

// ---------------------------------------------------------------------------
// Double square well, exact piecewise solution

namespace detail {

struct Slab {
  double width;
  double v;
};

/// Exact (ψ, ψ′) through a constant slab.
inline State slab_step(State s, double v, double energy, double h) {
  const double q = energy - v;
  if (q > 0) {
    const double k = std::sqrt(q);
    const double c = std::cos(k * h), sn = std::sin(k * h);
    return {s.psi * c + s.dpsi * sn / k, -s.psi * k * sn + s.dpsi * c};
  }
  const double kap = std::sqrt(-q);
  // A e^{κx} + B e^{−κx}, renormalized by e^{−κh} to stay finite.
  const double a = 0.5 * (s.psi + s.dpsi / kap);
  const double b = 0.5 * (s.psi - s.dpsi / kap);
  const double g = std::exp(-2.0 * kap * h);
  return {a + b * g, kap * (a - b * g)};
}

}  // namespace detail

/// θ_L − θ_R at x_d for the double square well, from the exact solution.
/// Prüfer angles accumulate over 64 sub-slabs per piece; crossings of kπ
/// are the eigenvalues.
inline double double_square_well_phase(double xa, double xb, double xc, double xd,
                                       double v_left, double v_barrier, double v_right,
                                       double energy) {
  if (!(energy > 0 && energy < std::min({v_left, v_barrier, v_right})))
    throw Error(ErrorKind::out_of_range, "E outside (0, min(V_I, V_0, V_F))");
  std::vector<detail::Slab> slabs{{xb - xa, 0.0}};
  if (xc > xb) slabs.push_back({xc - xb, v_barrier});
  slabs.push_back({xd - xc, 0.0});
  const double kl = std::sqrt(v_left - energy);
  State s{1.0, kl};
  double theta = std::atan2(1.0, kl);
  constexpr int kSub = 64;
  for (const auto& sl : slabs) {
    const double h = sl.width / kSub;
    for (int i = 0; i < kSub; ++i) {
      const State n = detail::slab_step(s, sl.v, energy, h);
      theta += std::atan2(s.dpsi * n.psi - s.psi * n.dpsi, s.dpsi * n.dpsi + s.psi * n.psi);
      const double m = std::max(std::abs(n.psi), std::abs(n.dpsi));
      s = {n.psi / m, n.dpsi / m};
    }
  }
  return theta - std::atan2(1.0, -std::sqrt(v_right - energy));
}

inline std::vector<EigenSolution> solve_double_square_well(
    double xa, double xb, double xc, double xd, double v_left, double v_barrier,
    double v_right, EnergyWindow window) {
  (void)build::double_square_well(xa, xb, xc, xd, v_left, v_barrier, v_right);
  window.validate();
  const double top = std::min({v_left, v_barrier, v_right});
  window.lo = std::max(window.lo, 0.0);
  window.hi = std::min(window.hi, top);
  window.grid_points = 512;
  const EnergyWindow w = detail::clamped(window);
  auto phase = [&](double e) {
    return double_square_well_phase(xa, xb, xc, xd, v_left, v_barrier, v_right, e);
  };
  auto count = [&](double e) {
    return static_cast<int>(std::ceil(phase(e) / std::numbers::pi - 1e-12));
  };
  std::vector<EigenSolution> out;
  // The phase can step by π inside a 1e−13 bracket for states localized in
  // one well, so the residual reported is the bracket width.
  constexpr double kTol = 1e-13;
  for (const auto& [k, e] : detail::count_roots(count, w, kTol))
    out.push_back({k, e, Route::analytic, kTol * std::max(1.0, std::abs(e))});
  return out;
}

// ---------------------------------------------------------------------------
// Biharmonic well through Hermite functions

namespace detail {

/// atan of a Hermite-ratio log-derivative, π/2 at a denominator zero.
inline double atan_ratio_term(double offset, double nu, double x) {
  try {
    return std::atan(offset + specfun::hermite_ratio(nu, x));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ratio_pole) throw;
    return 0.5 * std::numbers::pi;
  }
}

inline double wrap_half_pi(double d) {
  const double pi = std::numbers::pi;
  d = std::remainder(d, pi);
  if (d <= -0.5 * pi) d += pi;
  return d;
}

}  // namespace detail

/// Matching mismatch at x = 0 for ψ_L ∝ D_ν(−√2(x+α)), decaying as x → −∞,
/// and ψ_R ∝ D_μ(√2(x−β)). With φ_L(0) = α + H_{ν+1}(−α)/H_ν(−α) and
/// φ_R(0) = −β − H_{μ+1}(−β)/H_μ(−β), returns atan φ_L − atan φ_R wrapped
/// into (−π/2, π/2]. ν = (E−1)/2, μ = (E−1+γ)/2.
inline double biharmonic_mismatch(double alpha, double beta, double gamma, double energy) {
  const double nu = 0.5 * (energy - 1.0);
  const double mu = 0.5 * (energy - 1.0 + gamma);
  const double l = detail::atan_ratio_term(alpha, nu, -alpha);
  const double r = -detail::atan_ratio_term(beta, mu, -beta);
  return detail::wrap_half_pi(l - r);
}

/// Same matching with the left piece taken as D_ν(+√2(x+α)), which decays
/// toward +∞ instead: α + β − H_{ν+1}(α)/H_ν(α) + H_{μ+1}(−β)/H_μ(−β) = 0.
/// Kept for comparison only; its roots are not eigenvalues of the well.
inline double biharmonic_mismatch_mirrored_left(double alpha, double beta, double gamma,
                                                double energy) {
  const double nu = 0.5 * (energy - 1.0);
  const double mu = 0.5 * (energy - 1.0 + gamma);
  const double l = -detail::atan_ratio_term(-alpha, nu, alpha);
  const double r = -detail::atan_ratio_term(beta, mu, -beta);
  return detail::wrap_half_pi(l - r);
}

namespace detail {

/// Sign-change roots of a wrapped mismatch; wrap jumps (|f| not small at
/// the converged point) are discarded.
inline std::vector<double> wrapped_roots(const std::function<double(double)>& f,
                                         const EnergyWindow& w, double tol) {
  const auto es = linspace(w.lo, w.hi, w.grid_points);
  std::vector<double> fs;
  for (double e : es) fs.push_back(f(e));
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < es.size(); ++i) {
    if (fs[i] == 0.0) {
      out.push_back(es[i]);
      continue;
    }
    if ((fs[i] < 0) == (fs[i + 1] < 0)) continue;
    double a = es[i], b = es[i + 1], fa = fs[i];
    while (b - a > tol * std::max(1.0, std::abs(a))) {
      const double m = 0.5 * (a + b);
      const double fm = f(m);
      if ((fm < 0) == (fa < 0)) {
        a = m;
        fa = fm;
      } else {
        b = m;
      }
    }
    const double root = 0.5 * (a + b);
    if (std::abs(f(root)) < 1e-6) out.push_back(root);
  }
  return out;
}

}  // namespace detail

namespace detail {

/// Root of a wrapped mismatch on [lo, hi] sampled at n points, or NaN.
inline double first_true_root(const std::function<double(double)>& f, double lo, double hi,
                              int n, double tol) {
  EnergyWindow w{lo, hi, n};
  const auto r = wrapped_roots(f, w, tol);
  return r.empty() ? std::numeric_limits<double>::quiet_NaN() : r.front();
}

}  // namespace detail

/// Biharmonic eigenvalues from the Hermite-function matching equation at
/// x = 0, bisected to 1e−10. The FD oracle locates every state in the window
/// and fixes its index; states localized away from x = 0 show up only as a
/// narrow feature of the mismatch, so those brackets are re-sampled finely
/// around the oracle estimate.
inline std::vector<EigenSolution> solve_biharmonic(double alpha, double beta, double gamma,
                                                   EnergyWindow window) {
  if (!(alpha >= 0)) throw Error(ErrorKind::invalid_parameter, "alpha >= 0 violated");
  const Potential p = build::biharmonic(alpha, beta, gamma);
  if (window.grid_points < 1024) window.grid_points = 1024;
  const EnergyWindow w = detail::clamped(window);
  auto f = [&](double e) { return biharmonic_mismatch(alpha, beta, gamma, e); };
  const auto coarse = detail::wrapped_roots(f, w, 1e-10);

  const Interval dom = oracle_domain(p, w.hi);
  constexpr int kGrid = 4000;
  const int below = detail::sturm_count(detail::fd_matrix(p, dom, kGrid), w.hi) + 1;
  const auto oracle = solve_fd_oracle(p, dom, kGrid, below);

  std::vector<EigenSolution> out;
  for (const auto& o : oracle) {
    if (o.energy < w.lo || o.energy > w.hi) continue;
    double root = std::numeric_limits<double>::quiet_NaN();
    for (double e : coarse)
      if (std::abs(e - o.energy) < 1e-3) root = e;
    for (double half : {1e-3, 1e-5, 1e-7}) {
      if (!std::isnan(root)) break;
      root = detail::first_true_root(f, std::max(w.lo, o.energy - half),
                                     std::min(w.hi, o.energy + half), 4097, 1e-10);
    }
    if (std::isnan(root))
      throw Error(ErrorKind::non_convergence,
                  "no matching root near oracle state " + std::to_string(o.index) +
                      " at E=" + std::to_string(o.energy));
    out.push_back({o.index, root, Route::analytic, f(root)});
  }
  return out;
}

/// Roots of biharmonic_mismatch_mirrored_left in the window.
inline std::vector<double> biharmonic_mirrored_left_roots(double alpha, double beta,
                                                          double gamma, EnergyWindow window) {
  if (window.grid_points < 1024) window.grid_points = 1024;
  const EnergyWindow w = detail::clamped(window);
  return detail::wrapped_roots(
      [&](double e) { return biharmonic_mismatch_mirrored_left(alpha, beta, gamma, e); }, w,
      1e-10);
}

/// E_n and E_0 of a single well by shooting, then the two-turning-point rule.
inline ProperRuleCheck proper_rule_reference(const Potential& p, int n, EnergyWindow window,
                                             int n_steps = kDefaultSteps) {
  const auto sols = solve_shooting(p, window, n_steps);
  const EigenSolution* e0 = nullptr;
  const EigenSolution* en = nullptr;
  for (const auto& s : sols) {
    if (s.index == 0) e0 = &s;
    if (s.index == n) en = &s;
  }
  if (!e0 || !en)
    throw Error(ErrorKind::non_convergence,
                "states 0 and " + std::to_string(n) + " not both in window");
  return proper_rule_check(p, en->energy, e0->energy, n);
}

}  // namespace qrule
