#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "qrule/error.hpp"
#include "qrule/potential.hpp"

namespace qrule {

inline constexpr int kDefaultSteps = 20000;
inline constexpr double kRenormThreshold = 1e100;
inline constexpr double kEventTol = 1e-12;
/// Minimum ∫κ dx between an outer turning point and the truncation point.
inline constexpr double kTailDecayIntegral = 18.0;

struct State {
  double psi = 1.0;
  double dpsi = 0.0;
};

enum class Direction { left_to_right, right_to_left };

/// Sampled (ψ, ψ′) along an ascending grid. Each sample carries its own
/// scale (see log_scale); φ and every sign pattern are scale-free.
struct LogDerivTrace {
  Potential potential;
  double energy = 0.0;
  Direction direction = Direction::left_to_right;
  std::vector<double> grid;
  std::vector<double> psi;
  std::vector<double> dpsi;
  std::vector<double> log_scale;
  std::vector<double> phi_zero_xs;
  std::vector<double> psi_node_xs;
  /// φ = +κ crossings inside forbidden stretches.
  std::vector<double> crossing_xs;
  /// φ = −κ crossings.
  std::vector<double> crossing_minus_xs;
  /// Where a left and a right march were joined (NaN for a single march);
  /// φ jumps there by the matching mismatch.
  double join_x = std::numeric_limits<double>::quiet_NaN();

  std::size_t size() const { return grid.size(); }
  double lo() const { return grid.front(); }
  double hi() const { return grid.back(); }
  double phi(std::size_t i) const { return dpsi[i] / psi[i]; }

  /// Index of the cell [grid[i], grid[i+1]] containing x.
  std::size_t cell(double x) const {
    if (x < lo() || x > hi())
      throw Error(ErrorKind::coverage,
                  "x=" + std::to_string(x) + " outside trace [" +
                      std::to_string(lo()) + ", " + std::to_string(hi()) + "]");
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::size_t i = static_cast<std::size_t>(it - grid.begin());
    if (i == 0) return 0;
    return std::min(i - 1, grid.size() - 2);
  }

  State state_at(double x) const;
  double phi_at(double x) const {
    const State s = state_at(x);
    return s.dpsi / s.psi;
  }
};

namespace detail {

inline State rk4(const Segment& seg, double energy, double x, State s, double h) {
  auto f = [&](double xx, const State& y) {
    return State{y.dpsi, (seg.value(xx) - energy) * y.psi};
  };
  const State k1 = f(x, s);
  const State k2 = f(x + 0.5 * h, {s.psi + 0.5 * h * k1.psi, s.dpsi + 0.5 * h * k1.dpsi});
  const State k3 = f(x + 0.5 * h, {s.psi + 0.5 * h * k2.psi, s.dpsi + 0.5 * h * k2.dpsi});
  const State k4 = f(x + h, {s.psi + h * k3.psi, s.dpsi + h * k3.dpsi});
  return {s.psi + h / 6.0 * (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi),
          s.dpsi + h / 6.0 * (k1.dpsi + 2 * k2.dpsi + 2 * k3.dpsi + k4.dpsi)};
}

inline const Segment& cell_segment(const Potential& p, double a, double b) {
  return p.segments()[p.segment_index(0.5 * (a + b))];
}

/// Ascending grid on [a, b] with every interior joint as a node and
/// uniform spacing between joints.
inline std::vector<double> make_grid(const Potential& p, double a, double b,
                                     int n_steps) {
  std::vector<double> cuts{a};
  for (double j : p.joints())
    if (j > a && j < b) cuts.push_back(j);
  cuts.push_back(b);
  const double total = b - a;
  std::vector<double> grid{a};
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double len = cuts[k + 1] - cuts[k];
    const int n = std::max(1, static_cast<int>(std::lround(n_steps * len / total)));
    for (int i = 1; i <= n; ++i)
      grid.push_back(i == n ? cuts[k + 1] : cuts[k] + len * i / n);
  }
  return grid;
}

inline double kappa_of(const Segment& seg, double energy, double x) {
  return std::sqrt(std::max(0.0, seg.value(x) - energy));
}

template <typename F>
double bisect_sign(F&& f, double a, double b) {
  double fa = f(a);
  for (int it = 0; it < 200 && (b - a) > kEventTol; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

inline bool sign_change(double a, double b) {
  return (a < 0 && b > 0) || (a > 0 && b < 0);
}

/// Scans every cell for sign changes of ψ, ψ′ and ψ′ ∓ κψ and refines them.
inline void record_events(LogDerivTrace& t) {
  const auto& p = t.potential;
  const double e = t.energy;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double a = t.grid[i];
    const double b = t.grid[i + 1];
    const Segment& seg = cell_segment(p, a, b);
    const State sa{t.psi[i], t.dpsi[i]};
    const State sb{t.psi[i + 1], t.dpsi[i + 1]};
    auto at = [&](double x) { return rk4(seg, e, a, sa, x - a); };
    if (sign_change(sa.psi, sb.psi))
      t.psi_node_xs.push_back(bisect_sign([&](double x) { return at(x).psi; }, a, b));
    if (sign_change(sa.dpsi, sb.dpsi))
      t.phi_zero_xs.push_back(bisect_sign([&](double x) { return at(x).dpsi; }, a, b));
    const double va = seg.value(a) - e;
    const double vb = seg.value(b) - e;
    if (va > 0 && vb > 0) {
      const double ka = std::sqrt(va);
      const double kb = std::sqrt(vb);
      if (sign_change(sa.dpsi - ka * sa.psi, sb.dpsi - kb * sb.psi))
        t.crossing_xs.push_back(bisect_sign(
            [&](double x) {
              const State s = at(x);
              return s.dpsi - kappa_of(seg, e, x) * s.psi;
            },
            a, b));
      if (sign_change(sa.dpsi + ka * sa.psi, sb.dpsi + kb * sb.psi))
        t.crossing_minus_xs.push_back(bisect_sign(
            [&](double x) {
              const State s = at(x);
              return s.dpsi + kappa_of(seg, e, x) * s.psi;
            },
            a, b));
    }
  }
}

/// Fixed-step march from `from` to `to` starting from the decay condition.
/// Returns samples in marching order.
inline void march(const Potential& p, double energy, double from, double to,
                  int n_steps, State start, std::vector<double>& xs,
                  std::vector<State>& states, std::vector<double>& log_scale) {
  const bool forward = to > from;
  std::vector<double> grid = make_grid(p, std::min(from, to), std::max(from, to), n_steps);
  if (!forward) std::reverse(grid.begin(), grid.end());
  xs = grid;
  states.assign(grid.size(), {});
  log_scale.assign(grid.size(), 0.0);
  State s = start;
  double ls = 0.0;
  states[0] = s;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double a = grid[i];
    const double b = grid[i + 1];
    s = rk4(cell_segment(p, a, b), energy, a, s, b - a);
    const double m = std::max(std::abs(s.psi), std::abs(s.dpsi));
    if (!std::isfinite(m))
      throw Error(ErrorKind::overflow, "state overflow at x=" + std::to_string(b));
    if (m > kRenormThreshold) {
      s.psi /= m;
      s.dpsi /= m;
      ls += std::log(m);
    }
    states[i + 1] = s;
    log_scale[i + 1] = ls;
  }
}

inline LogDerivTrace assemble(const Potential& p, double energy, Direction dir,
                              std::vector<double> xs, std::vector<State> states,
                              std::vector<double> log_scale) {
  if (dir == Direction::right_to_left) {
    std::reverse(xs.begin(), xs.end());
    std::reverse(states.begin(), states.end());
    std::reverse(log_scale.begin(), log_scale.end());
  }
  LogDerivTrace t;
  t.potential = p;
  t.energy = energy;
  t.direction = dir;
  t.grid = std::move(xs);
  t.psi.reserve(states.size());
  t.dpsi.reserve(states.size());
  for (const auto& s : states) {
    t.psi.push_back(s.psi);
    t.dpsi.push_back(s.dpsi);
  }
  t.log_scale = std::move(log_scale);
  return t;
}

inline void check_start(const Potential& p, double energy, double x_start,
                        int n_steps) {
  if (n_steps < 2000)
    throw Error(ErrorKind::invalid_parameter, "n_steps must be >= 2000");
  if (p.eval(x_start) - energy < 1.0)
    throw Error(ErrorKind::truncation_too_shallow,
                "V(x_start) - E < 1 at x_start=" + std::to_string(x_start));
}

}  // namespace detail

inline State LogDerivTrace::state_at(double x) const {
  const std::size_t i = cell(x);
  const double a = grid[i];
  const Segment& seg = detail::cell_segment(potential, a, grid[i + 1]);
  return detail::rk4(seg, energy, a, {psi[i], dpsi[i]}, x - a);
}

/// March from the left decay condition φ = +√(V − E) at x_start rightward.
inline LogDerivTrace integrate_left(const Potential& p, double energy,
                                    double x_start, double x_end,
                                    int n_steps = kDefaultSteps) {
  detail::check_start(p, energy, x_start, n_steps);
  if (!(x_end > x_start))
    throw Error(ErrorKind::invalid_parameter, "integrate_left needs x_end > x_start");
  std::vector<double> xs, ls;
  std::vector<State> st;
  detail::march(p, energy, x_start, x_end, n_steps,
                {1.0, std::sqrt(p.eval(x_start) - energy)}, xs, st, ls);
  auto t = detail::assemble(p, energy, Direction::left_to_right, std::move(xs),
                            std::move(st), std::move(ls));
  detail::record_events(t);
  return t;
}

/// Mirror of integrate_left: φ = −√(V − E) at x_start, marching leftward.
inline LogDerivTrace integrate_right(const Potential& p, double energy,
                                     double x_start, double x_end,
                                     int n_steps = kDefaultSteps) {
  detail::check_start(p, energy, x_start, n_steps);
  if (!(x_end < x_start))
    throw Error(ErrorKind::invalid_parameter, "integrate_right needs x_end < x_start");
  std::vector<double> xs, ls;
  std::vector<State> st;
  detail::march(p, energy, x_start, x_end, n_steps,
                {1.0, -std::sqrt(p.eval(x_start) - energy)}, xs, st, ls);
  auto t = detail::assemble(p, energy, Direction::right_to_left, std::move(xs),
                            std::move(st), std::move(ls));
  detail::record_events(t);
  return t;
}

/// Truncation points for a full-line march at energy E: past each outer
/// turning point by at least two decay lengths, with ∫κ dx ≥ 18 and
/// V − E ≥ max(1, E/10). Constant tails above E are entered by 0.5 only.
inline Interval truncation_domain(const Potential& p, double energy) {
  const auto tps = turning_points(p, energy);
  if (tps.empty())
    throw Error(ErrorKind::odd_turning_points,
                "no classically allowed region at E=" + std::to_string(energy));
  auto extend = [&](double x0, int dir) {
    // A constant tail above E makes the decay condition exact at any depth.
    const Segment& tail = dir < 0 ? p.segments().front() : p.segments().back();
    if (const auto* c = std::get_if<Constant>(&tail.form); c && c->c > energy)
      return (dir < 0 ? tail.hi : tail.lo) + dir * 0.5;
    const double need = std::max(1.0, energy / 10.0);
    const double dx = 1e-3;
    double x = x0;
    double acc = 0.0;
    for (long it = 0; it < 2000000; ++it) {
      const double xm = x + dir * 0.5 * dx;
      acc += std::sqrt(std::max(0.0, p.eval(xm) - energy)) * dx;
      x += dir * dx;
      const double depth = p.eval(x) - energy;
      if (depth <= 0) continue;
      if (acc >= kTailDecayIntegral && depth >= need &&
          std::abs(x - x0) >= 2.0 / std::sqrt(depth))
        return x;
    }
    throw Error(ErrorKind::truncation_too_shallow,
                "tail never reaches the truncation depth");
  };
  return {extend(tps.front().x, -1), extend(tps.back().x, +1)};
}

/// atan φ_L − atan φ_R at x_match, wrapped into (−π/2, π/2].
inline double matching_mismatch(const Potential& p, double energy, double x_match,
                                int n_steps = kDefaultSteps) {
  const Interval dom = truncation_domain(p, energy);
  if (!(x_match > dom.lo && x_match < dom.hi))
    throw Error(ErrorKind::coverage, "x_match outside the truncation domain");
  const int nl = std::max(2, static_cast<int>(n_steps * (x_match - dom.lo) / dom.width()));
  const int nr = std::max(2, n_steps - nl);
  std::vector<double> xs, ls;
  std::vector<State> sl, sr;
  detail::march(p, energy, dom.lo, x_match, nl,
                {1.0, std::sqrt(p.eval(dom.lo) - energy)}, xs, sl, ls);
  detail::march(p, energy, dom.hi, x_match, nr,
                {1.0, -std::sqrt(p.eval(dom.hi) - energy)}, xs, sr, ls);
  const State l = sl.back();
  const State r = sr.back();
  double d = std::atan2(l.dpsi, l.psi) - std::atan2(r.dpsi, r.psi);
  // atan2 angles are defined mod 2π, atan φ mod π.
  const double pi = std::numbers::pi;
  d = std::remainder(d, pi);
  if (d <= -0.5 * pi) d += pi;
  return d;
}

namespace detail {

/// Unwrapped Prüfer angle θ = atan2(ψ, ψ′) along a march, from θ0.
inline double prufer_angle(const std::vector<State>& states, double theta0) {
  double theta = theta0;
  for (std::size_t i = 0; i + 1 < states.size(); ++i) {
    const State& a = states[i];
    const State& b = states[i + 1];
    theta += std::atan2(a.dpsi * b.psi - a.psi * b.dpsi,
                        a.dpsi * b.dpsi + a.psi * b.psi);
  }
  return theta;
}

}  // namespace detail

/// θ_L − θ_R at x_match with both Prüfer angles unwrapped from the decay
/// conditions. Continuous and increasing in E; equals kπ exactly at the
/// eigenvalue with k nodes.
inline double matching_phase(const Potential& p, double energy, double x_match,
                             int n_steps = kDefaultSteps) {
  const Interval dom = truncation_domain(p, energy);
  if (!(x_match > dom.lo && x_match < dom.hi))
    throw Error(ErrorKind::coverage, "x_match outside the truncation domain");
  const int nl = std::max(2, static_cast<int>(n_steps * (x_match - dom.lo) / dom.width()));
  const int nr = std::max(2, n_steps - nl);
  std::vector<double> xs, ls;
  std::vector<State> sl, sr;
  const double kl = std::sqrt(p.eval(dom.lo) - energy);
  const double kr = std::sqrt(p.eval(dom.hi) - energy);
  detail::march(p, energy, dom.lo, x_match, nl, {1.0, kl}, xs, sl, ls);
  detail::march(p, energy, dom.hi, x_match, nr, {1.0, -kr}, xs, sr, ls);
  return detail::prufer_angle(sl, std::atan2(1.0, kl)) -
         detail::prufer_angle(sr, std::atan2(1.0, -kr));
}

/// Left march to x_match joined with a right march from the other tail,
/// rescaled so (ψ, ψ′) agree at x_match in the least-squares sense.
inline LogDerivTrace full_trace(const Potential& p, double energy, double x_match,
                                int n_steps = kDefaultSteps) {
  const Interval dom = truncation_domain(p, energy);
  if (!(x_match > dom.lo && x_match < dom.hi))
    throw Error(ErrorKind::coverage, "x_match outside the truncation domain");
  const int nl = std::max(2, static_cast<int>(n_steps * (x_match - dom.lo) / dom.width()));
  const int nr = std::max(2, n_steps - nl);
  std::vector<double> xl, xr, gl, gr;
  std::vector<State> sl, sr;
  detail::march(p, energy, dom.lo, x_match, nl,
                {1.0, std::sqrt(p.eval(dom.lo) - energy)}, xl, sl, gl);
  detail::march(p, energy, dom.hi, x_match, nr,
                {1.0, -std::sqrt(p.eval(dom.hi) - energy)}, xr, sr, gr);
  const State a = sl.back();
  const State b = sr.back();
  const double c = (a.psi * b.psi + a.dpsi * b.dpsi) / (b.psi * b.psi + b.dpsi * b.dpsi);
  if (c == 0.0 || !std::isfinite(c))
    throw Error(ErrorKind::degenerate_state, "cannot join traces at x_match");
  const double sign = c < 0 ? -1.0 : 1.0;
  const double log_c = std::log(std::abs(c)) + gl.back() - gr.back();
  std::vector<double> xs(xl);
  std::vector<State> st(sl);
  std::vector<double> ls(gl);
  // Right march is stored in marching order; append it reversed, skipping
  // the shared point x_match.
  for (std::size_t k = xr.size() - 1; k-- > 0;) {
    xs.push_back(xr[k]);
    st.push_back({sign * sr[k].psi, sign * sr[k].dpsi});
    ls.push_back(gr[k] + log_c);
  }
  auto t = detail::assemble(p, energy, Direction::left_to_right, std::move(xs),
                            std::move(st), std::move(ls));
  t.join_x = x_match;
  detail::record_events(t);
  return t;
}

inline int count_in(const std::vector<double>& xs, const Interval& iv) {
  return static_cast<int>(std::count_if(
      xs.begin(), xs.end(), [&](double x) { return x > iv.lo && x < iv.hi; }));
}

inline int count_phi_zeros(const LogDerivTrace& t, const Interval& iv) {
  return count_in(t.phi_zero_xs, iv);
}

inline int count_psi_nodes(const LogDerivTrace& t) {
  return static_cast<int>(t.psi_node_xs.size());
}

struct CrossingCount {
  int total = 0;
  /// Upward crossings (φ − κ turns positive) minus downward ones.
  int net = 0;
};

/// φ = branch·κ crossings on a forbidden interval, detected as sign changes
/// of ψ′ − branch·κψ (which, unlike φ − κ, does not flip at ψ nodes). The
/// interval ends are compared against κ = 0, the value on the allowed side,
/// so a jump of V across a joint counts as a crossing when κ sweeps past φ.
inline CrossingCount crossings(const LogDerivTrace& t, const Potential& p,
                               double energy, const Interval& iv, int branch = +1) {
  const double lo = std::max(iv.lo, t.lo());
  const double hi = std::min(iv.hi, t.hi());
  CrossingCount c;
  const State s0 = t.state_at(lo);
  double prev = s0.dpsi;
  auto push = [&](double q, double psi) {
    if (detail::sign_change(prev, q)) {
      ++c.total;
      const bool up = (q > 0) == (psi > 0);
      c.net += up ? 1 : -1;
    }
    if (q != 0.0) prev = q;
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double x = t.grid[i];
    if (!(x > lo && x < hi)) continue;
    // Joint nodes contribute both one-sided values.
    for (int side : {-1, +1}) {
      const double k = std::sqrt(std::max(0.0, p.eval_side(x, side) - energy));
      push(t.dpsi[i] - branch * k * t.psi[i], t.psi[i]);
    }
  }
  const State s1 = t.state_at(hi);
  push(s1.dpsi, s1.psi);
  return c;
}

inline int count_crossings(const LogDerivTrace& t, const Potential& p,
                           double energy, const Interval& iv, int branch = +1) {
  return crossings(t, p, energy, iv, branch).total;
}

struct FilmTerm {
  double atanh_in = 0.0;
  double atanh_out = 0.0;
  int m = 0;
  /// +1 for an upward crossing, −1 downward, 0 when m = 0.
  int direction = 0;
};

struct FilmResult {
  double phi_out = 0.0;
  int crossing_count = 0;
  int net_crossings = 0;
  /// Crossing between the last film and the κ = 0 exit reference.
  bool exit_crossing = false;
  std::vector<FilmTerm> per_film_terms;
  std::vector<double> kappas;
  double width = 0.0;

  double kappa_sum() const {
    double s = 0.0;
    for (double k : kappas) s += k * width;
    return s;
  }
  /// Σ_j [Re atanh(κ_j/φ_j) − Re atanh(κ_{j+1}/φ_j)]: the discrete form of
  /// ∫ φκ′/(κ² − φ²) dx.
  double interior_sum() const {
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < per_film_terms.size(); ++j)
      s += per_film_terms[j].atanh_out - per_film_terms[j + 1].atanh_in;
    return s;
  }
  double boundary_in() const { return -per_film_terms.front().atanh_in; }
  double boundary_out() const { return per_film_terms.back().atanh_out; }
};

namespace detail {

/// Re atanh(κ/φ) = ½ ln|(φ + κ)/(φ − κ)|, finite through φ = 0 and φ = ±∞.
inline double re_atanh_ratio(double kappa, State s) {
  const double num = s.dpsi + kappa * s.psi;
  const double den = s.dpsi - kappa * s.psi;
  if (num == 0.0 || den == 0.0) return 0.0;
  return 0.5 * std::log(std::abs(num / den));
}

inline int sgn(double v) { return (v > 0) - (v < 0); }

/// r = (φ − κ)/(φ + κ) kept as ln|r| and a sign. A constant-κ film scales r
/// by e^{−2κd} exactly, so the ledger survives barriers where φ − κ itself
/// drops below rounding.
struct DecayRatio {
  double log_abs = 0.0;
  int sign = 0;
  double kappa = 0.0;
  bool valid = false;
};

inline DecayRatio ratio_from_state(double k, State s) {
  const double minus = s.dpsi - k * s.psi;
  const double plus = s.dpsi + k * s.psi;
  if (k == 0.0 || minus == 0.0 || plus == 0.0) return {};
  return {std::log(std::abs(minus / plus)), sgn(minus) * sgn(plus), k, true};
}

/// Same r against a new κ′, from φ − κ′ = 2κr/(1 − r) + (κ − κ′) and
/// φ + κ′ = 2κ/(1 − r) − (κ − κ′); no near-equal subtraction when φ ≈ κ.
inline DecayRatio rebase(const DecayRatio& r, double k_new) {
  if (k_new == r.kappa) return {r.log_abs, r.sign, k_new, true};
  if (r.log_abs == 0.0 && r.sign > 0) return {0.0, 1, k_new, true};  // φ = ∞
  const double k = r.kappa;
  const double dk = k - k_new;
  double minus = 0.0, plus = 0.0;
  if (r.log_abs <= 0.0) {
    const double v = r.sign * std::exp(r.log_abs);
    minus = 2 * k * v / (1 - v) + dk;
    plus = 2 * k / (1 - v) - dk;
  } else {
    const double w = r.sign * std::exp(-r.log_abs);
    minus = 2 * k / (w - 1) + dk;
    plus = 2 * k * w / (w - 1) - dk;
  }
  if (minus == 0.0 || plus == 0.0 || !std::isfinite(minus) || !std::isfinite(plus)) return {};
  return {std::log(std::abs(minus / plus)), sgn(minus) * sgn(plus), k_new, true};
}

/// sgn(ψ′ − κψ), taken from whichever of ψ′ ∓ κψ is not the cancelling one.
inline int side_of_kappa(const DecayRatio& r, double k, State s) {
  if (!r.valid) return sgn(s.dpsi - k * s.psi);
  if (r.log_abs <= 0.0) return r.sign * sgn(s.dpsi + k * s.psi);
  return sgn(s.dpsi - k * s.psi);
}

}  // namespace detail

/// Constant-κ slab recursion across a forbidden interval. Each film maps φ
/// by κ(κ tanh κd + φ)/(κ + φ tanh κd); the pair (ψ, ψ′) is carried so a ψ
/// node inside a film never divides by zero.
inline FilmResult film_propagate(const Potential& p, double energy,
                                 const Interval& iv, int n_films, double phi_in) {
  if (n_films < 16)
    throw Error(ErrorKind::invalid_parameter, "n_films must be >= 16");
  if (!std::isfinite(phi_in))
    throw Error(ErrorKind::invalid_parameter, "phi_in must be finite");
  FilmResult r;
  r.width = iv.width() / n_films;
  State s{1.0, phi_in};
  detail::DecayRatio ratio;
  int q_prev = detail::sgn(s.dpsi);
  for (int j = 1; j <= n_films; ++j) {
    const double xm = iv.lo + (j - 0.5) * r.width;
    const double v = p.eval(xm) - energy;
    if (v < 0)
      throw Error(ErrorKind::negative_radicand,
                  "film midpoint in an allowed stretch at x=" + std::to_string(xm));
    const double k = std::sqrt(v);
    r.kappas.push_back(k);
    FilmTerm term;
    const detail::DecayRatio r_in = ratio.valid && ratio.kappa > 0 && k > 0
                                        ? detail::rebase(ratio, k)
                                        : detail::ratio_from_state(k, s);
    term.atanh_in = r_in.valid ? -0.5 * r_in.log_abs : 0.0;
    const int q_in = detail::side_of_kappa(r_in, k, s);
    if (q_in != 0 && q_prev != 0 && q_in != q_prev) {
      term.m = 1;
      term.direction = ((q_in > 0) == (s.psi > 0)) ? 1 : -1;
    }
    if (q_in != 0) q_prev = q_in;
    const double kd = k * r.width;
    const double ch = std::cosh(kd);
    const double sh = std::sinh(kd);
    State out;
    if (k > 0) {
      out = {s.psi * ch + s.dpsi * sh / k, s.psi * k * sh + s.dpsi * ch};
    } else {
      out = {s.psi + s.dpsi * r.width, s.dpsi};
    }
    const double m = std::max(std::abs(out.psi), std::abs(out.dpsi));
    if (m > kRenormThreshold) {
      out.psi /= m;
      out.dpsi /= m;
    }
    s = out;
    ratio = r_in.valid ? detail::DecayRatio{r_in.log_abs - 2 * kd, r_in.sign, k, true}
                       : detail::ratio_from_state(k, s);
    term.atanh_out = ratio.valid ? -0.5 * ratio.log_abs : 0.0;
    const int q_out = detail::side_of_kappa(ratio, k, s);
    if (q_out != 0) q_prev = q_out;
    r.crossing_count += term.m;
    r.net_crossings += term.direction;
    r.per_film_terms.push_back(term);
  }
  const int q_exit = detail::sgn(s.dpsi);
  if (q_exit != 0 && q_prev != 0 && q_exit != q_prev) {
    r.exit_crossing = true;
    ++r.crossing_count;
    r.net_crossings += ((q_exit > 0) == (s.psi > 0)) ? 1 : -1;
  }
  r.phi_out = s.dpsi / s.psi;
  return r;
}

}  // namespace qrule
