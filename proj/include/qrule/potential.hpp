#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "qrule/error.hpp"

namespace qrule {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Tolerances used by the geometric queries.
inline constexpr double kTurningPointTol = 1e-10;
inline constexpr double kMergeTol = 1e-12;
inline constexpr double kJumpTol = 1e-12;
inline constexpr int kScanPoints = 1024;
inline constexpr int kMaxPolyDegree = 8;

struct Constant {
  double c = 0.0;
};

/// a·(x − s)² + c
struct ShiftedQuadratic {
  double a = 1.0;
  double s = 0.0;
  double c = 0.0;
};

/// Σ coeffs[i]·x^i
struct Polynomial {
  std::vector<double> coeffs;
};

using SegmentForm = std::variant<Constant, ShiftedQuadratic, Polynomial>;

struct Segment {
  double lo = -kInf;
  double hi = kInf;
  SegmentForm form;

  double value(double x) const {
    return std::visit(
        [x](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, Constant>) {
            return f.c;
          } else if constexpr (std::is_same_v<F, ShiftedQuadratic>) {
            const double d = x - f.s;
            return f.a * d * d + f.c;
          } else {
            double acc = 0.0;
            for (auto it = f.coeffs.rbegin(); it != f.coeffs.rend(); ++it)
              acc = acc * x + *it;
            return acc;
          }
        },
        form);
  }

  double slope(double x) const {
    return std::visit(
        [x](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, Constant>) {
            return 0.0;
          } else if constexpr (std::is_same_v<F, ShiftedQuadratic>) {
            return 2.0 * f.a * (x - f.s);
          } else {
            double acc = 0.0;
            const std::size_t n = f.coeffs.size();
            for (std::size_t i = n; i-- > 1;)
              acc = acc * x + static_cast<double>(i) * f.coeffs[i];
            return acc;
          }
        },
        form);
  }

  /// Limit of the segment value as x → +∞ (dir > 0) or −∞ (dir < 0).
  double tail_limit(int dir) const {
    return std::visit(
        [dir](const auto& f) -> double {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, Constant>) {
            return f.c;
          } else if constexpr (std::is_same_v<F, ShiftedQuadratic>) {
            if (f.a == 0.0) return f.c;
            return f.a > 0 ? kInf : -kInf;
          } else {
            std::size_t deg = f.coeffs.size();
            while (deg > 0 && f.coeffs[deg - 1] == 0.0) --deg;
            if (deg == 0) return 0.0;
            if (deg == 1) return f.coeffs[0];
            const double lead = f.coeffs[deg - 1];
            const bool odd = ((deg - 1) % 2) == 1;
            const double sign = (odd && dir < 0) ? -lead : lead;
            return sign > 0 ? kInf : -kInf;
          }
        },
        form);
  }
};

enum class RegionKind { allowed, forbidden };

inline const char* to_string(RegionKind k) {
  return k == RegionKind::allowed ? "allowed" : "forbidden";
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct Region {
  Interval interval;
  RegionKind kind = RegionKind::forbidden;
};

struct TurningPoint {
  double x = 0.0;
  /// false when the point sits on a joint where V jumps across E.
  bool continuous = true;
};

struct RegionPartition {
  double energy = 0.0;
  std::vector<TurningPoint> turning_points;
  std::vector<Region> regions;

  std::size_t count() const { return turning_points.size(); }
  /// Interior regions, i.e. every region between the first and last turning
  /// point.
  std::vector<Region> interior() const {
    if (regions.size() < 3) return {};
    return {regions.begin() + 1, regions.end() - 1};
  }
};

/// Ordered piecewise-analytic potential covering the whole real line.
class Potential {
 public:
  Potential() = default;

  explicit Potential(std::vector<Segment> segments)
      : segments_(std::move(segments)) {
    validate();
  }

  const std::vector<Segment>& segments() const { return segments_; }

  /// Interior joints (finite segment edges), ascending.
  std::vector<double> joints() const {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < segments_.size(); ++i)
      out.push_back(segments_[i].hi);
    return out;
  }

  std::size_t segment_index(double x) const {
    // At a joint the right segment wins.
    for (std::size_t i = 0; i < segments_.size(); ++i)
      if (x < segments_[i].hi) return i;
    return segments_.size() - 1;
  }

  double eval(double x) const { return segments_[segment_index(x)].value(x); }

  /// One-sided evaluation: side < 0 takes the left limit at a joint.
  double eval_side(double x, int side) const {
    if (side < 0) {
      for (std::size_t i = 0; i < segments_.size(); ++i)
        if (x <= segments_[i].hi) return segments_[i].value(x);
    }
    return eval(x);
  }

  bool is_jump(std::size_t joint) const {
    const double x = segments_[joint].hi;
    const double l = segments_[joint].value(x);
    const double r = segments_[joint + 1].value(x);
    return std::abs(l - r) > kJumpTol * (1.0 + std::abs(l) + std::abs(r));
  }

  double eval_derivative(double x) const {
    for (std::size_t j = 0; j + 1 < segments_.size(); ++j) {
      if (x == segments_[j].hi && is_jump(j))
        throw Error(ErrorKind::joint_discontinuity,
                    "V is discontinuous at x=" + std::to_string(x));
    }
    return segments_[segment_index(x)].slope(x);
  }

  double tail_limit(int dir) const {
    return dir < 0 ? segments_.front().tail_limit(-1)
                   : segments_.back().tail_limit(+1);
  }

 private:
  void validate() const {
    if (segments_.empty())
      throw Error(ErrorKind::invalid_parameter, "potential has no segments");
    if (segments_.front().lo != -kInf || segments_.back().hi != kInf)
      throw Error(ErrorKind::invalid_parameter,
                  "segments must extend to -inf and +inf");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& s = segments_[i];
      if (!(s.lo < s.hi))
        throw Error(ErrorKind::invalid_parameter,
                    "segment " + std::to_string(i) + " has lo >= hi");
      if (i + 1 < segments_.size() && s.hi != segments_[i + 1].lo)
        throw Error(ErrorKind::invalid_parameter,
                    "segments " + std::to_string(i) + " and " +
                        std::to_string(i + 1) + " do not tile");
      if (const auto* p = std::get_if<Polynomial>(&s.form)) {
        if (p->coeffs.empty())
          throw Error(ErrorKind::invalid_parameter, "empty polynomial");
        if (static_cast<int>(p->coeffs.size()) - 1 > kMaxPolyDegree)
          throw Error(ErrorKind::invalid_parameter,
                      "polynomial degree exceeds 8");
      }
    }
  }

  std::vector<Segment> segments_;
};

namespace detail {

/// Finite scan range for a segment, using a Cauchy root bound for
/// unbounded polynomial/quadratic pieces.
inline Interval finite_span(const Segment& seg, double energy) {
  double bound = 0.0;
  if (const auto* p = std::get_if<Polynomial>(&seg.form)) {
    std::vector<double> c = p->coeffs;
    c[0] -= energy;
    std::size_t deg = c.size();
    while (deg > 1 && c[deg - 1] == 0.0) --deg;
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < deg; ++i)
      m = std::max(m, std::abs(c[i] / c[deg - 1]));
    bound = 1.0 + m;
  } else if (const auto* q = std::get_if<ShiftedQuadratic>(&seg.form)) {
    bound = std::abs(q->s) + 1.0 +
            (q->a != 0.0 ? std::sqrt(std::abs((energy - q->c) / q->a)) : 0.0);
  } else {
    bound = 1.0;
  }
  const double lo = std::isfinite(seg.lo) ? seg.lo : std::min(-bound, seg.hi - 1.0);
  const double hi = std::isfinite(seg.hi) ? seg.hi : std::max(bound, seg.lo + 1.0);
  return {lo, hi};
}

template <typename F>
double bisect(F&& f, double a, double b, double fa, double tol) {
  for (int it = 0; it < 200 && (b - a) > tol; ++it) {
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

inline void segment_roots(const Segment& seg, double energy,
                          std::vector<double>& out) {
  auto in_seg = [&](double x) { return x >= seg.lo && x <= seg.hi; };
  if (const auto* c = std::get_if<Constant>(&seg.form)) {
    if (std::abs(c->c - energy) <= kTurningPointTol)
      throw Error(ErrorKind::tangency,
                  "energy equals a constant segment value");
    return;
  }
  if (const auto* q = std::get_if<ShiftedQuadratic>(&seg.form)) {
    if (q->a == 0.0) {
      if (std::abs(q->c - energy) <= kTurningPointTol)
        throw Error(ErrorKind::tangency, "energy equals a flat segment value");
      return;
    }
    const double r = (energy - q->c) / q->a;
    if (std::abs(r) <= kTurningPointTol * kTurningPointTol) {
      if (in_seg(q->s))
        throw Error(ErrorKind::tangency,
                    "energy at a quadratic extremum x=" + std::to_string(q->s));
      return;
    }
    if (r < 0) return;
    const double w = std::sqrt(r);
    if (in_seg(q->s - w)) out.push_back(q->s - w);
    if (in_seg(q->s + w)) out.push_back(q->s + w);
    return;
  }
  const auto span = finite_span(seg, energy);
  auto f = [&](double x) { return seg.value(x) - energy; };
  auto df = [&](double x) { return seg.slope(x); };
  const double h = span.width() / kScanPoints;
  double xl = span.lo;
  double fl = f(xl);
  double dl = df(xl);
  double scale = 1.0;
  for (int i = 0; i <= kScanPoints; ++i)
    scale = std::max(scale, std::abs(f(span.lo + i * h)));
  if (fl == 0.0) out.push_back(xl);
  for (int i = 1; i <= kScanPoints; ++i) {
    const double xr = (i == kScanPoints) ? span.hi : span.lo + i * h;
    const double fr = f(xr);
    const double dr = df(xr);
    if (fr == 0.0) {
      out.push_back(xr);
    } else if (fl != 0.0 && (fl < 0) != (fr < 0)) {
      out.push_back(bisect(f, xl, xr, fl, kTurningPointTol * 1e-2));
    }
    // Local extremum inside the cell: check for a (near) double root.
    if ((dl < 0) != (dr < 0) && dl != 0.0) {
      const double xe = bisect(df, xl, xr, dl, 1e-14);
      if (std::abs(f(xe)) <= 1e-10 * scale)
        throw Error(ErrorKind::tangency,
                    "double root of V-E near x=" + std::to_string(xe));
    }
    xl = xr;
    fl = fr;
    dl = dr;
  }
}

}  // namespace detail

/// All real solutions of V(x)=E plus every joint where V−E changes sign
/// across a jump, ascending.
inline std::vector<TurningPoint> turning_points(const Potential& p,
                                                double energy) {
  if (!(p.tail_limit(-1) > energy) || !(p.tail_limit(+1) > energy))
    throw Error(ErrorKind::non_confining,
                "a tail of V does not rise above E=" + std::to_string(energy));
  const auto& segs = p.segments();
  std::vector<TurningPoint> tps;
  for (const auto& seg : segs) {
    std::vector<double> xs;
    detail::segment_roots(seg, energy, xs);
    for (double x : xs) tps.push_back({x, true});
  }
  for (std::size_t j = 0; j + 1 < segs.size(); ++j) {
    if (!p.is_jump(j)) continue;
    const double x = segs[j].hi;
    const double l = segs[j].value(x) - energy;
    const double r = segs[j + 1].value(x) - energy;
    // Roots sitting exactly on a jump are superseded by the joint itself.
    std::erase_if(tps, [&](const TurningPoint& t) {
      return std::abs(t.x - x) <= kMergeTol;
    });
    if ((l < 0) != (r < 0)) tps.push_back({x, false});
  }
  std::sort(tps.begin(), tps.end(),
            [](const auto& a, const auto& b) { return a.x < b.x; });
  std::vector<TurningPoint> merged;
  for (const auto& t : tps) {
    if (!merged.empty() && std::abs(t.x - merged.back().x) <= kMergeTol) {
      merged.back().continuous = merged.back().continuous && t.continuous;
      continue;
    }
    merged.push_back(t);
  }
  return merged;
}

inline RegionPartition partition(const Potential& p, double energy) {
  RegionPartition out;
  out.energy = energy;
  out.turning_points = turning_points(p, energy);
  const auto n = out.turning_points.size();
  if (n == 0)
    throw Error(ErrorKind::odd_turning_points,
                "no turning points at E=" + std::to_string(energy));
  if (n % 2 != 0)
    throw Error(ErrorKind::odd_turning_points,
                std::to_string(n) + " turning points at E=" +
                    std::to_string(energy));
  double prev = -kInf;
  for (std::size_t i = 0; i <= n; ++i) {
    const double next = (i < n) ? out.turning_points[i].x : kInf;
    double probe;
    if (!std::isfinite(prev)) probe = next - 1.0;
    else if (!std::isfinite(next)) probe = prev + 1.0;
    else probe = 0.5 * (prev + next);
    // A probe beyond the outer turning points may be closer than 1 to a
    // segment whose value has not yet risen; the tail kind is fixed anyway.
    RegionKind kind = (p.eval(probe) > energy) ? RegionKind::forbidden
                                               : RegionKind::allowed;
    if (i == 0 || i == n) kind = RegionKind::forbidden;
    const RegionKind expected =
        (i % 2 == 0) ? RegionKind::forbidden : RegionKind::allowed;
    if (kind != expected)
      throw Error(ErrorKind::odd_turning_points,
                  "region kinds do not alternate at E=" +
                      std::to_string(energy));
    out.regions.push_back({{prev, next}, kind});
    prev = next;
  }
  return out;
}

/// Named constructors for the built-in potentials.
/// partition() that also requires exactly `expected` turning points, for
/// callers working inside one regime (e.g. the four-turning-point range
/// 0 < E < α² of the biharmonic well).
inline RegionPartition partition_expecting(const Potential& p, double energy,
                                           std::size_t expected) {
  auto part = partition(p, energy);
  if (part.count() != expected)
    throw Error(ErrorKind::regime,
                std::to_string(part.count()) + " turning points at E=" +
                    std::to_string(energy) + ", expected " + std::to_string(expected));
  return part;
}

namespace build {

inline Potential from_segments(std::vector<Segment> segments) {
  return Potential(std::move(segments));
}

inline Potential harmonic() {
  return Potential({Segment{-kInf, kInf, ShiftedQuadratic{1.0, 0.0, 0.0}}});
}

inline Potential double_square_well(double xa, double xb, double xc, double xd,
                                    double v_left, double v_barrier,
                                    double v_right) {
  if (!(xa < xb)) throw Error(ErrorKind::invalid_parameter, "x_a < x_b violated");
  if (!(xb <= xc)) throw Error(ErrorKind::invalid_parameter, "x_b <= x_c violated");
  if (!(xc < xd)) throw Error(ErrorKind::invalid_parameter, "x_c < x_d violated");
  if (!(v_left > 0)) throw Error(ErrorKind::invalid_parameter, "V_I > 0 violated");
  if (!(v_barrier > 0)) throw Error(ErrorKind::invalid_parameter, "V_0 > 0 violated");
  if (!(v_right > 0)) throw Error(ErrorKind::invalid_parameter, "V_F > 0 violated");
  std::vector<Segment> s;
  s.push_back({-kInf, xa, Constant{v_left}});
  if (xb < xc) {
    s.push_back({xa, xb, Constant{0.0}});
    s.push_back({xb, xc, Constant{v_barrier}});
    s.push_back({xc, xd, Constant{0.0}});
  } else {
    s.push_back({xa, xd, Constant{0.0}});
  }
  s.push_back({xd, kInf, Constant{v_right}});
  return Potential(std::move(s));
}

/// (x+α)² for x ≤ 0, (x−β)²−γ for x > 0. With `regime` set, α > 0 and
/// α² = β² − γ (continuity at 0) are enforced.
inline Potential biharmonic(double alpha, double beta, double gamma,
                            bool regime = false) {
  if (regime) {
    if (!(alpha > 0))
      throw Error(ErrorKind::invalid_parameter, "alpha > 0 violated");
    if (std::abs(alpha * alpha - (beta * beta - gamma)) > 1e-12)
      throw Error(ErrorKind::invalid_parameter,
                  "alpha^2 = beta^2 - gamma violated");
  }
  return Potential({Segment{-kInf, 0.0, ShiftedQuadratic{1.0, -alpha, 0.0}},
                    Segment{0.0, kInf, ShiftedQuadratic{1.0, beta, -gamma}}});
}

}  // namespace build

}  // namespace qrule
