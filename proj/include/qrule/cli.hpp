#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <regex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qrule/error.hpp"
#include "qrule/potential.hpp"
#include "qrule/propagate.hpp"
#include "qrule/quantize.hpp"
#include "qrule/solve.hpp"

namespace qrule::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNonConvergence = 3,
  kExitTurningPoints = 4,
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, int line, const std::string& what)
      : std::runtime_error(key + (line > 0 ? " (line " + std::to_string(line) + ")" : "") +
                           ": " + what),
        key_(key),
        line_(line) {}
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

enum class JobType { spectrum, verify, scan, films };

inline std::string to_string(JobType j) {
  switch (j) {
    case JobType::spectrum: return "spectrum";
    case JobType::verify: return "verify";
    case JobType::scan: return "scan";
    case JobType::films: return "films";
  }
  return "?";
}

inline JobType parse_job_type(const std::string& s, const std::string& key, int line) {
  if (s == "spectrum") return JobType::spectrum;
  if (s == "verify") return JobType::verify;
  if (s == "scan") return JobType::scan;
  if (s == "films") return JobType::films;
  throw ConfigError(key, line, "expected spectrum|verify|scan|films, got '" + s + "'");
}

struct PotentialSpec {
  std::string kind;  // double_square_well | biharmonic | harmonic | segments
  std::map<std::string, double> params;
  bool regime = false;
  std::vector<Segment> segments;
  std::vector<std::string> segment_text;
};

struct JobConfig {
  PotentialSpec potential;
  JobType job = JobType::spectrum;
  std::optional<EnergyWindow> window;
  int scan_points = 200;
  int n_steps = kDefaultSteps;
  int n_films = kDefaultFilms;
  int fd_grid = 8000;
  double tolerance = kReportTol;
  std::string csv_path;

  /// Sorted key=value dump of everything that affects results.
  std::string canonical() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "potential.kind=" << potential.kind << '\n';
    for (const auto& [k, v] : potential.params) os << "potential." << k << '=' << v << '\n';
    if (potential.kind == "biharmonic") os << "potential.regime=" << potential.regime << '\n';
    for (const auto& s : potential.segment_text) os << "potential.segment=" << s << '\n';
    os << "job.type=" << to_string(job) << '\n';
    if (window)
      os << "job.window=" << window->lo << ',' << window->hi << '\n'
         << "job.grid_points=" << window->grid_points << '\n';
    os << "job.scan_points=" << scan_points << '\n'
       << "numeric.n_steps=" << n_steps << '\n'
       << "numeric.n_films=" << n_films << '\n'
       << "numeric.fd_grid=" << fd_grid << '\n'
       << "numeric.tolerance=" << tolerance << '\n';
    return os.str();
  }

  /// FNV-1a of canonical(), 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& s, const std::string& key, int line) {
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty())
    throw ConfigError(key, line, "expected a number, got '" + s + "'");
  return v;
}

inline int parse_int(const std::string& s, const std::string& key, int line) {
  int v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty())
    throw ConfigError(key, line, "expected an integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& key, int line) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key, line, "expected true|false, got '" + s + "'");
}

/// "lo, hi, constant, c" | "lo, hi, quadratic, a, s, c" | "lo, hi, poly, c0, c1, ...".
inline Segment parse_segment(const std::string& s, const std::string& key, int line) {
  const auto f = split(s, ',');
  if (f.size() < 4) throw ConfigError(key, line, "segment needs lo, hi, form, coefficients");
  const double lo = parse_double(f[0], key, line);
  const double hi = parse_double(f[1], key, line);
  std::vector<double> c;
  for (std::size_t i = 3; i < f.size(); ++i) c.push_back(parse_double(f[i], key, line));
  if (f[2] == "constant") {
    if (c.size() != 1) throw ConfigError(key, line, "constant takes one value");
    return {lo, hi, Constant{c[0]}};
  }
  if (f[2] == "quadratic") {
    if (c.size() != 3) throw ConfigError(key, line, "quadratic takes a, s, c");
    return {lo, hi, ShiftedQuadratic{c[0], c[1], c[2]}};
  }
  if (f[2] == "poly") return {lo, hi, Polynomial{c}};
  throw ConfigError(key, line, "unknown segment form '" + f[2] + "'");
}

inline const std::map<std::string, std::vector<std::string>>& kind_keys() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"double_square_well", {"x_a", "x_b", "x_c", "x_d", "V_I", "V_0", "V_F"}},
      {"biharmonic", {"alpha", "beta", "gamma"}},
      {"harmonic", {}},
      {"segments", {}},
  };
  return m;
}

}  // namespace detail

/// Line-oriented [section] key=value format; '#' starts a comment.
inline JobConfig parse_config(const std::string& text) {
  JobConfig cfg;
  std::string section;
  std::map<std::string, int> key_line;
  std::map<std::string, std::string> raw;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  static const std::regex around_eq(R"(\s*=\s*)");
  static const std::regex around_comma(R"(\s*,\s*)");
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ConfigError(line, lineno, "malformed section header");
      section = detail::trim(line.substr(1, close - 1));
      if (section != "potential" && section != "job" && section != "numeric" &&
          section != "output")
        throw ConfigError(section, lineno, "unknown section");
      line = detail::trim(line.substr(close + 1));
      if (line.empty()) continue;
    }
    if (section.empty()) throw ConfigError(line, lineno, "key outside any section");
    // Several key=value pairs may share a line.
    line = std::regex_replace(std::regex_replace(line, around_eq, "="), around_comma, ",");
    std::istringstream tokens(line);
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError(tok, lineno, "expected key=value");
      const std::string name = tok.substr(0, eq);
      const std::string value = tok.substr(eq + 1);
      const std::string key = section + "." + name;
      if (key == "potential.segment") {
        cfg.potential.segments.push_back(detail::parse_segment(value, key, lineno));
        cfg.potential.segment_text.push_back(value);
        key_line[key] = lineno;
        continue;
      }
      if (raw.count(key)) throw ConfigError(key, lineno, "duplicate key");
      raw[key] = value;
      key_line[key] = lineno;
    }
  }

  auto line_of = [&](const std::string& k) { return key_line.count(k) ? key_line[k] : 0; };
  auto take = [&](const std::string& k) -> std::optional<std::string> {
    auto it = raw.find(k);
    if (it == raw.end()) return std::nullopt;
    std::string v = it->second;
    raw.erase(it);
    return v;
  };

  // potential
  const auto kind = take("potential.kind");
  if (!kind) throw ConfigError("potential.kind", 0, "required");
  const auto& kinds = detail::kind_keys();
  if (!kinds.count(*kind))
    throw ConfigError("potential.kind", line_of("potential.kind"),
                      "expected double_square_well|biharmonic|harmonic|segments");
  cfg.potential.kind = *kind;
  for (const auto& name : kinds.at(*kind)) {
    const std::string k = "potential." + name;
    const auto v = take(k);
    if (!v) throw ConfigError(k, 0, "required for kind=" + *kind);
    cfg.potential.params[name] = detail::parse_double(*v, k, line_of(k));
  }
  if (*kind == "biharmonic")
    if (const auto v = take("potential.regime"))
      cfg.potential.regime = detail::parse_bool(*v, "potential.regime", line_of("potential.regime"));
  if (*kind == "segments" && cfg.potential.segments.empty())
    throw ConfigError("potential.segment", 0, "kind=segments needs at least one segment");
  if (*kind != "segments" && !cfg.potential.segments.empty())
    throw ConfigError("potential.segment", line_of("potential.segment"),
                      "only valid with kind=segments");

  // job
  if (const auto v = take("job.type")) cfg.job = parse_job_type(*v, "job.type", line_of("job.type"));
  int grid_points = 256;
  if (const auto v = take("job.grid_points")) {
    grid_points = detail::parse_int(*v, "job.grid_points", line_of("job.grid_points"));
    if (grid_points < 64)
      throw ConfigError("job.grid_points", line_of("job.grid_points"), "must be >= 64");
  }
  if (const auto v = take("job.window")) {
    const auto f = detail::split(*v, ',');
    if (f.size() != 2) throw ConfigError("job.window", line_of("job.window"), "expected lo,hi");
    EnergyWindow w{detail::parse_double(f[0], "job.window", line_of("job.window")),
                   detail::parse_double(f[1], "job.window", line_of("job.window")), grid_points};
    if (!(w.lo < w.hi)) throw ConfigError("job.window", line_of("job.window"), "needs lo < hi");
    cfg.window = w;
  }
  if (const auto v = take("job.scan_points")) {
    cfg.scan_points = detail::parse_int(*v, "job.scan_points", line_of("job.scan_points"));
    if (cfg.scan_points < 2)
      throw ConfigError("job.scan_points", line_of("job.scan_points"), "must be >= 2");
  }

  // numeric
  if (const auto v = take("numeric.n_steps")) {
    cfg.n_steps = detail::parse_int(*v, "numeric.n_steps", line_of("numeric.n_steps"));
    if (cfg.n_steps < 2000)
      throw ConfigError("numeric.n_steps", line_of("numeric.n_steps"), "must be >= 2000");
  }
  if (const auto v = take("numeric.n_films")) {
    cfg.n_films = detail::parse_int(*v, "numeric.n_films", line_of("numeric.n_films"));
    if (cfg.n_films < 1024)
      throw ConfigError("numeric.n_films", line_of("numeric.n_films"), "must be >= 1024");
  }
  if (const auto v = take("numeric.fd_grid")) {
    cfg.fd_grid = detail::parse_int(*v, "numeric.fd_grid", line_of("numeric.fd_grid"));
    if (cfg.fd_grid < 2000)
      throw ConfigError("numeric.fd_grid", line_of("numeric.fd_grid"), "must be >= 2000");
  }
  if (const auto v = take("numeric.tolerance")) {
    cfg.tolerance = detail::parse_double(*v, "numeric.tolerance", line_of("numeric.tolerance"));
    if (!(cfg.tolerance > 0 && cfg.tolerance < 1))
      throw ConfigError("numeric.tolerance", line_of("numeric.tolerance"), "must be in (0, 1)");
  }

  // output
  if (const auto v = take("output.csv")) cfg.csv_path = *v;

  if (!raw.empty()) {
    const auto& k = raw.begin()->first;
    throw ConfigError(k, line_of(k), "unknown key");
  }

  // Builder-level range checks, reported against the offending key.
  const auto& P = cfg.potential.params;
  if (*kind == "double_square_well") {
    for (const char* k : {"V_I", "V_0", "V_F"})
      if (!(P.at(k) > 0))
        throw ConfigError(std::string("potential.") + k, line_of(std::string("potential.") + k),
                          "must be > 0");
    if (!(P.at("x_a") < P.at("x_b")))
      throw ConfigError("potential.x_b", line_of("potential.x_b"), "must exceed x_a");
    if (!(P.at("x_b") <= P.at("x_c")))
      throw ConfigError("potential.x_c", line_of("potential.x_c"), "must be >= x_b");
    if (!(P.at("x_c") < P.at("x_d")))
      throw ConfigError("potential.x_d", line_of("potential.x_d"), "must exceed x_c");
  }
  if (*kind == "biharmonic" && cfg.potential.regime) {
    if (!(P.at("alpha") > 0))
      throw ConfigError("potential.alpha", line_of("potential.alpha"), "must be > 0");
    const double a = P.at("alpha"), b = P.at("beta"), g = P.at("gamma");
    if (std::abs(a * a - (b * b - g)) > 1e-12)
      throw ConfigError("potential.gamma", line_of("potential.gamma"),
                        "alpha^2 = beta^2 - gamma violated");
  }
  if (*kind == "segments") {
    try {
      (void)build::from_segments(cfg.potential.segments);
    } catch (const Error& e) {
      throw ConfigError("potential.segment", line_of("potential.segment"), e.what());
    }
  }
  return cfg;
}

inline JobConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline Potential make_potential(const PotentialSpec& s) {
  const auto& P = s.params;
  if (s.kind == "double_square_well")
    return build::double_square_well(P.at("x_a"), P.at("x_b"), P.at("x_c"), P.at("x_d"),
                                     P.at("V_I"), P.at("V_0"), P.at("V_F"));
  if (s.kind == "biharmonic")
    return build::biharmonic(P.at("alpha"), P.at("beta"), P.at("gamma"), s.regime);
  if (s.kind == "harmonic") return build::harmonic();
  return build::from_segments(s.segments);
}

// ---------------------------------------------------------------------------

/// A table written both as aligned text and as CSV with a trailing
/// config_hash column.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write_csv(std::ostream& os, const std::string& hash) const {
    for (std::size_t i = 0; i < header.size(); ++i) os << header[i] << ',';
    os << "config_hash\n";
    for (const auto& r : rows) {
      for (const auto& c : r) os << c << ',';
      os << hash << '\n';
    }
  }

  void write_text(std::ostream& os) const {
    std::vector<std::size_t> w(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) w[i] = header[i].size();
    for (const auto& r : rows)
      for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i)
        os << (i ? "  " : "") << std::setw(static_cast<int>(w[i])) << r[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
  }
};

inline std::string fmt(double v, int prec = 10) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

namespace detail {

inline const EnergyWindow& need_window(const JobConfig& c) {
  if (!c.window) throw ConfigError("job.window", 0, "required for job " + to_string(c.job));
  return *c.window;
}

inline std::vector<EigenSolution> analytic_route(const JobConfig& c) {
  const auto& P = c.potential.params;
  const auto& w = *c.window;
  if (c.potential.kind == "double_square_well")
    return solve_double_square_well(P.at("x_a"), P.at("x_b"), P.at("x_c"), P.at("x_d"),
                                    P.at("V_I"), P.at("V_0"), P.at("V_F"), w);
  if (c.potential.kind == "biharmonic")
    return solve_biharmonic(P.at("alpha"), P.at("beta"), P.at("gamma"), w);
  if (c.potential.kind == "harmonic") {
    std::vector<EigenSolution> out;
    for (int n = 0; 2 * n + 1 < w.hi; ++n)
      if (2 * n + 1 > w.lo) out.push_back({n, 2.0 * n + 1.0, Route::analytic, 0.0});
    return out;
  }
  return {};
}

inline Table spectrum(const JobConfig& c, const Potential& p) {
  const auto shoot = solve_shooting(p, need_window(c), c.n_steps);
  const auto analytic = analytic_route(c);
  std::map<int, std::array<double, 3>> by_n;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double e_max = -kInf;
  for (const auto& s : shoot) {
    by_n.try_emplace(s.index, std::array<double, 3>{nan, nan, nan})
        .first->second[0] = s.energy;
    e_max = std::max(e_max, s.energy);
  }
  for (const auto& s : analytic) {
    by_n.try_emplace(s.index, std::array<double, 3>{nan, nan, nan})
        .first->second[1] = s.energy;
    e_max = std::max(e_max, s.energy);
  }
  if (!by_n.empty()) {
    const int count = by_n.rbegin()->first + 1;
    const auto oracle = solve_fd_oracle(p, oracle_domain(p, e_max), c.fd_grid, count);
    for (const auto& s : oracle)
      if (by_n.count(s.index)) by_n[s.index][2] = s.energy;
  }
  Table t{{"n", "E_shooting", "E_analytic", "E_oracle", "max_spread"}, {}};
  for (const auto& [n, es] : by_n) {
    double lo = kInf, hi = -kInf;
    for (double e : es)
      if (!std::isnan(e)) lo = std::min(lo, e), hi = std::max(hi, e);
    t.rows.push_back({std::to_string(n), fmt(es[0], 12), fmt(es[1], 12), fmt(es[2], 12),
                      fmt(hi - lo, 3)});
  }
  return t;
}

inline Table verify(const JobConfig& c, const Potential& p) {
  const auto shoot = solve_shooting(p, need_window(c), c.n_steps);
  const VerifyOptions opt{c.n_steps, c.n_films, c.tolerance};
  Table t{{"n", "E", "region_index", "kind", "value_over_pi", "nearest_multiple",
           "residual_over_pi", "total_N"},
          {}};
  const double pi = std::numbers::pi;
  for (const auto& s : shoot) {
    const auto rep = verify_rule(p, s.energy, opt);
    const std::string total = rep.total_N ? std::to_string(*rep.total_N) : "none";
    for (std::size_t i = 0; i < rep.regions.size(); ++i) {
      const auto& r = rep.regions[i];
      t.rows.push_back({std::to_string(s.index), fmt(s.energy, 12), std::to_string(i + 1),
                        qrule::to_string(r.kind), fmt(r.value / pi, 8),
                        std::to_string(r.nearest_multiple), fmt(r.residual / pi, 3), total});
    }
  }
  return t;
}

inline Table scan(const JobConfig& c, const Potential& p) {
  const auto& w = need_window(c);
  Table t{{"E", "mismatch", "total_over_pi", "residual_over_pi"}, {}};
  const double pi = std::numbers::pi;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const VerifyOptions opt{c.n_steps, c.n_films, c.tolerance};
  for (int i = 0; i < c.scan_points; ++i) {
    const double e = w.lo + (w.hi - w.lo) * (i + 0.5) / c.scan_points;
    double mm = nan, tot = nan, res = nan;
    try {
      mm = matching_mismatch(p, e, choose_match_point(p, e), c.n_steps);
      const auto rep = verify_rule(p, e, opt);
      tot = rep.total_value / pi;
      res = rep.total_residual / pi;
    } catch (const Error& err) {
      // No allowed region or a tangency at this energy: leave the row blank.
      if (err.kind() != ErrorKind::odd_turning_points && err.kind() != ErrorKind::tangency)
        throw;
    }
    t.rows.push_back({fmt(e, 10), fmt(mm, 8), fmt(tot, 8), fmt(res, 3)});
  }
  return t;
}

/// Film ledger Σ atanh terms on the first interior forbidden region of the
/// lowest state in the window, against its continuum value ∫κ dx.
inline Table films(const JobConfig& c, const Potential& p) {
  const auto shoot = solve_shooting(p, need_window(c), c.n_steps);
  if (shoot.empty())
    throw Error(ErrorKind::non_convergence, "no eigenstate in the window");
  const double e = shoot.front().energy;
  const auto part = partition(p, e);
  const auto inner = part.interior();
  const auto it = std::find_if(inner.begin(), inner.end(),
                               [](const Region& r) { return r.kind == RegionKind::forbidden; });
  if (it == inner.end())
    throw Error(ErrorKind::odd_turning_points, "no interior forbidden region at E=" + fmt(e));
  const auto trace = eigen_trace(p, e, c.n_steps);
  const double phi_in = trace.phi_at(it->interval.lo);
  const double exact = forbidden_integral(p, e, it->interval);
  Table t{{"n_films", "film_value", "continuum_value", "error"}, {}};
  for (int n = 64; n <= 4096; n *= 2) {
    const auto f = film_propagate(p, e, it->interval, n, phi_in);
    const double v = f.interior_sum() + f.boundary_in() + f.boundary_out();
    t.rows.push_back({std::to_string(n), fmt(v, 14), fmt(exact, 14), fmt(std::abs(v - exact), 3)});
  }
  return t;
}

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::odd_turning_points:
    case ErrorKind::tangency:
    case ErrorKind::non_confining:
    case ErrorKind::multi_well:
    case ErrorKind::regime:
      return kExitTurningPoints;
    case ErrorKind::invalid_parameter:
      return kExitConfig;
    default:
      return kExitNonConvergence;
  }
}

}  // namespace detail

/// Runs the job; human table to `out` (unless quiet), CSV to the configured
/// path. Returns the process exit code.
inline int run(const JobConfig& c, std::ostream& out, std::ostream& err, bool quiet = false) {
  try {
    const Potential p = make_potential(c.potential);
    Table t;
    switch (c.job) {
      case JobType::spectrum: t = detail::spectrum(c, p); break;
      case JobType::verify: t = detail::verify(c, p); break;
      case JobType::scan: t = detail::scan(c, p); break;
      case JobType::films: t = detail::films(c, p); break;
    }
    if (!quiet) {
      out << "# " << to_string(c.job) << "  config " << c.hash() << '\n';
      t.write_text(out);
    }
    if (!c.csv_path.empty()) {
      std::ofstream f(c.csv_path);
      if (!f) {
        err << "cannot write " << c.csv_path << '\n';
        return kExitConfig;
      }
      t.write_csv(f, c.hash());
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return detail::exit_code_for(e.kind());
  }
}

}  // namespace qrule::cli
