#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "qrule/solve.hpp"
#include "random_wells.hpp"

using namespace qrule;

namespace {

Potential square_dsw() { return build::double_square_well(-2, -1, 1, 2, 100, 100, 101); }

std::vector<double> energies(const std::vector<EigenSolution>& v) {
  std::vector<double> out;
  for (const auto& s : v) out.push_back(s.energy);
  return out;
}

const std::vector<EigenSolution>& dsw_analytic() {
  static const auto v = solve_double_square_well(-2, -1, 1, 2, 100, 100, 101, {0, 100});
  return v;
}

const std::vector<EigenSolution>& dsw_shooting() {
  static const auto v = solve_shooting(square_dsw(), {0, 100, 512});
  return v;
}

const std::vector<EigenSolution>& bih_analytic() {
  static const auto v = solve_biharmonic(2, 3, 5, {-5, 9});
  return v;
}

// Minimum of a smooth potential by dense scan plus golden refinement.
double minimum_of(const Potential& p, double lo, double hi) {
  double best = lo;
  for (int i = 0; i <= 4000; ++i) {
    const double x = lo + (hi - lo) * i / 4000;
    if (p.eval(x) < p.eval(best)) best = x;
  }
  return p.eval(best);
}

void expect_indexed(const std::vector<EigenSolution>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v[i].index, static_cast<int>(i));
    if (i > 0) {
      EXPECT_GT(v[i].energy, v[i - 1].energy);
    }
  }
}

}  // namespace

TEST(Shooting, HarmonicOddIntegers) {
  const auto v = solve_shooting(build::harmonic(), {0, 12});
  ASSERT_EQ(v.size(), 6u);
  for (int n = 0; n < 6; ++n) {
    EXPECT_NEAR(v[n].energy, 2 * n + 1, 1e-8);
    EXPECT_EQ(v[n].index, n);
    EXPECT_EQ(v[n].route, Route::shooting);
    EXPECT_LT(v[n].residual, kShootingAccept);
  }
}

TEST(Shooting, DoubleSquareWellHasEightLevels) {
  const auto& v = dsw_shooting();
  ASSERT_EQ(v.size(), 8u);
  expect_indexed(v);
}

TEST(Shooting, DoubleSquareWellContainsQuotedLevels) {
  for (double want : {6.83296, 26.9768, 58.974, 96.5517}) {
    const auto e = energies(dsw_shooting());
    const auto it = std::min_element(e.begin(), e.end(), [&](double a, double b) {
      return std::abs(a - want) < std::abs(b - want);
    });
    EXPECT_NEAR(*it, want, 1e-3);
  }
}

TEST(Shooting, BiharmonicAgreesWithHermiteMatching) {
  const auto v = solve_shooting(build::biharmonic(2, 3, 5), {-5, 9});
  const auto& a = bih_analytic();
  ASSERT_EQ(v.size(), a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v[i].index, a[i].index);
    EXPECT_NEAR(v[i].energy, a[i].energy, 1e-7);
  }
}

TEST(Shooting, RejectsBadWindow) {
  EXPECT_THROW((void)solve_shooting(build::harmonic(), {3, 1}), Error);
  EXPECT_THROW((void)solve_shooting(build::harmonic(), {0, 1, 8}), Error);
}

TEST(Shooting, EigenvalueCountIsStaircase) {
  const auto h = build::harmonic();
  EXPECT_EQ(eigenvalue_count(h, 0.5), 0);
  EXPECT_EQ(eigenvalue_count(h, 2.0), 1);
  EXPECT_EQ(eigenvalue_count(h, 6.0), 3);
  EXPECT_EQ(eigenvalue_count(h, 10.5), 5);
}

TEST(FdOracle, HarmonicOddIntegers) {
  const auto h = build::harmonic();
  const auto v = solve_fd_oracle(h, oracle_domain(h, 12.0), 4000, 6);
  for (int n = 0; n < 6; ++n) {
    EXPECT_NEAR(v[n].energy, 2 * n + 1, 1e-7);
    EXPECT_EQ(v[n].route, Route::fd_oracle);
  }
}

TEST(FdOracle, InfiniteSquareWellLimit) {
  // V = 1e6 walls: E_n ≈ (n+1)²π²/L² for L = 2.
  const auto p = build::double_square_well(-1, 0, 0, 1, 1e6, 1e6, 1e6);
  const auto v = solve_fd_oracle(p, {-1.05, 1.05}, 4000, 3);
  for (int n = 0; n < 3; ++n) {
    const double inf_well = std::pow((n + 1) * std::numbers::pi / 2, 2);
    EXPECT_NEAR(v[n].energy, inf_well, 0.02 * inf_well) << n;
    EXPECT_LT(v[n].energy, inf_well);
  }
}

TEST(FdOracle, DomainTooSmall) {
  try {
    (void)solve_fd_oracle(build::harmonic(), {-2, 2}, 2000, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain_too_small);
  }
}

TEST(FdOracle, Preconditions) {
  EXPECT_THROW((void)solve_fd_oracle(build::harmonic(), {-8, 8}, 1000, 2), Error);
  EXPECT_THROW((void)solve_fd_oracle(build::harmonic(), {-8, 8}, 2000, 0), Error);
}

TEST(DoubleSquareWell, QuotedLevelsPresent) {
  const auto e = energies(dsw_analytic());
  ASSERT_EQ(e.size(), 8u);
  const std::vector<double> quoted{6.83296, 26.9768, 58.974, 96.5517};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(e[2 * i + 1], quoted[i], 1e-3);
  expect_indexed(dsw_analytic());
}

TEST(DoubleSquareWell, AnalyticMatchesShooting) {
  const auto& a = dsw_analytic();
  const auto& s = dsw_shooting();
  ASSERT_EQ(a.size(), s.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].energy, s[i].energy, 1e-6);
}

TEST(DoubleSquareWell, AnalyticMatchesOracle) {
  const auto p = square_dsw();
  const auto fd = solve_fd_oracle(p, oracle_domain(p, 99.0), 8000, 8);
  const auto& a = dsw_analytic();
  // V jumps at the joints, so the cell-averaged stencil converges only to ~1e−3
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(fd[i].energy, a[i].energy, 2e-3 * (1 + a[i].energy / 10));
}

TEST(DoubleSquareWell, WeakBarrierSymmetricPair) {
  // Symmetric walls and a low barrier: a clearly split doublet.
  const auto a = solve_double_square_well(-2, -1, 1, 2, 50, 10, 50, {0, 10});
  const auto s = solve_shooting(build::double_square_well(-2, -1, 1, 2, 50, 10, 50), {0, 10});
  ASSERT_GE(a.size(), 2u);
  ASSERT_EQ(a.size(), s.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].energy, s[i].energy, 1e-6);
  // lower barrier, wider tunnelling doublet
  EXPECT_GT(a[1].energy - a[0].energy, 5 * (dsw_analytic()[1].energy - dsw_analytic()[0].energy));
}

TEST(DoubleSquareWell, MergedBarrierIsSingleWell) {
  const auto a = solve_double_square_well(-2, 0, 0, 2, 100, 100, 100, {0, 100});
  const auto p = build::double_square_well(-2, 0, 0, 2, 100, 100, 100);
  const auto fd = solve_fd_oracle(p, oracle_domain(p, 99.0), 8000, static_cast<int>(a.size()));
  ASSERT_GE(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_NEAR(a[i].energy, fd[i].energy, 2e-3 * (1 + a[i].energy / 10));
}

TEST(DoubleSquareWell, LevelsRiseWithBarrier) {
  const auto lo = solve_double_square_well(-2, -1, 1, 2, 100, 99, 101, {0, 100});
  const auto hi = solve_double_square_well(-2, -1, 1, 2, 100, 101, 101, {0, 100});
  const auto& mid = dsw_analytic();
  ASSERT_EQ(lo.size(), mid.size());
  ASSERT_EQ(hi.size(), mid.size());
  for (std::size_t i = 0; i < mid.size(); ++i) {
    EXPECT_LT(lo[i].energy, mid[i].energy);
    EXPECT_GT(hi[i].energy, mid[i].energy);
  }
}

TEST(DoubleSquareWell, PhaseOutsideRangeThrows) {
  EXPECT_THROW((void)double_square_well_phase(-2, -1, 1, 2, 100, 100, 101, 100.5), Error);
  EXPECT_THROW((void)double_square_well_phase(-2, -1, 1, 2, 100, 100, 101, -1.0), Error);
}

TEST(Biharmonic, TrueSpectrum) {
  const std::vector<double> want{-4.0000219, -2.0005380, -0.0074119, 0.9910296,
                                 1.9506448, 2.9677265,  3.9706130,  5.1270507,
                                 6.2686912, 7.5478842,  8.7922403};
  const auto& v = bih_analytic();
  ASSERT_EQ(v.size(), want.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(v[i].energy, want[i], 1e-6);
    EXPECT_LE(std::abs(v[i].residual), 1e-6);
  }
  expect_indexed(v);
}

TEST(Biharmonic, MirroredEquationReproducesQuotedList) {
  const auto r = biharmonic_mirrored_left_roots(2, 3, 5, {-3, 9});
  const std::vector<double> quoted{-1.931141, 0.286635, 2.734170, 5.440525, 8.501485};
  ASSERT_EQ(r.size(), quoted.size());
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], quoted[i], 1e-5);
}

TEST(Biharmonic, SymmetricDoubleWellMatchesOracle) {
  const auto v = solve_biharmonic(1.5, 1.5, 0, {0, 6});
  const auto p = build::biharmonic(1.5, 1.5, 0);
  const auto fd = solve_fd_oracle(p, oracle_domain(p, 6.0), 4000, static_cast<int>(v.size()));
  ASSERT_GE(v.size(), 4u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i].energy, fd[i].energy, 1e-5);
}

TEST(Biharmonic, HarmonicLimit) {
  const auto v = solve_biharmonic(0, 0, 0, {0, 12});
  ASSERT_EQ(v.size(), 6u);
  for (int n = 0; n < 6; ++n) EXPECT_NEAR(v[n].energy, 2 * n + 1, 1e-8);
}

TEST(Biharmonic, NegativeAlphaRejected) {
  EXPECT_THROW((void)solve_biharmonic(-1, 3, 5, {0, 4}), Error);
}

TEST(Property, RandomWellsAgreeWithOracle) {
  for (const auto& w : testwells::random_wells()) {
    const Potential p = w.potential();
    const double vmin = minimum_of(p, -4, 4);
    const EnergyWindow win{vmin - 0.5, vmin + 6};
    const auto sh = solve_shooting(p, win);
    ASSERT_FALSE(sh.empty());
    const auto fd =
        solve_fd_oracle(p, oracle_domain(p, win.hi), 4000, static_cast<int>(sh.size()));
    for (std::size_t i = 0; i < sh.size(); ++i)
      EXPECT_NEAR(sh[i].energy, fd[i].energy, 1e-6 * (1 + std::abs(fd[i].energy)))
          << w.a << ' ' << w.b << ' ' << w.c << ' ' << i;
    expect_indexed(sh);
  }
}
