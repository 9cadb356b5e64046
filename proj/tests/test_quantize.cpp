#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "qrule/quantize.hpp"
#include "qrule/solve.hpp"

using namespace qrule;

namespace {

constexpr double kPi = std::numbers::pi;

Potential square_dsw() { return build::double_square_well(-2, -1, 1, 2, 100, 100, 101); }
Potential shifted_bih() { return build::biharmonic(2, 3, 5, true); }

const std::vector<EigenSolution>& dsw_levels() {
  static const auto v = solve_double_square_well(-2, -1, 1, 2, 100, 100, 101, {0, 100, 512});
  return v;
}

const std::vector<EigenSolution>& bih_levels() {
  static const auto v = solve_biharmonic(2, 3, 5, {-5, 9, 1024});
  return v;
}

Interval region(const Potential& p, double e, std::size_t i) {
  return partition(p, e).regions.at(i).interval;
}

}  // namespace

TEST(MomentumIntegral, HarmonicGround) {
  EXPECT_NEAR(momentum_integral(build::harmonic(), 1.0, {-1, 1}), kPi / 2, 1e-9);
}

TEST(MomentumIntegral, ConstantWell) {
  EXPECT_NEAR(momentum_integral(square_dsw(), 6.83296, {1, 2}), std::sqrt(6.83296), 1e-12);
}

TEST(MomentumIntegral, ShiftedQuadratic) {
  const double e = 0.286635;
  const auto p = shifted_bih();
  EXPECT_NEAR(momentum_integral(p, e, region(p, e, 1)), kPi * e / 2, 1e-9);
}

TEST(MomentumIntegral, NegativeRadicand) {
  try {
    (void)momentum_integral(build::harmonic(), 1.0, {-2, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::negative_radicand);
  }
}

TEST(ForbiddenIntegral, ConstantBarrier) {
  EXPECT_NEAR(forbidden_integral(square_dsw(), 6.83296, {-1, 1}), 2 * std::sqrt(100 - 6.83296),
              1e-12);
  EXPECT_NEAR(forbidden_integral(square_dsw(), 6.83296, {-1, 1}), 19.3046, 1e-4);
}

TEST(ForbiddenIntegral, HarmonicTailClosedForm) {
  const double want = 0.5 * (3 * std::sqrt(8.0) - std::acosh(3.0));
  EXPECT_NEAR(forbidden_integral(build::harmonic(), 1.0, {1, 3}), want, 1e-9);
}

TEST(ForbiddenIntegral, ZeroWidth) {
  EXPECT_EQ(forbidden_integral(build::harmonic(), 1.0, {2, 2}), 0.0);
  EXPECT_EQ(momentum_integral(build::harmonic(), 1.0, {0.5, 0.5}), 0.0);
}

TEST(CorrectionAllowed, ConstantRegionIsZero) {
  const auto p = square_dsw();
  const double e = dsw_levels()[0].energy;
  EXPECT_EQ(correction_allowed(eigen_trace(p, e), p, e, {-2, -1}), 0.0);
}

TEST(CorrectionAllowed, HarmonicGround) {
  // φ = −x, k = √(1−x²): integrand −x²/√(1−x²), integral −π/2.
  const auto p = build::harmonic();
  const double c = correction_allowed(eigen_trace(p, 1.0), p, 1.0, {-1, 1});
  EXPECT_NEAR(c, -kPi / 2, 1e-5);
  EXPECT_NEAR(c, momentum_integral(p, 1.0, {-1, 1}) - kPi, 1e-5);
}

TEST(CorrectionAllowed, BiharmonicRightWell) {
  const auto p = shifted_bih();
  const double e = bih_levels()[3].energy;
  const auto iv = region(p, e, 3);
  const double c = correction_allowed(eigen_trace(p, e), p, e, iv);
  EXPECT_NEAR(c, momentum_integral(p, e, iv) - 3 * kPi, 1e-4);
}

TEST(CorrectionForbidden, DoubleSquareWellGroundBarrier) {
  const auto p = square_dsw();
  const double e = dsw_levels()[0].energy;
  const auto t = eigen_trace(p, e);
  const auto f = correction_forbidden(t, p, e, {-1, 1});
  EXPECT_EQ(f.m_total, 1);
  EXPECT_NEAR(f.value, -kPi, 1e-12);
  const auto g = correction_forbidden(p, e, {-1, 1}, t.phi_at(-1.0));
  EXPECT_EQ(g.m_total, 1);
}

TEST(CorrectionForbidden, HarmonicTailsCarryNothing) {
  const auto p = build::harmonic();
  const auto t = eigen_trace(p, 1.0);
  EXPECT_EQ(correction_forbidden(t, p, 1.0, {t.lo(), -1.0}).value, 0.0);
  EXPECT_EQ(correction_forbidden(t, p, 1.0, {1.0, t.hi()}).value, 0.0);
}

TEST(CorrectionForbidden, BiharmonicBarrierForTrueStates) {
  const auto p = shifted_bih();
  for (int n = 3; n <= 6; ++n) {
    const double e = bih_levels()[n].energy;
    const auto f = correction_forbidden(eigen_trace(p, e), p, e, region(p, e, 2));
    EXPECT_EQ(f.value, 0.0) << n;
  }
}

TEST(CorrectionForbidden, FilmCountPrecondition) {
  const auto p = square_dsw();
  EXPECT_THROW((void)correction_forbidden(p, 6.8, {-1, 1}, 1.0, 512), Error);
}

TEST(BoundaryTerms, VanishAtContinuousTurningPoints) {
  const auto p = shifted_bih();
  for (int n = 3; n <= 6; ++n) {
    const double e = bih_levels()[n].energy;
    EXPECT_NEAR(boundary_terms(p, e, partition(p, e), eigen_trace(p, e)), 0.0, 1e-6);
  }
  const auto h = build::harmonic();
  for (double e : {1.0, 3.0, 5.0})
    EXPECT_NEAR(boundary_terms(h, e, partition(h, e), eigen_trace(h, e)), 0.0, 1e-6);
}

TEST(BoundaryTerms, DoubleSquareWellGroundRegression) {
  const auto p = square_dsw();
  const double e = dsw_levels()[0].energy;
  const auto rep = verify_rule(p, e);
  EXPECT_NEAR(rep.discontinuity_correction,
              boundary_terms(p, e, partition(p, e), eigen_trace(p, e)), 1e-12);
  // Σ raw integrals + forbidden values = N·π + discontinuity_correction.
  double raw = 0.0;
  for (const auto& r : rep.regions)
    raw += r.kind == RegionKind::allowed ? r.momentum_integral - r.correction_integral : r.value;
  EXPECT_NEAR(raw, kPi + rep.discontinuity_correction, 1e-3 * kPi);
  // Ground state is even: φ = ±κ at the outer walls and ∓κ tanh(κ) at the
  // barrier faces, so the four arctan terms are known in closed form.
  const double k = std::sqrt(e), kap = std::sqrt(100 - e);
  const double want = -2 * std::atan(k / kap) - 2 * std::atan(k / (kap * std::tanh(kap)));
  EXPECT_NEAR(rep.discontinuity_correction, want, 1e-6);
}

TEST(VerifyRule, BiharmonicSecondExcited) {
  const auto rep = verify_rule(shifted_bih(), bih_levels()[2].energy);
  ASSERT_TRUE(rep.total_N);
  EXPECT_EQ(*rep.total_N, 3);
}

TEST(VerifyRule, BiharmonicFourTurningPoints) {
  const auto rep = verify_rule(shifted_bih(), bih_levels()[3].energy);
  ASSERT_EQ(rep.regions.size(), 3u);
  ASSERT_TRUE(rep.total_N);
  EXPECT_EQ(*rep.total_N, 4);
  EXPECT_EQ(rep.regions[0].nearest_multiple, 1);
  EXPECT_EQ(rep.regions[1].nearest_multiple, 0);
  EXPECT_EQ(rep.regions[2].nearest_multiple, 3);
}

TEST(VerifyRule, DoubleSquareWellFirstExcited) {
  const auto rep = verify_rule(square_dsw(), dsw_levels()[1].energy);
  ASSERT_TRUE(rep.total_N);
  EXPECT_EQ(*rep.total_N, 2);
  EXPECT_EQ(rep.psi_nodes, 1);
}

TEST(VerifyRule, QuotedDoubleWellLevelIsFourthState) {
  const auto rep = verify_rule(square_dsw(), 26.9768);
  ASSERT_TRUE(rep.total_N);
  EXPECT_EQ(*rep.total_N, 4);
  EXPECT_EQ(rep.regions[0].nearest_multiple, 2);
  EXPECT_EQ(rep.regions[2].nearest_multiple, 2);
}

TEST(VerifyRule, HarmonicOffSpectrum) {
  const auto rep = verify_rule(build::harmonic(), 2.0);
  EXPECT_FALSE(rep.eigenstate());
  EXPECT_GT(std::abs(rep.total_residual), 0.1);
}

TEST(ProperRule, Harmonic) {
  const auto h = build::harmonic();
  auto r = proper_rule_check(h, 1.0, 1.0, 0);
  EXPECT_NEAR(r.lhs, kPi / 2, 1e-9);
  EXPECT_NEAR(r.reference, kPi / 2, 1e-9);
  r = proper_rule_check(h, 7.0, 1.0, 3);
  EXPECT_NEAR(r.lhs, 3.5 * kPi, 1e-9);
  EXPECT_NEAR(r.residual(), 0.0, 1e-9);
  r = proper_rule_reference(h, 1, {0, 4});
  EXPECT_NEAR(r.lhs, 1.5 * kPi, 1e-6);
}

TEST(ProperRule, RejectsMultiWell) {
  try {
    (void)proper_rule_check(shifted_bih(), 1.0, -4.0, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::multi_well);
  }
}

TEST(NearestMultiple, Rounds) {
  EXPECT_EQ(nearest_multiple_of_pi(2.6 * kPi), 3);
  EXPECT_EQ(nearest_multiple_of_pi(-2.6 * kPi), -3);
  EXPECT_EQ(nearest_multiple_of_pi(0.49 * kPi), 0);
}

// Properties

TEST(Property, TotalIsNodesPlusOne) {
  std::vector<std::pair<Potential, std::vector<EigenSolution>>> sets{
      {square_dsw(), dsw_levels()},
      {shifted_bih(), bih_levels()},
      {build::harmonic(), solve_shooting(build::harmonic(), {0, 12})},
  };
  for (const auto& [p, levels] : sets)
    for (const auto& s : levels) {
      const auto rep = verify_rule(p, s.energy);
      ASSERT_TRUE(rep.total_N) << s.energy;
      EXPECT_EQ(*rep.total_N, rep.psi_nodes + 1);
      EXPECT_EQ(rep.psi_nodes, s.index);
      EXPECT_LE(std::abs(rep.total_residual), 1e-3 * kPi);
    }
}

TEST(Property, AllowedRegionsAreIntegerMultiples) {
  for (const auto& [p, levels] : std::vector<std::pair<Potential, std::vector<EigenSolution>>>{
           {square_dsw(), dsw_levels()}, {shifted_bih(), bih_levels()}})
    for (const auto& s : levels)
      for (const auto& r : verify_rule(p, s.energy).regions)
        if (r.kind == RegionKind::allowed) {
          EXPECT_LE(std::abs(r.residual), 1e-3 * kPi);
        }
}

TEST(Property, RegionIdentityAtContinuousTurningPoints) {
  const auto p = shifted_bih();
  for (int n = 3; n <= 6; ++n) {
    const double e = bih_levels()[n].energy;
    const auto t = eigen_trace(p, e);
    for (const auto& r : partition(p, e).interior()) {
      if (r.kind != RegionKind::allowed) continue;
      const double mom = momentum_integral(p, e, r.interval);
      const int count = count_phi_zeros(t, r.interval);
      EXPECT_NEAR(correction_allowed(t, p, e, r.interval), mom - count * kPi, 1e-4) << n;
    }
  }
}

TEST(Property, GridRobustness) {
  const std::vector<std::pair<Potential, double>> cases{
      {square_dsw(), dsw_levels()[2].energy},
      {shifted_bih(), bih_levels()[4].energy},
      {build::harmonic(), 5.0},
  };
  for (const auto& [p, e] : cases) {
    const auto a = verify_rule(p, e, {20000, 4096, kReportTol});
    const auto b = verify_rule(p, e, {40000, 8192, kReportTol});
    EXPECT_LT(std::abs(a.total_value - b.total_value), 1e-4) << e;
  }
}
