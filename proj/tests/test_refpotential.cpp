#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "npflow/refpotential.hpp"

using namespace npflow;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec along_e1(double s, int dim = 2) {
  Vec v = Vec::Zero(dim);
  v[0] = s;
  return v;
}

}  // namespace

TEST(Phi, QuadraticAtZero) { EXPECT_EQ(quadratic_potential().phi(Vec::Zero(3)), 0.0); }

TEST(Phi, EpsNormalizedInterior) {
  // -(ln(1 - 5/6) + 5/6) = ln 6 - 5/6
  const double expected = std::log(6.0) - 5.0 / 6.0;
  EXPECT_NEAR(eps_normalized_potential(1.0).phi(v2(0.5, std::sqrt(25.0 / 36.0 - 0.25))), expected, 1e-14);
}

TEST(Phi, EpsNormalizedBoundaryIsInfinite) {
  const auto p = eps_normalized_potential(1.0);
  EXPECT_TRUE(std::isinf(p.phi(v2(0.6, 0.8))));
  EXPECT_TRUE(std::isinf(p.phi(v2(3.0, 0.0))));
  EXPECT_TRUE(std::isinf(p.phi(along_e1(1.0 - 1e-13))));
  EXPECT_TRUE(std::isfinite(p.phi(along_e1(1.0 - 1e-9))));
}

TEST(Phi, BallMoreauClosedDomain) {
  const auto p = ball_moreau_potential();
  EXPECT_DOUBLE_EQ(p.phi(along_e1(1.0)), 0.5);
  EXPECT_TRUE(std::isinf(p.phi(along_e1(1.01))));
}

TEST(Conjugate, Examples) {
  EXPECT_DOUBLE_EQ(quadratic_potential().conjugate(v2(3, 4)), 12.5);
  EXPECT_NEAR(eps_normalized_potential(1.0).conjugate(v2(3, 4)), 5.0 - std::log(6.0), 1e-14);
  for (const auto& p : gen::catalog()) EXPECT_EQ(p.conjugate(Vec::Zero(2)), 0.0);
}

TEST(Conjugate, BallMoreauIsHuber) {
  const auto p = ball_moreau_potential();
  EXPECT_DOUBLE_EQ(p.conjugate(along_e1(0.5)), 0.125);
  EXPECT_DOUBLE_EQ(p.conjugate(along_e1(3.0)), 2.5);  // r - 1/2
}

TEST(GradConjugate, Examples) {
  const Vec g = eps_normalized_potential(1.0).grad_conjugate(v2(3, 4));
  EXPECT_NEAR(g[0], 0.5, 1e-15);
  EXPECT_NEAR(g[1], 4.0 / 6.0, 1e-15);
  EXPECT_EQ(quadratic_potential().grad_conjugate(v2(3, 4)), v2(3, 4));
  for (const auto& p : gen::catalog()) EXPECT_EQ(p.grad_conjugate(Vec::Zero(4)), Vec::Zero(4));
}

TEST(GradConjugate, CoshClipIsArcsinh) {
  const Vec g = cosh_clip_potential().grad_conjugate(v2(3, 4));
  EXPECT_NEAR(g.norm(), std::asinh(5.0), 1e-14);
  EXPECT_NEAR(g[0] / g[1], 0.75, 1e-14);
}

TEST(GradConjugate, BallMoreauProjects) {
  const auto p = ball_moreau_potential();
  EXPECT_EQ(p.grad_conjugate(v2(0.3, 0.4)), v2(0.3, 0.4));
  const Vec g = p.grad_conjugate(v2(3, 4));
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
}

TEST(MakeIsotropic, RejectsBadParameters) {
  const ScalarProfile prof = quadratic_potential().profile();
  EXPECT_THROW(make_isotropic(prof, 0.0, kInf), std::invalid_argument);
  EXPECT_THROW(make_isotropic(prof, -1.0, kInf), std::invalid_argument);
  EXPECT_THROW(make_isotropic(prof, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(make_isotropic(prof, 1.0, -2.0), std::invalid_argument);
}

TEST(MakeIsotropic, RatioFlag) {
  EXPECT_TRUE(quadratic_potential().ratio_nonincreasing());
  EXPECT_TRUE(eps_normalized_potential(0.5).ratio_nonincreasing());
  EXPECT_TRUE(cosh_clip_potential().ratio_nonincreasing());
  EXPECT_TRUE(ball_moreau_potential().ratio_nonincreasing());
  // (h*)'(r) = r^3 for h(s) = (3/4) s^(4/3): ratio r^2 increases
  ScalarProfile cubic{[](double s) { return 0.75 * std::pow(s, 4.0 / 3.0); },
                      [](double s) { return std::cbrt(s); },
                      [](double r) { return 0.25 * r * r * r * r; },
                      [](double r) { return r * r * r; }};
  EXPECT_FALSE(make_isotropic(cubic, 1.0, kInf).ratio_nonincreasing());
}

TEST(MakeIsotropic, BuildsFromProfile) {
  // h = cosh(s) - 1, built by hand rather than from the catalog
  ScalarProfile prof{[](double s) { return std::cosh(s) - 1.0; }, [](double s) { return std::sinh(s); },
                     [](double r) { return r * std::asinh(r) - std::sqrt(1.0 + r * r) + 1.0; },
                     [](double r) { return std::asinh(r); }};
  const auto p = make_isotropic(prof, 1.0, kInf);
  const Vec y = v2(-1.5, 2.0);
  EXPECT_NEAR(p.conjugate(y), cosh_clip_potential().conjugate(y), 1e-13);
  EXPECT_NEAR((p.grad_conjugate(y) - cosh_clip_potential().grad_conjugate(y)).norm(), 0.0, 1e-14);
}

TEST(MakePotential, ByIdAndParams) {
  EXPECT_EQ(make_potential("quadratic", {{"a", 2.0}}).mu(), 2.0);
  EXPECT_EQ(make_potential("eps-normalized", {{"eps", 0.25}}).mu(), 0.25);
  EXPECT_EQ(make_potential("cosh-clip").mu(), 1.0);
  EXPECT_EQ(make_potential("ball-moreau").dom_radius(), 1.0);
  EXPECT_THROW(make_potential("huber"), std::invalid_argument);
  try {
    make_potential("eps-normalized", {{"epsilon", 1.0}});
    FAIL() << "unknown key accepted";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("epsilon"), std::string::npos);
  }
}

TEST(Oracle, Examples) {
  const auto q = numeric_conjugate_oracle(quadratic_potential(), v2(3, 4));
  EXPECT_NEAR(q.value, 12.5, 1e-8);
  EXPECT_NEAR((q.argmax - v2(3, 4)).norm(), 0.0, 1e-6);

  const auto e = numeric_conjugate_oracle(eps_normalized_potential(1.0), v2(3, 4));
  EXPECT_NEAR(e.value, 5.0 - std::log(6.0), 1e-8);
  EXPECT_NEAR((e.argmax - v2(0.5, 4.0 / 6.0)).norm(), 0.0, 1e-6);

  for (const auto& p : gen::catalog()) {
    const auto z = numeric_conjugate_oracle(p, Vec::Zero(2));
    EXPECT_EQ(z.value, 0.0);
    EXPECT_EQ(z.argmax, Vec::Zero(2));
  }
}

TEST(Oracle, RequiresProfile) {
  auto raw = ReferencePotential::from_functions([](const Vec& v) { return 0.5 * v.squaredNorm(); },
                                                [](const Vec& y) { return 0.5 * y.squaredNorm(); },
                                                [](const Vec& y) { return y; }, 1.0);
  EXPECT_THROW(numeric_conjugate_oracle(raw, v2(1, 1)), std::exception);
}

TEST(VerifyPair, QuadraticLipschitzRatioIsOne) {
  const auto v = verify_pair(quadratic_potential(), {100, 2, 10.0, 7});
  EXPECT_TRUE(v.report.all_passed());
  EXPECT_NEAR(v.max_lipschitz_ratio, 1.0, 1e-12);
}

TEST(VerifyPair, EpsNormalizedSmallEps) {
  const auto v = verify_pair(eps_normalized_potential(0.1), {100, 2, 10.0, 7});
  EXPECT_TRUE(v.report.all_passed());
  EXPECT_GE(v.min_cocoercivity_gap, -1e-12);
}

TEST(VerifyPair, EveryCatalogEntryPasses) {
  for (const auto& p : gen::catalog())
    for (int dim : {1, 2, 5}) {
      const auto v = verify_pair(p, {100, dim, 10.0, 11});
      EXPECT_TRUE(v.report.all_passed()) << to_string(p.family()) << " dim " << dim;
      EXPECT_LE(v.max_fenchel_young_residual, 1e-8);
    }
}

TEST(VerifyPair, CorruptedPairFailsFenchelYoung) {
  const auto good = eps_normalized_potential(1.0);
  ScalarProfile bad = good.profile();
  bad.hstar = [](double r) { return 0.5 * r * r; };  // conjugate of a different h
  const auto p = make_isotropic(bad, 1.0, 1.0);
  const auto v = verify_pair(p, {100, 2, 10.0, 7});
  ASSERT_NE(v.report.find("fenchel-young"), nullptr);
  EXPECT_EQ(v.report.find("fenchel-young")->status, ClaimStatus::fail);
}

// ---------------------------------------------------------------------------
// Properties

TEST(PotentialProperty, EvenNonnegativeAndZeroAtOrigin) {
  gen::Source src(101);
  for (const auto& p : gen::catalog()) {
    EXPECT_EQ(p.phi(Vec::Zero(3)), 0.0);
    for (int i = 0; i < 200; ++i) {
      const Vec v = src.vector(3, 1e-4, 0.999);
      const double a = p.phi(v), b = p.phi(-v);
      EXPECT_GE(a, 0.0);
      EXPECT_EQ(a, b);
      const Vec y = src.vector(3, 1e-4, 1e3);
      EXPECT_EQ(p.conjugate(y), p.conjugate(-y));
      EXPECT_GE(p.conjugate(y), 0.0);
    }
  }
}

TEST(PotentialProperty, ClosedFormMatchesOracle) {
  gen::Source src(202);
  for (const auto& p : gen::catalog())
    for (int i = 0; i < 40; ++i) {
      const Vec y = src.vector(2, 1e-3, 50.0);
      const auto o = numeric_conjugate_oracle(p, y);
      EXPECT_NEAR(p.conjugate(y), o.value, 1e-8 * (1.0 + std::abs(o.value))) << to_string(p.family());
    }
}

TEST(PotentialProperty, GradientMatchesFiniteDifferences) {
  gen::Source src(303);
  const double h = 1e-6;
  for (const auto& p : gen::catalog())
    for (int i = 0; i < 50; ++i) {
      const Vec y = src.vector(3, 1e-2, 20.0);
      // The Huber conjugate has a kink in curvature at |y| = 1.
      if (p.family() == PotentialFamily::ball_moreau && std::abs(y.norm() - 1.0) < 1e-4) continue;
      const Vec g = p.grad_conjugate(y);
      Vec fd(3);
      for (int k = 0; k < 3; ++k) {
        Vec e = Vec::Zero(3);
        e[k] = h;
        fd[k] = (p.conjugate(y + e) - p.conjugate(y - e)) / (2 * h);
      }
      EXPECT_LE((fd - g).norm(), 1e-5 * std::max(1.0, g.norm())) << to_string(p.family());
    }
}

TEST(PotentialProperty, CocoercivityAndLipschitzOnPairs) {
  gen::Source src(404);
  for (const auto& p : gen::catalog())
    for (int i = 0; i < 300; ++i) {
      const Vec y = src.vector(2, 1e-3, 30.0), z = src.vector(2, 1e-3, 30.0);
      const Vec d = p.grad_conjugate(y) - p.grad_conjugate(z);
      EXPECT_LE(d.norm(), (y - z).norm() / p.mu() * (1 + 1e-12) + 1e-15);
      EXPECT_GE(d.dot(y - z), p.mu() * d.squaredNorm() - 1e-12);
    }
}

TEST(PotentialProperty, RangeInsideDomain) {
  gen::Source src(505);
  const auto e = eps_normalized_potential(0.3);
  const auto b = ball_moreau_potential();
  for (int i = 0; i < 300; ++i) {
    const Vec y = src.vector(4, 1e-3, 1e6);
    EXPECT_LT(e.grad_conjugate(y).norm(), 1.0);
    EXPECT_LE(b.grad_conjugate(y).norm(), 1.0 + 4e-16);
  }
}

TEST(PotentialProperty, SmallEpsApproachesNormalizedGradient) {
  const Vec y = v2(0.3, -0.2);
  double prev_gap = 1.0;
  for (double eps : {1.0, 0.1, 0.01, 1e-3, 1e-4}) {
    const double gap = 1.0 - eps_normalized_potential(eps).grad_conjugate(y).norm();
    EXPECT_LT(gap, prev_gap);
    prev_gap = gap;
  }
  EXPECT_LT(prev_gap, 1e-3);
}
