#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "npflow/dualbridge.hpp"

using namespace npflow;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Mat diag12() {
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 1;
  a(1, 1) = 2;
  return a;
}

Objective unit_1d() { return make_quadratic(Mat::Identity(1, 1), Vec::Zero(1)); }

}  // namespace

TEST(Bregman, Examples) {
  const auto h = make_quadratic(Mat::Identity(3, 3), Vec::Zero(3));
  gen::Source src(41);
  for (int i = 0; i < 20; ++i) {
    const Vec x = src.box(3, -2, 2), y = src.box(3, -2, 2);
    EXPECT_NEAR(bregman(h, x, y), 0.5 * (x - y).squaredNorm(), 1e-13);
    EXPECT_EQ(bregman(h, x, x), 0.0);
  }
  EXPECT_EQ(bregman(make_quartic(), v2(1, 0), Vec::Zero(2)), 1.0);
}

TEST(MirrorStep, Examples) {
  const auto id = make_quadratic(Mat::Identity(2, 2), Vec::Zero(2));
  EXPECT_NEAR((mirror_descent_step(id, quadratic_potential(), v2(1, 2), 0.1) - 0.9 * v2(1, 2)).norm(), 0.0, 1e-15);
  const auto q = make_quadratic(diag12(), Vec::Zero(2));
  EXPECT_NEAR((mirror_descent_step(q, quadratic_potential(), v2(1, 2), 0.1) - v2(0.9, 1.6)).norm(), 0.0, 1e-15);
  for (const auto& p : gen::catalog()) EXPECT_EQ(mirror_descent_step(q, p, Vec::Zero(2), 0.3), Vec::Zero(2));
  EXPECT_THROW(mirror_descent_step(q, quadratic_potential(), v2(1, 2), 0.0), std::invalid_argument);
}

TEST(Duality, ClosedFormQuadratic) {
  const auto q = make_quadratic(diag12(), Vec::Zero(2));
  const auto d = check_discrete_duality(q, quadratic_potential(), v2(1, 1), 0.1, 50, 1e-10);
  EXPECT_EQ(d.entry.status, ClaimStatus::pass);
  EXPECT_EQ(d.entry.claim_id, "md-duality");
  ASSERT_EQ(d.residuals.size(), 51u);
  EXPECT_EQ(d.residuals[0], 0.0);
  // Independent oracle: z^k = (I - gamma A)^k A x0
  Vec z = diag12() * v2(1, 1);
  Vec x = v2(1, 1);
  for (int k = 0; k < 50; ++k) {
    z = (Mat::Identity(2, 2) - 0.1 * diag12()) * z;
    x = x - 0.1 * diag12() * x;
  }
  EXPECT_NEAR((z - diag12() * x).norm(), 0.0, 1e-14);
}

TEST(Duality, QuarticEpsNewtonLimited) {
  NewtonOptions nt;
  nt.tol = 1e-9;
  const auto d = check_discrete_duality(make_quartic(), eps_normalized_potential(0.5), v2(1, 0.5), 0.05, 30, 1e-7, nt);
  EXPECT_EQ(d.entry.status, ClaimStatus::pass) << d.entry.worst_margin;
}

TEST(Duality, RequiresStrictConvexity) {
  EXPECT_THROW(check_discrete_duality(make_rosenbrock(2), quadratic_potential(), v2(0, 0), 0.1, 5, 1e-8),
               std::invalid_argument);
}

TEST(ControlSetup, Validation) {
  EXPECT_THROW(ControlSetup(make_rosenbrock(2), quadratic_potential()), std::invalid_argument);
  const ControlSetup s(make_quadratic(diag12(), v2(1, 2)), quadratic_potential());
  EXPECT_NEAR((s.reference() - v2(1, 1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(s.value_at(v2(0, 0)), 1.5, 1e-15);  // f(0) - f* = 0 - (-1.5)
  EXPECT_THROW(ControlSetup(make_quartic(2), quadratic_potential(), Vec::Zero(3)), std::invalid_argument);
}

TEST(ControlCost, Examples) {
  const ControlSetup s(unit_1d(), quadratic_potential());
  for (double x : {-2.0, 0.5, 3.0}) EXPECT_NEAR(control_cost_q(s, v1(x), v1(-x)), x * x, 1e-14);
  EXPECT_EQ(control_cost_q(s, v1(0.0), v1(0.0)), 0.0);
  const ControlSetup b(unit_1d(), ball_moreau_potential());
  EXPECT_TRUE(std::isinf(control_cost_q(b, v1(0.5), v1(1.5))));
}

TEST(ClosedLoop, UnitQuadratic) {
  const ControlSetup s(unit_1d(), quadratic_potential());
  const auto r = closed_loop_value(s, v1(1.0));
  EXPECT_TRUE(r.tail_reliable);
  EXPECT_NEAR(r.V0, 0.5, 1e-15);
  EXPECT_NEAR(r.J, 0.5, 1e-6);
  EXPECT_LE(r.gap, 1e-4);
  EXPECT_EQ(r.lower_bound.status, ClaimStatus::pass);
}

TEST(ClosedLoop, StartAtMinimizer) {
  const ControlSetup s(make_quadratic(diag12(), v2(1, 2)), eps_normalized_potential(0.5));
  const auto r = closed_loop_value(s, v2(1, 1));
  EXPECT_EQ(r.V0, 0.0);
  EXPECT_EQ(r.J, 0.0);
  EXPECT_EQ(r.gap, 0.0);
}

TEST(ClosedLoop, DiagEpsNormalized) {
  const ControlSetup s(make_quadratic(diag12(), Vec::Zero(2)), eps_normalized_potential(0.5));
  const auto r = closed_loop_value(s, v2(1, 1));
  EXPECT_TRUE(r.tail_reliable);
  EXPECT_NEAR(r.V0, 1.5, 1e-15);
  EXPECT_LE(r.gap, 1e-4);
}

TEST(ClosedLoop, UnreliableTailReported) {
  ClosedLoopOptions opt;
  opt.t_end = 2.0;
  const ControlSetup s(unit_1d(), quadratic_potential());
  EXPECT_FALSE(closed_loop_value(s, v1(1.0), opt).tail_reliable);
}

TEST(Audit, PerturbationsCostMore) {
  const ControlSetup s(unit_1d(), quadratic_potential());
  const std::vector<ControlPerturbation> family = {{1.0, 0.0, 1.0, {}}, {1.0, 0.1, 1.0, {}}, {2.0, 0.0, 1.0, {}}};
  const auto a = suboptimal_control_audit(s, v1(1.0), family);
  EXPECT_EQ(a.entry.claim_id, "lower-bound-audit");
  EXPECT_EQ(a.entry.status, ClaimStatus::pass);
  ASSERT_EQ(a.cases.size(), 3u);
  for (const auto& c : a.cases) EXPECT_FALSE(c.skipped);
  EXPECT_NEAR(a.cases[0].J, 0.5, 1e-6);  // unperturbed: equality
  EXPECT_GT(a.cases[1].J, 0.5 + 1e-4);   // strictly above V0
  // u = -2x: x = e^{-2t}, q = x^2/2 + 2x^2 -> J = (5/2)/4 = 0.625
  EXPECT_NEAR(a.cases[2].J, 0.625, 1e-6);
}

TEST(Audit, DestabilizingPerturbationSkipped) {
  const ControlSetup s(unit_1d(), quadratic_potential());
  // u = 3x grows without bound
  const auto a = suboptimal_control_audit(s, v1(1.0), {{-3.0, 0.0, 1.0, {}}});
  ASSERT_EQ(a.cases.size(), 1u);
  EXPECT_TRUE(a.cases[0].skipped);
  EXPECT_EQ(a.entry.status, ClaimStatus::not_applicable);
}

// ---------------------------------------------------------------------------
// Properties

TEST(DualityProperty, HamiltonianGapNonnegativeAndTightOnFeedback) {
  gen::Source src(51);
  const std::vector<Objective> objs = {make_quadratic(diag12(), v2(1, 2)), make_quartic(2)};
  for (const auto& o : objs)
    for (const auto& p : gen::catalog())
      for (int i = 0; i < 100; ++i) {
        const Vec x = src.box(2, -2, 2);
        const Vec u = src.vector(2, 1e-3, 0.999 * std::min(3.0, p.dom_radius()));
        EXPECT_GE(hamiltonian_gap(o, p, x, u), -1e-12 * (1 + std::abs(p.conjugate(o.gradient(x)))));
        const Vec fb = -p.grad_conjugate(o.gradient(x));
        const double scale = 1.0 + p.conjugate(o.gradient(x));
        EXPECT_NEAR(hamiltonian_gap(o, p, x, fb), 0.0, 1e-9 * scale) << o.name << "/" << to_string(p.family());
      }
}

TEST(DualityProperty, BregmanNonnegative) {
  gen::Source src(52);
  const std::vector<Objective> objs = {make_quadratic(src.spd(3, 0.1, 5), src.box(3, -1, 1)), make_quartic(3)};
  for (const auto& o : objs)
    for (int i = 0; i < 300; ++i) {
      const Vec x = src.box(3, -3, 3), y = src.box(3, -3, 3);
      EXPECT_GE(bregman(o, x, y), -1e-12 * (1 + std::abs(o.value(x))));
      EXPECT_GT(bregman(o, x, y), 0.0);
    }
}

TEST(DualityProperty, DualityResidualStaysAtNewtonScale) {
  gen::Source src(53);
  NewtonOptions nt;
  nt.tol = 1e-10;
  for (const auto& p : gen::catalog()) {
    const Vec x0 = src.box(2, -1.5, 1.5);
    const auto d = check_discrete_duality(make_quartic(), p, x0, 0.02, 40, 1e-6, nt);
    for (std::size_t k = 0; k < d.residuals.size(); ++k)
      EXPECT_LE(d.residuals[k], 10.0 * (k + 1) * nt.tol * 1e3) << to_string(p.family()) << " k=" << k;
  }
}
