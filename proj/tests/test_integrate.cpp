#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "npflow/integrate.hpp"

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

const VectorField decay = [](double, const Vec& x) -> Vec { return -x; };
const VectorField still = [](double, const Vec& x) -> Vec { return Vec::Zero(x.size()); };

}  // namespace

TEST(Fields, PrecondFlowExamples) {
  const auto q = make_quadratic(diag12(), Vec::Zero(2));
  EXPECT_EQ(field_precondflow(q, quadratic_potential())(0.0, v2(1, 1)), v2(-1, -2));
  const auto f = make_quadratic(Mat::Identity(1, 1), Vec::Zero(1));
  EXPECT_NEAR(field_precondflow(f, eps_normalized_potential(1.0))(0.0, v1(3.0))[0], -0.75, 1e-15);
  const auto r = make_rosenbrock(2);
  for (const auto& p : gen::catalog()) EXPECT_EQ(field_precondflow(r, p)(0.0, Vec::Ones(2)), Vec::Zero(2));
}

TEST(Fields, MirrorFlowExamples) {
  const auto q = make_quadratic(diag12(), Vec::Zero(2));
  EXPECT_EQ(field_mirrorflow(q, quadratic_potential())(0.0, v2(1, 1)), v2(-1, -2));
  const auto f = make_quadratic(Mat::Identity(1, 1), Vec::Zero(1));
  EXPECT_NEAR(field_mirrorflow(f, eps_normalized_potential(1.0))(0.0, v1(3.0))[0], -0.75, 1e-15);
  EXPECT_EQ(field_mirrorflow(q, cosh_clip_potential())(0.0, Vec::Zero(2)), Vec::Zero(2));
}

TEST(Adaptive, ExponentialOracle) {
  AdaptiveOptions opt;
  opt.rel_tol = 1e-10;
  const auto tr = integrate_adaptive(decay, v1(1.0), 1.0, opt);
  EXPECT_EQ(tr.terminal_reason, TerminalReason::horizon_reached);
  EXPECT_EQ(tr.times.back(), 1.0);
  EXPECT_NEAR(tr.states.back()[0], std::exp(-1.0), 1e-9);
}

TEST(Adaptive, DiagonalLinearOracle) {
  const auto q = make_quadratic(diag12(), Vec::Zero(2));
  const auto tr = integrate_adaptive(field_precondflow(q, quadratic_potential()), v2(1, 1), 1.0);
  EXPECT_NEAR(tr.states.back()[0], std::exp(-1.0), 1e-9);
  EXPECT_NEAR(tr.states.back()[1], std::exp(-2.0), 1e-9);
  // Dense-output samples along the way
  for (std::size_t i = 0; i < tr.size(); ++i) {
    EXPECT_NEAR(tr.states[i][0], std::exp(-tr.times[i]), 1e-9);
    EXPECT_NEAR(tr.states[i][1], std::exp(-2 * tr.times[i]), 1e-9);
  }
}

TEST(Adaptive, ZeroFieldIsConstant) {
  const auto tr = integrate_adaptive(still, v2(3, -1), 2.0);
  for (const auto& x : tr.states) EXPECT_EQ(x, v2(3, -1));
}

TEST(Adaptive, RecordGrid) {
  AdaptiveOptions opt;
  opt.record_every = 0.25;
  const auto tr = integrate_adaptive(decay, v1(1.0), 1.0, opt);
  ASSERT_EQ(tr.size(), 5u);
  for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_DOUBLE_EQ(tr.times[i], 0.25 * i);
}

TEST(Adaptive, RejectsBadArguments) {
  AdaptiveOptions opt;
  EXPECT_THROW(integrate_adaptive(decay, v1(1), 0.0, opt), std::invalid_argument);
  EXPECT_THROW(integrate_adaptive(decay, v1(1), -1.0, opt), std::invalid_argument);
  opt.rel_tol = 1e-14;
  EXPECT_THROW(integrate_adaptive(decay, v1(1), 1.0, opt), std::invalid_argument);
  opt.rel_tol = 0.1;
  EXPECT_THROW(integrate_adaptive(decay, v1(1), 1.0, opt), std::invalid_argument);
}

TEST(Adaptive, Divergence) {
  const VectorField grow = [](double, const Vec& x) -> Vec { return x.cwiseProduct(x); };
  const auto tr = integrate_adaptive(grow, v1(1.0), 2.0);  // blows up at t = 1
  EXPECT_EQ(tr.terminal_reason, TerminalReason::divergence);
  EXPECT_FALSE(tr.ok());
  EXPECT_FALSE(tr.empty());
  EXPECT_LT(tr.times.back(), 1.0);
}

TEST(Adaptive, StepFloor) {
  // Finite solution 2 - 2 sqrt(1 - t), but the field is undefined past t = 1.
  const VectorField f = [](double t, const Vec& x) -> Vec {
    return Vec::Constant(x.size(), 1.0 / std::sqrt(1.0 - t));
  };
  const auto tr = integrate_adaptive(f, v1(0.0), 2.0);
  EXPECT_EQ(tr.terminal_reason, TerminalReason::step_floor);
  EXPECT_LT(tr.times.back(), 1.0);
}

TEST(Adaptive, VelocityStop) {
  AdaptiveOptions opt;
  opt.stop_speed = 1e-6;
  const auto tr = integrate_adaptive(decay, v1(1.0), 100.0, opt);
  EXPECT_EQ(tr.terminal_reason, TerminalReason::velocity_tolerance);
  EXPECT_LE(tr.velocities.back().norm(), 1e-6);
  // Checked at accepted step ends, so the stop lands within one step of the crossing.
  EXPECT_GE(tr.times.back(), -std::log(1e-6) - 1e-6);
  EXPECT_LE(tr.times.back(), -std::log(1e-6) + 0.5);
}

TEST(Rk4, ExponentialOracleAndOrder) {
  const auto a = integrate_rk4(decay, v1(1.0), 1.0, 0.01, 0.01);
  EXPECT_NEAR(a.states.back()[0], std::exp(-1.0), 1e-9);
  const double e1 = std::abs(integrate_rk4(decay, v1(1.0), 1.0, 0.1, 0.1).states.back()[0] - std::exp(-1.0));
  const double e2 = std::abs(integrate_rk4(decay, v1(1.0), 1.0, 0.05, 0.05).states.back()[0] - std::exp(-1.0));
  EXPECT_NEAR(e1 / e2, 16.0, 1.0);
}

TEST(Rk4, ZeroFieldAndValidation) {
  const auto tr = integrate_rk4(still, v2(1, 2), 1.0, 0.1, 0.1);
  for (const auto& x : tr.states) EXPECT_EQ(x, v2(1, 2));
  EXPECT_THROW(integrate_rk4(decay, v1(1), 1.0, 0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(integrate_rk4(decay, v1(1), 1.0, 2.0, 0.1), std::invalid_argument);
}

TEST(Npgm, GeometricContraction) {
  const auto f = make_quadratic(Mat::Identity(1, 1), Vec::Zero(1));
  const auto tr = iterate_npgm(f, quadratic_potential(), v1(1.0), 0.1, 10);
  EXPECT_EQ(tr.kind, TrajectoryKind::discrete);
  EXPECT_NEAR(tr.states.back()[0], std::pow(0.9, 10), 1e-15);
  EXPECT_NEAR(tr.times.back(), 1.0, 1e-15);
}

TEST(Npgm, StationaryStart) {
  const auto r = make_rosenbrock(3);
  const auto tr = iterate_npgm(r, eps_normalized_potential(0.5), Vec::Ones(3), 0.1, 20);
  for (const auto& x : tr.states) EXPECT_EQ(x, Vec::Ones(3));
}

TEST(Npgm, StopAndValidation) {
  const auto f = make_quadratic(Mat::Identity(1, 1), Vec::Zero(1));
  const auto tr = iterate_npgm(f, quadratic_potential(), v1(1.0), 0.5, 1000, 1e-6);
  EXPECT_EQ(tr.terminal_reason, TerminalReason::velocity_tolerance);
  EXPECT_LT(tr.size(), 100u);
  EXPECT_THROW(iterate_npgm(f, quadratic_potential(), v1(1.0), 0.0, 10), std::invalid_argument);
  EXPECT_THROW(iterate_npgm(f, quadratic_potential(), v1(1.0), 0.1, 0), std::invalid_argument);
  const auto big = iterate_npgm(f, quadratic_potential(), v1(1.0), 1e3, 100);
  EXPECT_EQ(big.terminal_reason, TerminalReason::divergence);
}

TEST(Npgm, EulerConsistencyEpsNormalized) {
  const auto f = make_quadratic(diag12(), Vec::Zero(2));
  const auto p = eps_normalized_potential(0.5);
  double prev = kInf;
  for (double g : {0.1, 0.05, 0.025, 0.0125}) {
    const auto it = iterate_npgm(f, p, v2(1, 1), g, std::llround(2.0 / g));
    AdaptiveOptions opt;
    opt.record_every = g;
    const auto fl = integrate_adaptive(field_precondflow(f, p), v2(1, 1), 2.0, opt);
    ASSERT_EQ(it.size(), fl.size());
    double gap = 0.0;
    for (std::size_t k = 0; k < it.size(); ++k) gap = std::max(gap, (it.states[k] - fl.states[k]).norm());
    EXPECT_LT(gap, prev);
    if (std::isfinite(prev)) EXPECT_NEAR(prev / gap, 2.0, 0.4);
    prev = gap;
  }
}

// ---------------------------------------------------------------------------
// Properties

TEST(IntegrateProperty, TrajectoryInvariants) {
  gen::Source src(21);
  const std::vector<Objective> objs = {make_quadratic(diag12(), v2(1, 2)), make_quartic(2), make_rosenbrock(2)};
  for (const auto& o : objs)
    for (const auto& p : gen::catalog()) {
      const Vec x0 = src.box(2, -1.5, 1.5);
      const VectorField f = field_precondflow(o, p);
      AdaptiveOptions opt;
      opt.record_every = 0.05;
      const auto tr = integrate_adaptive(f, x0, 3.0, opt);
      ASSERT_TRUE(tr.ok()) << o.name << "/" << to_string(p.family());
      for (std::size_t i = 0; i < tr.size(); ++i) {
        if (i > 0) EXPECT_GT(tr.times[i], tr.times[i - 1]);
        EXPECT_TRUE(tr.states[i].allFinite());
        EXPECT_LE((tr.velocities[i] - f(tr.times[i], tr.states[i])).norm(), 1e-12);
        if (i > 0) {
          const double fi = o.value(tr.states[i]), fp = o.value(tr.states[i - 1]);
          EXPECT_LE(fi - fp, 10 * opt.rel_tol * (1 + std::abs(fi))) << o.name << "/" << to_string(p.family());
        }
      }
    }
}

TEST(IntegrateProperty, AdaptiveAgreesWithRk4) {
  gen::Source src(22);
  const std::vector<Objective> objs = {make_quadratic(diag12(), v2(1, 2)), make_quartic(2), make_rosenbrock(2)};
  for (const auto& o : objs)
    for (const auto& p : gen::catalog()) {
      const Vec x0 = src.box(2, -1.0, 1.0);
      const VectorField f = field_precondflow(o, p);
      AdaptiveOptions opt;
      opt.record_every = 0.1;
      opt.rel_tol = 1e-10;
      opt.abs_tol = 1e-12;
      const auto a = integrate_adaptive(f, x0, 2.0, opt);
      // The Rosenbrock valley is stiff; RK4 error there is ~1e-7 at h = 2e-4 and
      // falls 16x per halving, so the reference step must be much smaller.
      const double h = o.name == "rosenbrock" ? 2.5e-5 : 1e-3;
      const auto b = integrate_rk4(f, x0, 2.0, h, 0.1);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_LE((a.states[i] - b.states[i]).norm(), 100 * std::max(opt.rel_tol, opt.abs_tol) * (1 + a.states[i].norm()))
            << o.name << "/" << to_string(p.family()) << " t=" << a.times[i];
    }
}

TEST(IntegrateProperty, ClosedFormLinearFlows) {
  gen::Source src(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = src.integer(1, 4);
    Vec lam(n);
    for (int i = 0; i < n; ++i) lam[i] = src.uniform(0.2, 3.0);
    const auto o = make_quadratic(Mat(lam.asDiagonal()), Vec::Zero(n));
    const Vec x0 = src.box(n, -2, 2);
    const auto tr = integrate_adaptive(field_precondflow(o, quadratic_potential()), x0, 2.0);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const Vec exact = x0.cwiseProduct((-lam * tr.times[i]).array().exp().matrix());
      EXPECT_LE((tr.states[i] - exact).norm(), 1e-8);
    }
  }
}
