#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "npflow/objectives.hpp"
#include "npflow/refpotential.hpp"
#include "npflow/types.hpp"

namespace npflow {

enum class TerminalReason { horizon_reached, velocity_tolerance, divergence, step_floor };

inline std::string_view to_string(TerminalReason r) {
  switch (r) {
    case TerminalReason::horizon_reached: return "horizon-reached";
    case TerminalReason::velocity_tolerance: return "velocity-tolerance";
    case TerminalReason::divergence: return "divergence";
    case TerminalReason::step_floor: return "step-floor";
  }
  return "unknown";
}

enum class TrajectoryKind { flow, discrete };

/// Sampled solution of a flow, or an iterate sequence with times = gamma * k.
/// velocities[i] is the field evaluated at (times[i], states[i]).
struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::flow;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> velocities;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  TerminalReason terminal_reason = TerminalReason::horizon_reached;
  double rel_tol = 0.0;  // 0 for fixed-step and discrete runs
  double abs_tol = 0.0;
  double step = 0.0;  // fixed step h, or gamma for discrete runs

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  bool ok() const {
    return terminal_reason == TerminalReason::horizon_reached ||
           terminal_reason == TerminalReason::velocity_tolerance;
  }

  std::string id() const {
    Fnv1a h;
    h.update(kind == TrajectoryKind::flow ? "flow" : "discrete");
    for (std::size_t i = 0; i < times.size(); ++i) {
      h.update(times[i]);
      for (Eigen::Index j = 0; j < states[i].size(); ++j) h.update(states[i][j]);
    }
    return h.hex();
  }

  void push(double t, Vec x, Vec v) {
    times.push_back(t);
    states.push_back(std::move(x));
    velocities.push_back(std::move(v));
  }
};

// ---------------------------------------------------------------------------
// Vector fields

/// x' = -grad phi*(grad f(x)).
inline VectorField field_precondflow(const Objective& o, const ReferencePotential& p) {
  return [o, p](double, const Vec& x) -> Vec { return -p.grad_conjugate(o.gradient(x)); };
}

/// z' = -grad f(grad phi*(z)).
inline VectorField field_mirrorflow(const Objective& o, const ReferencePotential& p) {
  return [o, p](double, const Vec& z) -> Vec { return -o.gradient(p.grad_conjugate(z)); };
}

// ---------------------------------------------------------------------------
// Adaptive Dormand-Prince 5(4)

struct AdaptiveOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double record_every = 1e-2;
  double stop_speed = 0.0;  // > 0: stop once |x'| <= stop_speed
  double divergence_norm = 1e12;
};

namespace detail {

struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  // 4th-order continuous extension
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

inline double scaled_norm(const Vec& e, const Vec& x0, const Vec& x1, double atol, double rtol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double sk = atol + rtol * std::max(std::abs(x0[i]), std::abs(x1[i]));
    const double q = e[i] / sk;
    acc += q * q;
  }
  return e.size() == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(e.size()));
}

inline double initial_step(const VectorField& f, const Vec& x0, const Vec& f0, double t_end,
                           double atol, double rtol) {
  double dnf = 0.0, dny = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double sk = atol + rtol * std::abs(x0[i]);
    dnf += (f0[i] / sk) * (f0[i] / sk);
    dny += (x0[i] / sk) * (x0[i] / sk);
  }
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
  h = std::min(h, t_end);
  const Vec x1 = x0 + h * f0;
  const Vec f1 = f(h, x1);
  double der2 = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    const double sk = atol + rtol * std::abs(x0[i]);
    der2 += ((f1[i] - f0[i]) / sk) * ((f1[i] - f0[i]) / sk);
  }
  der2 = std::sqrt(der2) / h;
  const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
  return std::min({100.0 * h, h1, t_end});
}

inline bool diverged(const Vec& x, double limit) { return !x.allFinite() || x.norm() > limit; }

}  // namespace detail

/// Embedded 5(4) Dormand-Prince pair with PI step control (safety 0.9, step ratio
/// clamped to [0.2, 5]). Samples are taken on the grid k * record_every from the
/// 4th-order dense output, plus the final time.
inline Trajectory integrate_adaptive(const VectorField& f, const Vec& x0, double t_end,
                                     const AdaptiveOptions& opt = {}) {
  if (!(t_end > 0.0) || !std::isfinite(t_end))
    throw std::invalid_argument("integrate_adaptive: t_end must be positive and finite");
  if (!(opt.rel_tol >= 1e-13 && opt.rel_tol <= 1e-2) || !(opt.abs_tol >= 1e-13 && opt.abs_tol <= 1e-2))
    throw std::invalid_argument("integrate_adaptive: tolerances must lie in [1e-13, 1e-2]");
  if (!(opt.record_every > 0.0))
    throw std::invalid_argument("integrate_adaptive: record_every must be > 0");

  using D = detail::Dopri5;
  constexpr double kSafety = 0.9, kBeta = 0.04, kExpo1 = 0.2 - kBeta * 0.75;
  constexpr double kMaxShrink = 0.2, kMaxGrow = 5.0;

  Trajectory tr;
  tr.kind = TrajectoryKind::flow;
  tr.rel_tol = opt.rel_tol;
  tr.abs_tol = opt.abs_tol;

  Vec x = x0;
  double t = 0.0;
  Vec k1 = f(t, x);
  tr.push(t, x, k1);
  if (detail::diverged(x, opt.divergence_norm) || !k1.allFinite()) {
    tr.terminal_reason = TerminalReason::divergence;
    return tr;
  }
  if (opt.stop_speed > 0.0 && k1.norm() <= opt.stop_speed) {
    tr.terminal_reason = TerminalReason::velocity_tolerance;
    return tr;
  }

  const double h_floor = 1e-14 * t_end;
  double h = detail::initial_step(f, x, k1, t_end, opt.abs_tol, opt.rel_tol);
  double facold = 1e-4;
  long long next_grid = 1;

  while (true) {
    bool last = false;
    if (t + h >= t_end * (1.0 - 1e-14)) {
      h = t_end - t;
      last = true;
    }
    const Vec k2 = f(t + D::c2 * h, x + h * D::a21 * k1);
    const Vec k3 = f(t + D::c3 * h, x + h * (D::a31 * k1 + D::a32 * k2));
    const Vec k4 = f(t + D::c4 * h, x + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
    const Vec k5 = f(t + D::c5 * h,
                     x + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
    const Vec k6 = f(t + h, x + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 +
                                     D::a65 * k5));
    const Vec x_new =
        x + h * (D::a71 * k1 + D::a73 * k3 + D::a74 * k4 + D::a75 * k5 + D::a76 * k6);
    const Vec k7 = f(t + h, x_new);
    const Vec e = h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);
    const double err = detail::scaled_norm(e, x, x_new, opt.abs_tol, opt.rel_tol);

    if (!std::isfinite(err) || !x_new.allFinite()) {
      ++tr.rejected_steps;
      h *= kMaxShrink;
      if (h < h_floor) {
        tr.terminal_reason = TerminalReason::step_floor;
        return tr;
      }
      continue;
    }

    const double fac11 = std::pow(err, kExpo1);
    if (err <= 1.0) {
      ++tr.accepted_steps;
      const double t_new = last ? t_end : t + h;

      const Vec rc2 = x_new - x;
      const Vec rc3 = h * k1 - rc2;
      const Vec rc4 = rc2 - h * k7 - rc3;
      const Vec rc5 = h * (D::d1 * k1 + D::d3 * k3 + D::d4 * k4 + D::d5 * k5 + D::d6 * k6 +
                           D::d7 * k7);
      for (double tg = static_cast<double>(next_grid) * opt.record_every;
           tg <= t_new && tg < t_end * (1.0 - 1e-12);
           tg = static_cast<double>(++next_grid) * opt.record_every) {
        const double theta = (tg - t) / h;
        const double theta1 = 1.0 - theta;
        Vec xs = x + theta * (rc2 + theta1 * (rc3 + theta * (rc4 + theta1 * rc5)));
        Vec vs = f(tg, xs);
        tr.push(tg, std::move(xs), std::move(vs));
      }

      t = t_new;
      x = x_new;
      k1 = k7;

      if (detail::diverged(x, opt.divergence_norm)) {
        tr.terminal_reason = TerminalReason::divergence;
        return tr;
      }
      const bool slow = opt.stop_speed > 0.0 && k1.norm() <= opt.stop_speed;
      if (slow || last) {
        if (t > tr.times.back()) tr.push(t, x, k1);
        tr.terminal_reason = slow ? TerminalReason::velocity_tolerance
                                  : TerminalReason::horizon_reached;
        return tr;
      }

      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::clamp(fac / kSafety, 1.0 / kMaxGrow, 1.0 / kMaxShrink);
      h /= fac;
      facold = std::max(err, 1e-4);
    } else {
      ++tr.rejected_steps;
      h /= std::min(1.0 / kMaxShrink, fac11 / kSafety);
    }
    if (h < h_floor) {
      tr.terminal_reason = TerminalReason::step_floor;
      return tr;
    }
  }
}

// ---------------------------------------------------------------------------
// Fixed-step RK4

/// Classical 4th-order Runge-Kutta with step h (the last step is shortened to land
/// on t_end). Records every round(record_every / h) steps and at t_end.
inline Trajectory integrate_rk4(const VectorField& f, const Vec& x0, double t_end, double h,
                                double record_every, double divergence_norm = 1e12) {
  if (!(t_end > 0.0) || !std::isfinite(t_end))
    throw std::invalid_argument("integrate_rk4: t_end must be positive and finite");
  if (!(h > 0.0) || h > t_end) throw std::invalid_argument("integrate_rk4: need 0 < h <= t_end");
  if (!(record_every > 0.0)) throw std::invalid_argument("integrate_rk4: record_every must be > 0");

  Trajectory tr;
  tr.kind = TrajectoryKind::flow;
  tr.step = h;
  const long long n = static_cast<long long>(std::ceil(t_end / h - 1e-9));
  const long long stride = std::max<long long>(1, std::llround(record_every / h));

  Vec x = x0;
  double t = 0.0;
  tr.push(t, x, f(t, x));
  for (long long i = 1; i <= n; ++i) {
    const double t_next = i == n ? t_end : std::min(static_cast<double>(i) * h, t_end);
    const double hh = t_next - t;
    const Vec s1 = f(t, x);
    const Vec s2 = f(t + 0.5 * hh, x + 0.5 * hh * s1);
    const Vec s3 = f(t + 0.5 * hh, x + 0.5 * hh * s2);
    const Vec s4 = f(t + hh, x + hh * s3);
    x += (hh / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
    t = t_next;
    ++tr.accepted_steps;
    if (detail::diverged(x, divergence_norm)) {
      tr.terminal_reason = TerminalReason::divergence;
      return tr;
    }
    if (i % stride == 0 || i == n) tr.push(t, x, f(t, x));
  }
  tr.terminal_reason = TerminalReason::horizon_reached;
  return tr;
}

// ---------------------------------------------------------------------------
// Discrete preconditioned gradient iteration

/// x+ = x - gamma grad phi*(grad f(x)). Stops early when |grad f(x)| <= stop_grad
/// (stop_grad > 0). Times are gamma * k so iterates line up with the flow.
inline Trajectory iterate_npgm(const Objective& o, const ReferencePotential& p, const Vec& x0,
                               double gamma, long long k_max, double stop_grad = 0.0,
                               double divergence_norm = 1e12) {
  if (!(gamma > 0.0)) throw std::invalid_argument("iterate_npgm: gamma must be > 0");
  if (k_max < 1) throw std::invalid_argument("iterate_npgm: k_max must be >= 1");

  Trajectory tr;
  tr.kind = TrajectoryKind::discrete;
  tr.step = gamma;
  Vec x = x0;
  Vec g = o.gradient(x);
  Vec v = -p.grad_conjugate(g);
  tr.push(0.0, x, v);
  for (long long k = 0; k < k_max; ++k) {
    if (stop_grad > 0.0 && g.norm() <= stop_grad) {
      tr.terminal_reason = TerminalReason::velocity_tolerance;
      return tr;
    }
    x += gamma * v;
    ++tr.accepted_steps;
    if (detail::diverged(x, divergence_norm)) {
      tr.terminal_reason = TerminalReason::divergence;
      return tr;
    }
    g = o.gradient(x);
    v = -p.grad_conjugate(g);
    tr.push(gamma * static_cast<double>(k + 1), x, v);
  }
  tr.terminal_reason = TerminalReason::horizon_reached;
  return tr;
}

}  // namespace npflow
