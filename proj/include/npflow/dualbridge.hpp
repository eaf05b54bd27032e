#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "npflow/certify.hpp"
#include "npflow/integrate.hpp"
#include "npflow/objectives.hpp"
#include "npflow/quadrature.hpp"
#include "npflow/refpotential.hpp"
#include "npflow/report.hpp"

namespace npflow {

/// Bregman divergence D_f(x, xbar) = f(x) - f(xbar) - <grad f(xbar), x - xbar>.
inline double bregman(const Objective& o, const Vec& x, const Vec& xbar) {
  return o.value(x) - o.value(xbar) - o.gradient(xbar).dot(x - xbar);
}

/// Mirror descent on phi* with mirror potential f:
/// z+ = grad f(grad f*(z) - gamma grad phi*(z)). grad f* is solved from a cold start.
inline Vec mirror_descent_step(const Objective& o, const ReferencePotential& p, const Vec& z,
                               double gamma, const NewtonOptions& newton = {}) {
  if (!(gamma > 0.0)) throw std::invalid_argument("mirror_descent_step: gamma must be > 0");
  const Vec x = grad_fstar(o, z, newton);
  return o.gradient(x - gamma * p.grad_conjugate(z));
}

struct DualityCheck {
  ClaimEntry entry;
  std::vector<double> residuals;  // |z^k - grad f(x^k)| for k = 0..K
};

/// Runs the preconditioned iteration from x0 and the mirror recursion from
/// z0 = grad f(x0) side by side, and checks max_k |z^k - grad f(x^k)| <= tol.
inline DualityCheck check_discrete_duality(const Objective& o, const ReferencePotential& p,
                                           const Vec& x0, double gamma, long long k_max, double tol,
                                           const NewtonOptions& newton = {}) {
  if (!o.strictly_convex || !o.supercoercive)
    throw std::invalid_argument("check_discrete_duality: objective must be strictly convex and supercoercive");
  const Trajectory primal = iterate_npgm(o, p, x0, gamma, k_max);
  if (!primal.ok()) throw NumericalError("check_discrete_duality: primal iteration diverged");

  DualityCheck out;
  detail::MarginTracker m;
  Vec z = o.gradient(x0);
  for (std::size_t k = 0; k < primal.size(); ++k) {
    if (k > 0) z = mirror_descent_step(o, p, z, gamma, newton);
    const double r = (z - o.gradient(primal.states[k])).norm();
    out.residuals.push_back(r);
    m.observe(r - tol, static_cast<double>(k));
  }
  out.entry = m.entry("md-duality", tol);
  return out;
}

/// Control system x' = u with running cost q and value V(x) = D_f(x, grad f*(target)).
/// The dual target defaults to 0, so V(x) = f(x) - f*.
struct ControlSetup {
  Objective objective;
  ReferencePotential potential;
  Vec target;

  ControlSetup(Objective o, ReferencePotential p, std::optional<Vec> dual_target = std::nullopt)
      : objective(std::move(o)), potential(std::move(p)) {
    if (!objective.strictly_convex || !objective.supercoercive)
      throw std::invalid_argument("ControlSetup: objective must be strictly convex and supercoercive");
    target = dual_target ? *dual_target : Vec::Zero(objective.dimension);
    if (target.size() != objective.dimension)
      throw std::invalid_argument("ControlSetup: target has the wrong dimension");
    reference_ = (target.isZero(0.0) && objective.minimizer) ? *objective.minimizer
                                                               : grad_fstar(objective, target);
  }

  /// grad f*(target): the primal point the value function is anchored at.
  const Vec& reference() const { return reference_; }

  double value_at(const Vec& x) const { return bregman(objective, x, reference_); }

 private:
  Vec reference_;
};

inline double control_cost_q(const ControlSetup& s, const Vec& x, const Vec& u) {
  return control_cost(s.objective, s.potential, x, u, s.target);
}

/// phi*(grad f(x)) + phi(-u) + <u, grad f(x)>, i.e. q + dV/dt for target 0.
/// Nonnegative, and zero exactly on the feedback u = -grad phi*(grad f(x)).
inline double hamiltonian_gap(const Objective& o, const ReferencePotential& p, const Vec& x,
                              const Vec& u) {
  const Vec g = o.gradient(x);
  const double ph = p.phi(-u);
  if (!std::isfinite(ph)) return kInf;
  return p.conjugate(g) + ph + u.dot(g);
}

struct ClosedLoopOptions {
  AdaptiveOptions integrator{1e-10, 1e-12, 1e-3, 1e-9, 1e12};
  double t_end = 100.0;
  double bound_tol = 1e-6;  // quadrature allowance for the running lower bound
  int mu_samples = 200;
  std::uint64_t seed = 1;
};

struct ClosedLoopResult {
  double J = 0.0;         // integral + tail
  double V0 = 0.0;
  double gap = 0.0;       // |J - V0| / max(1, V0)
  double integral = 0.0;  // integral of q over the integrated horizon
  double tail = 0.0;      // q(T) / mu-hat
  bool tail_reliable = false;
  ClaimEntry lower_bound;  // integral_0^t q >= V(x0) - V(x(t)) at every sample
  Trajectory trajectory;
};

namespace detail {

// Integrates x' = u(t, x) and accumulates q along the recorded control.
inline ClosedLoopResult run_loop(const ControlSetup& s, const Vec& x0, const VectorField& control,
                                 const ClosedLoopOptions& opt) {
  ClosedLoopResult r;
  r.trajectory = integrate_adaptive(control, x0, opt.t_end, opt.integrator);
  const Trajectory& tr = r.trajectory;
  std::vector<double> q(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) q[i] = control_cost_q(s, tr.states[i], tr.velocities[i]);
  const auto running = cumulative_quadratic(tr.times, q);
  r.V0 = s.value_at(x0);
  r.integral = running.back();

  MarginTracker m;
  const double allow = opt.bound_tol * (1.0 + std::abs(r.V0));
  for (std::size_t i = 0; i < tr.size(); ++i)
    m.observe((r.V0 - s.value_at(tr.states[i])) - running[i] - allow, tr.times[i]);
  r.lower_bound = m.entry("lower-bound", opt.bound_tol);

  r.tail_reliable = tr.terminal_reason == TerminalReason::velocity_tolerance;
  const double mu = estimate_aniso_mu_along(tr, s.objective, s.potential, opt.mu_samples, opt.seed);
  if (mu > 0.0 && std::isfinite(q.back())) {
    r.tail = q.back() / mu;
  } else {
    r.tail = 0.0;
    r.tail_reliable = r.tail_reliable && q.back() == 0.0;
  }
  r.J = r.integral + r.tail;
  r.gap = std::abs(r.J - r.V0) / std::max(1.0, r.V0);
  return r;
}

}  // namespace detail

/// Cost of the closed loop u = -grad phi*(grad f(x)) against V(x0). The horizon is
/// cut when |x'| drops below the integrator's stop_speed; the remainder is bounded
/// by q(T) / mu-hat. tail_reliable is false when the stop never fired.
inline ClosedLoopResult closed_loop_value(const ControlSetup& s, const Vec& x0,
                                          const ClosedLoopOptions& opt = {}) {
  return detail::run_loop(s, x0, field_precondflow(s.objective, s.potential), opt);
}

/// A stabilizing perturbation of the optimal feedback:
/// u(t, x) = -scale grad phi*(grad f(x)) + amplitude exp(-rate t) direction.
struct ControlPerturbation {
  double scale = 1.0;
  double amplitude = 0.0;
  double rate = 1.0;
  std::optional<Vec> direction;  // defaults to e_1

  std::string label() const {
    std::ostringstream s;
    s.precision(6);
    s << "scale=" << scale << " amp=" << amplitude << " rate=" << rate;
    return s.str();
  }
};

inline std::vector<ControlPerturbation> default_perturbations() {
  return {{1.0, 0.0, 1.0, {}}, {1.0, 0.1, 1.0, {}}, {1.0, -0.3, 2.0, {}}, {2.0, 0.0, 1.0, {}},
          {0.5, 0.0, 1.0, {}}};
}

struct AuditCase {
  ControlPerturbation perturbation;
  bool skipped = false;  // diverged or failed to stabilize
  double J = 0.0;        // integral of q over the horizon
  double V0 = 0.0;
  double V_end = 0.0;
};

struct AuditResult {
  ClaimEntry entry;
  std::vector<AuditCase> cases;
};

/// For each perturbed control, integrates the loop and checks
/// integral_0^T q >= V(x0) - V(x(T)) - tol, i.e. no stabilizing control beats the
/// value function. Divergent or non-stabilizing controls are skipped.
inline AuditResult suboptimal_control_audit(const ControlSetup& s, const Vec& x0,
                                            const std::vector<ControlPerturbation>& perturbations,
                                            const ClosedLoopOptions& opt = {}) {
  AuditResult out;
  detail::MarginTracker m;
  for (std::size_t k = 0; k < perturbations.size(); ++k) {
    const ControlPerturbation& pert = perturbations[k];
    Vec dir = pert.direction ? *pert.direction : Vec::Unit(s.objective.dimension, 0);
    if (dir.size() != s.objective.dimension)
      throw std::invalid_argument("suboptimal_control_audit: perturbation direction has the wrong dimension");
    const Objective& o = s.objective;
    const ReferencePotential& p = s.potential;
    VectorField control = [o, p, pert, dir](double t, const Vec& x) -> Vec {
      Vec u = -pert.scale * p.grad_conjugate(o.gradient(x));
      if (pert.amplitude != 0.0) u += pert.amplitude * std::exp(-pert.rate * t) * dir;
      return u;
    };
    ClosedLoopOptions run_opt = opt;
    // A time-varying input can pass through zero; only stop on slowness when the
    // control is pure feedback.
    if (pert.amplitude != 0.0) run_opt.integrator.stop_speed = 0.0;
    AuditCase c;
    c.perturbation = pert;
    const auto r = detail::run_loop(s, x0, control, run_opt);
    const Trajectory& tr = r.trajectory;
    const bool stabilized =
        tr.ok() && s.objective.gradient(tr.states.back()).norm() <= 1e-4;
    c.skipped = !stabilized;
    c.J = r.integral;
    c.V0 = r.V0;
    c.V_end = s.value_at(tr.states.back());
    if (!c.skipped) {
      const double allow = opt.bound_tol * (1.0 + std::abs(c.V0));
      m.observe((c.V0 - c.V_end) - c.J - allow, static_cast<double>(k));
    }
    out.cases.push_back(std::move(c));
  }
  out.entry = m.entry("lower-bound-audit", opt.bound_tol);
  if (!m.seen()) out.entry = detail::not_applicable("lower-bound-audit", "no stabilizing perturbation");
  return out;
}

}  // namespace npflow
