#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "npflow/integrate.hpp"
#include "npflow/objectives.hpp"
#include "npflow/quadrature.hpp"
#include "npflow/refpotential.hpp"
#include "npflow/report.hpp"

namespace npflow {

/// Stable claim ids, in report order.
inline constexpr std::array<std::string_view, 11> kFlowClaims = {
    "decrease-identity", "conj-grad-decrease", "V-monotone", "rate-1-over-t",
    "fejer-grad",        "fejer-dist",         "gap-rate",   "exp-rate",
    "energy-identity",   "l2-bound",           "velocity-vanishes"};

/// Scalar channels derived from a trajectory. Entries that need unknown ground
/// truth (f*, minimizer, a scalar profile) are NaN.
struct Channels {
  std::vector<double> f;
  std::vector<double> f_gap;
  std::vector<double> conj_grad;  // phi*(grad f(x))
  std::vector<double> V;          // t phi*(grad f(x)) + f(x)
  std::vector<double> W;          // t c0 (f - f*) + |x - x*|^2 / 2
  std::vector<double> dist;       // |x - x*|
  std::vector<double> grad_norm;
  std::vector<double> xdot_norm;
  std::vector<double> pairing;    // <grad f, grad phi*(grad f)>
  std::vector<double> decrease_rhs;  // -(phi*(grad f) + phi(grad phi*(grad f)))
  std::vector<double> q;          // running cost with the recorded velocity as control
  std::vector<double> q_running;
};

/// Control cost q(x, u) = phi*(grad f(x)) + phi(-u) + <u, target>. +inf when -u is
/// outside dom phi.
inline double control_cost(const Objective& o, const ReferencePotential& p, const Vec& x,
                           const Vec& u, const Vec& target) {
  const double pu = p.phi(-u);
  if (!std::isfinite(pu)) return kInf;
  return p.conjugate(o.gradient(x)) + pu + u.dot(target);
}

inline Channels compute_channels(const Trajectory& tr, const Objective& o,
                                 const ReferencePotential& p) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = tr.size();
  Channels c;
  for (auto* v : {&c.f, &c.f_gap, &c.conj_grad, &c.V, &c.W, &c.dist, &c.grad_norm, &c.xdot_norm,
                  &c.pairing, &c.decrease_rhs, &c.q})
    v->resize(n);
  if (n == 0) return c;

  double c0 = kNaN;
  if (p.is_isotropic()) {
    const double g0 = o.gradient(tr.states.front()).norm();
    c0 = g0 > 0.0 ? p.profile().dhstar(g0) / g0 : 0.0;
  }
  const Vec zero = Vec::Zero(tr.states.front().size());
  for (std::size_t i = 0; i < n; ++i) {
    const Vec& x = tr.states[i];
    const Vec g = o.gradient(x);
    const Vec pg = p.grad_conjugate(g);
    const double t = tr.times[i];
    c.f[i] = o.value(x);
    c.f_gap[i] = o.f_star ? c.f[i] - *o.f_star : kNaN;
    c.conj_grad[i] = p.conjugate(g);
    c.V[i] = t * c.conj_grad[i] + c.f[i];
    c.dist[i] = o.minimizer ? (x - *o.minimizer).norm() : kNaN;
    c.W[i] = t * c0 * c.f_gap[i] + 0.5 * c.dist[i] * c.dist[i];
    c.grad_norm[i] = g.norm();
    c.xdot_norm[i] = tr.velocities[i].norm();
    c.pairing[i] = g.dot(pg);
    c.decrease_rhs[i] = -(c.conj_grad[i] + p.phi(pg));
    c.q[i] = control_cost(o, p, x, tr.velocities[i], zero);
  }
  c.q_running = cumulative_quadratic(tr.times, c.q);
  return c;
}

struct CertifyOptions {
  /// Base of the monotonicity slack; defaults to the trajectory's rel_tol, or
  /// 1e-12 when it has none.
  std::optional<double> rel_tol;
  double mono_factor = 10.0;
  double decrease_tol = 1e-5;
  double energy_rel_tol = 1e-6;
  double l2_slack = 1e-8;
  double velocity_threshold = 1e-6;
  double exp_slack = 1e-6;
  /// Gradient-dominance constant for exp-rate; estimated when absent.
  std::optional<double> mu;
  int mu_samples = 400;
  std::uint64_t seed = 1;
  /// Subset of claim ids to run; all when absent.
  std::optional<std::vector<std::string>> checks;
};

namespace detail {

inline double mono_base(const Trajectory& tr, const CertifyOptions& opt) {
  if (opt.rel_tol) return *opt.rel_tol;
  return tr.rel_tol > 0.0 ? tr.rel_tol : 1e-12;
}

// Scans a channel that must be nonincreasing; slack 10 rel_tol (1 + |value|).
inline ClaimEntry nonincreasing(std::string id, const std::vector<double>& times,
                                const std::vector<double>& ch, double slack_coeff) {
  MarginTracker m;
  for (std::size_t i = 1; i < ch.size(); ++i) {
    const double slack = slack_coeff * (1.0 + std::max(std::abs(ch[i]), std::abs(ch[i - 1])));
    m.observe(ch[i] - ch[i - 1] - slack, times[i]);
  }
  return m.entry(std::move(id), slack_coeff);
}

inline bool is_flow(const Trajectory& tr) { return tr.kind == TrajectoryKind::flow; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual claims

/// d/dt f(x(t)) = -[phi*(grad f) + phi(grad phi*(grad f))]. The slope of the
/// recorded f channel uses five-point stencils on uniformly spaced samples.
/// Discrete runs compare the forward slope, allowing for the second-order
/// Taylor term gamma <v, H v>, and are skipped for gamma > 0.01.
inline ClaimEntry check_decrease_identity(const Trajectory& tr, const Objective& o,
                                          const ReferencePotential& p, double tol = 1e-5) {
  const std::string id = "decrease-identity";
  const Channels ch = compute_channels(tr, o, p);
  const auto& t = tr.times;
  detail::MarginTracker m;

  if (!detail::is_flow(tr)) {
    if (tr.step > 0.01) return detail::not_applicable(id, "discrete step too coarse for a slope test");
    for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
      const double slope = (ch.f[k + 1] - ch.f[k]) / (t[k + 1] - t[k]);
      const Vec& v = tr.velocities[k];
      const double curv = std::max(std::abs(v.dot(o.hessian_vector(tr.states[k], v))),
                                   std::abs(v.dot(o.hessian_vector(tr.states[k + 1], v))));
      const double allowed = tol * (1.0 + std::abs(ch.decrease_rhs[k])) + tr.step * curv;
      m.observe(std::abs(slope - ch.decrease_rhs[k]) - allowed, t[k]);
    }
  } else {
    // Central, forward and backward five-point slopes; the identity is only
    // contradicted when all of them disagree. An isolated kink in the field
    // (ball-moreau at |grad f| = 1) spoils at most the windows straddling it.
    const std::size_t n = tr.size();
    auto uniform = [&](std::size_t lo, double dt) {
      for (std::size_t j = lo; j < lo + 4; ++j)
        if (std::abs((t[j + 1] - t[j]) - dt) > 1e-9 * dt) return false;
      return true;
    };
    const auto& f = ch.f;
    for (std::size_t i = 0; i < n; ++i) {
      double best = kInf;
      if (i >= 2 && i + 2 < n) {
        const double dt = t[i + 1] - t[i];
        if (uniform(i - 2, dt))
          best = std::min(best, std::abs((-f[i + 2] + 8 * f[i + 1] - 8 * f[i - 1] + f[i - 2]) / (12 * dt) -
                                         ch.decrease_rhs[i]));
      }
      if (i + 4 < n) {
        const double dt = t[i + 1] - t[i];
        if (uniform(i, dt))
          best = std::min(best, std::abs((-25 * f[i] + 48 * f[i + 1] - 36 * f[i + 2] + 16 * f[i + 3] - 3 * f[i + 4]) /
                                             (12 * dt) -
                                         ch.decrease_rhs[i]));
      }
      if (i >= 4) {
        const double dt = t[i] - t[i - 1];
        if (uniform(i - 4, dt))
          best = std::min(best, std::abs((25 * f[i] - 48 * f[i - 1] + 36 * f[i - 2] - 16 * f[i - 3] + 3 * f[i - 4]) /
                                             (12 * dt) -
                                         ch.decrease_rhs[i]));
      }
      if (best < kInf) m.observe(best - tol * (1.0 + std::abs(ch.decrease_rhs[i])), t[i]);
    }
  }
  if (!m.seen()) return detail::not_applicable(id, "too few uniformly spaced samples");
  return m.entry(id, tol);
}

/// phi*(grad f(x(t))) is nonincreasing. Needs convex f.
inline ClaimEntry check_conj_gradient_decrease(const Trajectory& tr, const Objective& o,
                                               const ReferencePotential& p,
                                               const CertifyOptions& opt = {}) {
  const std::string id = "conj-grad-decrease";
  if (!o.convex) return detail::not_applicable(id, "objective is not convex");
  if (!detail::is_flow(tr)) return detail::not_applicable(id, "claim concerns the flow");
  const Channels ch = compute_channels(tr, o, p);
  return detail::nonincreasing(id, tr.times, ch.conj_grad, opt.mono_factor * detail::mono_base(tr, opt));
}

/// V(t) = t phi*(grad f) + f nonincreasing ("V-monotone"), and
/// phi*(grad f(x(t))) <= (f(x0) - f*) / t for t > 0 ("rate-1-over-t").
inline std::array<ClaimEntry, 2> check_V_monotone_and_rate(const Trajectory& tr, const Objective& o,
                                                           const ReferencePotential& p,
                                                           const CertifyOptions& opt = {}) {
  std::array<ClaimEntry, 2> out;
  if (!o.convex || !o.f_star) {
    const char* why = !o.convex ? "objective is not convex" : "f* unknown";
    out[0] = detail::not_applicable("V-monotone", why);
    out[1] = detail::not_applicable("rate-1-over-t", why);
    return out;
  }
  const Channels ch = compute_channels(tr, o, p);
  const double coeff = opt.mono_factor * detail::mono_base(tr, opt);
  out[0] = detail::is_flow(tr) ? detail::nonincreasing("V-monotone", tr.times, ch.V, coeff)
                               : detail::not_applicable("V-monotone", "claim concerns the flow");

  detail::MarginTracker m;
  const double gap0 = ch.f_gap.front();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.times[i];
    if (!(t > 0.0)) continue;
    const double bound = gap0 / t;
    m.observe(ch.conj_grad[i] - bound - coeff * (1.0 + std::abs(bound)), t);
  }
  out[1] = m.entry("rate-1-over-t", coeff);
  return out;
}

/// |grad f(x(t))| and |x(t) - x*| nonincreasing ("fejer-grad", "fejer-dist").
/// Needs convex f, a known minimizer and an isotropic potential.
inline std::array<ClaimEntry, 2> check_fejer(const Trajectory& tr, const Objective& o,
                                             const ReferencePotential& p,
                                             const CertifyOptions& opt = {}) {
  std::array<ClaimEntry, 2> out;
  const char* why = !o.convex            ? "objective is not convex"
                    : !o.minimizer        ? "minimizer unknown"
                    : !p.is_isotropic()   ? "potential is not isotropic"
                    : !detail::is_flow(tr) ? "claim concerns the flow"
                                          : nullptr;
  if (why) {
    out[0] = detail::not_applicable("fejer-grad", why);
    out[1] = detail::not_applicable("fejer-dist", why);
    return out;
  }
  const Channels ch = compute_channels(tr, o, p);
  const double coeff = opt.mono_factor * detail::mono_base(tr, opt);
  out[0] = detail::nonincreasing("fejer-grad", tr.times, ch.grad_norm, coeff);
  out[1] = detail::nonincreasing("fejer-dist", tr.times, ch.dist, coeff);
  return out;
}

/// f(x(t)) - f* <= |grad f(x0)| |x0 - x*|^2 / ((h*)'(|grad f(x0)|) t). Needs convex f,
/// a known minimizer and an isotropic potential with (h*)'(r)/r nonincreasing.
inline ClaimEntry check_gap_rate(const Trajectory& tr, const Objective& o,
                                 const ReferencePotential& p, const CertifyOptions& opt = {}) {
  const std::string id = "gap-rate";
  if (!o.convex) return detail::not_applicable(id, "objective is not convex");
  if (!o.minimizer || !o.f_star) return detail::not_applicable(id, "minimizer unknown");
  if (!p.is_isotropic() || !p.ratio_nonincreasing())
    return detail::not_applicable(id, "(h*)'(r)/r is not nonincreasing");
  const Channels ch = compute_channels(tr, o, p);
  const Vec& x0 = tr.states.front();
  const double g0 = o.gradient(x0).norm();
  const double d0 = (x0 - *o.minimizer).squaredNorm();
  // grad f(x0) = 0 means x0 already minimizes a convex f
  const double coeff = g0 > 0.0 ? g0 * d0 / p.profile().dhstar(g0) : 0.0;
  const double slack = opt.mono_factor * detail::mono_base(tr, opt);
  detail::MarginTracker m;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.times[i];
    if (!(t > 0.0)) continue;
    const double bound = coeff / t;
    m.observe(ch.f_gap[i] - bound - slack * (1.0 + std::abs(bound)), t);
  }
  return m.entry(id, slack);
}

/// mu-hat = min over points of phi(grad phi*(grad f(x))) / (f(x) - f*), skipping
/// points with f(x) - f* < 1e-12. Throws when every point is degenerate.
inline double estimate_aniso_mu(const Objective& o, const ReferencePotential& p,
                                const std::vector<Vec>& points) {
  if (!o.f_star) throw std::invalid_argument("estimate_aniso_mu: f* unknown");
  double best = kInf;
  for (const auto& x : points) {
    const double gap = o.value(x) - *o.f_star;
    if (gap < 1e-12) continue;
    const double num = p.phi(p.grad_conjugate(o.gradient(x)));
    best = std::min(best, std::max(0.0, num / gap));
  }
  if (!std::isfinite(best))
    throw std::invalid_argument("estimate_aniso_mu: all sample points are degenerate");
  return best;
}

struct AnisoSampleSpec {
  int count = 400;
  Vec box_lo;
  Vec box_hi;
  double level = kInf;  // keep points with f(x) <= level
  std::uint64_t seed = 1;
  int max_attempts_factor = 1000;
};

/// Rejection-samples the sublevel set {f <= level} inside a box, then estimates mu-hat.
inline double estimate_aniso_mu(const Objective& o, const ReferencePotential& p,
                                const AnisoSampleSpec& spec) {
  if (spec.box_lo.size() != o.dimension || spec.box_hi.size() != o.dimension)
    throw std::invalid_argument("estimate_aniso_mu: box has the wrong dimension");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec> pts;
  const long long max_attempts = static_cast<long long>(spec.count) * spec.max_attempts_factor;
  for (long long a = 0; a < max_attempts && static_cast<int>(pts.size()) < spec.count; ++a) {
    Vec x(o.dimension);
    for (int j = 0; j < o.dimension; ++j)
      x[j] = spec.box_lo[j] + (spec.box_hi[j] - spec.box_lo[j]) * unit(rng);
    if (o.value(x) <= spec.level) pts.push_back(std::move(x));
  }
  return estimate_aniso_mu(o, p, pts);
}

/// mu-hat over the region a trajectory visits: its recorded states plus samples
/// of {f <= f(x0)} in their bounding box. Returns 0 when nothing is informative.
inline double estimate_aniso_mu_along(const Trajectory& tr, const Objective& o,
                                      const ReferencePotential& p, int samples, std::uint64_t seed) {
  if (!o.f_star || tr.empty()) return 0.0;
  Vec lo = tr.states.front(), hi = tr.states.front();
  for (const auto& x : tr.states) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  std::vector<Vec> pts = tr.states;
  if (samples > 0 && (hi - lo).maxCoeff() > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double level = o.value(tr.states.front());
    for (long long a = 0, kept = 0; a < 1000LL * samples && kept < samples; ++a) {
      Vec x = lo + (hi - lo).cwiseProduct(Vec::NullaryExpr(lo.size(), [&] { return unit(rng); }));
      if (o.value(x) <= level) {
        pts.push_back(std::move(x));
        ++kept;
      }
    }
  }
  try {
    return estimate_aniso_mu(o, p, pts);
  } catch (const std::invalid_argument&) {
    return 0.0;
  }
}

/// f(x(t)) - f* <= exp(-mu t) (f(x0) - f*) (1 + slack), slack = exp_slack plus
/// 10 rel_tol, with an absolute floor at the rounding level of f.
inline ClaimEntry check_exponential_rate(const Trajectory& tr, const Objective& o,
                                         const ReferencePotential& p, double mu,
                                         const CertifyOptions& opt = {}) {
  const std::string id = "exp-rate";
  if (!o.f_star) return detail::not_applicable(id, "f* unknown");
  if (!(mu >= 0.0)) throw std::invalid_argument("check_exponential_rate: mu must be >= 0");
  const Channels ch = compute_channels(tr, o, p);
  const double slack = opt.exp_slack + opt.mono_factor * detail::mono_base(tr, opt);
  const double gap0 = ch.f_gap.front();
  detail::MarginTracker m;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double bound = std::exp(-mu * tr.times[i]) * gap0 * (1.0 + slack);
    const double floor = 8.0 * std::numeric_limits<double>::epsilon() *
                         (std::abs(ch.f[i]) + std::abs(*o.f_star));
    m.observe(ch.f_gap[i] - bound - floor, tr.times[i]);
  }
  ClaimEntry e = m.entry(id, slack);
  std::ostringstream note;
  note.precision(17);
  note << "mu=" << mu;
  e.note = note.str();
  return e;
}

/// Trapezoid integral of <grad f, grad phi*(grad f)> over [0, t] equals
/// f(x0) - f(x(t)) at every sample, to energy_rel_tol relative.
inline ClaimEntry check_energy_identity(const Trajectory& tr, const Objective& o,
                                        const ReferencePotential& p, const CertifyOptions& opt = {}) {
  const std::string id = "energy-identity";
  if (!detail::is_flow(tr)) return detail::not_applicable(id, "claim concerns the flow");
  const Channels ch = compute_channels(tr, o, p);
  const auto integral = cumulative_trapezoid(tr.times, ch.pairing);
  detail::MarginTracker m;
  for (std::size_t i = 1; i < tr.size(); ++i) {
    const double drop = ch.f.front() - ch.f[i];
    m.observe(std::abs(integral[i] - drop) - opt.energy_rel_tol * std::abs(drop) - 1e-14,
              tr.times[i]);
  }
  return m.entry(id, opt.energy_rel_tol);
}

/// Integral of |x'|^2 over the horizon <= (f(x0) - f*) / mu_phi + l2_slack.
inline ClaimEntry check_l2_bound(const Trajectory& tr, const Objective& o,
                                 const ReferencePotential& p, const CertifyOptions& opt = {}) {
  const std::string id = "l2-bound";
  if (!detail::is_flow(tr)) return detail::not_applicable(id, "claim concerns the flow");
  if (!o.f_star) return detail::not_applicable(id, "f* unknown");
  std::vector<double> speed2(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) speed2[i] = tr.velocities[i].squaredNorm();
  const double integral = cumulative_quadratic(tr.times, speed2).back();
  const double bound = (o.value(tr.states.front()) - *o.f_star) / p.mu();
  detail::MarginTracker m;
  m.observe(integral - bound - opt.l2_slack, tr.times.back());
  ClaimEntry e = m.entry(id, opt.l2_slack);
  std::ostringstream note;
  note.precision(17);
  note << "integral=" << integral << " bound=" << bound;
  e.note = note.str();
  return e;
}

/// |x'(T)| <= velocity_threshold, checked only when the objective is strongly
/// convex with known smoothness L and the exponential estimate
/// (1/mu_phi) sqrt(2 L exp(-mu T) (f(x0) - f*)) already predicts it.
inline ClaimEntry check_velocity_vanishes(const Trajectory& tr, const Objective& o,
                                          const ReferencePotential& p, double mu,
                                          const CertifyOptions& opt = {}) {
  const std::string id = "velocity-vanishes";
  if (!detail::is_flow(tr)) return detail::not_applicable(id, "claim concerns the flow");
  if (!o.strong_convexity || !o.smoothness || !o.f_star)
    return detail::not_applicable(id, "no rate available: objective not known strongly convex");
  if (!(mu > 0.0)) return detail::not_applicable(id, "no positive gradient-dominance constant");
  const double gap0 = o.value(tr.states.front()) - *o.f_star;
  const double predicted =
      std::sqrt(2.0 * *o.smoothness * std::exp(-mu * tr.times.back()) * std::max(gap0, 0.0)) / p.mu();
  if (predicted > opt.velocity_threshold)
    return detail::not_applicable(id, "horizon too short for the exponential estimate");
  detail::MarginTracker m;
  m.observe(tr.velocities.back().norm() - opt.velocity_threshold, tr.times.back());
  return m.entry(id, opt.velocity_threshold);
}

// ---------------------------------------------------------------------------
// Suite

inline bool claim_requested(const CertifyOptions& opt, std::string_view id) {
  if (!opt.checks) return true;
  return std::find(opt.checks->begin(), opt.checks->end(), id) != opt.checks->end();
}

/// Runs every requested claim in catalog order. Pure in its inputs.
inline CertificateReport run_certificate_suite(const Trajectory& tr, const Objective& o,
                                               const ReferencePotential& p,
                                               const CertifyOptions& opt = {}) {
  if (tr.empty()) throw std::invalid_argument("run_certificate_suite: empty trajectory");
  CertificateReport rep;
  rep.trajectory_id = tr.id();

  double mu = 0.0;
  if (opt.mu) {
    mu = *opt.mu;
  } else if (claim_requested(opt, "exp-rate") || claim_requested(opt, "velocity-vanishes")) {
    mu = std::max(0.0, estimate_aniso_mu_along(tr, o, p, opt.mu_samples, opt.seed) - 1e-6);
  }

  auto want = [&](std::string_view id) { return claim_requested(opt, id); };
  auto add = [&](ClaimEntry e) {
    if (want(e.claim_id)) rep.entries.push_back(std::move(e));
  };

  if (want("decrease-identity")) add(check_decrease_identity(tr, o, p, opt.decrease_tol));
  if (want("conj-grad-decrease")) add(check_conj_gradient_decrease(tr, o, p, opt));
  if (want("V-monotone") || want("rate-1-over-t")) {
    auto [v, r] = check_V_monotone_and_rate(tr, o, p, opt);
    add(std::move(v));
    add(std::move(r));
  }
  if (want("fejer-grad") || want("fejer-dist")) {
    auto [g, d] = check_fejer(tr, o, p, opt);
    add(std::move(g));
    add(std::move(d));
  }
  if (want("gap-rate")) add(check_gap_rate(tr, o, p, opt));
  if (want("exp-rate")) add(check_exponential_rate(tr, o, p, mu, opt));
  if (want("energy-identity")) add(check_energy_identity(tr, o, p, opt));
  if (want("l2-bound")) add(check_l2_bound(tr, o, p, opt));
  if (want("velocity-vanishes")) add(check_velocity_vanishes(tr, o, p, mu, opt));
  return rep;
}

}  // namespace npflow
