#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "npflow/report.hpp"
#include "npflow/types.hpp"

namespace npflow {

enum class PotentialFamily { quadratic, eps_normalized, cosh_clip, ball_moreau, custom };

inline std::string_view to_string(PotentialFamily f) {
  switch (f) {
    case PotentialFamily::quadratic: return "quadratic";
    case PotentialFamily::eps_normalized: return "eps-normalized";
    case PotentialFamily::cosh_clip: return "cosh-clip";
    case PotentialFamily::ball_moreau: return "ball-moreau";
    case PotentialFamily::custom: return "custom";
  }
  return "unknown";
}

using ParamMap = std::map<std::string, double>;

/// Scalar profile of an isotropic reference function phi = h(|.|), given on r >= 0:
/// h, its derivative, its conjugate h*, and the conjugate derivative (h*)'.
struct ScalarProfile {
  std::function<double(double)> h;
  std::function<double(double)> dh;
  std::function<double(double)> hstar;
  std::function<double(double)> dhstar;
};

/// A reference function phi together with phi* and the preconditioner grad phi*.
///
/// Values are immutable after construction and all evaluators are pure, so a
/// potential can be shared freely between threads.
class ReferencePotential {
 public:
  using ScalarFn = std::function<double(const Vec&)>;
  using VectorFn = std::function<Vec(const Vec&)>;

  /// Builds phi = h(|.|) from a scalar profile. `closed_domain` marks a domain that
  /// contains its boundary sphere (e.g. a ball indicator); otherwise dom phi is the
  /// open ball of radius `dom_radius`.
  static ReferencePotential isotropic(ScalarProfile profile, double mu, double dom_radius,
                                      bool closed_domain = false,
                                      PotentialFamily family = PotentialFamily::custom,
                                      ParamMap params = {}) {
    if (!(mu > 0.0)) throw std::invalid_argument("reference potential: mu must be > 0");
    if (!(dom_radius > 0.0))
      throw std::invalid_argument("reference potential: dom_radius must be > 0");
    if (!profile.h || !profile.dh || !profile.hstar || !profile.dhstar)
      throw std::invalid_argument("reference potential: incomplete scalar profile");
    ReferencePotential p;
    p.family_ = family;
    p.params_ = std::move(params);
    p.mu_ = mu;
    p.dom_radius_ = dom_radius;
    p.closed_domain_ = closed_domain;
    p.profile_ = std::move(profile);
    p.ratio_nonincreasing_ = check_ratio_nonincreasing(p.profile_->dhstar);
    return p;
  }

  /// A non-isotropic potential from raw evaluators. Claims that need a scalar
  /// profile treat it as not applicable.
  static ReferencePotential from_functions(ScalarFn phi, ScalarFn conjugate, VectorFn grad_conjugate,
                                           double mu, double dom_radius = kInf,
                                           bool closed_domain = false) {
    if (!(mu > 0.0)) throw std::invalid_argument("reference potential: mu must be > 0");
    if (!(dom_radius > 0.0))
      throw std::invalid_argument("reference potential: dom_radius must be > 0");
    ReferencePotential p;
    p.mu_ = mu;
    p.dom_radius_ = dom_radius;
    p.closed_domain_ = closed_domain;
    p.phi_ = std::move(phi);
    p.conj_ = std::move(conjugate);
    p.grad_ = std::move(grad_conjugate);
    return p;
  }

  /// phi(v); +inf outside dom phi. For open domains, points within 1e-12 of the
  /// boundary sphere count as outside.
  double phi(const Vec& v) const {
    if (!profile_) return phi_(v);
    const double s = v.norm();
    if (std::isfinite(dom_radius_)) {
      if (closed_domain_) {
        if (s > dom_radius_ * (1.0 + 1e-12)) return kInf;
        return profile_->h(std::min(s, dom_radius_));
      }
      if (s >= dom_radius_ - 1e-12) return kInf;
    }
    return profile_->h(s);
  }

  double conjugate(const Vec& y) const {
    if (!profile_) return conj_(y);
    return profile_->hstar(y.norm());
  }

  /// grad phi*(y); exactly zero at y = 0.
  Vec grad_conjugate(const Vec& y) const {
    if (!profile_) return grad_(y);
    const double r = y.norm();
    if (r == 0.0) return Vec::Zero(y.size());
    return (profile_->dhstar(r) / r) * y;
  }

  PotentialFamily family() const { return family_; }
  const ParamMap& params() const { return params_; }
  double mu() const { return mu_; }
  double dom_radius() const { return dom_radius_; }
  bool closed_domain() const { return closed_domain_; }
  bool is_isotropic() const { return profile_.has_value(); }

  const ScalarProfile& profile() const {
    if (!profile_) throw std::logic_error("reference potential has no scalar profile");
    return *profile_;
  }

  /// Whether (h*)'(r)/r is nonincreasing on r > 0, grid-checked on (0, 1e3] at
  /// construction. Always false for non-isotropic potentials.
  bool ratio_nonincreasing() const { return ratio_nonincreasing_; }

  /// True when |v| lies in dom phi (boundary handling as in phi()).
  bool in_domain(double s) const {
    if (!std::isfinite(dom_radius_)) return true;
    return closed_domain_ ? s <= dom_radius_ * (1.0 + 1e-12) : s < dom_radius_ - 1e-12;
  }

 private:
  ReferencePotential() = default;

  static bool check_ratio_nonincreasing(const std::function<double(double)>& dhstar) {
    constexpr int kPoints = 2000;
    const double lo = std::log(1e-6), hi = std::log(1e3);
    double prev = kInf;
    for (int i = 0; i <= kPoints; ++i) {
      const double r = std::exp(lo + (hi - lo) * i / kPoints);
      const double ratio = dhstar(r) / r;
      if (!std::isfinite(ratio)) return false;
      if (ratio > prev * (1.0 + 1e-10) + 1e-14) return false;
      prev = ratio;
    }
    return true;
  }

  PotentialFamily family_ = PotentialFamily::custom;
  ParamMap params_;
  double mu_ = 1.0;
  double dom_radius_ = kInf;
  bool closed_domain_ = false;
  bool ratio_nonincreasing_ = false;
  std::optional<ScalarProfile> profile_;
  ScalarFn phi_;
  ScalarFn conj_;
  VectorFn grad_;
};

inline ReferencePotential make_isotropic(ScalarProfile profile, double mu, double dom_radius,
                                         bool closed_domain = false) {
  return ReferencePotential::isotropic(std::move(profile), mu, dom_radius, closed_domain);
}

// ---------------------------------------------------------------------------
// Catalog

/// (a/2)|x|^2. Identity preconditioner scaled by 1/a; plain gradient flow for a = 1.
inline ReferencePotential quadratic_potential(double a = 1.0) {
  if (!(a > 0.0)) throw std::invalid_argument("quadratic potential: a must be > 0");
  ScalarProfile prof{
      [a](double s) { return 0.5 * a * s * s; },
      [a](double s) { return a * s; },
      [a](double r) { return 0.5 * r * r / a; },
      [a](double r) { return r / a; },
  };
  return ReferencePotential::isotropic(std::move(prof), a, kInf, false, PotentialFamily::quadratic,
                                       {{"a", a}});
}

/// -eps (ln(1 - |x|) + |x|) on the open unit ball. grad phi*(y) = y / (|y| + eps),
/// a smoothed gradient normalization.
inline ReferencePotential eps_normalized_potential(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps-normalized potential: eps must be > 0");
  ScalarProfile prof{
      [eps](double s) { return -eps * (std::log1p(-s) + s); },
      [eps](double s) { return eps * s / (1.0 - s); },
      [eps](double r) { return r - eps * std::log1p(r / eps); },
      [eps](double r) { return r / (r + eps); },
  };
  // h''(s) = eps / (1 - s)^2 >= eps
  return ReferencePotential::isotropic(std::move(prof), eps, 1.0, false,
                                       PotentialFamily::eps_normalized, {{"eps", eps}});
}

/// cosh(|x|) - 1. grad phi*(y) = asinh(|y|) y / |y|: logarithmic soft clipping.
inline ReferencePotential cosh_clip_potential() {
  ScalarProfile prof{
      [](double s) {
        const double sh = std::sinh(0.5 * s);
        return 2.0 * sh * sh;
      },
      [](double s) { return std::sinh(s); },
      [](double r) { return r * std::asinh(r) - r * r / (std::sqrt(1.0 + r * r) + 1.0); },
      [](double r) { return std::asinh(r); },
  };
  return ReferencePotential::isotropic(std::move(prof), 1.0, kInf, false,
                                       PotentialFamily::cosh_clip, {});
}

/// (1/2)|x|^2 + indicator of the closed unit ball. grad phi* is the projection onto
/// the unit ball, so the induced control never leaves it.
inline ReferencePotential ball_moreau_potential() {
  ScalarProfile prof{
      [](double s) { return s <= 1.0 ? 0.5 * s * s : kInf; },
      [](double s) { return s; },
      [](double r) { return r <= 1.0 ? 0.5 * r * r : r - 0.5; },
      [](double r) { return std::min(r, 1.0); },
  };
  return ReferencePotential::isotropic(std::move(prof), 1.0, 1.0, true,
                                       PotentialFamily::ball_moreau, {});
}

/// Catalog lookup by string id. Unknown ids and unknown parameter keys are rejected.
inline ReferencePotential make_potential(const std::string& id, const ParamMap& params = {}) {
  auto reject_unknown = [&](std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : params) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) throw std::invalid_argument("potential '" + id + "': unknown parameter '" + key + "'");
    }
  };
  auto get = [&](const char* key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  if (id == "quadratic") {
    reject_unknown({"a"});
    return quadratic_potential(get("a", 1.0));
  }
  if (id == "eps-normalized") {
    reject_unknown({"eps"});
    return eps_normalized_potential(get("eps", 1.0));
  }
  if (id == "cosh-clip") {
    reject_unknown({});
    return cosh_clip_potential();
  }
  if (id == "ball-moreau") {
    reject_unknown({});
    return ball_moreau_potential();
  }
  throw std::invalid_argument("unknown potential id '" + id + "'");
}

// ---------------------------------------------------------------------------
// Brute-force conjugate

struct OracleOptions {
  double tol = 1e-10;
  int max_expansions = 200;
};

struct OracleResult {
  double value = 0.0;
  Vec argmax;
};

/// sup_v <y, v> - phi(v) by direct search. Isotropy reduces it to maximizing the
/// concave scalar g(r) = r|y| - h(r) over r in [0, dom_radius): bracket, then
/// golden-section, then a bisection polish on g'(r) = |y| - h'(r) when the final
/// bracket straddles a sign change.
inline OracleResult numeric_conjugate_oracle(const ReferencePotential& p, const Vec& y,
                                             const OracleOptions& opt = {}) {
  if (!p.is_isotropic())
    throw std::invalid_argument("numeric_conjugate_oracle: potential has no scalar profile");
  const ScalarProfile& prof = p.profile();
  const double ry = y.norm();
  OracleResult out;
  out.argmax = Vec::Zero(y.size());
  if (ry == 0.0) return out;

  auto g = [&](double r) {
    if (!p.in_domain(r)) return -kInf;
    const double hv = prof.h(r);
    return std::isfinite(hv) ? r * ry - hv : -kInf;
  };

  double lo = 0.0;
  double hi;
  if (std::isfinite(p.dom_radius())) {
    hi = p.closed_domain() ? p.dom_radius() : p.dom_radius() * (1.0 - 1e-15);
  } else {
    hi = 1.0;
    int k = 0;
    while (!(g(hi) < g(0.5 * hi)) && k++ < opt.max_expansions) hi *= 2.0;
    if (k >= opt.max_expansions) throw NumericalError("numeric_conjugate_oracle: bracket not found");
  }

  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double gc = g(c), gd = g(d);
  while (b - a > opt.tol * std::max(1.0, std::abs(b))) {
    if (gc >= gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - kInvPhi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + kInvPhi * (b - a);
      gd = g(d);
    }
  }
  double r = 0.5 * (a + b);

  // Value comparisons stall once g is flat to rounding; the first-order condition
  // does not.
  const double w = std::max(1e-6, 1e-6 * r);
  double pa = std::max(lo, r - w), pb = std::min(hi, r + w);
  auto slope = [&](double s) { return ry - prof.dh(s); };
  double sa = slope(pa), sb = slope(pb);
  if (std::isfinite(sa) && std::isfinite(sb) && sa > 0.0 && sb < 0.0) {
    for (int i = 0; i < 200 && pb - pa > 4e-16 * std::max(1.0, pb); ++i) {
      const double m = 0.5 * (pa + pb);
      if (slope(m) > 0.0) pa = m; else pb = m;
    }
    r = 0.5 * (pa + pb);
  }

  double best_r = r, best = g(r);
  for (double cand : {lo, hi}) {
    const double gv = g(cand);
    if (gv > best) {
      best = gv;
      best_r = cand;
    }
  }
  out.value = best;
  out.argmax = (best_r / ry) * y;
  return out;
}

// ---------------------------------------------------------------------------
// Pair verification

struct PairSampleSpec {
  int count = 100;
  int dimension = 2;
  double radius = 10.0;
  std::uint64_t seed = 7;
};

struct PairVerification {
  CertificateReport report;
  double max_fenchel_young_residual = 0.0;
  double max_lipschitz_ratio = 0.0;  // mu |g - g'| / |y - y'|, at most 1
  double min_cocoercivity_gap = kInf;  // <g - g', y - y'> - mu |g - g'|^2
};

/// Samples dual points across scales (coordinates uniform in [-radius, radius],
/// scaled by 10^U(-3, 0)) and checks the conjugate-pair properties every
/// certificate downstream relies on. Entries: fenchel-young, cocoercivity,
/// lipschitz, evenness, range.
inline PairVerification verify_pair(const ReferencePotential& p, const PairSampleSpec& spec = {}) {
  if (spec.count < 2 || spec.dimension < 1 || !(spec.radius > 0.0))
    throw std::invalid_argument("verify_pair: need count >= 2, dimension >= 1, radius > 0");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coord(-spec.radius, spec.radius);
  std::uniform_real_distribution<double> decade(-3.0, 0.0);
  std::vector<Vec> ys;
  ys.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    Vec y(spec.dimension);
    for (int j = 0; j < spec.dimension; ++j) y[j] = coord(rng);
    y *= std::pow(10.0, decade(rng));
    ys.push_back(std::move(y));
  }
  std::vector<Vec> gs;
  gs.reserve(ys.size());
  for (const auto& y : ys) gs.push_back(p.grad_conjugate(y));

  PairVerification out;
  const double mu = p.mu();
  detail::MarginTracker fy, coco, lip, even, range;

  for (std::size_t i = 0; i < ys.size(); ++i) {
    const Vec& y = ys[i];
    const Vec& g = gs[i];
    const double pairing = y.dot(g);
    const double resid = std::abs(p.conjugate(y) + p.phi(g) - pairing);
    out.max_fenchel_young_residual = std::max(out.max_fenchel_young_residual, resid);
    fy.observe(resid - 1e-8 * (1.0 + std::abs(pairing)), static_cast<double>(i));

    const double cy = p.conjugate(y);
    const double cny = p.conjugate(-y);
    const double pv = p.phi(g);
    const double pnv = p.phi(-g);
    double even_err = std::abs(cny - cy) - 1e-14 * (1.0 + std::abs(cy));
    if (std::isfinite(pv) || std::isfinite(pnv))
      even_err = std::max(even_err, std::abs(pnv - pv) - 1e-14 * (1.0 + std::abs(pv)));
    even.observe(even_err, static_cast<double>(i));

    if (std::isfinite(p.dom_radius())) {
      const double gn = g.norm();
      double range_excess;
      if (p.closed_domain()) {
        range_excess = gn - p.dom_radius() * (1.0 + 1e-12);
      } else {
        range_excess = gn - p.dom_radius();
        if (range_excess >= 0.0) range_excess = std::max(range_excess, 1e-300);
      }
      range.observe(range_excess, static_cast<double>(i));
    }

    for (std::size_t j = i + 1; j < ys.size(); ++j) {
      const Vec dy = ys[i] - ys[j];
      const Vec dg = gs[i] - gs[j];
      const double dyn = dy.norm();
      const double dgn = dg.norm();
      const double inner = dg.dot(dy);
      const double gap = inner - mu * dgn * dgn;
      out.min_cocoercivity_gap = std::min(out.min_cocoercivity_gap, gap);
      coco.observe(-gap - 1e-12 * (1.0 + std::abs(inner)), static_cast<double>(i));
      if (dyn > 0.0) {
        out.max_lipschitz_ratio = std::max(out.max_lipschitz_ratio, mu * dgn / dyn);
        lip.observe(dgn - dyn / mu - 1e-12 * (1.0 + dyn / mu), static_cast<double>(i));
      }
    }
  }

  out.report.entries.push_back(fy.entry("fenchel-young", 1e-8));
  out.report.entries.push_back(coco.entry("cocoercivity", 1e-12));
  out.report.entries.push_back(lip.entry("lipschitz", 1e-12));
  out.report.entries.push_back(even.entry("evenness", 1e-14));
  out.report.entries.push_back(range.entry("range", 0.0));
  return out;
}

}  // namespace npflow
