#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "npflow/certify.hpp"
#include "npflow/dualbridge.hpp"
#include "npflow/integrate.hpp"
#include "npflow/io.hpp"
#include "npflow/objectives.hpp"
#include "npflow/refpotential.hpp"
#include "npflow/svg_plot.hpp"

namespace npflow {

using nlohmann::json;

/// Claim ids beyond the flow suite, reported after it.
inline constexpr std::array<std::string_view, 3> kControlClaims = {"md-duality", "value-identity",
                                                                   "lower-bound-audit"};

enum ExitCode : int { kExitOk = 0, kExitClaimFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ObjectiveConfig {
  std::string id;
  Mat matrix;  // quadratic only
  Vec vector;
  int dimension = 0;
  Vec x0;
};

struct PotentialConfig {
  std::string id;
  ParamMap params;
};

struct IntegratorConfig {
  std::string method = "adaptive";
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double step = 1e-2;
  double gamma = 0.1;
  std::vector<double> gammas;
  double t_end = 10.0;
  long long k_max = 100;
  double record_every = 5e-4;
  double stop_grad = 0.0;
};

struct OutputConfig {
  std::string csv, json, svg;
  std::string float_format = kDefaultFloatFormat;
};

struct CertifyConfig {
  std::optional<double> mu;
  double decrease_tol = 1e-5;
  double energy_rel_tol = 1e-6;
  double l2_slack = 1e-8;
  double velocity_threshold = 1e-6;
  double exp_slack = 1e-6;
  int mu_samples = 400;
  double value_tol = 1e-4;
  double control_t_end = 100.0;
  double duality_tol = 1e-8;
  std::optional<double> duality_gamma;  // defaults to integrator.gamma
  long long duality_steps = 50;
  double newton_tol = 1e-12;
};

struct ExperimentConfig {
  ObjectiveConfig objective;
  PotentialConfig potential;
  IntegratorConfig integrator;
  std::optional<std::vector<std::string>> checks;  // absent = all
  OutputConfig outputs;
  std::uint64_t seed = 1;
  CertifyConfig certify;
  json source;       // the document as parsed
  std::string hash;  // FNV-1a of the canonical dump
};

namespace detail {

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (std::find_if(keys.begin(), keys.end(), [&](const char* a) { return k == a; }) == keys.end())
      throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

inline double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline long long get_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return j.get<long long>();
}

inline std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

inline Vec get_vector(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = get_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline Mat get_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a non-empty array of rows");
  const std::size_t n = j.size();
  Mat m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const Vec row = get_vector(j[r], path + "[" + std::to_string(r) + "]");
    if (static_cast<std::size_t>(row.size()) != n) throw ConfigError(path + ": matrix must be square");
    m.row(r) = row.transpose();
  }
  return m;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline bool known_claim(std::string_view id) {
  return std::find(kFlowClaims.begin(), kFlowClaims.end(), id) != kFlowClaims.end() ||
         std::find(kControlClaims.begin(), kControlClaims.end(), id) != kControlClaims.end();
}

}  // namespace detail

/// Strict parse: unknown keys, unknown ids and out-of-range values throw
/// ConfigError naming the offending key.
inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  ExperimentConfig c;
  only_keys(j, "", {"objective", "potential", "integrator", "checks", "outputs", "seed", "certify"});
  require(j.contains("objective"), "missing key 'objective'");
  require(j.contains("potential"), "missing key 'potential'");

  // objective
  {
    const json& o = j["objective"];
    only_keys(o, "objective", {"id", "params", "dimension", "x0"});
    require(o.contains("id"), "missing key 'objective.id'");
    require(o.contains("x0"), "missing key 'objective.x0'");
    c.objective.id = get_string(o["id"], "objective.id");
    c.objective.x0 = get_vector(o["x0"], "objective.x0");
    const json params = o.value("params", json::object());
    if (c.objective.id == "quadratic") {
      only_keys(params, "objective.params", {"matrix", "vector"});
      require(params.contains("matrix"), "missing key 'objective.params.matrix'");
      c.objective.matrix = get_matrix(params["matrix"], "objective.params.matrix");
      c.objective.vector = params.contains("vector") ? get_vector(params["vector"], "objective.params.vector")
                                                     : Vec::Zero(c.objective.matrix.rows());
    } else if (c.objective.id == "quartic" || c.objective.id == "rosenbrock") {
      only_keys(params, "objective.params", {});
    } else {
      throw ConfigError("objective.id: unknown objective '" + c.objective.id + "'");
    }
    c.objective.dimension = static_cast<int>(c.objective.x0.size());
    if (o.contains("dimension")) {
      const long long d = get_integer(o["dimension"], "objective.dimension");
      require(d == c.objective.dimension, "objective.dimension: does not match objective.x0");
    }
    if (c.objective.id == "quadratic")
      require(c.objective.matrix.rows() == c.objective.dimension && c.objective.vector.size() == c.objective.dimension,
              "objective.params: dimension does not match objective.x0");
    if (c.objective.id == "rosenbrock") require(c.objective.dimension >= 2, "objective.x0: rosenbrock needs dimension >= 2");
    if (c.objective.id == "quadratic") {
      try {
        (void)make_quadratic(c.objective.matrix, c.objective.vector);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("objective.params: ") + e.what());
      }
    }
  }

  // potential
  {
    const json& p = j["potential"];
    only_keys(p, "potential", {"id", "params"});
    require(p.contains("id"), "missing key 'potential.id'");
    c.potential.id = get_string(p["id"], "potential.id");
    const json params = p.value("params", json::object());
    require(params.is_object(), "potential.params: expected an object");
    for (const auto& [k, v] : params.items()) c.potential.params[k] = get_number(v, "potential.params." + k);
    try {
      (void)make_potential(c.potential.id, c.potential.params);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("potential: ") + e.what());
    }
  }

  // integrator
  {
    const json in = j.value("integrator", json::object());
    only_keys(in, "integrator",
              {"method", "rel_tol", "abs_tol", "step", "gamma", "gammas", "t_end", "k_max", "record_every", "stop_grad"});
    IntegratorConfig& ic = c.integrator;
    if (in.contains("method")) ic.method = get_string(in["method"], "integrator.method");
    require(ic.method == "adaptive" || ic.method == "rk4" || ic.method == "npgm",
            "integrator.method: unknown method '" + ic.method + "'");
    auto num = [&](const char* k, double& dst) {
      if (in.contains(k)) dst = get_number(in[k], std::string("integrator.") + k);
    };
    num("rel_tol", ic.rel_tol);
    num("abs_tol", ic.abs_tol);
    num("step", ic.step);
    num("gamma", ic.gamma);
    num("t_end", ic.t_end);
    num("record_every", ic.record_every);
    num("stop_grad", ic.stop_grad);
    if (in.contains("k_max")) ic.k_max = get_integer(in["k_max"], "integrator.k_max");
    if (in.contains("gammas")) {
      const json& g = in["gammas"];
      require(g.is_array() && !g.empty(), "integrator.gammas: expected a non-empty array");
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = get_number(g[i], "integrator.gammas[" + std::to_string(i) + "]");
        require(v > 0.0 && std::isfinite(v), "integrator.gammas[" + std::to_string(i) + "]: must be > 0");
        ic.gammas.push_back(v);
      }
    }
    require(ic.t_end > 0.0 && std::isfinite(ic.t_end), "integrator.t_end: must be positive and finite");
    require(ic.rel_tol >= 1e-13 && ic.rel_tol <= 1e-2, "integrator.rel_tol: must lie in [1e-13, 1e-2]");
    require(ic.abs_tol >= 1e-13 && ic.abs_tol <= 1e-2, "integrator.abs_tol: must lie in [1e-13, 1e-2]");
    require(ic.step > 0.0 && ic.step <= ic.t_end, "integrator.step: must lie in (0, t_end]");
    require(ic.gamma > 0.0 && std::isfinite(ic.gamma), "integrator.gamma: must be > 0");
    require(ic.k_max >= 1, "integrator.k_max: must be >= 1");
    require(ic.record_every > 0.0 && std::isfinite(ic.record_every), "integrator.record_every: must be > 0");
    require(ic.stop_grad >= 0.0, "integrator.stop_grad: must be >= 0");
  }

  // checks
  if (j.contains("checks")) {
    const json& ch = j["checks"];
    if (ch.is_string()) {
      require(ch.get<std::string>() == "all", "checks: expected \"all\" or a list of claim ids");
    } else {
      require(ch.is_array(), "checks: expected \"all\" or a list of claim ids");
      std::vector<std::string> ids;
      for (std::size_t i = 0; i < ch.size(); ++i) {
        const std::string id = get_string(ch[i], "checks[" + std::to_string(i) + "]");
        require(known_claim(id), "checks[" + std::to_string(i) + "]: unknown claim id '" + id + "'");
        ids.push_back(id);
      }
      c.checks = std::move(ids);
    }
  }

  // outputs
  if (j.contains("outputs")) {
    const json& out = j["outputs"];
    only_keys(out, "outputs", {"csv", "json", "svg", "float_format"});
    if (out.contains("csv")) c.outputs.csv = get_string(out["csv"], "outputs.csv");
    if (out.contains("json")) c.outputs.json = get_string(out["json"], "outputs.json");
    if (out.contains("svg")) c.outputs.svg = get_string(out["svg"], "outputs.svg");
    if (out.contains("float_format")) c.outputs.float_format = get_string(out["float_format"], "outputs.float_format");
    require(valid_float_format(c.outputs.float_format),
            "outputs.float_format: expected %.<N>e or %.<N>g with 1 <= N <= 17");
  }

  if (j.contains("seed")) {
    const long long s = get_integer(j["seed"], "seed");
    require(s >= 0, "seed: must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }

  if (j.contains("certify")) {
    const json& ce = j["certify"];
    only_keys(ce, "certify",
              {"mu", "decrease_tol", "energy_rel_tol", "l2_slack", "velocity_threshold", "exp_slack", "mu_samples",
               "value_tol", "control_t_end", "duality_tol", "duality_gamma", "duality_steps", "newton_tol"});
    CertifyConfig& cc = c.certify;
    auto pos = [&](const char* k, double& dst) {
      if (!ce.contains(k)) return;
      dst = get_number(ce[k], std::string("certify.") + k);
      require(dst > 0.0 && std::isfinite(dst), std::string("certify.") + k + ": must be > 0");
    };
    if (ce.contains("mu")) {
      cc.mu = get_number(ce["mu"], "certify.mu");
      require(*cc.mu >= 0.0 && std::isfinite(*cc.mu), "certify.mu: must be >= 0");
    }
    pos("decrease_tol", cc.decrease_tol);
    pos("energy_rel_tol", cc.energy_rel_tol);
    pos("l2_slack", cc.l2_slack);
    pos("velocity_threshold", cc.velocity_threshold);
    pos("exp_slack", cc.exp_slack);
    pos("value_tol", cc.value_tol);
    pos("control_t_end", cc.control_t_end);
    pos("duality_tol", cc.duality_tol);
    pos("newton_tol", cc.newton_tol);
    if (ce.contains("duality_gamma")) {
      double g = 0.0;
      pos("duality_gamma", g);
      cc.duality_gamma = g;
    }
    if (ce.contains("mu_samples")) {
      const long long n = get_integer(ce["mu_samples"], "certify.mu_samples");
      require(n >= 0 && n <= 1000000, "certify.mu_samples: must lie in [0, 1e6]");
      cc.mu_samples = static_cast<int>(n);
    }
    if (ce.contains("duality_steps")) {
      cc.duality_steps = get_integer(ce["duality_steps"], "certify.duality_steps");
      require(cc.duality_steps >= 1, "certify.duality_steps: must be >= 1");
    }
  }

  c.source = j;
  Fnv1a h;
  h.update(j.dump());
  c.hash = h.hex();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

inline Objective build_objective(const ObjectiveConfig& c) {
  if (c.id == "quadratic") return make_quadratic(c.matrix, c.vector);
  if (c.id == "quartic") return make_quartic(c.dimension);
  if (c.id == "rosenbrock") return make_rosenbrock(c.dimension);
  throw ConfigError("objective.id: unknown objective '" + c.id + "'");
}

inline ReferencePotential build_potential(const PotentialConfig& c) { return make_potential(c.id, c.params); }

/// Integrates (or iterates) the configured method from x0.
inline Trajectory simulate(const ExperimentConfig& c, const Objective& o, const ReferencePotential& p) {
  const IntegratorConfig& ic = c.integrator;
  if (ic.method == "npgm") return iterate_npgm(o, p, c.objective.x0, ic.gamma, ic.k_max, ic.stop_grad);
  const VectorField f = field_precondflow(o, p);
  if (ic.method == "rk4") return integrate_rk4(f, c.objective.x0, ic.t_end, ic.step, ic.record_every);
  AdaptiveOptions ao;
  ao.rel_tol = ic.rel_tol;
  ao.abs_tol = ic.abs_tol;
  ao.record_every = ic.record_every;
  ao.stop_speed = ic.stop_grad;
  return integrate_adaptive(f, c.objective.x0, ic.t_end, ao);
}

inline CertifyOptions certify_options(const ExperimentConfig& c) {
  CertifyOptions opt;
  opt.decrease_tol = c.certify.decrease_tol;
  opt.energy_rel_tol = c.certify.energy_rel_tol;
  opt.l2_slack = c.certify.l2_slack;
  opt.velocity_threshold = c.certify.velocity_threshold;
  opt.exp_slack = c.certify.exp_slack;
  opt.mu = c.certify.mu;
  opt.mu_samples = c.certify.mu_samples;
  opt.seed = c.seed;
  if (c.checks) {
    std::vector<std::string> flow;
    for (const auto& id : *c.checks)
      if (std::find(kFlowClaims.begin(), kFlowClaims.end(), id) != kFlowClaims.end()) flow.push_back(id);
    opt.checks = std::move(flow);
  }
  return opt;
}

/// Output path, redirected into $NPFLOW_OUTPUT_DIR (keeping the file name) when set.
inline std::filesystem::path output_path(const std::string& configured) {
  namespace fs = std::filesystem;
  fs::path p(configured);
  if (const char* dir = std::getenv("NPFLOW_OUTPUT_DIR"); dir && *dir) p = fs::path(dir) / p.filename();
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

inline std::filesystem::path sibling_path(const std::filesystem::path& p, const std::string& suffix) {
  std::filesystem::path q = p;
  q.replace_filename(p.stem().string() + suffix + p.extension().string());
  return q;
}

// ---------------------------------------------------------------------------
// Commands. Each returns an ExitCode; messages go to the given streams.

namespace detail {

inline std::string render_trajectory_svg(const Trajectory& tr, const Channels& ch, const std::string& title) {
  PlotSpec spec;
  spec.title = title;
  spec.y_label = "value (log scale)";
  return render_svg(spec, {{"f - f*", tr.times, ch.f_gap},
                           {"phi*(grad f)", tr.times, ch.conj_grad},
                           {"V(t)", tr.times, ch.V},
                           {"|x - x*|", tr.times, ch.dist}});
}

inline std::string describe(const ExperimentConfig& c) {
  return c.objective.id + "/" + c.potential.id + " (" + c.integrator.method + ")";
}

}  // namespace detail

inline int cmd_run(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  Trajectory tr;
  Objective o;
  std::optional<ReferencePotential> p;
  try {
    o = build_objective(c.objective);
    p = build_potential(c.potential);
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    tr = simulate(c, o, *p);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  const Channels ch = compute_channels(tr, o, *p);
  if (!c.outputs.csv.empty()) write_text(output_path(c.outputs.csv).string(), trajectory_csv(tr, ch, c.outputs.float_format));
  if (!c.outputs.svg.empty())
    write_text(output_path(c.outputs.svg).string(), detail::render_trajectory_svg(tr, ch, detail::describe(c)));
  out << "terminal=" << to_string(tr.terminal_reason) << " samples=" << tr.size()
      << " t=" << format_double(tr.times.back(), "%.6g") << " f_gap=" << format_double(ch.f_gap.back(), "%.6e")
      << " accepted=" << tr.accepted_steps << " rejected=" << tr.rejected_steps << "\n";
  if (!tr.ok()) {
    err << "run stopped early: " << to_string(tr.terminal_reason) << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

/// Flow suite plus the duality and control claims.
inline CertificateReport certify_experiment(const ExperimentConfig& c, const Objective& o, const ReferencePotential& p,
                                            const Trajectory& tr) {
  CertificateReport rep = run_certificate_suite(tr, o, p, certify_options(c));
  rep.config_hash = c.hash;
  auto want = [&](std::string_view id) {
    return !c.checks || std::find(c.checks->begin(), c.checks->end(), id) != c.checks->end();
  };
  const bool control_ok = o.strictly_convex && o.supercoercive;
  std::ostringstream note;
  note.precision(17);

  if (want("md-duality")) {
    if (!control_ok) {
      rep.entries.push_back(detail::not_applicable("md-duality", "objective not strictly convex and supercoercive"));
    } else {
      NewtonOptions nt;
      nt.tol = c.certify.newton_tol;
      const double g = c.certify.duality_gamma.value_or(c.integrator.gamma);
      try {
        const DualityCheck d = check_discrete_duality(o, p, c.objective.x0, g, c.certify.duality_steps,
                                                      c.certify.duality_tol, nt);
        rep.entries.push_back(d.entry);
      } catch (const NumericalError& e) {
        rep.entries.push_back({"md-duality", ClaimStatus::fail, kInf, 0.0, c.certify.duality_tol, e.what()});
      }
    }
  }

  std::optional<ControlSetup> setup;
  if (control_ok && o.minimizer && o.f_star && (want("value-identity") || want("lower-bound-audit")))
    setup.emplace(o, p);
  ClosedLoopOptions co;
  co.t_end = c.certify.control_t_end;
  co.integrator.rel_tol = c.integrator.rel_tol;
  co.integrator.abs_tol = c.integrator.abs_tol;
  co.seed = c.seed;

  if (want("value-identity")) {
    if (!setup) {
      rep.entries.push_back(detail::not_applicable("value-identity", "needs a strictly convex objective with known minimizer"));
    } else {
      const ClosedLoopResult r = closed_loop_value(*setup, c.objective.x0, co);
      detail::MarginTracker m;
      m.observe(r.gap - c.certify.value_tol, r.trajectory.times.back());
      ClaimEntry e = m.entry("value-identity", c.certify.value_tol);
      note.str("");
      note << "J=" << r.J << " V0=" << r.V0 << " tail=" << r.tail;
      // Without the velocity stop the tail estimate has no footing; a small gap
      // is then not evidence either way.
      if (!r.tail_reliable && e.status == ClaimStatus::pass) {
        e.status = ClaimStatus::not_applicable;
        note << " unreliable tail: stop criterion never fired";
      }
      if (r.lower_bound.status == ClaimStatus::fail) {
        e.status = ClaimStatus::fail;
        note << " running lower bound violated by " << r.lower_bound.worst_margin;
      }
      e.note = note.str();
      rep.entries.push_back(std::move(e));
    }
  }

  if (want("lower-bound-audit")) {
    if (!setup) {
      rep.entries.push_back(
          detail::not_applicable("lower-bound-audit", "needs a strictly convex objective with known minimizer"));
    } else {
      const AuditResult a = suboptimal_control_audit(*setup, c.objective.x0, default_perturbations(), co);
      ClaimEntry e = a.entry;
      note.str("");
      for (const auto& cs : a.cases) {
        if (note.tellp() > 0) note << "; ";
        note << cs.perturbation.label() << (cs.skipped ? " skipped" : " J=" + format_double(cs.J, "%.10g"));
      }
      if (e.status != ClaimStatus::not_applicable) e.note = note.str();
      rep.entries.push_back(std::move(e));
    }
  }
  return rep;
}

inline int cmd_certify(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  Objective o;
  std::optional<ReferencePotential> p;
  try {
    o = build_objective(c.objective);
    p = build_potential(c.potential);
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  Trajectory tr;
  try {
    tr = simulate(c, o, *p);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  if (!tr.ok()) {
    err << "trajectory stopped early: " << to_string(tr.terminal_reason) << "\n";
    return kExitNumerical;
  }
  const CertificateReport rep = certify_experiment(c, o, *p, tr);
  if (!c.outputs.json.empty()) write_text(output_path(c.outputs.json).string(), to_json(rep).dump(2) + "\n");
  if (!c.outputs.csv.empty())
    write_text(output_path(c.outputs.csv).string(), trajectory_csv(tr, compute_channels(tr, o, *p), c.outputs.float_format));
  for (const auto& e : rep.entries)
    out << e.claim_id << ": " << to_string(e.status) << " (margin " << format_double(e.worst_margin, "%.3e") << ")\n";
  if (!rep.all_passed()) {
    err << "failed claims:";
    for (const auto& id : rep.failed_ids()) err << " " << id;
    err << "\n";
    return kExitClaimFailed;
  }
  return kExitOk;
}

struct CompareRow {
  double gamma = 0.0;
  long long steps = 0;
  double duality_residual = 0.0;  // NaN when the objective has no grad f*
  double flow_gap = 0.0;          // max_k |x^k - x(gamma k)|
  double ratio = 0.0;             // flow_gap of the previous row / this one
};

/// For each gamma: the iteration against the adaptive flow at t = gamma k up to
/// t_end, and the mirror recursion against grad f(x^k).
inline std::vector<CompareRow> compare_rows(const ExperimentConfig& c, const Objective& o, const ReferencePotential& p) {
  std::vector<double> gammas = c.integrator.gammas;
  if (gammas.empty()) gammas.push_back(c.integrator.gamma);
  std::vector<CompareRow> rows;
  NewtonOptions nt;
  nt.tol = c.certify.newton_tol;
  for (double g : gammas) {
    CompareRow r;
    r.gamma = g;
    r.steps = std::max<long long>(1, std::llround(c.integrator.t_end / g));
    const Trajectory it = iterate_npgm(o, p, c.objective.x0, g, r.steps);
    if (!it.ok()) throw NumericalError("iteration diverged for gamma = " + format_double(g, "%.6g"));
    AdaptiveOptions ao;
    ao.rel_tol = c.integrator.rel_tol;
    ao.abs_tol = c.integrator.abs_tol;
    ao.record_every = g;
    const Trajectory fl = integrate_adaptive(field_precondflow(o, p), c.objective.x0, it.times.back(), ao);
    if (!fl.ok()) throw NumericalError("flow integration stopped early: " + std::string(to_string(fl.terminal_reason)));
    r.flow_gap = 0.0;
    for (std::size_t k = 0; k < std::min(it.size(), fl.size()); ++k) {
      if (std::abs(fl.times[k] - it.times[k]) > 1e-9 * (1.0 + it.times[k]))
        throw NumericalError("flow and iteration samples are misaligned");
      r.flow_gap = std::max(r.flow_gap, (fl.states[k] - it.states[k]).norm());
    }
    if (o.strictly_convex && o.supercoercive) {
      const DualityCheck d = check_discrete_duality(o, p, c.objective.x0, g, r.steps, 0.0, nt);
      r.duality_residual = *std::max_element(d.residuals.begin(), d.residuals.end());
    } else {
      r.duality_residual = std::numeric_limits<double>::quiet_NaN();
    }
    r.ratio = rows.empty() ? std::numeric_limits<double>::quiet_NaN() : rows.back().flow_gap / r.flow_gap;
    rows.push_back(r);
  }
  return rows;
}

inline int cmd_compare(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  Objective o;
  std::optional<ReferencePotential> p;
  try {
    o = build_objective(c.objective);
    p = build_potential(c.potential);
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  std::vector<CompareRow> rows;
  try {
    rows = compare_rows(c, o, *p);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  const std::string& fmt = c.outputs.float_format;
  std::string csv = "gamma,steps,max_duality_residual,flow_euler_gap,gap_ratio\n";
  for (const auto& r : rows) {
    csv += format_double(r.gamma, fmt) + "," + std::to_string(r.steps) + "," + format_double(r.duality_residual, fmt) +
           "," + format_double(r.flow_gap, fmt) + "," + format_double(r.ratio, fmt) + "\n";
    out << "gamma=" << format_double(r.gamma, "%.6g") << " duality=" << format_double(r.duality_residual, "%.3e")
        << " gap=" << format_double(r.flow_gap, "%.6e") << " ratio=" << format_double(r.ratio, "%.4f") << "\n";
  }
  if (!c.outputs.csv.empty()) write_text(output_path(c.outputs.csv).string(), csv);
  return kExitOk;
}

/// Integrator keys a sweep may vary; any other name is a potential parameter.
inline bool is_integrator_param(const std::string& name) {
  static const std::set<std::string> keys = {"rel_tol", "abs_tol", "step", "gamma", "t_end", "k_max", "record_every", "stop_grad"};
  return keys.count(name) > 0;
}

/// The config with one scalar replaced, re-validated.
inline ExperimentConfig with_param(const ExperimentConfig& c, const std::string& name, double value) {
  json j = c.source;
  if (is_integrator_param(name)) {
    if (name == "k_max") {
      const double r = std::round(value);
      if (r != value) throw ConfigError("sweep: k_max values must be integers");
      j["integrator"][name] = static_cast<long long>(r);
    } else {
      j["integrator"][name] = value;
    }
  } else {
    j["potential"]["params"][name] = value;
  }
  return parse_config(j);
}

struct SweepRun {
  double value = 0.0;
  Trajectory trajectory;
  Channels channels;
  std::string error;  // numerical failure, if any
};

inline int cmd_sweep(const ExperimentConfig& c, const std::string& param, const std::vector<double>& values,
                     std::ostream& out, std::ostream& err) {
  if (values.empty()) {
    err << "config error: sweep needs a non-empty value list\n";
    return kExitConfig;
  }
  if (param.empty()) {
    err << "config error: sweep needs a parameter name\n";
    return kExitConfig;
  }
  std::vector<ExperimentConfig> configs;
  try {
    for (double v : values) configs.push_back(with_param(c, param, v));
    for (const auto& cc : configs) {
      (void)build_objective(cc.objective);
      (void)build_potential(cc.potential);
    }
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  auto run_one = [](const ExperimentConfig& cc, double v) {
    SweepRun r;
    r.value = v;
    try {
      const Objective o = build_objective(cc.objective);
      const ReferencePotential p = build_potential(cc.potential);
      r.trajectory = simulate(cc, o, p);
      r.channels = compute_channels(r.trajectory, o, p);
    } catch (const NumericalError& e) {
      r.error = e.what();
    }
    return r;
  };

  const std::string& fmt = c.outputs.float_format;
  std::optional<std::ofstream> combined, summary;
  if (!c.outputs.csv.empty()) {
    const auto path = output_path(c.outputs.csv);
    combined.emplace(path, std::ios::binary | std::ios::trunc);
    summary.emplace(sibling_path(path, "_summary"), std::ios::binary | std::ios::trunc);
    if (!*combined || !*summary) {
      err << "cannot open sweep outputs next to '" << path.string() << "'\n";
      return kExitConfig;
    }
    *combined << param << "," << kCsvHeader << "\n";
    *summary << param << ",terminal_reason,t_final,f_gap_final,grad_norm_final,samples\n";
  }

  // Independent runs, in batches of the hardware concurrency; results are
  // written in value order so output does not depend on scheduling.
  const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
  std::vector<SweepRun> runs;
  bool failed = false;
  for (std::size_t start = 0; start < configs.size(); start += width) {
    std::vector<std::future<SweepRun>> batch;
    for (std::size_t i = start; i < std::min(configs.size(), start + width); ++i)
      batch.push_back(std::async(std::launch::async, run_one, std::cref(configs[i]), values[i]));
    for (auto& f : batch) {
      SweepRun r = f.get();
      const std::string v = format_double(r.value, fmt);
      if (!r.error.empty() || !r.trajectory.ok()) {
        failed = true;
        err << param << "=" << v << ": "
            << (r.error.empty() ? std::string(to_string(r.trajectory.terminal_reason)) : r.error) << "\n";
      }
      const Trajectory& tr = r.trajectory;
      if (combined && !tr.empty()) {
        const std::string body = trajectory_csv(tr, r.channels, fmt);
        std::istringstream lines(body);
        std::string line;
        std::getline(lines, line);  // header
        while (std::getline(lines, line)) *combined << v << "," << line << "\n";
        *summary << v << "," << to_string(tr.terminal_reason) << "," << format_double(tr.times.back(), fmt) << ","
                 << format_double(r.channels.f_gap.back(), fmt) << ","
                 << format_double(r.channels.grad_norm.back(), fmt) << "," << tr.size() << "\n";
        combined->flush();
        summary->flush();
      }
      if (!tr.empty())
        out << param << "=" << format_double(r.value, "%.6g") << " terminal=" << to_string(tr.terminal_reason)
            << " f_gap=" << format_double(r.channels.f_gap.back(), "%.6e") << "\n";
      runs.push_back(std::move(r));
    }
  }

  if (!c.outputs.svg.empty()) {
    PlotSpec prof;
    prof.title = "preconditioner profile |grad phi*(r e1)|";
    prof.x_label = "r";
    prof.y_label = "|grad phi*(r e1)|";
    prof.log_y = false;
    std::vector<Series> profiles, gaps;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      const ReferencePotential p = build_potential(configs[i].potential);
      Series s{param + "=" + format_double(values[i], "%.4g"), {}, {}};
      Vec y = Vec::Zero(configs[i].objective.dimension);
      for (int k = 0; k <= 400; ++k) {
        y[0] = 5.0 * k / 400.0;
        s.x.push_back(y[0]);
        s.y.push_back(p.grad_conjugate(y).norm());
      }
      profiles.push_back(std::move(s));
      gaps.push_back({param + "=" + format_double(values[i], "%.4g"), runs[i].trajectory.times, runs[i].channels.f_gap});
    }
    PlotSpec gs;
    gs.title = "f - f* along each run";
    gs.y_label = "f - f* (log scale)";
    write_text(output_path(c.outputs.svg).string(), render_svg({{prof, profiles}, {gs, gaps}}));
  }
  return failed ? kExitNumerical : kExitOk;
}

}  // namespace npflow
