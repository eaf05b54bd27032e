#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "npflow/certify.hpp"
#include "npflow/integrate.hpp"
#include "npflow/report.hpp"

namespace npflow {

inline constexpr const char* kDefaultFloatFormat = "%.16e";  // 17 significant digits

/// Accepts printf conversions of the form %.<digits>e or %.<digits>g.
inline bool valid_float_format(const std::string& fmt) {
  static const std::regex re(R"(%\.(1[0-7]|[1-9])[eg])");
  return std::regex_match(fmt, re);
}

inline std::string format_double(double v, const std::string& fmt = kDefaultFloatFormat) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt.c_str(), v);
  return buf;
}

inline constexpr const char* kCsvHeader =
    "t,f_gap,conj_grad_channel,V,W,dist_to_min,grad_norm,xdot_norm,q_running";

inline std::string trajectory_csv(const Trajectory& tr, const Channels& ch,
                                  const std::string& fmt = kDefaultFloatFormat) {
  std::string out = kCsvHeader;
  out += '\n';
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double row[] = {tr.times[i],   ch.f_gap[i],     ch.conj_grad[i],
                          ch.V[i],       ch.W[i],         ch.dist[i],
                          ch.grad_norm[i], ch.xdot_norm[i], ch.q_running[i]};
    for (std::size_t j = 0; j < std::size(row); ++j) {
      if (j) out += ',';
      out += format_double(row[j], fmt);
    }
    out += '\n';
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

// JSON has no inf/nan; keep them readable as strings.
inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline nlohmann::json to_json(const ClaimEntry& e) {
  return {{"claim", e.claim_id},
          {"status", std::string(to_string(e.status))},
          {"worst_margin", json_number(e.worst_margin)},
          {"worst_time", json_number(e.worst_time)},
          {"tolerance", json_number(e.tolerance_used)},
          {"note", e.note}};
}

inline nlohmann::json to_json(const CertificateReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) entries.push_back(to_json(e));
  return {{"provenance", {{"config_hash", r.config_hash}, {"trajectory_id", r.trajectory_id}}},
          {"all_passed", r.all_passed()},
          {"entries", std::move(entries)}};
}

}  // namespace npflow
