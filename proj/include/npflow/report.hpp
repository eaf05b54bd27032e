#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace npflow {

enum class ClaimStatus { pass, fail, not_applicable };

inline std::string_view to_string(ClaimStatus s) {
  switch (s) {
    case ClaimStatus::pass: return "pass";
    case ClaimStatus::fail: return "fail";
    case ClaimStatus::not_applicable: return "not-applicable";
  }
  return "unknown";
}

// One verified claim.
//
// worst_margin is the largest value of (observed violation - allowed slack) over
// all samples, so a claim passes iff worst_margin <= 0. worst_time is the time
// (or iteration index, or sample index) where it occurred. tolerance_used is the
// base tolerance or slack coefficient the check was run with.
struct ClaimEntry {
  std::string claim_id;
  ClaimStatus status = ClaimStatus::not_applicable;
  double worst_margin = 0.0;
  double worst_time = 0.0;
  double tolerance_used = 0.0;
  std::string note;
};

struct CertificateReport {
  std::vector<ClaimEntry> entries;
  std::string config_hash;
  std::string trajectory_id;

  const ClaimEntry* find(std::string_view id) const {
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const ClaimEntry& e) { return e.claim_id == id; });
    return it == entries.end() ? nullptr : &*it;
  }

  // Not-applicable entries do not count as failures.
  bool all_passed() const {
    return std::none_of(entries.begin(), entries.end(),
                        [](const ClaimEntry& e) { return e.status == ClaimStatus::fail; });
  }

  std::vector<std::string> failed_ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (e.status == ClaimStatus::fail) out.push_back(e.claim_id);
    return out;
  }
};

namespace detail {

// Accumulates the worst (violation - slack) over a scan.
class MarginTracker {
 public:
  void observe(double excess, double when) {
    if (std::isnan(excess)) excess = std::numeric_limits<double>::infinity();
    if (!seen_ || excess > worst_) {
      worst_ = excess;
      when_ = when;
      seen_ = true;
    }
  }
  bool seen() const { return seen_; }
  double worst() const { return seen_ ? worst_ : 0.0; }
  double when() const { return when_; }

  ClaimEntry entry(std::string id, double tolerance) const {
    ClaimEntry e;
    e.claim_id = std::move(id);
    e.worst_margin = worst();
    e.worst_time = when_;
    e.tolerance_used = tolerance;
    e.status = (worst() <= 0.0) ? ClaimStatus::pass : ClaimStatus::fail;
    return e;
  }

 private:
  bool seen_ = false;
  double worst_ = 0.0;
  double when_ = 0.0;
};

inline ClaimEntry not_applicable(std::string id, std::string why) {
  ClaimEntry e;
  e.claim_id = std::move(id);
  e.status = ClaimStatus::not_applicable;
  e.note = std::move(why);
  return e;
}

}  // namespace detail

}  // namespace npflow
