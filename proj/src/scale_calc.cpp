#include "prioflow/scale_calc.hpp"

#include "prioflow/error.hpp"
#include "prioflow/format.hpp"

namespace prioflow {

void validate_profile(const InstrumentProfile& profile) {
  if (!(profile.event_size_bytes > 0.0)) throw Error(ErrorCode::kInvalidArgument, "event size must be positive");
  if (!(profile.trigger_rate_hz > 0.0)) throw Error(ErrorCode::kInvalidArgument, "trigger rate must be positive");
  if (!(profile.duty_cycle > 0.0 && profile.duty_cycle <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "duty cycle must be in (0,1]");
  }
  double total = 0.0;
  for (const auto& [site, share] : profile.archive_shares) {
    if (!(share > 0.0 && share <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "share of " + site + " must be in (0,1]");
    }
    total += share;
  }
  if (total > 1.0 + 1e-12) throw Error(ErrorCode::kInvalidArgument, "archive shares sum to " + format_number(total));
}

double raw_rate(const InstrumentProfile& profile) {
  validate_profile(profile);
  return profile.event_size_bytes * profile.trigger_rate_hz;
}

double annual_volume(const InstrumentProfile& profile) {
  return raw_rate(profile) * profile.duty_cycle * kSecondsPerYear;
}

SiteRate site_average_rate(const InstrumentProfile& profile, double daily_volume_bytes, const std::string& site) {
  validate_profile(profile);
  auto it = profile.archive_shares.find(site);
  if (it == profile.archive_shares.end()) throw Error(ErrorCode::kNotFound, "no archive share for site " + site);
  if (!(daily_volume_bytes > 0.0)) throw Error(ErrorCode::kInvalidArgument, "daily volume must be positive");
  SiteRate r;
  r.bytes_per_s = it->second * daily_volume_bytes / kSecondsPerDay;
  r.gbps = bytes_per_s_to_gbps(r.bytes_per_s);
  return r;
}

bool peak_check(double path_manageable_gbps) { return path_manageable_gbps >= kPeakGbps * (1.0 - 1e-12); }

bool peak_check(const Topology& topo, const std::string& src, const std::string& dst) {
  return peak_check(path_manageable_capacity(topo, find_path(topo, src, dst)));
}

}  // namespace prioflow
