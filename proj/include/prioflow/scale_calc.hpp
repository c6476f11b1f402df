#pragma once

#include <map>
#include <string>

#include "prioflow/topology.hpp"

namespace prioflow {

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kSecondsPerYear = 365.0 * kSecondsPerDay;

/// Decimal network units: 1 Gbps = 1e9 bit/s.
inline double bytes_per_s_to_gbps(double bytes_per_s) { return bytes_per_s * 8.0 / 1e9; }
inline double gbps_to_bytes_per_s(double gbps) { return gbps * 1e9 / 8.0; }

struct InstrumentProfile {
  double event_size_bytes = 0.0;
  double trigger_rate_hz = 0.0;
  double duty_cycle = 1.0;
  std::map<std::string, double> archive_shares;
};

/// Throws Error(kInvalidArgument) when any field is out of range.
void validate_profile(const InstrumentProfile& profile);

/// Bytes per second while the instrument is taking data.
double raw_rate(const InstrumentProfile& profile);

/// raw_rate integrated over a year at the duty cycle, bytes.
double annual_volume(const InstrumentProfile& profile);

struct SiteRate {
  double bytes_per_s = 0.0;
  double gbps = 0.0;
};

/// share(site) x daily_volume spread over one day.
SiteRate site_average_rate(const InstrumentProfile& profile, double daily_volume_bytes, const std::string& site);

inline constexpr double kPeakGbps = 1000.0;

/// True iff the manageable capacity of the src->dst path reaches the
/// 1 Tbps peak.
bool peak_check(const Topology& topo, const std::string& src, const std::string& dst);
bool peak_check(double path_manageable_gbps);

}  // namespace prioflow
