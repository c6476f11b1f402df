#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prioflow/topology.hpp"

namespace prioflow {

/// A flow to be allocated. weight > 0 is a priority flow; weight 0 is best
/// effort. demand caps the rate when present.
struct FlowSpec {
  std::string flow_id;
  Path path;
  int weight = 1;
  std::optional<double> demand_gbps;

  bool best_effort() const noexcept { return weight == 0; }
};

struct LinkUsage {
  double capacity = 0.0;
  double manageable = 0.0;
  double priority_total = 0.0;
  double best_effort_total = 0.0;

  double residual() const noexcept { return capacity - priority_total; }
};

struct AllocationMap {
  /// flow_id -> Gbps
  std::map<std::string, double> rate;
  /// "A->B" -> usage of that direction of the link. Every direction of every
  /// link is present.
  std::map<std::string, LinkUsage> links;

  double rate_of(const std::string& flow_id) const {
    auto it = rate.find(flow_id);
    return it == rate.end() ? 0.0 : it->second;
  }
};

struct AllocationOptions {
  /// When false, priority flows may fill the whole link. Only useful to
  /// exercise the cap audit.
  bool enforce_manageable_cap = true;
};

/// Relative tolerance used when deciding that a constraint binds.
inline constexpr double kAllocationTolerance = 1e-12;

/// Weighted max-min fair rates by progressive filling.
///
/// `flow_links[f]` lists the constraint indices flow f crosses. Every flow
/// must have a positive weight and either at least one constraint or a finite
/// demand. Returns one rate per flow.
std::vector<double> weighted_max_min(const std::vector<double>& capacities,
                                     const std::vector<std::vector<std::size_t>>& flow_links,
                                     const std::vector<double>& weights,
                                     const std::vector<std::optional<double>>& demands);

/// Two-phase allocation: priority flows share each link's manageable capacity
/// by weighted max-min; best-effort flows then share what priority flows left
/// (capacity - priority total) by unweighted max-min.
///
/// Throws Error(kInvalidArgument) when a path does not follow topology links.
AllocationMap compute_allocations(const Topology& topo, const std::vector<FlowSpec>& flows,
                                  const AllocationOptions& options = {});

}  // namespace prioflow
