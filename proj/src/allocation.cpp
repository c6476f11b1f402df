#include "prioflow/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prioflow/error.hpp"

namespace prioflow {

std::vector<double> weighted_max_min(const std::vector<double>& capacities,
                                     const std::vector<std::vector<std::size_t>>& flow_links,
                                     const std::vector<double>& weights,
                                     const std::vector<std::optional<double>>& demands) {
  const std::size_t n = flow_links.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> rate(n, 0.0);
  std::vector<bool> frozen(n, false);
  std::vector<double> remaining = capacities;

  for (std::size_t f = 0; f < n; ++f) {
    if (!(weights[f] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "weighted_max_min: non-positive weight");
    if (flow_links[f].empty() && !demands[f]) {
      throw Error(ErrorCode::kInvalidArgument, "weighted_max_min: unconstrained flow");
    }
    if (demands[f] && *demands[f] <= 0.0) frozen[f] = true;
  }

  std::size_t unfrozen = std::count(frozen.begin(), frozen.end(), false);
  while (unfrozen > 0) {
    // Sum of unfrozen weight crossing each constraint.
    std::vector<double> load(capacities.size(), 0.0);
    for (std::size_t f = 0; f < n; ++f) {
      if (frozen[f]) continue;
      for (auto l : flow_links[f]) load[l] += weights[f];
    }

    // Largest common increment of the fill level before something binds.
    double step = inf;
    std::optional<std::size_t> bind_link;
    std::optional<std::size_t> bind_flow;
    for (std::size_t l = 0; l < capacities.size(); ++l) {
      if (load[l] <= 0.0) continue;
      const double s = std::max(0.0, remaining[l]) / load[l];
      if (s < step) {
        step = s;
        bind_link = l;
        bind_flow.reset();
      }
    }
    for (std::size_t f = 0; f < n; ++f) {
      if (frozen[f] || !demands[f]) continue;
      const double s = std::max(0.0, *demands[f] - rate[f]) / weights[f];
      if (s < step) {
        step = s;
        bind_flow = f;
        bind_link.reset();
      }
    }

    for (std::size_t f = 0; f < n; ++f) {
      if (!frozen[f]) rate[f] += weights[f] * step;
    }
    for (std::size_t l = 0; l < capacities.size(); ++l) remaining[l] -= load[l] * step;

    std::vector<bool> saturated(capacities.size(), false);
    for (std::size_t l = 0; l < capacities.size(); ++l) {
      if (load[l] > 0.0 && remaining[l] <= kAllocationTolerance * capacities[l]) saturated[l] = true;
    }
    if (bind_link) saturated[*bind_link] = true;

    for (std::size_t f = 0; f < n; ++f) {
      if (frozen[f]) continue;
      bool stop = bind_flow && *bind_flow == f;
      if (demands[f] && rate[f] >= *demands[f] * (1.0 - kAllocationTolerance)) {
        rate[f] = *demands[f];
        stop = true;
      }
      for (auto l : flow_links[f]) stop = stop || saturated[l];
      if (stop) {
        frozen[f] = true;
        --unfrozen;
      }
    }
  }
  return rate;
}

namespace {

// Filling can land a saturated direction a few ulps above its manageable
// share. Pull the flows on such a direction back by a margin large enough that
// the sum stays under the share, and capacity minus the sum stays above the
// reserve, whatever order the rates are added in.
void hold_reserve(std::vector<double>& rates, const std::vector<std::vector<std::size_t>>& flow_links,
                  const std::vector<double>& capacity, const std::vector<double>& manageable) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  std::vector<std::vector<std::size_t>> members(capacity.size());
  for (std::size_t f = 0; f < flow_links.size(); ++f) {
    for (auto c : flow_links[f]) members[c].push_back(f);
  }
  for (std::size_t c = 0; c < capacity.size(); ++c) {
    if (members[c].empty()) continue;
    const double reserve = capacity[c] - manageable[c];
    const double bound = std::min(manageable[c], capacity[c] - reserve);
    const double safe = bound - 4.0 * static_cast<double>(members[c].size() + 1) * eps * capacity[c];
    double sum = 0.0;
    for (auto f : members[c]) sum += rates[f];
    if (sum <= safe) continue;
    const double scale = std::max(0.0, safe) / sum;
    for (auto f : members[c]) rates[f] *= scale;
  }
}

}  // namespace

AllocationMap compute_allocations(const Topology& topo, const std::vector<FlowSpec>& flows,
                                  const AllocationOptions& options) {
  AllocationMap out;
  // Constraint index per direction: 2*link for a->b, 2*link+1 for b->a.
  const std::size_t constraints = topo.links().size() * 2;
  auto constraint_of = [&](const Hop& hop) -> std::size_t {
    if (hop.link >= topo.links().size()) {
      throw Error(ErrorCode::kInvalidArgument, "path uses unknown link index " + std::to_string(hop.link));
    }
    const auto& l = topo.link(hop.link);
    if (hop.from == l.a && hop.to == l.b) return 2 * hop.link;
    if (hop.from == l.b && hop.to == l.a) return 2 * hop.link + 1;
    throw Error(ErrorCode::kInvalidArgument, "hop " + link_label(hop) + " does not match link " + l.a + "-" + l.b);
  };

  std::vector<std::vector<std::size_t>> links_of(flows.size());
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const auto& path = flows[f].path;
    if (path.empty()) throw Error(ErrorCode::kInvalidArgument, "flow " + flows[f].flow_id + " has an empty path");
    for (std::size_t h = 0; h < path.hops.size(); ++h) {
      if (h > 0 && path.hops[h - 1].to != path.hops[h].from) {
        throw Error(ErrorCode::kInvalidArgument, "flow " + flows[f].flow_id + " path is not contiguous");
      }
      links_of[f].push_back(constraint_of(path.hops[h]));
    }
    if (flows[f].weight < 0) throw Error(ErrorCode::kInvalidArgument, "flow " + flows[f].flow_id + " has negative weight");
    if (flows[f].demand_gbps && !(*flows[f].demand_gbps > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "flow " + flows[f].flow_id + " has non-positive demand");
    }
  }

  std::vector<double> capacity(constraints), manageable(constraints);
  for (std::size_t i = 0; i < topo.links().size(); ++i) {
    capacity[2 * i] = capacity[2 * i + 1] = topo.link(i).capacity_gbps;
    manageable[2 * i] = manageable[2 * i + 1] = manageable_capacity(topo.link(i));
  }

  auto run_phase = [&](bool priority, const std::vector<double>& caps) {
    std::vector<std::size_t> members;
    std::vector<std::vector<std::size_t>> fl;
    std::vector<double> w;
    std::vector<std::optional<double>> d;
    for (std::size_t f = 0; f < flows.size(); ++f) {
      if (flows[f].best_effort() == priority) continue;
      members.push_back(f);
      fl.push_back(links_of[f]);
      w.push_back(priority ? static_cast<double>(flows[f].weight) : 1.0);
      d.push_back(flows[f].demand_gbps);
    }
    auto rates = weighted_max_min(caps, fl, w, d);
    if (priority && options.enforce_manageable_cap) hold_reserve(rates, fl, capacity, manageable);
    std::vector<double> used(constraints, 0.0);
    for (std::size_t i = 0; i < members.size(); ++i) {
      out.rate[flows[members[i]].flow_id] = rates[i];
      for (auto c : fl[i]) used[c] += rates[i];
    }
    return used;
  };

  const auto priority_used = run_phase(true, options.enforce_manageable_cap ? manageable : capacity);
  std::vector<double> residual(constraints);
  for (std::size_t c = 0; c < constraints; ++c) residual[c] = std::max(0.0, capacity[c] - priority_used[c]);
  const auto best_effort_used = run_phase(false, residual);

  for (std::size_t i = 0; i < topo.links().size(); ++i) {
    const auto& l = topo.link(i);
    for (int dir = 0; dir < 2; ++dir) {
      const std::size_t c = 2 * i + dir;
      const Hop hop{i, dir == 0 ? l.a : l.b, dir == 0 ? l.b : l.a};
      out.links[link_label(hop)] = LinkUsage{capacity[c], manageable[c], priority_used[c], best_effort_used[c]};
    }
  }
  return out;
}

}  // namespace prioflow
