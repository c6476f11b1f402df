#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prioflow/allocation.hpp"
#include "prioflow/sim_core.hpp"
#include "prioflow/topology.hpp"

namespace prioflow {

struct DrainConfig {
  double fraction = 0.1;
  double floor_gbps = 1.0;
  SimTime window_s = 600.0;
};

enum class ProvisionState { kActive, kDraining };
std::string_view to_string(ProvisionState s);

struct ProvisionedService {
  std::string service_id;
  FlowSpec flow;
  ProvisionState state = ProvisionState::kActive;
  /// Phase-one (priority) rate; zero for best-effort flows.
  double guaranteed_rate = 0.0;
  /// Rate the flow actually receives, priority or best effort.
  double rate = 0.0;
  double last_active_rate = 0.0;
  std::optional<double> drain_rate;
  std::optional<SimTime> drain_deadline;
  std::optional<EventId> drain_timeout;
};

/// Observers of global recomputation. before_reallocation() runs while the old
/// rates are still in force.
class AllocationListener {
 public:
  virtual ~AllocationListener() = default;
  virtual void before_reallocation() {}
  virtual void after_reallocation(const AllocationMap& /*allocation*/) {}
};

/// Guaranteed-rate service registry. Every change triggers a global
/// recomputation of all rates.
class Orchestrator {
 public:
  Orchestrator(const Topology& topo, Kernel& kernel, DrainConfig drain = {}, AllocationOptions options = {});

  Path route(const std::string& src, const std::string& dst) const { return find_path(topo_, src, dst); }

  const ProvisionedService& provision(const std::string& service_id, FlowSpec flow);
  /// Weight 0 demotes to best effort. ACTIVE services only.
  const ProvisionedService& set_weight(const std::string& service_id, int weight);
  /// Old service drains at max(floor, fraction x last rate), capped at the
  /// last rate, until teardown or the drain window expires.
  std::pair<const ProvisionedService*, const ProvisionedService*> change_strategy(
      const std::string& service_id, const std::string& new_service_id, FlowSpec new_flow);
  const AllocationMap& teardown(const std::string& service_id);

  bool has(const std::string& service_id) const { return services_.contains(service_id); }
  const ProvisionedService& service(const std::string& service_id) const;
  const std::map<std::string, ProvisionedService>& services() const noexcept { return services_; }
  const AllocationMap& allocation() const noexcept { return allocation_; }
  const Topology& topology() const noexcept { return topo_; }
  const DrainConfig& drain_config() const noexcept { return drain_; }

  void add_listener(AllocationListener* listener) { listeners_.push_back(listener); }
  /// Called when a drain window expires. Defaults to teardown().
  void set_drain_timeout_handler(std::function<void(const std::string&)> handler) {
    on_drain_timeout_ = std::move(handler);
  }

 private:
  void validate_flow(const FlowSpec& flow) const;
  template <typename Mutation>
  void reallocate(const std::string& reason, Mutation&& mutate);
  ProvisionedService& mutable_service(const std::string& service_id);

  const Topology& topo_;
  Kernel& kernel_;
  DrainConfig drain_;
  AllocationOptions options_;
  std::map<std::string, ProvisionedService> services_;
  AllocationMap allocation_;
  std::vector<AllocationListener*> listeners_;
  std::function<void(const std::string&)> on_drain_timeout_;
};

}  // namespace prioflow
