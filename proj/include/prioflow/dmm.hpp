#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prioflow/orchestrator.hpp"
#include "prioflow/rse.hpp"
#include "prioflow/sim_core.hpp"
#include "prioflow/site_rm.hpp"

namespace prioflow {

inline constexpr int kMinPriority = 1;
inline constexpr int kMaxPriority = 100;

/// What Rucio hands the data movement manager.
struct DataflowRequest {
  std::string request_id;
  std::uint64_t bytes = 0;
  std::string src_site;
  std::string dst_site;
  int priority = 1;
};

/// Throws Error(kInvalidArgument) naming the offending field.
void validate_request(const DataflowRequest& req);
/// Field-level parse of a request body. Unknown fields are ignored.
DataflowRequest request_from_json(const nlohmann::json& body);

enum class LifecycleState { kRequested, kNegotiated, kProvisioned, kActive, kDraining, kReleased, kFailed };
std::string_view to_string(LifecycleState s);
bool is_legal_transition(LifecycleState from, LifecycleState to);

struct ServiceInstance {
  std::string service_id;
  DataflowRequest request;
  LifecycleState state = LifecycleState::kRequested;
  std::optional<Director> src_director;
  std::optional<Director> dst_director;
  bool best_effort = false;
  std::optional<SimTime> drain_deadline;
  std::optional<std::string> successor;
  std::optional<std::string> predecessor;
};

struct ServiceResponse {
  std::string service_id;
  Ipv6Prefix src_subnet;
  Ipv6Prefix dst_subnet;
  std::string src_endpoint_host;
  std::string dst_endpoint_host;
  double guaranteed_rate = 0.0;
};
nlohmann::json to_json(const ServiceResponse& r);

struct Acknowledgment {
  std::string service_id;
  LifecycleState state = LifecycleState::kActive;
  double guaranteed_rate = 0.0;
  double rate = 0.0;
};
nlohmann::json to_json(const Acknowledgment& a);

struct StatusSnapshot {
  ServiceInstance instance;
  double guaranteed_rate = 0.0;
  double rate = 0.0;
  std::uint64_t bytes_moved = 0;
};
nlohmann::json to_json(const StatusSnapshot& s);

struct Transition {
  SimTime time = 0.0;
  std::string service_id;
  /// Empty for the creation record.
  std::optional<LifecycleState> from;
  LifecycleState to = LifecycleState::kRequested;
};

/// Data movement manager. Binds each accepted request to one director (and
/// so one IPv6 subnet) at both ends, provisions the WAN service, installs the
/// site steering rules, and drives the lifecycle to RELEASED.
class Dmm {
 public:
  Dmm(Kernel& kernel, RseCatalog& catalog, Orchestrator& orchestrator, SiteRm& site_rm);

  /// Atomic: on any error neither subnet pool changes.
  ServiceResponse submit_request(const DataflowRequest& req);
  Acknowledgment update_priority(const std::string& service_id, int new_priority);
  Acknowledgment demote_to_best_effort(const std::string& service_id);
  /// Tear down and release subnets. Accepts ACTIVE or DRAINING services.
  Acknowledgment mark_fts_done(const std::string& service_id);
  /// Moves the service to DRAINING and provisions a successor on fresh
  /// directors at both ends. Returns the successor.
  ServiceResponse change_strategy(const std::string& service_id, std::optional<int> new_priority = std::nullopt);
  StatusSnapshot query_status(const std::string& service_id) const;

  const ServiceInstance& instance(const std::string& service_id) const;
  const std::map<std::string, ServiceInstance>& instances() const noexcept { return instances_; }
  const std::vector<Transition>& transitions() const noexcept { return transitions_; }

  void set_progress_provider(std::function<std::uint64_t(const std::string&)> provider) {
    progress_ = std::move(provider);
  }
  /// Called after a service reaches RELEASED.
  void add_release_listener(std::function<void(const std::string&)> listener) {
    release_listeners_.push_back(std::move(listener));
  }

 private:
  ServiceInstance& mutable_instance(const std::string& service_id);
  void transition(ServiceInstance& inst, LifecycleState to);
  void release(const std::string& service_id, const std::string& reason);
  ServiceResponse response_for(const ServiceInstance& inst) const;
  Acknowledgment ack_for(const ServiceInstance& inst) const;
  void require_state(const ServiceInstance& inst, std::initializer_list<LifecycleState> allowed,
                     std::string_view op) const;

  Kernel& kernel_;
  RseCatalog& catalog_;
  Orchestrator& orchestrator_;
  SiteRm& site_rm_;
  std::map<std::string, ServiceInstance> instances_;
  std::vector<Transition> transitions_;
  std::uint64_t next_service_ = 1;
  std::function<std::uint64_t(const std::string&)> progress_;
  std::vector<std::function<void(const std::string&)>> release_listeners_;
};

}  // namespace prioflow
