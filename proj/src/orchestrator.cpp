#include "prioflow/orchestrator.hpp"

#include <algorithm>

#include "prioflow/error.hpp"

namespace prioflow {

std::string_view to_string(ProvisionState s) {
  return s == ProvisionState::kActive ? "ACTIVE" : "DRAINING";
}

Orchestrator::Orchestrator(const Topology& topo, Kernel& kernel, DrainConfig drain, AllocationOptions options)
    : topo_(topo), kernel_(kernel), drain_(drain), options_(options) {
  allocation_ = compute_allocations(topo_, {}, options_);
}

ProvisionedService& Orchestrator::mutable_service(const std::string& service_id) {
  auto it = services_.find(service_id);
  if (it == services_.end()) throw Error(ErrorCode::kNotFound, "unknown service " + service_id);
  return it->second;
}

const ProvisionedService& Orchestrator::service(const std::string& service_id) const {
  auto it = services_.find(service_id);
  if (it == services_.end()) throw Error(ErrorCode::kNotFound, "unknown service " + service_id);
  return it->second;
}

void Orchestrator::validate_flow(const FlowSpec& flow) const {
  if (flow.path.empty()) throw Error(ErrorCode::kNoPath, "flow " + flow.flow_id + " has no path");
  if (flow.weight < 0) throw Error(ErrorCode::kInvalidArgument, "negative weight");
  // compute_allocations() rejects hops that do not follow links.
  compute_allocations(topo_, {flow}, options_);
}

template <typename Mutation>
void Orchestrator::reallocate(const std::string& reason, Mutation&& mutate) {
  for (auto* l : listeners_) l->before_reallocation();
  mutate();
  std::vector<FlowSpec> flows;
  flows.reserve(services_.size());
  for (const auto& [id, svc] : services_) flows.push_back(svc.flow);
  allocation_ = compute_allocations(topo_, flows, options_);
  for (auto& [id, svc] : services_) {
    svc.rate = allocation_.rate_of(id);
    svc.guaranteed_rate = svc.flow.best_effort() ? 0.0 : svc.rate;
    if (svc.state == ProvisionState::kActive) svc.last_active_rate = svc.guaranteed_rate;
  }
  kernel_.record(EventKind::kRateRecompute, reason);
  for (auto* l : listeners_) l->after_reallocation(allocation_);
}

const ProvisionedService& Orchestrator::provision(const std::string& service_id, FlowSpec flow) {
  if (services_.contains(service_id)) {
    throw Error(ErrorCode::kDuplicate, "service " + service_id + " already provisioned");
  }
  flow.flow_id = service_id;
  validate_flow(flow);
  reallocate("provision " + service_id, [&] {
    ProvisionedService svc;
    svc.service_id = service_id;
    svc.flow = std::move(flow);
    services_.emplace(service_id, std::move(svc));
  });
  return services_.at(service_id);
}

const ProvisionedService& Orchestrator::set_weight(const std::string& service_id, int weight) {
  auto& svc = mutable_service(service_id);
  if (svc.state != ProvisionState::kActive) {
    throw Error(ErrorCode::kIllegalState, "service " + service_id + " is DRAINING");
  }
  if (weight < 0) throw Error(ErrorCode::kInvalidArgument, "negative weight");
  reallocate("weight " + service_id + "=" + std::to_string(weight), [&] { svc.flow.weight = weight; });
  return svc;
}

std::pair<const ProvisionedService*, const ProvisionedService*> Orchestrator::change_strategy(
    const std::string& service_id, const std::string& new_service_id, FlowSpec new_flow) {
  auto& old = mutable_service(service_id);
  if (old.state != ProvisionState::kActive) {
    throw Error(ErrorCode::kIllegalState, "service " + service_id + " is already DRAINING");
  }
  if (services_.contains(new_service_id)) {
    throw Error(ErrorCode::kDuplicate, "service " + new_service_id + " already provisioned");
  }
  new_flow.flow_id = new_service_id;
  validate_flow(new_flow);

  const SimTime deadline = kernel_.now() + drain_.window_s;
  reallocate("change-strategy " + service_id + "->" + new_service_id, [&] {
    old.state = ProvisionState::kDraining;
    old.drain_deadline = deadline;
    if (old.flow.best_effort()) {
      // Best-effort traffic keeps sharing the unmanaged remainder.
      old.drain_rate = 0.0;
    } else {
      const double previous = old.last_active_rate;
      const double target = std::max(drain_.floor_gbps, drain_.fraction * previous);
      old.drain_rate = std::min(target, previous);
      old.flow.weight = 1;
      old.flow.demand_gbps = *old.drain_rate > 0.0 ? std::optional<double>(*old.drain_rate)
                                                    : std::optional<double>(std::nullopt);
    }
    old.drain_timeout = kernel_.schedule(deadline, EventKind::kDrainTimeout, "drain-timeout " + service_id,
                                         [this, service_id] {
                                           auto it = services_.find(service_id);
                                           if (it == services_.end()) return;
                                           it->second.drain_timeout.reset();
                                           if (on_drain_timeout_) {
                                             on_drain_timeout_(service_id);
                                           } else {
                                             teardown(service_id);
                                           }
                                         });
    ProvisionedService fresh;
    fresh.service_id = new_service_id;
    fresh.flow = std::move(new_flow);
    services_.emplace(new_service_id, std::move(fresh));
  });
  return {&services_.at(service_id), &services_.at(new_service_id)};
}

const AllocationMap& Orchestrator::teardown(const std::string& service_id) {
  auto& svc = mutable_service(service_id);
  reallocate("teardown " + service_id, [&] {
    if (svc.drain_timeout) kernel_.cancel(*svc.drain_timeout);
    services_.erase(service_id);
  });
  return allocation_;
}

}  // namespace prioflow
