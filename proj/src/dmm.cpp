#include "prioflow/dmm.hpp"

#include <algorithm>
#include <stdexcept>

#include "prioflow/error.hpp"
#include "prioflow/json_util.hpp"

namespace prioflow {

void validate_request(const DataflowRequest& req) {
  if (req.request_id.empty()) throw Error(ErrorCode::kInvalidArgument, "request_id: must be non-empty");
  if (req.bytes == 0) throw Error(ErrorCode::kInvalidArgument, "bytes: must be positive");
  if (req.src_site.empty()) throw Error(ErrorCode::kInvalidArgument, "src_site: must be non-empty");
  if (req.dst_site.empty()) throw Error(ErrorCode::kInvalidArgument, "dst_site: must be non-empty");
  if (req.src_site == req.dst_site) {
    throw Error(ErrorCode::kInvalidArgument, "dst_site: must differ from src_site '" + req.src_site + "'");
  }
  if (req.priority < kMinPriority || req.priority > kMaxPriority) {
    throw Error(ErrorCode::kInvalidArgument, "priority: " + std::to_string(req.priority) + " outside [1,100]");
  }
}

DataflowRequest request_from_json(const nlohmann::json& body) {
  if (!body.is_object()) throw Error(ErrorCode::kInvalidArgument, "body: expected a JSON object");
  auto string_field = [&](const char* key) {
    if (!body.contains(key)) throw Error(ErrorCode::kInvalidArgument, std::string(key) + ": missing");
    if (!body[key].is_string()) throw Error(ErrorCode::kInvalidArgument, std::string(key) + ": expected a string");
    return body[key].get<std::string>();
  };
  DataflowRequest req;
  req.request_id = string_field("request_id");
  req.src_site = string_field("src_site");
  req.dst_site = string_field("dst_site");
  if (!body.contains("bytes")) throw Error(ErrorCode::kInvalidArgument, "bytes: missing");
  const auto& bytes = body["bytes"];
  if (!is_non_negative_integer(bytes) || bytes.get<std::uint64_t>() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "bytes: expected a positive integer");
  }
  req.bytes = body["bytes"].get<std::uint64_t>();
  if (body.contains("priority")) {
    if (!body["priority"].is_number_integer()) {
      throw Error(ErrorCode::kInvalidArgument, "priority: expected an integer");
    }
    const auto p = body["priority"].get<std::int64_t>();
    if (p < kMinPriority || p > kMaxPriority) {
      throw Error(ErrorCode::kInvalidArgument, "priority: " + std::to_string(p) + " outside [1,100]");
    }
    req.priority = static_cast<int>(p);
  }
  validate_request(req);
  return req;
}

std::string_view to_string(LifecycleState s) {
  switch (s) {
    case LifecycleState::kRequested: return "REQUESTED";
    case LifecycleState::kNegotiated: return "NEGOTIATED";
    case LifecycleState::kProvisioned: return "PROVISIONED";
    case LifecycleState::kActive: return "ACTIVE";
    case LifecycleState::kDraining: return "DRAINING";
    case LifecycleState::kReleased: return "RELEASED";
    case LifecycleState::kFailed: return "FAILED";
  }
  return "UNKNOWN";
}

bool is_legal_transition(LifecycleState from, LifecycleState to) {
  using S = LifecycleState;
  if (to == S::kFailed) return from != S::kFailed && from != S::kReleased;
  switch (from) {
    case S::kRequested: return to == S::kNegotiated;
    case S::kNegotiated: return to == S::kProvisioned;
    case S::kProvisioned: return to == S::kActive;
    case S::kActive: return to == S::kDraining || to == S::kReleased;
    case S::kDraining: return to == S::kReleased;
    case S::kReleased:
    case S::kFailed: return false;
  }
  return false;
}

nlohmann::json to_json(const ServiceResponse& r) {
  return {{"service_id", r.service_id},
          {"src_subnet", r.src_subnet.to_string()},
          {"dst_subnet", r.dst_subnet.to_string()},
          {"src_endpoint_host", r.src_endpoint_host},
          {"dst_endpoint_host", r.dst_endpoint_host},
          {"guaranteed_rate_gbps", r.guaranteed_rate}};
}

nlohmann::json to_json(const Acknowledgment& a) {
  return {{"service_id", a.service_id},
          {"state", to_string(a.state)},
          {"guaranteed_rate_gbps", a.guaranteed_rate},
          {"rate_gbps", a.rate}};
}

nlohmann::json to_json(const StatusSnapshot& s) {
  const auto& inst = s.instance;
  nlohmann::json out = {{"service_id", inst.service_id},
                        {"request_id", inst.request.request_id},
                        {"state", to_string(inst.state)},
                        {"best_effort", inst.best_effort},
                        {"priority", inst.request.priority},
                        {"bytes", inst.request.bytes},
                        {"src_site", inst.request.src_site},
                        {"dst_site", inst.request.dst_site},
                        {"guaranteed_rate_gbps", s.guaranteed_rate},
                        {"rate_gbps", s.rate},
                        {"bytes_moved", s.bytes_moved}};
  if (inst.src_director) {
    out["src_director"] = inst.src_director->id;
    out["src_subnet"] = inst.src_director->subnet.to_string();
  }
  if (inst.dst_director) {
    out["dst_director"] = inst.dst_director->id;
    out["dst_subnet"] = inst.dst_director->subnet.to_string();
  }
  if (inst.drain_deadline) out["drain_deadline"] = *inst.drain_deadline;
  if (inst.successor) out["successor"] = *inst.successor;
  if (inst.predecessor) out["predecessor"] = *inst.predecessor;
  return out;
}

Dmm::Dmm(Kernel& kernel, RseCatalog& catalog, Orchestrator& orchestrator, SiteRm& site_rm)
    : kernel_(kernel), catalog_(catalog), orchestrator_(orchestrator), site_rm_(site_rm) {
  orchestrator_.set_drain_timeout_handler([this](const std::string& id) { release(id, "drain-timeout"); });
}

ServiceInstance& Dmm::mutable_instance(const std::string& service_id) {
  auto it = instances_.find(service_id);
  if (it == instances_.end()) throw Error(ErrorCode::kNotFound, "unknown service " + service_id);
  return it->second;
}

const ServiceInstance& Dmm::instance(const std::string& service_id) const {
  auto it = instances_.find(service_id);
  if (it == instances_.end()) throw Error(ErrorCode::kNotFound, "unknown service " + service_id);
  return it->second;
}

void Dmm::transition(ServiceInstance& inst, LifecycleState to) {
  if (!is_legal_transition(inst.state, to)) {
    throw std::logic_error("undeclared lifecycle transition " + std::string(to_string(inst.state)) + " -> " +
                           std::string(to_string(to)) + " for " + inst.service_id);
  }
  transitions_.push_back({kernel_.now(), inst.service_id, inst.state, to});
  inst.state = to;
}

void Dmm::require_state(const ServiceInstance& inst, std::initializer_list<LifecycleState> allowed,
                        std::string_view op) const {
  if (std::find(allowed.begin(), allowed.end(), inst.state) == allowed.end()) {
    throw Error(ErrorCode::kIllegalState, std::string(op) + ": service " + inst.service_id + " is " +
                                              std::string(to_string(inst.state)));
  }
}

ServiceResponse Dmm::response_for(const ServiceInstance& inst) const {
  ServiceResponse r;
  r.service_id = inst.service_id;
  r.src_subnet = inst.src_director->subnet;
  r.dst_subnet = inst.dst_director->subnet;
  r.src_endpoint_host = inst.src_director->endpoint_host;
  r.dst_endpoint_host = inst.dst_director->endpoint_host;
  r.guaranteed_rate = orchestrator_.service(inst.service_id).guaranteed_rate;
  return r;
}

Acknowledgment Dmm::ack_for(const ServiceInstance& inst) const {
  Acknowledgment a;
  a.service_id = inst.service_id;
  a.state = inst.state;
  if (orchestrator_.has(inst.service_id)) {
    const auto& svc = orchestrator_.service(inst.service_id);
    a.guaranteed_rate = svc.guaranteed_rate;
    a.rate = svc.rate;
  }
  return a;
}

ServiceResponse Dmm::submit_request(const DataflowRequest& req) {
  validate_request(req);
  if (!catalog_.has_site(req.src_site)) {
    throw Error(ErrorCode::kInvalidArgument, "src_site: no storage element at site '" + req.src_site + "'");
  }
  if (!catalog_.has_site(req.dst_site)) {
    throw Error(ErrorCode::kInvalidArgument, "dst_site: no storage element at site '" + req.dst_site + "'");
  }
  Path path = orchestrator_.route(req.src_site, req.dst_site);

  const std::string id = "svc-" + std::to_string(next_service_++);
  auto& inst = instances_.emplace(id, ServiceInstance{}).first->second;
  inst.service_id = id;
  inst.request = req;
  transitions_.push_back({kernel_.now(), id, std::nullopt, LifecycleState::kRequested});

  auto& src_pool = catalog_.pool_at_site(req.src_site);
  auto& dst_pool = catalog_.pool_at_site(req.dst_site);
  bool src_held = false, dst_held = false, provisioned = false;
  try {
    inst.src_director = src_pool.allocate(id);
    src_held = true;
    inst.dst_director = dst_pool.allocate(id);
    dst_held = true;
    transition(inst, LifecycleState::kNegotiated);

    orchestrator_.provision(id, FlowSpec{id, std::move(path), req.priority, std::nullopt});
    provisioned = true;
    transition(inst, LifecycleState::kProvisioned);

    site_rm_.install_service_rules(id, req.src_site, *inst.src_director, req.dst_site, *inst.dst_director);
    transition(inst, LifecycleState::kActive);
  } catch (const Error&) {
    if (provisioned) orchestrator_.teardown(id);
    if (dst_held) dst_pool.release(id);
    if (src_held) src_pool.release(id);
    transition(inst, LifecycleState::kFailed);
    throw;
  }
  return response_for(inst);
}

Acknowledgment Dmm::update_priority(const std::string& service_id, int new_priority) {
  auto& inst = mutable_instance(service_id);
  require_state(inst, {LifecycleState::kActive}, "update_priority");
  if (new_priority < kMinPriority || new_priority > kMaxPriority) {
    throw Error(ErrorCode::kInvalidArgument, "priority: " + std::to_string(new_priority) + " outside [1,100]");
  }
  orchestrator_.set_weight(service_id, new_priority);
  inst.request.priority = new_priority;
  inst.best_effort = false;
  return ack_for(inst);
}

Acknowledgment Dmm::demote_to_best_effort(const std::string& service_id) {
  auto& inst = mutable_instance(service_id);
  require_state(inst, {LifecycleState::kActive}, "demote");
  orchestrator_.set_weight(service_id, 0);
  inst.best_effort = true;
  return ack_for(inst);
}

Acknowledgment Dmm::mark_fts_done(const std::string& service_id) {
  auto& inst = mutable_instance(service_id);
  require_state(inst, {LifecycleState::kActive, LifecycleState::kDraining}, "fts-done");
  release(service_id, "fts-done");
  return ack_for(inst);
}

void Dmm::release(const std::string& service_id, const std::string& /*reason*/) {
  auto& inst = mutable_instance(service_id);
  if (inst.state != LifecycleState::kActive && inst.state != LifecycleState::kDraining) return;
  site_rm_.remove_service_rules(service_id);
  orchestrator_.teardown(service_id);
  catalog_.pool_at_site(inst.request.src_site).release(service_id);
  catalog_.pool_at_site(inst.request.dst_site).release(service_id);
  transition(inst, LifecycleState::kReleased);
  for (const auto& l : release_listeners_) l(service_id);
}

ServiceResponse Dmm::change_strategy(const std::string& service_id, std::optional<int> new_priority) {
  auto& old = mutable_instance(service_id);
  require_state(old, {LifecycleState::kActive}, "change_strategy");
  if (new_priority && (*new_priority < kMinPriority || *new_priority > kMaxPriority)) {
    throw Error(ErrorCode::kInvalidArgument, "priority: " + std::to_string(*new_priority) + " outside [1,100]");
  }
  DataflowRequest req = old.request;
  if (new_priority) req.priority = *new_priority;
  Path path = orchestrator_.route(req.src_site, req.dst_site);

  auto& src_pool = catalog_.pool_at_site(req.src_site);
  auto& dst_pool = catalog_.pool_at_site(req.dst_site);
  const std::string id = "svc-" + std::to_string(next_service_);
  // Check both pools before touching either so a rejection leaves no trace.
  if (src_pool.free().empty() || dst_pool.free().empty()) {
    throw Error(ErrorCode::kExhausted, "change_strategy: subnet pool exhausted at " +
                                           (src_pool.free().empty() ? req.src_site : req.dst_site));
  }
  ++next_service_;
  auto& inst = instances_.emplace(id, ServiceInstance{}).first->second;
  inst.service_id = id;
  inst.request = req;
  inst.predecessor = service_id;
  transitions_.push_back({kernel_.now(), id, std::nullopt, LifecycleState::kRequested});
  inst.src_director = src_pool.allocate(id);
  inst.dst_director = dst_pool.allocate(id);
  transition(inst, LifecycleState::kNegotiated);

  const int weight = old.best_effort && !new_priority ? 0 : req.priority;
  inst.best_effort = weight == 0;
  orchestrator_.change_strategy(service_id, id, FlowSpec{id, std::move(path), weight, std::nullopt});
  transition(inst, LifecycleState::kProvisioned);
  transition(old, LifecycleState::kDraining);
  old.drain_deadline = orchestrator_.service(service_id).drain_deadline;
  old.successor = id;
  site_rm_.install_service_rules(id, req.src_site, *inst.src_director, req.dst_site, *inst.dst_director);
  transition(inst, LifecycleState::kActive);
  return response_for(inst);
}

StatusSnapshot Dmm::query_status(const std::string& service_id) const {
  StatusSnapshot s;
  s.instance = instance(service_id);
  if (orchestrator_.has(service_id)) {
    const auto& svc = orchestrator_.service(service_id);
    s.guaranteed_rate = svc.guaranteed_rate;
    s.rate = svc.rate;
  }
  if (progress_) s.bytes_moved = progress_(service_id);
  return s;
}

}  // namespace prioflow
