#include "prioflow/simulation.hpp"

#include <cmath>
#include <set>

#include "prioflow/error.hpp"
#include "prioflow/format.hpp"

namespace prioflow {

namespace {

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kParse, std::string("config.") + key + ": wrong type");
  }
}

constexpr double kAuditTolerance = 1e-9;

}  // namespace

SimulationConfig config_from_json(const nlohmann::json& doc) {
  SimulationConfig c;
  if (doc.is_null()) return c;
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "config: expected an object");
  read_opt(doc, "batch_size", c.fts.batch_size);
  read_opt(doc, "max_active_jobs", c.fts.max_active_jobs);
  read_opt(doc, "max_pending_batches", c.fts.max_pending_batches);
  read_opt(doc, "max_retries", c.fts.max_retries);
  read_opt(doc, "drain_fraction", c.drain.fraction);
  read_opt(doc, "drain_floor_gbps", c.drain.floor_gbps);
  read_opt(doc, "drain_window_s", c.drain.window_s);
  read_opt(doc, "enforce_manageable_cap", c.allocation.enforce_manageable_cap);
  read_opt(doc, "priority_dscp", c.site_rm.priority_dscp);
  read_opt(doc, "best_effort_dscp", c.site_rm.best_effort_dscp);
  read_opt(doc, "auto_release", c.auto_release);
  read_opt(doc, "default_file_count", c.default_file_count);
  if (c.fts.batch_size == 0 || c.fts.max_active_jobs == 0 || c.fts.max_pending_batches == 0) {
    throw Error(ErrorCode::kParse, "config: batch_size, max_active_jobs and max_pending_batches must be positive");
  }
  if (c.fts.max_retries < 0) throw Error(ErrorCode::kParse, "config.max_retries: must be non-negative");
  if (!(c.drain.fraction > 0.0 && c.drain.fraction <= 1.0)) {
    throw Error(ErrorCode::kParse, "config.drain_fraction: must be in (0,1]");
  }
  if (c.drain.floor_gbps < 0.0) throw Error(ErrorCode::kParse, "config.drain_floor_gbps: must be non-negative");
  if (c.drain.window_s < 0.0) throw Error(ErrorCode::kParse, "config.drain_window_s: must be non-negative");
  if (c.site_rm.priority_dscp < 0 || c.site_rm.priority_dscp > 63 || c.site_rm.best_effort_dscp < 0 ||
      c.site_rm.best_effort_dscp > 63) {
    throw Error(ErrorCode::kParse, "config: dscp values must be in [0,63]");
  }
  if (c.site_rm.priority_dscp == 0) throw Error(ErrorCode::kParse, "config.priority_dscp: must be nonzero");
  if (c.default_file_count == 0) throw Error(ErrorCode::kParse, "config.default_file_count: must be positive");
  return c;
}

nlohmann::json to_json(const SimulationConfig& c) {
  return {{"batch_size", c.fts.batch_size},
          {"max_active_jobs", c.fts.max_active_jobs},
          {"max_pending_batches", c.fts.max_pending_batches},
          {"max_retries", c.fts.max_retries},
          {"drain_fraction", c.drain.fraction},
          {"drain_floor_gbps", c.drain.floor_gbps},
          {"drain_window_s", c.drain.window_s},
          {"enforce_manageable_cap", c.allocation.enforce_manageable_cap},
          {"priority_dscp", c.site_rm.priority_dscp},
          {"best_effort_dscp", c.site_rm.best_effort_dscp},
          {"auto_release", c.auto_release},
          {"default_file_count", c.default_file_count}};
}

void Recorder::violation(bool AuditResult::*flag, std::string message) {
  audit_.*flag = false;
  if (audit_.violations.size() < 100) {
    audit_.violations.push_back("t=" + format_number(sim_.kernel().now()) + " " + std::move(message));
  }
}

void Recorder::after_reallocation(const AllocationMap& allocation) {
  ++recomputations_;
  const SimTime now = sim_.kernel().now();
  const auto& services = sim_.orchestrator().services();

  for (const auto& [id, svc] : services) {
    auto it = last_rate_.find(id);
    if (it == last_rate_.end() || it->second != svc.rate) {
      rates_.push_back({now, id, svc.rate});
      last_rate_[id] = svc.rate;
    }
  }
  for (auto it = last_rate_.begin(); it != last_rate_.end();) {
    if (!services.contains(it->first)) {
      rates_.push_back({now, it->first, 0.0});
      it = last_rate_.erase(it);
    } else {
      ++it;
    }
  }

  for (const auto& [label, usage] : allocation.links) {
    const std::pair<double, double> cur{usage.priority_total, usage.best_effort_total};
    auto it = last_link_.find(label);
    if (it == last_link_.end() || it->second != cur) {
      links_.push_back({now, label, usage.priority_total, usage.best_effort_total});
      last_link_[label] = cur;
    }
    const double tol = kAuditTolerance * std::max(1.0, usage.capacity);
    if (usage.priority_total > usage.manageable + tol) {
      violation(&AuditResult::cap, "link " + label + " priority " + format_number(usage.priority_total) +
                                       " exceeds manageable " + format_number(usage.manageable));
    }
    if (usage.residual() < usage.capacity - usage.manageable - tol) {
      violation(&AuditResult::reserve, "link " + label + " best-effort residual " + format_number(usage.residual()) +
                                           " below reserve " + format_number(usage.capacity - usage.manageable));
    }
    if (usage.priority_total + usage.best_effort_total > usage.capacity + tol) {
      violation(&AuditResult::cap, "link " + label + " oversubscribed");
    }
  }

  for (const auto& [id, svc] : services) {
    if (svc.state == ProvisionState::kActive && !svc.flow.best_effort() && !(svc.guaranteed_rate > 0.0)) {
      violation(&AuditResult::guaranteed_positive, "active priority service " + id + " has no guaranteed rate");
    }
  }

  for (const auto& [site, pool] : sim_.catalog().pools()) {
    std::set<std::string> held;
    for (const auto& [svc, dir] : pool.allocated()) {
      if (!held.insert(dir).second) violation(&AuditResult::subnet_uniqueness, "director " + dir + " allocated twice");
      if (pool.free().contains(dir)) violation(&AuditResult::subnet_uniqueness, "director " + dir + " both free and held");
    }
    if (held.size() + pool.free().size() != pool.size()) {
      violation(&AuditResult::subnet_uniqueness, "pool at " + site + " lost a director");
    }
  }
}

void Recorder::final_sweep() {
  for (const auto& t : sim_.dmm().transitions()) {
    const bool ok = t.from ? is_legal_transition(*t.from, t.to) : t.to == LifecycleState::kRequested;
    if (!ok) violation(&AuditResult::lifecycle, "undeclared transition for " + t.service_id);
  }
  for (const auto& rule : sim_.site_rm().rules()) {
    const auto& inst = sim_.dmm().instance(rule.wan_service_id);
    if (!sim_.orchestrator().has(rule.wan_service_id) ||
        (inst.state != LifecycleState::kActive && inst.state != LifecycleState::kDraining)) {
      violation(&AuditResult::rule_consistency, "rule " + std::to_string(rule.rule_id) + " outlived service " +
                                                    rule.wan_service_id);
    }
  }
  for (const auto& [id, df] : sim_.engine().dataflows()) {
    const auto status = sim_.engine().dataflow_status(id);
    if (status.done && status.bytes_moved != status.total_bytes) {
      violation(&AuditResult::conservation, "dataflow " + id + " moved " + std::to_string(status.bytes_moved) +
                                                " of " + std::to_string(status.total_bytes) + " bytes");
    }
  }
  for (const auto& [key, job] : sim_.engine().jobs()) {
    auto it = sim_.frozen_pfns().find(key);
    if (it == sim_.frozen_pfns().end() || it->second.first != job.src_pfn || it->second.second != job.dst_pfn) {
      violation(&AuditResult::pfn_immutability, "job " + key + " PFNs changed after submission");
    }
  }
}

Simulation::Simulation(Topology topo, RseCatalog catalog, SimulationConfig config, std::uint64_t seed)
    : topo_(std::move(topo)),
      catalog_(std::move(catalog)),
      config_(config),
      rng_(seed),
      orchestrator_(topo_, kernel_, config_.drain, config_.allocation),
      site_rm_(orchestrator_,
               [&] {
                 std::vector<std::string> names;
                 for (const auto& s : topo_.sites()) names.push_back(s.name);
                 return names;
               }(),
               config_.site_rm),
      dmm_(kernel_, catalog_, orchestrator_, site_rm_),
      engine_(kernel_, catalog_, config_.fts),
      planner_(kernel_, dmm_, engine_, RucioPlanner::Options{config_.auto_release}),
      recorder_(*this) {
  auto violations = validate_topology(topo_, catalog_.sites());
  if (!violations.empty()) {
    throw Error(ErrorCode::kInvalidArgument, violations.front().element + ": " + violations.front().message);
  }
  orchestrator_.add_listener(&engine_);
  orchestrator_.add_listener(&site_rm_);
  orchestrator_.add_listener(&recorder_);
  dmm_.set_progress_provider([this](const std::string& id) { return engine_.bytes_moved_for_service(id); });
  dmm_.add_release_listener([this](const std::string& id) { engine_.service_released(id); });
  engine_.on_job_submitted = [this](const TransferJob& job) {
    frozen_pfns_[TransferEngine::job_key(job.dataflow_id, job.index)] = {job.src_pfn, job.dst_pfn};
  };
  for (const auto& s : topo_.sites()) {
    site_rm_.install_tor_config(
        TorQueueConfig{s.name, {{config_.site_rm.priority_dscp, 1}, {config_.site_rm.best_effort_dscp, 0}}});
  }
}

ServiceResponse Simulation::submit(const DataflowRequest& req, const DataflowFiles& files) {
  validate_request(req);
  if (engine_.dataflows().contains(req.request_id)) {
    throw Error(ErrorCode::kDuplicate, "request_id: dataflow '" + req.request_id + "' already exists");
  }
  std::vector<FileSpec> list;
  if (files.files) {
    list = *files.files;
    std::uint64_t total = 0;
    for (const auto& f : list) total += f.size;
    if (total != req.bytes) {
      throw Error(ErrorCode::kInvalidArgument, "files: sizes sum to " + std::to_string(total) + " but bytes is " +
                                                   std::to_string(req.bytes));
    }
    // Validates the list before anything is allocated.
    make_dataflow(req.request_id, list, "", "", "");
  }
  auto response = dmm_.submit_request(req);
  if (!files.files) {
    list = split_files(req.request_id, req.bytes, files.count.value_or(config_.default_file_count), files.size_spread,
                       &rng_);
  }
  planner_.start(make_dataflow(req.request_id, std::move(list), catalog_.at_site(req.src_site).name,
                               catalog_.at_site(req.dst_site).name, response.service_id));
  return response;
}

const std::string& Simulation::service_of(const std::string& dataflow_id) const {
  return engine_.dataflow(dataflow_id).service_id;
}

}  // namespace prioflow
