#include "prioflow/site_rm.hpp"

#include <algorithm>
#include <tuple>

#include "prioflow/error.hpp"
#include "prioflow/format.hpp"

namespace prioflow {

std::string_view to_string(RuleScope scope) {
  switch (scope) {
    case RuleScope::kEdgeRouterPolicyRoute: return "edge-router-policy-route";
    case RuleScope::kDtnTrafficControl: return "dtn-traffic-control";
    case RuleScope::kDtnPacketMark: return "dtn-packet-mark";
  }
  return "unknown";
}

SiteRm::SiteRm(const Orchestrator& orchestrator, std::vector<std::string> sites, SiteRmConfig config)
    : orchestrator_(orchestrator), sites_(std::move(sites)), config_(config) {
  std::sort(sites_.begin(), sites_.end());
}

void SiteRm::install_tor_config(TorQueueConfig config) {
  if (!std::binary_search(sites_.begin(), sites_.end(), config.site)) {
    throw Error(ErrorCode::kNotFound, "unknown site " + config.site);
  }
  if (tor_.contains(config.site)) {
    throw Error(ErrorCode::kDuplicate, "top-of-rack queues at " + config.site + " are already configured");
  }
  const std::string site = config.site;
  tor_.emplace(site, std::move(config));
}

const TorQueueConfig* SiteRm::tor_config(std::string_view site) const {
  auto it = tor_.find(std::string(site));
  return it == tor_.end() ? nullptr : &it->second;
}

void SiteRm::refresh(SteeringRule& rule) const {
  const auto& svc = orchestrator_.service(rule.wan_service_id);
  rule.rate_gbps = svc.rate;
  rule.dscp = svc.flow.best_effort() ? config_.best_effort_dscp : config_.priority_dscp;
}

std::vector<SteeringRule> SiteRm::install_service_rules(const std::string& service_id, const std::string& src_site,
                                                        const Director& src_director, const std::string& dst_site,
                                                        const Director& dst_director) {
  const auto& svc = orchestrator_.service(service_id);
  if (svc.state != ProvisionState::kActive) {
    throw Error(ErrorCode::kIllegalState, "service " + service_id + " is not ACTIVE");
  }
  for (const auto& [id, r] : rules_) {
    if (r.wan_service_id == service_id) {
      throw Error(ErrorCode::kDuplicate, "rules for service " + service_id + " already installed");
    }
  }
  const std::pair<const std::string*, const Director*> ends[] = {{&src_site, &src_director},
                                                                 {&dst_site, &dst_director}};
  for (const auto& [site, dir] : ends) {
    if (!std::binary_search(sites_.begin(), sites_.end(), *site)) {
      throw Error(ErrorCode::kNotFound, "unknown site " + *site);
    }
    for (const auto& [id, r] : rules_) {
      if (r.scope == RuleScope::kEdgeRouterPolicyRoute && r.site == *site && r.subnet == dir->subnet) {
        throw Error(ErrorCode::kDuplicate, "subnet " + dir->subnet.to_string() + " at " + *site +
                                               " is already routed for service " + r.wan_service_id);
      }
    }
  }

  std::vector<SteeringRule> installed;
  for (const auto& [site, dir] : ends) {
    for (auto scope : {RuleScope::kEdgeRouterPolicyRoute, RuleScope::kDtnTrafficControl, RuleScope::kDtnPacketMark}) {
      SteeringRule rule;
      rule.rule_id = next_rule_id_++;
      rule.site = *site;
      rule.subnet = dir->subnet;
      rule.wan_service_id = service_id;
      rule.scope = scope;
      refresh(rule);
      rules_.emplace(rule.rule_id, rule);
      installed.push_back(rule);
    }
  }
  return installed;
}

std::size_t SiteRm::remove_service_rules(const std::string& service_id) {
  const auto removed = std::erase_if(rules_, [&](const auto& kv) { return kv.second.wan_service_id == service_id; });
  if (removed == 0) throw Error(ErrorCode::kNotFound, "no rules installed for service " + service_id);
  return removed;
}

std::vector<SteeringRule> SiteRm::rules() const {
  std::vector<SteeringRule> out;
  for (const auto& [id, r] : rules_) out.push_back(r);
  return out;
}

std::vector<SteeringRule> SiteRm::rules_for(const std::string& service_id) const {
  std::vector<SteeringRule> out;
  for (const auto& [id, r] : rules_) {
    if (r.wan_service_id == service_id) out.push_back(r);
  }
  return out;
}

std::vector<DtnQosEntry> SiteRm::dtn_qos(std::string_view site) const {
  std::vector<DtnQosEntry> out;
  for (const auto& [id, r] : rules_) {
    if (r.site == site && r.scope == RuleScope::kDtnTrafficControl) out.push_back({r.subnet, r.rate_gbps, r.dscp});
  }
  return out;
}

std::string SiteRm::render_site_config(std::string_view site) const {
  if (!std::binary_search(sites_.begin(), sites_.end(), std::string(site))) {
    throw Error(ErrorCode::kNotFound, "unknown site " + std::string(site));
  }
  std::string out = "# site-config site=" + std::string(site) + "\n";
  if (const auto* tor = tor_config(site)) {
    out += "# tor-queues";
    for (const auto& [dscp, prio] : tor->queues) {
      out += " dscp" + std::to_string(dscp) + "=q" + std::to_string(prio);
    }
    out += "\n";
  } else {
    out += "# tor-queues unconfigured\n";
  }

  std::vector<const SteeringRule*> lines;
  for (const auto& [id, r] : rules_) {
    if (r.site == site) lines.push_back(&r);
  }
  std::sort(lines.begin(), lines.end(), [](const SteeringRule* a, const SteeringRule* b) {
    return std::make_tuple(to_string(a->scope), a->subnet, a->wan_service_id) <
           std::make_tuple(to_string(b->scope), b->subnet, b->wan_service_id);
  });
  for (const auto* r : lines) {
    out += std::string(to_string(r->scope)) + " subnet=" + r->subnet.to_string() + " service=" + r->wan_service_id +
           " rate_gbps=" + format_fixed(r->rate_gbps) + " dscp=" + std::to_string(r->dscp) + "\n";
  }
  return out;
}

void SiteRm::after_reallocation(const AllocationMap& /*allocation*/) {
  // Rules of a service being torn down are removed by the caller right after.
  for (auto& [id, r] : rules_) {
    if (orchestrator_.has(r.wan_service_id)) refresh(r);
  }
}

}  // namespace prioflow
