#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prioflow/orchestrator.hpp"
#include "prioflow/rse.hpp"

namespace prioflow {

enum class RuleScope { kEdgeRouterPolicyRoute, kDtnTrafficControl, kDtnPacketMark };
std::string_view to_string(RuleScope scope);

struct SteeringRule {
  std::uint64_t rule_id = 0;
  std::string site;
  Ipv6Prefix subnet;
  std::string wan_service_id;
  RuleScope scope = RuleScope::kEdgeRouterPolicyRoute;
  double rate_gbps = 0.0;
  int dscp = 0;

  friend bool operator==(const SteeringRule&, const SteeringRule&) = default;
};

struct DtnQosEntry {
  Ipv6Prefix subnet;
  double rate_limit_gbps = 0.0;
  int dscp_mark = 0;
};

/// Top-of-rack classification; dscp class -> queue priority. Written once.
struct TorQueueConfig {
  std::string site;
  std::map<int, int> queues;
};

struct SiteRmConfig {
  int priority_dscp = 46;
  int best_effort_dscp = 0;
};

/// Per-site steering state binding director subnets to WAN services.
/// Rate changes update rules in place so rule identity never changes while a
/// service lives.
class SiteRm : public AllocationListener {
 public:
  SiteRm(const Orchestrator& orchestrator, std::vector<std::string> sites, SiteRmConfig config = {});

  void install_tor_config(TorQueueConfig config);
  const TorQueueConfig* tor_config(std::string_view site) const;

  std::vector<SteeringRule> install_service_rules(const std::string& service_id, const std::string& src_site,
                                                  const Director& src_director, const std::string& dst_site,
                                                  const Director& dst_director);
  std::size_t remove_service_rules(const std::string& service_id);

  std::vector<SteeringRule> rules() const;
  std::vector<SteeringRule> rules_for(const std::string& service_id) const;
  std::vector<DtnQosEntry> dtn_qos(std::string_view site) const;
  std::size_t rule_count() const noexcept { return rules_.size(); }

  /// One rule per line sorted by (scope, subnet), after a '#' header.
  std::string render_site_config(std::string_view site) const;

  void after_reallocation(const AllocationMap& allocation) override;

 private:
  void refresh(SteeringRule& rule) const;

  const Orchestrator& orchestrator_;
  std::vector<std::string> sites_;
  SiteRmConfig config_;
  std::map<std::string, TorQueueConfig> tor_;
  std::map<std::uint64_t, SteeringRule> rules_;
  std::uint64_t next_rule_id_ = 1;
};

}  // namespace prioflow
