#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prioflow/allocation.hpp"
#include "prioflow/dmm.hpp"
#include "prioflow/orchestrator.hpp"
#include "prioflow/rse.hpp"
#include "prioflow/sim_core.hpp"
#include "prioflow/site_rm.hpp"
#include "prioflow/topology.hpp"
#include "prioflow/transfer_engine.hpp"

namespace prioflow {

struct SimulationConfig {
  FtsConfig fts;
  DrainConfig drain;
  AllocationOptions allocation;
  SiteRmConfig site_rm;
  bool auto_release = false;
  std::size_t default_file_count = 100;
};

/// Reads the optional "config" block of a scenario; absent keys keep defaults.
SimulationConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SimulationConfig& config);

struct RateSample {
  SimTime time = 0.0;
  std::string service_id;
  double rate_gbps = 0.0;
};

struct LinkSample {
  SimTime time = 0.0;
  std::string link;
  double priority_gbps = 0.0;
  double best_effort_gbps = 0.0;
};

/// Checks run after every recomputation plus an end-of-run sweep.
struct AuditResult {
  bool cap = true;
  bool reserve = true;
  bool subnet_uniqueness = true;
  bool lifecycle = true;
  bool guaranteed_positive = true;
  bool rule_consistency = true;
  bool conservation = true;
  bool pfn_immutability = true;
  std::vector<std::string> violations;

  bool all_passed() const {
    return cap && reserve && subnet_uniqueness && lifecycle && guaranteed_positive && rule_consistency &&
           conservation && pfn_immutability;
  }
};

class Simulation;

/// Records rate and link series and audits each allocation as it happens.
class Recorder : public AllocationListener {
 public:
  explicit Recorder(const Simulation& sim) : sim_(sim) {}

  void after_reallocation(const AllocationMap& allocation) override;
  /// End-of-run checks that need the final state.
  void final_sweep();

  const std::vector<RateSample>& rates() const noexcept { return rates_; }
  const std::vector<LinkSample>& links() const noexcept { return links_; }
  const AuditResult& audit() const noexcept { return audit_; }
  std::size_t recomputations() const noexcept { return recomputations_; }

 private:
  void violation(bool AuditResult::*flag, std::string message);

  const Simulation& sim_;
  std::map<std::string, double> last_rate_;
  std::map<std::string, std::pair<double, double>> last_link_;
  std::vector<RateSample> rates_;
  std::vector<LinkSample> links_;
  AuditResult audit_;
  std::size_t recomputations_ = 0;
};

/// Optional file list for a submission; defaults split the bytes evenly.
struct DataflowFiles {
  std::optional<std::vector<FileSpec>> files;
  std::optional<std::size_t> count;
  double size_spread = 0.0;
};

/// The whole simulated system: kernel, topology, storage elements, network
/// orchestrator, site resource managers, data movement manager and the
/// FTS/Rucio transfer model, wired together. Not copyable or movable.
class Simulation {
 public:
  Simulation(Topology topo, RseCatalog catalog, SimulationConfig config, std::uint64_t seed);
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Accepts a dataflow request and starts moving its files.
  ServiceResponse submit(const DataflowRequest& req, const DataflowFiles& files = {});
  /// Service currently carrying a dataflow (follows strategy changes).
  const std::string& service_of(const std::string& dataflow_id) const;

  Kernel& kernel() noexcept { return kernel_; }
  const Kernel& kernel() const noexcept { return kernel_; }
  Rng& rng() noexcept { return rng_; }
  const Topology& topology() const noexcept { return topo_; }
  RseCatalog& catalog() noexcept { return catalog_; }
  const RseCatalog& catalog() const noexcept { return catalog_; }
  Orchestrator& orchestrator() noexcept { return orchestrator_; }
  const Orchestrator& orchestrator() const noexcept { return orchestrator_; }
  SiteRm& site_rm() noexcept { return site_rm_; }
  const SiteRm& site_rm() const noexcept { return site_rm_; }
  Dmm& dmm() noexcept { return dmm_; }
  const Dmm& dmm() const noexcept { return dmm_; }
  TransferEngine& engine() noexcept { return engine_; }
  const TransferEngine& engine() const noexcept { return engine_; }
  RucioPlanner& planner() noexcept { return planner_; }
  const RucioPlanner& planner() const noexcept { return planner_; }
  Recorder& recorder() noexcept { return recorder_; }
  const Recorder& recorder() const noexcept { return recorder_; }
  const SimulationConfig& config() const noexcept { return config_; }

  /// PFNs captured at submission, for the immutability audit.
  const std::map<std::string, std::pair<std::string, std::string>>& frozen_pfns() const noexcept {
    return frozen_pfns_;
  }

 private:
  Topology topo_;
  RseCatalog catalog_;
  SimulationConfig config_;
  Kernel kernel_;
  Rng rng_;
  Orchestrator orchestrator_;
  SiteRm site_rm_;
  Dmm dmm_;
  TransferEngine engine_;
  RucioPlanner planner_;
  Recorder recorder_;
  std::map<std::string, std::pair<std::string, std::string>> frozen_pfns_;
};

}  // namespace prioflow
