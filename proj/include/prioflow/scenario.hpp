#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prioflow/simulation.hpp"

namespace prioflow {

enum class ActionKind { kSubmit, kUpdatePriority, kDemote, kFtsDone, kChangeStrategy };
std::string_view to_string(ActionKind kind);

struct TimelineAction {
  SimTime t = 0.0;
  ActionKind action = ActionKind::kSubmit;
  nlohmann::json params;
};

struct FaultSpec {
  SimTime t = 0.0;
  std::string dataflow;
  std::size_t job_index = 0;
};

/// A reproducible experiment. Actions other than submit name their target by
/// the request_id of an earlier submit.
struct Scenario {
  Topology topology;
  std::vector<Rse> rses;
  std::uint64_t seed = 0;
  SimTime run_until = 0.0;
  SimulationConfig config;
  std::vector<TimelineAction> timeline;
  std::vector<FaultSpec> faults;
  std::size_t expected_failed_jobs = 0;
};

/// `base_dir` resolves relative "topology" and "rses" file references.
Scenario scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
Scenario load_scenario_file(const std::string& path);

struct ServiceSegment {
  SimTime start = 0.0;
  SimTime end = 0.0;
  double rate_gbps = 0.0;
};

struct RunReport {
  std::uint64_t seed = 0;
  SimTime run_until = 0.0;
  nlohmann::json summary;
  std::vector<RateSample> rates;
  std::vector<LinkSample> links;
  std::string event_log;
  std::map<std::string, std::string> site_configs;
  AuditResult audit;
  std::size_t failed_jobs = 0;
  std::size_t expected_failed_jobs = 0;
  std::vector<std::string> action_errors;

  bool unexpected_failures() const { return failed_jobs > expected_failed_jobs; }
  bool ok() const { return audit.all_passed() && !unexpected_failures(); }
};

/// Runs the scenario to run_until. `seed` overrides the scenario's seed.
RunReport run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed = std::nullopt);

/// Builds the report of an already-driven simulation.
RunReport build_report(Simulation& sim, std::uint64_t seed, SimTime run_until, std::size_t expected_failed_jobs,
                       std::vector<std::string> action_errors = {});

/// Piecewise-constant rate segments per service, closed at `run_until`.
std::map<std::string, std::vector<ServiceSegment>> rate_segments(const std::vector<RateSample>& samples,
                                                                  SimTime run_until);

std::string rates_csv(const RunReport& report);
std::string links_csv(const RunReport& report);

enum class ReportFormat { kStructuredJson, kCsvTimeseries };

/// Writes report.json, or rates.csv and links.csv, plus events.log and one
/// site_<name>.conf per site. Returns the files written.
std::vector<std::filesystem::path> emit_report(const RunReport& report, ReportFormat format,
                                               const std::filesystem::path& out_dir);

}  // namespace prioflow
