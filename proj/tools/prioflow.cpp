// prioflow: scenario runner, DMM service, scale calculator and config validator.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "prioflow/error.hpp"
#include "prioflow/format.hpp"
#include "prioflow/scale_calc.hpp"
#include "prioflow/scenario.hpp"
#include "prioflow/server.hpp"

using namespace prioflow;

namespace {

constexpr int kExitAuditFailed = 1;
constexpr int kExitBadInput = 2;

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
            const std::string& format) {
  const auto scenario = load_scenario_file(scenario_path);
  spdlog::info("running {} to t={}", scenario_path, format_number(scenario.run_until));
  const auto report = run_scenario(scenario, seed);
  if (format == "json" || format == "both") emit_report(report, ReportFormat::kStructuredJson, out_dir);
  if (format == "csv" || format == "both") emit_report(report, ReportFormat::kCsvTimeseries, out_dir);

  for (const auto& e : report.action_errors) spdlog::warn("{}", e);
  for (const auto& v : report.audit.violations) spdlog::error("audit: {}", v);
  std::cout << "seed=" << report.seed << " events=" << report.summary["events"].get<std::size_t>()
            << " hash=" << report.summary["event_log_hash"].get<std::string>()
            << " failed_jobs=" << report.failed_jobs << " ok=" << (report.ok() ? "true" : "false") << "\n";
  for (const auto& [id, df] : report.summary["dataflows"].items()) {
    std::cout << "dataflow " << id << " ";
    if (df["completion_time"].is_null()) {
      std::cout << "incomplete " << df["bytes_moved"].get<std::uint64_t>() << "/" << df["bytes"].get<std::uint64_t>()
                << " bytes\n";
    } else {
      std::cout << "completed t=" << format_number(df["completion_time"].get<double>()) << "\n";
    }
  }
  return report.ok() ? 0 : kExitAuditFailed;
}

int cmd_serve(const std::string& topology_path, const std::string& rse_dir, const std::string& host, int port,
              double time_scale, std::uint64_t seed, const std::string& config_path) {
  auto topo = load_topology_file(topology_path);
  auto catalog = load_rse_dir(rse_dir, topo);
  SimulationConfig config;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + config_path);
    try {
      config = config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kParse, config_path + ": " + e.what());
    }
  }
  ApiService service(std::move(topo), std::move(catalog), config, ServiceOptions{time_scale, seed});
  HttpServer server(service);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << host << ":" << bound << " time-scale=" << format_number(time_scale) << std::endl;
  server.listen();
  g_server = nullptr;
  return 0;
}

int cmd_scale(double event_size_mb, double rate_khz, double duty, std::optional<double> daily_pb,
              const std::map<std::string, double>& shares, const std::string& topology_path, const std::string& src,
              const std::string& dst) {
  InstrumentProfile profile{event_size_mb * 1e6, rate_khz * 1e3, duty, shares};
  validate_profile(profile);
  const double raw = raw_rate(profile);
  std::cout << "raw_rate " << format_fixed(raw / 1e9, 2) << " GB/s (" << format_fixed(bytes_per_s_to_gbps(raw), 1)
            << " Gbps)\n";
  std::cout << "annual_volume " << format_fixed(annual_volume(profile) / 1e15, 1) << " PB\n";
  if (daily_pb) {
    for (const auto& [site, share] : shares) {
      const auto rate = site_average_rate(profile, *daily_pb * 1e15, site);
      std::cout << "site_average_rate " << site << " share=" << format_number(share) << " "
                << format_fixed(rate.bytes_per_s / 1e9, 2) << " GB/s (" << format_fixed(rate.gbps, 1) << " Gbps)\n";
    }
  }
  if (!topology_path.empty()) {
    const auto topo = load_topology_file(topology_path);
    const double cap = path_manageable_capacity(topo, find_path(topo, src, dst));
    const bool ok = peak_check(cap);
    std::cout << "peak_check " << src << "->" << dst << " manageable=" << format_number(cap) << " Gbps "
              << (ok ? "pass" : "fail") << "\n";
  }
  return 0;
}

int cmd_validate(const std::string& topology_path, const std::string& rse_dir) {
  const auto topo = load_topology_file(topology_path);
  const auto catalog = load_rse_dir(rse_dir, topo);
  const auto violations = validate_topology(topo, catalog.sites());
  for (const auto& v : violations) std::cout << "violation " << v.element << ": " << v.message << "\n";
  if (!violations.empty()) return kExitBadInput;
  std::size_t directors = 0;
  for (const auto& [site, rse] : catalog.rses()) directors += rse.directors.size();
  std::cout << "ok sites=" << topo.sites().size() << " links=" << topo.links().size()
            << " rses=" << catalog.rses().size() << " directors=" << directors << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("PRIOFLOW_LOG"); level != nullptr) {
    spdlog::set_level(spdlog::level::from_str(level));
  }

  CLI::App app{"Priority dataflow orchestration simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario and write its report");
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string format = "both";
  run->add_option("--scenario", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv", "both"}));

  auto* serve = app.add_subcommand("serve", "Serve the DMM API over HTTP");
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string topology_path;
  std::string rse_dir;
  double time_scale = 1.0;
  std::uint64_t serve_seed = 0;
  std::string config_path;
  serve->add_option("--port", port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--topology", topology_path, "Topology file")->required()->check(CLI::ExistingFile);
  serve->add_option("--rses", rse_dir, "Directory of RSE files")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--time-scale", time_scale, "Virtual seconds per real second")->check(CLI::NonNegativeNumber);
  serve->add_option("--seed", serve_seed, "Seed for file size spread");
  serve->add_option("--config", config_path, "Simulation config file")->check(CLI::ExistingFile);

  auto* scale = app.add_subcommand("scale", "Instrument data rate arithmetic");
  double event_size_mb = 0.0;
  double rate_khz = 0.0;
  double duty = 1.0;
  std::optional<double> daily_pb;
  std::map<std::string, double> shares;
  std::string scale_topology;
  std::string src = "CERN";
  std::string dst = "FNAL";
  scale->add_option("--event-size-mb", event_size_mb, "Event size, MB")->required();
  scale->add_option("--rate-khz", rate_khz, "Trigger rate, kHz")->required();
  scale->add_option("--duty", duty, "Duty cycle in (0,1]");
  scale->add_option("--daily-pb", daily_pb, "Volume leaving the source per day, PB");
  scale->add_option("--share", shares, "Archive share, SITE=fraction")->delimiter(',');
  scale->add_option("--topology", scale_topology, "Topology file for the peak check")->check(CLI::ExistingFile);
  scale->add_option("--src", src, "Peak check source site");
  scale->add_option("--dst", dst, "Peak check destination site");

  auto* validate = app.add_subcommand("validate", "Validate a topology and its RSE files");
  std::string v_topology;
  std::string v_rses;
  validate->add_option("--topology", v_topology, "Topology file")->required()->check(CLI::ExistingFile);
  validate->add_option("--rses", v_rses, "Directory of RSE files")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario_path, seed, out_dir, format);
    if (*serve) return cmd_serve(topology_path, rse_dir, host, port, time_scale, serve_seed, config_path);
    if (*scale) return cmd_scale(event_size_mb, rate_khz, duty, daily_pb, shares, scale_topology, src, dst);
    if (*validate) return cmd_validate(v_topology, v_rses);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitBadInput;
  }
  return 0;
}
