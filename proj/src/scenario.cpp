#include "prioflow/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "prioflow/error.hpp"
#include "prioflow/json_util.hpp"
#include "prioflow/format.hpp"

namespace prioflow {

namespace fs = std::filesystem;

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::kSubmit: return "submit";
    case ActionKind::kUpdatePriority: return "update_priority";
    case ActionKind::kDemote: return "demote";
    case ActionKind::kFtsDone: return "fts_done";
    case ActionKind::kChangeStrategy: return "change_strategy";
  }
  return "unknown";
}

namespace {

ActionKind parse_action(const std::string& s, const std::string& where) {
  for (auto k : {ActionKind::kSubmit, ActionKind::kUpdatePriority, ActionKind::kDemote, ActionKind::kFtsDone,
                 ActionKind::kChangeStrategy}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::kParse, where + ".action: unknown action '" + s + "'");
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& ref) {
  fs::path p(ref);
  return p.is_absolute() || base.empty() ? p : base / p;
}

double number_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_number()) {
    throw Error(ErrorCode::kParse, where + "." + key + ": expected a number");
  }
  return obj[key].get<double>();
}

std::string string_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_string()) {
    throw Error(ErrorCode::kParse, where + "." + key + ": expected a string");
  }
  return obj[key].get<std::string>();
}

int priority_field(const nlohmann::json& obj, const std::string& where) {
  if (!obj.contains("priority") || !obj["priority"].is_number_integer()) {
    throw Error(ErrorCode::kParse, where + ".priority: expected an integer");
  }
  const auto p = obj["priority"].get<std::int64_t>();
  if (p < kMinPriority || p > kMaxPriority) {
    throw Error(ErrorCode::kParse, where + ".priority: " + std::to_string(p) + " outside [1,100]");
  }
  return static_cast<int>(p);
}

DataflowFiles files_from_params(const nlohmann::json& params, const std::string& where) {
  DataflowFiles files;
  if (params.contains("file_count")) {
    if (!is_non_negative_integer(params["file_count"]) || params["file_count"].get<std::size_t>() == 0) {
      throw Error(ErrorCode::kParse, where + ".file_count: expected a positive integer");
    }
    files.count = params["file_count"].get<std::size_t>();
  }
  if (params.contains("size_spread")) {
    files.size_spread = number_field(params, "size_spread", where);
    if (files.size_spread < 0.0 || files.size_spread >= 1.0) {
      throw Error(ErrorCode::kParse, where + ".size_spread: must be in [0,1)");
    }
  }
  if (params.contains("files")) {
    if (!params["files"].is_array()) throw Error(ErrorCode::kParse, where + ".files: expected an array");
    std::vector<FileSpec> list;
    for (std::size_t i = 0; i < params["files"].size(); ++i) {
      const auto& f = params["files"][i];
      const std::string fw = where + ".files[" + std::to_string(i) + "]";
      FileSpec spec;
      spec.lfn = string_field(f, "lfn", fw);
      if (!f.contains("size") || !is_non_negative_integer(f["size"]) || f["size"].get<std::uint64_t>() == 0) {
        throw Error(ErrorCode::kParse, fw + ".size: expected a positive integer");
      }
      spec.size = f["size"].get<std::uint64_t>();
      list.push_back(std::move(spec));
    }
    files.files = std::move(list);
  }
  return files;
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "scenario: expected an object");
  Scenario sc;

  if (!doc.contains("topology")) throw Error(ErrorCode::kParse, "scenario.topology: missing");
  if (doc["topology"].is_string()) {
    const auto path = resolve(base_dir, doc["topology"].get<std::string>());
    try {
      sc.topology = topology_from_json(read_json_file(path));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ": " + e.what());
    }
  } else {
    sc.topology = topology_from_json(doc["topology"]);
  }

  if (!doc.contains("rses")) throw Error(ErrorCode::kParse, "scenario.rses: missing");
  std::vector<std::pair<nlohmann::json, std::string>> rse_docs;
  if (doc["rses"].is_string()) {
    const auto dir = resolve(base_dir, doc["rses"].get<std::string>());
    if (!fs::is_directory(dir)) throw Error(ErrorCode::kNotFound, "rse directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) rse_docs.emplace_back(read_json_file(f), f.string());
  } else if (doc["rses"].is_array()) {
    for (std::size_t i = 0; i < doc["rses"].size(); ++i) {
      const auto& r = doc["rses"][i];
      if (r.is_string()) {
        const auto path = resolve(base_dir, r.get<std::string>());
        rse_docs.emplace_back(read_json_file(path), path.string());
      } else {
        rse_docs.emplace_back(r, "scenario.rses[" + std::to_string(i) + "]");
      }
    }
  } else {
    throw Error(ErrorCode::kParse, "scenario.rses: expected a directory or an array");
  }
  RseCatalog catalog;
  for (const auto& [rdoc, where] : rse_docs) {
    try {
      auto rse = rse_from_json(rdoc, sc.topology);
      catalog.add(rse);
      sc.rses.push_back(std::move(rse));
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    }
  }
  auto violations = validate_topology(sc.topology, catalog.sites());
  if (!violations.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "scenario: " + violations.front().element + ": " + violations.front().message);
  }

  if (doc.contains("seed")) {
    if (!is_non_negative_integer(doc["seed"])) throw Error(ErrorCode::kParse, "scenario.seed: expected an unsigned integer");
    sc.seed = doc["seed"].get<std::uint64_t>();
  }
  sc.run_until = number_field(doc, "run_until", "scenario");
  if (!(sc.run_until >= 0.0)) throw Error(ErrorCode::kParse, "scenario.run_until: must be non-negative");
  if (doc.contains("config")) sc.config = config_from_json(doc["config"]);
  if (doc.contains("expected_failed_jobs")) {
    if (!is_non_negative_integer(doc["expected_failed_jobs"])) {
      throw Error(ErrorCode::kParse, "scenario.expected_failed_jobs: expected an unsigned integer");
    }
    sc.expected_failed_jobs = doc["expected_failed_jobs"].get<std::size_t>();
  }

  std::set<std::string> submitted;
  if (doc.contains("timeline")) {
    if (!doc["timeline"].is_array()) throw Error(ErrorCode::kParse, "scenario.timeline: expected an array");
    SimTime last = 0.0;
    for (std::size_t i = 0; i < doc["timeline"].size(); ++i) {
      const auto& a = doc["timeline"][i];
      const std::string where = "timeline[" + std::to_string(i) + "]";
      TimelineAction action;
      action.t = number_field(a, "t", where);
      if (action.t < last) throw Error(ErrorCode::kParse, where + ".t: timeline is not sorted by t");
      if (action.t < 0.0) throw Error(ErrorCode::kParse, where + ".t: negative time");
      last = action.t;
      action.action = parse_action(string_field(a, "action", where), where);
      action.params = a.contains("params") ? a["params"] : nlohmann::json::object();
      if (!action.params.is_object()) throw Error(ErrorCode::kParse, where + ".params: expected an object");
      const std::string pw = where + ".params";
      if (action.action == ActionKind::kSubmit) {
        DataflowRequest req;
        try {
          req = request_from_json(action.params);
        } catch (const Error& e) {
          throw Error(ErrorCode::kParse, pw + "." + e.what());
        }
        files_from_params(action.params, pw);
        if (!sc.topology.has_site(req.src_site) || !catalog.has_site(req.src_site)) {
          throw Error(ErrorCode::kParse, pw + ".src_site: no storage element at '" + req.src_site + "'");
        }
        if (!sc.topology.has_site(req.dst_site) || !catalog.has_site(req.dst_site)) {
          throw Error(ErrorCode::kParse, pw + ".dst_site: no storage element at '" + req.dst_site + "'");
        }
        if (!submitted.insert(req.request_id).second) {
          throw Error(ErrorCode::kParse, pw + ".request_id: duplicate '" + req.request_id + "'");
        }
      } else {
        const auto ref = string_field(action.params, "request", pw);
        if (!submitted.contains(ref)) {
          throw Error(ErrorCode::kParse, pw + ".request: unknown request '" + ref + "'");
        }
        if (action.action == ActionKind::kUpdatePriority) priority_field(action.params, pw);
        if (action.action == ActionKind::kChangeStrategy && action.params.contains("priority")) {
          priority_field(action.params, pw);
        }
      }
      sc.timeline.push_back(std::move(action));
    }
    if (last > sc.run_until) throw Error(ErrorCode::kParse, "scenario.run_until: earlier than the last action");
  }

  if (doc.contains("faults")) {
    if (!doc["faults"].is_array()) throw Error(ErrorCode::kParse, "scenario.faults: expected an array");
    for (std::size_t i = 0; i < doc["faults"].size(); ++i) {
      const auto& f = doc["faults"][i];
      const std::string where = "faults[" + std::to_string(i) + "]";
      FaultSpec fault;
      fault.t = number_field(f, "t", where);
      if (fault.t < 0.0) throw Error(ErrorCode::kParse, where + ".t: negative time");
      fault.dataflow = string_field(f, "dataflow", where);
      if (!submitted.contains(fault.dataflow)) {
        throw Error(ErrorCode::kParse, where + ".dataflow: unknown dataflow '" + fault.dataflow + "'");
      }
      if (!f.contains("job_index") || !is_non_negative_integer(f["job_index"])) {
        throw Error(ErrorCode::kParse, where + ".job_index: expected an unsigned integer");
      }
      fault.job_index = f["job_index"].get<std::size_t>();
      sc.faults.push_back(std::move(fault));
    }
  }
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  const fs::path p(path);
  try {
    return scenario_from_json(read_json_file(p), p.parent_path());
  } catch (const Error& e) {
    if (std::string(e.what()).starts_with(path)) throw;
    throw Error(e.code(), path + ": " + e.what());
  }
}

namespace {

void execute(Simulation& sim, const TimelineAction& action) {
  const auto& p = action.params;
  switch (action.action) {
    case ActionKind::kSubmit: {
      sim.submit(request_from_json(p), files_from_params(p, "params"));
      return;
    }
    case ActionKind::kUpdatePriority:
      sim.dmm().update_priority(sim.service_of(p["request"].get<std::string>()), p["priority"].get<int>());
      return;
    case ActionKind::kDemote:
      sim.dmm().demote_to_best_effort(sim.service_of(p["request"].get<std::string>()));
      return;
    case ActionKind::kFtsDone:
      sim.dmm().mark_fts_done(sim.service_of(p["request"].get<std::string>()));
      return;
    case ActionKind::kChangeStrategy: {
      std::optional<int> prio;
      if (p.contains("priority")) prio = p["priority"].get<int>();
      sim.planner().change_strategy(p["request"].get<std::string>(), prio);
      return;
    }
  }
}

std::string action_label(const TimelineAction& a) {
  std::string label(to_string(a.action));
  if (a.params.contains("request_id")) label += " " + a.params["request_id"].get<std::string>();
  if (a.params.contains("request")) label += " " + a.params["request"].get<std::string>();
  return label;
}

}  // namespace

RunReport run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed) {
  const std::uint64_t run_seed = seed.value_or(scenario.seed);
  RseCatalog catalog;
  for (const auto& r : scenario.rses) catalog.add(r);
  Simulation sim(scenario.topology, std::move(catalog), scenario.config, run_seed);

  std::vector<std::string> errors;
  for (const auto& action : scenario.timeline) {
    const auto label = action_label(action);
    sim.kernel().schedule(action.t, EventKind::kScenarioAction, label, [&sim, &errors, &action, label] {
      try {
        execute(sim, action);
      } catch (const Error& e) {
        errors.push_back("t=" + format_number(action.t) + " " + label + ": " + std::string(to_string(e.code())) +
                         ": " + e.what());
      }
    });
  }
  for (const auto& fault : scenario.faults) {
    const auto label = "fault " + TransferEngine::job_key(fault.dataflow, fault.job_index);
    sim.kernel().schedule(fault.t, EventKind::kScenarioAction, label, [&sim, &errors, fault, label] {
      if (!sim.engine().fail_and_retry(fault.dataflow, fault.job_index, "injected fault")) {
        errors.push_back("t=" + format_number(fault.t) + " " + label + ": job not active, fault ignored");
      }
    });
  }
  sim.kernel().run_until(scenario.run_until);
  return build_report(sim, run_seed, scenario.run_until, scenario.expected_failed_jobs, std::move(errors));
}

std::map<std::string, std::vector<ServiceSegment>> rate_segments(const std::vector<RateSample>& samples,
                                                                  SimTime run_until) {
  std::map<std::string, std::vector<ServiceSegment>> out;
  for (const auto& s : samples) {
    auto& segs = out[s.service_id];
    if (!segs.empty() && segs.back().end < 0.0) segs.back().end = s.time;
    segs.push_back({s.time, -1.0, s.rate_gbps});
  }
  for (auto& [id, segs] : out) {
    if (!segs.empty() && segs.back().end < 0.0) segs.back().end = std::max(run_until, segs.back().start);
    std::erase_if(segs, [](const ServiceSegment& s) { return s.end <= s.start; });
  }
  return out;
}

RunReport build_report(Simulation& sim, std::uint64_t seed, SimTime run_until, std::size_t expected_failed_jobs,
                       std::vector<std::string> action_errors) {
  sim.recorder().final_sweep();
  RunReport report;
  report.seed = seed;
  report.run_until = run_until;
  report.rates = sim.recorder().rates();
  report.links = sim.recorder().links();
  report.event_log = sim.kernel().log_text();
  report.audit = sim.recorder().audit();
  report.expected_failed_jobs = expected_failed_jobs;
  report.action_errors = std::move(action_errors);
  for (const auto& s : sim.topology().sites()) report.site_configs[s.name] = sim.site_rm().render_site_config(s.name);

  const auto segments = rate_segments(report.rates, run_until);
  nlohmann::json services = nlohmann::json::object();
  for (const auto& [id, inst] : sim.dmm().instances()) {
    auto j = to_json(sim.dmm().query_status(id));
    nlohmann::json segs = nlohmann::json::array();
    if (auto it = segments.find(id); it != segments.end()) {
      for (const auto& s : it->second) segs.push_back({{"start", s.start}, {"end", s.end}, {"rate_gbps", s.rate_gbps}});
    }
    j["segments"] = std::move(segs);
    services[id] = std::move(j);
  }

  nlohmann::json dataflows = nlohmann::json::object();
  for (const auto& [id, df] : sim.engine().dataflows()) {
    const auto status = sim.engine().dataflow_status(id);
    nlohmann::json jobs = nlohmann::json::object();
    for (const auto& [state, n] : status.jobs) jobs[std::string(to_string(state))] = n;
    jobs["UNSUBMITTED"] = status.unsubmitted;
    nlohmann::json failed = nlohmann::json::array();
    std::size_t retries = 0;
    for (std::size_t i = 0; i < df.files.size(); ++i) {
      const auto* job = sim.engine().job(id, i);
      if (job == nullptr) continue;
      retries += static_cast<std::size_t>(job->retries);
      if (job->state == JobState::kFailed) {
        ++report.failed_jobs;
        failed.push_back({{"index", i}, {"lfn", job->lfn}, {"retries", job->retries}, {"reason", job->failure},
                          {"service_id", job->service_id}});
      }
    }
    const auto done_at = sim.planner().completion_time(id);
    dataflows[id] = {{"bytes", status.total_bytes},
                     {"bytes_moved", status.bytes_moved},
                     {"files", df.files.size()},
                     {"done", status.done},
                     {"completion_time", done_at ? nlohmann::json(*done_at) : nlohmann::json(nullptr)},
                     {"service_id", df.service_id},
                     {"jobs", jobs},
                     {"retries", retries},
                     {"failed_jobs", failed}};
  }

  nlohmann::json pools = nlohmann::json::object();
  for (const auto& [site, pool] : sim.catalog().pools()) {
    pools[site] = {{"rse", pool.rse()}, {"free", pool.free().size()}, {"allocated", pool.allocated().size()}};
  }

  const auto& a = report.audit;
  report.summary = {
      {"seed", seed},
      {"run_until", run_until},
      {"events", sim.kernel().log().size()},
      {"event_log_hash", format_hex64(sim.kernel().log_hash())},
      {"recomputations", sim.recorder().recomputations()},
      {"config", to_json(sim.config())},
      {"services", services},
      {"dataflows", dataflows},
      {"pools", pools},
      {"audits",
       {{"cap", a.cap},
        {"reserve", a.reserve},
        {"subnet_uniqueness", a.subnet_uniqueness},
        {"lifecycle", a.lifecycle},
        {"guaranteed_positive", a.guaranteed_positive},
        {"rule_consistency", a.rule_consistency},
        {"conservation", a.conservation},
        {"pfn_immutability", a.pfn_immutability},
        {"unexpected_failures", report.unexpected_failures()}}},
      {"violations", a.violations},
      {"failed_jobs", report.failed_jobs},
      {"expected_failed_jobs", expected_failed_jobs},
      {"action_errors", report.action_errors},
      {"ok", report.ok()},
  };
  return report;
}

std::string rates_csv(const RunReport& report) {
  std::string out = "time,service_id,rate_gbps\n";
  for (const auto& s : report.rates) {
    out += format_number(s.time) + "," + s.service_id + "," + format_number(s.rate_gbps) + "\n";
  }
  return out;
}

std::string links_csv(const RunReport& report) {
  std::string out = "time,link,priority_gbps,best_effort_gbps\n";
  for (const auto& s : report.links) {
    out += format_number(s.time) + "," + s.link + "," + format_number(s.priority_gbps) + "," +
           format_number(s.best_effort_gbps) + "\n";
  }
  return out;
}

std::vector<fs::path> emit_report(const RunReport& report, ReportFormat format, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kInvalidArgument, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary);
    out << body;
    if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
    written.push_back(path);
  };
  if (format == ReportFormat::kStructuredJson) {
    write("report.json", report.summary.dump(2) + "\n");
  } else {
    write("rates.csv", rates_csv(report));
    write("links.csv", links_csv(report));
  }
  write("events.log", report.event_log);
  for (const auto& [site, text] : report.site_configs) write("site_" + site + ".conf", text);
  return written;
}

}  // namespace prioflow
