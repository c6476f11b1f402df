// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prioflow/error.hpp"
#include "prioflow/format.hpp"
#include "prioflow/scale_calc.hpp"
#include "prioflow/scenario.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/random_instances.hpp"

using namespace prioflow;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = fs::path(PRIOFLOW_SOURCE_DIR) / "scenarios";
constexpr double kBytesPerGbit = 1e9 / 8.0;

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> problems;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (problems.size() < 8) problems.push_back(what);
    }
  }
};

std::string num(double v, int digits = 3) { return format_fixed(v, digits); }

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

// --- 1 ---------------------------------------------------------------------

Outcome scale_arithmetic() {
  Outcome out;
  InstrumentProfile p{6.5e6, 7500.0, 0.3, {{"FNAL", 0.4}}};
  const double raw = raw_rate(p);
  const auto fnal = site_average_rate(p, 5e15, "FNAL");
  out.require(std::abs(raw - 48.75e9) <= 1e-6 * 48.75e9, "raw rate " + num(raw / 1e9) + " GB/s");
  out.require(rel_err(raw, 50e9) <= 0.05, "raw rate not within 5% of 50 GB/s");
  out.require(std::abs(fnal.bytes_per_s / 1e9 - 23.15) < 0.005, "site rate " + num(fnal.bytes_per_s / 1e9) + " GB/s");
  out.require(std::abs(fnal.gbps - 185.2) < 0.05, "site rate " + num(fnal.gbps) + " Gbps");
  out.require(rel_err(fnal.bytes_per_s, 20e9) <= 0.16, "site rate not within reach of 20 GB/s");
  out.require(rel_err(fnal.gbps, 200.0) <= 0.15, "site rate not within 15% of 200 Gbps");
  out.detail = "raw=" + num(raw / 1e9, 2) + " GB/s fnal=" + num(fnal.bytes_per_s / 1e9, 2) + " GB/s=" +
               num(fnal.gbps, 1) + " Gbps";
  return out;
}

// --- shared random simulation driver ---------------------------------------

/// Recomputes per-direction priority load from the live services and checks
/// it against the link arithmetic, independently of the allocator's own sums.
class ReserveChecker : public AllocationListener {
 public:
  ReserveChecker(const Simulation& sim) : sim_(sim) {}

  void after_reallocation(const AllocationMap&) override {
    std::map<std::pair<std::string, std::string>, double> prio, best;
    for (const auto& [id, svc] : sim_.orchestrator().services()) {
      if (svc.rate < 0.0) fail("negative rate for " + id);
      for (const auto& hop : svc.flow.path.hops) {
        (svc.flow.weight > 0 ? prio : best)[{hop.from, hop.to}] += svc.rate;
      }
    }
    for (const auto& link : sim_.topology().links()) {
      for (const auto& dir : {std::pair{link.a, link.b}, std::pair{link.b, link.a}}) {
        ++checks;
        const std::string label = dir.first + "->" + dir.second;
        const double manageable = link.capacity_gbps * link.manageable_fraction;
        const double p = prio[dir];
        const double residual = link.capacity_gbps - p;
        if (p > manageable) fail(label + " priority " + format_number(p) + " > " + format_number(manageable));
        if (residual < (1.0 - link.manageable_fraction) * link.capacity_gbps) {
          fail(label + " residual " + format_number(residual) + " below the reserve");
        }
        if (best[dir] > residual * (1 + 1e-12)) fail(label + " best effort exceeds the residual");
      }
    }
  }

  std::size_t checks = 0;
  std::size_t violation_count = 0;
  std::vector<std::string> violations;

 private:
  void fail(std::string msg) {
    ++violation_count;
    if (violations.size() < 10) violations.push_back("t=" + format_number(sim_.kernel().now()) + " " + std::move(msg));
  }

  const Simulation& sim_;
};

struct RandomRun {
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::vector<std::string> messages;
  bool audits_passed = true;
  std::size_t ops = 0;
  std::size_t priority_updates = 0;
  std::size_t max_services = 0;
  std::size_t dataflows = 0;
  std::size_t completed = 0;
  bool conserved = true;
};

SimulationConfig random_config(Rng& rng) {
  SimulationConfig c;
  c.fts = FtsConfig{static_cast<std::size_t>(rng.uniform_int(3, 12)), static_cast<std::size_t>(rng.uniform_int(1, 6)),
                    2, 3};
  c.drain.window_s = rng.uniform(30.0, 600.0);
  return c;
}

RandomRun random_simulation(std::uint64_t seed) {
  Rng rng(seed * 7919 + 13);
  const int sites = static_cast<int>(rng.uniform_int(2, 5));
  auto topo = oracle::random_topology(rng, sites, static_cast<int>(rng.uniform_int(0, 3)), 20.0, 1000.0, true);
  Simulation sim(topo, fixture::catalog_for(topo, 4), random_config(rng), seed);
  ReserveChecker checker(sim);
  sim.orchestrator().add_listener(&checker);

  RandomRun run;
  std::vector<std::string> requests;
  int next = 0;
  auto pick = [&]() -> const std::string& {
    return requests[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(requests.size()) - 1))];
  };
  auto op = [&] {
    ++run.ops;
    const auto live = sim.orchestrator().services().size();
    const double roll = rng.uniform();
    try {
      if (requests.empty() || (roll < 0.35 && live < 6)) {
        if (live >= 6) return;
        const auto s = rng.uniform_int(0, sites - 1);
        auto d = rng.uniform_int(0, sites - 2);
        if (d >= s) ++d;
        DataflowRequest req{"df" + std::to_string(next++), static_cast<std::uint64_t>(rng.uniform(1e11, 2e13)),
                            "S" + std::to_string(s), "S" + std::to_string(d),
                            static_cast<int>(rng.uniform_int(1, 10))};
        DataflowFiles files;
        files.count = static_cast<std::size_t>(rng.uniform_int(5, 40));
        files.size_spread = rng.uniform(0.0, 0.5);
        sim.submit(req, files);
        requests.push_back(req.request_id);
      } else if (roll < 0.65) {
        ++run.priority_updates;
        sim.dmm().update_priority(sim.service_of(pick()), static_cast<int>(rng.uniform_int(1, 10)));
      } else if (roll < 0.75) {
        sim.dmm().demote_to_best_effort(sim.service_of(pick()));
      } else if (roll < 0.87) {
        if (live >= 6) return;
        sim.planner().change_strategy(pick());
      } else {
        sim.dmm().mark_fts_done(sim.service_of(pick()));
      }
    } catch (const Error&) {
      // Rejected operations are part of the workload.
    }
    run.max_services = std::max(run.max_services, sim.orchestrator().services().size());
  };

  const int ops = static_cast<int>(rng.uniform_int(10, 30));
  std::vector<double> times;
  for (int i = 0; i < ops; ++i) times.push_back(rng.uniform(0.0, 400.0));
  std::sort(times.begin(), times.end());
  for (double t : times) sim.kernel().schedule(t, EventKind::kScenarioAction, "random-op", op);
  sim.kernel().run_until(1500.0);

  auto report = build_report(sim, seed, 1500.0, 0);
  run.audits_passed = report.audit.all_passed();
  for (const auto& v : report.audit.violations) {
    if (run.messages.size() < 5) run.messages.push_back("seed " + std::to_string(seed) + " audit: " + v);
  }
  run.checks = checker.checks;
  run.violations = checker.violation_count;
  for (const auto& v : checker.violations) run.messages.push_back("seed " + std::to_string(seed) + ": " + v);
  for (const auto& id : requests) {
    ++run.dataflows;
    const auto s = sim.engine().dataflow_status(id);
    if (s.bytes_moved > s.total_bytes) run.conserved = false;
    if (s.done) {
      ++run.completed;
      if (s.bytes_moved != s.total_bytes) run.conserved = false;
    }
  }
  return run;
}

// --- 2 ---------------------------------------------------------------------

Outcome reserve_invariant() {
  Outcome out;
  std::size_t checks = 0, violations = 0, ops = 0, updates = 0, max_services = 0;
  constexpr int kScenarios = 220;
  for (int seed = 1; seed <= kScenarios; ++seed) {
    const auto run = random_simulation(static_cast<std::uint64_t>(seed));
    checks += run.checks;
    violations += run.violations;
    ops += run.ops;
    updates += run.priority_updates;
    max_services = std::max(max_services, run.max_services);
    out.require(run.violations == 0, run.messages.empty() ? "violation" : run.messages.front());
    out.require(run.audits_passed, "seed " + std::to_string(seed) + " audits failed" +
                                       (run.messages.empty() ? std::string() : ": " + run.messages.front()));
  }
  out.require(max_services <= 6, "more than 6 concurrent services");
  out.require(updates > 0, "no priority updates exercised");
  out.detail = std::to_string(kScenarios) + " scenarios, " + std::to_string(ops) + " ops (" + std::to_string(updates) +
               " priority updates), " + std::to_string(checks) + " link checks, " + std::to_string(violations) +
               " violations";
  return out;
}

// --- 3 ---------------------------------------------------------------------

Outcome allocation_correctness() {
  Outcome out;
  Rng rng(314159);
  std::size_t flows_checked = 0;
  double worst = 0.0;
  constexpr int kInstances = 600;
  for (int i = 0; i < kInstances; ++i) {
    auto topo = oracle::random_topology(rng, static_cast<int>(rng.uniform_int(2, 6)),
                                        static_cast<int>(rng.uniform_int(0, 5)));
    auto flows = oracle::random_flows(rng, topo, static_cast<int>(rng.uniform_int(1, 8)));
    const auto got = compute_allocations(topo, flows);
    const auto want = oracle::reference_allocation(topo, flows);
    for (const auto& f : flows) {
      ++flows_checked;
      const double g = got.rate_of(f.flow_id);
      const double w = want.at(f.flow_id);
      const double err = std::abs(g - w) / std::max(1.0, std::abs(w));
      worst = std::max(worst, err);
      out.require(oracle::close(g, w), "instance " + std::to_string(i) + " flow " + f.flow_id + ": " +
                                           format_number(g) + " vs " + format_number(w));
    }
  }

  constexpr int kPairs = 250;
  for (int i = 0; i < kPairs; ++i) {
    auto topo = oracle::random_topology(rng, static_cast<int>(rng.uniform_int(2, 5)),
                                        static_cast<int>(rng.uniform_int(0, 4)));
    auto flows = oracle::random_flows(rng, topo, static_cast<int>(rng.uniform_int(1, 7)), 0.0);
    const auto before = compute_allocations(topo, flows);
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(flows.size()) - 1));
    flows[k].weight += static_cast<int>(rng.uniform_int(1, 10));
    const auto after = compute_allocations(topo, flows);
    out.require(after.rate_of(flows[k].flow_id) >= before.rate_of(flows[k].flow_id) * (1 - 1e-12),
                "monotonicity pair " + std::to_string(i));
  }
  out.detail = std::to_string(kInstances) + " instances (" + std::to_string(flows_checked) +
               " flows), worst relative error " + format_number(worst) + "; " + std::to_string(kPairs) +
               " monotonicity pairs";
  return out;
}

// --- 4 ---------------------------------------------------------------------

struct DrainSetup {
  double change_at = 50.0;
  double remaining_bytes = 0.0;
  double drain_rate = 0.0;
};

SimulationConfig drain_config(double window) {
  SimulationConfig c;
  c.fts = FtsConfig{10, 4, 2, 3};
  c.drain.window_s = window;
  return c;
}

std::unique_ptr<Simulation> drain_sim(double window, DrainSetup& setup, std::string& old_service) {
  auto topo = fixture::cern_fnal(100.0, 0.8);
  auto sim = std::make_unique<Simulation>(topo, fixture::catalog_for(topo, 4), drain_config(window), 11);
  DataflowFiles files;
  files.count = 100;
  sim->submit(fixture::request("df", 2'000'000'000'000ULL), files);
  sim->kernel().run_until(setup.change_at);
  sim->engine().advance();
  old_service = sim->service_of("df");
  setup.remaining_bytes = 0.0;
  for (const auto& [key, job] : sim->engine().jobs()) {
    if (job.service_id == old_service && job.state != JobState::kDone) {
      setup.remaining_bytes += static_cast<double>(job.size) - job.progress;
    }
  }
  sim->planner().change_strategy("df");
  setup.drain_rate = *sim->orchestrator().service(old_service).drain_rate;
  return sim;
}

Outcome drain_safety() {
  Outcome out;
  DrainSetup probe;
  std::string old;
  drain_sim(1e9, probe, old);
  const double required = probe.remaining_bytes / (probe.drain_rate * kBytesPerGbit);
  out.require(probe.remaining_bytes > 0, "no in-flight bytes at the strategy change");

  {
    DrainSetup s;
    auto sim = drain_sim(required * 1.05, s, old);
    sim->kernel().run_until(5000.0);
    auto report = build_report(*sim, 11, 5000.0, 0);
    out.require(report.failed_jobs == 0, "sufficient window: " + std::to_string(report.failed_jobs) + " failures");
    out.require(sim->dmm().instance(old).state == LifecycleState::kReleased, "old service not released");
    out.require(sim->planner().completion_time("df").has_value(), "dataflow did not complete");
    out.require(report.ok(), "sufficient window: audits failed");
  }
  {
    auto sc = load_scenario_file((kScenarios / "strategy_change.json").string());
    auto report = run_scenario(sc);
    out.require(report.failed_jobs == 0 && report.ok(), "strategy_change scenario had failures");
  }
  std::size_t short_failures = 0;
  {
    DrainSetup s;
    auto sim = drain_sim(required * 0.3, s, old);
    sim->kernel().run_until(5000.0);
    auto report = build_report(*sim, 11, 5000.0, 0);
    short_failures = report.failed_jobs;
    out.require(short_failures > 0, "short window produced no failures");
    const int attempts = sim->engine().config().max_retries + 1;
    for (const auto& [key, job] : sim->engine().jobs()) {
      if (job.state != JobState::kFailed) continue;
      out.require(job.service_id == old, key + " failed on the successor");
      out.require(job.retries == attempts, key + " failed without exhausting retries");
      out.require(!job.failure.empty(), key + " failed without a reason");
    }
    out.require(report.summary["dataflows"]["df"]["failed_jobs"].size() == short_failures,
                "failures missing from the report");
    out.require(report.unexpected_failures() && !report.ok(), "short-window failures not surfaced");
    const auto status = sim->engine().dataflow_status("df");
    out.require(status.jobs.at(JobState::kFailed) + status.jobs.at(JobState::kDone) + status.unsubmitted +
                        status.jobs.at(JobState::kQueued) + status.jobs.at(JobState::kActive) ==
                    100,
                "jobs unaccounted for");
  }
  out.detail = "in-flight " + num(probe.remaining_bytes / 1e9, 1) + " GB at " + num(probe.drain_rate, 1) +
               " Gbps needs " + num(required, 1) + " s; window 1.05x: 0 failures; window 0.3x: " +
               std::to_string(short_failures) + " failures via retry-then-fail";
  return out;
}

// --- 5 ---------------------------------------------------------------------

Outcome conservation_and_closed_form() {
  Outcome out;
  {
    auto report = run_scenario(load_scenario_file((kScenarios / "hllhc_single.json").string()));
    const auto& df = report.summary["dataflows"]["raw-2026"];
    out.require(df["bytes_moved"] == df["bytes"], "single flow bytes not conserved");
    const double t = df["completion_time"].get<double>();
    out.require(rel_err(t, 2e15 / (1000.0 * kBytesPerGbit)) <= 0.01, "single flow at " + format_number(t));
  }

  Rng rng(2718);
  double worst_single = 0.0;
  for (int i = 0; i < 25; ++i) {
    auto topo = oracle::random_topology(rng, static_cast<int>(rng.uniform_int(2, 5)), 2, 10.0, 1000.0, true);
    Simulation sim(topo, fixture::catalog_for(topo, 2), SimulationConfig{}, static_cast<std::uint64_t>(i));
    const auto bytes = static_cast<std::uint64_t>(rng.uniform(1e11, 5e12));
    DataflowFiles files;
    files.count = static_cast<std::size_t>(rng.uniform_int(1, 60));
    files.size_spread = rng.uniform(0.0, 0.6);
    auto resp = sim.submit(fixture::request("x", bytes, 1, "S0", "S1"), files);
    const double expected = static_cast<double>(bytes) / (resp.guaranteed_rate * kBytesPerGbit);
    sim.kernel().run_until(expected * 2);
    const auto s = sim.engine().dataflow_status("x");
    out.require(s.done && s.bytes_moved == bytes, "random single flow " + std::to_string(i) + " not conserved");
    const auto t = sim.planner().completion_time("x");
    out.require(t.has_value(), "random single flow did not finish");
    if (t) {
      worst_single = std::max(worst_single, rel_err(*t, expected));
      out.require(rel_err(*t, expected) <= 0.01, "random single flow " + std::to_string(i) + " at " +
                                                      format_number(*t) + " vs " + format_number(expected));
    }
  }

  // Hand-integrated: 800 Gbps alone, 400 beside an equal peer from t=200,
  // 600 at 3:1 from t=400, 800 again once the peer leaves at t=600.
  double multi = 0.0, multi_expected = 0.0;
  {
    auto topo = fixture::cern_fnal(1000.0, 0.8);
    Simulation sim(topo, fixture::catalog_for(topo, 4), SimulationConfig{}, 5);
    DataflowFiles files;
    files.count = 100;
    sim.submit(fixture::request("a", 100'000'000'000'000ULL), files);
    auto& k = sim.kernel();
    k.schedule(200.0, EventKind::kScenarioAction, "peer",
               [&] { sim.submit(fixture::request("b", 10'000'000'000'000'000ULL)); });
    k.schedule(400.0, EventKind::kScenarioAction, "boost", [&] { sim.dmm().update_priority(sim.service_of("a"), 3); });
    k.schedule(600.0, EventKind::kScenarioAction, "leave", [&] { sim.dmm().mark_fts_done(sim.service_of("b")); });
    k.run_until(5000.0);
    // 20 TB + 10 TB + 15 TB by t=600, then 55 TB at 100 GB/s.
    multi_expected = oracle::completion_time(1e14, {{0, 800}, {200, 400}, {400, 600}, {600, 800}});
    out.require(std::abs(multi_expected - 1150.0) < 1e-9, "hand integration disagrees with the oracle");
    const auto t = sim.planner().completion_time("a");
    out.require(t.has_value(), "multi-segment flow did not finish");
    if (t) {
      multi = *t;
      out.require(rel_err(*t, multi_expected) <= 0.01, "multi-segment at " + format_number(*t));
    }
    const auto s = sim.engine().dataflow_status("a");
    out.require(s.bytes_moved == s.total_bytes, "multi-segment bytes not conserved");
  }

  std::size_t completed = 0, dataflows = 0;
  for (int seed = 1001; seed <= 1060; ++seed) {
    const auto run = random_simulation(static_cast<std::uint64_t>(seed));
    completed += run.completed;
    dataflows += run.dataflows;
    out.require(run.conserved, "random run " + std::to_string(seed) + " not conserved");
  }
  out.require(completed > 0, "no random dataflow completed");
  out.detail = "single 2 PB ok; 25 random single flows worst error " + format_number(worst_single) +
               "; multi-segment " + num(multi) + " s vs " + num(multi_expected) + " s; " + std::to_string(completed) +
               "/" + std::to_string(dataflows) + " random dataflows completed, all conserved";
  return out;
}

// --- 6 ---------------------------------------------------------------------

struct FuzzWorld {
  explicit FuzzWorld(Rng& rng)
      : topo({{"A"}, {"B"}, {"C"}}, {{"A", "B", 100}, {"B", "C", 40}, {"A", "C", 10, 0.5}}),
        catalog([&] {
          RseCatalog c;
          c.add(fixture::make_rse(topo, "A", 1, static_cast<int>(rng.uniform_int(1, 3))));
          c.add(fixture::make_rse(topo, "B", 2, static_cast<int>(rng.uniform_int(1, 3))));
          c.add(fixture::make_rse(topo, "C", 3, static_cast<int>(rng.uniform_int(1, 3))));
          return c;
        }()),
        initial(catalog.pools()),
        orch(topo, kernel, DrainConfig{0.1, 1.0, rng.uniform(1.0, 20.0)}),
        rm(orch, {"A", "B", "C"}),
        dmm(kernel, catalog, orch, rm) {
    orch.add_listener(&rm);
  }

  Topology topo;
  RseCatalog catalog;
  std::map<std::string, SubnetPool> initial;
  Kernel kernel;
  Orchestrator orch;
  SiteRm rm;
  Dmm dmm;
};

bool live(LifecycleState s) { return s == LifecycleState::kActive || s == LifecycleState::kDraining; }

void check_subnets(FuzzWorld& w, Outcome& out, int seq) {
  std::map<std::string, std::set<std::string>> held;
  std::size_t live_count = 0;
  for (const auto& [id, inst] : w.dmm.instances()) {
    if (!live(inst.state)) continue;
    ++live_count;
    const std::pair<const std::string*, const std::string*> ends[] = {
        {&inst.request.src_site, &inst.src_director->id}, {&inst.request.dst_site, &inst.dst_director->id}};
    for (const auto& [site, dir] : ends) {
      out.require(held[*site].insert(*dir).second, "sequence " + std::to_string(seq) + ": director " + *dir +
                                                       " shared at " + *site);
      const auto* owner = w.catalog.pool_at_site(*site).director_for(id);
      out.require(owner != nullptr && owner->id == *dir, "sequence " + std::to_string(seq) + ": pool disagrees");
    }
  }
  for (const auto& [site, pool] : w.catalog.pools()) {
    out.require(pool.free().size() + held[site].size() == pool.size(),
                "sequence " + std::to_string(seq) + ": leaked director at " + site);
  }
  out.require(w.orch.services().size() == live_count, "sequence " + std::to_string(seq) + ": orphan WAN service");
  out.require(w.rm.rule_count() == 6 * live_count, "sequence " + std::to_string(seq) + ": rule count mismatch");
}

Outcome lifecycle_fuzz() {
  Outcome out;
  Rng rng(1618);
  constexpr int kSequences = 10000;
  std::size_t ops = 0, rejected = 0, transitions = 0;
  std::map<LifecycleState, std::size_t> reached;
  const char* sites[] = {"A", "B", "C"};
  for (int seq = 0; seq < kSequences; ++seq) {
    FuzzWorld w(rng);
    std::vector<std::string> ids;
    const int n = static_cast<int>(rng.uniform_int(1, 25));
    for (int i = 0; i < n; ++i) {
      ++ops;
      auto any_id = [&]() -> std::string {
        if (ids.empty() || rng.bernoulli(0.05)) return "svc-404";
        return ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(ids.size()) - 1))];
      };
      try {
        switch (rng.uniform_int(0, 6)) {
          case 0:
          case 1: {
            const auto s = rng.uniform_int(0, 2);
            const auto d = rng.bernoulli(0.05) ? s : (s + rng.uniform_int(1, 2)) % 3;
            auto resp = w.dmm.submit_request(fixture::request("r" + std::to_string(i), 1'000'000, static_cast<int>(rng.uniform_int(0, 101)),
                                                              sites[s], sites[d]));
            ids.push_back(resp.service_id);
            break;
          }
          case 2: w.dmm.update_priority(any_id(), static_cast<int>(rng.uniform_int(0, 101))); break;
          case 3: w.dmm.demote_to_best_effort(any_id()); break;
          case 4: w.dmm.mark_fts_done(any_id()); break;
          case 5: {
            std::optional<int> p;
            if (rng.bernoulli(0.5)) p = static_cast<int>(rng.uniform_int(1, 10));
            ids.push_back(w.dmm.change_strategy(any_id(), p).service_id);
            break;
          }
          case 6: w.kernel.run_until(w.kernel.now() + rng.uniform(0.0, 25.0)); break;
        }
      } catch (const Error&) {
        ++rejected;
      } catch (const std::logic_error& e) {
        out.require(false, "sequence " + std::to_string(seq) + ": " + e.what());
      }
      check_subnets(w, out, seq);
    }

    // Release everything still holding resources.
    for (const auto& [id, inst] : w.dmm.instances()) {
      if (live(inst.state)) w.dmm.mark_fts_done(id);
    }
    check_subnets(w, out, seq);
    out.require(w.catalog.pools() == w.initial, "sequence " + std::to_string(seq) + ": pools not restored");
    out.require(w.orch.services().empty() && w.rm.rule_count() == 0, "sequence " + std::to_string(seq) + ": leftovers");

    std::map<std::string, LifecycleState> last;
    for (const auto& t : w.dmm.transitions()) {
      ++transitions;
      ++reached[t.to];
      auto it = last.find(t.service_id);
      if (!t.from) {
        out.require(it == last.end() && t.to == LifecycleState::kRequested, "bad creation record");
      } else {
        out.require(it != last.end() && it->second == *t.from, "transition from a state the service was not in");
        out.require(is_legal_transition(*t.from, t.to), "undeclared transition " + std::string(to_string(*t.from)) +
                                                            " -> " + std::string(to_string(t.to)));
      }
      last[t.service_id] = t.to;
    }
  }
  for (auto s : {LifecycleState::kActive, LifecycleState::kDraining, LifecycleState::kReleased, LifecycleState::kFailed}) {
    out.require(reached[s] > 0, "fuzzing never reached " + std::string(to_string(s)));
  }
  out.detail = std::to_string(kSequences) + " sequences, " + std::to_string(ops) + " ops (" + std::to_string(rejected) +
               " rejected), " + std::to_string(transitions) + " transitions, pools restored every time";
  return out;
}

// --- 7 ---------------------------------------------------------------------

Outcome hllhc_desk_scale() {
  Outcome out;
  const auto topo = load_topology_file((kScenarios / "hllhc_topology.json").string());
  out.require(peak_check(topo, "CERN", "FNAL"), "peak check fails on the CERN-FNAL link");

  const auto single = run_scenario(load_scenario_file((kScenarios / "hllhc_single.json").string()));
  const double t1 = single.summary["dataflows"]["raw-2026"]["completion_time"].get<double>();
  out.require(rel_err(t1, 16000.0) <= 0.01, "single flow at " + format_number(t1));
  out.require(single.ok(), "single flow audits failed");

  const auto sc = load_scenario_file((kScenarios / "hllhc_competing.json").string());
  const auto competing = run_scenario(sc);
  const double join = sc.timeline.at(1).t;
  const double t2 = competing.summary["dataflows"]["raw-2026"]["completion_time"].get<double>();
  const double alone_rest = 16000.0 - join;
  const double shared_rest = t2 - join;
  out.require(rel_err(shared_rest, 2.0 * alone_rest) <= 0.01,
              "residue took " + format_number(shared_rest) + " s, expected " + format_number(2 * alone_rest));
  out.require(competing.ok(), "competing run audits failed");
  out.detail = "2 PB alone " + num(t1, 1) + " s; competitor at t=" + num(join, 0) + " stretches the residue from " +
               num(alone_rest, 0) + " s to " + num(shared_rest, 1) + " s";
  return out;
}

// --- 8 ---------------------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t tree_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) h = fnv1a(f.filename().string() + "\n" + read_file(f), h);
  return h;
}

Outcome determinism() {
  Outcome out;
  const auto base = fs::temp_directory_path() / "prioflow_acceptance_determinism";
  fs::remove_all(base);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(kScenarios)) {
    const auto& p = entry.path();
    if (p.extension() != ".json" || p.filename().string().find("topology") != std::string::npos) continue;
    const auto sc = load_scenario_file(p.string());
    std::uint64_t hashes[2];
    for (int i = 0; i < 2; ++i) {
      const auto dir = base / (p.stem().string() + std::to_string(i));
      const auto report = run_scenario(sc);
      emit_report(report, ReportFormat::kStructuredJson, dir);
      emit_report(report, ReportFormat::kCsvTimeseries, dir);
      hashes[i] = tree_hash(dir);
    }
    ++compared;
    out.require(hashes[0] == hashes[1], p.filename().string() + " reports differ between runs");
  }
  out.require(compared >= 3, "too few scenarios to compare");
  fs::remove_all(base);
  out.detail = std::to_string(compared) + " scenarios, report trees hash-identical across reruns";
  return out;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "scale arithmetic", 1.0, scale_arithmetic},
      {2, "80/20 reserve invariant", 60.0, reserve_invariant},
      {3, "allocation correctness", 60.0, allocation_correctness},
      {4, "drain safety", 0.0, drain_safety},
      {5, "conservation and closed form", 0.0, conservation_and_closed_form},
      {6, "subnet and lifecycle safety", 0.0, lifecycle_fuzz},
      {7, "HL-LHC desk-scale scenario", 10.0, hllhc_desk_scale},
      {8, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.problems.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0.0 && secs > c.budget_s) {
      out.pass = false;
      out.problems.push_back("took " + num(secs, 2) + " s, budget " + num(c.budget_s, 0) + " s");
    }
    std::printf("%s [%d] %s (%.2f s): %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs, out.detail.c_str());
    for (const auto& p : out.problems) std::printf("    %s\n", p.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
