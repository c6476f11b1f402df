#include <doctest.h>

#include "prioflow/error.hpp"
#include "prioflow/orchestrator.hpp"
#include "support/fixtures.hpp"

using namespace prioflow;

namespace {

struct World {
  explicit World(double capacity = 1000.0, double fraction = 0.8, DrainConfig drain = {})
      : topo(fixture::cern_fnal(capacity, fraction)), orch(topo, kernel, drain) {}

  FlowSpec flow(int weight, std::optional<double> demand = std::nullopt) const {
    return FlowSpec{"", find_path(topo, "CERN", "FNAL"), weight, demand};
  }

  Topology topo;
  Kernel kernel;
  Orchestrator orch;
};

struct CountingListener : AllocationListener {
  void before_reallocation() override { calls.push_back("before"); }
  void after_reallocation(const AllocationMap&) override { calls.push_back("after"); }
  std::vector<std::string> calls;
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("equal flows split the manageable capacity") {
  World w;
  CHECK(w.orch.provision("a", w.flow(1)).rate == doctest::Approx(800.0));
  w.orch.provision("b", w.flow(1));
  CHECK(w.orch.service("a").rate == doctest::Approx(400.0));
  CHECK(w.orch.service("b").guaranteed_rate == doctest::Approx(400.0));
}

TEST_CASE("best-effort arrivals leave priority rates alone") {
  World w;
  w.orch.provision("a", w.flow(2));
  w.orch.provision("b", w.flow(1));
  const double a = w.orch.service("a").rate;
  const double b = w.orch.service("b").rate;
  w.orch.provision("be", w.flow(0));
  CHECK(w.orch.service("a").rate == a);
  CHECK(w.orch.service("b").rate == b);
  CHECK(w.orch.service("be").rate == doctest::Approx(200.0));
  CHECK(w.orch.service("be").guaranteed_rate == 0.0);
}

TEST_CASE("routing across disconnected sites fails") {
  Topology t({{"A"}, {"B"}, {"C"}}, {{"A", "B", 10}});
  Kernel k;
  Orchestrator o(t, k);
  CHECK(code_of([&] { o.route("A", "C"); }) == ErrorCode::kNoPath);
  CHECK(code_of([&] { o.provision("x", FlowSpec{"", Path{}, 1, {}}); }) == ErrorCode::kNoPath);
}

TEST_CASE("duplicate and unknown service ids") {
  World w;
  w.orch.provision("a", w.flow(1));
  CHECK(code_of([&] { w.orch.provision("a", w.flow(1)); }) == ErrorCode::kDuplicate);
  CHECK(code_of([&] { w.orch.teardown("zzz"); }) == ErrorCode::kNotFound);
  CHECK(code_of([&] { w.orch.set_weight("zzz", 2); }) == ErrorCode::kNotFound);
}

TEST_CASE("drain rate is a fraction of the previous rate") {
  World w(62.5);
  w.orch.provision("old", w.flow(1));
  REQUIRE(w.orch.service("old").rate == doctest::Approx(50.0));
  auto [old, fresh] = w.orch.change_strategy("old", "new", w.flow(1));
  CHECK(old->state == ProvisionState::kDraining);
  CHECK(*old->drain_rate == doctest::Approx(5.0));
  CHECK(old->rate == doctest::Approx(5.0));
  CHECK(fresh->rate == doctest::Approx(45.0));
  CHECK(*old->drain_deadline == doctest::Approx(600.0));
  CHECK(w.kernel.pending(*old->drain_timeout));
}

TEST_CASE("drain floor binds for slow services") {
  World w(6.25);
  w.orch.provision("old", w.flow(1));
  REQUIRE(w.orch.service("old").rate == doctest::Approx(5.0));
  auto [old, fresh] = w.orch.change_strategy("old", "new", w.flow(1));
  CHECK(*old->drain_rate == doctest::Approx(1.0));
}

TEST_CASE("drain rate never exceeds the previous rate") {
  World w(1.0);
  w.orch.provision("old", w.flow(1));
  auto [old, fresh] = w.orch.change_strategy("old", "new", w.flow(1));
  CHECK(*old->drain_rate == doctest::Approx(0.8));
}

TEST_CASE("draining services reject a second strategy change and weight updates") {
  World w;
  w.orch.provision("old", w.flow(1));
  w.orch.change_strategy("old", "new", w.flow(1));
  CHECK(code_of([&] { w.orch.change_strategy("old", "newer", w.flow(1)); }) == ErrorCode::kIllegalState);
  CHECK(code_of([&] { w.orch.set_weight("old", 3); }) == ErrorCode::kIllegalState);
}

TEST_CASE("teardown redistributes and cancels pending drain timeouts") {
  World w;
  w.orch.provision("a", w.flow(1));
  w.orch.provision("b", w.flow(1));
  w.orch.teardown("b");
  CHECK(w.orch.service("a").rate == doctest::Approx(800.0));

  auto [old, fresh] = w.orch.change_strategy("a", "c", w.flow(1));
  const auto timeout = *old->drain_timeout;
  w.orch.teardown("a");
  CHECK_FALSE(w.kernel.pending(timeout));
  CHECK(w.orch.service("c").rate == doctest::Approx(800.0));
}

TEST_CASE("drain window expiry tears the old service down by default") {
  World w(1000.0, 0.8, DrainConfig{0.1, 1.0, 100.0});
  w.orch.provision("a", w.flow(1));
  w.orch.change_strategy("a", "b", w.flow(1));
  w.kernel.run_until(99.0);
  CHECK(w.orch.has("a"));
  w.kernel.run_until(100.0);
  CHECK_FALSE(w.orch.has("a"));
  CHECK(w.orch.service("b").rate == doctest::Approx(800.0));
}

TEST_CASE("drain timeout handler can be replaced") {
  World w(1000.0, 0.8, DrainConfig{0.1, 1.0, 10.0});
  std::vector<std::string> expired;
  w.orch.set_drain_timeout_handler([&](const std::string& id) { expired.push_back(id); });
  w.orch.provision("a", w.flow(1));
  w.orch.change_strategy("a", "b", w.flow(1));
  w.kernel.run_until(20.0);
  CHECK(expired == std::vector<std::string>{"a"});
  CHECK(w.orch.has("a"));
}

TEST_CASE("weight changes reallocate and notify listeners around the change") {
  World w;
  CountingListener l;
  w.orch.add_listener(&l);
  w.orch.provision("a", w.flow(1));
  w.orch.provision("b", w.flow(1));
  w.orch.set_weight("a", 3);
  CHECK(w.orch.service("a").rate == doctest::Approx(600.0));
  CHECK(w.orch.service("b").rate == doctest::Approx(200.0));
  w.orch.set_weight("a", 0);
  CHECK(w.orch.service("a").guaranteed_rate == 0.0);
  CHECK(w.orch.service("a").rate == doctest::Approx(200.0));
  CHECK(w.orch.service("b").rate == doctest::Approx(800.0));
  CHECK(l.calls == std::vector<std::string>{"before", "after", "before", "after", "before", "after", "before",
                                            "after"});
  CHECK(w.kernel.log().size() == 4);
}

TEST_CASE("draining best-effort flow keeps sharing the residual") {
  World w;
  w.orch.provision("be", w.flow(0));
  auto [old, fresh] = w.orch.change_strategy("be", "p", w.flow(1));
  CHECK(*old->drain_rate == 0.0);
  CHECK(old->rate == doctest::Approx(200.0));
  CHECK(fresh->rate == doctest::Approx(800.0));
}
