#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "prioflow/error.hpp"
#include "prioflow/simulation.hpp"

namespace prioflow {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// HTTP status for a library error: 400, 404 or 409.
int http_status(ErrorCode code);

struct ServiceOptions {
  /// Virtual seconds per real second. 0 freezes the clock; it then moves only
  /// through advance_to().
  double time_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Live DMM service. One worker thread owns the simulation; every request is
/// queued to it as a command and answered once the command has run, so
/// concurrent callers see some serial order of their calls.
class ApiService {
 public:
  ApiService(Topology topo, RseCatalog catalog, SimulationConfig config, ServiceOptions options = {});
  ~ApiService();
  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  /// Routes one request. Safe to call from any thread.
  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body);

  /// Runs the kernel up to virtual time `t` (no-op if already past it).
  void advance_to(SimTime t);
  SimTime now();

  /// Runs `fn` on the worker thread against the simulation.
  template <typename Fn>
  auto execute(Fn&& fn) -> decltype(fn(std::declval<Simulation&>())) {
    using R = decltype(fn(std::declval<Simulation&>()));
    auto task = std::make_shared<std::packaged_task<R()>>([this, f = std::forward<Fn>(fn)]() mutable {
      sync_clock();
      return f(*sim_);
    });
    auto fut = task->get_future();
    post([task] { (*task)(); });
    return fut.get();
  }

 private:
  void post(std::function<void()> cmd);
  void loop();
  void sync_clock();
  ApiResponse route(Simulation& sim, const std::string& method, const std::string& path, const nlohmann::json& body);

  std::unique_ptr<Simulation> sim_;
  ServiceOptions options_;
  std::chrono::steady_clock::time_point started_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::thread worker_;
};

/// Serves an ApiService over HTTP until stop() is called.
class HttpServer {
 public:
  explicit HttpServer(ApiService& service);
  ~HttpServer();

  /// Binds to host:port; port 0 picks a free port. Returns the bound port or
  /// throws Error(kInvalidArgument).
  int bind(const std::string& host, int port);
  /// Blocks serving requests.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prioflow
