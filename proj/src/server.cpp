#include "prioflow/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "prioflow/error.hpp"
#include "prioflow/json_util.hpp"

namespace prioflow {

namespace {

constexpr auto kIdleTick = std::chrono::milliseconds(50);

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"error", code}, {"message", message}}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path.substr(0, path.find('?'))) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

/// Accepts a service id or a request id; the latter names the service
/// currently carrying that dataflow.
std::string resolve_service(const Simulation& sim, const std::string& id) {
  if (sim.dmm().instances().contains(id)) return id;
  if (sim.engine().dataflows().contains(id)) return sim.service_of(id);
  throw Error(ErrorCode::kNotFound, "unknown request or service '" + id + "'");
}

int priority_of(const nlohmann::json& body) {
  const auto& p = body["priority"];
  if (!p.is_number_integer()) throw Error(ErrorCode::kInvalidArgument, "priority: expected an integer");
  const auto v = p.get<std::int64_t>();
  if (v < kMinPriority || v > kMaxPriority) {
    throw Error(ErrorCode::kInvalidArgument, "priority: " + std::to_string(v) + " outside [1,100]");
  }
  return static_cast<int>(v);
}

nlohmann::json links_json(const Simulation& sim) {
  nlohmann::json links = nlohmann::json::object();
  for (const auto& [label, u] : sim.orchestrator().allocation().links) {
    links[label] = {{"capacity_gbps", u.capacity},
                    {"manageable_gbps", u.manageable},
                    {"priority_gbps", u.priority_total},
                    {"best_effort_gbps", u.best_effort_total},
                    {"residual_gbps", u.residual()}};
  }
  return {{"time", sim.kernel().now()}, {"links", links}};
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kIllegalState:
    case ErrorCode::kDuplicate:
    case ErrorCode::kExhausted:
    case ErrorCode::kNoPath:
      return 409;
  }
  return 500;
}

ApiService::ApiService(Topology topo, RseCatalog catalog, SimulationConfig config, ServiceOptions options)
    : sim_(std::make_unique<Simulation>(std::move(topo), std::move(catalog), config, options.seed)),
      options_(options),
      started_(std::chrono::steady_clock::now()) {
  if (!(options_.time_scale >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "time_scale: must be non-negative");
  worker_ = std::thread([this] { loop(); });
}

ApiService::~ApiService() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void ApiService::post(std::function<void()> cmd) {
  {
    std::lock_guard lock(mu_);
    if (stopping_) throw Error(ErrorCode::kIllegalState, "service is shutting down");
    queue_.push_back(std::move(cmd));
  }
  cv_.notify_one();
}

void ApiService::loop() {
  std::unique_lock lock(mu_);
  while (true) {
    if (options_.time_scale > 0.0) {
      cv_.wait_for(lock, kIdleTick, [this] { return stopping_ || !queue_.empty(); });
    } else {
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
    }
    if (stopping_ && queue_.empty()) return;
    if (queue_.empty()) {
      lock.unlock();
      sync_clock();
      lock.lock();
      continue;
    }
    auto cmd = std::move(queue_.front());
    queue_.pop_front();
    lock.unlock();
    cmd();
    lock.lock();
  }
}

void ApiService::sync_clock() {
  if (options_.time_scale <= 0.0) return;
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started_;
  const SimTime target = elapsed.count() * options_.time_scale;
  if (target > sim_->kernel().now()) sim_->kernel().run_until(target);
}

void ApiService::advance_to(SimTime t) {
  execute([t](Simulation& sim) {
    if (t > sim.kernel().now()) sim.kernel().run_until(t);
    return 0;
  });
}

SimTime ApiService::now() {
  return execute([](Simulation& sim) { return sim.kernel().now(); });
}

ApiResponse ApiService::handle(const std::string& method, const std::string& path, const std::string& body) {
  nlohmann::json doc = nlohmann::json::object();
  if (!body.empty()) {
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      return error_response(400, to_string(ErrorCode::kParse), std::string("body: ") + e.what());
    }
    if (!doc.is_object()) return error_response(400, to_string(ErrorCode::kParse), "body: expected an object");
  }
  try {
    return execute([&](Simulation& sim) { return route(sim, method, path, doc); });
  } catch (const Error& e) {
    return error_response(http_status(e.code()), to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, to_string(ErrorCode::kParse), e.what());
  }
}

ApiResponse ApiService::route(Simulation& sim, const std::string& method, const std::string& path,
                              const nlohmann::json& body) {
  const auto parts = split_path(path);
  if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1") {
    throw Error(ErrorCode::kNotFound, "no route for " + path);
  }
  if (parts.size() == 3 && parts[2] == "links") {
    if (method != "GET") return error_response(405, "method-not-allowed", method + " " + path);
    return {200, links_json(sim)};
  }
  if (parts[2] != "requests") throw Error(ErrorCode::kNotFound, "no route for " + path);

  if (parts.size() == 3) {
    if (method != "POST") return error_response(405, "method-not-allowed", method + " " + path);
    const auto req = request_from_json(body);
    DataflowFiles files;
    if (body.contains("file_count")) {
      if (!is_non_negative_integer(body["file_count"]) || body["file_count"].get<std::size_t>() == 0) {
        throw Error(ErrorCode::kInvalidArgument, "file_count: expected a positive integer");
      }
      files.count = body["file_count"].get<std::size_t>();
    }
    auto out = to_json(sim.submit(req, files));
    out["request_id"] = req.request_id;
    spdlog::debug("accepted {} as {}", req.request_id, out["service_id"].get<std::string>());
    return {201, out};
  }

  const auto service_id = resolve_service(sim, parts[3]);
  if (parts.size() == 4) {
    if (method == "GET") return {200, to_json(sim.dmm().query_status(service_id))};
    if (method != "PATCH") return error_response(405, "method-not-allowed", method + " " + path);
    const bool has_prio = body.contains("priority");
    const bool has_be = body.contains("best_effort");
    if (has_prio == has_be) {
      throw Error(ErrorCode::kInvalidArgument, "body: expected exactly one of priority or best_effort");
    }
    if (has_prio) return {200, to_json(sim.dmm().update_priority(service_id, priority_of(body)))};
    if (!body["best_effort"].is_boolean() || !body["best_effort"].get<bool>()) {
      throw Error(ErrorCode::kInvalidArgument, "best_effort: only true is accepted");
    }
    return {200, to_json(sim.dmm().demote_to_best_effort(service_id))};
  }

  if (parts.size() == 5 && method == "POST") {
    if (parts[4] == "fts-done") return {200, to_json(sim.dmm().mark_fts_done(service_id))};
    if (parts[4] == "change-strategy") {
      std::optional<int> prio;
      if (body.contains("priority")) prio = priority_of(body);
      const auto& dataflow_id = sim.dmm().instance(service_id).request.request_id;
      if (!sim.engine().dataflows().contains(dataflow_id) || sim.service_of(dataflow_id) != service_id) {
        throw Error(ErrorCode::kIllegalState, service_id + " no longer carries " + dataflow_id);
      }
      auto out = to_json(sim.planner().change_strategy(dataflow_id, prio));
      out["predecessor"] = service_id;
      return {201, out};
    }
  }
  throw Error(ErrorCode::kNotFound, "no route for " + method + " " + path);
}

struct HttpServer::Impl {
  explicit Impl(ApiService& s) : service(s) {}
  ApiService& service;
  httplib::Server server;
};

HttpServer::HttpServer(ApiService& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const auto out = impl_->service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
    spdlog::debug("{} {} -> {}", req.method, req.path, out.status);
  };
  const std::string pattern = R"(/api/v1/.*)";
  impl_->server.Get(pattern, handler);
  impl_->server.Post(pattern, handler);
  impl_->server.Patch(pattern, handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::kInvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace prioflow
