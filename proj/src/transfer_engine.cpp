#include "prioflow/transfer_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "prioflow/error.hpp"

namespace prioflow {

namespace {

constexpr double kBytesPerGbit = 1e9 / 8.0;

// A job is complete when what is left would take less than this long.
double completion_slack(SimTime now) { return std::max(1e-9, std::abs(now) * 1e-14); }

}  // namespace

std::uint64_t Dataflow::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& f : files) total += f.size;
  return total;
}

Dataflow make_dataflow(std::string dataflow_id, std::vector<FileSpec> files, std::string src_rse,
                       std::string dst_rse, std::string service_id) {
  if (dataflow_id.empty()) throw Error(ErrorCode::kInvalidArgument, "dataflow id is empty");
  if (files.empty()) throw Error(ErrorCode::kInvalidArgument, "dataflow " + dataflow_id + " has no files");
  for (const auto& f : files) {
    if (f.size == 0) throw Error(ErrorCode::kInvalidArgument, "dataflow " + dataflow_id + ": file " + f.lfn + " is empty");
    if (f.lfn.empty()) throw Error(ErrorCode::kInvalidArgument, "dataflow " + dataflow_id + ": file without lfn");
  }
  return Dataflow{std::move(dataflow_id), std::move(files), std::move(src_rse), std::move(dst_rse),
                  std::move(service_id)};
}

std::vector<FileSpec> split_files(const std::string& prefix, std::uint64_t bytes, std::size_t count, double spread,
                                  Rng* rng) {
  if (bytes == 0) throw Error(ErrorCode::kInvalidArgument, "split_files: zero bytes");
  count = std::max<std::size_t>(1, std::min<std::uint64_t>(count, bytes));
  std::vector<double> weight(count, 1.0);
  if (spread > 0.0 && rng != nullptr) {
    spread = std::min(spread, 0.99);
    for (auto& w : weight) w = 1.0 + spread * (2.0 * rng->uniform() - 1.0);
  }
  const double total_weight = std::accumulate(weight.begin(), weight.end(), 0.0);
  std::vector<FileSpec> files(count);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "/file_%06zu", i);
    files[i].lfn = "/store/" + prefix + name;
    if (i + 1 == count) {
      files[i].size = bytes - assigned;
    } else {
      const auto share = static_cast<std::uint64_t>(std::floor(static_cast<double>(bytes) * weight[i] / total_weight));
      // Leave at least one byte for every remaining file.
      const std::uint64_t cap = bytes - assigned - (count - i - 1);
      files[i].size = std::clamp<std::uint64_t>(share, 1, cap);
    }
    assigned += files[i].size;
  }
  return files;
}

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::kQueued: return "QUEUED";
    case JobState::kActive: return "ACTIVE";
    case JobState::kDone: return "DONE";
    case JobState::kFailed: return "FAILED";
  }
  return "UNKNOWN";
}

std::uint64_t TransferJob::bytes_moved() const {
  if (state == JobState::kDone) return size;
  if (progress <= 0.0) return 0;
  const auto whole = static_cast<std::uint64_t>(std::floor(progress));
  return std::min(whole, size - 1);
}

std::vector<Batch> plan_batches(const Dataflow& dataflow, std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be positive");
  std::vector<Batch> out;
  for (std::size_t i = 0; i < dataflow.files.size(); i += batch_size) {
    Batch b;
    b.batch_id = dataflow.dataflow_id + "-b" + std::to_string(out.size());
    b.dataflow_id = dataflow.dataflow_id;
    for (std::size_t j = i; j < std::min(i + batch_size, dataflow.files.size()); ++j) b.files.push_back(j);
    out.push_back(std::move(b));
  }
  return out;
}

std::string TransferEngine::job_key(const std::string& dataflow_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%08zu", index);
  return dataflow_id + buf;
}

TransferEngine::TransferEngine(Kernel& kernel, const RseCatalog& catalog, FtsConfig config)
    : kernel_(kernel), catalog_(catalog), config_(config) {
  if (config_.max_active_jobs == 0) throw Error(ErrorCode::kInvalidArgument, "max_active_jobs must be positive");
  if (config_.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be positive");
  if (config_.max_pending_batches == 0) throw Error(ErrorCode::kInvalidArgument, "max_pending_batches must be positive");
  if (config_.max_retries < 0) throw Error(ErrorCode::kInvalidArgument, "max_retries must be non-negative");
  last_advance_ = kernel_.now();
}

void TransferEngine::add_dataflow(Dataflow dataflow) {
  if (dataflows_.contains(dataflow.dataflow_id)) {
    throw Error(ErrorCode::kDuplicate, "dataflow " + dataflow.dataflow_id + " already registered");
  }
  const std::string id = dataflow.dataflow_id;
  dataflows_.emplace(id, std::move(dataflow));
}

const Dataflow& TransferEngine::dataflow(const std::string& dataflow_id) const {
  auto it = dataflows_.find(dataflow_id);
  if (it == dataflows_.end()) throw Error(ErrorCode::kNotFound, "unknown dataflow " + dataflow_id);
  return it->second;
}

void TransferEngine::rebind(const std::string& dataflow_id, const std::string& service_id) {
  auto it = dataflows_.find(dataflow_id);
  if (it == dataflows_.end()) throw Error(ErrorCode::kNotFound, "unknown dataflow " + dataflow_id);
  it->second.service_id = service_id;
}

void TransferEngine::submit_batch(const Batch& batch, const ServiceInstance& service) {
  if (service.state != LifecycleState::kActive && service.state != LifecycleState::kDraining) {
    throw Error(ErrorCode::kIllegalState, "cannot submit batch " + batch.batch_id + " to service " +
                                              service.service_id + " in state " +
                                              std::string(to_string(service.state)));
  }
  const auto& df = dataflow(batch.dataflow_id);
  if (batch.files.empty()) throw Error(ErrorCode::kInvalidArgument, "batch " + batch.batch_id + " is empty");
  if (batch_open_.contains(batch.batch_id)) {
    throw Error(ErrorCode::kDuplicate, "batch " + batch.batch_id + " already submitted");
  }
  const auto& src = catalog_.at_site(service.request.src_site);
  const auto& dst = catalog_.at_site(service.request.dst_site);

  std::vector<TransferJob> fresh;
  for (auto index : batch.files) {
    if (index >= df.files.size()) throw Error(ErrorCode::kInvalidArgument, "batch references file " + std::to_string(index));
    if (jobs_.contains(job_key(df.dataflow_id, index))) {
      throw Error(ErrorCode::kDuplicate, "file " + df.files[index].lfn + " already handed to FTS");
    }
    TransferJob job;
    job.dataflow_id = df.dataflow_id;
    job.index = index;
    job.batch_id = batch.batch_id;
    job.service_id = service.service_id;
    job.lfn = df.files[index].lfn;
    job.size = df.files[index].size;
    job.src_pfn = resolve_pfn(src, job.lfn, AccessPreference::kThirdPartyTransfer, service.src_director->endpoint_host);
    job.dst_pfn = resolve_pfn(dst, job.lfn, AccessPreference::kThirdPartyTransfer, service.dst_director->endpoint_host);
    fresh.push_back(std::move(job));
  }

  advance();
  auto [qit, created] = queues_.try_emplace(service.service_id);
  auto& queue = qit->second;
  if (created) queue.rate_gbps = allocation_.rate_of(service.service_id);
  for (auto& job : fresh) {
    auto key = job_key(job.dataflow_id, job.index);
    if (on_job_submitted) on_job_submitted(job);
    queue.queued.push_back(key);
    jobs_.emplace(std::move(key), std::move(job));
  }
  batch_open_[batch.batch_id] = fresh.size();
  dispatch();
  reschedule();
}

void TransferEngine::advance() {
  const SimTime now = kernel_.now();
  const double dt = now - last_advance_;
  if (dt > 0.0) {
    for (auto& [id, queue] : queues_) {
      if (queue.active.empty() || queue.rate_gbps <= 0.0) continue;
      const double share = queue.rate_gbps * kBytesPerGbit / static_cast<double>(queue.active.size());
      for (const auto& key : queue.active) jobs_.at(key).progress += share * dt;
    }
  }
  last_advance_ = now;
  for (auto& [id, queue] : queues_) complete_finished(queue);
  dispatch();
}

void TransferEngine::complete_finished(ServiceQueue& queue) {
  if (queue.active.empty()) return;
  const double share = queue.rate_gbps * kBytesPerGbit / static_cast<double>(queue.active.size());
  const double slack = completion_slack(kernel_.now());
  std::vector<std::string> finished;
  for (const auto& key : queue.active) {
    const auto& job = jobs_.at(key);
    const double left = static_cast<double>(job.size) - job.progress;
    if (left <= static_cast<double>(job.size) * 1e-12 || (share > 0.0 && left / share <= slack)) {
      finished.push_back(key);
    }
  }
  for (const auto& key : finished) {
    auto& job = jobs_.at(key);
    job.state = JobState::kDone;
    job.progress = static_cast<double>(job.size);
    job.completed_at = kernel_.now();
    std::erase(queue.active, key);
    job_settled(job);
  }
}

void TransferEngine::dispatch() {
  for (auto& [id, queue] : queues_) {
    if (queue.released) continue;
    while (queue.active.size() < config_.max_active_jobs && !queue.queued.empty()) {
      auto key = queue.queued.front();
      queue.queued.pop_front();
      jobs_.at(key).state = JobState::kActive;
      queue.active.push_back(std::move(key));
    }
  }
}

void TransferEngine::reschedule() {
  if (completion_event_) {
    kernel_.cancel(*completion_event_);
    completion_event_.reset();
  }
  double next = std::numeric_limits<double>::infinity();
  for (const auto& [id, queue] : queues_) {
    if (queue.active.empty() || queue.rate_gbps <= 0.0) continue;
    const double share = queue.rate_gbps * kBytesPerGbit / static_cast<double>(queue.active.size());
    for (const auto& key : queue.active) {
      const auto& job = jobs_.at(key);
      next = std::min(next, std::max(0.0, static_cast<double>(job.size) - job.progress) / share);
    }
  }
  if (std::isfinite(next)) {
    completion_event_ = kernel_.schedule(kernel_.now() + next, EventKind::kJobComplete, "job-complete",
                                         [this] { on_completion_event(); });
  }
}

void TransferEngine::on_completion_event() {
  completion_event_.reset();
  advance();
  reschedule();
}

void TransferEngine::job_settled(TransferJob& job) {
  auto it = batch_open_.find(job.batch_id);
  if (it == batch_open_.end() || it->second == 0) return;
  if (--it->second == 0 && on_batch_finished) on_batch_finished(job.dataflow_id, job.batch_id);
}

bool TransferEngine::retry_or_fail(TransferJob& job, const std::string& reason) {
  job.progress = 0.0;
  ++job.retries;
  if (job.retries > config_.max_retries) {
    job.state = JobState::kFailed;
    job.failure = reason;
    job_settled(job);
    if (on_job_failed) on_job_failed(job);
    return true;
  }
  job.state = JobState::kQueued;
  return false;
}

bool TransferEngine::fail_and_retry(const std::string& dataflow_id, std::size_t index, const std::string& reason) {
  auto it = jobs_.find(job_key(dataflow_id, index));
  if (it == jobs_.end() || it->second.state != JobState::kActive) return false;
  advance();
  // advance() may have just completed it.
  if (it->second.state != JobState::kActive) return false;
  auto& job = it->second;
  auto& queue = queues_.at(job.service_id);
  std::erase(queue.active, it->first);
  if (!retry_or_fail(job, reason)) queue.queued.push_back(it->first);
  dispatch();
  reschedule();
  return true;
}

void TransferEngine::service_released(const std::string& service_id) {
  auto qit = queues_.find(service_id);
  if (qit == queues_.end()) return;
  advance();
  auto& queue = qit->second;
  queue.released = true;
  queue.rate_gbps = 0.0;
  std::vector<std::string> stranded(queue.active.begin(), queue.active.end());
  stranded.insert(stranded.end(), queue.queued.begin(), queue.queued.end());
  queue.active.clear();
  queue.queued.clear();
  // The path is gone, so every retry fails in turn until the budget runs out.
  for (const auto& key : stranded) {
    auto& job = jobs_.at(key);
    while (!retry_or_fail(job, "service " + service_id + " released with transfer in flight")) {
    }
  }
  reschedule();
}

void TransferEngine::after_reallocation(const AllocationMap& allocation) {
  allocation_ = allocation;
  for (auto& [id, queue] : queues_) queue.rate_gbps = queue.released ? 0.0 : allocation.rate_of(id);
  reschedule();
}

DataflowStatus TransferEngine::dataflow_status(const std::string& dataflow_id) const {
  const auto& df = dataflow(dataflow_id);
  DataflowStatus s;
  s.dataflow_id = dataflow_id;
  s.total_bytes = df.total_bytes();
  for (auto st : {JobState::kQueued, JobState::kActive, JobState::kDone, JobState::kFailed}) s.jobs[st] = 0;
  for (std::size_t i = 0; i < df.files.size(); ++i) {
    const auto* j = job(dataflow_id, i);
    if (j == nullptr) {
      ++s.unsubmitted;
      continue;
    }
    ++s.jobs[j->state];
    s.bytes_moved += j->bytes_moved();
  }
  s.done = s.jobs[JobState::kDone] == df.files.size();
  return s;
}

std::uint64_t TransferEngine::bytes_moved_for_service(const std::string& service_id) const {
  std::uint64_t total = 0;
  for (const auto& [key, job] : jobs_) {
    if (job.service_id == service_id) total += job.bytes_moved();
  }
  return total;
}

std::size_t TransferEngine::unfinished_jobs(const std::string& service_id) const {
  auto it = queues_.find(service_id);
  if (it == queues_.end()) return 0;
  return it->second.active.size() + it->second.queued.size();
}

const TransferJob* TransferEngine::job(const std::string& dataflow_id, std::size_t index) const {
  auto it = jobs_.find(job_key(dataflow_id, index));
  return it == jobs_.end() ? nullptr : &it->second;
}

double TransferEngine::service_throughput(const std::string& service_id) const {
  auto it = queues_.find(service_id);
  if (it == queues_.end() || it->second.active.empty()) return 0.0;
  return it->second.rate_gbps;
}

double TransferEngine::service_rate(const std::string& service_id) const {
  auto it = queues_.find(service_id);
  return it == queues_.end() ? 0.0 : it->second.rate_gbps;
}

RucioPlanner::RucioPlanner(Kernel& kernel, Dmm& dmm, TransferEngine& engine, Options options)
    : kernel_(kernel), dmm_(dmm), engine_(engine), options_(options) {
  engine_.on_batch_finished = [this](const std::string& df, const std::string& batch) {
    // Handlers run inside engine/orchestrator updates; act from a fresh event.
    kernel_.schedule(kernel_.now(), EventKind::kBatchSubmit, "batch-finished " + batch,
                     [this, df, batch] { batch_finished(df, batch); });
  };
}

void RucioPlanner::start(Dataflow dataflow) {
  const std::string id = dataflow.dataflow_id;
  auto batches = plan_batches(dataflow, engine_.config().batch_size);
  engine_.add_dataflow(std::move(dataflow));
  plans_[id] = Plan{std::move(batches), 0, 0};
  submit_more(id);
}

void RucioPlanner::submit_more(const std::string& dataflow_id) {
  auto& plan = plans_.at(dataflow_id);
  const auto& df = engine_.dataflow(dataflow_id);
  const auto& service = dmm_.instance(df.service_id);
  if (service.state != LifecycleState::kActive) return;
  while (plan.outstanding < engine_.config().max_pending_batches && plan.next < plan.batches.size()) {
    auto& batch = plan.batches[plan.next];
    batch.submitted_at = kernel_.now();
    engine_.submit_batch(batch, service);
    ++plan.next;
    ++plan.outstanding;
  }
}

void RucioPlanner::batch_finished(const std::string& dataflow_id, const std::string& batch_id) {
  finished_order_.push_back(batch_id);
  auto& plan = plans_.at(dataflow_id);
  if (plan.outstanding > 0) --plan.outstanding;

  std::string batch_service;
  for (const auto& b : plan.batches) {
    if (b.batch_id == batch_id) batch_service = engine_.job(dataflow_id, b.files.front())->service_id;
  }
  submit_more(dataflow_id);

  const auto status = engine_.dataflow_status(dataflow_id);
  if (status.done && !completed_.contains(dataflow_id)) {
    completed_[dataflow_id] = kernel_.now();
    const auto& service = dmm_.instance(engine_.dataflow(dataflow_id).service_id);
    if (options_.auto_release && service.state == LifecycleState::kActive) dmm_.mark_fts_done(service.service_id);
  }
  if (!batch_service.empty()) check_drained(batch_service);
}

void RucioPlanner::check_drained(const std::string& service_id) {
  const auto& inst = dmm_.instance(service_id);
  if (inst.state == LifecycleState::kDraining && engine_.unfinished_jobs(service_id) == 0) {
    dmm_.mark_fts_done(service_id);
  }
}

ServiceResponse RucioPlanner::change_strategy(const std::string& dataflow_id, std::optional<int> new_priority) {
  const std::string old = engine_.dataflow(dataflow_id).service_id;
  auto response = dmm_.change_strategy(old, new_priority);
  engine_.rebind(dataflow_id, response.service_id);
  kernel_.schedule(kernel_.now(), EventKind::kBatchSubmit, "rebind " + dataflow_id, [this, dataflow_id, old] {
    submit_more(dataflow_id);
    check_drained(old);
  });
  return response;
}

std::optional<SimTime> RucioPlanner::completion_time(const std::string& dataflow_id) const {
  auto it = completed_.find(dataflow_id);
  if (it == completed_.end()) return std::nullopt;
  return it->second;
}

}  // namespace prioflow
