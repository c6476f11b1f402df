#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prioflow/dmm.hpp"
#include "prioflow/orchestrator.hpp"
#include "prioflow/rse.hpp"
#include "prioflow/sim_core.hpp"

namespace prioflow {

struct FileSpec {
  std::string lfn;
  std::uint64_t size = 0;
};

/// Fixed list of files moving between two sites under one service.
struct Dataflow {
  std::string dataflow_id;
  std::vector<FileSpec> files;
  std::string src_rse;
  std::string dst_rse;
  std::string service_id;

  std::uint64_t total_bytes() const;
};

/// Throws Error(kInvalidArgument) on an empty file list or a zero-size file.
Dataflow make_dataflow(std::string dataflow_id, std::vector<FileSpec> files, std::string src_rse,
                       std::string dst_rse, std::string service_id);

/// Splits `bytes` into `count` files named /store/<prefix>/file_NNNNNN. With
/// spread > 0 sizes vary by up to +-spread around the mean, drawn from `rng`.
/// Sizes always sum to `bytes` exactly.
std::vector<FileSpec> split_files(const std::string& prefix, std::uint64_t bytes, std::size_t count,
                                  double spread = 0.0, Rng* rng = nullptr);

enum class JobState { kQueued, kActive, kDone, kFailed };
std::string_view to_string(JobState s);

struct TransferJob {
  std::string dataflow_id;
  std::size_t index = 0;
  std::string batch_id;
  std::string service_id;
  std::string lfn;
  std::uint64_t size = 0;
  std::string src_pfn;
  std::string dst_pfn;
  JobState state = JobState::kQueued;
  double progress = 0.0;
  int retries = 0;
  std::string failure;
  std::optional<SimTime> completed_at;

  /// Equals size iff DONE.
  std::uint64_t bytes_moved() const;
};

struct Batch {
  std::string batch_id;
  std::string dataflow_id;
  std::vector<std::size_t> files;
  std::optional<SimTime> submitted_at;
};

/// Partitions files in listed order into batches of at most batch_size.
std::vector<Batch> plan_batches(const Dataflow& dataflow, std::size_t batch_size);

struct FtsConfig {
  std::size_t batch_size = 50;
  std::size_t max_active_jobs = 8;
  std::size_t max_pending_batches = 2;
  int max_retries = 3;
};

struct DataflowStatus {
  std::string dataflow_id;
  std::uint64_t bytes_moved = 0;
  std::uint64_t total_bytes = 0;
  std::size_t unsubmitted = 0;
  std::map<JobState, std::size_t> jobs;
  bool done = false;
};

/// FTS-like queues. Each service has a FIFO of jobs, at most max_active_jobs
/// of which run at once and split the service's allocated rate equally.
/// Progress is integrated exactly between rate changes.
class TransferEngine : public AllocationListener {
 public:
  TransferEngine(Kernel& kernel, const RseCatalog& catalog, FtsConfig config = {});

  void add_dataflow(Dataflow dataflow);
  const Dataflow& dataflow(const std::string& dataflow_id) const;
  void rebind(const std::string& dataflow_id, const std::string& service_id);

  /// Freezes PFNs through the service's directors and queues the jobs.
  /// Rejects services that are not ACTIVE or DRAINING.
  void submit_batch(const Batch& batch, const ServiceInstance& service);

  /// Applies the retry path to an ACTIVE job. Returns false if the job was
  /// not running.
  bool fail_and_retry(const std::string& dataflow_id, std::size_t index, const std::string& reason);
  /// Fails every unfinished job of a released service through the retry path.
  void service_released(const std::string& service_id);

  /// Accrues progress up to kernel.now().
  void advance();

  DataflowStatus dataflow_status(const std::string& dataflow_id) const;
  std::uint64_t bytes_moved_for_service(const std::string& service_id) const;
  std::size_t unfinished_jobs(const std::string& service_id) const;
  const TransferJob* job(const std::string& dataflow_id, std::size_t index) const;
  const std::map<std::string, TransferJob>& jobs() const noexcept { return jobs_; }
  const std::map<std::string, Dataflow>& dataflows() const noexcept { return dataflows_; }
  /// Aggregate progress rate of a service's running jobs, Gbps.
  double service_throughput(const std::string& service_id) const;
  double service_rate(const std::string& service_id) const;
  const FtsConfig& config() const noexcept { return config_; }

  /// (dataflow_id, batch_id) once every job of the batch is DONE or FAILED.
  std::function<void(const std::string&, const std::string&)> on_batch_finished;
  std::function<void(const TransferJob&)> on_job_failed;
  std::function<void(const TransferJob&)> on_job_submitted;

  void before_reallocation() override { advance(); }
  void after_reallocation(const AllocationMap& allocation) override;

  static std::string job_key(const std::string& dataflow_id, std::size_t index);

 private:
  struct ServiceQueue {
    std::deque<std::string> queued;
    std::vector<std::string> active;
    double rate_gbps = 0.0;
    bool released = false;
  };

  void complete_finished(ServiceQueue& queue);
  void dispatch();
  void reschedule();
  void job_settled(TransferJob& job);
  void on_completion_event();
  bool retry_or_fail(TransferJob& job, const std::string& reason);

  Kernel& kernel_;
  const RseCatalog& catalog_;
  FtsConfig config_;
  SimTime last_advance_ = 0.0;
  std::map<std::string, Dataflow> dataflows_;
  std::map<std::string, TransferJob> jobs_;
  std::map<std::string, ServiceQueue> queues_;
  std::map<std::string, std::size_t> batch_open_;
  std::optional<EventId> completion_event_;
  AllocationMap allocation_;
};

/// Rucio-side driver: plans batches, keeps only a few of them handed to FTS,
/// rebinds future batches after a strategy change, and signals fts-done for
/// drained services.
class RucioPlanner {
 public:
  struct Options {
    /// Send fts-done once a dataflow completes.
    bool auto_release = false;
  };

  RucioPlanner(Kernel& kernel, Dmm& dmm, TransferEngine& engine, Options options);

  /// Registers the dataflow and submits its first batches.
  void start(Dataflow dataflow);
  /// Strategy change for the service carrying a dataflow; future batches go
  /// to the successor. Returns the successor's response.
  ServiceResponse change_strategy(const std::string& dataflow_id, std::optional<int> new_priority = std::nullopt);

  std::optional<SimTime> completion_time(const std::string& dataflow_id) const;
  const std::map<std::string, SimTime>& completion_times() const noexcept { return completed_; }
  const std::vector<Batch>& batches(const std::string& dataflow_id) const { return plans_.at(dataflow_id).batches; }
  /// Batch ids in the order they finished.
  const std::vector<std::string>& finished_batches() const noexcept { return finished_order_; }

 private:
  struct Plan {
    std::vector<Batch> batches;
    std::size_t next = 0;
    std::size_t outstanding = 0;
  };

  void submit_more(const std::string& dataflow_id);
  void batch_finished(const std::string& dataflow_id, const std::string& batch_id);
  void check_drained(const std::string& service_id);

  Kernel& kernel_;
  Dmm& dmm_;
  TransferEngine& engine_;
  Options options_;
  std::map<std::string, Plan> plans_;
  std::map<std::string, SimTime> completed_;
  std::vector<std::string> finished_order_;
};

}  // namespace prioflow
