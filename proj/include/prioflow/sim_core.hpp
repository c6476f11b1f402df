#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace prioflow {

/// Virtual time in seconds.
using SimTime = double;
using EventId = std::uint64_t;

enum class EventKind {
  kRateRecompute,
  kBatchSubmit,
  kJobComplete,
  kDrainTimeout,
  kScenarioAction,
};

std::string_view to_string(EventKind kind);

/// One line of the dispatch log. Recomputations triggered inside a handler are
/// annotated with the same time and a fresh sequence number.
struct LogEntry {
  SimTime time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kScenarioAction;
  std::string label;
};

/// Deterministic discrete-event kernel.
///
/// Events are ordered by (fire_at, seq) where seq is assigned when the event
/// is scheduled, so equal-time events fire in scheduling order. The clock
/// only moves forward and only while dispatching.
class Kernel {
 public:
  using Handler = std::function<void()>;

  SimTime now() const noexcept { return now_; }

  /// Throws Error(kInvalidArgument) when fire_at < now().
  EventId schedule(SimTime fire_at, EventKind kind, std::string label, Handler handler);

  /// Returns false if the event already fired or was cancelled.
  bool cancel(EventId id);

  bool pending(EventId id) const { return index_.contains(id); }
  std::size_t queued() const noexcept { return queue_.size(); }

  /// Dispatches every event with fire_at <= t_end, then sets now() to t_end.
  std::size_t run_until(SimTime t_end);

  /// Appends an annotation at now() without scheduling anything.
  void record(EventKind kind, std::string label);

  const std::vector<LogEntry>& log() const noexcept { return log_; }
  std::string log_text() const;
  std::uint64_t log_hash() const;

 private:
  struct Pending {
    EventKind kind;
    std::string label;
    Handler handler;
  };
  using Key = std::pair<SimTime, std::uint64_t>;

  SimTime now_ = 0.0;
  std::uint64_t next_seq_ = 1;
  std::map<Key, Pending> queue_;
  std::unordered_map<EventId, Key> index_;
  std::vector<LogEntry> log_;
};

/// Seeded random stream. Draws are derived from the raw 64-bit engine output
/// only, so a seed reproduces the same values across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

inline Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

/// 64-bit FNV-1a, used for report and log fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace prioflow
