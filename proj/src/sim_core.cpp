#include "prioflow/sim_core.hpp"

#include <cstdio>

#include "prioflow/error.hpp"
#include "prioflow/format.hpp"

namespace prioflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kIllegalState: return "illegal-state";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kExhausted: return "exhausted";
    case ErrorCode::kNoPath: return "no-path";
    case ErrorCode::kParse: return "parse";
  }
  return "unknown";
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kRateRecompute: return "rate-recompute";
    case EventKind::kBatchSubmit: return "batch-submit";
    case EventKind::kJobComplete: return "job-complete";
    case EventKind::kDrainTimeout: return "drain-timeout";
    case EventKind::kScenarioAction: return "scenario-action";
  }
  return "unknown";
}

EventId Kernel::schedule(SimTime fire_at, EventKind kind, std::string label, Handler handler) {
  if (!(fire_at >= now_)) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot schedule event at t=" + format_number(fire_at) +
                    " before now=" + format_number(now_));
  }
  const EventId id = next_seq_++;
  const Key key{fire_at, id};
  queue_.emplace(key, Pending{kind, std::move(label), std::move(handler)});
  index_.emplace(id, key);
  return id;
}

bool Kernel::cancel(EventId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  queue_.erase(it->second);
  index_.erase(it);
  return true;
}

std::size_t Kernel::run_until(SimTime t_end) {
  if (!(t_end >= now_)) {
    throw Error(ErrorCode::kInvalidArgument,
                "run_until(" + format_number(t_end) + ") is before now=" + format_number(now_));
  }
  std::size_t dispatched = 0;
  while (!queue_.empty() && queue_.begin()->first.first <= t_end) {
    auto node = queue_.extract(queue_.begin());
    index_.erase(node.key().second);
    now_ = node.key().first;
    log_.push_back({now_, node.key().second, node.mapped().kind, node.mapped().label});
    if (node.mapped().handler) node.mapped().handler();
    ++dispatched;
  }
  now_ = t_end;
  return dispatched;
}

void Kernel::record(EventKind kind, std::string label) {
  log_.push_back({now_, next_seq_++, kind, std::move(label)});
}

std::string Kernel::log_text() const {
  std::string out;
  for (const auto& e : log_) {
    out += format_number(e.time);
    out += ' ';
    out += std::to_string(e.seq);
    out += ' ';
    out += to_string(e.kind);
    out += ' ';
    out += e.label;
    out += '\n';
  }
  return out;
}

std::uint64_t Kernel::log_hash() const { return fnv1a(log_text()); }

double Rng::uniform() {
  // 53 random mantissa bits.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw Error(ErrorCode::kInvalidArgument, "uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace prioflow
