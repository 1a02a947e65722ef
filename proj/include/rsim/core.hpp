#pragma once

// Core domain vocabulary shared by every other header: devices, commands,
// routines, fault specs, the engine configuration, and the deterministic
// event queue that drives the simulated clock.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsim {

using Time = std::int64_t;  // simulated milliseconds
using RoutineId = std::int32_t;
using StateValue = std::int32_t;

inline constexpr Time kNoTime = -1;
inline constexpr Time kTimeMax = INT64_MAX / 4;

enum class CommandKind { Short, Long };
enum class Necessity { Must, BestEffort };

struct Command {
  int device = -1;
  StateValue target = 0;
  Time duration_ms = 1;
  CommandKind kind = CommandKind::Short;
  Necessity necessity = Necessity::Must;
  bool read = false;  // reads observe state, never write it

  friend bool operator==(const Command&, const Command&) = default;
};

inline CommandKind kind_for_duration(Time duration_ms, Time short_bound_ms) {
  return duration_ms > short_bound_ms ? CommandKind::Long : CommandKind::Short;
}

struct Routine {
  RoutineId id = -1;
  std::string name;
  Time submit_time_ms = 0;
  std::vector<Command> commands;

  Time ideal_runtime() const {
    Time total = 0;
    for (const auto& c : commands) total += c.duration_ms;
    return total;
  }

  friend bool operator==(const Routine&, const Routine&) = default;
};

struct DeviceInfo {
  int id = -1;
  std::string name;
  StateValue initial = 0;

  friend bool operator==(const DeviceInfo&, const DeviceInfo&) = default;
};

struct FaultSpec {
  int device = -1;
  Time fail_at_ms = 0;
  std::optional<Time> restart_at_ms;

  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

// How routines enter the run: at their recorded submit times, or closed-loop
// keeping `rho` in flight (the next one is injected when one finishes).
enum class InjectionMode { Explicit, ClosedLoop };

struct Workload {
  std::vector<DeviceInfo> devices;
  std::vector<Routine> routines;
  std::vector<FaultSpec> faults;
  InjectionMode injection = InjectionMode::Explicit;
  int rho = 0;  // in-flight target for ClosedLoop

  friend bool operator==(const Workload&, const Workload&) = default;
};

struct EngineConfig {
  Time tau_timeout_ms = 100;       // lineage width estimate for short commands
  double leniency = 1.1;           // lease revocation slack factor
  Time short_bound_ms = 60'000;    // commands longer than this are Long
  double stretch_threshold = 2.0;  // timeline admission guard
  int ttl_init = 5;                // wait-queue starvation counter
  bool pre_leases = true;
  bool post_leases = true;
  Time ping_interval_ms = 1000;
  Time ack_timeout_ms = 100;
  bool implicit_ack = true;
  bool validate_each_event = false;  // run invariant checks after every event
};

// Sorted unique device ids referenced by a routine.
inline std::vector<int> devices_of(const Routine& r) {
  std::vector<int> out;
  for (const auto& c : r.commands) out.push_back(c.device);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Exact intersection of the devices two routines reference.
inline std::vector<int> conflict_set(const Routine& a, const Routine& b) {
  std::vector<int> da = devices_of(a), db = devices_of(b), out;
  std::set_intersection(da.begin(), da.end(), db.begin(), db.end(),
                        std::back_inserter(out));
  return out;
}

// Min-heap keyed by (time, insertion sequence). Ties resolve in insertion
// order, which is what makes replays byte-identical.
template <typename Payload>
class EventQueue {
 public:
  struct Entry {
    Time time;
    std::uint64_t seq;
    Payload payload;
  };

  std::uint64_t push(Time t, Payload p) {
    const std::uint64_t seq = next_seq_++;
    heap_.push_back(Entry{t, seq, std::move(p)});
    std::push_heap(heap_.begin(), heap_.end(), later);
    return seq;
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

  const Entry& peek() const {
    if (heap_.empty()) throw std::runtime_error("event queue empty");
    return heap_.front();
  }

  Entry pop() {
    if (heap_.empty()) throw std::runtime_error("event queue empty");
    std::pop_heap(heap_.begin(), heap_.end(), later);
    Entry e = std::move(heap_.back());
    heap_.pop_back();
    return e;
  }

 private:
  static bool later(const Entry& a, const Entry& b) {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }

  std::vector<Entry> heap_;
  std::uint64_t next_seq_ = 0;
};

// Simulated clock: monotone `now`, advanced only by popping events.
template <typename Payload>
class SimClock {
 public:
  Time now() const { return now_; }
  EventQueue<Payload>& queue() { return queue_; }
  const EventQueue<Payload>& queue() const { return queue_; }

  std::uint64_t schedule(Time t, Payload p) {
    if (t < now_) throw std::logic_error("cannot schedule in the past");
    return queue_.push(t, std::move(p));
  }

  // Pops the lowest (time, seq) entry and advances the clock to it.
  std::optional<typename EventQueue<Payload>::Entry> advance_to_next_event() {
    if (queue_.empty()) return std::nullopt;
    auto e = queue_.pop();
    now_ = e.time;
    return e;
  }

 private:
  Time now_ = 0;
  EventQueue<Payload> queue_;
};

}  // namespace rsim
