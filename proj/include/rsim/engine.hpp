#pragma once

// Visibility-model engines. One deterministic event loop drives emulated
// devices, the ping-based failure detector, and a per-model concurrency
// discipline:
//
//   WV    dispatch everything on schedule, no locks, no serialization order
//   GSV   one routine at a time; any event on a touched device aborts it
//   S-GSV one routine at a time; any event at all aborts it
//   PSV   conflict-free routines run concurrently; finish-point recovery rule
//   EV    full lineage table + leases + pluggable scheduler
//
// Every engine emits the same trace vocabulary and (except WV) a
// serialization order assembled from accumulated serialize-before edges.

#include <cassert>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "rsim/core.hpp"
#include "rsim/fabric.hpp"
#include "rsim/lineage.hpp"
#include "rsim/scheduler.hpp"
#include "rsim/trace.hpp"

namespace rsim {

enum class Model { WV, GSV, SGSV, PSV, EV };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::WV: return "wv";
    case Model::GSV: return "gsv";
    case Model::SGSV: return "sgsv";
    case Model::PSV: return "psv";
    case Model::EV: return "ev";
  }
  return "?";
}

inline std::optional<Model> model_from_string(const std::string& s) {
  if (s == "wv") return Model::WV;
  if (s == "gsv") return Model::GSV;
  if (s == "sgsv") return Model::SGSV;
  if (s == "psv") return Model::PSV;
  if (s == "ev") return Model::EV;
  return std::nullopt;
}

inline std::optional<SchedulerPolicy> scheduler_from_string(
    const std::string& s) {
  if (s == "fcfs") return SchedulerPolicy::Fcfs;
  if (s == "jit") return SchedulerPolicy::Jit;
  if (s == "timeline") return SchedulerPolicy::Timeline;
  return std::nullopt;
}

struct OrderEntry {
  enum class Kind { Routine, Fail, Restart };
  Kind kind = Kind::Routine;
  int id = -1;      // routine id, or detection index for events
  int device = -1;  // events only
  Time time = 0;    // finish / detection time
};

struct RoutineOutcome {
  RoutineId id = -1;
  bool committed = false;
  bool aborted = false;
  Time submit = kNoTime;
  Time start = kNoTime;
  Time finish = kNoTime;
  int commands = 0;
  int executed = 0;     // commands completed before finishing
  int rolled_back = 0;  // applied commands whose effect an abort undid
  bool had_best_effort_failure = false;
};

struct RunResult {
  Trace trace;
  std::vector<StateValue> end_states;
  std::vector<OrderEntry> serialization_order;  // committed routines + events
  std::vector<OrderEntry> detected_events;
  std::vector<RoutineOutcome> outcomes;
  bool order_consistent = true;
  std::vector<std::string> invariant_violations;
  Time makespan = 0;
};

namespace detail {

struct Ev {
  enum class Kind {
    Submit,
    CmdEnd,
    PhysFail,
    PhysRestart,
    Ping,
    DetectFail,
    EntryStart,
    LeaseRevoke,
    WvDispatch,
  };
  Kind kind;
  int a = -1;
  int b = -1;
  std::uint64_t gen = 0;
};

class EngineBase {
 public:
  EngineBase(const Workload& wl, const EngineConfig& cfg)
      : wl_(wl), cfg_(cfg), fabric_(wl.devices),
        detector_(static_cast<int>(wl.devices.size()), cfg) {
    rs_.resize(wl.routines.size());
    for (std::size_t i = 0; i < wl.routines.size(); ++i) {
      rs_[i].ttl = cfg.ttl_init;
      for (const auto& c : wl.routines[i].commands)
        rs_[i].touch[c.device].total++;
    }
    future_transitions_.assign(wl.devices.size(), 0);
    prev_event_of_device_.assign(wl.devices.size(), -1);
  }
  virtual ~EngineBase() = default;

  RunResult run() {
    seed_events();
    while (auto ev = clock_.advance_to_next_event()) {
      handle(ev->payload);
      after_event();
    }
    return finish_run();
  }

 protected:
  enum class Phase { Pending, Waiting, Scheduled, Running, Committed, Aborted };

  struct DevTouch {
    int total = 0;
    int done = 0;  // completed or failed commands on this device
    bool dispatched = false;
    bool recovery_pending = false;  // failed after our last touch, not yet back
  };

  struct RunState {
    Phase phase = Phase::Pending;
    int pc = 0;
    Time submit = kNoTime, start = kNoTime, finish = kNoTime;
    int executed = 0;
    int rolled_back = 0;
    bool had_be_failure = false;
    int ttl = 5;
    std::uint64_t gen = 0;  // bump invalidates scheduled completions
    bool inflight = false;
    int inflight_cmd = -1;
    Time inflight_end = kNoTime;
    std::map<int, DevTouch> touch;
    std::map<int, StateValue> pre_write;  // state before our first write
    std::vector<int> write_order;
    std::map<int, int> applied;  // device -> applied write count

    bool inflight_on(const Routine& r, int device) const {
      return inflight && inflight_cmd >= 0 &&
             r.commands[inflight_cmd].device == device;
    }
    bool active() const {
      return phase == Phase::Waiting || phase == Phase::Scheduled ||
             phase == Phase::Running;
    }
  };

  const Routine& routine(int r) const { return wl_.routines[r]; }
  int routine_count() const { return static_cast<int>(wl_.routines.size()); }
  int event_node(int ev_idx) const { return routine_count() + ev_idx; }
  Time now() const { return clock_.now(); }

  void seed_events() {
    if (wl_.injection == InjectionMode::ClosedLoop) {
      const int first = std::min<int>(wl_.rho, routine_count());
      for (int i = 0; i < first; ++i) clock_.schedule(0, Ev{Ev::Kind::Submit, i});
      next_injection_ = first;
    } else {
      for (int i = 0; i < routine_count(); ++i)
        clock_.schedule(wl_.routines[i].submit_time_ms, Ev{Ev::Kind::Submit, i});
      next_injection_ = routine_count();
    }
    std::set<int> monitored;
    for (const auto& f : wl_.faults) {
      clock_.schedule(f.fail_at_ms, Ev{Ev::Kind::PhysFail, f.device});
      future_transitions_[f.device]++;
      if (f.restart_at_ms) {
        clock_.schedule(*f.restart_at_ms, Ev{Ev::Kind::PhysRestart, f.device});
        future_transitions_[f.device]++;
      }
      monitored.insert(f.device);
    }
    for (int d : monitored)
      clock_.schedule(cfg_.ping_interval_ms, Ev{Ev::Kind::Ping, d});
  }

  bool needs_ping(int d) const {
    return future_transitions_[d] > 0 ||
           detector_.considered_up(d) != fabric_.up(d);
  }

  void handle(const Ev& ev) {
    switch (ev.kind) {
      case Ev::Kind::Submit:
        on_submit(ev.a);
        break;
      case Ev::Kind::CmdEnd:
        on_cmd_end(ev.a, ev.b, ev.gen);
        break;
      case Ev::Kind::PhysFail:
        future_transitions_[ev.a]--;
        fabric_.fail(ev.a);
        interrupt_inflight(ev.a);
        break;
      case Ev::Kind::PhysRestart:
        future_transitions_[ev.a]--;
        fabric_.restart(ev.a);
        break;
      case Ev::Kind::Ping:
        on_ping(ev.a);
        break;
      case Ev::Kind::DetectFail:
        if (detector_.confirm_failure(ev.a)) record_event(ev.a, false);
        break;
      case Ev::Kind::EntryStart:
        on_entry_start(ev.a);
        break;
      case Ev::Kind::LeaseRevoke:
        on_lease_revoke(ev.a);
        break;
      case Ev::Kind::WvDispatch:
        on_wv_dispatch(ev.a, ev.b, ev.gen);
        break;
    }
  }

  void on_ping(int d) {
    auto outcome = detector_.on_ping(d, now(), fabric_.up(d));
    if (outcome == FailureDetector::PingOutcome::FailurePending)
      clock_.schedule(now() + cfg_.ack_timeout_ms, Ev{Ev::Kind::DetectFail, d});
    else if (outcome == FailureDetector::PingOutcome::RestartDetected)
      record_event(d, true);
    if (needs_ping(d) || outcome == FailureDetector::PingOutcome::FailurePending)
      clock_.schedule(now() + cfg_.ping_interval_ms, Ev{Ev::Kind::Ping, d});
  }

  // A detected failure/restart: trace it, wire it into the event chain and
  // the committed-writer edges, then let the model react.
  void record_event(int d, bool restart) {
    const int idx = static_cast<int>(detected_.size());
    detected_.push_back(OrderEntry{restart ? OrderEntry::Kind::Restart
                                           : OrderEntry::Kind::Fail,
                                   idx, d, now()});
    trace_.emit(now(),
                restart ? TraceKind::DeviceRestart : TraceKind::DeviceFail, -1,
                -1, d);
    const int node = event_node(idx);
    order_.add_node(node);
    if (prev_event_of_device_[d] >= 0)
      order_.add_edge(event_node(prev_event_of_device_[d]), node);
    prev_event_of_device_[d] = idx;
    for (int r = 0; r < routine_count(); ++r)
      if (rs_[r].phase == Phase::Committed && rs_[r].pre_write.count(d))
        order_.add_edge(r, node);
    if (restart) {
      auto it = pending_restore_.find(d);
      if (it != pending_restore_.end()) {
        fabric_.write(d, it->second.second);
        trace_.emit(now(), TraceKind::RollbackCmd, it->second.first, -1, d,
                    it->second.second, true);
        pending_restore_.erase(it);
      }
    }
    on_detected_event(d, idx, restart);
  }

  // Dispatch one command. Returns false when the device is down right now;
  // the caller decides the must/best-effort consequence.
  bool start_command(int r, int idx) {
    auto& st = rs_[r];
    const Command& c = routine(r).commands[idx];
    if (st.start == kNoTime) {
      st.start = now();
      st.phase = Phase::Running;
      trace_.emit(now(), TraceKind::RoutineStart, r);
    }
    trace_.emit(now(), TraceKind::CmdStart, r, idx, c.device, c.target);
    auto& dt = st.touch[c.device];
    if (!dt.dispatched) {
      dt.dispatched = true;
      // Everything already detected on this device precedes our first touch.
      for (const auto& e : detected_)
        if (e.device == c.device) order_.add_edge(event_node(e.id), r);
    }
    if (!fabric_.up(c.device)) return false;
    st.inflight = true;
    st.inflight_cmd = idx;
    st.inflight_end = now() + c.duration_ms;
    inflight_by_device_[c.device].push_back(r);
    clock_.schedule(st.inflight_end, Ev{Ev::Kind::CmdEnd, r, idx, st.gen});
    return true;
  }

  bool complete_command(int r, int idx) {
    auto& st = rs_[r];
    const Command& c = routine(r).commands[idx];
    clear_inflight(r, c.device);
    bool applied;
    if (c.read) {
      applied = fabric_.up(c.device);
    } else {
      if (!st.pre_write.count(c.device)) {
        st.pre_write[c.device] = fabric_.state(c.device);
        st.write_order.push_back(c.device);
      }
      applied = fabric_.write(c.device, c.target);
      if (applied) st.applied[c.device]++;
    }
    detector_.record_activity(c.device, now());
    st.executed++;
    st.touch[c.device].done++;
    trace_.emit(now(), TraceKind::CmdEnd, r, idx, c.device, c.target, applied);
    return applied;
  }

  void fail_command(int r, int idx) {
    auto& st = rs_[r];
    const Command& c = routine(r).commands[idx];
    clear_inflight(r, c.device);
    st.gen++;
    st.touch[c.device].done++;
    trace_.emit(now(), TraceKind::CmdFail, r, idx, c.device, c.target, false);
    // The skipped effect behaves as if frozen by the failure: order any
    // detected failure of this device before us.
    for (const auto& e : detected_)
      if (e.device == c.device && e.kind == OrderEntry::Kind::Fail)
        order_.add_edge(event_node(e.id), r);
  }

  void clear_inflight(int r, int device) {
    auto& st = rs_[r];
    st.inflight = false;
    st.inflight_cmd = -1;
    auto it = inflight_by_device_.find(device);
    if (it == inflight_by_device_.end()) return;
    auto& v = it->second;
    v.erase(std::remove(v.begin(), v.end(), r), v.end());
  }

  void interrupt_inflight(int d) {
    auto it = inflight_by_device_.find(d);
    if (it == inflight_by_device_.end()) return;
    std::vector<int> victims = it->second;
    for (int r : victims) {
      const int idx = rs_[r].inflight_cmd;
      if (idx < 0) continue;
      on_cmd_interrupted(r, idx);
    }
  }

  bool stale(int r, int idx, std::uint64_t gen) const {
    const auto& st = rs_[r];
    return st.gen != gen || st.phase != Phase::Running || st.pc != idx;
  }

  Time remaining_real_time(int r) const {
    const auto& st = rs_[r];
    Time t = 0;
    int from = st.pc;
    if (st.inflight) {
      t += std::max<Time>(0, st.inflight_end - now());
      from = st.pc + 1;
    }
    t += real_remaining(routine(r), from);
    return t;
  }

  int applied_total(int r) const {
    int n = 0;
    for (const auto& [d, k] : rs_[r].applied) n += k;
    return n;
  }

  void mark_committed(int r) {
    auto& st = rs_[r];
    st.phase = Phase::Committed;
    st.finish = now();
    trace_.emit(now(), TraceKind::Commit, r);
    inject_next();
  }

  void mark_aborted(int r) {
    auto& st = rs_[r];
    st.gen++;
    if (st.inflight)
      clear_inflight(r, routine(r).commands[st.inflight_cmd].device);
    st.phase = Phase::Aborted;
    st.finish = now();
    trace_.emit(now(), TraceKind::Abort, r);
    inject_next();
  }

  void inject_next() {
    if (wl_.injection != InjectionMode::ClosedLoop) return;
    if (next_injection_ >= routine_count()) return;
    clock_.schedule(now(), Ev{Ev::Kind::Submit, next_injection_++});
  }

  // A corrective write to a down device stays pending: the edge reissues it
  // when the device comes back, and the device's reconciled state is what the
  // run reports for it.
  void emit_rollback(int r, int d, StateValue restore) {
    const bool applied = fabric_.up(d) && fabric_.write(d, restore);
    trace_.emit(now(), TraceKind::RollbackCmd, r, -1, d, restore, applied);
    if (!applied)
      pending_restore_[d] = {r, restore};
    else
      pending_restore_.erase(d);
  }

  virtual void on_submit(int r) = 0;
  virtual void on_cmd_end(int r, int idx, std::uint64_t gen) = 0;
  virtual void on_cmd_interrupted(int r, int idx) = 0;
  virtual void on_detected_event(int d, int ev_idx, bool restart) = 0;
  virtual void on_entry_start(int) {}
  virtual void on_lease_revoke(int) {}
  virtual void on_wv_dispatch(int, int, std::uint64_t) {}
  virtual void after_event() {}
  virtual bool emits_order() const { return true; }

  RunResult finish_run() {
    RunResult res;
    res.trace = std::move(trace_);
    res.end_states = fabric_.snapshot();
    for (const auto& [d, pr] : pending_restore_) res.end_states[d] = pr.second;
    res.detected_events = detected_;
    res.invariant_violations = std::move(violations_);
    for (int r = 0; r < routine_count(); ++r) {
      const auto& st = rs_[r];
      RoutineOutcome o;
      o.id = r;
      o.committed = st.phase == Phase::Committed;
      o.aborted = st.phase == Phase::Aborted;
      o.submit = st.submit;
      o.start = st.start;
      o.finish = st.finish;
      o.commands = static_cast<int>(routine(r).commands.size());
      o.executed = st.executed;
      o.rolled_back = st.rolled_back;
      o.had_best_effort_failure = st.had_be_failure;
      res.outcomes.push_back(o);
      if (st.finish != kNoTime)
        res.makespan = std::max(res.makespan, st.finish);
    }
    if (emits_order()) {
      std::set<int> nodes;
      for (int r = 0; r < routine_count(); ++r)
        if (rs_[r].phase == Phase::Committed) nodes.insert(r);
      for (std::size_t i = 0; i < detected_.size(); ++i)
        nodes.insert(event_node(static_cast<int>(i)));
      auto key = [&](int n) {
        if (n < routine_count())
          return std::tuple<Time, int, int>(rs_[n].finish, 0, n);
        const auto& e = detected_[n - routine_count()];
        return std::tuple<Time, int, int>(e.time, 1, e.id);
      };
      auto topo = order_.topo_order(nodes, key);
      if (!topo) {
        res.order_consistent = false;
      } else {
        for (int n : *topo) {
          if (n < routine_count())
            res.serialization_order.push_back(
                OrderEntry{OrderEntry::Kind::Routine, n, -1, rs_[n].finish});
          else
            res.serialization_order.push_back(detected_[n - routine_count()]);
        }
      }
    }
    return res;
  }

  const Workload& wl_;
  EngineConfig cfg_;
  DeviceFabric fabric_;
  FailureDetector detector_;
  SimClock<Ev> clock_;
  Trace trace_;
  std::vector<RunState> rs_;
  OrderGraph order_;
  std::vector<OrderEntry> detected_;
  std::vector<int> prev_event_of_device_;
  std::map<int, std::vector<int>> inflight_by_device_;
  std::vector<int> future_transitions_;
  std::vector<std::string> violations_;
  std::map<int, std::pair<int, StateValue>> pending_restore_;
  int next_injection_ = 0;
};

// --- Weak Visibility ---------------------------------------------------------

// Commands run back to back at their nominal offsets no matter what; a failed
// command produces feedback and nothing else. No locks, no order.
class WvEngine : public EngineBase {
 public:
  using EngineBase::EngineBase;

 protected:
  bool emits_order() const override { return false; }

  void on_submit(int r) override {
    rs_[r].submit = now();
    trace_.emit(now(), TraceKind::RoutineSubmit, r);
    clock_.schedule(now(), Ev{Ev::Kind::WvDispatch, r, 0, rs_[r].gen});
  }

  void on_wv_dispatch(int r, int idx, std::uint64_t gen) override {
    auto& st = rs_[r];
    if (st.gen != gen) return;
    if (idx >= static_cast<int>(routine(r).commands.size())) {
      mark_committed(r);
      return;
    }
    st.pc = idx;
    if (!start_command(r, idx)) {
      const Time nominal_end = now() + routine(r).commands[idx].duration_ms;
      fail_command(r, idx);
      st.had_be_failure = true;
      trace_.emit(now(), TraceKind::Feedback, r, idx,
                  routine(r).commands[idx].device);
      clock_.schedule(nominal_end, Ev{Ev::Kind::WvDispatch, r, idx + 1, st.gen});
    }
  }

  void on_cmd_end(int r, int idx, std::uint64_t gen) override {
    if (stale(r, idx, gen)) return;
    complete_command(r, idx);
    rs_[r].pc = idx + 1;
    clock_.schedule(now(), Ev{Ev::Kind::WvDispatch, r, idx + 1, rs_[r].gen});
  }

  void on_cmd_interrupted(int r, int idx) override {
    auto& st = rs_[r];
    const Time nominal_end = st.inflight_end;
    fail_command(r, idx);
    st.had_be_failure = true;
    trace_.emit(now(), TraceKind::Feedback, r, idx,
                routine(r).commands[idx].device);
    clock_.schedule(nominal_end, Ev{Ev::Kind::WvDispatch, r, idx + 1, st.gen});
  }

  void on_detected_event(int, int, bool) override {}
};

// --- GSV / S-GSV / PSV ---------------------------------------------------------

class StrictEngine : public EngineBase {
 public:
  StrictEngine(Model m, const Workload& wl, const EngineConfig& cfg)
      : EngineBase(wl, cfg), model_(m) {}

 protected:
  bool global_model() const { return model_ != Model::PSV; }

  void on_submit(int r) override {
    rs_[r].submit = now();
    rs_[r].phase = Phase::Waiting;
    trace_.emit(now(), TraceKind::RoutineSubmit, r);
    waiters_.push_back(r);
    admit();
  }

  void admit() {
    bool progressed = true;
    while (progressed) {
      progressed = false;
      for (std::size_t i = 0; i < waiters_.size(); ++i) {
        const int r = waiters_[i];
        if (!admissible(r, i)) continue;
        waiters_.erase(waiters_.begin() + i);
        begin(r);
        progressed = true;
        break;
      }
    }
  }

  bool admissible(int r, std::size_t queue_pos) const {
    if (global_model()) return running_.empty() && queue_pos == 0;
    for (int other : running_)
      if (!conflict_set(routine(r), routine(other)).empty()) return false;
    // FIFO among conflicting routines: an earlier conflicting waiter blocks.
    for (std::size_t j = 0; j < queue_pos; ++j)
      if (!conflict_set(routine(r), routine(waiters_[j])).empty()) return false;
    return true;
  }

  void begin(int r) {
    running_.insert(r);
    for (int o = 0; o < routine_count(); ++o)
      if (o != r && rs_[o].start != kNoTime &&
          !conflict_set(routine(r), routine(o)).empty())
        order_.add_edge(o, r);
    step(r);
  }

  void step(int r) {
    auto& st = rs_[r];
    while (true) {
      if (st.pc >= static_cast<int>(routine(r).commands.size())) {
        finish(r);
        return;
      }
      if (start_command(r, st.pc)) return;  // completes via CmdEnd
      fail_command(r, st.pc);
      if (!consequence(r, st.pc)) return;  // aborted
    }
  }

  // Must failure aborts; best-effort generates feedback and moves on.
  bool consequence(int r, int idx) {
    if (routine(r).commands[idx].necessity == Necessity::Must) {
      abort_routine(r);
      return false;
    }
    rs_[r].had_be_failure = true;
    trace_.emit(now(), TraceKind::Feedback, r, idx,
                routine(r).commands[idx].device);
    rs_[r].pc = idx + 1;
    return true;
  }

  void on_cmd_end(int r, int idx, std::uint64_t gen) override {
    if (stale(r, idx, gen)) return;
    complete_command(r, idx);
    rs_[r].pc = idx + 1;
    step(r);
  }

  void on_cmd_interrupted(int r, int idx) override {
    fail_command(r, idx);
    if (consequence(r, idx)) step(r);
  }

  void finish(int r) {
    if (model_ == Model::PSV) {
      // A failure after our last touch must have recovered by now.
      for (const auto& [d, dt] : rs_[r].touch)
        if (dt.recovery_pending && !detector_.considered_up(d)) {
          abort_routine(r);
          return;
        }
    }
    mark_committed(r);
    if (global_model()) {
      if (last_committed_ >= 0) order_.add_edge(last_committed_, r);
      last_committed_ = r;
    }
    running_.erase(r);
    admit();
  }

  void abort_routine(int r) {
    auto& st = rs_[r];
    mark_aborted(r);
    for (int d : st.write_order) {
      st.rolled_back += st.applied[d];
      if (fabric_.state(d) != st.pre_write[d])
        emit_rollback(r, d, st.pre_write[d]);
    }
    running_.erase(r);
    admit();
  }

  void on_detected_event(int d, int ev_idx, bool restart) override {
    const int node = event_node(ev_idx);
    std::vector<int> active(running_.begin(), running_.end());
    for (int r : active) {
      auto& st = rs_[r];
      if (st.phase != Phase::Running) continue;
      const bool touches = st.touch.count(d) > 0;
      if (model_ == Model::SGSV) {
        abort_routine(r);
        continue;
      }
      if (model_ == Model::GSV) {
        if (touches)
          abort_routine(r);
        else
          order_.add_edge(r, node);  // survives; event ordered after it
        continue;
      }
      // PSV: EV-style timing cases; the finish-point recovery rule is
      // enforced in finish().
      if (!touches) continue;
      auto& dt = st.touch[d];
      if (dt.done == dt.total) {
        order_.add_edge(r, node);
        dt.recovery_pending = !restart;
      } else if (restart) {
        if (dt.dispatched) order_.add_edge(node, r);
      } else {
        abort_routine(r);  // failure inside the open window
      }
    }
  }

  Model model_;
  std::set<int> running_;
  std::vector<int> waiters_;
  int last_committed_ = -1;
};

// --- Eventual Visibility --------------------------------------------------------

class EvEngine : public EngineBase {
 public:
  EvEngine(SchedulerPolicy p, const Workload& wl, const EngineConfig& cfg)
      : EngineBase(wl, cfg), policy_(p), table_(wl.devices) {}

  const LineageTable& table() const { return table_; }

 protected:
  // --- arrival / scheduling ---------------------------------------------------

  void on_submit(int r) override {
    rs_[r].submit = now();
    rs_[r].phase = Phase::Waiting;
    trace_.emit(now(), TraceKind::RoutineSubmit, r);
    waiters_.push_back(r);
    switch (policy_) {
      case SchedulerPolicy::Fcfs:
        place_fcfs(r);
        break;
      case SchedulerPolicy::Jit: {
        std::set<int> only{r};
        jit_scan(&only, nullptr);
        break;
      }
      case SchedulerPolicy::Timeline:
        tl_try(r);
        break;
    }
  }

  void place_fcfs(int r) {
    const auto prof = estimate_profile(routine(r), cfg_);
    dequeue(r);
    rs_[r].phase = Phase::Scheduled;
    for (const auto& span : prof.spans) {
      LockAccess e;
      e.routine = r;
      e.status = LockStatus::Scheduled;
      e.desired = span.first_target;
      e.start = now() + span.first_off;
      e.duration = span.span;
      auto lefts = table_.append_entry(span.device, e);
      for (RoutineId o : lefts) order_.add_edge(o, r);
      add_committed_writer_edge(span.device, r);
    }
    for (const auto& span : prof.spans) pump(span.device);
  }

  // TTL gate: a starved (ttl 0) lower-id waiter sharing a device must be
  // scheduled before us.
  bool ttl_gate_blocks(int r) const {
    for (int w : waiters_)
      if (w != r && w < r && rs_[w].ttl == 0 &&
          !conflict_set(routine(w), routine(r)).empty())
        return true;
    return false;
  }

  void jit_scan(const std::set<int>* only, const std::set<int>* devices) {
    bool progressed = true;
    while (progressed) {
      progressed = false;
      std::vector<int> ordered;
      for (int w : waiters_)
        if (rs_[w].ttl == 0) ordered.push_back(w);
      for (int w : waiters_)
        if (rs_[w].ttl != 0) ordered.push_back(w);
      for (int r : ordered) {
        if (only && !only->count(r)) continue;
        if (devices) {
          bool desires = false;
          for (int d : devices_of(routine(r)))
            if (devices->count(d)) desires = true;
          if (!desires) continue;
        }
        if (ttl_gate_blocks(r)) continue;
        auto plan = jit_eligibility(table_, order_, routine(r), cfg_);
        if (!plan) continue;
        materialize_jit(r, *plan);
        progressed = true;
        break;
      }
    }
  }

  void materialize_jit(int r, const EligiblePlan& plan) {
    dequeue(r);
    rs_[r].phase = Phase::Scheduled;
    const auto prof = estimate_profile(routine(r), cfg_);
    for (const auto& item : plan.items) {
      const auto* span = span_for(prof, item.device);
      LockAccess e;
      e.routine = r;
      e.status = LockStatus::Acquired;  // early acquisition: lock held now
      e.desired = span->first_target;
      e.start = now();
      e.duration = span->first_off + span->span;
      int index;
      auto& lin = table_.lineage_mut(item.device);
      if (item.mech == EligiblePlan::Item::Mech::Pre) {
        index = table_.find_entry(item.device, item.src);
        // Push the holder's window past ours before inserting in front.
        shift_entry(item.device, index, now() + e.duration);
        auto [lefts, rights] = table_.insert_entry(item.device, index, e);
        for (RoutineId o : lefts) order_.add_edge(o, r);
        for (RoutineId o : rights) order_.add_edge(r, o);
        auto& src_entry = lin.entries[index + 1];
        if (src_entry.status == LockStatus::Acquired) {
          src_entry.status = LockStatus::Leased;
          src_entry.leased_to = r;
        }
        open_lease(item.device, item.src, r, LeaseKind::Pre);
      } else {
        index = static_cast<int>(lin.entries.size());
        auto [lefts, rights] = table_.insert_entry(item.device, index, e);
        for (RoutineId o : lefts) order_.add_edge(o, r);
        (void)rights;
        if (item.mech == EligiblePlan::Item::Mech::Post)
          open_lease(item.device, item.src, r, LeaseKind::Post);
      }
      add_committed_writer_edge(item.device, r);
    }
    for (const auto& item : plan.items) arm_leases(item.device, r);
    ttl_decrement_on_schedule(r);
    try_dispatch(r);
  }

  void tl_try(int r) {
    // The gap search is only as good as the plan is honest: bring every live
    // routine's pending windows up to its actual progress first.
    for (int w = 0; w < routine_count(); ++w) refresh_pending_windows(w);
    auto plan =
        timeline_place(table_, order_, routine(r), now(), cfg_, cfg_.pre_leases);
    if (!plan) return;  // cannot happen: tail gaps are unbounded
    if (rs_[r].ttl > 0 && stretch_violation(*plan, r)) return;  // deferred
    materialize_tl(r, *plan);
  }

  // Would this placement stretch a running routine past the threshold?
  bool stretch_violation(const TimelinePlan& plan, int r) const {
    if (plan.slots.empty()) return false;
    const Time anchor = plan.slots.front().start;
    std::vector<Time> real_off(routine(r).commands.size() + 1, 0);
    for (std::size_t i = 0; i < routine(r).commands.size(); ++i)
      real_off[i + 1] = real_off[i] + routine(r).commands[i].duration_ms;
    std::map<int, Time> delays;
    const auto prof = estimate_profile(routine(r), cfg_);
    for (std::size_t s = 0; s < plan.slots.size(); ++s) {
      const auto& slot = plan.slots[s];
      const Time real_end = anchor + real_off[prof.spans[s].last_cmd + 1];
      const auto& es = table_.lineage(slot.device).entries;
      for (int i = slot.insert_index; i < static_cast<int>(es.size()); ++i) {
        const int w = es[i].routine;
        if (rs_[w].phase != Phase::Running) continue;
        delays[w] += std::max<Time>(0, real_end - es[i].start);
        break;
      }
    }
    for (const auto& [w, delay] : delays) {
      if (delay <= 0) continue;
      const Time ideal = std::max<Time>(1, routine(w).ideal_runtime());
      const Time projected =
          now() + remaining_real_time(w) + delay - rs_[w].start;
      if (static_cast<double>(projected) / static_cast<double>(ideal) >
          cfg_.stretch_threshold)
        return true;
    }
    return false;
  }

  void materialize_tl(int r, const TimelinePlan& plan) {
    dequeue(r);
    rs_[r].phase = Phase::Scheduled;
    for (const auto& slot : plan.slots) {
      LockAccess e;
      e.routine = r;
      e.status = LockStatus::Scheduled;
      e.desired = slot.first_target;
      e.start = slot.start;
      e.duration = slot.span;
      auto [lefts, rights] = table_.insert_entry(slot.device, slot.insert_index, e);
      for (RoutineId o : lefts) order_.add_edge(o, r);
      for (RoutineId o : rights) order_.add_edge(r, o);
      add_committed_writer_edge(slot.device, r);
      const auto& es = table_.lineage(slot.device).entries;
      // Implicit leases against running neighbours, armed at activation.
      if (slot.insert_index + 1 < static_cast<int>(es.size())) {
        const auto& right = es[slot.insert_index + 1];
        if (rs_[right.routine].phase == Phase::Running &&
            right.status != LockStatus::Released)
          open_lease(slot.device, right.routine, r, LeaseKind::Pre);
      }
      if (slot.insert_index > 0) {
        const auto& left = es[slot.insert_index - 1];
        if (left.status == LockStatus::Released)
          open_lease(slot.device, left.routine, r, LeaseKind::Post);
      }
    }
    ttl_decrement_on_schedule(r);
    for (const auto& slot : plan.slots) pump(slot.device);
  }

  void ttl_decrement_on_schedule(int scheduled) {
    for (int w : waiters_) {
      if (w >= scheduled) continue;  // only earlier arrivals are bypassed
      if (conflict_set(routine(w), routine(scheduled)).empty()) continue;
      if (rs_[w].ttl > 0) rs_[w].ttl--;
    }
  }

  void dequeue(int r) {
    waiters_.erase(std::remove(waiters_.begin(), waiters_.end(), r),
                   waiters_.end());
  }

  // --- lock transitions ---------------------------------------------------------

  void pump(int d) {
    auto cand = table_.activation_candidate(d);
    if (!cand) return;
    const auto& es = table_.lineage(d).entries;
    const int idx = *cand;
    const int owner = es[idx].routine;
    // Activating with released-but-unfinished predecessors is a post-lease.
    int post_src = -1;
    for (int k = idx - 1; k >= 0; --k) {
      if (es[k].status != LockStatus::Released) break;
      if (post_src < 0) post_src = es[k].routine;
      if (es[k].touched && routine_reads(owner, d)) return;  // dirty read: wait
    }
    if (post_src >= 0 && !cfg_.post_leases) return;  // wait for their finish
    if (es[idx].start > now()) {
      clock_.schedule(es[idx].start, Ev{Ev::Kind::EntryStart, d});
      return;
    }
    table_.activate(d, owner, now());
    if (post_src >= 0) {
      bool found = false;
      for (const auto& L : leases_)
        if (L.open && L.device == d && L.dst == owner &&
            L.kind == LeaseKind::Post)
          found = true;
      if (!found) open_lease(d, post_src, owner, LeaseKind::Post);
    }
    arm_leases(d, owner);
    try_dispatch(owner);
  }

  void on_entry_start(int d) override { pump(d); }

  bool routine_reads(int r, int d) const {
    for (const auto& c : routine(r).commands)
      if (c.device == d && c.read) return true;
    return false;
  }

  int open_lease(int d, RoutineId src, RoutineId dst, LeaseKind kind) {
    LeaseRecord L;
    L.id = static_cast<int>(leases_.size());
    L.device = d;
    L.src = src;
    L.dst = dst;
    L.kind = kind;
    leases_.push_back(L);
    return L.id;
  }

  // Revocation countdown starts when dst's lock hold begins: the scheduled
  // span to its last access on the device, times the leniency. Expiry aborts
  // dst only while it actually starves the source's own pending access;
  // until then the window extends by a fresh estimate.
  void arm_lease(LeaseRecord& L) {
    if (L.revoke_at != kTimeMax) return;
    const Time span = est_until_last_access(routine(L.dst), L.device,
                                            rs_[L.dst].pc, cfg_);
    L.revoke_at =
        now() + static_cast<Time>(std::ceil(
                    cfg_.leniency * static_cast<double>(std::max<Time>(1, span))));
    clock_.schedule(L.revoke_at, Ev{Ev::Kind::LeaseRevoke, L.id});
    trace_.emit(now(), TraceKind::LeaseGrant, L.dst,
                L.kind == LeaseKind::Pre ? 0 : 1, L.device);
  }

  void arm_leases(int d, RoutineId dst) {
    for (auto& L : leases_)
      if (L.open && L.device == d && L.dst == dst) arm_lease(L);
  }

  bool src_waiting_on(const LeaseRecord& L) const {
    const auto& st = rs_[L.src];
    if (st.phase != Phase::Running || st.inflight) return false;
    if (st.pc >= static_cast<int>(routine(L.src).commands.size())) return false;
    return routine(L.src).commands[st.pc].device == L.device;
  }

  // Returns true when the lease was resolved (closed or dst aborted).
  bool check_revocation(LeaseRecord& L) {
    if (!L.open) return true;
    const int ei = table_.find_entry(L.device, L.dst);
    if (ei < 0 ||
        table_.lineage(L.device).entries[ei].status == LockStatus::Released) {
      L.open = false;  // dst already finished its accesses here
      return true;
    }
    if (rs_[L.src].phase != Phase::Running &&
        rs_[L.src].phase != Phase::Scheduled) {
      L.open = false;  // source is gone; ownership stays with dst
      return true;
    }
    if (!src_waiting_on(L)) {
      const Time span = est_until_last_access(routine(L.dst), L.device,
                                              rs_[L.dst].pc, cfg_);
      L.revoke_at = now() + static_cast<Time>(
                                std::ceil(cfg_.leniency *
                                          static_cast<double>(std::max<Time>(1, span))));
      clock_.schedule(L.revoke_at, Ev{Ev::Kind::LeaseRevoke, L.id});
      return false;
    }
    trace_.emit(now(), TraceKind::LeaseRevoke, L.dst, -1, L.device);
    abort_ev(L.dst);
    return true;
  }

  void on_lease_revoke(int id) override {
    auto& L = leases_[id];
    if (!L.open || now() < L.revoke_at) return;
    check_revocation(L);
  }

  // Explicit sweep of expired leases (exposed for tests).
  std::vector<RoutineId> revoke_expired_leases(Time t) {
    std::vector<RoutineId> aborted;
    for (auto& L : leases_) {
      if (!L.open || L.revoke_at > t) continue;
      const RoutineId dst = L.dst;
      if (check_revocation(L) && rs_[dst].phase == Phase::Aborted)
        aborted.push_back(dst);
    }
    return aborted;
  }

  // --- execution ------------------------------------------------------------------

  void try_dispatch(int r) {
    auto& st = rs_[r];
    if (st.phase != Phase::Scheduled && st.phase != Phase::Running) return;
    if (st.inflight) return;
    // With leasing fully disabled, locking degrades to the base protocol: a
    // routine starts only once it holds every one of its locks.
    if (!cfg_.pre_leases && !cfg_.post_leases && st.start == kNoTime) {
      for (int d : devices_of(routine(r))) {
        const int ei = table_.find_entry(d, r);
        if (ei < 0 ||
            table_.lineage(d).entries[ei].status != LockStatus::Acquired)
          return;
      }
    }
    while (true) {
      if (st.pc >= static_cast<int>(routine(r).commands.size())) {
        commit_ev(r);
        return;
      }
      const Command& c = routine(r).commands[st.pc];
      const int ei = table_.find_entry(c.device, r);
      assert(ei >= 0 && "pending command without a lineage entry");
      auto& entry = table_.lineage_mut(c.device).entries[ei];
      if (entry.status != LockStatus::Acquired) return;  // blocked
      entry.in_use = true;
      // Keep the plan truthful: the access is running from now through the
      // command's real end, and downstream accesses cannot begin before the
      // chain reaches them.
      if (entry.start > now()) entry.start = now();
      entry.duration =
          std::max(entry.duration, now() + c.duration_ms - entry.start);
      shift_entry(c.device, ei, entry.start);
      refresh_pending_windows(r);
      arm_leases(c.device, r);
      if (start_command(r, st.pc)) return;
      entry.in_use = false;
      fail_command(r, st.pc);
      if (!ev_consequence(r, st.pc)) return;  // aborted
    }
  }

  bool ev_consequence(int r, int idx) {
    if (routine(r).commands[idx].necessity == Necessity::Must) {
      abort_ev(r);
      return false;
    }
    rs_[r].had_be_failure = true;
    trace_.emit(now(), TraceKind::Feedback, r, idx,
                routine(r).commands[idx].device);
    after_command_on_device(r, idx);
    rs_[r].pc = idx + 1;
    return true;
  }

  void on_cmd_end(int r, int idx, std::uint64_t gen) override {
    if (stale(r, idx, gen)) return;
    const Command& c = routine(r).commands[idx];
    complete_command(r, idx);
    const int ei = table_.find_entry(c.device, r);
    if (ei >= 0) {
      auto& entry = table_.lineage_mut(c.device).entries[ei];
      entry.in_use = false;
      entry.touched = true;
      if (!c.read) entry.desired = c.target;
    }
    after_command_on_device(r, idx);
    rs_[r].pc = idx + 1;
    try_dispatch(r);
  }

  void on_cmd_interrupted(int r, int idx) override {
    const Command& c = routine(r).commands[idx];
    const int ei = table_.find_entry(c.device, r);
    if (ei >= 0) table_.lineage_mut(c.device).entries[ei].in_use = false;
    fail_command(r, idx);
    if (ev_consequence(r, idx)) try_dispatch(r);
  }

  // If that was the routine's last command on the device, its access window
  // ends: pre-leased locks return to their source, otherwise the entry is
  // released early (post-lease) or, with leasing off, held until finish.
  void after_command_on_device(int r, int idx) {
    const int d = routine(r).commands[idx].device;
    for (std::size_t i = idx + 1; i < routine(r).commands.size(); ++i)
      if (routine(r).commands[i].device == d) return;  // more accesses coming
    access_end(r, d);
  }

  void access_end(int r, int d) {
    const int ei = table_.find_entry(d, r);
    if (ei < 0) return;
    LeaseRecord* pre = nullptr;
    for (auto& L : leases_)
      if (L.open && L.device == d && L.dst == r && L.kind == LeaseKind::Pre)
        pre = &L;
    if (pre) {
      table_.release_entry(d, r, now());
      pre->open = false;
      return_lease_to_src(d, pre->src);
      close_post_leases_of(d, r);
      pending_releases_.insert(d);
      pump(d);
      return;
    }
    if (cfg_.post_leases) {
      table_.release_entry(d, r, now());
      close_post_leases_of(d, r);
      pending_releases_.insert(d);
      pump(d);
    }
    // leasing off: the entry stays Acquired until the routine finishes
  }

  void close_post_leases_of(int d, RoutineId dst) {
    for (auto& L : leases_)
      if (L.open && L.device == d && L.dst == dst) L.open = false;
  }

  void return_lease_to_src(int d, RoutineId src) {
    const int si = table_.find_entry(d, src);
    if (si < 0) return;
    auto& e = table_.lineage_mut(d).entries[si];
    if (e.status == LockStatus::Leased) {
      e.status = LockStatus::Acquired;
      e.leased_to = -1;
      try_dispatch(src);
    }
  }

  void commit_ev(int r) {
    // With leasing disabled the locks are only released here.
    for (int d : devices_of(routine(r))) {
      const int ei = table_.find_entry(d, r);
      if (ei >= 0 &&
          table_.lineage(d).entries[ei].status == LockStatus::Acquired)
        table_.release_entry(d, r, now());
    }
    auto res = table_.commit_with_compaction(r);
    mark_committed(r);
    for (auto& L : leases_)
      if (L.open && (L.src == r || L.dst == r)) L.open = false;
    for (int d : res.released_devices) {
      pending_releases_.insert(d);
      pump(d);
    }
  }

  void abort_ev(int r) {
    mark_aborted(r);
    auto res = table_.abort_rollback(
        r, [&](int d) { return fabric_.state(d); });
    for (int d : res.rolled_back_devices) rs_[r].rolled_back += rs_[r].applied[d];
    for (const auto& cc : res.corrective)
      emit_rollback(r, cc.device, cc.restore_to);
    // Unhook r from the lease chains. When r borrowed a lock and also lent
    // it onward, the outgoing lease is relinked to r's own source so the
    // current holder eventually returns it to the right routine.
    std::map<int, RoutineId> incoming;  // device -> src of r's pre-lease
    for (auto& L : leases_) {
      if (!L.open || L.dst != r) continue;
      L.open = false;
      if (L.kind == LeaseKind::Pre) incoming[L.device] = L.src;
    }
    for (auto& L : leases_) {
      if (!L.open || L.src != r) continue;
      auto in = incoming.find(L.device);
      if (L.kind == LeaseKind::Pre && in != incoming.end()) {
        L.src = in->second;  // relink, keeping the armed revocation
        const int si = table_.find_entry(L.device, L.src);
        if (si >= 0) {
          auto& se = table_.lineage_mut(L.device).entries[si];
          if (se.status == LockStatus::Leased) se.leased_to = L.dst;
        }
        incoming.erase(in);
      } else {
        L.open = false;
      }
    }
    for (const auto& [d, src] : incoming) return_lease_to_src(d, src);
    dequeue(r);
    for (int d : res.released_devices) {
      pending_releases_.insert(d);
      pump(d);
    }
  }

  // --- failure classification -----------------------------------------------------

  // Failure mid-window aborts every started routine still holding or owing
  // an access to the device; a failure after a routine's last touch is
  // serialized after it. Events around routines that have not started yet
  // resolve at dispatch time (both failure and restart may still precede the
  // first touch).
  void on_detected_event(int d, int ev_idx, bool restart) override {
    const int node = event_node(ev_idx);
    std::vector<int> victims;
    for (int r = 0; r < routine_count(); ++r) {
      auto& st = rs_[r];
      if (st.phase != Phase::Running) continue;
      auto it = st.touch.find(d);
      if (it == st.touch.end()) continue;  // untouched: arbitrary order
      auto& dt = it->second;
      if (dt.done == dt.total) {
        order_.add_edge(r, node);  // after our last touch: serialize after
      } else if (restart) {
        if (dt.dispatched) order_.add_edge(node, r);
      } else {
        victims.push_back(r);  // open lock window: the routine aborts
      }
    }
    for (int r : victims)
      if (rs_[r].phase == Phase::Running) abort_ev(r);
  }

  // --- loop hooks ---------------------------------------------------------------

  void after_event() override {
    while (!pending_releases_.empty()) {
      std::set<int> released;
      released.swap(pending_releases_);
      switch (policy_) {
        case SchedulerPolicy::Fcfs:
          break;
        case SchedulerPolicy::Jit:
          jit_scan(nullptr, &released);
          break;
        case SchedulerPolicy::Timeline: {
          std::vector<int> ordered;
          for (int w : waiters_)
            if (rs_[w].ttl == 0) ordered.push_back(w);
          for (int w : waiters_)
            if (rs_[w].ttl != 0) ordered.push_back(w);
          for (int r : ordered)
            if (std::find(waiters_.begin(), waiters_.end(), r) != waiters_.end())
              tl_try(r);
          break;
        }
      }
    }
    if (cfg_.validate_each_event) {
      auto v = table_.check_invariants();
      violations_.insert(violations_.end(), v.begin(), v.end());
    }
  }

  const EstimateProfile::DeviceSpan* span_for(const EstimateProfile& prof,
                                              int device) const {
    for (const auto& s : prof.spans)
      if (s.device == device) return &s;
    return nullptr;
  }

  void add_committed_writer_edge(int d, int r) {
    const auto& lin = table_.lineage(d);
    if (lin.committed_writer >= 0 && lin.committed_writer != r)
      order_.add_edge(lin.committed_writer, r);
  }

  void shift_entry(int d, int idx, Time floor) {
    auto& es = table_.lineage_mut(d).entries;
    if (es[idx].start < floor) es[idx].start = floor;
    for (std::size_t k = idx + 1; k < es.size(); ++k) {
      const Time f = es[k - 1].end();
      if (es[k].start < f) es[k].start = f;
    }
  }

  // Pushes this routine's not-yet-started accesses to the earliest instant
  // its remaining command chain can actually reach them.
  void refresh_pending_windows(int r) {
    const auto& cmds = routine(r).commands;
    const auto& st = rs_[r];
    if (st.phase != Phase::Scheduled && st.phase != Phase::Running) return;
    std::set<int> seen;
    Time off = 0;
    std::size_t j = st.pc;
    if (st.inflight) {
      seen.insert(cmds[st.pc].device);
      off = std::max<Time>(0, st.inflight_end - now());
      j = st.pc + 1;
    }
    for (; j < cmds.size(); ++j) {
      const int d = cmds[j].device;
      if (!seen.count(d)) {
        const int ei = table_.find_entry(d, r);
        if (ei >= 0) {
          auto& e = table_.lineage_mut(d).entries[ei];
          if ((e.status == LockStatus::Scheduled ||
               e.status == LockStatus::Leased) &&
              e.start < now() + off)
            shift_entry(d, ei, now() + off);
        }
      }
      seen.insert(d);
      off += cmds[j].duration_ms;
    }
  }

  SchedulerPolicy policy_;
  LineageTable table_;
  std::vector<LeaseRecord> leases_;
  std::vector<int> waiters_;
  std::set<int> pending_releases_;
};

}  // namespace detail

inline RunResult run(Model model, SchedulerPolicy policy, const Workload& wl,
                     const EngineConfig& cfg) {
  switch (model) {
    case Model::WV: {
      detail::WvEngine e(wl, cfg);
      return e.run();
    }
    case Model::GSV:
    case Model::SGSV:
    case Model::PSV: {
      detail::StrictEngine e(model, wl, cfg);
      return e.run();
    }
    case Model::EV: {
      detail::EvEngine e(policy, wl, cfg);
      return e.run();
    }
  }
  throw std::logic_error("unknown model");
}

}  // namespace rsim
