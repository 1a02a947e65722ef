#pragma once

// Timestamped event log emitted by every engine. Metrics are pure functions
// over this log; the JSONL form is the external trace format.

#include <cstdio>
#include <string>
#include <vector>

#include "rsim/core.hpp"

namespace rsim {

enum class TraceKind {
  RoutineSubmit,
  RoutineStart,
  CmdStart,
  CmdEnd,
  CmdFail,
  LeaseGrant,
  LeaseRevoke,
  Abort,
  Commit,
  DeviceFail,
  DeviceRestart,
  RollbackCmd,
  Feedback,
};

inline const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::RoutineSubmit: return "routine_submit";
    case TraceKind::RoutineStart: return "routine_start";
    case TraceKind::CmdStart: return "cmd_start";
    case TraceKind::CmdEnd: return "cmd_end";
    case TraceKind::CmdFail: return "cmd_fail";
    case TraceKind::LeaseGrant: return "lease_grant";
    case TraceKind::LeaseRevoke: return "lease_revoke";
    case TraceKind::Abort: return "abort";
    case TraceKind::Commit: return "commit";
    case TraceKind::DeviceFail: return "device_fail";
    case TraceKind::DeviceRestart: return "device_restart";
    case TraceKind::RollbackCmd: return "rollback_cmd";
    case TraceKind::Feedback: return "feedback";
  }
  return "?";
}

struct TraceEvent {
  Time t = 0;
  std::uint64_t seq = 0;  // emission order, unique within a run
  TraceKind kind = TraceKind::RoutineSubmit;
  RoutineId routine = -1;
  int cmd = -1;
  int device = -1;
  StateValue state = 0;
  bool applied = false;  // for CmdEnd / RollbackCmd: whether the write landed
};

class Trace {
 public:
  void emit(Time t, TraceKind kind, RoutineId routine = -1, int cmd = -1,
            int device = -1, StateValue state = 0, bool applied = false) {
    events_.push_back(TraceEvent{t, next_seq_++, kind, routine, cmd, device,
                                 state, applied});
  }

  const std::vector<TraceEvent>& events() const { return events_; }
  bool empty() const { return events_.empty(); }

  Time last_time() const { return events_.empty() ? 0 : events_.back().t; }

  // One JSON object per line; field order fixed so replays are byte-identical.
  std::string to_jsonl() const {
    std::string out;
    char buf[256];
    for (const auto& e : events_) {
      int n = std::snprintf(
          buf, sizeof(buf),
          "{\"t\":%lld,\"seq\":%llu,\"kind\":\"%s\",\"routine\":%d,"
          "\"cmd\":%d,\"device\":%d,\"state\":%d,\"applied\":%s}\n",
          static_cast<long long>(e.t), static_cast<unsigned long long>(e.seq),
          to_string(e.kind), e.routine, e.cmd, e.device, e.state,
          e.applied ? "true" : "false");
      out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
  }

 private:
  std::vector<TraceEvent> events_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace rsim
