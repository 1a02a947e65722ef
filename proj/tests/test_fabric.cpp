#include <catch2/catch_amalgamated.hpp>

#include "rsim/engine.hpp"
#include "rsim/fabric.hpp"
#include "rsim/metrics.hpp"

using namespace rsim;

TEST_CASE("writes land only while a device is up; restarts keep frozen state") {
  DeviceFabric f({{0, "lamp", 0}});
  CHECK(f.write(0, 5));
  f.fail(0);
  CHECK_FALSE(f.write(0, 9));
  CHECK(f.state(0) == 5);  // frozen, not reset
  f.restart(0);
  CHECK(f.state(0) == 5);
  CHECK(f.write(0, 9));
}

namespace {

// Hand-simulated detector timeline oracle: pings at k*interval, failure
// detected at ping+timeout, restart at the next answered ping.
struct Expected {
  Time fail_detect = kNoTime;
  Time restart_detect = kNoTime;
};

Expected hand_simulate(Time fail_at, std::optional<Time> restart_at,
                       Time interval, Time timeout, Time horizon) {
  Expected e;
  bool considered_up = true;
  for (Time t = interval; t <= horizon; t += interval) {
    const bool up = t < fail_at || (restart_at && t >= *restart_at);
    if (!up && considered_up) {
      considered_up = false;
      e.fail_detect = t + timeout;
    } else if (up && !considered_up) {
      considered_up = true;
      e.restart_detect = t;
      break;
    }
  }
  return e;
}

RunResult run_detector_workload(Time fail_at, std::optional<Time> restart_at) {
  Workload w;
  w.devices = {{0, "dev", 0}};
  // One long-ish routine far in the future keeps nothing else running.
  w.routines = {Routine{0, "idle", 0, {Command{0, 1, 1}}}};
  w.faults = {FaultSpec{0, fail_at, restart_at}};
  return run(Model::WV, SchedulerPolicy::Fcfs, w, {});
}

}  // namespace

TEST_CASE("failure detected one ack-timeout after the first missed ping") {
  // Fails at t=1500; pings at 1000 (ok) and 2000 (missed) -> detect at 2100.
  auto res = run_detector_workload(1500, {});
  REQUIRE(res.detected_events.size() == 1);
  CHECK(res.detected_events[0].kind == OrderEntry::Kind::Fail);
  CHECK(res.detected_events[0].time == 2100);
  auto expect = hand_simulate(1500, {}, 1000, 100, 10'000);
  CHECK(res.detected_events[0].time == expect.fail_detect);
}

TEST_CASE("restart detected at the next answered ping") {
  auto res = run_detector_workload(1500, 2500);
  REQUIRE(res.detected_events.size() == 2);
  CHECK(res.detected_events[1].kind == OrderEntry::Kind::Restart);
  auto expect = hand_simulate(1500, 2500, 1000, 100, 10'000);
  CHECK(res.detected_events[0].time == expect.fail_detect);
  CHECK(res.detected_events[1].time == expect.restart_detect);
}

TEST_CASE("detector timings match the hand simulation over random faults") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    Time fail_at = rng.uniform_int(1, 8000);
    std::optional<Time> restart;
    if (rng.chance(0.5)) restart = fail_at + rng.uniform_int(1, 5000);
    auto res = run_detector_workload(fail_at, restart);
    auto expect = hand_simulate(fail_at, restart, 1000, 100, 60'000);
    REQUIRE(!res.detected_events.empty());
    CHECK(res.detected_events[0].time == expect.fail_detect);
    if (expect.restart_detect != kNoTime) {
      REQUIRE(res.detected_events.size() == 2);
      CHECK(res.detected_events[1].time == expect.restart_detect);
    }
    // detection bound: fail time .. fail time + interval + timeout
    CHECK(res.detected_events[0].time >= fail_at);
    CHECK(res.detected_events[0].time <= fail_at + 1000 + 100);
  }
}

TEST_CASE("a command completion suppresses the next ping (implicit ack)") {
  // Device completes a command at t=1990; the ping due at 2000 is suppressed,
  // so a failure at t=1995 is only detected after the 3000 ping: t=3100.
  Workload w;
  w.devices = {{0, "dev", 0}};
  w.routines = {Routine{0, "r", 990, {Command{0, 1, 1000}}}};  // ends 1990
  w.faults = {FaultSpec{0, 1995, {}}};
  auto res = run(Model::WV, SchedulerPolicy::Fcfs, w, {});
  REQUIRE(res.detected_events.size() == 1);
  CHECK(res.detected_events[0].time == 3100);
}

TEST_CASE("healthy devices produce no events") {
  Workload w;
  w.devices = {{0, "dev", 0}, {1, "dev2", 0}};
  w.routines = {Routine{0, "r", 0, {Command{0, 1, 500}}}};
  auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
  CHECK(res.detected_events.empty());
}

TEST_CASE("a device failing mid-command fails the command at the fail time") {
  Workload w;
  w.devices = {{0, "dev", 0}};
  w.routines = {Routine{0, "r", 0, {Command{0, 7, 5000}}}};
  w.faults = {FaultSpec{0, 2000, {}}};
  auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
  bool saw_fail = false;
  for (const auto& e : res.trace.events())
    if (e.kind == TraceKind::CmdFail) {
      saw_fail = true;
      CHECK(e.t == 2000);
    }
  CHECK(saw_fail);
  CHECK(res.outcomes[0].aborted);
  CHECK(res.end_states[0] == 0);  // write never landed
}

TEST_CASE("rollback on an up device restores the pre-abort state") {
  // Routine writes d0 then aborts because d1 is dead at dispatch.
  Workload w;
  w.devices = {{0, "a", 10}, {1, "b", 0}};
  w.routines = {
      Routine{0, "r", 0, {Command{0, 42, 1000}, Command{1, 1, 1000}}}};
  w.faults = {FaultSpec{1, 0, {}}};
  auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
  CHECK(res.outcomes[0].aborted);
  CHECK(res.end_states[0] == 10);  // restored
  bool rollback_applied = false;
  for (const auto& e : res.trace.events())
    if (e.kind == TraceKind::RollbackCmd && e.device == 0 && e.applied)
      rollback_applied = true;
  CHECK(rollback_applied);
}
