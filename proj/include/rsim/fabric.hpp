#pragma once

// Emulated devices with injectable fail-stop faults, plus the ping-based
// failure detector. The fabric is part of the single event loop; all
// interactions are timestamped, nothing here spawns threads.

#include <cassert>
#include <vector>

#include "rsim/core.hpp"

namespace rsim {

// A failed device freezes: it neither acks pings nor applies writes. A
// restart brings it back up holding whatever state it froze with.
class DeviceFabric {
 public:
  explicit DeviceFabric(const std::vector<DeviceInfo>& devices) {
    devs_.reserve(devices.size());
    for (const auto& d : devices) devs_.push_back({d.initial, true});
  }

  int count() const { return static_cast<int>(devs_.size()); }
  bool up(int d) const { return devs_.at(d).up; }
  StateValue state(int d) const { return devs_.at(d).state; }

  // Returns true when the write landed (device up).
  bool write(int d, StateValue v) {
    auto& dev = devs_.at(d);
    if (!dev.up) return false;
    dev.state = v;
    return true;
  }

  void fail(int d) { devs_.at(d).up = false; }
  void restart(int d) { devs_.at(d).up = true; }

  std::vector<StateValue> snapshot() const {
    std::vector<StateValue> out;
    out.reserve(devs_.size());
    for (const auto& d : devs_) out.push_back(d.state);
    return out;
  }

 private:
  struct Dev {
    StateValue state;
    bool up;
  };
  std::vector<Dev> devs_;
};

// Ping loop bookkeeping for one device. The engine schedules the timed ping
// events; this class decides what a ping at time t observes and produces.
//
// Detection contract: a ping at time t to a down device yields a failure
// detection at t + ack_timeout. A ping to an up device acks immediately; if
// the device was considered failed, that ack is the restart detection at t.
// A command completion since the previous ping suppresses the probe entirely
// (implicit ack).
class FailureDetector {
 public:
  enum class PingOutcome { Suppressed, NoChange, FailurePending, RestartDetected };

  FailureDetector(int device_count, const EngineConfig& cfg) : cfg_(cfg) {
    considered_up_.assign(device_count, true);
    last_activity_.assign(device_count, kNoTime);
  }

  void record_activity(int d, Time t) { last_activity_[d] = t; }

  bool considered_up(int d) const { return considered_up_[d]; }

  PingOutcome on_ping(int d, Time t, bool physically_up) {
    if (cfg_.implicit_ack && last_activity_[d] != kNoTime &&
        last_activity_[d] > t - cfg_.ping_interval_ms) {
      return PingOutcome::Suppressed;
    }
    if (physically_up) {
      last_activity_[d] = t;  // the ack itself
      if (!considered_up_[d]) {
        considered_up_[d] = true;
        return PingOutcome::RestartDetected;
      }
      return PingOutcome::NoChange;
    }
    // No ack will arrive; the engine schedules the detection at t + timeout.
    return considered_up_[d] ? PingOutcome::FailurePending : PingOutcome::NoChange;
  }

  // Called when the ack timeout for a failed ping elapses.
  bool confirm_failure(int d) {
    if (!considered_up_[d]) return false;
    considered_up_[d] = false;
    return true;
  }

 private:
  EngineConfig cfg_;
  std::vector<bool> considered_up_;
  std::vector<Time> last_activity_;
};

}  // namespace rsim
