#pragma once

// Metrics over traces plus the brute-force serializability machinery:
// serial_execute replays an order of routines and failure/restart events on
// an idealized fabric; the oracle searches every admissible order for one
// matching the observed end state.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "rsim/core.hpp"
#include "rsim/engine.hpp"
#include "rsim/trace.hpp"

namespace rsim {

// Nearest-rank percentile over a copy of the values.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, std::max<std::size_t>(1, rank) - 1)];
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Submission-to-completion time of every committed routine.
inline std::vector<double> latencies(const RunResult& res) {
  std::vector<double> out;
  for (const auto& o : res.outcomes)
    if (o.committed) out.push_back(static_cast<double>(o.finish - o.submit));
  return out;
}

// Fraction of completed routines that saw another routine write a device
// they had already modified, before their own commit (trace order).
inline double temporary_incongruence(const RunResult& res) {
  std::map<int, std::set<int>> modifiers;  // device -> routines that wrote it
  std::map<int, bool> suffered;
  std::set<int> finished;
  for (const auto& e : res.trace.events()) {
    const bool write = (e.kind == TraceKind::CmdEnd ||
                        e.kind == TraceKind::RollbackCmd) &&
                       e.applied;
    if (write) {
      for (int r : modifiers[e.device])
        if (r != e.routine && !finished.count(r)) suffered[r] = true;
      modifiers[e.device].insert(e.routine);
    } else if (e.kind == TraceKind::Commit || e.kind == TraceKind::Abort) {
      finished.insert(e.routine);
    }
  }
  int completed = 0, hit = 0;
  for (const auto& o : res.outcomes) {
    if (!o.committed) continue;
    completed++;
    if (suffered.count(o.id) && suffered[o.id]) hit++;
  }
  return completed == 0 ? 0.0
                        : static_cast<double>(hit) / static_cast<double>(completed);
}

// Running-routine count sampled at every start/finish instant; an instant is
// half-open, so a routine finishing at t is not running at t.
inline double parallelism_level(const RunResult& res) {
  int running = 0;
  std::vector<double> samples;
  for (const auto& e : res.trace.events()) {
    if (e.kind == TraceKind::RoutineStart) {
      running++;
      samples.push_back(running);
    } else if (e.kind == TraceKind::Commit || e.kind == TraceKind::Abort) {
      if (e.routine >= 0 && res.outcomes[e.routine].start != kNoTime) running--;
      samples.push_back(running);
    }
  }
  return mean_of(samples);
}

// Minimum adjacent-swap (Kendall tau) distance between the emitted order and
// the submission order, over committed routines, as a percentage of the
// worst case n(n-1)/2.
inline double order_mismatch_pct(const RunResult& res) {
  std::vector<int> final_order;
  for (const auto& e : res.serialization_order)
    if (e.kind == OrderEntry::Kind::Routine) final_order.push_back(e.id);
  const std::size_t n = final_order.size();
  if (n < 2) return 0.0;
  // Submission order is routine-id order; count inversions by merge sort.
  std::vector<int> seq = final_order;
  std::vector<int> tmp(n);
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
      const std::size_t mid = lo + width, hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (seq[i] <= seq[j]) {
          tmp[k++] = seq[i++];
        } else {
          inversions += mid - i;
          tmp[k++] = seq[j++];
        }
      }
      while (i < mid) tmp[k++] = seq[i++];
      while (j < hi) tmp[k++] = seq[j++];
      std::copy(tmp.begin() + lo, tmp.begin() + hi, seq.begin() + lo);
    }
  }
  const double max_swaps = static_cast<double>(n) * (n - 1) / 2.0;
  return 100.0 * static_cast<double>(inversions) / max_swaps;
}

inline double abort_rate(const RunResult& res) {
  if (res.outcomes.empty()) return 0.0;
  int aborted = 0;
  for (const auto& o : res.outcomes)
    if (o.aborted) aborted++;
  return static_cast<double>(aborted) / static_cast<double>(res.outcomes.size());
}

// Mean over aborted routines of (applied-then-undone commands / commands).
inline double rollback_overhead(const RunResult& res) {
  std::vector<double> fr;
  for (const auto& o : res.outcomes)
    if (o.aborted && o.commands > 0)
      fr.push_back(static_cast<double>(o.rolled_back) /
                   static_cast<double>(o.commands));
  return fr.empty() ? 0.0 : mean_of(fr);
}

// Actual start-to-finish time over the ideal minimum, per completed routine.
inline std::vector<double> stretch_factors(const Workload& wl,
                                           const RunResult& res) {
  std::vector<double> out;
  for (const auto& o : res.outcomes) {
    if (!o.committed || o.start == kNoTime) continue;
    const double ideal =
        static_cast<double>(std::max<Time>(1, wl.routines[o.id].ideal_runtime()));
    out.push_back(static_cast<double>(o.finish - o.start) / ideal);
  }
  return out;
}

// --- serial replay and the brute-force oracle -----------------------------------

// Applies routines and failure/restart events in the given order on an
// idealized fabric: a failed device freezes and ignores writes until its
// restart appears in the order.
inline std::vector<StateValue> serial_execute(
    const Workload& wl, const std::vector<OrderEntry>& order) {
  std::vector<StateValue> state;
  state.reserve(wl.devices.size());
  for (const auto& d : wl.devices) state.push_back(d.initial);
  std::vector<bool> frozen(wl.devices.size(), false);
  for (const auto& e : order) {
    switch (e.kind) {
      case OrderEntry::Kind::Fail:
        frozen[e.device] = true;
        break;
      case OrderEntry::Kind::Restart:
        frozen[e.device] = false;
        break;
      case OrderEntry::Kind::Routine:
        for (const auto& c : wl.routines[e.id].commands)
          if (!c.read && !frozen[c.device]) state[c.device] = c.target;
        break;
    }
  }
  return state;
}

// Did the emitted serialization order reproduce the engine's end state
// exactly?
inline bool emitted_order_consistent(const Workload& wl, const RunResult& res) {
  if (!res.order_consistent) return false;
  return serial_execute(wl, res.serialization_order) == res.end_states;
}

namespace detail {

// Enumerates interleavings of the chosen routine permutation with the
// per-device event chains; true as soon as one matches.
inline bool interleave_matches(const Workload& wl,
                               const std::vector<StateValue>& target,
                               const std::vector<int>& routine_perm,
                               const std::vector<std::vector<OrderEntry>>& chains,
                               std::vector<OrderEntry>& prefix,
                               std::size_t perm_pos,
                               std::vector<std::size_t>& chain_pos) {
  bool any = false;
  if (perm_pos < routine_perm.size()) {
    prefix.push_back(
        OrderEntry{OrderEntry::Kind::Routine, routine_perm[perm_pos], -1, 0});
    if (interleave_matches(wl, target, routine_perm, chains, prefix,
                           perm_pos + 1, chain_pos))
      return true;
    prefix.pop_back();
    any = true;
  }
  for (std::size_t c = 0; c < chains.size(); ++c) {
    if (chain_pos[c] >= chains[c].size()) continue;
    prefix.push_back(chains[c][chain_pos[c]]);
    chain_pos[c]++;
    if (interleave_matches(wl, target, routine_perm, chains, prefix, perm_pos,
                           chain_pos))
      return true;
    chain_pos[c]--;
    prefix.pop_back();
    any = true;
  }
  if (!any) return serial_execute(wl, prefix) == target;
  return false;
}

}  // namespace detail

// True iff the end state matches NO admissible serial order of the committed
// routines (with each device's failure/restart events kept in detection
// order but placed freely). k! blow-up: refuses more than `max_routines`.
inline bool final_incongruence_oracle(const Workload& wl, const RunResult& res,
                                      int max_routines = 9) {
  std::vector<int> committed;
  for (const auto& o : res.outcomes)
    if (o.committed) committed.push_back(o.id);
  if (static_cast<int>(committed.size()) > max_routines)
    throw std::invalid_argument("too many committed routines for the oracle");
  // Fast path: the engine's own order (when present).
  if (!res.serialization_order.empty() && emitted_order_consistent(wl, res))
    return false;
  std::vector<std::vector<OrderEntry>> chains;
  {
    std::map<int, std::vector<OrderEntry>> by_device;
    for (const auto& e : res.detected_events) by_device[e.device].push_back(e);
    for (auto& [d, v] : by_device) chains.push_back(v);
  }
  std::vector<int> perm = committed;
  std::sort(perm.begin(), perm.end());
  do {
    std::vector<OrderEntry> prefix;
    std::vector<std::size_t> chain_pos(chains.size(), 0);
    if (detail::interleave_matches(wl, res.end_states, perm, chains, prefix, 0,
                                   chain_pos))
      return false;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return true;
}

}  // namespace rsim
