#pragma once

// Placement policies for the lineage table: FCFS appending, just-in-time
// eligibility with pre/post-lease planning, and the backtracking timeline
// search over lineage gaps. Everything here is a pure function over a
// borrowed table view; the engine applies the returned plans.

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "rsim/core.hpp"
#include "rsim/lineage.hpp"

namespace rsim {

enum class SchedulerPolicy { Fcfs, Jit, Timeline };

inline const char* to_string(SchedulerPolicy p) {
  switch (p) {
    case SchedulerPolicy::Fcfs: return "fcfs";
    case SchedulerPolicy::Jit: return "jit";
    case SchedulerPolicy::Timeline: return "timeline";
  }
  return "?";
}

inline Time est_duration(const Command& c, const EngineConfig& cfg) {
  return c.kind == CommandKind::Long ? c.duration_ms : cfg.tau_timeout_ms;
}

// Width estimates under the lineage duration rule: long commands use their
// declared duration, short commands the fixed tau estimate. One span per
// unique device, covering first through last use.
struct EstimateProfile {
  struct DeviceSpan {
    int device = -1;
    Time first_off = 0;  // est offset of first use from routine start
    Time span = 0;       // est width from first use to last use end
    int first_cmd = -1;
    int last_cmd = -1;
    StateValue first_target = 0;
  };
  std::vector<DeviceSpan> spans;  // in first-use order
  Time est_total = 0;
};

inline EstimateProfile estimate_profile(const Routine& r,
                                        const EngineConfig& cfg) {
  EstimateProfile p;
  Time off = 0;
  std::vector<Time> starts(r.commands.size()), ends(r.commands.size());
  for (std::size_t i = 0; i < r.commands.size(); ++i) {
    starts[i] = off;
    off += est_duration(r.commands[i], cfg);
    ends[i] = off;
  }
  p.est_total = off;
  for (std::size_t i = 0; i < r.commands.size(); ++i) {
    const int d = r.commands[i].device;
    auto it = std::find_if(p.spans.begin(), p.spans.end(),
                           [&](const auto& s) { return s.device == d; });
    if (it == p.spans.end()) {
      p.spans.push_back({d, starts[i], ends[i] - starts[i],
                         static_cast<int>(i), static_cast<int>(i),
                         r.commands[i].target});
    } else {
      it->span = ends[i] - it->first_off;
      it->last_cmd = static_cast<int>(i);
    }
  }
  return p;
}

// Real-duration bookkeeping (the engine knows declared durations; the tau
// rule applies only to lineage widths).
inline Time real_remaining(const Routine& r, int pc) {
  Time t = 0;
  for (std::size_t i = pc; i < r.commands.size(); ++i)
    t += r.commands[i].duration_ms;
  return t;
}

// Time from command `pc` until the last command on `device` completes,
// assuming the routine runs unblocked.
inline Time real_until_last_access(const Routine& r, int device, int pc) {
  int last = -1;
  for (std::size_t i = pc; i < r.commands.size(); ++i)
    if (r.commands[i].device == device) last = static_cast<int>(i);
  if (last < 0) return 0;
  Time t = 0;
  for (int i = pc; i <= last; ++i) t += r.commands[i].duration_ms;
  return t;
}

// Same span under the lineage width rule (declared durations for long
// commands, the fixed tau estimate for short ones). Lease revocation
// windows are sized from this schedule.
inline Time est_until_last_access(const Routine& r, int device, int pc,
                                  const EngineConfig& cfg) {
  int last = -1;
  for (std::size_t i = pc; i < r.commands.size(); ++i)
    if (r.commands[i].device == device) last = static_cast<int>(i);
  if (last < 0) return 0;
  Time t = 0;
  for (int i = pc; i <= last; ++i) t += est_duration(r.commands[i], cfg);
  return t;
}

// --- timeline scheduling ----------------------------------------------------

struct TimelinePlan {
  struct Slot {
    int device = -1;
    int insert_index = 0;
    Time start = 0;
    Time span = 0;
    StateValue first_target = 0;
  };
  std::vector<Slot> slots;  // one per unique device, first-use order
};

namespace detail {

// A placement adds edges {p -> R} for the preSet and {R -> q} for the
// postSet. It is consistent iff no q already reaches some p; keeping the
// postSet closed under reachability makes that a set intersection.
inline bool sets_disjoint(const std::set<RoutineId>& pre,
                          const std::set<RoutineId>& post_closed) {
  for (RoutineId id : pre)
    if (post_closed.count(id)) return false;
  return true;
}

inline bool timeline_search(const LineageTable& table, const OrderGraph& order,
                            const EstimateProfile& prof, std::size_t index,
                            Time earliest, std::set<RoutineId> pre,
                            std::set<RoutineId> post_closed, bool tail_only,
                            TimelinePlan& plan) {
  if (index == prof.spans.size()) return true;
  const auto& item = prof.spans[index];
  const auto all_gaps = table.gaps(item.device, earliest);
  const int entry_count =
      static_cast<int>(table.lineage(item.device).entries.size());
  for (const auto& gap : all_gaps) {
    if (!gap.fits(earliest, item.span)) continue;
    if (tail_only && gap.index_after != entry_count) continue;
    auto [gpre, gpost] = table.pre_post_sets(item.device, gap.index_after);
    std::set<RoutineId> cur_pre = pre, cur_post = post_closed;
    cur_pre.insert(gpre.begin(), gpre.end());
    if (table.lineage(item.device).committed_writer >= 0)
      cur_pre.insert(table.lineage(item.device).committed_writer);
    for (RoutineId id : gpost) order.collect_descendants(id, cur_post);
    if (!sets_disjoint(cur_pre, cur_post)) continue;  // backtrack: next gap
    const Time start = std::max(gap.start, earliest);
    Time next_earliest = start;
    if (index + 1 < prof.spans.size())
      next_earliest =
          start + (prof.spans[index + 1].first_off - item.first_off);
    if (timeline_search(table, order, prof, index + 1, next_earliest, cur_pre,
                        cur_post, tail_only, plan)) {
      plan.slots[index] = {item.device, gap.index_after, start, item.span,
                           item.first_target};
      return true;
    }
  }
  return false;
}

}  // namespace detail

// Finds the first gap combination, in per-device gap order, whose pre/post
// sets stay disjoint under the existing serialize-before relation. With
// pre-leases disabled only tail placements are considered (anything else
// would reorder against an existing holder). A valid placement always exists
// because tail gaps are unbounded.
inline std::optional<TimelinePlan> timeline_place(const LineageTable& table,
                                                  const OrderGraph& order,
                                                  const Routine& r, Time now,
                                                  const EngineConfig& cfg,
                                                  bool allow_pre) {
  EstimateProfile prof = estimate_profile(r, cfg);
  TimelinePlan plan;
  plan.slots.resize(prof.spans.size());
  if (!detail::timeline_search(table, order, prof, 0, now, {}, {}, !allow_pre,
                               plan))
    return std::nullopt;
  return plan;
}

// --- just-in-time eligibility -------------------------------------------------

struct EligiblePlan {
  struct Item {
    enum class Mech { Free, Pre, Post };
    int device = -1;
    Mech mech = Mech::Free;
    RoutineId src = -1;
  };
  std::vector<Item> items;  // one per unique device of the routine
};

// Greedy test: can `r` take every one of its locks right now, either because
// the lineage is free, or via a grantable pre- or post-lease? Post-leases are
// preferred (they do not reorder anyone). Returns nullopt when any device is
// mid-use, a lease kind is disabled, a dirty read would arise, or the implied
// orderings contradict the existing serialize-before relation.
inline std::optional<EligiblePlan> jit_eligibility(const LineageTable& table,
                                                   const OrderGraph& order,
                                                   const Routine& r,
                                                   const EngineConfig& cfg) {
  EligiblePlan plan;
  const bool wants_read =
      std::any_of(r.commands.begin(), r.commands.end(),
                  [](const Command& c) { return c.read; });
  // Everyone who would end up serialized before r, and the closure of
  // everyone who would end up after r.
  std::set<RoutineId> preceders, followers_closed;
  for (int d : devices_of(r)) {
    const auto& es = table.lineage(d).entries;
    const LockAccess* acquired = nullptr;
    const LockAccess* last_released = nullptr;
    bool has_scheduled = false;
    for (const auto& e : es) {
      if (e.status == LockStatus::Acquired) acquired = &e;
      if (e.status == LockStatus::Released) last_released = &e;
      if (e.status == LockStatus::Scheduled || e.status == LockStatus::Leased)
        has_scheduled = true;
    }
    if (table.lineage(d).committed_writer >= 0)
      preceders.insert(table.lineage(d).committed_writer);
    if (acquired) {
      // Only a pre-lease can get past a holder, and only before it has begun
      // using the device.
      if (!cfg.pre_leases || acquired->touched || acquired->in_use)
        return std::nullopt;
      bool past_holder = false;
      for (const auto& e : es) {
        if (e.routine == acquired->routine) past_holder = true;
        if (past_holder)  // the holder and everyone behind it follow r
          order.collect_descendants(e.routine, followers_closed);
        else
          preceders.insert(e.routine);
      }
      plan.items.push_back({d, EligiblePlan::Item::Mech::Pre,
                            acquired->routine});
    } else if (has_scheduled) {
      return std::nullopt;  // someone is already queued ahead
    } else if (last_released) {
      if (!cfg.post_leases) return std::nullopt;
      const bool reads_this =
          wants_read && std::any_of(r.commands.begin(), r.commands.end(),
                                    [&](const Command& c) {
                                      return c.read && c.device == d;
                                    });
      bool dirty = false;
      for (const auto& e : es)
        if (e.touched && reads_this) dirty = true;
      if (dirty) return std::nullopt;  // would read an uncommitted write
      for (const auto& e : es) preceders.insert(e.routine);
      plan.items.push_back({d, EligiblePlan::Item::Mech::Post,
                            last_released->routine});
    } else {
      plan.items.push_back({d, EligiblePlan::Item::Mech::Free, -1});
    }
  }
  if (!detail::sets_disjoint(preceders, followers_closed)) return std::nullopt;
  return plan;
}

}  // namespace rsim
