#pragma once

// Per-device lock lineages: the planned transition order of every device's
// virtual lock, plus committed states, lease records, the serialize-before
// bookkeeping, and the four structural invariants that make the whole thing
// serializable.

#include <cassert>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rsim/core.hpp"

namespace rsim {

enum class LockStatus { Scheduled, Acquired, Released, Leased };

inline const char* to_string(LockStatus s) {
  switch (s) {
    case LockStatus::Scheduled: return "S";
    case LockStatus::Acquired: return "A";
    case LockStatus::Released: return "R";
    case LockStatus::Leased: return "L";
  }
  return "?";
}

// One routine's reservation of one device's lock over a planned interval.
struct LockAccess {
  RoutineId routine = -1;
  LockStatus status = LockStatus::Scheduled;
  StateValue desired = 0;   // planned target, updated to the last applied write
  Time start = 0;
  Time duration = 0;
  RoutineId leased_to = -1;  // set while status == Leased
  bool touched = false;      // owner completed >= 1 command here
  bool in_use = false;       // owner has a command in flight here

  Time end() const { return start + duration; }
};

struct Lineage {
  StateValue committed = 0;
  RoutineId committed_writer = -1;  // last committer whose write landed here
  std::vector<LockAccess> entries;  // ordered: position == serialization
};

enum class LeaseKind { Pre, Post };

struct LeaseRecord {
  int id = -1;
  int device = -1;
  RoutineId src = -1;
  RoutineId dst = -1;
  LeaseKind kind = LeaseKind::Post;
  Time revoke_at = kTimeMax;  // armed when dst actually starts holding
  bool open = true;
};

enum class SerialOrder { Before, After, Unordered };

// Directed serialize-before constraints over routines and failure/restart
// events (caller picks the integer node ids). Edges accumulate over a run;
// they are never removed, so reachability answers are stable.
class OrderGraph {
 public:
  void add_node(int n) { nodes_.insert(n); }

  void add_edge(int a, int b) {
    if (a == b) return;
    nodes_.insert(a);
    nodes_.insert(b);
    succ_[a].insert(b);
  }

  bool has_node(int n) const { return nodes_.count(n) > 0; }

  bool reachable(int from, int to) const {
    if (from == to) return true;
    std::vector<int> stack{from};
    std::set<int> seen{from};
    while (!stack.empty()) {
      int n = stack.back();
      stack.pop_back();
      auto it = succ_.find(n);
      if (it == succ_.end()) continue;
      for (int m : it->second) {
        if (m == to) return true;
        if (seen.insert(m).second) stack.push_back(m);
      }
    }
    return false;
  }

  // Adds n and everything reachable from it to `out`.
  void collect_descendants(int n, std::set<int>& out) const {
    std::vector<int> stack{n};
    out.insert(n);
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      auto it = succ_.find(cur);
      if (it == succ_.end()) continue;
      for (int m : it->second)
        if (out.insert(m).second) stack.push_back(m);
    }
  }

  // Kahn's algorithm over `subset`, smallest key first. Edges touching nodes
  // outside the subset are ignored. Returns nullopt on a cycle.
  template <typename KeyFn>
  std::optional<std::vector<int>> topo_order(const std::set<int>& subset,
                                             KeyFn key) const {
    std::map<int, int> indeg;
    for (int n : subset) indeg[n] = 0;
    for (const auto& [a, outs] : succ_) {
      if (!subset.count(a)) continue;
      for (int b : outs)
        if (subset.count(b)) indeg[b]++;
    }
    using Keyed = std::pair<decltype(key(0)), int>;
    std::set<Keyed> ready;
    for (const auto& [n, d] : indeg)
      if (d == 0) ready.insert({key(n), n});
    std::vector<int> out;
    while (!ready.empty()) {
      auto [k, n] = *ready.begin();
      ready.erase(ready.begin());
      out.push_back(n);
      auto it = succ_.find(n);
      if (it == succ_.end()) continue;
      for (int m : it->second) {
        if (!subset.count(m)) continue;
        if (--indeg[m] == 0) ready.insert({key(m), m});
      }
    }
    if (out.size() != subset.size()) return std::nullopt;
    return out;
  }

 private:
  std::set<int> nodes_;
  std::map<int, std::set<int>> succ_;
};

// A maximal free interval in one device's lineage. `index_after` doubles as
// the insertion index for an entry placed inside the gap. `end == kTimeMax`
// marks the unbounded tail gap.
struct Gap {
  int device = -1;
  int index_after = 0;
  Time start = 0;
  Time end = kTimeMax;

  bool fits(Time from, Time duration) const {
    Time s = std::max(start, from);
    if (end == kTimeMax) return true;
    return s + duration <= end;
  }
};

struct CorrectiveCommand {
  int device = -1;
  StateValue restore_to = 0;
};

struct CommitResult {
  std::vector<std::pair<int, StateValue>> committed_writes;
  std::vector<int> released_devices;  // devices whose lineages lost entries
};

struct AbortResult {
  std::vector<CorrectiveCommand> corrective;
  std::vector<int> rolled_back_devices;  // case-B devices (effect undone)
  std::vector<int> released_devices;
};

class LineageTable {
 public:
  LineageTable() = default;
  explicit LineageTable(const std::vector<DeviceInfo>& devices) {
    lineages_.resize(devices.size());
    for (std::size_t i = 0; i < devices.size(); ++i)
      lineages_[i].committed = devices[i].initial;
  }

  int device_count() const { return static_cast<int>(lineages_.size()); }
  const Lineage& lineage(int d) const { return lineages_.at(d); }
  Lineage& lineage_mut(int d) { return lineages_.at(d); }

  int find_entry(int d, RoutineId r) const {
    const auto& es = lineages_.at(d).entries;
    for (std::size_t i = 0; i < es.size(); ++i)
      if (es[i].routine == r) return static_cast<int>(i);
    return -1;
  }

  // --- placement -----------------------------------------------------------

  // Inserts at an explicit position; the interval must sit inside the free
  // space there. Returns the (left, right) neighbour owner sets so the caller
  // can record serialize-before edges.
  std::pair<std::set<RoutineId>, std::set<RoutineId>> insert_entry(
      int d, int index, LockAccess e) {
    auto& es = lineages_.at(d).entries;
    if (index < 0 || index > static_cast<int>(es.size()))
      throw std::logic_error("lineage insert index out of range");
    if (index > 0 && es[index - 1].end() > e.start)
      throw std::logic_error("lineage insert overlaps left neighbour");
    if (index < static_cast<int>(es.size()) && e.end() > es[index].start)
      throw std::logic_error("lineage insert overlaps right neighbour");
    std::set<RoutineId> left, right;
    for (int i = 0; i < index; ++i) left.insert(es[i].routine);
    for (int i = index; i < static_cast<int>(es.size()); ++i)
      right.insert(es[i].routine);
    es.insert(es.begin() + index, e);
    return {left, right};
  }

  std::set<RoutineId> append_entry(int d, LockAccess e) {
    auto& es = lineages_.at(d).entries;
    if (!es.empty()) e.start = std::max(e.start, es.back().end());
    auto [left, right] = insert_entry(d, static_cast<int>(es.size()), e);
    (void)right;
    return left;
  }

  // --- gaps (timeline scheduling) ------------------------------------------

  std::vector<Gap> gaps(int d, Time from) const {
    const auto& es = lineages_.at(d).entries;
    std::vector<Gap> out;
    Time cursor = 0;
    for (std::size_t i = 0; i < es.size(); ++i) {
      Time s = std::max(cursor, from);
      if (s < es[i].start)
        out.push_back(Gap{d, static_cast<int>(i), s, es[i].start});
      cursor = std::max(cursor, es[i].end());
    }
    out.push_back(Gap{d, static_cast<int>(es.size()),
                      std::max(cursor, from), kTimeMax});
    return out;
  }

  // preSet / postSet of a prospective insertion point.
  std::pair<std::set<RoutineId>, std::set<RoutineId>> pre_post_sets(
      int d, int index_after) const {
    const auto& es = lineages_.at(d).entries;
    std::set<RoutineId> pre, post;
    for (int i = 0; i < static_cast<int>(es.size()); ++i) {
      if (i < index_after)
        pre.insert(es[i].routine);
      else
        post.insert(es[i].routine);
    }
    return {pre, post};
  }

  // --- status transitions ---------------------------------------------------

  void activate(int d, RoutineId r, Time now) {
    auto& es = lineages_.at(d).entries;
    int i = find_entry(d, r);
    assert(i >= 0);
    auto& e = es[i];
    assert(e.status == LockStatus::Scheduled || e.status == LockStatus::Leased);
    e.status = LockStatus::Acquired;
    if (e.start < now) {
      e.start = now;  // late activation: the plan slips right
      normalize_from(d, i);
    }
  }

  // Ends r's access window on d. Stored width becomes the actual one.
  void release_entry(int d, RoutineId r, Time now) {
    int i = find_entry(d, r);
    assert(i >= 0);
    auto& e = lineages_.at(d).entries[i];
    assert(e.status == LockStatus::Acquired);
    e.status = LockStatus::Released;
    e.in_use = false;
    if (e.start > now) e.start = now;  // released before ever starting
    e.duration = now - e.start;
    normalize_from(d, i);
  }

  // Leftmost Scheduled entry, but only when nothing is acquired or leased in
  // front of it. That is the only entry eligible to become Acquired.
  std::optional<int> activation_candidate(int d) const {
    const auto& es = lineages_.at(d).entries;
    for (std::size_t i = 0; i < es.size(); ++i) {
      switch (es[i].status) {
        case LockStatus::Released: continue;
        case LockStatus::Acquired: return std::nullopt;
        case LockStatus::Leased: return std::nullopt;
        case LockStatus::Scheduled: return static_cast<int>(i);
      }
    }
    return std::nullopt;
  }

  // --- the spec'd queries ----------------------------------------------------

  // Infer the device's state from the lineage alone: the Acquired entry if
  // one exists, else the rightmost Released entry, else the committed state.
  StateValue current_status(int d) const {
    const auto& lin = lineages_.at(d);
    for (const auto& e : lin.entries)
      if (e.status == LockStatus::Acquired) return e.desired;
    for (auto it = lin.entries.rbegin(); it != lin.entries.rend(); ++it)
      if (it->status == LockStatus::Released) return it->desired;
    return lin.committed;
  }

  SerialOrder serialize_before(RoutineId a, RoutineId b) const {
    bool before = false, after = false;
    for (const auto& lin : lineages_) {
      int ia = -1, ib = -1;
      for (std::size_t i = 0; i < lin.entries.size(); ++i) {
        if (lin.entries[i].routine == a) ia = static_cast<int>(i);
        if (lin.entries[i].routine == b) ib = static_cast<int>(i);
      }
      if (ia < 0 || ib < 0) continue;
      (ia < ib ? before : after) = true;
    }
    if (before && after)
      throw std::logic_error("serialize-before conflict (invariant 4 broken)");
    if (before) return SerialOrder::Before;
    if (after) return SerialOrder::After;
    return SerialOrder::Unordered;
  }

  // Invariants 1-4; empty result means the table is consistent.
  std::vector<std::string> check_invariants() const {
    std::vector<std::string> out;
    for (int d = 0; d < device_count(); ++d) {
      const auto& es = lineages_[d].entries;
      int acquired = 0;
      int band = 0;  // Released=0, Acquired=1, Leased=2, Scheduled=3
      for (std::size_t i = 0; i < es.size(); ++i) {
        if (i > 0 && es[i - 1].end() > es[i].start)
          out.push_back(violation(1, d, es[i - 1].routine, es[i].routine,
                                  "overlapping intervals"));
        if (es[i].status == LockStatus::Acquired) ++acquired;
        int b = band_of(es[i].status);
        if (b < band)
          out.push_back(violation(3, d, es[i].routine, -1,
                                  "status band regresses"));
        band = std::max(band, b);
      }
      if (acquired > 1)
        out.push_back(violation(2, d, -1, -1, "multiple Acquired entries"));
    }
    check_invariant4(out);
    return out;
  }

  // --- abort / commit --------------------------------------------------------

  // Removes r everywhere. Devices where r applied the latest effect get a
  // corrective write restoring the previous applied state (or the committed
  // state), skipped when the device is already there. Devices whose latest
  // effect belongs to someone serialized after r keep that effect.
  AbortResult abort_rollback(RoutineId r,
                             const std::function<StateValue(int)>& actual_state) {
    AbortResult res;
    for (int d = 0; d < device_count(); ++d) {
      auto& es = lineages_[d].entries;
      int i = find_entry(d, r);
      if (i < 0) continue;
      if (es[i].touched && last_effect_is(d, r)) {
        StateValue restore = lineages_[d].committed;
        for (int k = i - 1; k >= 0; --k)
          if (es[k].touched) {
            restore = es[k].desired;
            break;
          }
        res.rolled_back_devices.push_back(d);
        if (actual_state(d) != restore)
          res.corrective.push_back(CorrectiveCommand{d, restore});
      }
      es.erase(es.begin() + i);
      res.released_devices.push_back(d);
    }
    return res;
  }

  // Last-writer-wins commit: r's final writes become committed state; r's
  // entries and everything serialized before them on shared devices vanish.
  // A device whose entry was already compacted away by a later-serialized
  // committer keeps that later write.
  CommitResult commit_with_compaction(RoutineId r) {
    CommitResult res;
    for (int d = 0; d < device_count(); ++d) {
      auto& lin = lineages_[d];
      int i = find_entry(d, r);
      if (i < 0) continue;
      assert(lin.entries[i].status == LockStatus::Released);
      if (lin.entries[i].touched) {
        lin.committed = lin.entries[i].desired;
        lin.committed_writer = r;
        res.committed_writes.push_back({d, lin.committed});
      }
      for (int k = 0; k < i; ++k)
        assert(lin.entries[k].status == LockStatus::Released);
      lin.entries.erase(lin.entries.begin(), lin.entries.begin() + i + 1);
      res.released_devices.push_back(d);
    }
    return res;
  }

  // Debug dump matching the lineage-row format used by golden tests.
  std::string dump() const {
    std::ostringstream os;
    for (int d = 0; d < device_count(); ++d) {
      const auto& lin = lineages_[d];
      os << "device " << d << " committed=" << lin.committed << " |";
      for (const auto& e : lin.entries) {
        os << " R" << e.routine << "[" << to_string(e.status) << "]"
           << " d=" << e.desired << " t=" << e.start << "+" << e.duration
           << ";";
      }
      os << "\n";
    }
    return os.str();
  }

 private:
  static int band_of(LockStatus s) {
    switch (s) {
      case LockStatus::Released: return 0;
      case LockStatus::Acquired: return 1;
      case LockStatus::Leased: return 2;
      case LockStatus::Scheduled: return 3;
    }
    return 3;
  }

  bool last_effect_is(int d, RoutineId r) const {
    const auto& es = lineages_.at(d).entries;
    RoutineId last = -1;
    for (const auto& e : es)
      if (e.touched) last = e.routine;
    return last == r;
  }

  void normalize_from(int d, int idx) {
    auto& es = lineages_.at(d).entries;
    for (std::size_t k = idx + 1; k < es.size(); ++k) {
      Time floor = es[k - 1].end();
      if (es[k].start < floor) es[k].start = floor;
    }
  }

  static std::string violation(int inv, int device, RoutineId a, RoutineId b,
                               const char* what) {
    std::ostringstream os;
    os << "invariant " << inv << " device " << device;
    if (a >= 0) os << " routine " << a;
    if (b >= 0) os << "/" << b;
    os << ": " << what;
    return os.str();
  }

  void check_invariant4(std::vector<std::string>& out) const {
    // Pairwise per-device orders must agree and be acyclic.
    std::map<std::pair<RoutineId, RoutineId>, int> dir;  // (a<b) -> -1/+1
    OrderGraph g;
    bool consistent = true;
    for (int d = 0; d < device_count(); ++d) {
      const auto& es = lineages_[d].entries;
      for (std::size_t i = 0; i < es.size(); ++i) {
        for (std::size_t j = i + 1; j < es.size(); ++j) {
          RoutineId a = es[i].routine, b = es[j].routine;
          if (a == b) continue;
          auto key = std::minmax(a, b);
          int sign = (a < b) ? 1 : -1;  // +1: key.first before key.second
          auto [it, inserted] = dir.insert({{key.first, key.second}, sign});
          if (!inserted && it->second != sign) {
            out.push_back(violation(4, d, a, b, "contradictory order"));
            consistent = false;
          }
          g.add_edge(a, b);
        }
      }
    }
    if (consistent) {
      std::set<int> nodes;
      for (const auto& [pr, sign] : dir) {
        nodes.insert(pr.first);
        nodes.insert(pr.second);
      }
      if (!g.topo_order(nodes, [](int n) { return n; }))
        out.push_back(violation(4, -1, -1, -1, "serialize-before cycle"));
    }
  }

  std::vector<Lineage> lineages_;
};

}  // namespace rsim
