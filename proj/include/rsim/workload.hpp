#pragma once

// Workload generation: the parameterized microbenchmark, the factory
// scenario generator, and instantiation of file-based scenarios. All
// randomness flows from one seeded generator with explicitly-coded
// transforms, so the same seed yields identical workloads on any platform.

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsim/core.hpp"

namespace rsim {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  double next_double() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    const double span = static_cast<double>(hi - lo + 1);
    auto v = lo + static_cast<std::int64_t>(next_double() * span);
    return std::min(v, hi);
  }

  bool chance(double p) { return next_double() < p; }

  double normal(double mean, double sigma) {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double z =
        std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + sigma * z;
  }

  // Normal draw rounded to ms, clamped to at least 1.
  Time duration_ms(double mean_ms, double sigma_ms) {
    return std::max<Time>(1, static_cast<Time>(std::llround(normal(mean_ms, sigma_ms))));
  }

 private:
  std::mt19937_64 eng_;
};

// Rank-frequency sampler: p(rank i) proportional to (i+1)^-alpha.
class ZipfSampler {
 public:
  ZipfSampler(int n, double alpha) {
    cum_.reserve(n);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      total += std::pow(static_cast<double>(i + 1), -alpha);
      cum_.push_back(total);
    }
  }

  int sample(Rng& rng) const {
    const double x = rng.next_double() * cum_.back();
    return static_cast<int>(
        std::lower_bound(cum_.begin(), cum_.end(), x) - cum_.begin());
  }

 private:
  std::vector<double> cum_;
};

struct MicrobenchParams {
  int routines = 100;       // R
  int rho = 4;              // concurrent injections (closed loop)
  double commands = 3.0;    // C, mean commands per routine (normal)
  double alpha = 0.05;      // Zipf coefficient of device popularity
  double long_pct = 0.10;   // fraction of long routines
  double long_mean_ms = 20.0 * 60 * 1000;  // |L|
  double short_mean_ms = 10.0 * 1000;      // |S|
  double must_pct = 1.0;    // M
  double fail_pct = 0.0;    // F, fraction of devices that fail once
  Time short_bound_ms = 60'000;
};

inline std::vector<DeviceInfo> make_devices(int n, const std::string& prefix) {
  std::vector<DeviceInfo> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.push_back(DeviceInfo{i, prefix + std::to_string(i), 0});
  return out;
}

// The default microbenchmark: `routines` routines over `device_count`
// devices, Zipf-popular device draws without replacement inside a routine,
// normal command counts and durations, a long command inside each long
// routine, closed-loop injection at depth rho.
inline Workload generate_microbenchmark(const MicrobenchParams& p,
                                        int device_count, std::uint64_t seed) {
  if (device_count < 1) throw std::invalid_argument("device_count >= 1");
  Rng rng(seed);
  ZipfSampler zipf(device_count, p.alpha);
  Workload w;
  w.devices = make_devices(device_count, "dev");
  w.injection = InjectionMode::ClosedLoop;
  w.rho = std::max(1, p.rho);
  Time total_ideal = 0;
  for (int r = 0; r < p.routines; ++r) {
    Routine rt;
    rt.id = r;
    rt.name = "routine" + std::to_string(r);
    rt.submit_time_ms = 0;
    int ncmds = static_cast<int>(
        std::llround(rng.normal(p.commands, p.commands / 3.0)));
    ncmds = std::max(1, std::min(ncmds, device_count));
    const bool long_routine = rng.chance(p.long_pct);
    const int long_at =
        long_routine ? static_cast<int>(rng.uniform_int(0, ncmds - 1)) : -1;
    std::vector<int> used;
    for (int c = 0; c < ncmds; ++c) {
      int d = zipf.sample(rng);
      while (std::find(used.begin(), used.end(), d) != used.end())
        d = zipf.sample(rng);
      used.push_back(d);
      Command cmd;
      cmd.device = d;
      cmd.target = static_cast<StateValue>(rng.uniform_int(0, 99));
      const double mean = c == long_at ? p.long_mean_ms : p.short_mean_ms;
      cmd.duration_ms = rng.duration_ms(mean, 0.10 * mean);
      cmd.kind = kind_for_duration(cmd.duration_ms, p.short_bound_ms);
      cmd.necessity =
          rng.chance(p.must_pct) ? Necessity::Must : Necessity::BestEffort;
      rt.commands.push_back(cmd);
    }
    total_ideal += rt.ideal_runtime();
    w.routines.push_back(std::move(rt));
  }
  // Fail-stop faults on a fraction of devices, once each, at a uniform point
  // of the estimated horizon.
  const int nfail = static_cast<int>(std::llround(p.fail_pct * device_count));
  if (nfail > 0) {
    const Time horizon = std::max<Time>(1, total_ideal / std::max(1, p.rho));
    std::vector<int> ids(device_count);
    for (int i = 0; i < device_count; ++i) ids[i] = i;
    for (int i = 0; i < nfail; ++i) {  // partial Fisher-Yates
      const int j = static_cast<int>(rng.uniform_int(i, device_count - 1));
      std::swap(ids[i], ids[j]);
    }
    std::vector<int> chosen(ids.begin(), ids.begin() + nfail);
    std::sort(chosen.begin(), chosen.end());
    for (int d : chosen)
      w.faults.push_back(FaultSpec{d, rng.uniform_int(0, horizon - 1), {}});
  }
  return w;
}

// Marks fail_pct of the devices failed once each, at a uniform-random point
// of [0, horizon). Fail-stop: no restarts.
inline void inject_faults(Workload& w, double fail_pct, Time horizon,
                          std::uint64_t seed) {
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 1);
  const int n = static_cast<int>(w.devices.size());
  const int nfail = static_cast<int>(std::llround(fail_pct * n));
  if (nfail <= 0) return;
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  for (int i = 0; i < nfail; ++i) {
    const int j = static_cast<int>(rng.uniform_int(i, n - 1));
    std::swap(ids[i], ids[j]);
  }
  std::vector<int> chosen(ids.begin(), ids.begin() + nfail);
  std::sort(chosen.begin(), chosen.end());
  w.faults.clear();
  for (int d : chosen)
    w.faults.push_back(
        FaultSpec{d, rng.uniform_int(0, std::max<Time>(1, horizon) - 1), {}});
}

struct FactoryParams {
  int stages = 50;
  int locals_per_stage = 3;
  int shared_per_boundary = 2;
  int globals = 5;
  int routines_per_worker = 3;
  double commands = 3.0;
  double short_mean_ms = 10'000;
  Time short_bound_ms = 60'000;
};

// Assembly line: each stage owns local devices, shares a pool with each
// neighbouring stage, and everyone can reach the globals. Per-command class
// probabilities 0.6 local / 0.3 neighbour / 0.1 global. Each worker's
// routines chain back to back so nobody idles.
inline Workload generate_factory(std::uint64_t seed,
                                 const FactoryParams& p = {}) {
  Rng rng(seed);
  Workload w;
  const int nlocal = p.stages * p.locals_per_stage;
  const int nshared = (p.stages - 1) * p.shared_per_boundary;
  for (int i = 0; i < nlocal; ++i)
    w.devices.push_back(
        DeviceInfo{static_cast<int>(w.devices.size()),
                   "local_s" + std::to_string(i / p.locals_per_stage) + "_" +
                       std::to_string(i % p.locals_per_stage),
                   0});
  const int shared_base = nlocal;
  for (int i = 0; i < nshared; ++i)
    w.devices.push_back(
        DeviceInfo{static_cast<int>(w.devices.size()),
                   "shared_b" + std::to_string(i / p.shared_per_boundary) + "_" +
                       std::to_string(i % p.shared_per_boundary),
                   0});
  const int global_base = shared_base + nshared;
  for (int i = 0; i < p.globals; ++i)
    w.devices.push_back(DeviceInfo{static_cast<int>(w.devices.size()),
                                   "global" + std::to_string(i), 0});

  auto local_of = [&](int stage, int k) { return stage * p.locals_per_stage + k; };
  auto shared_of = [&](int boundary, int k) {
    return shared_base + boundary * p.shared_per_boundary + k;
  };

  int id = 0;
  for (int stage = 0; stage < p.stages; ++stage) {
    Time cursor = 0;
    for (int k = 0; k < p.routines_per_worker; ++k) {
      Routine rt;
      rt.id = id;
      rt.name = "stage" + std::to_string(stage) + "_job" + std::to_string(k);
      rt.submit_time_ms = cursor;
      int ncmds = static_cast<int>(
          std::llround(rng.normal(p.commands, p.commands / 3.0)));
      ncmds = std::max(1, ncmds);
      for (int c = 0; c < ncmds; ++c) {
        const double klass = rng.next_double();
        int d;
        if (klass < 0.6) {
          d = local_of(stage, static_cast<int>(
                                  rng.uniform_int(0, p.locals_per_stage - 1)));
        } else if (klass < 0.9) {
          // neighbour pools; boundary stages only have one side
          std::vector<int> pool;
          if (stage > 0)
            for (int j = 0; j < p.shared_per_boundary; ++j)
              pool.push_back(shared_of(stage - 1, j));
          if (stage + 1 < p.stages)
            for (int j = 0; j < p.shared_per_boundary; ++j)
              pool.push_back(shared_of(stage, j));
          d = pool[rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1)];
        } else {
          d = global_base + static_cast<int>(rng.uniform_int(0, p.globals - 1));
        }
        Command cmd;
        cmd.device = d;
        cmd.target = static_cast<StateValue>(rng.uniform_int(0, 99));
        cmd.duration_ms = rng.duration_ms(p.short_mean_ms, 0.10 * p.short_mean_ms);
        cmd.kind = kind_for_duration(cmd.duration_ms, p.short_bound_ms);
        rt.commands.push_back(cmd);
      }
      cursor += rt.ideal_runtime();  // next job starts as this one ends
      id++;
      w.routines.push_back(std::move(rt));
    }
  }
  // Submission times must be non-decreasing across ids for replayability.
  std::sort(w.routines.begin(), w.routines.end(),
            [](const Routine& a, const Routine& b) {
              if (a.submit_time_ms != b.submit_time_ms)
                return a.submit_time_ms < b.submit_time_ms;
              return a.id < b.id;
            });
  for (std::size_t i = 0; i < w.routines.size(); ++i)
    w.routines[i].id = static_cast<int>(i);
  return w;
}

// --- file-based scenarios ---------------------------------------------------

struct ScenarioTemplate {
  std::string name;
  std::vector<Command> commands;
  std::vector<std::string> after;  // partial-order constraints
  int copies = 1;                  // probabilistic mode scales this
};

struct Scenario {
  std::string name;
  Time span_ms = 0;
  bool probabilistic = false;
  std::vector<DeviceInfo> devices;
  std::vector<ScenarioTemplate> templates;
};

// Samples trigger times obeying the declared partial order (each routine
// strictly after everything it is constrained to follow).
inline Workload instantiate_scenario(const Scenario& sc, std::uint64_t seed) {
  Rng rng(seed);
  Workload w;
  w.devices = sc.devices;
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < sc.templates.size(); ++i)
    index[sc.templates[i].name] = static_cast<int>(i);
  // Topological sample order: templates are required to be listed so that
  // constraints refer only to earlier entries (checked here).
  std::map<std::string, Time> trigger;
  std::vector<Routine> routines;
  for (const auto& t : sc.templates) {
    int copies = t.copies;
    if (sc.probabilistic && copies > 1)
      copies = std::max(
          1, static_cast<int>(std::llround(rng.normal(copies, copies / 3.0))));
    Time lower = 0;
    for (const auto& dep : t.after) {
      auto it = trigger.find(dep);
      if (it == trigger.end())
        throw std::runtime_error("scenario constraint refers to '" + dep +
                                 "' before it is defined");
      lower = std::max(lower, it->second + 1);
    }
    Time prev = lower;
    for (int k = 0; k < copies; ++k) {
      const Time hi = std::max(prev, sc.span_ms);
      const Time at = rng.uniform_int(prev, hi);
      Routine rt;
      rt.id = static_cast<int>(routines.size());
      rt.name = copies > 1 ? t.name + "#" + std::to_string(k) : t.name;
      rt.submit_time_ms = at;
      rt.commands = t.commands;
      routines.push_back(std::move(rt));
      prev = at + 1;
    }
    trigger[t.name] = routines.back().submit_time_ms;
  }
  std::sort(routines.begin(), routines.end(),
            [](const Routine& a, const Routine& b) {
              if (a.submit_time_ms != b.submit_time_ms)
                return a.submit_time_ms < b.submit_time_ms;
              return a.id < b.id;
            });
  for (std::size_t i = 0; i < routines.size(); ++i)
    routines[i].id = static_cast<int>(i);
  w.routines = std::move(routines);
  return w;
}

}  // namespace rsim
