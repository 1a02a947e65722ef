#pragma once

// Batch experiment runner: N seeded trials, a worker pool, deterministic
// aggregation, CSV output with a fixed schema.

#include <atomic>
#include <cstdio>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rsim/engine.hpp"
#include "rsim/metrics.hpp"
#include "rsim/workload.hpp"

namespace rsim {

struct MetricsReport {
  double latency_mean = 0, latency_p50 = 0, latency_p90 = 0, latency_p95 = 0;
  double temporary_incongruence = 0;
  double parallelism = 0;
  double order_mismatch = 0;
  double abort_rate = 0;
  double rollback_overhead = 0;
  double stretch_mean = 0, stretch_p50 = 0, stretch_p95 = 0;
  double makespan = 0;
  int committed = 0;
  int aborted = 0;
};

inline MetricsReport compute_metrics(const Workload& wl, const RunResult& res) {
  MetricsReport m;
  const auto lat = latencies(res);
  m.latency_mean = mean_of(lat);
  m.latency_p50 = percentile(lat, 0.50);
  m.latency_p90 = percentile(lat, 0.90);
  m.latency_p95 = percentile(lat, 0.95);
  m.temporary_incongruence = temporary_incongruence(res);
  m.parallelism = parallelism_level(res);
  m.order_mismatch = order_mismatch_pct(res);
  m.abort_rate = abort_rate(res);
  m.rollback_overhead = rollback_overhead(res);
  const auto st = stretch_factors(wl, res);
  m.stretch_mean = mean_of(st);
  m.stretch_p50 = percentile(st, 0.50);
  m.stretch_p95 = percentile(st, 0.95);
  m.makespan = static_cast<double>(res.makespan);
  for (const auto& o : res.outcomes) {
    if (o.committed) m.committed++;
    if (o.aborted) m.aborted++;
  }
  return m;
}

struct BenchConfig {
  Model model = Model::EV;
  SchedulerPolicy policy = SchedulerPolicy::Timeline;
  EngineConfig engine;
  MicrobenchParams params;
  int device_count = 25;
  std::optional<Workload> fixed_workload;  // overrides the generator
};

struct BenchResult {
  std::vector<MetricsReport> trials;
  MetricsReport mean, p50, p90, p95;
};

namespace detail {

inline MetricsReport aggregate(const std::vector<MetricsReport>& trials,
                               double q, bool use_mean) {
  auto pick = [&](auto field) {
    std::vector<double> v;
    for (const auto& t : trials) v.push_back(field(t));
    return use_mean ? mean_of(v) : percentile(v, q);
  };
  MetricsReport m;
  m.latency_mean = pick([](const MetricsReport& t) { return t.latency_mean; });
  m.latency_p50 = pick([](const MetricsReport& t) { return t.latency_p50; });
  m.latency_p90 = pick([](const MetricsReport& t) { return t.latency_p90; });
  m.latency_p95 = pick([](const MetricsReport& t) { return t.latency_p95; });
  m.temporary_incongruence =
      pick([](const MetricsReport& t) { return t.temporary_incongruence; });
  m.parallelism = pick([](const MetricsReport& t) { return t.parallelism; });
  m.order_mismatch =
      pick([](const MetricsReport& t) { return t.order_mismatch; });
  m.abort_rate = pick([](const MetricsReport& t) { return t.abort_rate; });
  m.rollback_overhead =
      pick([](const MetricsReport& t) { return t.rollback_overhead; });
  m.stretch_mean = pick([](const MetricsReport& t) { return t.stretch_mean; });
  m.stretch_p50 = pick([](const MetricsReport& t) { return t.stretch_p50; });
  m.stretch_p95 = pick([](const MetricsReport& t) { return t.stretch_p95; });
  m.makespan = pick([](const MetricsReport& t) { return t.makespan; });
  m.committed = static_cast<int>(
      pick([](const MetricsReport& t) { return double(t.committed); }));
  m.aborted = static_cast<int>(
      pick([](const MetricsReport& t) { return double(t.aborted); }));
  return m;
}

}  // namespace detail

// Fault times are calibrated per model: devices fail at a uniform point of
// the model's own fault-free run, measured by a dry run on the same workload.
// The window ends with the last routine's start, so each model sees faults
// while its routines are actually flowing.
inline Workload trial_workload(const BenchConfig& cfg, std::uint64_t seed) {
  if (cfg.fixed_workload) return *cfg.fixed_workload;
  MicrobenchParams params = cfg.params;
  const double fail_pct = params.fail_pct;
  params.fail_pct = 0.0;
  Workload wl = generate_microbenchmark(params, cfg.device_count, seed);
  if (fail_pct > 0) {
    RunResult dry = run(cfg.model, cfg.policy, wl, cfg.engine);
    Time horizon = 1;
    for (const auto& o : dry.outcomes)
      if (o.start != kNoTime) horizon = std::max(horizon, o.start);
    inject_faults(wl, fail_pct, horizon, seed);
  }
  return wl;
}

// Trial i uses seed base_seed ^ i. Workers race over trial indices; results
// land by index, so the output is identical for any worker count.
inline BenchResult run_batch(const BenchConfig& cfg, int trials,
                             std::uint64_t base_seed, int jobs = 1) {
  if (trials < 1) throw std::invalid_argument("trials >= 1");
  BenchResult out;
  out.trials.resize(trials);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= trials) return;
      const std::uint64_t seed = base_seed ^ static_cast<std::uint64_t>(i);
      Workload wl = trial_workload(cfg, seed);
      RunResult res = run(cfg.model, cfg.policy, wl, cfg.engine);
      out.trials[i] = compute_metrics(wl, res);
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  out.mean = detail::aggregate(out.trials, 0, true);
  out.p50 = detail::aggregate(out.trials, 0.50, false);
  out.p90 = detail::aggregate(out.trials, 0.90, false);
  out.p95 = detail::aggregate(out.trials, 0.95, false);
  return out;
}

inline std::string bench_csv(const BenchResult& res, Model model,
                             SchedulerPolicy policy, std::uint64_t base_seed) {
  std::string out =
      "row,model,scheduler,seed,latency_mean,latency_p50,latency_p90,"
      "latency_p95,temporary_incongruence,parallelism,order_mismatch_pct,"
      "abort_rate,rollback_overhead,stretch_mean,stretch_p50,stretch_p95,"
      "makespan,committed,aborted\n";
  char buf[512];
  auto row = [&](const std::string& label, std::uint64_t seed,
                 const MetricsReport& m) {
    std::snprintf(buf, sizeof(buf),
                  "%s,%s,%s,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,"
                  "%.6f,%.6f,%.6f,%.6f,%d,%d\n",
                  label.c_str(), to_string(model), to_string(policy),
                  static_cast<unsigned long long>(seed), m.latency_mean,
                  m.latency_p50, m.latency_p90, m.latency_p95,
                  m.temporary_incongruence, m.parallelism, m.order_mismatch,
                  m.abort_rate, m.rollback_overhead, m.stretch_mean,
                  m.stretch_p50, m.stretch_p95, m.makespan, m.committed,
                  m.aborted);
    out += buf;
  };
  for (std::size_t i = 0; i < res.trials.size(); ++i)
    row("trial" + std::to_string(i), base_seed ^ i, res.trials[i]);
  row("agg_mean", base_seed, res.mean);
  row("agg_p50", base_seed, res.p50);
  row("agg_p90", base_seed, res.p90);
  row("agg_p95", base_seed, res.p95);
  return out;
}

}  // namespace rsim
