// Command-line front end: run one trial, batch-run a benchmark, verify a run
// against the serializability oracle, or replay a saved workload file.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rsim/engine.hpp"
#include "rsim/harness.hpp"
#include "rsim/io.hpp"
#include "rsim/metrics.hpp"
#include "rsim/workload.hpp"

namespace {

struct CommonOpts {
  std::string model = "ev";
  std::string scheduler = "timeline";
  std::uint64_t seed = 1;
  // microbenchmark parameters (names mirror the workload generator)
  int R = 100;
  int rho = 4;
  int devices = 25;
  double C = 3.0;
  double alpha = 0.05;
  double L_pct = 0.10;
  double L_mean_ms = 20.0 * 60 * 1000;
  double S_mean_ms = 10'000;
  double M_pct = 1.0;
  double F_pct = 0.0;
  std::string workload_file;
  std::string scenario;
  // engine knobs
  rsim::EngineConfig engine;
  bool no_pre = false, no_post = false, validate = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--model", o.model, "wv|gsv|sgsv|psv|ev")
      ->check(CLI::IsMember({"wv", "gsv", "sgsv", "psv", "ev"}));
  cmd->add_option("--scheduler", o.scheduler, "fcfs|jit|timeline (EV only)")
      ->check(CLI::IsMember({"fcfs", "jit", "timeline"}));
  cmd->add_option("--seed", o.seed, "base RNG seed");
  cmd->add_option("--R", o.R, "routine count");
  cmd->add_option("--rho", o.rho, "concurrent injections (closed loop)");
  cmd->add_option("--devices", o.devices, "device count");
  cmd->add_option("--C", o.C, "mean commands per routine");
  cmd->add_option("--alpha", o.alpha, "Zipf coefficient");
  cmd->add_option("--L-pct", o.L_pct, "long-routine fraction");
  cmd->add_option("--L-mean-ms", o.L_mean_ms, "long command mean duration");
  cmd->add_option("--S-mean-ms", o.S_mean_ms, "short command mean duration");
  cmd->add_option("--M-pct", o.M_pct, "must-command fraction");
  cmd->add_option("--F-pct", o.F_pct, "failed-device fraction");
  cmd->add_option("--workload", o.workload_file, "workload JSON file");
  cmd->add_option("--scenario", o.scenario,
                  "morning|party|factory or a scenario file path");
  cmd->add_option("--tau-timeout-ms", o.engine.tau_timeout_ms,
                  "short-command lineage width");
  cmd->add_option("--leniency", o.engine.leniency, "lease revocation slack");
  cmd->add_option("--short-bound-ms", o.engine.short_bound_ms,
                  "long/short duration boundary");
  cmd->add_option("--stretch-threshold", o.engine.stretch_threshold,
                  "timeline admission guard");
  cmd->add_option("--ttl-init", o.engine.ttl_init, "wait-queue TTL");
  cmd->add_option("--ping-interval-ms", o.engine.ping_interval_ms,
                  "failure detector ping period");
  cmd->add_option("--ack-timeout-ms", o.engine.ack_timeout_ms,
                  "failure detector ack timeout");
  cmd->add_flag("--no-pre-leases", o.no_pre, "disable pre-leases");
  cmd->add_flag("--no-post-leases", o.no_post, "disable post-leases");
  cmd->add_flag("--validate", o.validate,
                "check lineage invariants after every event");
}

rsim::Workload build_workload(const CommonOpts& o) {
  if (!o.workload_file.empty()) return rsim::load_workload(o.workload_file);
  if (!o.scenario.empty()) {
    if (o.scenario == "factory") return rsim::generate_factory(o.seed);
    std::string path = o.scenario;
    std::ifstream probe(path);
    if (!probe) path = "scenarios/" + o.scenario + ".json";
    return rsim::instantiate_scenario(rsim::load_scenario(path), o.seed);
  }
  rsim::MicrobenchParams p;
  p.routines = o.R;
  p.rho = o.rho;
  p.commands = o.C;
  p.alpha = o.alpha;
  p.long_pct = o.L_pct;
  p.long_mean_ms = o.L_mean_ms;
  p.short_mean_ms = o.S_mean_ms;
  p.must_pct = o.M_pct;
  p.fail_pct = o.F_pct;
  p.short_bound_ms = o.engine.short_bound_ms;
  return rsim::generate_microbenchmark(p, o.devices, o.seed);
}

rsim::EngineConfig engine_config(const CommonOpts& o) {
  rsim::EngineConfig cfg = o.engine;
  cfg.pre_leases = !o.no_pre;
  cfg.post_leases = !o.no_post;
  cfg.validate_each_event = o.validate;
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

int do_run(const CommonOpts& o, const std::string& trace_out,
           const std::string& report_out, const std::string& save_workload) {
  const auto model = *rsim::model_from_string(o.model);
  const auto policy = *rsim::scheduler_from_string(o.scheduler);
  rsim::Workload wl = build_workload(o);
  if (!save_workload.empty()) rsim::save_workload(wl, save_workload);
  rsim::RunResult res = rsim::run(model, policy, wl, engine_config(o));
  rsim::Json report = rsim::report_to_json(res, model, policy, o.seed);
  rsim::MetricsReport m = rsim::compute_metrics(wl, res);
  report["metrics"] = rsim::Json{{"latency_mean", m.latency_mean},
                                 {"latency_p50", m.latency_p50},
                                 {"latency_p90", m.latency_p90},
                                 {"latency_p95", m.latency_p95},
                                 {"temporary_incongruence", m.temporary_incongruence},
                                 {"parallelism", m.parallelism},
                                 {"order_mismatch_pct", m.order_mismatch},
                                 {"abort_rate", m.abort_rate},
                                 {"rollback_overhead", m.rollback_overhead},
                                 {"stretch_p50", m.stretch_p50},
                                 {"stretch_p95", m.stretch_p95}};
  if (!trace_out.empty()) write_file(trace_out, res.trace.to_jsonl());
  const std::string text = report.dump(2) + "\n";
  if (!report_out.empty())
    write_file(report_out, text);
  else
    std::cout << text;
  return 0;
}

int do_bench(const CommonOpts& o, int trials, int jobs,
             const std::string& out_path) {
  rsim::BenchConfig cfg;
  cfg.model = *rsim::model_from_string(o.model);
  cfg.policy = *rsim::scheduler_from_string(o.scheduler);
  cfg.engine = engine_config(o);
  cfg.params.routines = o.R;
  cfg.params.rho = o.rho;
  cfg.params.commands = o.C;
  cfg.params.alpha = o.alpha;
  cfg.params.long_pct = o.L_pct;
  cfg.params.long_mean_ms = o.L_mean_ms;
  cfg.params.short_mean_ms = o.S_mean_ms;
  cfg.params.must_pct = o.M_pct;
  cfg.params.fail_pct = o.F_pct;
  cfg.params.short_bound_ms = o.engine.short_bound_ms;
  cfg.device_count = o.devices;
  if (!o.workload_file.empty() || !o.scenario.empty())
    cfg.fixed_workload = build_workload(o);
  rsim::BenchResult res = rsim::run_batch(cfg, trials, o.seed, jobs);
  const std::string csv = rsim::bench_csv(res, cfg.model, cfg.policy, o.seed);
  if (!out_path.empty())
    write_file(out_path, csv);
  else
    std::cout << csv;
  return 0;
}

int do_verify(CommonOpts o, int trials) {
  const auto model = *rsim::model_from_string(o.model);
  const auto policy = *rsim::scheduler_from_string(o.scheduler);
  o.validate = true;
  int failures = 0;
  for (int i = 0; i < trials; ++i) {
    CommonOpts trial = o;
    trial.seed = o.seed ^ static_cast<std::uint64_t>(i);
    rsim::Workload wl = build_workload(trial);
    rsim::RunResult res = rsim::run(model, policy, wl, engine_config(trial));
    bool ok = res.invariant_violations.empty();
    std::string what = ok ? "" : "invariant violation";
    if (ok && model != rsim::Model::WV) {
      if (!res.order_consistent) {
        ok = false;
        what = "cyclic serialization constraints";
      } else if ((model == rsim::Model::EV || model == rsim::Model::PSV) &&
                 !rsim::emitted_order_consistent(wl, res)) {
        ok = false;
        what = "emitted order does not reproduce the end state";
      }
    }
    int committed = 0;
    for (const auto& oc : res.outcomes) committed += oc.committed ? 1 : 0;
    if (ok && committed <= 9) {
      try {
        if (rsim::final_incongruence_oracle(wl, res)) {
          ok = false;
          what = "end state matches no serial order";
        }
      } catch (const std::invalid_argument&) {
      }
    }
    std::printf("verify seed=%llu model=%s scheduler=%s: %s%s%s\n",
                static_cast<unsigned long long>(trial.seed),
                rsim::to_string(model), rsim::to_string(policy),
                ok ? "PASS" : "FAIL", ok ? "" : " - ", what.c_str());
    if (!ok) failures++;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic smart-environment routine simulator"};
  app.require_subcommand(1);

  CommonOpts run_o, bench_o, verify_o, replay_o;
  std::string trace_out, report_out, save_wl, bench_out;
  int trials = 100, jobs = 1, verify_trials = 1;

  auto* c_run = app.add_subcommand("run", "run one trial, emit trace + report");
  add_common(c_run, run_o);
  c_run->add_option("--trace-out", trace_out, "trace JSONL path");
  c_run->add_option("--out", report_out, "report JSON path (default stdout)");
  c_run->add_option("--save-workload", save_wl, "write the generated workload");

  auto* c_bench = app.add_subcommand("bench", "batch of seeded trials, CSV out");
  add_common(c_bench, bench_o);
  c_bench->add_option("--trials", trials, "trial count");
  c_bench->add_option("--jobs", jobs, "worker threads");
  c_bench->add_option("--out", bench_out, "CSV path (default stdout)");

  auto* c_verify = app.add_subcommand(
      "verify", "run trials with the oracle and invariant suite");
  add_common(c_verify, verify_o);
  c_verify->add_option("--trials", verify_trials, "trial count");

  auto* c_replay = app.add_subcommand("replay", "re-execute a workload file");
  add_common(c_replay, replay_o);
  c_replay->add_option("--trace-out", trace_out, "trace JSONL path");
  c_replay->add_option("--out", report_out, "report JSON path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_run->parsed()) return do_run(run_o, trace_out, report_out, save_wl);
    if (c_bench->parsed()) return do_bench(bench_o, trials, jobs, bench_out);
    if (c_verify->parsed()) return do_verify(verify_o, verify_trials);
    if (c_replay->parsed()) {
      if (replay_o.workload_file.empty())
        throw std::runtime_error("replay needs --workload");
      return do_run(replay_o, trace_out, report_out, "");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
