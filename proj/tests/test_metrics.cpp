#include <catch2/catch_amalgamated.hpp>

#include "rsim/harness.hpp"
#include "rsim/metrics.hpp"
#include "rsim/workload.hpp"

using namespace rsim;

namespace {

Command cmd(int device, StateValue v, Time dur,
            CommandKind k = CommandKind::Long) {
  Command c;
  c.device = device;
  c.target = v;
  c.duration_ms = dur;
  c.kind = k;
  return c;
}

}  // namespace

TEST_CASE("latency is submission to completion, aborted routines excluded") {
  Workload w;
  w.devices = {{0, "a", 0}};
  w.routines = {Routine{0, "r", 1'000, {cmd(0, 1, 7'000)}}};
  auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
  auto lat = latencies(res);
  REQUIRE(lat.size() == 1);
  CHECK(lat[0] == 7'000);

  // two conflicting unit routines under GSV: latencies 1 and 2 units
  Workload w2;
  w2.devices = {{0, "a", 0}};
  const Time u = 100'000;
  w2.routines = {Routine{0, "r0", 0, {cmd(0, 1, u)}},
                 Routine{1, "r1", 0, {cmd(0, 2, u)}}};
  auto res2 = run(Model::GSV, SchedulerPolicy::Fcfs, w2, {});
  auto lat2 = latencies(res2);
  REQUIRE(lat2.size() == 2);
  CHECK(lat2[0] + lat2[1] == 3 * u);
  CHECK(percentile(lat2, 0.95) == 2 * u);
}

TEST_CASE("percentiles use the nearest rank and stay monotone") {
  std::vector<double> v{5, 1, 4, 2, 3};
  CHECK(percentile(v, 0.50) == 3);
  CHECK(percentile(v, 0.90) == 5);
  CHECK(percentile(v, 0.95) == 5);
  CHECK(percentile(v, 0.50) <= percentile(v, 0.90));
}

TEST_CASE("serial_execute applies writes in order with failure freezes") {
  Workload w;
  w.devices = {{0, "a", 10}, {1, "b", 20}};
  w.routines = {Routine{0, "r0", 0, {cmd(0, 1, 100)}},
                Routine{1, "r1", 0, {cmd(0, 2, 100), cmd(1, 3, 100)}}};

  SECTION("empty order keeps initial states") {
    CHECK(serial_execute(w, {}) == std::vector<StateValue>{10, 20});
  }

  SECTION("one routine applies its last writes") {
    std::vector<OrderEntry> order{{OrderEntry::Kind::Routine, 1, -1, 0}};
    CHECK(serial_execute(w, order) == std::vector<StateValue>{2, 3});
  }

  SECTION("last writer wins on a shared device") {
    std::vector<OrderEntry> order{{OrderEntry::Kind::Routine, 0, -1, 0},
                                  {OrderEntry::Kind::Routine, 1, -1, 0}};
    CHECK(serial_execute(w, order)[0] == 2);
    std::vector<OrderEntry> rev{{OrderEntry::Kind::Routine, 1, -1, 0},
                                {OrderEntry::Kind::Routine, 0, -1, 0}};
    CHECK(serial_execute(w, rev)[0] == 1);
  }

  SECTION("a failure freezes writes until the restart") {
    std::vector<OrderEntry> order{
        {OrderEntry::Kind::Routine, 0, -1, 0},
        {OrderEntry::Kind::Fail, 0, 0, 0},
        {OrderEntry::Kind::Routine, 1, -1, 0},  // write to a is frozen out
        {OrderEntry::Kind::Restart, 1, 0, 0},
    };
    auto end = serial_execute(w, order);
    CHECK(end[0] == 1);  // r1's write on a never landed
    CHECK(end[1] == 3);  // b unaffected
  }
}

TEST_CASE("oracle: a single committed routine is trivially congruent") {
  Workload w;
  w.devices = {{0, "a", 0}};
  w.routines = {Routine{0, "r", 0, {cmd(0, 1, 1'000)}}};
  auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
  CHECK_FALSE(final_incongruence_oracle(w, res));
}

TEST_CASE("oracle rejects runs beyond the factorial bound") {
  MicrobenchParams p;
  p.routines = 11;
  auto wl = generate_microbenchmark(p, 6, 3);
  auto res = run(Model::EV, SchedulerPolicy::Timeline, wl, {});
  CHECK_THROWS_AS(final_incongruence_oracle(wl, res, 9), std::invalid_argument);
}

TEST_CASE("wv interleavings produce genuinely incongruent end states") {
  // all-ON vs all-OFF over 4 devices with random command durations: at
  // least some seeds end neither all-ON nor all-OFF, and the oracle agrees.
  int incongruent = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(7'000 + seed);
    Workload w;
    w.devices = make_devices(4, "light");
    Routine r1{0, "on", 0, {}}, r2{1, "off", 0, {}};
    for (int d = 0; d < 4; ++d) {
      r1.commands.push_back(cmd(d, 1, rng.duration_ms(100, 10), CommandKind::Short));
      r2.commands.push_back(cmd(d, 0, rng.duration_ms(100, 10), CommandKind::Short));
    }
    w.routines = {r1, r2};
    auto res = run(Model::WV, SchedulerPolicy::Fcfs, w, {});
    if (final_incongruence_oracle(w, res)) incongruent++;
    // and EV on the same workload is always congruent
    auto ev = run(Model::EV, SchedulerPolicy::Timeline, w, {});
    CHECK_FALSE(final_incongruence_oracle(w, ev));
  }
  CHECK(incongruent > 0);
}

TEST_CASE("parallelism level: single routine, gsv cap, ev overlap") {
  Workload w;
  w.devices = {{0, "a", 0}};
  w.routines = {Routine{0, "r", 0, {cmd(0, 1, 1'000)}}};
  auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
  CHECK(parallelism_level(res) == 0.5);  // samples: 1 at start, 0 at finish

  const Time u = 300'000;
  Workload fig2;
  fig2.devices = {{0, "coffee", 0}, {1, "pancake", 0}, {2, "roomba", 0},
                  {3, "mop", 0}};
  fig2.routines = {
      Routine{0, "b1", 0, {cmd(0, 11, u), cmd(1, 12, u)}},
      Routine{1, "b2", 0, {cmd(0, 21, u), cmd(1, 22, u)}},
      Routine{2, "b3", 0, {cmd(1, 32, u)}},
      Routine{3, "clean1", 0, {cmd(2, 43, u), cmd(3, 44, u)}},
      Routine{4, "clean2", 0, {cmd(3, 54, u)}},
  };
  auto ev = run(Model::EV, SchedulerPolicy::Timeline, fig2, {});
  CHECK(parallelism_level(ev) > 1.0);
  auto gsv = run(Model::GSV, SchedulerPolicy::Fcfs, fig2, {});
  CHECK(parallelism_level(gsv) <= 1.0);
}

TEST_CASE("order mismatch: identity is zero, a full reversal is 100%") {
  RunResult res;
  res.outcomes.resize(4);
  for (int i = 0; i < 4; ++i) {
    res.outcomes[i].id = i;
    res.outcomes[i].committed = true;
  }
  for (int i = 0; i < 4; ++i)
    res.serialization_order.push_back(OrderEntry{OrderEntry::Kind::Routine, i});
  CHECK(order_mismatch_pct(res) == 0.0);
  res.serialization_order.clear();
  for (int i = 3; i >= 0; --i)
    res.serialization_order.push_back(OrderEntry{OrderEntry::Kind::Routine, i});
  CHECK(order_mismatch_pct(res) == 100.0);
}

TEST_CASE("rollback overhead averages the undone fraction over aborted runs") {
  SECTION("no aborts means zero") {
    Workload w;
    w.devices = {{0, "a", 0}};
    w.routines = {Routine{0, "r", 0, {cmd(0, 1, 1'000)}}};
    auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
    CHECK(rollback_overhead(res) == 0.0);
  }

  SECTION("one of four commands executed and undone contributes 0.25") {
    Workload w;
    w.devices = {{0, "a", 0}, {1, "b", 0}, {2, "c", 0}, {3, "d", 0}};
    w.routines = {Routine{0, "r", 0,
                          {cmd(0, 1, 1'000), cmd(1, 1, 1'000),
                           cmd(2, 1, 1'000), cmd(3, 1, 1'000)}}};
    w.faults = {FaultSpec{1, 500, {}}};  // dies before the second command
    auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
    REQUIRE(res.outcomes[0].aborted);
    CHECK(res.outcomes[0].rolled_back == 1);
    CHECK(rollback_overhead(res) == 0.25);
  }
}

TEST_CASE("stretch factor: uncontended 1.0, paused mid-run 1.5") {
  Workload w;
  w.devices = {{0, "a", 0}, {1, "b", 0}};
  const Time u = 100'000;
  w.routines = {
      Routine{0, "holder", 0, {cmd(1, 1, 2 * u)}},          // holds b 2 units
      Routine{1, "r", 0, {cmd(0, 2, u), cmd(1, 3, u)}},     // pauses 1 unit
  };
  auto res = run(Model::EV, SchedulerPolicy::Fcfs, w, {});
  auto st = stretch_factors(w, res);
  REQUIRE(st.size() == 2);
  CHECK(st[0] == 1.0);
  CHECK(st[1] == 1.5);
}

TEST_CASE("temporary incongruence is zero for a lone routine") {
  Workload w;
  w.devices = {{0, "a", 0}};
  w.routines = {Routine{0, "r", 0, {cmd(0, 1, 1'000)}}};
  auto res = run(Model::EV, SchedulerPolicy::Timeline, w, {});
  CHECK(temporary_incongruence(res) == 0.0);
}

TEST_CASE("batches are deterministic and worker-count independent") {
  BenchConfig cfg;
  cfg.model = Model::EV;
  cfg.policy = SchedulerPolicy::Timeline;
  cfg.params.routines = 15;
  cfg.params.fail_pct = 0.25;
  cfg.device_count = 6;
  auto a = run_batch(cfg, 8, 99, 1);
  auto b = run_batch(cfg, 8, 99, 4);
  CHECK(bench_csv(a, cfg.model, cfg.policy, 99) ==
        bench_csv(b, cfg.model, cfg.policy, 99));

  SECTION("a single trial equals the aggregate of one") {
    auto one = run_batch(cfg, 1, 99, 1);
    CHECK(one.mean.latency_mean == one.trials[0].latency_mean);
    CHECK(one.p50.makespan == one.trials[0].makespan);
  }
}

TEST_CASE("run_batch derives trial seeds by xor") {
  BenchConfig cfg;
  cfg.params.routines = 10;
  cfg.device_count = 5;
  auto batch = run_batch(cfg, 3, 40, 1);
  // trial 2 of base 40 equals a single run at seed 40^2
  auto wl = generate_microbenchmark(cfg.params, 5, 40 ^ 2ULL);
  auto res = run(cfg.model, cfg.policy, wl, cfg.engine);
  auto m = compute_metrics(wl, res);
  CHECK(batch.trials[2].latency_mean == m.latency_mean);
  CHECK(batch.trials[2].makespan == m.makespan);
}
