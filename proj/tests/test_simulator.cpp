#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "calgate/calibration.hpp"
#include "calgate/error.hpp"
#include "calgate/metrics.hpp"
#include "calgate/modelmath.hpp"
#include "calgate/simulator.hpp"
#include "calgate/synth.hpp"
#include "test_util.hpp"

using namespace calgate;
using calgate::test::near;
using calgate::test::rec;

TEST_CASE("smooth_step") {
  const std::vector<double> cur{0.0, 1.0};
  CHECK(smooth_step(std::nullopt, cur, 0.2) == cur);
  CHECK(smooth_step(std::vector<double>{0.3, 0.7}, cur, 1.0) == cur);
  const auto s = smooth_step(std::vector<double>{1.0, 0.0}, cur, 0.2);
  CHECK(near(s[0], 0.8, 1e-12));
  CHECK(near(s[1], 0.2, 1e-12));
  CHECK_THROWS_AS(smooth_step(std::nullopt, cur, 0.0), ValidationError);
  CHECK_THROWS_AS(smooth_step(std::nullopt, std::vector<double>{0.5, 0.6}, 0.5), ValidationError);
  CHECK_THROWS_AS(smooth_step(std::vector<double>{1.0}, cur, 0.5), ValidationError);
}

TEST_CASE("hand-traced five-tick stream with one label flip") {
  // softmax([ln 4, 0]) = [0.8, 0.2]
  const double l4 = std::log(4.0);
  StreamSequence seq;
  seq.stream_id = "h";
  seq.records = {rec("h", 0, {l4, 0}, 0), rec("h", 40, {l4, 0}, 0), rec("h", 80, {0, l4}, 1),
                 rec("h", 120, {0, l4}, 1), rec("h", 160, {0, l4}, 1)};
  SimConfig cfg;
  cfg.alpha = 0.5;
  cfg.k_filter = 2;
  cfg.gate = {0.6, 0.55, 0};
  cfg.map = CalibrationMap::identity();
  // smoothed top: .8 (Act), .8, .5 (< .55: Hold), .65 on class 1 (Act), .725
  const auto r = simulate_stream(seq, cfg, true);
  CHECK(r.ticks == 5);
  CHECK(r.act_ticks == 4);
  CHECK(r.correct_act_ticks == 4);
  CHECK(near(r.coverage(), 0.8, 1e-15));
  CHECK(*r.act_only_precision() == 1.0);
  CHECK(r.transitions == 3);
  REQUIRE(r.per_tick_trace.size() == 5);
  CHECK(near(r.per_tick_trace[2].event.confidence_in, 0.5, 1e-12));
  CHECK(r.per_tick_trace[3].candidate == 1);
  CHECK(near(r.per_tick_trace[3].event.confidence_in, 0.65, 1e-12));
  CHECK(near(r.per_tick_trace[4].event.confidence_in, 0.725, 1e-12));

  // Smoothing first gives the same trace for the identity map.
  cfg.order = CalibrationOrder::smooth_first;
  const auto r2 = simulate_stream(seq, cfg);
  CHECK(r2.act_ticks == 4);
  CHECK(r2.transitions == 3);
}

TEST_CASE("trivial streams") {
  SUBCASE("perfect predictor") {
    StreamSequence seq{"p", {}, 40};
    for (int t = 0; t < 30; ++t) {
      std::vector<double> l(5, 0.0);
      l[3] = 50.0;
      seq.records.push_back(rec("p", t * 40, l, 3));
    }
    SimConfig cfg;
    cfg.gate = GateConfig{0.5, 0.5, 0};
    const auto r = simulate_stream(seq, cfg);
    CHECK(*r.act_only_precision() == 1.0);
    CHECK(r.coverage() == 1.0);
  }
  SUBCASE("uniform logits over 21 classes never act") {
    StreamSequence seq{"u", {}, 40};
    for (int t = 0; t < 20; ++t) seq.records.push_back(rec("u", t * 40, std::vector<double>(21, 0.0), 0));
    SimConfig cfg;
    cfg.gate = GateConfig{0.5, 0.5, 0};
    const auto r = simulate_stream(seq, cfg);
    CHECK(r.coverage() == 0.0);
    CHECK_FALSE(r.act_only_precision());
  }
  SUBCASE("empty stream is skipped") {
    const auto r = simulate_stream(StreamSequence{"e", {}, 40}, SimConfig{});
    CHECK(r.skipped_streams == 1);
    CHECK(r.ticks == 0);
  }
}

TEST_CASE("top-k filter forces the gate input to zero") {
  // Smoothed argmax stays on class 0 while class 0 drops out of the current top-1.
  StreamSequence seq{"f", {rec("f", 0, {5, 0, 0}, 0), rec("f", 40, {0, 1, 0}, 0)}, 40};
  SimConfig cfg;
  cfg.alpha = 0.2;
  cfg.k_filter = 1;
  cfg.gate = GateConfig{0.5, 0.5, 0};
  const auto r = simulate_stream(seq, cfg, true);
  CHECK(r.per_tick_trace[1].candidate == 0);
  CHECK_FALSE(r.per_tick_trace[1].eligible);
  CHECK(r.per_tick_trace[1].event.confidence_in == 0.0);
  CHECK(r.per_tick_trace[1].event.mode_out == Mode::hold);
}

TEST_CASE("sweep reductions and properties") {
  SynthConfig sc;
  sc.n_streams = 12;
  sc.ticks_per_stream = 300;
  sc.seed = 5;
  const auto ds = generate(sc);

  SUBCASE("alpha=1, k=K, tau=0 gives top-1 accuracy") {
    SimConfig cfg;
    cfg.alpha = 1.0;
    cfg.k_filter = ds.k();
    cfg.gate.refractory_ms = 0;
    const auto r = simulate_sweep(ds, cfg, {0.0});
    CHECK(r[0].coverage() == 1.0);
    CHECK(*r[0].act_only_precision() == topk_accuracy(ds, 1));
  }

  SUBCASE("coverage strictly decreases over 0, 0.5, 0.9") {
    SimConfig cfg;
    cfg.gate.refractory_ms = 0;
    const auto r = simulate_sweep(ds, cfg, {0.0, 0.5, 0.9});
    CHECK(r[0].coverage() > r[1].coverage());
    CHECK(r[1].coverage() > r[2].coverage());
  }

  SUBCASE("half band widens tau") {
    SimConfig cfg;
    cfg.half_band = 0.05;
    const auto r = simulate_sweep(ds, cfg, {0.5});
    CHECK(r[0].tau == 0.5);
    CHECK(near(r[0].tau_on, 0.55, 1e-15));
    CHECK(near(r[0].tau_off, 0.45, 1e-15));
  }

  SUBCASE("deterministic and invariant to stream order") {
    SimConfig cfg;
    cfg.map = CalibrationMap::temperature(1.3);
    const auto a = simulate_sweep(ds, cfg, {0.3, 0.6});
    const auto b = simulate_sweep(ds, cfg, {0.3, 0.6});
    auto streams = streams_of(ds);
    std::reverse(streams.begin(), streams.end());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].act_ticks == b[i].act_ticks);
      CHECK(a[i].transitions == b[i].transitions);
      SimConfig c = cfg;
      c.gate = GateConfig{a[i].tau, a[i].tau, cfg.gate.refractory_ms};
      SimResult rev;
      for (const auto& s : streams) rev += simulate_stream(s, c);
      CHECK(rev.act_ticks == a[i].act_ticks);
      CHECK(rev.correct_act_ticks == a[i].correct_act_ticks);
      CHECK(rev.transitions == a[i].transitions);
    }
  }

  SUBCASE("every map kind runs in both orders") {
    for (auto kind : {MapKind::identity, MapKind::temperature, MapKind::platt, MapKind::isotonic}) {
      for (auto order : {CalibrationOrder::automatic, CalibrationOrder::smooth_first}) {
        SimConfig cfg;
        cfg.map = fit(kind, ds).map;
        cfg.order = order;
        const auto r = simulate_sweep(ds, cfg, {0.5});
        CHECK(r[0].coverage() >= 0.0);
        CHECK(r[0].coverage() <= 1.0);
      }
    }
  }

  CHECK_THROWS_AS(simulate_sweep(ds, SimConfig{}, {1.5}), ValidationError);
  SimConfig bad;
  bad.k_filter = ds.k() + 1;
  CHECK_THROWS_AS(simulate_sweep(ds, bad, {0.5}), ValidationError);
  CHECK_THROWS_AS(simulate_sweep(Dataset(3, {}), SimConfig{}, {0.5}), ValidationError);
}

TEST_CASE("property: smoothed vector stays a distribution") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 4.0);
  std::optional<std::vector<double>> s;
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> l(21);
    for (double& x : l) x = g(rng);
    s = smooth_step(s, softmax(l), 0.2);
    CHECK(near(std::accumulate(s->begin(), s->end(), 0.0), 1.0, 1e-12));
    CHECK(*std::min_element(s->begin(), s->end()) >= 0.0);
  }
}

TEST_CASE("latency benchmark contract") {
  SimConfig cfg;
  const auto st = benchmark_tick_latency(cfg, 21, 1000);
  CHECK(st.n_ticks == 1000);
  CHECK(st.mean_us > 0.0);
  CHECK(st.p99_us >= 0.0);
  CHECK_THROWS_AS(benchmark_tick_latency(cfg, 21, 999), ValidationError);
}

TEST_CASE("csv output") {
  SimResult r;
  r.tau = 0.5;
  r.ticks = 4;
  r.act_ticks = 2;
  r.correct_act_ticks = 1;
  r.transitions = 3;
  CHECK(sim_to_csv({r}) == "tau,coverage,precision,transitions\n0.5,0.5,0.5,3\n");
  SimResult none;
  none.ticks = 2;
  CHECK(sim_to_csv({none}) == "tau,coverage,precision,transitions\n0,0,,0\n");
}
