#include <doctest.h>

#include <cmath>
#include <random>

#include "calgate/calibration.hpp"
#include "calgate/error.hpp"
#include "calgate/modelmath.hpp"
#include "calgate/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace calgate;
using calgate::test::near;
using calgate::test::rec;

TEST_CASE("apply: closed forms") {
  const std::vector<double> l{2.0, 0.0};
  const auto t2 = calgate::apply(CalibrationMap::temperature(2.0), l);
  CHECK(t2.pred_class == 0);
  CHECK(near(t2.confidence, std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-12));
  REQUIRE(t2.full_probs);
  CHECK(near((*t2.full_probs)[1], 1.0 / (std::exp(1.0) + 1.0), 1e-12));

  const auto id = calgate::apply(CalibrationMap::identity(), l);
  const auto t1 = calgate::apply(CalibrationMap::temperature(1.0), l);
  CHECK(id.confidence == t1.confidence);
  CHECK(*id.full_probs == *t1.full_probs);

  const auto pl = calgate::apply(CalibrationMap::platt(0.5, -1.0), l);
  CHECK(near(pl.confidence, 0.5, 1e-12));  // sigmoid(0.5 * 2 - 1)
  CHECK_FALSE(pl.full_probs);
}

TEST_CASE("map invariants are validated") {
  CHECK_THROWS_AS(CalibrationMap::temperature(0.0), ValidationError);
  CHECK_THROWS_AS(CalibrationMap::temperature(-1.0), ValidationError);
  CHECK_THROWS_AS(CalibrationMap::isotonic({}), ValidationError);
  CHECK_THROWS_AS(CalibrationMap::isotonic({{0.5, 0.6}, {0.4, 0.7}}), ValidationError);  // x not increasing
  CHECK_THROWS_AS(CalibrationMap::isotonic({{0.4, 0.7}, {0.5, 0.6}}), ValidationError);  // y decreasing
  CHECK_THROWS_AS(CalibrationMap::isotonic({{0.4, 1.5}}), ValidationError);
}

TEST_CASE("isotonic lookup is a right-continuous step") {
  const IsotonicMap m{{{0.2, 0.1}, {0.5, 0.4}, {0.8, 0.9}}};
  CHECK(isotonic_lookup(m, 0.0) == 0.1);
  CHECK(isotonic_lookup(m, 0.2) == 0.1);
  CHECK(isotonic_lookup(m, 0.4999) == 0.1);
  CHECK(isotonic_lookup(m, 0.5) == 0.4);
  CHECK(isotonic_lookup(m, 0.79) == 0.4);
  CHECK(isotonic_lookup(m, 0.8) == 0.9);
  CHECK(isotonic_lookup(m, 1.0) == 0.9);
}

TEST_CASE("fit_temperature") {
  SUBCASE("s=1 and s=3 generator oracles") {
    SynthConfig cfg;
    cfg.n_streams = 40;
    cfg.ticks_per_stream = 500;
    cfg.seed = 21;
    const auto t1 = fit_temperature(generate(cfg)).map;
    const double T1 = std::get<TemperatureMap>(t1.variant()).temperature;
    CHECK(T1 >= 0.9);
    CHECK(T1 <= 1.1);

    cfg.overconfidence_scale = 3.0;
    const double T3 = std::get<TemperatureMap>(fit_temperature(generate(cfg)).map.variant()).temperature;
    CHECK(T3 >= 2.7);
    CHECK(T3 <= 3.3);
  }

  SUBCASE("single always-correct record hits the lower boundary and warns") {
    const Dataset ds(3, {rec("a", 0, {3.0, 0.0, 0.0}, 0)});
    const auto fit = fit_temperature(ds);
    const double T = std::get<TemperatureMap>(fit.map.variant()).temperature;
    CHECK(near(T, kTemperatureMin, 1e-3));
    CHECK_FALSE(fit.warnings.empty());
  }

  SUBCASE("found T is a local minimum of the NLL") {
    SynthConfig sc;
    sc.k = 5;
    sc.n_streams = 3;
    sc.ticks_per_stream = 300;
    sc.overconfidence_scale = 1.7;
    sc.seed = 9;
    const auto ds = generate(sc);
    const double T = std::get<TemperatureMap>(fit_temperature(ds).map.variant()).temperature;
    REQUIRE(T < kTemperatureMax * 0.99);
    const double f = temperature_nll(ds, T);
    CHECK(f <= temperature_nll(ds, T * 1.01) + 1e-9);
    CHECK(f <= temperature_nll(ds, T / 1.01) + 1e-9);
  }

  CHECK_THROWS_AS(fit_temperature(Dataset(3, {})), ValidationError);
}

TEST_CASE("fit_platt") {
  SUBCASE("correctness independent of the top logit at rate 0.5 -> a, b near 0") {
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
      const double v = -2.0 + 0.1 * (i / 2);
      x.push_back(v);
      y.push_back(i % 2);  // each x value appears once correct, once wrong
    }
    const auto fit = fit_platt(x, y);
    const auto [a, b] = std::get<PlattMap>(fit.map.variant());
    const auto [ga, gb] = oracle::logistic_grid(x, y, -2.0, 2.0, 0.01);
    CHECK(near(a, ga, 0.011));
    CHECK(near(b, gb, 0.011));
    CHECK(near(a, 0.0, 1e-6));
    CHECK(near(b, 0.0, 1e-6));
    CHECK(fit.warnings.empty());
  }

  SUBCASE("generic data: Newton optimum matches the grid oracle and beats its neighbourhood") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(1.0, 1.5);
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 300; ++i) {
      x.push_back(g(rng));
      const double p = 1.0 / (1.0 + std::exp(-(0.8 * x.back() - 0.5)));
      y.push_back(std::bernoulli_distribution(p)(rng) ? 1 : 0);
    }
    const auto m = std::get<PlattMap>(fit_platt(x, y).map.variant());
    const auto [ga, gb] = oracle::logistic_grid(x, y, -3.0, 3.0, 0.01);
    CHECK(near(m.a, ga, 0.011));
    CHECK(near(m.b, gb, 0.011));
    CHECK(oracle::logistic_ll(x, y, m.a, m.b) >= oracle::logistic_ll(x, y, ga, gb) - 1e-9);
  }

  SUBCASE("two-point fixture forces a > 0") {
    const std::vector<double> x{2.0, -2.0};
    const std::vector<int> y{1, 0};
    const auto fit = fit_platt(x, y);
    const auto m = std::get<PlattMap>(fit.map.variant());
    CHECK(m.a > 0.0);
    const auto [ga, gb] = oracle::logistic_grid(x, y, -5.0, 5.0, 0.5);
    CHECK(ga > 0.0);
    (void)gb;
    CHECK(std::abs(m.a) <= kPlattSlopeLimit);
    CHECK_FALSE(fit.warnings.empty());
  }

  SUBCASE("all correct -> separability warning and confidence near 1") {
    const Dataset ds(3, {rec("a", 0, {3, 0, 0}, 0), rec("a", 40, {0, 2, 0}, 1), rec("a", 80, {0, 0, 1}, 2)});
    const auto fit = fit_platt(ds);
    CHECK_FALSE(fit.warnings.empty());
    CHECK(calgate::apply(fit.map, ds.records()[1]).confidence > 0.99);
  }

  CHECK_THROWS_AS(fit_platt(Dataset(2, {})), ValidationError);
}

TEST_CASE("pava and fit_isotonic") {
  SUBCASE("hand example pools into 0.5") {
    const std::vector<double> conf{0.9, 0.8};
    const std::vector<int> correct{0, 1};
    const auto m = std::get<IsotonicMap>(fit_isotonic(conf, correct).map.variant());
    REQUIRE(m.breakpoints.size() == 1);
    CHECK(m.breakpoints[0].confidence == 0.8);
    CHECK(m.breakpoints[0].value == 0.5);
    CHECK(isotonic_lookup(m, 0.8) == 0.5);
    CHECK(isotonic_lookup(m, 0.9) == 0.5);
  }

  SUBCASE("all correct -> constant 1") {
    const auto m = std::get<IsotonicMap>(fit_isotonic(std::vector<double>{0.2, 0.5, 0.7}, std::vector<int>{1, 1, 1})
                                             .map.variant());
    REQUIRE(m.breakpoints.size() == 1);
    CHECK(m.breakpoints[0].value == 1.0);
  }

  SUBCASE("ties are merged before pooling") {
    const auto m = std::get<IsotonicMap>(
        fit_isotonic(std::vector<double>{0.3, 0.3, 0.3, 0.6}, std::vector<int>{1, 0, 0, 1}).map.variant());
    REQUIRE(m.breakpoints.size() == 2);
    CHECK(near(m.breakpoints[0].value, 1.0 / 3.0, 1e-15));
    CHECK(m.breakpoints[1].value == 1.0);
  }

  SUBCASE("random instances against the exhaustive oracle") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 1 + trial % 10;
      std::vector<double> y(n), w(n);
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = trial % 3 == 0 ? std::round(u(rng)) : u(rng);
        w[i] = 0.5 + u(rng);
      }
      const auto got = pava(y, w);
      const auto want = oracle::isotonic_exhaustive(y, w);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < n; ++i) CHECK(near(got[i], want[i], 1e-12));
    }
  }

  CHECK_THROWS_AS(pava(std::vector<double>{1.0}, std::vector<double>{0.0}), ValidationError);
  CHECK_THROWS_AS(fit_isotonic(Dataset(2, {})), ValidationError);
}

TEST_CASE("property: every map preserves argmax; fitted maps are monotone in the top score") {
  std::mt19937_64 rng(23);
  // Informative scores so every fitted map has a positive slope.
  SynthConfig sc;
  sc.k = 6;
  sc.n_streams = 4;
  sc.ticks_per_stream = 300;
  sc.overconfidence_scale = 2.0;
  sc.seed = 23;
  const auto val = generate(sc);
  const auto test_ds = test::random_dataset(rng, 6, 2, 150, 2.5);
  for (auto kind : {MapKind::identity, MapKind::temperature, MapKind::platt, MapKind::isotonic}) {
    const auto map = fit(kind, val).map;
    CHECK(map.kind() == kind);
    for (const auto& r : test_ds.records()) CHECK(calgate::apply(map, r).pred_class == argmax(r.logits));
  }
  // Monotone along a ray that only sharpens the top logit.
  for (auto kind : {MapKind::temperature, MapKind::platt, MapKind::isotonic}) {
    const auto map = fit(kind, val).map;
    double prev = -1.0;
    for (int i = 0; i <= 60; ++i) {
      const std::vector<double> l{0.3 + 0.1 * i, 0.0, -0.5, 0.2, -1.0, 0.0};
      const double c = calgate::apply(map, l).confidence;
      CHECK(c >= prev - 1e-15);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
      prev = c;
    }
  }
}

TEST_CASE("map JSON round trip") {
  const auto dir = test::scratch_dir("calibration");
  const std::vector<CalibrationMap> maps{CalibrationMap::identity(), CalibrationMap::temperature(1.0 / 3.0),
                                         CalibrationMap::platt(0.1, -0.7),
                                         CalibrationMap::isotonic({{0.1, 0.05}, {0.4, 1.0 / 3.0}, {0.9, 1.0}})};
  for (const auto& m : maps) {
    CHECK(map_from_json(map_to_json(m)) == m);
    save_map(m, dir / "m.json");
    CHECK(load_map(dir / "m.json") == m);
  }
  CHECK_THROWS_AS(map_from_json("{\"schema\":\"calgate.map/1\",\"kind\":\"bogus\"}"), ValidationError);
  CHECK_THROWS_AS(map_from_json("not json"), ValidationError);
  CHECK_THROWS_AS(load_map(dir / "missing.json"), IoError);
}
