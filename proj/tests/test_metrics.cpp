#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "calgate/calibration.hpp"
#include "calgate/error.hpp"
#include "calgate/metrics.hpp"
#include "calgate/modelmath.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace calgate;
using calgate::test::near;
using calgate::test::rec;

namespace {

ProbRecord prob(std::vector<double> p, int label) { return ProbRecord{"s", 0, std::move(p), label}; }

}  // namespace

TEST_CASE("bin_index edges") {
  CHECK(bin_index(0.0, 15) == 0);
  CHECK(bin_index(1.0, 15) == 14);
  CHECK(bin_index(0.5, 10) == 5);
  CHECK(bin_index(0.0999999, 10) == 0);
  CHECK_THROWS_AS(bin_index(1.1, 10), ValidationError);
  CHECK_THROWS_AS(bin_index(0.5, 0), ValidationError);
}

TEST_CASE("ece examples") {
  SUBCASE("confidence 1.0, half correct -> 0.5") {
    const std::vector<double> c{1.0, 1.0, 1.0, 1.0};
    const std::vector<int> ok{1, 0, 1, 0};
    CHECK(near(ece(c, ok).ece, 0.5, 1e-12));
  }
  SUBCASE("perfectly calibrated per bin -> 0") {
    // 0.25 with one of four correct, 0.75 with three of four.
    const std::vector<double> c{0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75};
    const std::vector<int> ok{1, 0, 0, 0, 1, 1, 1, 0};
    CHECK(near(ece(c, ok).ece, 0.0, 1e-12));
  }
  SUBCASE("four predictions, 10 bins -> 0.25") {
    const std::vector<double> c{0.9, 0.9, 0.1, 0.1};
    const std::vector<int> ok{1, 0, 0, 0};
    const auto r = ece(c, ok, 10);
    CHECK(near(r.ece, 0.25, 1e-12));
    REQUIRE(r.bins.size() == 10);
    CHECK(r.bins[9].count == 2);
    CHECK(r.bins[1].count == 2);
    CHECK(r.bins[0].count == 0);
  }
  SUBCASE("prediction overload agrees") {
    std::vector<CalibratedPrediction> preds{{0, 0.9, {}}, {1, 0.9, {}}, {0, 0.1, {}}, {1, 0.1, {}}};
    const std::vector<int> labels{0, 0, 1, 0};
    CHECK(near(ece(preds, labels, 10).ece, 0.25, 1e-12));
  }
  CHECK_THROWS_AS(ece(std::vector<double>{}, std::vector<int>{}), ValidationError);
  CHECK_THROWS_AS(ece(std::vector<double>{0.5}, std::vector<int>{1}, 0), ValidationError);
}

TEST_CASE("property: ece matches the definition oracle and stays in [0,1]") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial * 3;
    std::vector<double> c(n);
    std::vector<int> ok(n);
    for (int i = 0; i < n; ++i) {
      c[i] = trial % 4 == 0 ? std::round(u(rng) * 10) / 10 : u(rng);  // lands on edges too
      ok[i] = u(rng) < c[i];
    }
    const int bins = 1 + trial % 20;
    const auto r = ece(c, ok, bins);
    CHECK(near(r.ece, oracle::ece_by_definition(c, ok, bins), 1e-12));
    CHECK(r.ece >= 0.0);
    CHECK(r.ece <= 1.0);
    std::int64_t total = 0;
    for (const auto& b : r.bins) total += b.count;
    CHECK(total == n);
  }
}

TEST_CASE("nll and brier closed forms") {
  CHECK(near(nll(std::vector<ProbRecord>{prob({1, 0}, 0), prob({0, 1}, 1)}), 0.0, 1e-12));
  CHECK(near(nll(std::vector<ProbRecord>{prob(std::vector<double>(21, 1.0 / 21), 3)}), std::log(21.0), 1e-12));
  const double e1 = std::exp(-1.0);
  CHECK(near(nll(std::vector<ProbRecord>{prob({e1, 1 - e1}, 0)}), 1.0, 1e-12));
  CHECK(std::isfinite(nll(std::vector<ProbRecord>{prob({0, 1}, 0)})));

  CHECK(near(brier(std::vector<ProbRecord>{prob({1, 0}, 0)}), 0.0, 1e-12));
  CHECK(near(brier(std::vector<ProbRecord>{prob({0.5, 0.5}, 0)}), 0.5, 1e-12));
  CHECK(near(brier(std::vector<ProbRecord>{prob({0, 1}, 0)}), 2.0, 1e-12));

  CHECK_THROWS_AS(nll(std::vector<ProbRecord>{}), ValidationError);
  CHECK_THROWS_AS(brier(std::vector<ProbRecord>{prob({0.5, 0.5}, 2)}), ValidationError);
}

TEST_CASE("topk accuracy") {
  const std::vector<LogitRecord> three{rec("a", 0, {3, 2, 1}, 1), rec("a", 40, {1, 2, 3}, 0),
                                       rec("a", 80, {0, 5, 1}, 1)};
  CHECK(near(topk_accuracy(three, 2), 2.0 / 3.0, 1e-15));
  CHECK(near(topk_accuracy(three, 1), 1.0 / 3.0, 1e-15));
  CHECK(topk_accuracy(three, 3) == 1.0);
  CHECK(topk_accuracy(std::vector<LogitRecord>{rec("a", 0, {0, 4, 1}, 1)}, 1) == 1.0);
  // Ties go to the lowest index.
  CHECK(topk_accuracy(std::vector<LogitRecord>{rec("a", 0, {1, 1}, 1)}, 1) == 0.0);
  CHECK_THROWS_AS(topk_accuracy(three, 4), ValidationError);
  CHECK_THROWS_AS(topk_accuracy(std::vector<LogitRecord>{}, 1), ValidationError);
}

TEST_CASE("report") {
  std::mt19937_64 rng(2);
  const auto ds = test::random_dataset(rng, 4, 3, 50);

  const auto id = report(ds, CalibrationMap::identity());
  CHECK(id.map_kind == MapKind::identity);
  CHECK(id.n == static_cast<std::int64_t>(ds.size()));
  REQUIRE(id.nll);
  REQUIRE(id.brier);
  CHECK(id.top5 == 1.0);  // K = 4 < 5
  CHECK(id.top1 == topk_accuracy(ds, 1));

  const auto iso = report(ds, fit_isotonic(ds).map);
  CHECK_FALSE(iso.nll);
  CHECK_FALSE(iso.brier);
  CHECK(iso.top1 == id.top1);
  CHECK_FALSE(report(ds, CalibrationMap::platt(1, 0)).nll);

  const auto j = nlohmann::json::parse(report_to_json(iso));
  CHECK(j["map_kind"] == "isotonic");
  CHECK(j["nll"].is_null());
  CHECK(j["bins"].size() == static_cast<std::size_t>(kDefaultBins));

  const auto csv = bins_to_csv(id.bins);
  CHECK(csv.rfind("bin_lo,bin_hi,count,mean_conf,acc\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == kDefaultBins + 1);
}
