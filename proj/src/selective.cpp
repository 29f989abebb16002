#include "calgate/selective.hpp"

#include <algorithm>
#include <cmath>

#include "calgate/error.hpp"

namespace calgate {

std::vector<double> default_tau_grid() {
  std::vector<double> taus;
  for (int i = 0; i <= 19; ++i) taus.push_back(i / 20.0);
  taus.push_back(0.99);
  return taus;
}

double region_epsilon(const std::vector<ReliabilityBin>& bins, double tau) {
  double eps = 0.0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const auto& bin = bins[b];
    if (bin.count == 0) continue;
    const bool last = b + 1 == bins.size();
    if (bin.hi > tau || (last && tau <= 1.0)) {
      eps = std::max(eps, std::abs(bin.empirical_accuracy - bin.mean_confidence));
    }
  }
  return eps;
}

SweepCurve sweep(const Dataset& ds, const CalibrationMap& map, const std::vector<double>& taus, int n_bins) {
  if (ds.empty()) throw ValidationError("sweep: empty dataset");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] >= 0.0 && taus[i] <= 1.0)) throw ValidationError("sweep: tau outside [0,1]");
    if (i > 0 && !(taus[i] > taus[i - 1])) throw ValidationError("sweep: taus must be strictly increasing");
  }

  std::vector<double> conf;
  std::vector<int> correct;
  conf.reserve(ds.size());
  correct.reserve(ds.size());
  for (const auto& r : ds.records()) {
    const auto p = apply(map, r);
    conf.push_back(p.confidence);
    correct.push_back(p.pred_class == r.label ? 1 : 0);
  }
  const auto bins = ece(conf, correct, n_bins).bins;

  SweepCurve curve;
  curve.map_kind = map.kind();
  const double n = static_cast<double>(ds.size());
  for (double tau : taus) {
    std::int64_t acted = 0;
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      if (conf[i] >= tau) {
        ++acted;
        hits += correct[i];
      }
    }
    SweepPoint pt;
    pt.tau = tau;
    pt.coverage = static_cast<double>(acted) / n;
    pt.region_epsilon = region_epsilon(bins, tau);
    if (acted > 0) {
      pt.aop = static_cast<double>(hits) / static_cast<double>(acted);
      pt.bound_satisfied = *pt.aop >= tau - pt.region_epsilon;
    }
    curve.points.push_back(pt);
  }
  return curve;
}

SweepPoint operating_point(const SweepCurve& curve, double target_precision) {
  if (curve.points.empty()) throw ValidationError("operating_point: empty curve");
  const SweepPoint* best = nullptr;
  for (const auto& pt : curve.points) {
    if (!pt.aop || *pt.aop < target_precision) continue;
    if (!best || pt.coverage > best->coverage) best = &pt;
  }
  if (!best) {
    throw ValidationError("operating_point: no sweep point reaches precision " + std::to_string(target_precision));
  }
  return *best;
}

std::string curve_to_csv(const SweepCurve& curve) {
  std::string out = "tau,coverage,aop,epsilon,bound_ok\n";
  for (const auto& p : curve.points) {
    out += format_double(p.tau) + ',' + format_double(p.coverage) + ',' + (p.aop ? format_double(*p.aop) : "") + ',' +
           format_double(p.region_epsilon) + ',' + (p.bound_satisfied ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace calgate
