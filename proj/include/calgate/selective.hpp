#pragma once

#include <optional>
#include <vector>

#include "calgate/calibration.hpp"
#include "calgate/datamodel.hpp"
#include "calgate/metrics.hpp"

namespace calgate {

struct SweepPoint {
  double tau = 0.0;
  double coverage = 0.0;
  /// Absent when no record reaches tau.
  std::optional<double> aop;
  double region_epsilon = 0.0;
  /// AOP >= tau - region_epsilon; vacuously true at zero coverage.
  bool bound_satisfied = true;
};

struct SweepCurve {
  std::vector<SweepPoint> points;
  MapKind map_kind = MapKind::identity;
};

/// 0.00, 0.05, ..., 0.95, 0.99
std::vector<double> default_tau_grid();

/// Max |acc_b - conf_b| over occupied bins whose range reaches into [tau, 1].
double region_epsilon(const std::vector<ReliabilityBin>& bins, double tau);

/// Per-window selective prediction: act on records with calibrated
/// confidence >= tau.
SweepCurve sweep(const Dataset& ds, const CalibrationMap& map, const std::vector<double>& taus,
                 int n_bins = kDefaultBins);

/// Largest-coverage point whose AOP reaches target_precision.
SweepPoint operating_point(const SweepCurve& curve, double target_precision);

/// tau,coverage,aop,epsilon,bound_ok
std::string curve_to_csv(const SweepCurve& curve);

}  // namespace calgate
