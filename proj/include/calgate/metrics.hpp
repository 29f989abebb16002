#pragma once

#include <optional>
#include <span>
#include <vector>

#include "calgate/calibration.hpp"
#include "calgate/datamodel.hpp"

namespace calgate {

inline constexpr int kDefaultBins = 15;

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::int64_t count = 0;
  double mean_confidence = 0.0;
  double empirical_accuracy = 0.0;
};

struct EceResult {
  double ece = 0.0;
  std::vector<ReliabilityBin> bins;
};

/// Equal-width bin index: [b/n, (b+1)/n), with the last bin closed at 1.
int bin_index(double confidence, int n_bins);

/// Binned top-class calibration error. Empty bins are emitted with count 0
/// and contribute nothing.
EceResult ece(std::span<const CalibratedPrediction> preds, std::span<const int> labels, int n_bins = kDefaultBins);
EceResult ece(std::span<const double> confidences, std::span<const int> correct, int n_bins = kDefaultBins);

/// Mean -log p_y with a 1e-12 floor.
double nll(std::span<const ProbRecord> records);
/// Mean sum_k (p_k - 1{k=y})^2, range [0, 2].
double brier(std::span<const ProbRecord> records);
double topk_accuracy(std::span<const LogitRecord> records, int k);
inline double topk_accuracy(const Dataset& ds, int k) { return topk_accuracy(ds.records(), k); }

struct ReliabilityReport {
  MapKind map_kind = MapKind::identity;
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  std::optional<double> nll;
  std::optional<double> brier;
  double top1 = 0.0;
  double top5 = 0.0;
  std::int64_t n = 0;
};

/// NLL and Brier are filled only for maps that produce a full distribution.
ReliabilityReport report(const Dataset& ds, const CalibrationMap& map, int n_bins = kDefaultBins);

std::string report_to_json(const ReliabilityReport& r);
/// bin_lo,bin_hi,count,mean_conf,acc
std::string bins_to_csv(const std::vector<ReliabilityBin>& bins);

}  // namespace calgate
