#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "calgate/datamodel.hpp"

namespace calgate {

struct IdentityMap {
  bool operator==(const IdentityMap&) const = default;
};

struct TemperatureMap {
  double temperature = 1.0;
  bool operator==(const TemperatureMap&) const = default;
};

/// c = sigmoid(a * l_max + b)
struct PlattMap {
  double a = 0.0;
  double b = 0.0;
  bool operator==(const PlattMap&) const = default;
};

struct Breakpoint {
  double confidence = 0.0;
  double value = 0.0;
  bool operator==(const Breakpoint&) const = default;
};

/// Right-continuous step function over top-class confidence.
struct IsotonicMap {
  std::vector<Breakpoint> breakpoints;
  bool operator==(const IsotonicMap&) const = default;
};

enum class MapKind { identity, temperature, platt, isotonic };

std::string_view to_string(MapKind kind);
MapKind parse_map_kind(std::string_view name);

/// A fitted post-hoc transform from logits to top-class confidence.
class CalibrationMap {
 public:
  using Variant = std::variant<IdentityMap, TemperatureMap, PlattMap, IsotonicMap>;

  CalibrationMap() = default;
  /// Validates the per-kind invariants.
  CalibrationMap(Variant v);

  static CalibrationMap identity() { return CalibrationMap(IdentityMap{}); }
  static CalibrationMap temperature(double t) { return CalibrationMap(TemperatureMap{t}); }
  static CalibrationMap platt(double a, double b) { return CalibrationMap(PlattMap{a, b}); }
  static CalibrationMap isotonic(std::vector<Breakpoint> bps) { return CalibrationMap(IsotonicMap{std::move(bps)}); }

  MapKind kind() const { return static_cast<MapKind>(v_.index()); }
  const Variant& variant() const { return v_; }
  /// True when the map yields a full K-vector (identity, temperature).
  bool has_full_distribution() const { return kind() == MapKind::identity || kind() == MapKind::temperature; }

  bool operator==(const CalibrationMap&) const = default;

 private:
  Variant v_;
};

struct CalibratedPrediction {
  int pred_class = 0;
  double confidence = 0.0;
  std::optional<std::vector<double>> full_probs;
};

/// pred_class is argmax(logits) for every kind; only the confidence changes.
CalibratedPrediction apply(const CalibrationMap& map, std::span<const double> logits);
// Exact-match overload so std::apply is not picked up through ADL on vectors.
inline CalibratedPrediction apply(const CalibrationMap& map, const std::vector<double>& logits) {
  return calgate::apply(map, std::span<const double>(logits));
}
inline CalibratedPrediction apply(const CalibrationMap& map, const LogitRecord& r) {
  return calgate::apply(map, std::span<const double>(r.logits));
}

/// Calibrated top-class confidence for a probability vector that has no
/// logits of its own (e.g. a temporally smoothed distribution). Temperature
/// uses log p as logits; Platt uses log(p_max / (1 - p_max)) as a surrogate
/// for the top logit.
double calibrate_distribution(const CalibrationMap& map, std::span<const double> probs);

/// Step-function lookup shared by apply and calibrate_distribution.
double isotonic_lookup(const IsotonicMap& map, double confidence);

struct CalibrationFit {
  CalibrationMap map;
  std::vector<std::string> warnings;
};

inline constexpr double kTemperatureMin = 0.05;
inline constexpr double kTemperatureMax = 20.0;
inline constexpr double kLogTemperatureTol = 1e-4;

/// Mean NLL of softmax(logits / T) over the dataset.
double temperature_nll(const Dataset& ds, double temperature);

/// Golden-section search on log T over [log 0.05, log 20]. Warns when the
/// optimum sits at a bracket end.
CalibrationFit fit_temperature(const Dataset& val);

inline constexpr double kPlattSlopeLimit = 50.0;

/// Log-likelihood of correctness indicators under sigmoid(a * x + b).
double platt_log_likelihood(std::span<const double> x, std::span<const int> correct, double a, double b);

/// Newton-Raphson logistic fit of top-1 correctness on the top logit.
CalibrationFit fit_platt(const Dataset& val);
CalibrationFit fit_platt(std::span<const double> top_logits, std::span<const int> correct);

/// Weighted pool-adjacent-violators on an already ordered sequence; returns
/// one fitted value per input point.
std::vector<double> pava(std::span<const double> values, std::span<const double> weights);

/// Isotonic regression of top-1 correctness on max softmax probability.
CalibrationFit fit_isotonic(const Dataset& val);
CalibrationFit fit_isotonic(std::span<const double> confidences, std::span<const int> correct);

CalibrationFit fit(MapKind kind, const Dataset& val);

std::string map_to_json(const CalibrationMap& map);
CalibrationMap map_from_json(std::string_view text);
void save_map(const CalibrationMap& map, const std::filesystem::path& path);
CalibrationMap load_map(const std::filesystem::path& path);

}  // namespace calgate
