#pragma once

#include <optional>
#include <span>
#include <vector>

#include "calgate/calibration.hpp"
#include "calgate/datamodel.hpp"
#include "calgate/gate.hpp"

namespace calgate {

inline constexpr double kDefaultAlpha = 0.2;
inline constexpr int kDefaultTopKFilter = 3;

/// Where calibration sits relative to temporal smoothing.
enum class CalibrationOrder {
  /// Temperature/identity maps rescale logits first and the calibrated
  /// distribution is smoothed; top-class-only maps fall back to smoothing first.
  automatic,
  /// Smooth raw probabilities, then calibrate the smoothed top class.
  smooth_first,
};

struct SimConfig {
  double alpha = kDefaultAlpha;
  int k_filter = kDefaultTopKFilter;
  GateConfig gate;
  CalibrationMap map;
  /// When set, simulate_sweep uses tau +/- half_band instead of tau_on == tau_off == tau.
  std::optional<double> half_band;
  CalibrationOrder order = CalibrationOrder::automatic;

  void validate(int k) const;
};

struct TickLog {
  GateEvent event;
  int candidate = 0;
  int label = 0;
  bool eligible = false;
};

struct SimResult {
  double tau = 0.0;
  double tau_on = 0.0;
  double tau_off = 0.0;
  std::int64_t ticks = 0;
  std::int64_t act_ticks = 0;
  std::int64_t correct_act_ticks = 0;
  std::int64_t transitions = 0;
  std::int64_t skipped_streams = 0;
  std::vector<TickLog> per_tick_trace;

  double coverage() const { return ticks ? static_cast<double>(act_ticks) / static_cast<double>(ticks) : 0.0; }
  /// Absent when the gate never acted.
  std::optional<double> act_only_precision() const {
    if (act_ticks == 0) return std::nullopt;
    return static_cast<double>(correct_act_ticks) / static_cast<double>(act_ticks);
  }

  /// Pools tick counts; order-independent.
  SimResult& operator+=(const SimResult& other);
};

/// alpha * current + (1 - alpha) * prev; passes `current` through when there
/// is no history. Renormalizes only if the sum drifts beyond 1e-12.
std::vector<double> smooth_step(const std::optional<std::vector<double>>& prev, std::span<const double> current,
                                double alpha);

/// Replays one stream through smoothing, the top-k filter, calibration and
/// the gate.
SimResult simulate_stream(const StreamSequence& seq, const SimConfig& cfg, bool keep_trace = false);

/// Runs every stream at each tau and pools the tick counts.
std::vector<SimResult> simulate_sweep(const Dataset& ds, const SimConfig& base, const std::vector<double>& taus);

struct LatencyStats {
  double mean_us = 0.0;
  double p99_us = 0.0;
  std::int64_t n_ticks = 0;
};

/// Wall-clock cost of one full tick on random logits with k classes.
LatencyStats benchmark_tick_latency(const SimConfig& cfg, int k, std::int64_t n_ticks, std::uint64_t seed = 1);

/// tau,coverage,precision,transitions (tau = tau_on)
std::string sim_to_csv(const std::vector<SimResult>& results);
/// t_ms,confidence,mode,transitioned,suppressed,candidate,label,eligible
std::string trace_to_csv(const std::vector<TickLog>& trace);

}  // namespace calgate
