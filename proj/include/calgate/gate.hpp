#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace calgate {

enum class Mode { hold, act };

std::string_view to_string(Mode mode);

struct GateConfig {
  double tau_on = 0.55;
  double tau_off = 0.45;
  std::int64_t refractory_ms = 200;

  /// Hysteresis band of +/- half_band around tau, clipped to [0,1].
  static GateConfig around(double tau, double half_band = 0.05, std::int64_t refractory_ms = 200);
  /// tau_on == tau_off == tau, no refractory: plain `act iff c >= tau`.
  static GateConfig threshold(double tau) { return GateConfig{tau, tau, 0}; }

  void validate() const;
};

struct GateState {
  Mode mode = Mode::hold;
  std::optional<std::int64_t> last_transition_ms;
  std::optional<std::int64_t> last_step_ms;
};

struct GateEvent {
  std::int64_t t_ms = 0;
  double confidence_in = 0.0;
  Mode mode_out = Mode::hold;
  bool transitioned = false;
  bool suppressed_by_refractory = false;

  bool operator==(const GateEvent&) const = default;
};

/// One tick of the Act/Hold automaton. Entering Act needs c >= tau_on;
/// leaving it needs c < tau_off. Any transition within refractory_ms of the
/// previous one is dropped, not queued.
std::pair<GateState, GateEvent> step(const GateState& state, const GateConfig& config, std::int64_t t_ms,
                                     double confidence);

/// Owns one stream's automaton state.
class Gate {
 public:
  explicit Gate(GateConfig config) : config_(config) { config_.validate(); }

  GateEvent step(std::int64_t t_ms, double confidence);
  const GateState& state() const { return state_; }
  const GateConfig& config() const { return config_; }

 private:
  GateConfig config_;
  GateState state_;
};

struct TracePoint {
  std::int64_t t_ms = 0;
  double confidence = 0.0;
};

std::vector<GateEvent> run_gate(const GateConfig& config, const std::vector<TracePoint>& trace);

std::size_t count_transitions(const std::vector<GateEvent>& events);

/// t_ms,confidence,mode,transitioned,suppressed
std::string events_to_csv(const std::vector<GateEvent>& events);

}  // namespace calgate
