#include "calgate/gate.hpp"

#include <algorithm>
#include <cmath>

#include "calgate/datamodel.hpp"
#include "calgate/error.hpp"

namespace calgate {

std::string_view to_string(Mode mode) { return mode == Mode::act ? "Act" : "Hold"; }

GateConfig GateConfig::around(double tau, double half_band, std::int64_t refractory_ms) {
  GateConfig c{std::clamp(tau + half_band, 0.0, 1.0), std::clamp(tau - half_band, 0.0, 1.0), refractory_ms};
  c.validate();
  return c;
}

void GateConfig::validate() const {
  if (!(tau_on >= 0.0 && tau_on <= 1.0) || !(tau_off >= 0.0 && tau_off <= 1.0)) {
    throw ValidationError("gate thresholds must lie in [0,1]");
  }
  if (tau_on < tau_off) throw ValidationError("gate requires tau_on >= tau_off");
  if (refractory_ms < 0) throw ValidationError("refractory_ms must be nonnegative");
}

std::pair<GateState, GateEvent> step(const GateState& state, const GateConfig& config, std::int64_t t_ms,
                                     double confidence) {
  if (state.last_step_ms && t_ms <= *state.last_step_ms) {
    throw ValidationError("gate: non-monotone t_ms " + std::to_string(t_ms) + " after " +
                          std::to_string(*state.last_step_ms));
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw ValidationError("gate: confidence outside [0,1]");

  Mode desired = state.mode;
  if (state.mode == Mode::hold && confidence >= config.tau_on) {
    desired = Mode::act;
  } else if (state.mode == Mode::act && confidence < config.tau_off) {
    desired = Mode::hold;
  }

  GateState next = state;
  next.last_step_ms = t_ms;
  GateEvent ev{t_ms, confidence, state.mode, false, false};
  if (desired != state.mode) {
    const bool clear = !state.last_transition_ms || t_ms - *state.last_transition_ms >= config.refractory_ms;
    if (clear) {
      next.mode = desired;
      next.last_transition_ms = t_ms;
      ev.mode_out = desired;
      ev.transitioned = true;
    } else {
      ev.suppressed_by_refractory = true;
    }
  }
  return {next, ev};
}

GateEvent Gate::step(std::int64_t t_ms, double confidence) {
  auto [next, ev] = calgate::step(state_, config_, t_ms, confidence);
  state_ = next;
  return ev;
}

std::vector<GateEvent> run_gate(const GateConfig& config, const std::vector<TracePoint>& trace) {
  Gate gate(config);
  std::vector<GateEvent> events;
  events.reserve(trace.size());
  for (const auto& tp : trace) events.push_back(gate.step(tp.t_ms, tp.confidence));
  return events;
}

std::size_t count_transitions(const std::vector<GateEvent>& events) {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [](const GateEvent& e) { return e.transitioned; }));
}

std::string events_to_csv(const std::vector<GateEvent>& events) {
  std::string out = "t_ms,confidence,mode,transitioned,suppressed\n";
  for (const auto& e : events) {
    out += std::to_string(e.t_ms) + ',' + format_double(e.confidence_in) + ',' + std::string(to_string(e.mode_out)) +
           ',' + (e.transitioned ? "1" : "0") + ',' + (e.suppressed_by_refractory ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace calgate
