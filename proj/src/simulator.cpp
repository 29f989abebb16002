#include "calgate/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "calgate/error.hpp"
#include "calgate/modelmath.hpp"

namespace calgate {

void SimConfig::validate(int k) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0,1]");
  if (k_filter < 1 || k_filter > k) {
    throw ValidationError("top-k filter must lie in [1, K=" + std::to_string(k) + "]");
  }
  gate.validate();
  if (half_band && !(*half_band >= 0.0)) throw ValidationError("hysteresis half-band must be >= 0");
}

SimResult& SimResult::operator+=(const SimResult& other) {
  ticks += other.ticks;
  act_ticks += other.act_ticks;
  correct_act_ticks += other.correct_act_ticks;
  transitions += other.transitions;
  skipped_streams += other.skipped_streams;
  per_tick_trace.insert(per_tick_trace.end(), other.per_tick_trace.begin(), other.per_tick_trace.end());
  return *this;
}

std::vector<double> smooth_step(const std::optional<std::vector<double>>& prev, std::span<const double> current,
                                double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("smooth_step: alpha must lie in (0,1]");
  double csum = 0.0;
  for (double x : current) {
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("smooth_step: current is not a distribution");
    csum += x;
  }
  if (current.empty() || std::abs(csum - 1.0) > 1e-9) {
    throw ValidationError("smooth_step: current does not sum to 1");
  }
  if (!prev) return {current.begin(), current.end()};
  if (prev->size() != current.size()) throw ValidationError("smooth_step: dimension mismatch");

  std::vector<double> out(current.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = alpha * current[i] + (1.0 - alpha) * (*prev)[i];
    sum += out[i];
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    for (double& x : out) x /= sum;
  }
  return out;
}

namespace {

// Per-stream pipeline state shared by the replay and the latency benchmark.
class TickPipeline {
 public:
  explicit TickPipeline(const SimConfig& cfg)
      : cfg_(cfg),
        gate_(cfg.gate),
        calibrate_first_(cfg.order == CalibrationOrder::automatic && cfg.map.has_full_distribution()) {}

  TickLog tick(std::int64_t t_ms, std::span<const double> logits, int label) {
    // Calibrating first yields the calibrated distribution directly; the top
    // class of the smoothed vector is then already the gate confidence.
    const auto p = calibrate_first_ ? *apply(cfg_.map, logits).full_probs : softmax(logits);
    smoothed_ = smooth_step(smoothed_, p, cfg_.alpha);
    TickLog log;
    log.label = label;
    log.candidate = argmax(*smoothed_);
    const auto top = top_k_indices(p, cfg_.k_filter);
    log.eligible = std::find(top.begin(), top.end(), log.candidate) != top.end();
    double conf = 0.0;
    if (log.eligible) {
      conf = calibrate_first_ ? (*smoothed_)[log.candidate] : calibrate_distribution(cfg_.map, *smoothed_);
    }
    log.event = gate_.step(t_ms, std::clamp(conf, 0.0, 1.0));
    return log;
  }

 private:
  const SimConfig& cfg_;
  Gate gate_;
  bool calibrate_first_;
  std::optional<std::vector<double>> smoothed_;
};

}  // namespace

SimResult simulate_stream(const StreamSequence& seq, const SimConfig& cfg, bool keep_trace) {
  SimResult res;
  res.tau = cfg.gate.tau_on;
  res.tau_on = cfg.gate.tau_on;
  res.tau_off = cfg.gate.tau_off;
  if (seq.records.empty()) {
    res.skipped_streams = 1;
    return res;
  }
  cfg.validate(static_cast<int>(seq.records.front().logits.size()));

  TickPipeline pipe(cfg);
  for (const auto& r : seq.records) {
    const auto log = pipe.tick(r.t_ms, r.logits, r.label);
    ++res.ticks;
    if (log.event.transitioned) ++res.transitions;
    if (log.event.mode_out == Mode::act) {
      ++res.act_ticks;
      if (log.candidate == log.label) ++res.correct_act_ticks;
    }
    if (keep_trace) res.per_tick_trace.push_back(log);
  }
  return res;
}

std::vector<SimResult> simulate_sweep(const Dataset& ds, const SimConfig& base, const std::vector<double>& taus) {
  if (ds.empty()) throw ValidationError("simulate_sweep: empty dataset");
  base.validate(ds.k());
  const auto streams = streams_of(ds);
  std::vector<SimResult> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("simulate_sweep: tau outside [0,1]");
    SimConfig cfg = base;
    cfg.gate = base.half_band ? GateConfig::around(tau, *base.half_band, base.gate.refractory_ms)
                              : GateConfig{tau, tau, base.gate.refractory_ms};
    SimResult total;
    total.tau = tau;
    total.tau_on = cfg.gate.tau_on;
    total.tau_off = cfg.gate.tau_off;
    for (const auto& s : streams) total += simulate_stream(s, cfg);
    out.push_back(std::move(total));
  }
  return out;
}

LatencyStats benchmark_tick_latency(const SimConfig& cfg, int k, std::int64_t n_ticks, std::uint64_t seed) {
  if (n_ticks < 1000) throw ValidationError("benchmark needs at least 1000 ticks");
  cfg.validate(k);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 2.0);
  // Pre-draw inputs so the timed region holds only the pipeline.
  constexpr std::size_t kPool = 4096;
  std::vector<std::vector<double>> pool(kPool, std::vector<double>(k));
  for (auto& v : pool) {
    for (double& x : v) x = noise(rng);
  }

  TickPipeline pipe(cfg);
  std::vector<double> us(static_cast<std::size_t>(n_ticks));
  volatile int sink = 0;
  for (std::int64_t i = 0; i < n_ticks; ++i) {
    const auto& logits = pool[static_cast<std::size_t>(i) % kPool];
    const auto t0 = std::chrono::steady_clock::now();
    const auto log = pipe.tick(i * 40, logits, 0);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + log.candidate;
    us[static_cast<std::size_t>(i)] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }

  LatencyStats stats;
  stats.n_ticks = n_ticks;
  stats.mean_us = std::accumulate(us.begin(), us.end(), 0.0) / static_cast<double>(us.size());
  const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(us.size()))) - 1;
  std::nth_element(us.begin(), us.begin() + static_cast<std::ptrdiff_t>(idx), us.end());
  stats.p99_us = us[idx];
  return stats;
}

std::string sim_to_csv(const std::vector<SimResult>& results) {
  std::string out = "tau,coverage,precision,transitions\n";
  for (const auto& r : results) {
    const auto prec = r.act_only_precision();
    out += format_double(r.tau) + ',' + format_double(r.coverage()) + ',' + (prec ? format_double(*prec) : "") + ',' +
           std::to_string(r.transitions) + '\n';
  }
  return out;
}

std::string trace_to_csv(const std::vector<TickLog>& trace) {
  std::string out = "t_ms,confidence,mode,transitioned,suppressed,candidate,label,eligible\n";
  for (const auto& t : trace) {
    const auto& e = t.event;
    out += std::to_string(e.t_ms) + ',' + format_double(e.confidence_in) + ',' + std::string(to_string(e.mode_out)) +
           ',' + (e.transitioned ? "1" : "0") + ',' + (e.suppressed_by_refractory ? "1" : "0") + ',' +
           std::to_string(t.candidate) + ',' + std::to_string(t.label) + ',' + (t.eligible ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace calgate
