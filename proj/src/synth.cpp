#include "calgate/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <json.hpp>

#include "calgate/error.hpp"
#include "calgate/modelmath.hpp"

namespace calgate {

namespace {

constexpr double kLogitNoise = 0.1;
constexpr int kTuningSamples = 10000;
constexpr std::uint64_t kTuningSeed = 0x5eedcafeULL;

// Log-probabilities over slots: log_softmax(beta * g + noise).
void draw_slot_logprobs(std::mt19937_64& rng, double beta, std::vector<double>& z) {
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double& x : z) x = beta * unit(rng) + kLogitNoise * unit(rng);
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double x : z) sum += std::exp(x - m);
  const double lse = m + std::log(sum);
  for (double& x : z) x -= lse;
}

double mean_top_probability(int k, double beta) {
  std::mt19937_64 rng(kTuningSeed);
  std::vector<double> z(k);
  double total = 0.0;
  for (int i = 0; i < kTuningSamples; ++i) {
    draw_slot_logprobs(rng, beta, z);
    total += std::exp(*std::max_element(z.begin(), z.end()));
  }
  return total / kTuningSamples;
}

}  // namespace

void SynthConfig::validate() const {
  if (k < 2) throw ValidationError("synth: k must be >= 2");
  if (n_streams < 1) throw ValidationError("synth: n_streams must be >= 1");
  if (ticks_per_stream < 1) throw ValidationError("synth: ticks_per_stream must be >= 1");
  if (!(base_accuracy > 1.0 / k && base_accuracy < 1.0)) {
    throw ValidationError("synth: base_accuracy must lie in (1/K, 1) = (" + std::to_string(1.0 / k) + ", 1)");
  }
  if (!(overconfidence_scale >= 1.0) || !std::isfinite(overconfidence_scale)) {
    throw ValidationError("synth: overconfidence scale must be >= 1");
  }
  if (!(label_persistence >= 1.0)) throw ValidationError("synth: label persistence must be >= 1 tick");
  if (!(prediction_persistence >= 1.0)) throw ValidationError("synth: prediction persistence must be >= 1 tick");
  if (tick_ms <= 0) throw ValidationError("synth: tick_ms must be positive");
}

double concentration_for_accuracy(int k, double base_accuracy) {
  double lo = 0.0;
  double hi = 1.0;
  while (mean_top_probability(k, hi) < base_accuracy && hi < 64.0) hi *= 2.0;
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mean_top_probability(k, mid) < base_accuracy ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const int k = cfg.k;
  const double beta = concentration_for_accuracy(k, cfg.base_accuracy);

  // Zipf-like class marginal: p(c) proportional to 1 / (c + 1).
  std::vector<double> marginal(k);
  for (int c = 0; c < k; ++c) marginal[c] = 1.0 / (c + 1);

  std::vector<LogitRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.n_streams) * cfg.ticks_per_stream);
  std::vector<double> z(k);
  std::vector<double> slot_weights(k);
  std::vector<int> others(k - 1);
  for (int s = 0; s < cfg.n_streams; ++s) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::mt19937_64 rng(seq);
    std::discrete_distribution<int> pick_label(marginal.begin(), marginal.end());
    std::geometric_distribution<int> run_length(1.0 / cfg.label_persistence);

    char id[32];
    std::snprintf(id, sizeof id, "s%04d", s);
    std::geometric_distribution<int> hold_length(1.0 / cfg.prediction_persistence);
    int label = 0;
    int remaining = 0;
    int hold = 0;
    for (int t = 0; t < cfg.ticks_per_stream; ++t) {
      if (remaining == 0) {
        label = pick_label(rng);
        remaining = run_length(rng) + 1;
        hold = 0;
      }
      --remaining;
      if (hold > 0) {
        --hold;
        LogitRecord r = records.back();
        r.t_ms = static_cast<std::int64_t>(t) * cfg.tick_ms;
        records.push_back(std::move(r));
        continue;
      }
      hold = hold_length(rng);

      draw_slot_logprobs(rng, beta, z);
      // The label lands in slot j with probability exp(z[j]), so the
      // emitted softmax is exactly the distribution the outcome came from.
      for (int j = 0; j < k; ++j) slot_weights[j] = std::exp(z[j]);
      std::discrete_distribution<int> pick_slot(slot_weights.begin(), slot_weights.end());
      const int slot = pick_slot(rng);

      std::iota(others.begin(), others.end(), 0);
      for (int& c : others) c += c >= label ? 1 : 0;
      std::shuffle(others.begin(), others.end(), rng);

      LogitRecord r;
      r.stream_id = id;
      r.t_ms = static_cast<std::int64_t>(t) * cfg.tick_ms;
      r.label = label;
      r.logits.assign(k, 0.0);
      int next_other = 0;
      for (int j = 0; j < k; ++j) {
        const int cls = j == slot ? label : others[next_other++];
        r.logits[cls] = cfg.overconfidence_scale * z[j];
      }
      records.push_back(std::move(r));
    }
  }
  return Dataset(k, std::move(records));
}

SynthConfig uncalibrated_fixture_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.k = 21;
  cfg.n_streams = 100;
  cfg.ticks_per_stream = 600;
  cfg.base_accuracy = 0.40;
  cfg.overconfidence_scale = 4.0;
  cfg.seed = seed;
  return cfg;
}

Dataset generate_uncalibrated_fixture(std::uint64_t seed) { return generate(uncalibrated_fixture_config(seed)); }

std::string synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::json j;
  j["schema"] = "calgate.synth/1";
  j["k"] = cfg.k;
  j["n_streams"] = cfg.n_streams;
  j["ticks_per_stream"] = cfg.ticks_per_stream;
  j["base_accuracy"] = cfg.base_accuracy;
  j["overconfidence_scale"] = cfg.overconfidence_scale;
  j["label_persistence"] = cfg.label_persistence;
  j["prediction_persistence"] = cfg.prediction_persistence;
  j["seed"] = cfg.seed;
  j["tick_ms"] = cfg.tick_ms;
  j["logit_noise_sigma"] = kLogitNoise;
  j["concentration"] = concentration_for_accuracy(cfg.k, cfg.base_accuracy);
  return j.dump(2) + "\n";
}

}  // namespace calgate
