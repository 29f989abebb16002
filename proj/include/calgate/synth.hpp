#pragma once

#include <cstdint>
#include <string>

#include "calgate/datamodel.hpp"

namespace calgate {

struct SynthConfig {
  int k = 21;
  int n_streams = 20;
  int ticks_per_stream = 500;
  double base_accuracy = 0.40;
  /// Logit multiplier; 1 emits calibrated logits, s > 1 is recovered by T = s.
  double overconfidence_scale = 1.0;
  /// Expected label run length in ticks.
  double label_persistence = 25.0;
  /// Expected number of consecutive ticks that repeat one drawn prediction
  /// (overlapping sliding windows); 1 draws every tick independently.
  double prediction_persistence = 5.0;
  std::uint64_t seed = 0;
  std::int64_t tick_ms = 40;

  void validate() const;
};

/// Concentration of the per-tick intended distribution that makes the
/// expected top-class probability equal base_accuracy for k classes.
double concentration_for_accuracy(int k, double base_accuracy);

/// Streams of persistent, long-tailed labels with logits whose softmax is the
/// exact distribution the top-1 outcome was sampled from, then scaled by s.
Dataset generate(const SynthConfig& cfg);

/// s = 4, base accuracy 0.40, K = 21, 100 streams x 600 ticks.
SynthConfig uncalibrated_fixture_config(std::uint64_t seed);
Dataset generate_uncalibrated_fixture(std::uint64_t seed);

std::string synth_config_to_json(const SynthConfig& cfg);

}  // namespace calgate
