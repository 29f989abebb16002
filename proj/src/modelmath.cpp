#include "calgate/modelmath.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "calgate/error.hpp"

namespace calgate {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ValidationError(std::string(what) + ": non-finite input");
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("softmax: empty input");
  require_finite(logits, "softmax");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("log_softmax: empty input");
  require_finite(logits, "log_softmax");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw ValidationError("argmax: empty input");
  // max_element returns the first maximum.
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<int> top_k_indices(std::span<const double> values, int k) {
  const int n = static_cast<int>(values.size());
  if (k < 1 || k > n) throw ValidationError("top_k: k must be in [1, " + std::to_string(n) + "]");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  });
  idx.resize(k);
  return idx;
}

MaskedSequence::MaskedSequence(std::vector<double> features, std::size_t rows, std::size_t cols,
                               std::vector<std::uint8_t> mask)
    : features_(std::move(features)), rows_(rows), cols_(cols), mask_(std::move(mask)) {
  if (features_.size() != rows_ * cols_) {
    throw ValidationError("masked sequence: feature buffer has " + std::to_string(features_.size()) +
                          " entries, expected " + std::to_string(rows_ * cols_));
  }
  if (mask_.size() != rows_) {
    throw ValidationError("masked sequence: mask length " + std::to_string(mask_.size()) + " != T=" +
                          std::to_string(rows_));
  }
  for (auto u : mask_) {
    if (u > 1) throw ValidationError("masked sequence: mask entries must be 0 or 1");
  }
}

std::vector<double> masked_mean_pool(const MaskedSequence& seq, double eps) {
  if (!(eps >= 0.0)) throw ValidationError("masked_mean_pool: eps must be >= 0");
  std::vector<double> acc(seq.cols(), 0.0);
  double valid = 0.0;
  for (std::size_t t = 0; t < seq.rows(); ++t) {
    if (!seq.mask()[t]) continue;
    valid += 1.0;
    auto h = seq.row(t);
    for (std::size_t d = 0; d < h.size(); ++d) acc[d] += h[d];
  }
  const double denom = valid + eps;
  if (denom == 0.0) return acc;  // all-masked with eps = 0: numerator is zero too
  for (double& x : acc) x /= denom;
  return acc;
}

std::vector<double> label_smooth(std::span<const double> one_hot, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("label_smooth: epsilon must lie in [0,1]");
  if (one_hot.size() < 2) throw ValidationError("label_smooth: need K >= 2");
  int ones = 0;
  for (double y : one_hot) {
    if (y == 1.0) {
      ++ones;
    } else if (y != 0.0) {
      throw ValidationError("label_smooth: target is not one-hot");
    }
  }
  if (ones != 1) throw ValidationError("label_smooth: target is not one-hot");
  const double k = static_cast<double>(one_hot.size());
  std::vector<double> out(one_hot.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - epsilon) * one_hot[i] + epsilon / k;
  return out;
}

ClassWeights class_weights_from_freq(std::span<const std::int64_t> counts) {
  if (counts.empty()) throw ValidationError("class_weights: empty counts");
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c < 0) throw ValidationError("class_weights: counts must be nonnegative");
    total += c;
  }
  if (total == 0) throw ValidationError("class_weights: all counts are zero");
  const double scale = static_cast<double>(total) / static_cast<double>(counts.size());
  ClassWeights w;
  w.weights.reserve(counts.size());
  for (auto c : counts) w.weights.push_back(scale / static_cast<double>(std::max<std::int64_t>(c, 1)));
  return w;
}

CrossEntropy weighted_cross_entropy(std::span<const double> probs, std::span<const double> target,
                                    const ClassWeights& weights, bool allow_clamp) {
  if (probs.size() != target.size() || probs.size() != weights.weights.size()) {
    throw ValidationError("weighted_cross_entropy: dimension mismatch");
  }
  for (double w : weights.weights) {
    if (!(w > 0.0)) throw ValidationError("weighted_cross_entropy: weights must be positive");
  }
  CrossEntropy ce;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (target[k] == 0.0) continue;
    double p = probs[k];
    if (!(p >= kLogFloor)) {
      if (!allow_clamp) {
        throw ValidationError("weighted_cross_entropy: zero probability at target class " + std::to_string(k));
      }
      p = kLogFloor;
      ce.clamped = true;
    }
    ce.loss -= weights.weights[k] * target[k] * std::log(p);
  }
  return ce;
}

}  // namespace calgate
