#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace calgate {

/// Numerically stable softmax (max-subtraction). Throws on non-finite input.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

/// Indices of the k largest entries, ordered by value descending then index
/// ascending.
std::vector<int> top_k_indices(std::span<const double> values, int k);

/// Row-major T x D feature matrix with a binary validity mask per timestep.
class MaskedSequence {
 public:
  MaskedSequence(std::vector<double> features, std::size_t rows, std::size_t cols,
                 std::vector<std::uint8_t> mask);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t t) const { return {features_.data() + t * cols_, cols_}; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

 private:
  std::vector<double> features_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> mask_;
};

inline constexpr double kDefaultPoolEps = 1e-8;

/// sum_t u_t h_t / (sum_t u_t + eps)
std::vector<double> masked_mean_pool(const MaskedSequence& seq, double eps = kDefaultPoolEps);

/// (1 - epsilon) * y + epsilon / K
std::vector<double> label_smooth(std::span<const double> one_hot, double epsilon);

struct ClassWeights {
  std::vector<double> weights;
};

/// w_k = (N / K) / max(count_k, 1).
ClassWeights class_weights_from_freq(std::span<const std::int64_t> counts);

inline constexpr double kLogFloor = 1e-12;

struct CrossEntropy {
  double loss = 0.0;
  /// Set when some p_k with a nonzero target was below kLogFloor and was clamped.
  bool clamped = false;
};

/// -sum_k w_k * target_k * log p_k. Without `allow_clamp`, a probability
/// below the floor at a nonzero-target index is an error.
CrossEntropy weighted_cross_entropy(std::span<const double> probs, std::span<const double> target,
                                    const ClassWeights& weights, bool allow_clamp = false);

}  // namespace calgate
