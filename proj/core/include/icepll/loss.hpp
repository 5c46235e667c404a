#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "icepll/errors.hpp"
#include "icepll/labels.hpp"

namespace icepll {

using Vec = std::vector<double>;

enum class LossKind { CategoricalCrossEntropy, Focal };

// Loss selector with focal parameters and optional per-class weights.
struct LossConfig {
  LossKind kind = LossKind::CategoricalCrossEntropy;
  double alpha = 1.0;   // weighting factor in [0, 1]
  double gamma = 0.0;   // focusing exponent, >= 0
  std::optional<Vec> class_weights;

  static LossConfig cce() { return {}; }
  static LossConfig focal(double alpha, double gamma) {
    return LossConfig{LossKind::Focal, alpha, gamma, std::nullopt};
  }
  std::string describe() const;
};

// Probabilities are clamped into [kProbEpsilon, 1 - kProbEpsilon] so the
// logarithms in the losses stay finite.
inline constexpr double kProbEpsilon = 1e-12;

// Numerically stable softmax (max-shifted), clamped as above.
Vec softmax(const Vec& logits);

// -sum_i log(p_i) * y_i, natural log. A zero label vector yields 0.
double cross_entropy(const Vec& p, const Vec& y);

// -sum_i alpha * (1 - p_i)^gamma * log(p_i) * y_i. With gamma = 0 and
// alpha = 1 this reproduces cross_entropy exactly.
double focal_loss(const Vec& p, const Vec& y, double alpha, double gamma);

// W_j = n / (l * n_j); throws EmptyClass when a class has no samples.
Vec class_weights(const std::vector<std::size_t>& counts);

// Loss under `config`; per-class weights, when present, multiply the
// corresponding summand inside the sum.
double loss_value(const Vec& p, const Vec& y, const LossConfig& config);

// dL/dz for the configured loss composed with softmax.
Vec loss_gradient(const Vec& logits, const Vec& y, const LossConfig& config);

// Arithmetic mean of per-sample losses.
double batch_loss(const std::vector<Vec>& logits_batch, const std::vector<Vec>& labels_batch,
                  const LossConfig& config);

}  // namespace icepll
