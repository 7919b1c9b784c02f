#pragma once

#include <span>

#include "sftmn/autograd.hpp"
#include "sftmn/featureio.hpp"

namespace sftmn {

struct LossConfig {
  double lambda = 0.15;  // smoothing weight
  double tau = 4.0;      // truncation threshold on log-probability jumps
  // Treat frame t−1 as a constant target in the smoothing term. Disabling it
  // makes the loss an ordinary differentiable function of the logits.
  bool stop_gradient_previous = true;

  void validate() const;
};

// Mean over frames of −log softmax(logits)[label_t, t].
Var classification_loss(const Var& logits, std::span<const int> labels);
double classification_loss(const Tensor& logits, std::span<const int> labels);

/// Mean over classes and adjacent frame pairs of min(|Δ|, τ)², with
/// Δ = log p[c,t] − log p[c,t−1]. Zero when T = 1.
Var smoothing_loss(const Var& logits, const LossConfig& config);
double smoothing_loss(const Tensor& logits, const LossConfig& config);

// Smoothing value where the frame t−1 terms come from `previous_source`
// instead of `logits`. With previous_source held fixed, its derivative in
// `logits` is the gradient the stop-gradient variant backpropagates.
double smoothing_loss(const Tensor& logits, const Tensor& previous_source,
                      const LossConfig& config);

// classification + λ·smoothing for one stage.
Var stage_loss(const Var& logits, std::span<const int> labels, const LossConfig& config);
double stage_loss(const Tensor& logits, std::span<const int> labels, const LossConfig& config);

/// Sum of stage losses over every combined output (initial plus each
/// refinement stage), equally weighted.
Var total_loss(std::span<const Var> combined, std::span<const int> labels,
               const LossConfig& config);
double total_loss(std::span<const Tensor> combined, std::span<const int> labels,
                  const LossConfig& config);

inline Var total_loss(std::span<const Var> combined, const LabelSequence& labels,
                      const LossConfig& config) {
  return total_loss(combined, std::span<const int>(labels.labels), config);
}

}  // namespace sftmn
