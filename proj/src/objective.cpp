#include "sftmn/objective.hpp"

#include <cmath>
#include <string>

#include "sftmn/errors.hpp"

namespace sftmn {

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.cols() != labels.size()) {
    throw ShapeError("loss: " + std::to_string(logits.cols()) + " frames of logits vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (logits.cols() == 0) throw ShapeError("loss: empty sequence");
  const auto C = static_cast<int>(logits.rows());
  for (int l : labels)
    if (l < 0 || l >= C) throw ShapeError("loss: label " + std::to_string(l) + " out of range");
}

// Squared truncated difference and its derivative in the current term.
struct Truncated {
  double value;
  double slope;
};

Truncated truncated_square(double current, double previous, double tau) {
  const double delta = current - previous;
  if (std::abs(delta) >= tau) return {tau * tau, 0.0};
  return {delta * delta, 2.0 * delta};
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("tau must be > 0");
}

double classification_loss(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const Tensor lp = log_softmax_channels(logits);
  double acc = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) acc -= lp(static_cast<std::size_t>(labels[t]), t);
  return acc / static_cast<double>(labels.size());
}

Var classification_loss(const Var& logits, std::span<const int> labels) {
  const double value = classification_loss(logits.value(), labels);
  std::vector<int> owned(labels.begin(), labels.end());
  return make_op(Tensor(1, 1, value), {logits}, [owned = std::move(owned)](Node& self) {
    Node& in = *self.inputs[0];
    const double g = self.grad(0, 0) / static_cast<double>(owned.size());
    const Tensor p = softmax_channels(in.value);
    Tensor& dx = in.grad_buffer();
    for (std::size_t t = 0; t < owned.size(); ++t) {
      for (std::size_t c = 0; c < p.rows(); ++c) dx(c, t) += g * p(c, t);
      dx(static_cast<std::size_t>(owned[t]), t) -= g;
    }
  });
}

double smoothing_loss(const Tensor& logits, const Tensor& previous_source,
                      const LossConfig& config) {
  require_same_shape(logits, previous_source, "smoothing_loss");
  const std::size_t C = logits.rows(), T = logits.cols();
  if (T < 2) return 0.0;
  const Tensor cur = log_softmax_channels(logits);
  const Tensor prev = log_softmax_channels(previous_source);
  double acc = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 1; t < T; ++t) acc += truncated_square(cur(c, t), prev(c, t - 1), config.tau).value;
  return acc / static_cast<double>(C * (T - 1));
}

double smoothing_loss(const Tensor& logits, const LossConfig& config) {
  return smoothing_loss(logits, logits, config);
}

Var smoothing_loss(const Var& logits, const LossConfig& config) {
  const std::size_t C = logits.rows(), T = logits.cols();
  if (T < 2) return make_op(Tensor(1, 1, 0.0), {logits}, [](Node&) {});
  Var lp = log_softmax_channels(logits);
  const double value = smoothing_loss(logits.value(), config);
  const double tau = config.tau;
  const bool stop = config.stop_gradient_previous;
  return make_op(Tensor(1, 1, value), {lp}, [C, T, tau, stop](Node& self) {
    Node& in = *self.inputs[0];
    const Tensor& lpv = in.value;
    Tensor& d = in.grad_buffer();
    const double g = self.grad(0, 0) / static_cast<double>(C * (T - 1));
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 1; t < T; ++t) {
        const double slope = truncated_square(lpv(c, t), lpv(c, t - 1), tau).slope;
        d(c, t) += g * slope;
        if (!stop) d(c, t - 1) -= g * slope;
      }
    }
  });
}

Var stage_loss(const Var& logits, std::span<const int> labels, const LossConfig& config) {
  Var cls = classification_loss(logits, labels);
  if (config.lambda == 0.0) return cls;
  return add(cls, scale(smoothing_loss(logits, config), config.lambda));
}

double stage_loss(const Tensor& logits, std::span<const int> labels, const LossConfig& config) {
  const double cls = classification_loss(logits, labels);
  if (config.lambda == 0.0) return cls;
  return cls + config.lambda * smoothing_loss(logits, config);
}

Var total_loss(std::span<const Var> combined, std::span<const int> labels,
               const LossConfig& config) {
  config.validate();
  if (combined.empty()) throw ShapeError("total_loss: no stage outputs");
  Var total = stage_loss(combined[0], labels, config);
  for (std::size_t i = 1; i < combined.size(); ++i)
    total = add(total, stage_loss(combined[i], labels, config));
  return total;
}

double total_loss(std::span<const Tensor> combined, std::span<const int> labels,
                  const LossConfig& config) {
  config.validate();
  if (combined.empty()) throw ShapeError("total_loss: no stage outputs");
  double total = 0.0;
  for (const auto& logits : combined) total += stage_loss(logits, labels, config);
  return total;
}

}  // namespace sftmn
