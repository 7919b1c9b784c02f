#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sftmn/autograd.hpp"
#include "sftmn/random.hpp"
#include "sftmn/tensor.hpp"

namespace sftmn::testing {

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline std::vector<int> random_labels(Rng& rng, std::size_t frames, int classes) {
  std::vector<int> out(frames);
  for (int& l : out) l = static_cast<int>(rng.uniform_int(0, classes - 1));
  return out;
}

// Piecewise-constant labels with run lengths drawn from [1, max_run].
inline std::vector<int> random_runs(Rng& rng, std::size_t frames, int classes, int max_run) {
  std::vector<int> out;
  while (out.size() < frames) {
    const int label = static_cast<int>(rng.uniform_int(0, classes - 1));
    const auto run = static_cast<std::size_t>(rng.uniform_int(1, max_run));
    for (std::size_t i = 0; i < run && out.size() < frames; ++i) out.push_back(label);
  }
  return out;
}

// Scalar <weights, x> as a differentiable op.
inline Var project(const Var& x, const Tensor& weights) {
  require_same_shape(x.value(), weights, "project");
  Tensor value(1, 1);
  for (std::size_t i = 0; i < weights.size(); ++i) value(0, 0) += weights.values()[i] * x.value().values()[i];
  return make_op(std::move(value), {x}, [weights](Node& self) {
    const double g = self.grad(0, 0);
    auto gx = self.inputs[0]->grad_buffer().values();
    for (std::size_t i = 0; i < weights.size(); ++i) gx[i] += g * weights.values()[i];
  });
}

/// Fourth-order central finite differences
/// (f(w−2h) − 8f(w−h) + 8f(w+h) − f(w+2h)) / 12h of `loss` with respect to every entry of
/// `param` (or a seeded sample of `max_entries` entries), compared with
/// `analytic`. Returns the largest relative error, each entry measured
/// against max(|analytic|, |numeric|, floor).
struct GradCheck {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;
};

inline GradCheck check_gradient(Var param, Tensor analytic, const std::function<double()>& loss,
                                double h = 1e-4, std::size_t max_entries = 0, std::uint64_t seed = 1,
                                double floor = 1e-6) {
  GradCheck result;
  // Parameters the loss never reached carry no gradient buffer.
  if (analytic.empty()) analytic = Tensor(param.rows(), param.cols());
  std::vector<std::size_t> idx(param.value().size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (max_entries > 0 && idx.size() > max_entries) {
    Rng rng(seed);
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    idx.resize(max_entries);
  }
  for (std::size_t i : idx) {
    double& w = param.mutable_value().values()[i];
    const double saved = w;
    auto at = [&](double offset) {
      w = saved + offset;
      return loss();
    };
    const double numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
    w = saved;
    const double a = analytic.values()[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = "entry " + std::to_string(i) + " analytic " + std::to_string(a) + " numeric " +
                     std::to_string(numeric);
    }
    ++result.checked;
  }
  return result;
}

}  // namespace sftmn::testing
