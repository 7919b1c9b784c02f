#include "sftmn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "sftmn/errors.hpp"

namespace sftmn {

namespace {

thread_local bool g_grad_enabled = true;

bool needs_grad(const Node& n) { return n.requires_grad; }

// Row-major transpose into a fresh buffer; attention kernels work frame-major.
std::vector<double> frame_major(const Tensor& x) {
  std::vector<double> out(x.size());
  const std::size_t c = x.rows(), t = x.cols();
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < t; ++j) out[j * c + i] = x(i, j);
  return out;
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.rows(), value.cols());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var& v) { return v.requires_grad(); });
  if (!any) return out;
  Node& n = out.node();
  n.requires_grad = true;
  n.inputs.reserve(inputs.size());
  for (auto& v : inputs) n.inputs.push_back(v.ptr());
  n.backward = std::move(fn);
  return out;
}

void backward(const Var& root) {
  if (!root.defined() || root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward: root must be a 1x1 scalar");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
  visited.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node().grad_buffer()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Var detach(const Var& x) { return constant(x.value()); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (needs_grad(*in)) in->grad_buffer() += self.grad;
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return make_op(std::move(out), {x}, [factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const auto up = self.grad.values();
    auto dst = g.values();
    for (std::size_t i = 0; i < up.size(); ++i) dst[i] += factor * up[i];
  });
}

Var mul_scalar(const Var& x, const Var& w) {
  if (w.rows() != 1 || w.cols() != 1) throw ShapeError("mul_scalar: weight must be 1x1");
  const double s = w.value()(0, 0);
  Tensor out = x.value();
  for (double& v : out.values()) v *= s;
  return make_op(std::move(out), {x, w}, [](Node& self) {
    Node& xin = *self.inputs[0];
    Node& win = *self.inputs[1];
    const auto up = self.grad.values();
    if (needs_grad(xin)) {
      const double s = win.value(0, 0);
      auto dst = xin.grad_buffer().values();
      for (std::size_t i = 0; i < up.size(); ++i) dst[i] += s * up[i];
    }
    if (needs_grad(win)) {
      const auto xv = xin.value.values();
      double acc = 0.0;
      for (std::size_t i = 0; i < up.size(); ++i) acc += up[i] * xv[i];
      win.grad_buffer()(0, 0) += acc;
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    const auto up = self.grad.values();
    const auto xv = in.value.values();
    auto dst = in.grad_buffer().values();
    for (std::size_t i = 0; i < up.size(); ++i)
      if (xv[i] > 0.0) dst[i] += up[i];
  });
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return make_op(Tensor(1, 1, acc), {x}, [](Node& self) {
    const double g = self.grad(0, 0);
    for (double& v : self.inputs[0]->grad_buffer().values()) v += g;
  });
}

Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel, int dilation) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("conv1d: kernel must be odd and positive");
  if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const std::size_t cin = xv.rows();
  const std::size_t cout = wv.rows();
  const auto T = static_cast<std::ptrdiff_t>(xv.cols());
  const auto K = static_cast<std::size_t>(kernel);
  if (wv.cols() != cin * K) {
    throw ShapeError("conv1d: weight " + wv.shape_string() + " does not match " +
                     std::to_string(cin) + " input channels with kernel " +
                     std::to_string(kernel));
  }
  if (bias.rows() != cout || bias.cols() != 1) throw ShapeError("conv1d: bias shape");

  const std::ptrdiff_t center = (kernel - 1) / 2;
  Tensor out(cout, xv.cols());
  for (std::size_t o = 0; o < cout; ++o) {
    double* orow = out.row(o).data();
    const double b = bias.value()(o, 0);
    for (std::ptrdiff_t t = 0; t < T; ++t) orow[t] = b;
    for (std::size_t i = 0; i < cin; ++i) {
      const double* xrow = xv.row(i).data();
      for (std::size_t k = 0; k < K; ++k) {
        const double w = wv(o, i * K + k);
        const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(k) - center) * dilation;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - off);
        for (std::ptrdiff_t t = t0; t < t1; ++t) orow[t] += w * xrow[t + off];
      }
    }
  }

  return make_op(std::move(out), {x, weight, bias}, [K, center, dilation](Node& self) {
    Node& xin = *self.inputs[0];
    Node& win = *self.inputs[1];
    Node& bin = *self.inputs[2];
    const Tensor& g = self.grad;
    const Tensor& xv = xin.value;
    const Tensor& wv = win.value;
    const std::size_t cin = xv.rows(), cout = wv.rows();
    const auto T = static_cast<std::ptrdiff_t>(xv.cols());
    Tensor* dx = needs_grad(xin) ? &xin.grad_buffer() : nullptr;
    Tensor* dw = needs_grad(win) ? &win.grad_buffer() : nullptr;
    if (needs_grad(bin)) {
      Tensor& db = bin.grad_buffer();
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = 0.0;
        for (double v : g.row(o)) acc += v;
        db(o, 0) += acc;
      }
    }
    for (std::size_t o = 0; o < cout; ++o) {
      const double* grow = g.row(o).data();
      for (std::size_t i = 0; i < cin; ++i) {
        const double* xrow = xv.row(i).data();
        double* dxrow = dx ? dx->row(i).data() : nullptr;
        for (std::size_t k = 0; k < K; ++k) {
          const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(k) - center) * dilation;
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - off);
          if (dxrow) {
            const double w = wv(o, i * K + k);
            for (std::ptrdiff_t t = t0; t < t1; ++t) dxrow[t + off] += w * grow[t];
          }
          if (dw) {
            double acc = 0.0;
            for (std::ptrdiff_t t = t0; t < t1; ++t) acc += grow[t] * xrow[t + off];
            (*dw)(o, i * K + k) += acc;
          }
        }
      }
    }
  });
}

Tensor softmax_channels(const Tensor& x) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.cols(); ++t) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.rows(); ++c) m = std::max(m, x(c, t));
    double z = 0.0;
    for (std::size_t c = 0; c < x.rows(); ++c) {
      out(c, t) = std::exp(x(c, t) - m);
      z += out(c, t);
    }
    for (std::size_t c = 0; c < x.rows(); ++c) out(c, t) /= z;
  }
  return out;
}

Tensor log_softmax_channels(const Tensor& x) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.cols(); ++t) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.rows(); ++c) m = std::max(m, x(c, t));
    double z = 0.0;
    for (std::size_t c = 0; c < x.rows(); ++c) z += std::exp(x(c, t) - m);
    const double lse = m + std::log(z);
    for (std::size_t c = 0; c < x.rows(); ++c) out(c, t) = x(c, t) - lse;
  }
  return out;
}

Var softmax_channels(const Var& x) {
  return make_op(softmax_channels(x.value()), {x}, [](Node& self) {
    const Tensor& p = self.value;
    const Tensor& g = self.grad;
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t t = 0; t < p.cols(); ++t) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.rows(); ++c) dot += g(c, t) * p(c, t);
      for (std::size_t c = 0; c < p.rows(); ++c) dx(c, t) += p(c, t) * (g(c, t) - dot);
    }
  });
}

Var log_softmax_channels(const Var& x) {
  return make_op(log_softmax_channels(x.value()), {x}, [](Node& self) {
    const Tensor& lp = self.value;
    const Tensor& g = self.grad;
    Tensor& dx = self.inputs[0]->grad_buffer();
    for (std::size_t t = 0; t < lp.cols(); ++t) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < lp.rows(); ++c) gsum += g(c, t);
      for (std::size_t c = 0; c < lp.rows(); ++c) dx(c, t) += g(c, t) - std::exp(lp(c, t)) * gsum;
    }
  });
}

Var instance_norm(const Var& x, double eps) {
  const Tensor& xv = x.value();
  const std::size_t C = xv.rows(), T = xv.cols();
  Tensor out(C, T);
  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto row = xv.row(c);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(T);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t t = 0; t < T; ++t) out(c, t) = (row[t] - mean) * inv_std[c];
  }
  return make_op(std::move(out), {x}, [inv_std = std::move(inv_std)](Node& self) {
    const Tensor& y = self.value;
    const Tensor& g = self.grad;
    Tensor& dx = self.inputs[0]->grad_buffer();
    const std::size_t C = y.rows(), T = y.cols();
    const double n = static_cast<double>(T);
    for (std::size_t c = 0; c < C; ++c) {
      double gmean = 0.0, gy = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        gmean += g(c, t);
        gy += g(c, t) * y(c, t);
      }
      gmean /= n;
      gy /= n;
      for (std::size_t t = 0; t < T; ++t)
        dx(c, t) += inv_std[c] * (g(c, t) - gmean - y(c, t) * gy);
    }
  });
}

Tensor local_attention_weights(const Tensor& q, const Tensor& k, int half_width) {
  if (half_width < 0) throw ShapeError("local_attention: negative window");
  require_same_shape(q, k, "local_attention q/k");
  const std::size_t d = q.rows();
  const auto T = static_cast<std::ptrdiff_t>(q.cols());
  const std::size_t W = 2 * static_cast<std::size_t>(half_width) + 1;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const auto qf = frame_major(q);
  const auto kf = frame_major(k);
  Tensor weights(static_cast<std::size_t>(T), W);
  for (std::ptrdiff_t t = 0; t < T; ++t) {
    const std::ptrdiff_t s0 = std::max<std::ptrdiff_t>(0, t - half_width);
    const std::ptrdiff_t s1 = std::min<std::ptrdiff_t>(T - 1, t + half_width);
    double m = -std::numeric_limits<double>::infinity();
    auto wrow = weights.row(static_cast<std::size_t>(t));
    for (std::ptrdiff_t s = s0; s <= s1; ++s) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += qf[t * d + c] * kf[s * d + c];
      const double score = dot * inv_sqrt_d;
      wrow[s - t + half_width] = score;
      m = std::max(m, score);
    }
    double z = 0.0;
    for (std::ptrdiff_t s = s0; s <= s1; ++s) {
      double& w = wrow[s - t + half_width];
      w = std::exp(w - m);
      z += w;
    }
    for (std::ptrdiff_t s = s0; s <= s1; ++s) wrow[s - t + half_width] /= z;
  }
  return weights;
}

Var local_attention(const Var& q, const Var& k, const Var& v, int half_width) {
  if (v.cols() != q.cols()) throw ShapeError("local_attention: value length differs from query");
  Tensor weights = local_attention_weights(q.value(), k.value(), half_width);
  const std::size_t dv = v.rows();
  const auto T = static_cast<std::ptrdiff_t>(q.cols());
  const auto vf = frame_major(v.value());
  std::vector<double> of(static_cast<std::size_t>(T) * dv, 0.0);
  for (std::ptrdiff_t t = 0; t < T; ++t) {
    const std::ptrdiff_t s0 = std::max<std::ptrdiff_t>(0, t - half_width);
    const std::ptrdiff_t s1 = std::min<std::ptrdiff_t>(T - 1, t + half_width);
    for (std::ptrdiff_t s = s0; s <= s1; ++s) {
      const double a = weights(static_cast<std::size_t>(t), s - t + half_width);
      for (std::size_t c = 0; c < dv; ++c) of[t * dv + c] += a * vf[s * dv + c];
    }
  }
  Tensor out(dv, static_cast<std::size_t>(T));
  for (std::ptrdiff_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < dv; ++c) out(c, t) = of[t * dv + c];

  return make_op(std::move(out), {q, k, v},
                 [weights = std::move(weights), half_width](Node& self) {
    Node& qn = *self.inputs[0];
    Node& kn = *self.inputs[1];
    Node& vn = *self.inputs[2];
    const std::size_t d = qn.value.rows(), dv = vn.value.rows();
    const auto T = static_cast<std::ptrdiff_t>(qn.value.cols());
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const auto qf = frame_major(qn.value);
    const auto kf = frame_major(kn.value);
    const auto vf = frame_major(vn.value);
    const auto gf = frame_major(self.grad);
    std::vector<double> dq(qf.size(), 0.0), dk(kf.size(), 0.0), dvv(vf.size(), 0.0);
    std::vector<double> da;
    for (std::ptrdiff_t t = 0; t < T; ++t) {
      const std::ptrdiff_t s0 = std::max<std::ptrdiff_t>(0, t - half_width);
      const std::ptrdiff_t s1 = std::min<std::ptrdiff_t>(T - 1, t + half_width);
      da.assign(static_cast<std::size_t>(s1 - s0 + 1), 0.0);
      double weighted = 0.0;
      for (std::ptrdiff_t s = s0; s <= s1; ++s) {
        const double a = weights(static_cast<std::size_t>(t), s - t + half_width);
        double dot = 0.0;
        for (std::size_t c = 0; c < dv; ++c) {
          dot += gf[t * dv + c] * vf[s * dv + c];
          dvv[s * dv + c] += a * gf[t * dv + c];
        }
        da[s - s0] = dot;
        weighted += a * dot;
      }
      for (std::ptrdiff_t s = s0; s <= s1; ++s) {
        const double a = weights(static_cast<std::size_t>(t), s - t + half_width);
        const double dscore = a * (da[s - s0] - weighted) * inv_sqrt_d;
        for (std::size_t c = 0; c < d; ++c) {
          dq[t * d + c] += dscore * kf[s * d + c];
          dk[s * d + c] += dscore * qf[t * d + c];
        }
      }
    }
    auto scatter = [T](Node& n, const std::vector<double>& buf, std::size_t ch) {
      if (!n.requires_grad) return;
      Tensor& g = n.grad_buffer();
      for (std::ptrdiff_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < ch; ++c) g(c, t) += buf[t * ch + c];
    };
    scatter(qn, dq, d);
    scatter(kn, dk, d);
    scatter(vn, dvv, dv);
  });
}

}  // namespace sftmn
