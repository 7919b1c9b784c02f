#include "sftmn/slowfast.hpp"

#include <algorithm>
#include <cmath>

#include "sftmn/errors.hpp"

namespace sftmn {

void PoolingMode::validate() const {
  if (kind == PoolKind::PowerAverage && !(std::isfinite(power) && power > 0.0)) {
    throw ConstructionError("power-average pooling needs a finite power > 0");
  }
}

std::string to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::Max: return "max";
    case PoolKind::Average: return "avg";
    case PoolKind::PowerAverage: return "power";
  }
  return "?";
}

PoolKind pool_kind_from_string(const std::string& s) {
  if (s == "max") return PoolKind::Max;
  if (s == "avg" || s == "average") return PoolKind::Average;
  if (s == "power" || s == "power-average") return PoolKind::PowerAverage;
  throw ParseError("unknown pooling mode '" + s + "'");
}

std::size_t segment_count(std::size_t frames, std::size_t segment_length) {
  return (frames + segment_length - 1) / segment_length;
}

namespace {

void check_segment_length(int segment_length) {
  if (segment_length < 1) throw ShapeError("segment length must be >= 1");
}

struct Window {
  std::size_t begin;
  std::size_t end;
};

Window window(std::size_t w, std::size_t L, std::size_t T) {
  return {w * L, std::min((w + 1) * L, T)};
}

}  // namespace

Tensor segment_pool(const Tensor& x, int segment_length, const PoolingMode& mode) {
  check_segment_length(segment_length);
  mode.validate();
  const std::size_t L = static_cast<std::size_t>(segment_length);
  const std::size_t T = x.cols();
  const std::size_t S = segment_count(T, L);
  Tensor out(x.rows(), S);
  for (std::size_t c = 0; c < x.rows(); ++c) {
    const auto row = x.row(c);
    for (std::size_t w = 0; w < S; ++w) {
      const auto [b, e] = window(w, L, T);
      const double n = static_cast<double>(e - b);
      double v = 0.0;
      switch (mode.kind) {
        case PoolKind::Max:
          v = *std::max_element(row.begin() + static_cast<std::ptrdiff_t>(b),
                                row.begin() + static_cast<std::ptrdiff_t>(e));
          break;
        case PoolKind::Average:
          for (std::size_t t = b; t < e; ++t) v += row[t];
          v /= n;
          break;
        case PoolKind::PowerAverage:
          for (std::size_t t = b; t < e; ++t) v += std::pow(std::abs(row[t]), mode.power);
          v = std::pow(v / n, 1.0 / mode.power);
          break;
      }
      out(c, w) = v;
    }
  }
  return out;
}

Var segment_pool(const Var& x, int segment_length, const PoolingMode& mode) {
  Tensor pooled = segment_pool(x.value(), segment_length, mode);
  const std::size_t L = static_cast<std::size_t>(segment_length);
  return make_op(std::move(pooled), {x}, [L, mode](Node& self) {
    Node& in = *self.inputs[0];
    const Tensor& xv = in.value;
    const Tensor& y = self.value;
    const Tensor& g = self.grad;
    Tensor& dx = in.grad_buffer();
    const std::size_t T = xv.cols();
    for (std::size_t c = 0; c < xv.rows(); ++c) {
      const auto row = xv.row(c);
      for (std::size_t w = 0; w < y.cols(); ++w) {
        const auto [b, e] = window(w, L, T);
        const double n = static_cast<double>(e - b);
        const double gw = g(c, w);
        switch (mode.kind) {
          case PoolKind::Max: {
            // First maximal frame takes the gradient.
            const auto it = std::max_element(row.begin() + static_cast<std::ptrdiff_t>(b),
                                             row.begin() + static_cast<std::ptrdiff_t>(e));
            dx(c, static_cast<std::size_t>(it - row.begin())) += gw;
            break;
          }
          case PoolKind::Average:
            for (std::size_t t = b; t < e; ++t) dx(c, t) += gw / n;
            break;
          case PoolKind::PowerAverage: {
            const double out = y(c, w);
            if (out <= 0.0) break;
            // d/dx_t (mean|x|^p)^(1/p) = out^(1-p) · |x_t|^(p-1) · sign(x_t) / n
            const double lead = std::pow(out, 1.0 - mode.power) / n;
            for (std::size_t t = b; t < e; ++t) {
              const double a = std::abs(row[t]);
              if (a == 0.0) continue;
              const double sign = row[t] > 0.0 ? 1.0 : -1.0;
              dx(c, t) += gw * lead * std::pow(a, mode.power - 1.0) * sign;
            }
            break;
          }
        }
      }
    }
  });
}

Tensor upsample_repeat(const Tensor& y, int segment_length, std::size_t frames) {
  check_segment_length(segment_length);
  const std::size_t L = static_cast<std::size_t>(segment_length);
  if (frames < 1) throw ShapeError("upsample_repeat: frames must be >= 1");
  if (y.cols() != segment_count(frames, L)) {
    throw ShapeError("upsample_repeat: " + std::to_string(y.cols()) +
                     " segments cannot cover " + std::to_string(frames) +
                     " frames with segment length " + std::to_string(L));
  }
  Tensor out(y.rows(), frames);
  for (std::size_t c = 0; c < y.rows(); ++c)
    for (std::size_t t = 0; t < frames; ++t) out(c, t) = y(c, t / L);
  return out;
}

Var upsample_repeat(const Var& y, int segment_length, std::size_t frames) {
  Tensor up = upsample_repeat(y.value(), segment_length, frames);
  const std::size_t L = static_cast<std::size_t>(segment_length);
  return make_op(std::move(up), {y}, [L](Node& self) {
    Tensor& dy = self.inputs[0]->grad_buffer();
    const Tensor& g = self.grad;
    for (std::size_t c = 0; c < g.rows(); ++c)
      for (std::size_t t = 0; t < g.cols(); ++t) dy(c, t / L) += g(c, t);
  });
}

FusionWeights FusionWeights::constant(double w1, double w2) {
  return {sftmn::constant(Tensor(1, 1, w1)), sftmn::constant(Tensor(1, 1, w2))};
}

Tensor fuse(const Tensor& slow, const Tensor& fast_upsampled, double w1, double w2) {
  require_same_shape(slow, fast_upsampled, "fuse");
  Tensor out(slow.rows(), slow.cols());
  const auto a = slow.values();
  const auto b = fast_upsampled.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = w1 * a[i] + w2 * b[i];
  return out;
}

Var fuse(const Var& slow, const Var& fast_upsampled, const FusionWeights& w) {
  require_same_shape(slow.value(), fast_upsampled.value(), "fuse");
  return add(mul_scalar(slow, w.w1), mul_scalar(fast_upsampled, w.w2));
}

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::MsTcn ? "mstcn" : "asformer";
}
std::string to_string(ModelKind kind) { return kind == ModelKind::Single ? "single" : "sftmn"; }
std::string to_string(Design design) {
  switch (design) {
    case Design::A: return "a";
    case Design::B: return "b";
    case Design::C: return "c";
    case Design::D: return "d";
  }
  return "?";
}

BackboneKind backbone_from_string(const std::string& s) {
  if (s == "mstcn") return BackboneKind::MsTcn;
  if (s == "asformer") return BackboneKind::Asformer;
  throw ParseError("unknown backbone '" + s + "'");
}

ModelKind model_from_string(const std::string& s) {
  if (s == "single") return ModelKind::Single;
  if (s == "sftmn") return ModelKind::SlowFast;
  throw ParseError("unknown model kind '" + s + "'");
}

Design design_from_string(const std::string& s) {
  if (s == "a") return Design::A;
  if (s == "b") return Design::B;
  if (s == "c") return Design::C;
  if (s == "d") return Design::D;
  throw ParseError("unknown design '" + s + "'");
}

void SfTmnConfig::validate() const {
  if (input_dim < 1) throw ConstructionError("input_dim must be >= 1");
  if (num_classes < 1) throw ConstructionError("num_classes must be >= 1");
  if (segment_length < 1) throw ConstructionError("segment_length must be >= 1");
  if (refinement_stages < 0) throw ConstructionError("refinement_stages must be >= 0");
  if (layers < 1) throw ConstructionError("layers must be >= 1");
  if (feature_maps < 1) throw ConstructionError("feature_maps must be >= 1");
  if (attention.window_base < 1 || attention.qk_reduction < 1 || attention.v_reduction < 1)
    throw ConstructionError("attention settings must be positive");
  pooling.validate();
}

KeyValues SfTmnConfig::to_key_values() const {
  KeyValues kv;
  kv.set("model", to_string(model));
  kv.set("backbone", to_string(backbone));
  kv.set("input_dim", std::to_string(input_dim));
  kv.set("num_classes", std::to_string(num_classes));
  kv.set("segment_length", std::to_string(segment_length));
  kv.set("pooling", to_string(pooling.kind));
  kv.set("power_p", format_double(pooling.power));
  kv.set("design", to_string(design));
  kv.set("refinement_stages", std::to_string(refinement_stages));
  kv.set("layers", std::to_string(layers));
  kv.set("feature_maps", std::to_string(feature_maps));
  kv.set("seed", std::to_string(seed));
  kv.set("attention_window_base", std::to_string(attention.window_base));
  return kv;
}

SfTmnConfig SfTmnConfig::from_key_values(const KeyValues& kv) {
  SfTmnConfig c;
  if (kv.contains("model")) c.model = model_from_string(kv.get("model"));
  if (kv.contains("backbone")) c.backbone = backbone_from_string(kv.get("backbone"));
  if (kv.contains("input_dim")) c.input_dim = static_cast<int>(kv.get_int("input_dim"));
  if (kv.contains("num_classes")) c.num_classes = static_cast<int>(kv.get_int("num_classes"));
  if (kv.contains("segment_length"))
    c.segment_length = static_cast<int>(kv.get_int("segment_length"));
  if (kv.contains("pooling")) c.pooling.kind = pool_kind_from_string(kv.get("pooling"));
  if (kv.contains("power_p")) c.pooling.power = kv.get_double("power_p");
  if (kv.contains("design")) c.design = design_from_string(kv.get("design"));
  if (kv.contains("refinement_stages"))
    c.refinement_stages = static_cast<int>(kv.get_int("refinement_stages"));
  if (kv.contains("layers")) c.layers = static_cast<int>(kv.get_int("layers"));
  if (kv.contains("feature_maps")) c.feature_maps = static_cast<int>(kv.get_int("feature_maps"));
  if (kv.contains("seed")) c.seed = kv.get_uint64("seed");
  if (kv.contains("attention_window_base"))
    c.attention.window_base = static_cast<int>(kv.get_int("attention_window_base"));
  return c;
}

std::vector<StageSpec> SfTmnConfig::path_specs() const {
  return backbone == BackboneKind::MsTcn
             ? mstcn_specs(refinement_stages + 1, layers, feature_maps, num_classes, input_dim)
             : asformer_specs(refinement_stages, layers, feature_maps, num_classes, input_dim);
}

std::string SfTmnNetwork::slow_prefix(std::size_t stage) {
  return "slow.stage" + std::to_string(stage);
}
std::string SfTmnNetwork::fast_prefix(std::size_t stage) {
  return "fast.stage" + std::to_string(stage);
}

SfTmnNetwork::SfTmnNetwork(SfTmnConfig config) : config_(std::move(config)) {
  config_.validate();
  specs_ = config_.path_specs();
  validate_chain(specs_);
  Rng rng(config_.seed);
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    slow_.push_back(make_stage(specs_[i], static_cast<int>(i), config_.attention, params_,
                               slow_prefix(i), rng));
  }
  if (config_.model == ModelKind::Single) return;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    fast_.push_back(make_stage(specs_[i], static_cast<int>(i), config_.attention, params_,
                               fast_prefix(i), rng));
  }
  auto half = [] { return Tensor(1, 1, 0.5); };
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const std::string base = "fusion.stage" + std::to_string(i);
    if (config_.backbone == BackboneKind::MsTcn) {
      logit_fusion_.push_back({params_.add(base + ".w1", half()), params_.add(base + ".w2", half())});
    } else {
      logit_fusion_.push_back(
          {params_.add(base + ".logits.w1", half()), params_.add(base + ".logits.w2", half())});
      feature_fusion_.push_back({params_.add(base + ".features.w1", half()),
                                 params_.add(base + ".features.w2", half())});
    }
  }
}

StageOutputs SfTmnNetwork::forward_single(const Var& x) const {
  StageOutputs out;
  out.slow.push_back(slow_[0]->forward(StageInput{x, Var{}}));
  for (std::size_t i = 1; i < slow_.size(); ++i) {
    out.slow_inputs.push_back(refinement_input(out.slow.back(), specs_[i].kind));
    out.slow.push_back(slow_[i]->forward(out.slow_inputs.back()));
  }
  for (const auto& s : out.slow) {
    out.combined.push_back(s.logits);
    if (config_.backbone == BackboneKind::Asformer) out.combined_features.push_back(s.features);
  }
  return out;
}

StageOutputs SfTmnNetwork::forward(const Var& x, const ForwardOptions& options) const {
  if (x.rows() != static_cast<std::size_t>(config_.input_dim)) {
    throw ShapeError("forward: expected " + std::to_string(config_.input_dim) +
                     "-dim features, got " + std::to_string(x.rows()));
  }
  if (x.cols() < 1) throw ShapeError("forward: empty sequence");
  if (config_.model == ModelKind::Single) return forward_single(x);

  const std::size_t T = x.cols();
  const int L = config_.segment_length;
  const bool asformer = config_.backbone == BackboneKind::Asformer;
  const bool slow_takes_combined = config_.design == Design::A || config_.design == Design::D;
  const bool fast_takes_combined = config_.design == Design::B || config_.design == Design::D;

  auto pool = [&](const Var& v) { return segment_pool(v, L, config_.pooling); };
  auto up = [&](const Var& v) { return upsample_repeat(v, L, T); };

  StageOutputs out;
  StageInput slow_in{x, Var{}};
  StageInput fast_in{pool(x), Var{}};
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (i > 0) {
      out.slow_inputs.push_back(slow_in);
      out.fast_inputs.push_back(fast_in);
    }
    StageOutput slow = slow_[i]->forward(slow_in);
    StageOutput fast = fast_[i]->forward(fast_in);
    if (options.zero_fast_stage && *options.zero_fast_stage == i) {
      fast.logits = constant(Tensor(fast.logits.rows(), fast.logits.cols()));
      fast.features = constant(Tensor(fast.features.rows(), fast.features.cols()));
    }

    StageOutput combined;
    combined.logits = fuse(slow.logits, up(fast.logits), logit_fusion_[i]);
    if (asformer) combined.features = fuse(slow.features, up(fast.features), feature_fusion_[i]);
    out.combined.push_back(combined.logits);
    if (asformer) out.combined_features.push_back(combined.features);

    if (i + 1 < specs_.size()) {
      const StageKind next = specs_[i + 1].kind;
      slow_in = refinement_input(slow_takes_combined ? combined : slow, next);
      if (fast_takes_combined) {
        StageInput c = refinement_input(combined, next);
        fast_in.input = pool(c.input);
        fast_in.context = c.context.defined() ? pool(c.context) : Var{};
      } else {
        fast_in = refinement_input(fast, next);
      }
    }
    out.slow.push_back(std::move(slow));
    out.fast.push_back(std::move(fast));
  }
  return out;
}

}  // namespace sftmn
