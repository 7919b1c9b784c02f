#include "sftmn/backbones.hpp"

#include <algorithm>
#include <cmath>

#include "sftmn/errors.hpp"

namespace sftmn {

Var ParamStore::add(std::string name, Tensor init) {
  if (find(name)) throw ConstructionError("duplicate parameter name: " + name);
  Var v = parameter(std::move(init));
  entries_.emplace_back(std::move(name), v);
  return v;
}

const Var* ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return &v;
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Conv1d make_conv(ParamStore& store, const std::string& name, int in, int out, int kernel,
                 int dilation, Rng& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(in * kernel));
  Tensor w(static_cast<std::size_t>(out), static_cast<std::size_t>(in * kernel));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  Tensor b(static_cast<std::size_t>(out), 1);
  for (double& v : b.values()) v = rng.uniform(-bound, bound);
  Conv1d conv;
  conv.weight = store.add(name + ".weight", std::move(w));
  conv.bias = store.add(name + ".bias", std::move(b));
  conv.kernel = kernel;
  conv.dilation = dilation;
  return conv;
}

std::string to_string(StageKind kind) {
  switch (kind) {
    case StageKind::TcnStage: return "tcn-stage";
    case StageKind::AsformerEncoder: return "asformer-encoder";
    case StageKind::AsformerDecoder: return "asformer-decoder";
  }
  return "?";
}

StageKind stage_kind_from_string(const std::string& s) {
  if (s == "tcn-stage") return StageKind::TcnStage;
  if (s == "asformer-encoder") return StageKind::AsformerEncoder;
  if (s == "asformer-decoder") return StageKind::AsformerDecoder;
  throw ParseError("unknown stage kind '" + s + "'");
}

void validate(const StageSpec& spec) {
  if (spec.num_layers < 1 || spec.feature_maps < 1 || spec.num_classes < 1 ||
      spec.input_dim < 1) {
    throw ConstructionError("stage spec sizes must be positive (" + to_string(spec.kind) + ")");
  }
  if (spec.num_layers > 30) throw ConstructionError("stage spec: too many layers");
}

Var dilated_residual_block(const Var& x, const DilatedResidualParams& params, int dilation) {
  if (dilation < 1) throw ShapeError("dilated_residual_block: dilation must be >= 1");
  Var h = relu(conv1d(x, params.dilated.weight, params.dilated.bias, 3, dilation));
  return add(x, params.pointwise(h));
}

TcnStage::TcnStage(const StageSpec& spec, ParamStore& store, const std::string& prefix, Rng& rng)
    : spec_(spec) {
  validate(spec);
  input_proj_ = make_conv(store, prefix + ".input_proj", spec.input_dim, spec.feature_maps, 1, 1,
                          rng);
  for (int l = 0; l < spec.num_layers; ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    DilatedResidualParams p;
    p.dilated = make_conv(store, name + ".dilated", spec.feature_maps, spec.feature_maps, 3,
                          StageSpec::dilation(l), rng);
    p.pointwise = make_conv(store, name + ".pointwise", spec.feature_maps, spec.feature_maps, 1,
                            1, rng);
    layers_.push_back(std::move(p));
  }
  classifier_ = make_conv(store, prefix + ".classifier", spec.feature_maps, spec.num_classes, 1,
                          1, rng);
}

StageOutput TcnStage::forward(const StageInput& in) const {
  if (in.input.rows() != static_cast<std::size_t>(spec_.input_dim)) {
    throw ShapeError("tcn-stage: expected " + std::to_string(spec_.input_dim) +
                     " input channels, got " + std::to_string(in.input.rows()));
  }
  Var h = input_proj_(in.input);
  for (int l = 0; l < spec_.num_layers; ++l)
    h = dilated_residual_block(h, layers_[static_cast<std::size_t>(l)], StageSpec::dilation(l));
  return {h, classifier_(h)};
}

AttentionBlock::AttentionBlock(int feature_maps, int dilation, int half_width, bool cross,
                               double alpha, const AttentionConfig& cfg, ParamStore& store,
                               const std::string& prefix, Rng& rng)
    : cross_(cross), alpha_(alpha), half_width_(half_width) {
  const int qk = std::max(1, feature_maps / cfg.qk_reduction);
  const int vd = std::max(1, feature_maps / cfg.v_reduction);
  const double g = cfg.projection_gain;
  feed_forward_ = make_conv(store, prefix + ".feed_forward", feature_maps, feature_maps, 3,
                            dilation, rng);
  query_ = make_conv(store, prefix + ".query", feature_maps, qk, 1, 1, rng, g);
  key_ = make_conv(store, prefix + ".key", feature_maps, qk, 1, 1, rng, g);
  value_ = make_conv(store, prefix + ".value", feature_maps, vd, 1, 1, rng, g);
  attention_out_ = make_conv(store, prefix + ".attention_out", vd, feature_maps, 1, 1, rng, g);
  pointwise_ = make_conv(store, prefix + ".pointwise", feature_maps, feature_maps, 1, 1, rng);
}

Var AttentionBlock::attention(const Var& x, const Var& context) const {
  Var normed = instance_norm(x);
  Var q = query_(normed);
  Var k = key_(normed);
  Var v = cross_ ? value_(context) : value_(normed);
  return attention_out_(relu(local_attention(q, k, v, half_width_)));
}

Var AttentionBlock::forward(const Var& x, const Var& context) const {
  if (cross_ && (!context.defined() || context.cols() != x.cols())) {
    throw ShapeError("asformer-decoder: context length must match the input");
  }
  Var ff = relu(feed_forward_(x));
  Var att = attention(ff, context);
  Var mixed = add(scale(att, alpha_), ff);
  return add(x, pointwise_(mixed));
}

AsformerEncoder::AsformerEncoder(const StageSpec& spec, const AttentionConfig& cfg,
                                 ParamStore& store, const std::string& prefix, Rng& rng)
    : spec_(spec) {
  validate(spec);
  input_proj_ = make_conv(store, prefix + ".input_proj", spec.input_dim, spec.feature_maps, 1, 1,
                          rng);
  for (int l = 0; l < spec.num_layers; ++l) {
    blocks_.emplace_back(spec.feature_maps, StageSpec::dilation(l), cfg.half_width(l), false, 1.0,
                         cfg, store, prefix + ".block" + std::to_string(l), rng);
  }
  classifier_ = make_conv(store, prefix + ".classifier", spec.feature_maps, spec.num_classes, 1,
                          1, rng);
}

StageOutput AsformerEncoder::forward(const StageInput& in) const {
  if (in.input.rows() != static_cast<std::size_t>(spec_.input_dim)) {
    throw ShapeError("asformer-encoder: expected " + std::to_string(spec_.input_dim) +
                     " input channels, got " + std::to_string(in.input.rows()));
  }
  Var h = input_proj_(in.input);
  for (const auto& block : blocks_) h = block.forward(h, Var{});
  return {h, classifier_(h)};
}

AsformerDecoder::AsformerDecoder(const StageSpec& spec, double alpha, const AttentionConfig& cfg,
                                 ParamStore& store, const std::string& prefix, Rng& rng)
    : spec_(spec) {
  validate(spec);
  input_proj_ = make_conv(store, prefix + ".input_proj", spec.input_dim, spec.feature_maps, 1, 1,
                          rng);
  for (int l = 0; l < spec.num_layers; ++l) {
    blocks_.emplace_back(spec.feature_maps, StageSpec::dilation(l), cfg.half_width(l), true,
                         alpha, cfg, store, prefix + ".block" + std::to_string(l), rng);
  }
  classifier_ = make_conv(store, prefix + ".classifier", spec.feature_maps, spec.num_classes, 1,
                          1, rng);
}

StageOutput AsformerDecoder::forward(const StageInput& in) const {
  if (in.input.rows() != static_cast<std::size_t>(spec_.input_dim)) {
    throw ShapeError("asformer-decoder: expected " + std::to_string(spec_.input_dim) +
                     " input channels, got " + std::to_string(in.input.rows()));
  }
  if (!in.context.defined() || in.context.cols() != in.input.cols()) {
    throw ShapeError("asformer-decoder: encoder features and prior predictions differ in length");
  }
  if (in.context.rows() != static_cast<std::size_t>(spec_.feature_maps)) {
    throw ShapeError("asformer-decoder: context must have feature_maps channels");
  }
  Var h = input_proj_(in.input);
  for (const auto& block : blocks_) h = block.forward(h, in.context);
  return {h, classifier_(h)};
}

double decoder_alpha(int index) { return std::exp(-3.0 * index); }

std::unique_ptr<TemporalStage> make_stage(const StageSpec& spec, int stage_index,
                                          const AttentionConfig& cfg, ParamStore& store,
                                          const std::string& prefix, Rng& rng) {
  switch (spec.kind) {
    case StageKind::TcnStage:
      return std::make_unique<TcnStage>(spec, store, prefix, rng);
    case StageKind::AsformerEncoder:
      return std::make_unique<AsformerEncoder>(spec, cfg, store, prefix, rng);
    case StageKind::AsformerDecoder:
      return std::make_unique<AsformerDecoder>(spec, decoder_alpha(stage_index - 1), cfg, store,
                                               prefix, rng);
  }
  throw ConstructionError("unknown stage kind");
}

StageInput refinement_input(const StageOutput& previous, StageKind kind) {
  StageInput in;
  in.input = softmax_channels(previous.logits);
  if (kind == StageKind::AsformerDecoder) in.context = previous.features;
  return in;
}

void validate_chain(std::span<const StageSpec> specs) {
  if (specs.empty()) throw ConstructionError("backbone needs at least one stage");
  for (const auto& s : specs) validate(s);
  if (specs[0].kind == StageKind::AsformerDecoder) {
    throw ConstructionError("a decoder cannot be the first stage");
  }
  for (std::size_t i = 1; i < specs.size(); ++i) {
    const StageSpec& prev = specs[i - 1];
    const StageSpec& cur = specs[i];
    const std::string where = "stage " + std::to_string(i) + ": ";
    if (cur.num_classes != prev.num_classes) {
      throw ConstructionError(where + "class count differs from the previous stage");
    }
    switch (cur.kind) {
      case StageKind::TcnStage:
        if (prev.kind != StageKind::TcnStage)
          throw ConstructionError(where + "tcn refinement must follow a tcn stage");
        if (cur.input_dim != prev.num_classes)
          throw ConstructionError(where + "tcn refinement consumes " +
                                  std::to_string(prev.num_classes) + " class probabilities, spec says " +
                                  std::to_string(cur.input_dim));
        break;
      case StageKind::AsformerDecoder:
        if (prev.kind == StageKind::TcnStage)
          throw ConstructionError(where + "decoder must follow an encoder or decoder");
        if (cur.input_dim != prev.num_classes)
          throw ConstructionError(where + "decoder input_dim must equal the class count");
        if (cur.feature_maps != prev.feature_maps)
          throw ConstructionError(where + "decoder feature_maps must match the previous stage");
        break;
      case StageKind::AsformerEncoder:
        throw ConstructionError(where + "an encoder may only be the first stage");
    }
  }
}

BackboneStack::BackboneStack(std::vector<StageSpec> specs, std::uint64_t seed,
                             const AttentionConfig& cfg)
    : specs_(std::move(specs)) {
  validate_chain(specs_);
  Rng rng(seed);
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    stages_.push_back(make_stage(specs_[i], static_cast<int>(i), cfg, params_,
                                 "stage" + std::to_string(i), rng));
  }
}

std::vector<StageOutput> BackboneStack::forward(const Var& x) const {
  std::vector<StageOutput> outs;
  outs.reserve(stages_.size());
  outs.push_back(stages_[0]->forward(StageInput{x, Var{}}));
  for (std::size_t i = 1; i < stages_.size(); ++i) {
    outs.push_back(stages_[i]->forward(refinement_input(outs.back(), specs_[i].kind)));
  }
  return outs;
}

std::vector<Var> BackboneStack::forward_logits(const Var& x) const {
  std::vector<Var> logits;
  for (auto& o : forward(x)) logits.push_back(o.logits);
  return logits;
}

std::vector<StageSpec> mstcn_specs(int stages, int layers, int feature_maps, int num_classes,
                                   int input_dim) {
  if (stages < 1) throw ConstructionError("mstcn needs at least one stage");
  std::vector<StageSpec> specs;
  specs.push_back({StageKind::TcnStage, layers, feature_maps, num_classes, input_dim});
  for (int s = 1; s < stages; ++s)
    specs.push_back({StageKind::TcnStage, layers, feature_maps, num_classes, num_classes});
  return specs;
}

std::vector<StageSpec> asformer_specs(int decoders, int layers, int feature_maps,
                                      int num_classes, int input_dim) {
  if (decoders < 0) throw ConstructionError("asformer decoder count must be >= 0");
  std::vector<StageSpec> specs;
  specs.push_back({StageKind::AsformerEncoder, layers, feature_maps, num_classes, input_dim});
  for (int s = 0; s < decoders; ++s)
    specs.push_back({StageKind::AsformerDecoder, layers, feature_maps, num_classes, num_classes});
  return specs;
}

}  // namespace sftmn
