#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sftmn/autograd.hpp"
#include "sftmn/random.hpp"

namespace sftmn {

/// Named, ordered collection of trainable leaves. Order of registration is
/// the order used for checkpoints and optimizer state.
class ParamStore {
 public:
  Var add(std::string name, Tensor init);
  const Var* find(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

struct Conv1d {
  Var weight;
  Var bias;
  int kernel = 1;
  int dilation = 1;

  Var operator()(const Var& x) const { return conv1d(x, weight, bias, kernel, dilation); }
};

// Fan-in uniform init, bound = gain / sqrt(in · kernel), for weight and bias.
Conv1d make_conv(ParamStore& store, const std::string& name, int in, int out, int kernel,
                 int dilation, Rng& rng, double gain = 1.0);

enum class StageKind { TcnStage, AsformerEncoder, AsformerDecoder };

std::string to_string(StageKind kind);
StageKind stage_kind_from_string(const std::string& s);

struct StageSpec {
  StageKind kind = StageKind::TcnStage;
  int num_layers = 10;
  int feature_maps = 64;
  int num_classes = 1;
  int input_dim = 1;

  // Dilation of layer l (0-based).
  static int dilation(int layer) { return 1 << layer; }

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

// Throws ConstructionError on non-positive sizes.
void validate(const StageSpec& spec);

struct StageOutput {
  Var features;  // feature_maps × T
  Var logits;    // num_classes × T
};

struct StageInput {
  Var input;    // input_dim × T
  Var context;  // feature_maps × T; decoders only (cross-attention values)
};

/// Uniform contract of one temporal stage: maps a sequence to features and
/// class logits at the same temporal length.
class TemporalStage {
 public:
  virtual ~TemporalStage() = default;
  virtual const StageSpec& spec() const = 0;
  virtual StageOutput forward(const StageInput& in) const = 0;
};

struct DilatedResidualParams {
  Conv1d dilated;  // f→f, kernel 3
  Conv1d pointwise;  // f→f, kernel 1
};

/// x + conv1x1(relu(dilated_conv(x))). Output at t depends on inputs in
/// [t − dilation, t + dilation] only.
Var dilated_residual_block(const Var& x, const DilatedResidualParams& params, int dilation);

class TcnStage final : public TemporalStage {
 public:
  TcnStage(const StageSpec& spec, ParamStore& store, const std::string& prefix, Rng& rng);
  const StageSpec& spec() const override { return spec_; }
  StageOutput forward(const StageInput& in) const override;
  const std::vector<DilatedResidualParams>& layers() const { return layers_; }

 private:
  StageSpec spec_;
  Conv1d input_proj_;
  std::vector<DilatedResidualParams> layers_;
  Conv1d classifier_;
};

struct AttentionConfig {
  // Full window of layer l spans window_base · 2^l frames; the query
  // attends to half of that on each side.
  int window_base = 2;
  // Query/key and value channel reduction factors.
  int qk_reduction = 2;
  int v_reduction = 2;
  double projection_gain = 0.5;

  int half_width(int layer) const { return (window_base << layer) / 2; }
};

/// Dilated feed-forward conv, windowed single-head attention over the
/// instance-normalized result, 1x1 projection and residual connection.
/// Self-attention when `cross` is false; otherwise values come from the
/// stage context (cross-attention).
class AttentionBlock {
 public:
  AttentionBlock(int feature_maps, int dilation, int half_width, bool cross, double alpha,
                 const AttentionConfig& cfg, ParamStore& store, const std::string& prefix,
                 Rng& rng);
  Var forward(const Var& x, const Var& context) const;
  // Attention output before the residual path; exposed for locality tests.
  Var attention(const Var& x, const Var& context) const;
  int half_width() const { return half_width_; }

 private:
  bool cross_;
  double alpha_;
  int half_width_;
  Conv1d feed_forward_;
  Conv1d query_;
  Conv1d key_;
  Conv1d value_;
  Conv1d attention_out_;
  Conv1d pointwise_;
};

class AsformerEncoder final : public TemporalStage {
 public:
  AsformerEncoder(const StageSpec& spec, const AttentionConfig& cfg, ParamStore& store,
                  const std::string& prefix, Rng& rng);
  const StageSpec& spec() const override { return spec_; }
  StageOutput forward(const StageInput& in) const override;
  const std::vector<AttentionBlock>& blocks() const { return blocks_; }
  Var project_input(const Var& x) const { return input_proj_(x); }

 private:
  StageSpec spec_;
  Conv1d input_proj_;
  std::vector<AttentionBlock> blocks_;
  Conv1d classifier_;
};

class AsformerDecoder final : public TemporalStage {
 public:
  AsformerDecoder(const StageSpec& spec, double alpha, const AttentionConfig& cfg,
                  ParamStore& store, const std::string& prefix, Rng& rng);
  const StageSpec& spec() const override { return spec_; }
  StageOutput forward(const StageInput& in) const override;

 private:
  StageSpec spec_;
  Conv1d input_proj_;
  std::vector<AttentionBlock> blocks_;
  Conv1d classifier_;
};

// Residual weight of the attention path in decoder `index` (0-based).
double decoder_alpha(int index);

std::unique_ptr<TemporalStage> make_stage(const StageSpec& spec, int stage_index,
                                          const AttentionConfig& cfg, ParamStore& store,
                                          const std::string& prefix, Rng& rng);

// The input a refinement stage of `kind` receives from the previous stage's
// output: per-frame class probabilities, plus features for decoders.
StageInput refinement_input(const StageOutput& previous, StageKind kind);

// Throws ConstructionError when consecutive stages do not chain.
void validate_chain(std::span<const StageSpec> specs);

/// Ordered stack of temporal stages: the first stage consumes input features,
/// each later stage refines the previous stage's output.
class BackboneStack {
 public:
  BackboneStack(std::vector<StageSpec> specs, std::uint64_t seed,
                const AttentionConfig& cfg = {});

  std::vector<StageOutput> forward(const Var& x) const;
  // Logits of every stage, in order.
  std::vector<Var> forward_logits(const Var& x) const;

  const std::vector<StageSpec>& specs() const { return specs_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const TemporalStage& stage(std::size_t i) const { return *stages_[i]; }
  std::size_t size() const { return stages_.size(); }

 private:
  std::vector<StageSpec> specs_;
  ParamStore params_;
  std::vector<std::unique_ptr<TemporalStage>> stages_;
};

// Convenience spec lists for the two backbones.
std::vector<StageSpec> mstcn_specs(int stages, int layers, int feature_maps, int num_classes,
                                   int input_dim);
std::vector<StageSpec> asformer_specs(int decoders, int layers, int feature_maps,
                                      int num_classes, int input_dim);

}  // namespace sftmn
