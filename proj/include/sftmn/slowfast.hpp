#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sftmn/backbones.hpp"
#include "sftmn/keyvalue.hpp"

namespace sftmn {

enum class PoolKind { Max, Average, PowerAverage };

struct PoolingMode {
  PoolKind kind = PoolKind::Max;
  double power = 2.0;  // PowerAverage only

  void validate() const;
};

std::string to_string(PoolKind kind);  // "max" | "avg" | "power"
PoolKind pool_kind_from_string(const std::string& s);

// Number of segments covering T frames with windows of L.
std::size_t segment_count(std::size_t frames, std::size_t segment_length);

/// Pools each window of L consecutive frames into one column. Window w covers
/// frames [wL, min((w+1)L, T)); the last window may be partial and is pooled
/// over its actual extent.
Tensor segment_pool(const Tensor& x, int segment_length, const PoolingMode& mode);
Var segment_pool(const Var& x, int segment_length, const PoolingMode& mode);

/// Nearest-neighbour inverse of segment_pool: repeats each column L times and
/// truncates to `frames`. Requires y.cols() == ceil(frames / L).
Tensor upsample_repeat(const Tensor& y, int segment_length, std::size_t frames);
Var upsample_repeat(const Var& y, int segment_length, std::size_t frames);

/// Learned scalar pair of one fusion point.
struct FusionWeights {
  Var w1;  // 1x1, scales the Slow Path array
  Var w2;  // 1x1, scales the upsampled Fast Path array

  static FusionWeights constant(double w1, double w2);
};

// w1·slow + w2·fast_upsampled, elementwise.
Tensor fuse(const Tensor& slow, const Tensor& fast_upsampled, double w1, double w2);
Var fuse(const Var& slow, const Var& fast_upsampled, const FusionWeights& w);

enum class BackboneKind { MsTcn, Asformer };
enum class ModelKind { Single, SlowFast };

/// Which path's refinement stages consume the combined output:
/// A = Slow, B = Fast, C = neither, D = both.
enum class Design { A, B, C, D };

std::string to_string(BackboneKind kind);
std::string to_string(ModelKind kind);
std::string to_string(Design design);
BackboneKind backbone_from_string(const std::string& s);
ModelKind model_from_string(const std::string& s);
Design design_from_string(const std::string& s);

struct SfTmnConfig {
  ModelKind model = ModelKind::SlowFast;
  BackboneKind backbone = BackboneKind::MsTcn;
  int input_dim = 2048;
  int num_classes = 7;
  int segment_length = 32;
  PoolingMode pooling;
  Design design = Design::A;
  int refinement_stages = 3;
  int layers = 10;
  int feature_maps = 64;
  std::uint64_t seed = 0;
  AttentionConfig attention;

  void validate() const;  // throws ConstructionError

  KeyValues to_key_values() const;
  // Missing keys keep their defaults; unknown keys are ignored.
  static SfTmnConfig from_key_values(const KeyValues& kv);

  std::vector<StageSpec> path_specs() const;
};

/// Per-stage results of one forward pass.
struct StageOutputs {
  std::vector<Var> combined;           // N+1 arrays of C×T logits
  std::vector<Var> combined_features;  // ASFormer only: N+1 arrays of K×T
  std::vector<StageOutput> slow;       // frame resolution
  std::vector<StageOutput> fast;       // segment resolution; empty for single-path models
  // Inputs handed to refinement stage i are at index i−1.
  std::vector<StageInput> slow_inputs;
  std::vector<StageInput> fast_inputs;

  const Var& final_logits() const { return combined.back(); }
};

struct ForwardOptions {
  // Replace the Fast Path output of this stage (features and logits) with
  // zeros before it is fused or consumed. Diagnostic use.
  std::optional<std::size_t> zero_fast_stage;
};

/// Two-path temporal model. The Slow Path runs the backbone on frame features,
/// the Fast Path on segment-pooled features; every stage's outputs are fused
/// with learned scalar weights, and refinement stages are wired per Design.
/// With ModelKind::Single only the Slow Path exists and its logits are the
/// combined outputs.
class SfTmnNetwork {
 public:
  explicit SfTmnNetwork(SfTmnConfig config);

  StageOutputs forward(const Var& x, const ForwardOptions& options = {}) const;
  StageOutputs forward(const Tensor& x, const ForwardOptions& options = {}) const {
    return forward(constant(x), options);
  }

  const SfTmnConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const std::vector<StageSpec>& stage_specs() const { return specs_; }
  const TemporalStage& slow_stage(std::size_t i) const { return *slow_[i]; }
  const TemporalStage& fast_stage(std::size_t i) const { return *fast_[i]; }
  const FusionWeights& logit_fusion(std::size_t i) const { return logit_fusion_[i]; }
  const FusionWeights& feature_fusion(std::size_t i) const { return feature_fusion_[i]; }

  // Parameter-name prefixes, for selecting per-path parameters.
  static std::string slow_prefix(std::size_t stage);
  static std::string fast_prefix(std::size_t stage);

 private:
  StageOutputs forward_single(const Var& x) const;

  SfTmnConfig config_;
  std::vector<StageSpec> specs_;
  ParamStore params_;
  std::vector<std::unique_ptr<TemporalStage>> slow_;
  std::vector<std::unique_ptr<TemporalStage>> fast_;
  std::vector<FusionWeights> logit_fusion_;
  std::vector<FusionWeights> feature_fusion_;
};

}  // namespace sftmn
