#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sftmn/checkpoint.hpp"
#include "sftmn/featureio.hpp"
#include "sftmn/metrics.hpp"
#include "sftmn/objective.hpp"
#include "sftmn/slowfast.hpp"

namespace sftmn {

enum class OptimizerKind { Adam, Sgd };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 200;
  int batch_videos = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  bool shuffle = true;
  LossConfig loss;
  SfTmnConfig model;

  void validate() const;

  // Flat key-value form: training keys plus every model key.
  KeyValues to_key_values() const;
  static TrainConfig from_key_values(const KeyValues& kv);
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0;       // mean total loss over the epoch's videos
  double train_acc = 0;  // frame accuracy (%) of the final combined output
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::string checkpoint_path;

  // One {"epoch", "loss", "train_acc"} JSON object per line.
  std::string to_jsonl() const;
};

/// Adam (β1 = 0.9, β2 = 0.999, ε = 1e-8) or plain SGD over a ParamStore.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, ParamStore& params);
  // Applies the accumulated gradients scaled by `grad_scale`.
  void step(double grad_scale = 1.0);

 private:
  OptimizerKind kind_;
  double lr_;
  ParamStore& params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long long t_ = 0;
};

struct TrainResult {
  SfTmnNetwork network;
  ClassMapping mapping;
  TrainLog log;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains from the configured seed. Deterministic: identical config and data
/// give identical logs and parameters. Throws NumericError naming the epoch
/// and video when a loss is not finite.
TrainResult train(const TrainConfig& config, std::span<const VideoSample> dataset,
                  const TrainOptions& options = {});

// Per-frame argmax of C × T scores; ties go to the lower class index.
std::vector<int> argmax_labels(const Tensor& scores);

std::vector<int> predict(const SfTmnNetwork& network, const FeatureSequence& features);
LabelSequence predict(const Checkpoint& checkpoint, const FeatureSequence& features);

struct EvaluationOptions {
  MacroClassSet class_set = MacroClassSet::GtUnionPred;
};

struct VideoPrediction {
  std::string video_id;
  std::vector<int> predicted;
  std::vector<int> ground_truth;
};

/// Scores the final combined output of every video. Deterministic.
EvaluationReport evaluate(const SfTmnNetwork& network, std::span<const VideoSample> dataset,
                          const EvaluationOptions& options = {},
                          std::vector<VideoPrediction>* predictions = nullptr);
EvaluationReport evaluate(const Checkpoint& checkpoint, std::span<const VideoSample> dataset,
                          const EvaluationOptions& options = {},
                          std::vector<VideoPrediction>* predictions = nullptr);

}  // namespace sftmn
