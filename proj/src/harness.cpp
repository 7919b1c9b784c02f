#include "sftmn/harness.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "sftmn/errors.hpp"
#include "sftmn/random.hpp"

namespace sftmn {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ParseError("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be positive");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_videos < 1) throw ValidationError("batch_videos must be >= 1");
  if (grad_clip < 0.0) throw ValidationError("grad_clip must be >= 0");
  loss.validate();
  model.validate();
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_videos", std::to_string(batch_videos));
  kv.set("train_seed", std::to_string(seed));
  kv.set("optimizer", to_string(optimizer));
  kv.set("grad_clip", format_double(grad_clip));
  kv.set("shuffle", shuffle ? "true" : "false");
  kv.set("lambda", format_double(loss.lambda));
  kv.set("tau", format_double(loss.tau));
  const KeyValues model_kv = model.to_key_values();
  for (const auto& [k, v] : model_kv.entries()) kv.set(k, v);
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  if (kv.contains("learning_rate")) c.learning_rate = kv.get_double("learning_rate");
  if (kv.contains("epochs")) c.epochs = static_cast<int>(kv.get_int("epochs"));
  if (kv.contains("batch_videos")) c.batch_videos = static_cast<int>(kv.get_int("batch_videos"));
  if (kv.contains("train_seed")) c.seed = kv.get_uint64("train_seed");
  if (kv.contains("optimizer")) c.optimizer = optimizer_from_string(kv.get("optimizer"));
  if (kv.contains("grad_clip")) c.grad_clip = kv.get_double("grad_clip");
  if (kv.contains("shuffle")) {
    const std::string& s = kv.get("shuffle");
    if (s != "true" && s != "false") throw ParseError("shuffle must be true or false");
    c.shuffle = s == "true";
  }
  if (kv.contains("lambda")) c.loss.lambda = kv.get_double("lambda");
  if (kv.contains("tau")) c.loss.tau = kv.get_double("tau");
  c.model = SfTmnConfig::from_key_values(kv);
  return c;
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& r : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["train_acc"] = r.train_acc;
    out += j.dump() + "\n";
  }
  return out;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, ParamStore& params)
    : kind_(kind), lr_(learning_rate), params_(params) {
  for (const auto& [name, var] : params_.entries()) {
    m_.emplace_back(var.value().rows(), var.value().cols());
    v_.emplace_back(var.value().rows(), var.value().cols());
  }
}

void Optimizer::step(double grad_scale) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var p = entries[i].second;
    if (p.grad().empty()) continue;
    auto w = p.mutable_value().values();
    const auto g = p.grad().values();
    if (kind_ == OptimizerKind::Sgd) {
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr_ * grad_scale * g[k];
      continue;
    }
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = grad_scale * g[k];
      m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
      v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

std::vector<int> argmax_labels(const Tensor& scores) {
  std::vector<int> out(scores.cols(), 0);
  for (std::size_t t = 0; t < scores.cols(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.rows(); ++c)
      if (scores(c, t) > scores(best, t)) best = c;
    out[t] = static_cast<int>(best);
  }
  return out;
}

namespace {

void check_dataset(const SfTmnConfig& model, std::span<const VideoSample> dataset) {
  if (dataset.empty()) throw ValidationError("dataset is empty");
  for (const auto& v : dataset) {
    if (v.features.dim() != static_cast<std::size_t>(model.input_dim))
      throw ValidationError("video " + v.id + ": feature dim " + std::to_string(v.features.dim()) +
                            " but the model expects " + std::to_string(model.input_dim));
    if (v.labels.mapping.size() != static_cast<std::size_t>(model.num_classes))
      throw ValidationError("video " + v.id + ": " + std::to_string(v.labels.mapping.size()) +
                            " classes but the model predicts " + std::to_string(model.num_classes));
    if (v.features.frames() != v.labels.size())
      throw ValidationError("video " + v.id + ": feature and label lengths differ");
  }
}

double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, var] : params.entries())
    for (double g : var.grad().values()) sq += g * g;
  return std::sqrt(sq);
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const VideoSample> dataset,
                  const TrainOptions& options) {
  config.validate();
  check_dataset(config.model, dataset);

  TrainResult result{SfTmnNetwork(config.model), dataset.front().labels.mapping, {}};
  SfTmnNetwork& net = result.network;
  Optimizer opt(config.optimizer, config.learning_rate, net.params());
  Rng order_rng(config.seed);
  std::vector<std::size_t> order(dataset.size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
    }
    double loss_sum = 0.0;
    std::size_t correct = 0, frames = 0;
    std::size_t in_batch = 0;
    net.params().zero_grad();
    for (std::size_t n = 0; n < order.size(); ++n) {
      const VideoSample& video = dataset[order[n]];
      StageOutputs out = net.forward(video.features.values);
      Var loss = total_loss(out.combined, video.labels, config.loss);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", video " + video.id);
      backward(loss);
      loss_sum += value;
      const auto pred = argmax_labels(out.final_logits().value());
      for (std::size_t t = 0; t < pred.size(); ++t) correct += pred[t] == video.labels.labels[t];
      frames += pred.size();

      if (++in_batch == static_cast<std::size_t>(config.batch_videos) || n + 1 == order.size()) {
        double scale = 1.0 / static_cast<double>(in_batch);
        if (config.grad_clip > 0.0) {
          const double norm = global_grad_norm(net.params()) * scale;
          if (norm > config.grad_clip) scale *= config.grad_clip / norm;
        }
        opt.step(scale);
        net.params().zero_grad();
        in_batch = 0;
      }
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                    100.0 * static_cast<double>(correct) / static_cast<double>(frames)};
    result.log.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }

  if (options.checkpoint_path) {
    save_checkpoint(*options.checkpoint_path, net, result.mapping);
    result.log.checkpoint_path = options.checkpoint_path->string();
  }
  return result;
}

std::vector<int> predict(const SfTmnNetwork& network, const FeatureSequence& features) {
  if (features.dim() != static_cast<std::size_t>(network.config().input_dim))
    throw ValidationError("predict: feature dim " + std::to_string(features.dim()) +
                          " but the model expects " + std::to_string(network.config().input_dim));
  NoGradGuard no_grad;
  return argmax_labels(network.forward(features.values).final_logits().value());
}

LabelSequence predict(const Checkpoint& checkpoint, const FeatureSequence& features) {
  return {predict(checkpoint.network, features), checkpoint.mapping};
}

EvaluationReport evaluate(const SfTmnNetwork& network, std::span<const VideoSample> dataset,
                          const EvaluationOptions& options,
                          std::vector<VideoPrediction>* predictions) {
  check_dataset(network.config(), dataset);
  std::vector<VideoScores> rows;
  for (const auto& video : dataset) {
    const std::vector<int> pred = predict(network, video.features);
    const auto& gt = video.labels.labels;
    rows.push_back({video.id, frame_scores(pred, gt, network.config().num_classes, options.class_set),
                    segmental_scores(pred, gt)});
    if (predictions) predictions->push_back({video.id, pred, gt});
  }
  return make_report(std::move(rows));
}

EvaluationReport evaluate(const Checkpoint& checkpoint, std::span<const VideoSample> dataset,
                          const EvaluationOptions& options,
                          std::vector<VideoPrediction>* predictions) {
  for (const auto& v : dataset)
    if (v.labels.mapping.size() != checkpoint.mapping.size())
      throw ValidationError("evaluate: checkpoint has " + std::to_string(checkpoint.mapping.size()) +
                            " classes, dataset mapping has " + std::to_string(v.labels.mapping.size()));
  return evaluate(checkpoint.network, dataset, options, predictions);
}

}  // namespace sftmn
