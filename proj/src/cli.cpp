#include "sftmn/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "sftmn/errors.hpp"
#include "sftmn/harness.hpp"
#include "sftmn/ribbon.hpp"

namespace sftmn {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

fs::path require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": no such file " + path);
  return path;
}

struct DatasetFlags {
  std::string root;
  std::string split;
  std::string mapping;
  std::string layout = "DxT";

  void add_to(CLI::App& app, bool required) {
    auto* r = app.add_option("--dataset-root", root, "Dataset directory (features/, groundTruth/)");
    auto* s = app.add_option("--split", split, "Split bundle path, or a name under <root>/splits/");
    if (required) {
      r->required();
      s->required();
    }
    app.add_option("--mapping", mapping, "Class mapping file (default <root>/mapping.txt)");
    app.add_option("--feature-layout", layout, "Orientation of NPY feature arrays")
        ->check(CLI::IsMember({"DxT", "TxD"}));
  }

  bool given() const { return !root.empty(); }

  std::vector<VideoSample> load() const {
    if (!fs::is_directory(root)) throw UsageError("--dataset-root: no such directory " + root);
    fs::path split_path = split;
    if (!fs::is_regular_file(split_path)) split_path = fs::path(root) / "splits" / (split + ".bundle");
    if (!fs::is_regular_file(split_path)) throw UsageError("--split: cannot find " + split);
    const fs::path mapping_path =
        mapping.empty() ? fs::path(root) / "mapping.txt" : require_file(mapping, "--mapping");
    if (!fs::is_regular_file(mapping_path))
      throw UsageError("--mapping: no such file " + mapping_path.string());
    return load_dataset(root, split_path, parse_mapping(mapping_path),
                        feature_layout_from_string(layout));
  }
};

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir, const std::string& format,
              const std::string& layout, const std::string& split_name, std::ostream& out) {
  const SyntheticDataset data = generate_synthetic(spec);
  write_dataset(out_dir, data.videos, data.mapping, split_name, feature_format_from_string(format),
                feature_layout_from_string(layout));
  out << "wrote " << data.videos.size() << " videos to " << out_dir << "\n";
  return kExitOk;
}

void write_label_file(const fs::path& path, const std::vector<int>& labels, const ClassMapping& m) {
  std::string text;
  for (int l : labels) text += m.name(l) + "\n";
  write_text(path, text);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SlowFast temporal modeling for action segmentation", "sftmn"};
  app.require_subcommand(1);

  // synth
  SyntheticSpec synth;
  std::string synth_out, synth_format = "npy", synth_layout = "DxT", synth_split = "all";
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset");
  synth_cmd->add_option("--out", synth_out, "Output dataset directory")->required();
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--videos", synth.num_videos)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", synth.num_classes)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--feature-dim", synth.feature_dim)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--min-length", synth.min_length)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--max-length", synth.max_length)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--mean-segment", synth.mean_segment);
  synth_cmd->add_option("--noise", synth.noise);
  synth_cmd->add_option("--separation", synth.separation);
  synth_cmd->add_option("--format", synth_format)->check(CLI::IsMember({"npy", "raw"}));
  synth_cmd->add_option("--feature-layout", synth_layout)->check(CLI::IsMember({"DxT", "TxD"}));
  synth_cmd->add_option("--split-name", synth_split);

  // train
  DatasetFlags train_data;
  std::string config_file, train_out;
  std::string backbone = "mstcn", model = "sftmn", design = "a", pool = "max", optimizer = "adam";
  int segment_length = 32, stages = 4, decoders = 3, layers = 10, feature_maps = 64, epochs = 200,
      batch = 1;
  double power_p = 2.0, lr = 1e-4, lambda = 0.15, tau = 4.0;
  std::uint64_t seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_data.add_to(*train_cmd, true);
  train_cmd->add_option("--config", config_file, "key=value config file; flags override it");
  auto* o_backbone = train_cmd->add_option("--backbone", backbone)->check(CLI::IsMember({"mstcn", "asformer"}));
  auto* o_model = train_cmd->add_option("--model", model)->check(CLI::IsMember({"single", "sftmn"}));
  auto* o_design = train_cmd->add_option("--design", design)->check(CLI::IsMember({"a", "b", "c", "d"}));
  auto* o_seglen = train_cmd->add_option("--segment-length", segment_length)->check(CLI::PositiveNumber);
  auto* o_pool = train_cmd->add_option("--pool", pool)->check(CLI::IsMember({"max", "avg", "power"}));
  auto* o_power = train_cmd->add_option("--power-p", power_p)->check(CLI::PositiveNumber);
  auto* o_stages = train_cmd->add_option("--stages", stages, "MS-TCN stages per path")->check(CLI::PositiveNumber);
  auto* o_decoders = train_cmd->add_option("--decoders", decoders, "ASFormer decoders per path")->check(CLI::NonNegativeNumber);
  auto* o_layers = train_cmd->add_option("--layers", layers)->check(CLI::PositiveNumber);
  auto* o_maps = train_cmd->add_option("--feature-maps", feature_maps)->check(CLI::PositiveNumber);
  auto* o_epochs = train_cmd->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  auto* o_lr = train_cmd->add_option("--lr", lr)->check(CLI::PositiveNumber);
  auto* o_lambda = train_cmd->add_option("--lambda", lambda)->check(CLI::NonNegativeNumber);
  auto* o_tau = train_cmd->add_option("--tau", tau)->check(CLI::PositiveNumber);
  auto* o_seed = train_cmd->add_option("--seed", seed);
  auto* o_opt = train_cmd->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"}));
  auto* o_batch = train_cmd->add_option("--batch", batch)->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  // eval
  DatasetFlags eval_data;
  std::string eval_ckpt, eval_out, class_set = "union";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_data.add_to(*eval_cmd, true);
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--class-set", class_set, "Macro-average over classes in gt∪pred or gt only")
      ->check(CLI::IsMember({"union", "gt"}));
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();

  // predict
  DatasetFlags predict_data;
  std::string predict_ckpt, predict_out, predict_features;
  auto* predict_cmd = app.add_subcommand("predict", "Write per-frame predictions");
  predict_data.add_to(*predict_cmd, false);
  predict_cmd->add_option("--checkpoint", predict_ckpt)->required();
  predict_cmd->add_option("--features", predict_features, "A single feature file");
  predict_cmd->add_option("--out", predict_out, "Output directory")->required();

  // ribbon
  DatasetFlags ribbon_data;
  std::string ribbon_ckpt, ribbon_out, ribbon_format = "svg";
  auto* ribbon_cmd = app.add_subcommand("ribbon", "Render prediction/ground-truth ribbons");
  ribbon_data.add_to(*ribbon_cmd, true);
  ribbon_cmd->add_option("--checkpoint", ribbon_ckpt, "Adds a prediction row above ground truth");
  ribbon_cmd->add_option("--format", ribbon_format)->check(CLI::IsMember({"svg", "ppm", "csv"}));
  ribbon_cmd->add_option("--out", ribbon_out, "Output directory")->required();

  std::vector<const char*> argv{"sftmn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      return cmd_synth(synth, synth_out, synth_format, synth_layout, synth_split, out);
    }

    if (train_cmd->parsed()) {
      TrainConfig cfg;
      if (!config_file.empty())
        cfg = TrainConfig::from_key_values(KeyValues::read_file(require_file(config_file, "--config")));
      if (o_backbone->count()) cfg.model.backbone = backbone_from_string(backbone);
      if (o_model->count()) cfg.model.model = model_from_string(model);
      if (o_design->count()) cfg.model.design = design_from_string(design);
      if (o_seglen->count()) cfg.model.segment_length = segment_length;
      if (o_pool->count()) cfg.model.pooling.kind = pool_kind_from_string(pool);
      if (o_power->count()) cfg.model.pooling.power = power_p;
      if (cfg.model.backbone == BackboneKind::MsTcn && o_stages->count())
        cfg.model.refinement_stages = stages - 1;
      if (cfg.model.backbone == BackboneKind::Asformer && o_decoders->count())
        cfg.model.refinement_stages = decoders;
      if (o_layers->count()) cfg.model.layers = layers;
      if (o_maps->count()) cfg.model.feature_maps = feature_maps;
      if (o_epochs->count()) cfg.epochs = epochs;
      if (o_lr->count()) cfg.learning_rate = lr;
      if (o_lambda->count()) cfg.loss.lambda = lambda;
      if (o_tau->count()) cfg.loss.tau = tau;
      if (o_seed->count()) {
        cfg.seed = seed;
        cfg.model.seed = seed;
      }
      if (o_opt->count()) cfg.optimizer = optimizer_from_string(optimizer);
      if (o_batch->count()) cfg.batch_videos = batch;

      const auto data = train_data.load();
      if (data.empty()) throw ValidationError("split lists no videos");
      cfg.model.input_dim = static_cast<int>(data.front().features.dim());
      cfg.model.num_classes = static_cast<int>(data.front().labels.mapping.size());

      const fs::path dir = train_out;
      fs::create_directories(dir);
      write_text(dir / "train_config.txt", cfg.to_key_values().to_text());
      const auto started = std::chrono::steady_clock::now();
      TrainOptions opts;
      opts.checkpoint_path = dir / "model.ckpt";
      TrainResult result = train(cfg, data, opts);
      write_text(dir / "train_log.jsonl", result.log.to_jsonl());
      const auto& last = result.log.epochs.back();
      out << "epoch " << last.epoch << " loss " << last.loss << " train_acc " << last.train_acc << "\n";
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      err << "elapsed_seconds " << elapsed.count() << "\n";
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(require_file(eval_ckpt, "--checkpoint"));
      const auto data = eval_data.load();
      EvaluationOptions opts;
      opts.class_set = class_set == "gt" ? MacroClassSet::GtOnly : MacroClassSet::GtUnionPred;
      std::vector<VideoPrediction> preds;
      const EvaluationReport report = evaluate(ckpt, data, opts, &preds);
      const fs::path dir = eval_out;
      write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
      write_text(dir / "report.csv", report_to_csv(report));
      for (const auto& p : preds)
        write_label_file(dir / "predictions" / (p.video_id + ".txt"), p.predicted, ckpt.mapping);
      out << "accuracy " << report.frame.accuracy.mean << " ± " << report.frame.accuracy.std
          << "  edit " << report.segmental.edit.mean << "  f1_avg " << report.segmental.f1_avg.mean
          << "\n";
      return kExitOk;
    }

    if (predict_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(require_file(predict_ckpt, "--checkpoint"));
      const fs::path dir = predict_out;
      const FeatureLayout layout = feature_layout_from_string(predict_data.layout);
      if (!predict_features.empty()) {
        const fs::path f = require_file(predict_features, "--features");
        const LabelSequence labels = predict(ckpt, read_features(f, layout));
        write_label_file(dir / (f.stem().string() + ".txt"), labels.labels, ckpt.mapping);
      } else if (predict_data.given()) {
        for (const auto& v : predict_data.load())
          write_label_file(dir / (v.id + ".txt"), predict(ckpt, v.features).labels, ckpt.mapping);
      } else {
        throw UsageError("predict needs --features or --dataset-root/--split");
      }
      return kExitOk;
    }

    if (ribbon_cmd->parsed()) {
      const auto data = ribbon_data.load();
      std::unique_ptr<Checkpoint> ckpt;
      if (!ribbon_ckpt.empty())
        ckpt = std::make_unique<Checkpoint>(load_checkpoint(require_file(ribbon_ckpt, "--checkpoint")));
      const RibbonFormat format = ribbon_format_from_string(ribbon_format);
      for (const auto& v : data) {
        RibbonSpec spec;
        spec.format = format;
        spec.mapping = v.labels.mapping;
        spec.palette = default_palette(v.labels.mapping.size());
        if (ckpt) spec.rows.push_back({"prediction", predict(*ckpt, v.features).labels});
        spec.rows.push_back({"ground_truth", v.labels.labels});
        render_ribbon(spec, fs::path(ribbon_out) / (v.id + extension(format)));
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sftmn
