#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "wsloc/harness.hpp"

namespace fs = std::filesystem;
using namespace wsloc;

namespace {

struct LoadedData {
  std::vector<AnnotatedSample> samples;
  DatasetSplit split;
  SplitData data;
};

LoadedData load_split(const std::string& dir, int image_size, std::uint64_t split_seed) {
  LoadedData out;
  out.samples = load_dataset(dir, image_size);
  out.split = split_dataset(out.samples, {0.8, 0.1, 0.1}, split_seed);
  out.data = materialize(out.samples, out.split);
  return out;
}

std::string split_json(const DatasetSplit& split) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["fractions"] = split.fractions;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  return j.dump(2) + "\n";
}

std::vector<AnnotatedSample> pick_split(const LoadedData& loaded, const std::string& which) {
  if (which == "test") return loaded.data.test;
  if (which == "val") return loaded.data.val;
  if (which == "train") return loaded.data.train;
  if (which == "all") return loaded.samples;
  throw InvalidInput("unknown split '" + which + "' (expected train, val, test or all)");
}

void emit_error(const std::string& type, const std::string& message, int code) {
  nlohmann::ordered_json j;
  j["error"] = {{"type", type}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << std::endl;
}

int cmd_generate(int n, int size, double positive_frac, std::uint64_t seed, const std::string& out) {
  SyntheticOptions options;
  options.count = n;
  options.image_size = size;
  options.positive_fraction = positive_frac;
  options.seed = seed;
  const auto samples = generate_synthetic(options);
  write_dataset(out, samples);
  int positives = 0;
  for (const auto& s : samples) positives += s.label;
  std::cout << "wrote " << samples.size() << " samples (" << positives << " positive) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out) {
  const TrainConfig config = TrainConfig::from_config(KeyValueConfig::load(config_path));
  const LoadedData loaded = load_split(data_dir, config.network.input_size, config.split_seed);
  fs::create_directories(out);
  TrainResult result = train(config, loaded.data);
  result.record.checkpoint_path = (fs::path(out) / "model.ckpt").string();
  save_checkpoint(result.record.checkpoint_path, result.model, config);
  write_file((fs::path(out) / "run.json").string(), run_record_json(result.record));
  write_file((fs::path(out) / "split.json").string(), split_json(loaded.split));
  const auto& r = result.record;
  std::cout << "run " << r.run_id << ": " << r.epochs.back().epoch << " epochs, best epoch " << r.best_epoch
            << ", val AUC " << r.val_auc << ", test AUC " << r.test_auc << " (" << r.stop_reason << ")\n";
  return r.diverged ? 5 : 0;
}

int cmd_sweep(const std::string& grid_path, const std::string& data_dir, const std::string& out, bool resume,
              int workers) {
  const SweepGrid grid = SweepGrid::from_config(KeyValueConfig::load(grid_path));
  const LoadedData loaded = load_split(data_dir, grid.base.network.input_size, grid.base.split_seed);
  fs::create_directories(out);
  write_file((fs::path(out) / "split.json").string(), split_json(loaded.split));
  SweepOptions options;
  options.out_dir = out;
  options.resume = resume;
  options.workers = workers;
  options.on_run = [](const RunRecord& r, bool resumed) {
    std::cout << (resumed ? "resumed " : "trained ") << r.run_id << " " << to_string(r.config.network.head)
              << " lr=" << r.config.learning_rate << " seed=" << r.config.seed << " val_auc=" << r.val_auc
              << std::endl;
  };
  const SweepSummary summary = sweep(grid, loaded.data, options);
  std::cout << summary.runs.size() << " runs (" << summary.trained << " trained, " << summary.resumed
            << " resumed); summary in " << (fs::path(out) / "summary.json").string() << "\n";
  if (summary.best_modified) {
    std::cout << "best modified run uses k=" << summary.runs[*summary.best_modified].config.network.pooling.k.to_string()
              << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_dir, const std::string& methods,
                 const std::string& report_path, const std::string& csv_path, const std::string& split,
                 const std::string& saliency_checkpoint, const SaliencyParams& params,
                 const std::string& confidence) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const LoadedData loaded = load_split(data_dir, ckpt.config.network.input_size, ckpt.config.split_seed);
  const auto samples = pick_split(loaded, split);
  EvaluationOptions options;
  options.saliency = params;
  if (confidence != "probability" && confidence != "max_cell") {
    throw InvalidInput("confidence must be 'probability' or 'max_cell'");
  }
  options.confidence_from_max_cell = confidence == "max_cell";
  const auto method_list = methods.empty() ? std::vector<SaliencyMethod>{} : parse_method_list(methods);
  if (saliency_checkpoint.empty()) options.methods = method_list;
  EvaluationReport report = evaluate(ckpt.model, ckpt.config.hash(), samples, options);
  if (!saliency_checkpoint.empty()) {
    const LoadedCheckpoint other = load_checkpoint(saliency_checkpoint);
    if (other.config.network.input_size != ckpt.config.network.input_size) {
      throw InvalidInput("saliency checkpoint uses a different input size");
    }
    for (const auto method : method_list) {
      MetricReport row = saliency_utility(other.model, samples, method, params);
      row.config["checkpoint"] = other.config.hash();
      report.metrics.push_back(std::move(row));
    }
  }
  const std::string json = report_json(report);
  if (report_path.empty()) {
    std::cout << json;
  } else {
    write_file(report_path, json);
  }
  if (!csv_path.empty()) write_file(csv_path, report_csv(report));
  if (!report_path.empty()) {
    for (const auto& m : report.metrics) std::cout << m.metric << " " << m.value << "\n";
  }
  return 0;
}

int cmd_triage(const std::string& checkpoint, const std::string& data_dir, double threshold,
               const std::string& split, const std::string& out) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.config.network.head != HeadKind::modified) {
    throw InvalidInput("triage needs a modified-head checkpoint (predicted boxes come from classwise maps)");
  }
  const LoadedData loaded = load_split(data_dir, ckpt.config.network.input_size, ckpt.config.split_seed);
  const auto samples = pick_split(loaded, split);
  const auto probabilities = predict(ckpt.model, samples);
  const auto detections = predicted_detections(ckpt.model, samples);
  const TriageResult result = triage_failures(probabilities, detections, samples, threshold);
  nlohmann::ordered_json j;
  j["threshold"] = threshold;
  j["split"] = split;
  j["false_positives"] = result.false_positives;
  j["false_negatives"] = result.false_negatives;
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return 0;
}

int cmd_visualize(const std::string& checkpoint, const std::string& data_dir, const std::string& ids,
                  const std::string& out, const std::string& method_tag_text, int scale,
                  const SaliencyParams& params) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const auto samples = load_dataset(data_dir, ckpt.config.network.input_size);
  std::vector<std::string> id_list;
  for (const auto& part : KeyValueConfig::parse("ids = " + ids).get_list("ids")) id_list.push_back(part);
  const auto chosen = select_samples(samples, id_list);
  const bool modified = ckpt.config.network.head == HeadKind::modified;
  std::optional<SaliencyMethod> method;
  if (!method_tag_text.empty()) method = parse_method(method_tag_text);
  if (!method && !modified) method = SaliencyMethod::grad;
  fs::create_directories(out);
  for (const auto& s : chosen) {
    std::vector<BoundingBox> predicted;
    Grid map;
    if (modified) {
      const ModifiedOutput o = forward_modified(ckpt.model, s.image);
      predicted.push_back(predicted_box(o.maps, o.maps.maps.channels - 1, o.probability, s.id).box);
      if (!method) map = classwise_saliency(o, s.image.size()).values;
    }
    if (method) map = compute_saliency(*method, ckpt.model, s.image, params).values;
    const auto path = fs::path(out) / (s.id + ".png");
    write_file(path.string(), render_overlay(s.image, map, s.boxes, predicted, scale));
    std::cout << path.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised localization with top-k/bottom-k pooling heads"};
  app.require_subcommand(1);

  int n = 2000;
  int size = 64;
  double positive_frac = 0.4;
  std::uint64_t seed = 0;
  std::string out;
  auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset (annotations.csv + PNGs)");
  gen->add_option("--n", n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--size", size, "Image side length S");
  gen->add_option("--positive-frac", positive_frac, "Fraction of positive samples");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out, "Output directory")->required();

  std::string config_path;
  std::string data_dir;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--config", config_path, "Training config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out, "Output directory")->required();

  std::string grid_path;
  bool resume = false;
  int workers = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train every grid point and summarize");
  sweep_cmd->add_option("--grid", grid_path, "Grid config file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--out", out, "Output directory")->required();
  sweep_cmd->add_flag("--resume", resume, "Skip runs already completed in --out");
  sweep_cmd->add_option("--workers", workers, "Parallel training threads (0 = all cores)");

  std::string checkpoint;
  std::string methods;
  std::string report_path;
  std::string csv_path;
  std::string split = "test";
  std::string saliency_checkpoint;
  std::string confidence = "probability";
  SaliencyParams params;
  auto add_saliency_options = [&](CLI::App* cmd) {
    cmd->add_option("--sg-samples", params.sg_samples, "SmoothGrad samples");
    cmd->add_option("--sg-sigma", params.sg_sigma_frac, "SmoothGrad noise as a fraction of the pixel range");
    cmd->add_option("--ig-steps", params.ig_steps, "Integrated-gradients steps");
    cmd->add_option("--ig-baseline", params.ig_baseline, "Constant integrated-gradients baseline");
    cmd->add_option_function<std::string>(
           "--ig-rule", [&](const std::string& v) { params.ig_rule = parse_ig_rule(v); },
           "Integrated-gradients sample point: midpoint or right")
        ->check(CLI::IsMember({"midpoint", "right"}));
    cmd->add_option("--saliency-seed", params.rng_seed, "Noise seed for stochastic methods");
  };
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--methods", methods, "Comma-separated saliency methods (GRAD,SG,IG,SIG,GCAM,GBP,GGCAM)");
  eval_cmd->add_option("--report", report_path, "JSON report path (stdout if omitted)");
  eval_cmd->add_option("--csv", csv_path, "Optional CSV report path");
  eval_cmd->add_option("--split", split, "train, val, test or all");
  eval_cmd->add_option("--saliency-checkpoint", saliency_checkpoint,
                       "Compute saliency maps on this model instead")->check(CLI::ExistingFile);
  eval_cmd->add_option("--confidence", confidence, "Pointwise-detection confidence: probability or max_cell");
  add_saliency_options(eval_cmd);

  double threshold = 0.5;
  auto* triage_cmd = app.add_subcommand("triage", "List false positives and box-missing true positives");
  triage_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  triage_cmd->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  triage_cmd->add_option("--threshold", threshold, "Probability threshold");
  triage_cmd->add_option("--split", split, "train, val, test or all");
  triage_cmd->add_option("--out", out, "JSON output path (stdout if omitted)");

  std::string ids;
  std::string method_tag_text;
  int scale = 4;
  auto* vis_cmd = app.add_subcommand("visualize", "Render heatmap overlays as PNG");
  vis_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  vis_cmd->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  vis_cmd->add_option("--ids", ids, "Comma-separated sample ids")->required();
  vis_cmd->add_option("--out", out, "Output directory")->required();
  vis_cmd->add_option("--method", method_tag_text, "Saliency method (default: classwise map or GRAD)");
  vis_cmd->add_option("--scale", scale, "Integer upscaling factor");
  add_saliency_options(vis_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what(), 64);
    return 64;
  }

  try {
    if (*gen) return cmd_generate(n, size, positive_frac, seed, out);
    if (*train_cmd) return cmd_train(config_path, data_dir, out);
    if (*sweep_cmd) return cmd_sweep(grid_path, data_dir, out, resume, workers);
    if (*eval_cmd) {
      return cmd_evaluate(checkpoint, data_dir, methods, report_path, csv_path, split, saliency_checkpoint,
                          params, confidence);
    }
    if (*triage_cmd) return cmd_triage(checkpoint, data_dir, threshold, split, out);
    if (*vis_cmd) return cmd_visualize(checkpoint, data_dir, ids, out, method_tag_text, scale, params);
  } catch (const ParseError& e) {
    emit_error("parse_error", e.what(), 4);
    return 4;
  } catch (const UndefinedMetric& e) {
    emit_error("undefined_metric", e.what(), 3);
    return 3;
  } catch (const InvalidInput& e) {
    emit_error("invalid_input", e.what(), 2);
    return 2;
  } catch (const std::exception& e) {
    emit_error("error", e.what(), 1);
    return 1;
  }
  return 0;
}
