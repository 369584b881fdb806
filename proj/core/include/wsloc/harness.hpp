#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wsloc/config.hpp"
#include "wsloc/data.hpp"
#include "wsloc/image_io.hpp"
#include "wsloc/metrics.hpp"
#include "wsloc/network.hpp"
#include "wsloc/saliency.hpp"

namespace wsloc {

/// Adam + binary cross-entropy training settings.
struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 30;
  int patience = 10;
  /// An epoch counts as an improvement when it lowers the best validation
  /// loss by at least this much.
  double min_delta = 1e-5;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  NetworkSpec network;

  void validate() const;
  /// Canonical `key = value` text; also the input of hash().
  KeyValueConfig to_config() const;
  /// Unknown keys are rejected. With apply_env, WSLOC_SEED replaces `seed`.
  static TrainConfig from_config(const KeyValueConfig& config, bool apply_env = true);
  /// 16 hex digits identifying the configuration.
  std::string hash() const;
};

/// Reads WSLOC_SEED; nullopt when unset.
std::optional<std::uint64_t> seed_override();

struct EpochRecord {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;
};

struct RunRecord {
  std::string run_id;
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double val_auc = 0.0;   // at best_epoch
  double test_auc = 0.0;  // NaN when the test split lacks a class
  bool diverged = false;
  std::string stop_reason;
  std::string checkpoint_path;
  /// Test-split localization scores of modified-head runs, filled by sweep.
  std::map<std::string, double> test_metrics;

  const EpochRecord& best() const;
};

/// Samples of one dataset split, materialized.
struct SplitData {
  std::vector<AnnotatedSample> train;
  std::vector<AnnotatedSample> val;
  std::vector<AnnotatedSample> test;
};

SplitData materialize(std::span<const AnnotatedSample> samples, const DatasetSplit& split);

struct TrainResult {
  RunRecord record;
  Network model;
};

/// Trains until validation loss stalls for `patience` epochs or max_epochs,
/// then restores the best-validation-loss parameters. A non-finite loss ends
/// the run with `diverged` set.
TrainResult train(const TrainConfig& config, const SplitData& data);

/// Probability of the positive class for each sample.
std::vector<double> predict(const Network& model, std::span<const AnnotatedSample> samples);
/// Mean binary cross-entropy of probabilities against sample labels.
double mean_bce(std::span<const double> probabilities, std::span<const AnnotatedSample> samples);
/// roc_auc, or NaN when only one class is present.
double auc_or_nan(std::span<const double> probabilities, std::span<const AnnotatedSample> samples);

/// Highest val_auc, ties to the lower run id. Throws on an empty list.
const RunRecord& select_best(std::span<const RunRecord> records);

struct EvaluationOptions {
  std::vector<SaliencyMethod> methods;
  SaliencyParams saliency;
  /// Pointwise-detection confidence: class probability (default) or the
  /// maximum cell of the positive class map.
  bool confidence_from_max_cell = false;
};

struct EvaluationReport {
  std::string run_id;
  std::string architecture;
  std::string head;
  std::vector<MetricReport> metrics;

  const MetricReport* find(const std::string& metric) const;
};

/// Test AUC; for a modified head also pointwise AP and classwise-map
/// utility; then one utility row per requested saliency method computed on
/// `model`. Nothing here looks at ground truth except the scoring itself.
EvaluationReport evaluate(const Network& model, const std::string& run_id,
                          std::span<const AnnotatedSample> test, const EvaluationOptions& options);

/// Localization utility of one saliency method over the annotated samples.
/// Stochastic methods draw from mix_seed(params.rng_seed, sample index).
MetricReport saliency_utility(const DifferentiableModel& model, std::span<const AnnotatedSample> test,
                              SaliencyMethod method, const SaliencyParams& params);

/// Normalized S x S map of the positive class, block-upsampled.
SaliencyMap classwise_saliency(const ModifiedOutput& output, int image_size);
/// One predicted box per sample from the positive class map.
std::vector<Detection> predicted_detections(const Network& model,
                                            std::span<const AnnotatedSample> samples,
                                            bool confidence_from_max_cell = false);

struct SweepGrid {
  std::vector<double> learning_rates{1e-3, 3e-4};
  std::vector<PoolSize> ks{PoolSize::count(1), PoolSize::count(2), PoolSize::count(4)};
  std::vector<double> alphas{0.0, 0.6, 1.0};
  std::vector<int> maps_per_class{1, 4};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<HeadKind> heads{HeadKind::baseline, HeadKind::modified};
  /// Shared settings (batch size, epochs, patience, input size, ...).
  TrainConfig base;

  void validate() const;
  /// Baseline runs span learning rates x seeds; modified runs span every axis.
  std::vector<TrainConfig> expand() const;
  static SweepGrid from_config(const KeyValueConfig& config);
};

struct SweepOptions {
  std::string out_dir;
  bool resume = false;
  int workers = 0;  // 0 = hardware concurrency
  std::function<void(const RunRecord&, bool resumed)> on_run;
};

struct SweepSummary {
  std::vector<RunRecord> runs;  // in grid order
  std::size_t trained = 0;
  std::size_t resumed = 0;
  std::optional<std::size_t> best_baseline;
  std::optional<std::size_t> best_modified;
  std::string summary_csv;
  std::string summary_json;
};

/// Trains every grid point (in parallel), persisting runs/<id>.json and
/// checkpoints/<id>.ckpt under out_dir. With resume, runs whose record and
/// checkpoint already exist are loaded instead of retrained.
SweepSummary sweep(const SweepGrid& grid, const SplitData& data, const SweepOptions& options);

/// Checkpoint: text header then little-endian float64 parameters.
void save_checkpoint(const std::string& path, const Network& model, const TrainConfig& config);
struct LoadedCheckpoint {
  Network model;
  TrainConfig config;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

std::string run_record_json(const RunRecord& record);
RunRecord parse_run_record_json(const std::string& text);
std::string report_json(const EvaluationReport& report);
std::string metric_report_json(const MetricReport& report);
/// One row per (metric, image) plus one aggregate row per metric.
std::string report_csv(const EvaluationReport& report);

/// Grayscale image blended 50/50 with a color-mapped map, ground-truth boxes
/// in green and predicted boxes in red, scaled up by an integer factor.
Bytes render_overlay(const Image& image, const Grid& map, std::span<const BoundingBox> truth,
                     std::span<const BoundingBox> predicted, int scale = 4);

}  // namespace wsloc
