#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "wsloc/saliency.hpp"
#include "wsloc/types.hpp"
#include "wsloc/wildcat_head.hpp"

namespace wsloc {

struct AnnotatedSample;

/// Axis-aligned box in pixel units; (x, y) is the top-left corner.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_x() const { return x + w / 2.0; }
  double center_y() const { return y + h / 2.0; }
  /// Inclusive on all four edges.
  bool contains(double px, double py) const {
    return px >= x && px <= x + w && py >= y && py <= y + h;
  }
  /// True when the pixel [col, col+1) x [row, row+1) is covered, i.e. its
  /// center lies inside the box.
  bool covers_pixel(int row, int col) const { return contains(col + 0.5, row + 0.5); }

  bool operator==(const BoundingBox&) const = default;
};

/// Throws InvalidInput unless w, h > 0, all fields finite, and the box
/// intersects the S x S image.
void validate_box(const BoundingBox& box, int image_size);

struct Detection {
  BoundingBox box;
  double confidence = 0.0;
  std::string image_id;
};

/// Binary S x S mask of the union of ground-truth boxes.
struct AnnotationMask {
  Grid values;

  int positives() const;
};

AnnotationMask annotation_mask(std::span<const BoundingBox> boxes, int image_size);

struct PerImageValue {
  std::string image_id;
  double value = 0.0;
};

/// A scalar metric with its per-image breakdown. For mean-aggregated metrics
/// `value` is the unweighted mean of `per_image`.
struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::vector<PerImageValue> per_image;
  std::vector<std::string> excluded;  // image ids skipped as undefined
  std::map<std::string, std::string> config;
};

/// Mann-Whitney concordance; ties count one half.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

/// Nearest-neighbour block upsampling of an s x s map to S x S.
Grid extrapolate_map(const Grid& map, int image_size);

/// d x d box on the argmax cell (row-major tie-break) of a classwise map.
Detection predicted_box(const ClasswiseMaps& maps, int class_index, double confidence,
                        std::string image_id = {});

/// Pointwise average precision. A detection is a true positive when its box
/// center lies inside a not-yet-matched ground-truth box of the same image,
/// matching greedily in descending confidence. AP is the area under the
/// all-point precision envelope. Detections with equal confidence form one
/// threshold group.
double pointwise_ap(const std::vector<std::vector<Detection>>& detections,
                    const std::vector<std::vector<BoundingBox>>& ground_truth);

/// Per-pixel map holding the highest confidence of the boxes covering each
/// pixel (0 if uncovered), then min-max normalized.
SaliencyMap boxes_to_map(std::span<const Detection> detections, int image_size);
/// Same, before normalization.
Grid boxes_to_raw_map(std::span<const Detection> detections, int image_size);

/// Average precision of the pixel ranking induced by the map against the mask.
/// Equal scores form one threshold group. Throws UndefinedMetric for an empty
/// mask.
double localization_auprc(const Grid& map, const AnnotationMask& mask);
double localization_auprc(const SaliencyMap& map, const AnnotationMask& mask);

/// Mean localization_auprc over samples with at least one ground-truth box;
/// others are listed in `excluded`. maps[i] belongs to samples[i].
MetricReport localization_utility(std::span<const SaliencyMap> maps,
                                  std::span<const AnnotatedSample> samples,
                                  const std::string& metric_name = "localization_utility");

struct TriageResult {
  std::vector<std::string> false_positives;  // label 0, predicted positive
  std::vector<std::string> false_negatives;  // label 1, predicted positive, box misses
};

/// probabilities[i] and detections[i] belong to samples[i].
TriageResult triage_failures(std::span<const double> probabilities,
                             std::span<const Detection> detections,
                             std::span<const AnnotatedSample> samples, double threshold);

/// Classification score per image for detection-only baselines: the highest
/// box confidence, 0 for images without boxes.
std::vector<double> image_scores_from_detections(std::span<const Detection> detections,
                                                 std::span<const std::string> image_ids);

/// Detection file with header `image_id,confidence,x,y,width,height`.
std::vector<Detection> read_detections_csv(const std::string& path);
void write_detections_csv(const std::string& path, std::span<const Detection> detections);

}  // namespace wsloc
