#include "wsloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "text_util.hpp"
#include "wsloc/data.hpp"

namespace wsloc {

void validate_box(const BoundingBox& box, int image_size) {
  if (!std::isfinite(box.x) || !std::isfinite(box.y) || !std::isfinite(box.w) ||
      !std::isfinite(box.h)) {
    throw InvalidInput("bounding box has non-finite coordinates");
  }
  if (!(box.w > 0.0 && box.h > 0.0)) throw InvalidInput("bounding box needs w > 0 and h > 0");
  if (box.x >= image_size || box.y >= image_size || box.x + box.w <= 0.0 ||
      box.y + box.h <= 0.0) {
    throw InvalidInput("bounding box does not intersect the image");
  }
}

int AnnotationMask::positives() const {
  return static_cast<int>(std::count(values.data.begin(), values.data.end(), 1.0));
}

AnnotationMask annotation_mask(std::span<const BoundingBox> boxes, int image_size) {
  AnnotationMask mask{Grid(image_size, image_size)};
  for (const auto& box : boxes) {
    for (int r = 0; r < image_size; ++r) {
      for (int c = 0; c < image_size; ++c) {
        if (box.covers_pixel(r, c)) mask.values(r, c) = 1.0;
      }
    }
  }
  return mask;
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw InvalidInput("roc_auc: labels and scores differ in size");
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidInput("roc_auc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetric("roc_auc needs both classes (got " + std::to_string(positives) +
                          " positives, " + std::to_string(negatives) + " negatives)");
  }
  if (!all_finite(scores)) throw InvalidInput("roc_auc: scores must be finite");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups upward; each positive beats every negative strictly below.
  double concordant = 0.0;
  std::size_t negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos = 0;
    std::size_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    concordant += static_cast<double>(pos) * static_cast<double>(negatives_below) +
                  0.5 * static_cast<double>(pos) * static_cast<double>(neg);
    negatives_below += neg;
    i = j;
  }
  return concordant / (static_cast<double>(positives) * static_cast<double>(negatives));
}

Grid extrapolate_map(const Grid& map, int image_size) {
  if (map.rows <= 0 || map.cols <= 0 || image_size % map.rows != 0 ||
      image_size % map.cols != 0) {
    throw InvalidInput("cannot extrapolate a " + std::to_string(map.rows) + "x" +
                       std::to_string(map.cols) + " map to " + std::to_string(image_size) +
                       " pixels: size must be an exact multiple");
  }
  const int dy = image_size / map.rows;
  const int dx = image_size / map.cols;
  Grid out(image_size, image_size);
  for (int r = 0; r < image_size; ++r) {
    for (int c = 0; c < image_size; ++c) out(r, c) = map(r / dy, c / dx);
  }
  return out;
}

Detection predicted_box(const ClasswiseMaps& maps, int class_index, double confidence,
                        std::string image_id) {
  if (class_index < 0 || class_index >= maps.maps.channels) {
    throw InvalidInput("class index " + std::to_string(class_index) + " out of range");
  }
  const auto cells = maps.maps.channel(class_index);
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (cells[i] > cells[best]) best = i;
  }
  const int s = maps.maps.cols;
  const double d = maps.geometry.block();
  const int row = static_cast<int>(best) / s;
  const int col = static_cast<int>(best) % s;
  return Detection{BoundingBox{col * d, row * d, d, d}, confidence, std::move(image_id)};
}

double pointwise_ap(const std::vector<std::vector<Detection>>& detections,
                    const std::vector<std::vector<BoundingBox>>& ground_truth) {
  if (detections.size() != ground_truth.size()) {
    throw InvalidInput("pointwise_ap: need one detection list per image");
  }
  std::size_t total_gt = 0;
  for (const auto& g : ground_truth) total_gt += g.size();
  if (total_gt == 0) throw UndefinedMetric("pointwise_ap: no ground-truth boxes");

  struct Entry {
    double confidence;
    std::size_t image;
    std::size_t index;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t k = 0; k < detections[i].size(); ++k) {
      const double c = detections[i][k].confidence;
      if (!std::isfinite(c) || c < 0.0 || c > 1.0) {
        throw InvalidInput("detection confidence must be finite and in [0, 1]");
      }
      entries.push_back({c, i, k});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });

  std::vector<std::vector<bool>> matched(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) matched[i].assign(ground_truth[i].size(), false);

  std::vector<double> recall;
  std::vector<double> precision;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const Entry& en = entries[e];
    const BoundingBox& box = detections[en.image][en.index].box;
    const auto& gts = ground_truth[en.image];
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (!matched[en.image][g] && gts[g].contains(box.center_x(), box.center_y())) {
        matched[en.image][g] = true;
        ++tp;
        break;
      }
    }
    ++seen;
    const bool group_end =
        e + 1 == entries.size() || entries[e + 1].confidence != en.confidence;
    if (group_end) {
      recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    }
  }

  // Area under the monotone precision envelope.
  double ap = 0.0;
  double envelope = 0.0;
  for (std::size_t i = recall.size(); i-- > 0;) {
    envelope = std::max(envelope, precision[i]);
    const double previous = i == 0 ? 0.0 : recall[i - 1];
    ap += (recall[i] - previous) * envelope;
  }
  return ap;
}

Grid boxes_to_raw_map(std::span<const Detection> detections, int image_size) {
  Grid raw(image_size, image_size);
  for (const auto& det : detections) {
    for (int r = 0; r < image_size; ++r) {
      for (int c = 0; c < image_size; ++c) {
        if (det.box.covers_pixel(r, c)) raw(r, c) = std::max(raw(r, c), det.confidence);
      }
    }
  }
  return raw;
}

SaliencyMap boxes_to_map(std::span<const Detection> detections, int image_size) {
  return normalize_map(boxes_to_raw_map(detections, image_size), SaliencyMethod::boxes);
}

double localization_auprc(const Grid& map, const AnnotationMask& mask) {
  if (map.rows != mask.values.rows || map.cols != mask.values.cols) {
    throw InvalidInput("map and annotation mask differ in shape");
  }
  if (!all_finite(map.data)) throw InvalidInput("map has non-finite values");
  const int positives = mask.positives();
  if (positives == 0) throw UndefinedMetric("annotation mask has no positive pixels");

  std::vector<std::size_t> order(map.data.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return map.data[a] > map.data[b]; });

  double ap = 0.0;
  double previous_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && map.data[order[j]] == map.data[order[i]]) {
      if (mask.values.data[order[j]] == 1.0) ++tp;
      ++j;
    }
    const double recall = static_cast<double>(tp) / positives;
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    ap += (recall - previous_recall) * precision;
    previous_recall = recall;
    i = j;
  }
  return ap;
}

double localization_auprc(const SaliencyMap& map, const AnnotationMask& mask) {
  return localization_auprc(map.values, mask);
}

MetricReport localization_utility(std::span<const SaliencyMap> maps,
                                  std::span<const AnnotatedSample> samples,
                                  const std::string& metric_name) {
  if (maps.size() != samples.size()) {
    throw InvalidInput("localization_utility: need one map per sample");
  }
  MetricReport report;
  report.metric = metric_name;
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& sample = samples[i];
    if (sample.boxes.empty()) {
      report.excluded.push_back(sample.id);
      continue;
    }
    const AnnotationMask mask = annotation_mask(sample.boxes, sample.image.size());
    if (mask.positives() == 0) {
      report.excluded.push_back(sample.id);
      continue;
    }
    const double v = localization_auprc(maps[i], mask);
    report.per_image.push_back({sample.id, v});
    sum += v;
  }
  if (report.per_image.empty()) {
    throw UndefinedMetric("localization_utility: no images with ground-truth boxes");
  }
  report.value = sum / static_cast<double>(report.per_image.size());
  return report;
}

TriageResult triage_failures(std::span<const double> probabilities,
                             std::span<const Detection> detections,
                             std::span<const AnnotatedSample> samples, double threshold) {
  if (probabilities.size() != samples.size() || detections.size() != samples.size()) {
    throw InvalidInput("triage_failures: need one probability and detection per sample");
  }
  TriageResult result;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (probabilities[i] < threshold) continue;
    const auto& sample = samples[i];
    if (sample.label == 0) {
      result.false_positives.push_back(sample.id);
      continue;
    }
    const BoundingBox& box = detections[i].box;
    const bool hit = std::any_of(sample.boxes.begin(), sample.boxes.end(), [&](const BoundingBox& g) {
      return g.contains(box.center_x(), box.center_y());
    });
    if (!hit) result.false_negatives.push_back(sample.id);
  }
  return result;
}

std::vector<double> image_scores_from_detections(std::span<const Detection> detections,
                                                 std::span<const std::string> image_ids) {
  std::unordered_map<std::string, double> best;
  for (const auto& d : detections) {
    auto [it, inserted] = best.emplace(d.image_id, d.confidence);
    if (!inserted) it->second = std::max(it->second, d.confidence);
  }
  std::vector<double> scores;
  scores.reserve(image_ids.size());
  for (const auto& id : image_ids) {
    auto it = best.find(id);
    scores.push_back(it == best.end() ? 0.0 : it->second);
  }
  return scores;
}

namespace {
constexpr std::string_view kDetectionHeader = "image_id,confidence,x,y,width,height";
}

std::vector<Detection> read_detections_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open detection file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || text::strip_cr(line) != kDetectionHeader) {
    throw ParseError(path, 1, "expected header '" + std::string(kDetectionHeader) + "'");
  }
  std::vector<Detection> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = text::strip_cr(line);
    if (text::trim(row).empty()) continue;
    const auto fields = text::split(row);
    if (fields.size() != 6) throw ParseError(path, line_no, "expected 6 fields");
    Detection d;
    d.image_id = std::string(text::trim(fields[0]));
    const auto conf = text::parse_double(fields[1]);
    const auto x = text::parse_double(fields[2]);
    const auto y = text::parse_double(fields[3]);
    const auto w = text::parse_double(fields[4]);
    const auto h = text::parse_double(fields[5]);
    if (!conf || !x || !y || !w || !h) throw ParseError(path, line_no, "malformed number");
    if (!(*conf >= 0.0 && *conf <= 1.0)) throw ParseError(path, line_no, "confidence outside [0, 1]");
    if (!(*w > 0.0 && *h > 0.0)) throw ParseError(path, line_no, "box needs positive width and height");
    d.confidence = *conf;
    d.box = BoundingBox{*x, *y, *w, *h};
    out.push_back(std::move(d));
  }
  return out;
}

void write_detections_csv(const std::string& path, std::span<const Detection> detections) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write detection file '" + path + "'");
  out << kDetectionHeader << '\n';
  for (const auto& d : detections) {
    out << d.image_id << ',' << text::format_double(d.confidence) << ','
        << text::format_double(d.box.x) << ',' << text::format_double(d.box.y) << ','
        << text::format_double(d.box.w) << ',' << text::format_double(d.box.h) << '\n';
  }
}

}  // namespace wsloc
