#include <algorithm>
#include <cmath>

#include "text_util.hpp"
#include "wsloc/harness.hpp"
#include "wsloc/rng.hpp"

namespace wsloc {

namespace {

std::vector<std::vector<BoundingBox>> ground_truth(std::span<const AnnotatedSample> samples) {
  std::vector<std::vector<BoundingBox>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.boxes);
  return out;
}

}  // namespace

const MetricReport* EvaluationReport::find(const std::string& metric) const {
  for (const auto& m : metrics) {
    if (m.metric == metric) return &m;
  }
  return nullptr;
}

SaliencyMap classwise_saliency(const ModifiedOutput& output, int image_size) {
  const int positive = output.maps.maps.channels - 1;
  return normalize_map(extrapolate_map(output.maps.class_map(positive), image_size),
                       SaliencyMethod::classwise);
}

std::vector<Detection> predicted_detections(const Network& model,
                                            std::span<const AnnotatedSample> samples,
                                            bool confidence_from_max_cell) {
  std::vector<Detection> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const ModifiedOutput o = forward_modified(model, s.image);
    const int positive = o.maps.maps.channels - 1;
    double confidence = o.probability;
    if (confidence_from_max_cell) {
      const auto cells = o.maps.maps.channel(positive);
      confidence = logistic(*std::max_element(cells.begin(), cells.end()));
    }
    out.push_back(predicted_box(o.maps, positive, confidence, s.id));
  }
  return out;
}

MetricReport saliency_utility(const DifferentiableModel& model, std::span<const AnnotatedSample> test,
                              SaliencyMethod method, const SaliencyParams& params) {
  if (method == SaliencyMethod::classwise || method == SaliencyMethod::boxes) {
    throw InvalidInput("'" + std::string(method_tag(method)) + "' is not a saliency method");
  }
  params.validate();
  std::vector<AnnotatedSample> scored;
  std::vector<SaliencyMap> maps;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test[i].boxes.empty()) continue;  // excluded from utility anyway
    SaliencyParams per_image = params;
    per_image.rng_seed = mix_seed(params.rng_seed, i);
    maps.push_back(compute_saliency(method, model, test[i].image, per_image));
    scored.push_back(test[i]);
  }
  MetricReport utility = localization_utility(maps, scored, "utility_" + std::string(method_tag(method)));
  for (const auto& s : test) {
    if (s.boxes.empty()) utility.excluded.push_back(s.id);
  }
  utility.config["map"] = std::string(method_tag(method));
  utility.config["model"] = model.architecture() + (model.has_spatial_pooling_head() ? "/modified" : "/baseline");
  utility.config["sg_samples"] = std::to_string(params.sg_samples);
  utility.config["sg_sigma_frac"] = text::format_double(params.sg_sigma_frac);
  utility.config["ig_steps"] = std::to_string(params.ig_steps);
  utility.config["ig_baseline"] = text::format_double(params.ig_baseline);
  utility.config["ig_rule"] = std::string(to_string(params.ig_rule));
  utility.config["rng_seed"] = std::to_string(params.rng_seed);
  return utility;
}

EvaluationReport evaluate(const Network& model, const std::string& run_id,
                          std::span<const AnnotatedSample> test, const EvaluationOptions& options) {
  if (test.empty()) throw InvalidInput("evaluate needs a nonempty test split");
  options.saliency.validate();
  EvaluationReport report;
  report.run_id = run_id;
  report.architecture = model.architecture();
  report.head = std::string(to_string(model.spec().head));

  const auto probabilities = predict(model, test);
  {
    std::vector<int> labels;
    for (const auto& s : test) labels.push_back(s.label);
    MetricReport auc;
    auc.metric = "auc";
    auc.value = roc_auc(labels, probabilities);
    for (std::size_t i = 0; i < test.size(); ++i) auc.per_image.push_back({test[i].id, probabilities[i]});
    auc.config["per_image"] = "probability";
    auc.config["images"] = std::to_string(test.size());
    report.metrics.push_back(std::move(auc));
  }

  if (model.has_spatial_pooling_head()) {
    const auto detections = predicted_detections(model, test, options.confidence_from_max_cell);
    std::vector<std::vector<Detection>> per_image;
    for (const auto& d : detections) per_image.push_back({d});
    MetricReport ap;
    ap.metric = "pointwise_ap";
    ap.value = pointwise_ap(per_image, ground_truth(test));
    for (const auto& d : detections) ap.per_image.push_back({d.image_id, d.confidence});
    ap.config["per_image"] = "confidence";
    ap.config["confidence"] = options.confidence_from_max_cell ? "max_cell" : "probability";
    report.metrics.push_back(std::move(ap));

    std::vector<SaliencyMap> maps;
    for (const auto& s : test) {
      maps.push_back(classwise_saliency(forward_modified(model, s.image), s.image.size()));
    }
    MetricReport utility = localization_utility(maps, test, "utility_CLASSWISE");
    utility.config["map"] = "classwise";
    report.metrics.push_back(std::move(utility));
  }

  for (const SaliencyMethod method : options.methods) {
    report.metrics.push_back(saliency_utility(model, test, method, options.saliency));
  }
  return report;
}

}  // namespace wsloc
