#include "wsloc/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "wsloc/metrics.hpp"
#include "wsloc/rng.hpp"

namespace wsloc {

namespace {

struct MethodName {
  SaliencyMethod method;
  std::string_view tag;
};

constexpr MethodName kMethodNames[] = {
    {SaliencyMethod::grad, "GRAD"},
    {SaliencyMethod::smoothgrad, "SG"},
    {SaliencyMethod::integrated_gradients, "IG"},
    {SaliencyMethod::smooth_integrated_gradients, "SIG"},
    {SaliencyMethod::gradcam, "GCAM"},
    {SaliencyMethod::guided_backprop, "GBP"},
    {SaliencyMethod::guided_gradcam, "GGCAM"},
    {SaliencyMethod::classwise, "CLASSWISE"},
    {SaliencyMethod::boxes, "BOXES"},
};

void abs_inplace(Grid& g) {
  for (double& v : g.data) v = std::abs(v);
}

// Running mean; exact when every sample is identical.
void accumulate_mean(Grid& mean, const Grid& sample, int count) {
  if (count == 1) {
    mean = sample;
    return;
  }
  for (std::size_t i = 0; i < mean.data.size(); ++i) {
    mean.data[i] += (sample.data[i] - mean.data[i]) / count;
  }
}

double noise_sigma(const Image& image, const SaliencyParams& params) {
  const auto [lo, hi] = std::minmax_element(image.pixels.data.begin(), image.pixels.data.end());
  return params.sg_sigma_frac * (*hi - *lo);
}

Grid add_noise(const Grid& pixels, double sigma, Rng& rng) {
  Grid noisy = pixels;
  for (double& v : noisy.data) v += sigma * rng.normal();
  return noisy;
}

Grid ig_signed_unchecked(const DifferentiableModel& model, const Grid& pixels,
                         const Grid& baseline, int steps, IgRule rule) {
  const double offset = rule == IgRule::midpoint ? 0.5 : 0.0;
  const std::size_t out = model.positive_output();
  Grid mean_grad(pixels.rows, pixels.cols);
  Grid point(pixels.rows, pixels.cols);
  for (int i = 1; i <= steps; ++i) {
    const double t = (i - offset) / steps;
    for (std::size_t p = 0; p < point.data.size(); ++p) {
      point.data[p] = baseline.data[p] + t * (pixels.data[p] - baseline.data[p]);
    }
    accumulate_mean(mean_grad, model.input_gradient(point, out, BackpropRule::standard), i);
  }
  Grid attribution(pixels.rows, pixels.cols);
  for (std::size_t p = 0; p < attribution.data.size(); ++p) {
    attribution.data[p] = (pixels.data[p] - baseline.data[p]) * mean_grad.data[p];
  }
  return attribution;
}

Grid constant_baseline(const Image& image, double value) {
  return Grid(image.pixels.rows, image.pixels.cols, value);
}

std::string resolve_layer(const DifferentiableModel& model, std::string_view layer) {
  const auto layers = model.spatial_layers();
  if (layer.empty()) return layers.back();
  if (std::find(layers.begin(), layers.end(), layer) == layers.end()) {
    throw InvalidInput("unknown layer '" + std::string(layer) + "'");
  }
  return std::string(layer);
}

void validate_for(const DifferentiableModel& model, const Image& image) {
  validate_image(image, model.downsample_factor());
}

}  // namespace

std::string_view method_tag(SaliencyMethod method) {
  for (const auto& m : kMethodNames) {
    if (m.method == method) return m.tag;
  }
  return "UNKNOWN";
}

SaliencyMethod parse_method(std::string_view tag) {
  std::string upper(tag);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (const auto& m : kMethodNames) {
    if (m.tag == upper) return m.method;
  }
  throw InvalidInput("unknown saliency method '" + std::string(tag) + "'");
}

std::vector<SaliencyMethod> parse_method_list(std::string_view list) {
  std::vector<SaliencyMethod> methods;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    std::string_view item = list.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) methods.push_back(parse_method(item));
    start = comma + 1;
  }
  return methods;
}

const std::vector<SaliencyMethod>& gradient_methods() {
  static const std::vector<SaliencyMethod> all = {
      SaliencyMethod::grad,          SaliencyMethod::smoothgrad,
      SaliencyMethod::integrated_gradients, SaliencyMethod::smooth_integrated_gradients,
      SaliencyMethod::gradcam,       SaliencyMethod::guided_backprop,
      SaliencyMethod::guided_gradcam};
  return all;
}

std::string_view to_string(IgRule rule) {
  return rule == IgRule::midpoint ? "midpoint" : "right";
}

IgRule parse_ig_rule(std::string_view text) {
  if (text == "midpoint") return IgRule::midpoint;
  if (text == "right") return IgRule::right_endpoint;
  throw InvalidInput("unknown IG rule '" + std::string(text) + "' (expected midpoint|right)");
}

void SaliencyParams::validate() const {
  if (sg_samples < 1) throw InvalidInput("sg_samples must be >= 1");
  if (ig_steps < 1) throw InvalidInput("ig_steps must be >= 1");
  if (!(sg_sigma_frac >= 0.0) || !std::isfinite(sg_sigma_frac)) {
    throw InvalidInput("sg_sigma_frac must be finite and >= 0");
  }
  if (!std::isfinite(ig_baseline)) throw InvalidInput("ig_baseline must be finite");
}

SaliencyMap normalize_map(const Grid& raw, SaliencyMethod method) {
  SaliencyMap out{raw, true, method};
  if (raw.data.empty()) return out;
  if (!all_finite(raw.data)) throw InvalidInput("cannot normalize a map with non-finite values");
  const auto [lo_it, hi_it] = std::minmax_element(raw.data.begin(), raw.data.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (range == 0.0) {
    std::fill(out.values.data.begin(), out.values.data.end(), 0.5);
    return out;
  }
  for (double& v : out.values.data) v = (v - lo) / range;
  return out;
}

Grid grad_raw(const DifferentiableModel& model, const Image& image) {
  validate_for(model, image);
  Grid g = model.input_gradient(image.pixels, model.positive_output(), BackpropRule::standard);
  abs_inplace(g);
  return g;
}

Grid smoothgrad_raw(const DifferentiableModel& model, const Image& image,
                    const SaliencyParams& params) {
  params.validate();
  validate_for(model, image);
  const double sigma = noise_sigma(image, params);
  Rng rng(params.rng_seed);
  Grid mean;
  for (int i = 1; i <= params.sg_samples; ++i) {
    Grid g = model.input_gradient(add_noise(image.pixels, sigma, rng), model.positive_output(),
                                  BackpropRule::standard);
    abs_inplace(g);
    accumulate_mean(mean, g, i);
  }
  return mean;
}

Grid integrated_gradients_signed(const DifferentiableModel& model, const Image& image,
                                 const Grid& baseline, int steps, IgRule rule) {
  validate_for(model, image);
  if (baseline.rows != image.pixels.rows || baseline.cols != image.pixels.cols) {
    throw InvalidInput("integrated gradients baseline must match the image shape");
  }
  if (steps < 1) throw InvalidInput("ig_steps must be >= 1");
  return ig_signed_unchecked(model, image.pixels, baseline, steps, rule);
}

Grid integrated_gradients_signed(const DifferentiableModel& model, const Image& image,
                                 const SaliencyParams& params) {
  params.validate();
  return integrated_gradients_signed(model, image, constant_baseline(image, params.ig_baseline),
                                     params.ig_steps, params.ig_rule);
}

Grid integrated_gradients_raw(const DifferentiableModel& model, const Image& image,
                              const SaliencyParams& params) {
  Grid g = integrated_gradients_signed(model, image, params);
  abs_inplace(g);
  return g;
}

namespace {

// Shared loop of the smoothed IG variants; `absolute` selects |IG| averaging.
Grid smooth_ig(const DifferentiableModel& model, const Image& image, const SaliencyParams& params,
               bool absolute) {
  params.validate();
  validate_for(model, image);
  const double sigma = noise_sigma(image, params);
  const Grid baseline = constant_baseline(image, params.ig_baseline);
  Rng rng(params.rng_seed);
  Grid mean;
  for (int i = 1; i <= params.sg_samples; ++i) {
    Grid attr =
        ig_signed_unchecked(model, add_noise(image.pixels, sigma, rng), baseline,
                            params.ig_steps, params.ig_rule);
    if (absolute) abs_inplace(attr);
    accumulate_mean(mean, attr, i);
  }
  return mean;
}

}  // namespace

Grid smooth_ig_signed(const DifferentiableModel& model, const Image& image,
                      const SaliencyParams& params) {
  return smooth_ig(model, image, params, false);
}

Grid smooth_ig_raw(const DifferentiableModel& model, const Image& image,
                   const SaliencyParams& params) {
  return smooth_ig(model, image, params, true);
}

Grid gradcam_from_layer(const LayerGradient& layer) {
  const Tensor3& a = layer.activations;
  const Tensor3& g = layer.gradient;
  if (a.channels != g.channels || a.rows != g.rows || a.cols != g.cols) {
    throw InvalidInput("GradCAM activations and gradients differ in shape");
  }
  Grid map(a.rows, a.cols);
  const std::size_t plane = a.plane();
  for (int k = 0; k < a.channels; ++k) {
    double weight = 0.0;
    for (double v : g.channel(k)) weight += v;
    weight /= static_cast<double>(plane);
    auto act = a.channel(k);
    for (std::size_t p = 0; p < plane; ++p) map.data[p] += weight * act[p];
  }
  for (double& v : map.data) v = std::max(0.0, v);
  return map;
}

Grid gradcam_raw(const DifferentiableModel& model, const Image& image, std::string_view layer) {
  validate_for(model, image);
  const std::string name = resolve_layer(model, layer);
  return gradcam_from_layer(model.layer_gradient(image.pixels, name, model.positive_output()));
}

Grid guided_backprop_raw(const DifferentiableModel& model, const Image& image) {
  validate_for(model, image);
  Grid g = model.input_gradient(image.pixels, model.positive_output(), BackpropRule::guided);
  abs_inplace(g);
  return g;
}

Grid guided_gradcam_raw(const DifferentiableModel& model, const Image& image,
                        std::string_view layer) {
  Grid gbp = guided_backprop_raw(model, image);
  const Grid cam = extrapolate_map(gradcam_raw(model, image, layer), image.size());
  for (std::size_t p = 0; p < gbp.data.size(); ++p) gbp.data[p] *= cam.data[p];
  return gbp;
}

SaliencyMap grad_map(const DifferentiableModel& model, const Image& image) {
  return normalize_map(grad_raw(model, image), SaliencyMethod::grad);
}

SaliencyMap smoothgrad_map(const DifferentiableModel& model, const Image& image,
                           const SaliencyParams& params) {
  return normalize_map(smoothgrad_raw(model, image, params), SaliencyMethod::smoothgrad);
}

SaliencyMap integrated_gradients_map(const DifferentiableModel& model, const Image& image,
                                     const SaliencyParams& params) {
  return normalize_map(integrated_gradients_raw(model, image, params),
                       SaliencyMethod::integrated_gradients);
}

SaliencyMap smooth_ig_map(const DifferentiableModel& model, const Image& image,
                          const SaliencyParams& params) {
  return normalize_map(smooth_ig_raw(model, image, params),
                       SaliencyMethod::smooth_integrated_gradients);
}

SaliencyMap gradcam_map(const DifferentiableModel& model, const Image& image,
                        std::string_view layer) {
  return normalize_map(extrapolate_map(gradcam_raw(model, image, layer), image.size()),
                       SaliencyMethod::gradcam);
}

SaliencyMap guided_backprop_map(const DifferentiableModel& model, const Image& image) {
  return normalize_map(guided_backprop_raw(model, image), SaliencyMethod::guided_backprop);
}

SaliencyMap guided_gradcam_map(const DifferentiableModel& model, const Image& image,
                               std::string_view layer) {
  return normalize_map(guided_gradcam_raw(model, image, layer), SaliencyMethod::guided_gradcam);
}

SaliencyMap compute_saliency(SaliencyMethod method, const DifferentiableModel& model,
                             const Image& image, const SaliencyParams& params,
                             std::string_view layer) {
  switch (method) {
    case SaliencyMethod::grad:
      return grad_map(model, image);
    case SaliencyMethod::smoothgrad:
      return smoothgrad_map(model, image, params);
    case SaliencyMethod::integrated_gradients:
      return integrated_gradients_map(model, image, params);
    case SaliencyMethod::smooth_integrated_gradients:
      return smooth_ig_map(model, image, params);
    case SaliencyMethod::gradcam:
      return gradcam_map(model, image, layer);
    case SaliencyMethod::guided_backprop:
      return guided_backprop_map(model, image);
    case SaliencyMethod::guided_gradcam:
      return guided_gradcam_map(model, image, layer);
    case SaliencyMethod::classwise:
    case SaliencyMethod::boxes:
      break;
  }
  throw InvalidInput("'" + std::string(method_tag(method)) +
                     "' is not a gradient saliency method");
}

}  // namespace wsloc
