#include "wsloc/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace wsloc {

void validate_image(const Image& image, int downsample_factor) {
  const Grid& p = image.pixels;
  if (p.rows != p.cols) {
    throw InvalidInput("image must be square, got " + std::to_string(p.rows) + "x" +
                       std::to_string(p.cols));
  }
  if (p.rows < kMinImageSize) {
    throw InvalidInput("image side " + std::to_string(p.rows) + " is below the minimum " +
                       std::to_string(kMinImageSize));
  }
  if (downsample_factor < 1 || p.rows % downsample_factor != 0) {
    throw InvalidInput("image side " + std::to_string(p.rows) +
                       " is not divisible by the downsampling factor " +
                       std::to_string(downsample_factor));
  }
  for (double v : p.data) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidInput("image pixels must be finite and within [0, 1]");
    }
  }
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t resolve_output(const DifferentiableModel& model, OutputSelector selector) {
  const std::size_t n = model.output_count();
  const std::size_t idx = selector.output.value_or(model.positive_output());
  if (idx >= n) {
    throw InvalidInput("output selector " + std::to_string(idx) +
                       " does not name a scalar output (model has " + std::to_string(n) + ")");
  }
  return idx;
}

FeatureStack forward_features(const DifferentiableModel& model, const Image& image) {
  validate_image(image, model.downsample_factor());
  return model.forward(image.pixels).features;
}

double predict_baseline(const DifferentiableModel& model, const Image& image) {
  if (model.has_spatial_pooling_head()) {
    throw InvalidInput("predict_baseline requires a model with the baseline head");
  }
  validate_image(image, model.downsample_factor());
  const ModelOutput out = model.forward(image.pixels);
  return logistic(out.logits.at(model.positive_output()));
}

Grid grad_wrt_input(const DifferentiableModel& model, const Image& image,
                    OutputSelector selector, BackpropRule rule) {
  validate_image(image, model.downsample_factor());
  return model.input_gradient(image.pixels, resolve_output(model, selector), rule);
}

Tensor3 grad_wrt_activations(const DifferentiableModel& model, const Image& image,
                             std::string_view layer_name, OutputSelector selector) {
  validate_image(image, model.downsample_factor());
  const auto layers = model.spatial_layers();
  if (std::find(layers.begin(), layers.end(), layer_name) == layers.end()) {
    throw InvalidInput("unknown layer '" + std::string(layer_name) + "'");
  }
  return model.layer_gradient(image.pixels, layer_name, resolve_output(model, selector))
      .gradient;
}

void relu_backward(std::span<const double> pre_activation, std::span<double> grad,
                   BackpropRule rule) {
  if (rule == BackpropRule::standard) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!(pre_activation[i] > 0.0)) grad[i] = 0.0;
    }
  } else {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!(pre_activation[i] > 0.0 && grad[i] > 0.0)) grad[i] = 0.0;
    }
  }
}

}  // namespace wsloc
