#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsloc/types.hpp"

namespace wsloc {

/// Square grayscale image with pixel values in [0, 1].
struct Image {
  Grid pixels;

  Image() = default;
  explicit Image(Grid p) : pixels(std::move(p)) {}

  int size() const { return pixels.rows; }
  bool operator==(const Image&) const = default;
};

inline constexpr int kMinImageSize = 16;

/// Throws InvalidInput unless the image is square, at least kMinImageSize,
/// divisible by downsample_factor, and every pixel is finite and in [0, 1].
void validate_image(const Image& image, int downsample_factor);

/// Output of the feature network: F x s x s activations, s = S / d.
struct FeatureStack {
  Tensor3 activations;
  int downsample_factor = 1;

  int grid_size() const { return activations.rows; }
  int image_size() const { return activations.rows * downsample_factor; }
};

/// How piecewise-linear units propagate gradients in a backward pass.
enum class BackpropRule {
  standard,
  /// Pass gradient only where the forward activation and the incoming
  /// gradient are both positive.
  guided,
};

/// Picks the scalar output a gradient is taken of. Empty means the model's
/// positive-class logit.
struct OutputSelector {
  std::optional<std::size_t> output;

  static OutputSelector positive() { return {}; }
  static OutputSelector index(std::size_t i) { return {i}; }
};

struct ModelOutput {
  FeatureStack features;
  std::vector<double> logits;
};

struct LayerGradient {
  Tensor3 activations;
  Tensor3 gradient;
};

/// The capability contract consumed by the head, saliency, and harness code.
///
/// Virtual members operate on raw pixel grids and do not range-check; the
/// free functions below validate inputs first. Implementations must be
/// deterministic and const member functions must be safe to call
/// concurrently.
class DifferentiableModel {
 public:
  virtual ~DifferentiableModel() = default;

  virtual std::string architecture() const = 0;
  virtual int downsample_factor() const = 0;
  virtual std::size_t output_count() const = 0;
  virtual std::size_t positive_output() const { return output_count() - 1; }
  /// Spatial layers in forward order; back() is the final spatial layer.
  virtual std::vector<std::string> spatial_layers() const = 0;
  /// True for heads that pool classwise maps (predict_baseline rejects them).
  virtual bool has_spatial_pooling_head() const { return false; }

  virtual ModelOutput forward(const Grid& pixels) const = 0;
  virtual Grid input_gradient(const Grid& pixels, std::size_t output,
                              BackpropRule rule) const = 0;
  virtual LayerGradient layer_gradient(const Grid& pixels, std::string_view layer,
                                       std::size_t output) const = 0;

  std::string final_spatial_layer() const { return spatial_layers().back(); }
};

/// Numerically stable logistic function.
double logistic(double x);

FeatureStack forward_features(const DifferentiableModel& model, const Image& image);

/// logistic(positive logit) of a model with an unmodified classifier head.
double predict_baseline(const DifferentiableModel& model, const Image& image);

Grid grad_wrt_input(const DifferentiableModel& model, const Image& image,
                    OutputSelector selector = {},
                    BackpropRule rule = BackpropRule::standard);

Tensor3 grad_wrt_activations(const DifferentiableModel& model, const Image& image,
                             std::string_view layer_name, OutputSelector selector = {});

/// Resolves a selector against a model; throws InvalidInput when it does not
/// name exactly one existing output.
std::size_t resolve_output(const DifferentiableModel& model, OutputSelector selector);

/// Backward rule of y = max(0, x) given the pre-activation x.
/// `grad` holds dL/dy on entry and dL/dx on exit.
void relu_backward(std::span<const double> pre_activation, std::span<double> grad,
                   BackpropRule rule);

}  // namespace wsloc
