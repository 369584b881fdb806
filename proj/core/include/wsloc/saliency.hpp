#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wsloc/backbone.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

enum class SaliencyMethod {
  grad,
  smoothgrad,
  integrated_gradients,
  smooth_integrated_gradients,
  gradcam,
  guided_backprop,
  guided_gradcam,
  // Maps that do not come from gradient attribution.
  classwise,
  boxes,
};

/// Short tags used in files and on the command line: GRAD, SG, IG, SIG,
/// GCAM, GBP, GGCAM, CLASSWISE, BOXES.
std::string_view method_tag(SaliencyMethod method);
SaliencyMethod parse_method(std::string_view tag);
/// Parses a comma-separated list of tags.
std::vector<SaliencyMethod> parse_method_list(std::string_view list);
/// The seven gradient-based methods, in table order.
const std::vector<SaliencyMethod>& gradient_methods();

struct SaliencyMap {
  Grid values;
  bool normalized = false;
  SaliencyMethod method = SaliencyMethod::grad;
};

/// Where along each of the n path segments the IG gradient is sampled.
enum class IgRule {
  midpoint,        // t = (i - 1/2) / n
  right_endpoint,  // t = i / n
};

std::string_view to_string(IgRule rule);
IgRule parse_ig_rule(std::string_view text);

struct SaliencyParams {
  int sg_samples = 25;
  double sg_sigma_frac = 0.15;  // noise sigma as a fraction of (max - min) of the image
  int ig_steps = 64;
  double ig_baseline = 0.0;  // constant baseline image value
  IgRule ig_rule = IgRule::midpoint;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Min-max normalization to [0, 1]; a constant map becomes all 0.5.
SaliencyMap normalize_map(const Grid& raw, SaliencyMethod method = SaliencyMethod::grad);

// Raw (unnormalized) maps. Attribution maps are absolute values; the
// *_signed functions return the signed attributions.

Grid grad_raw(const DifferentiableModel& model, const Image& image);
Grid smoothgrad_raw(const DifferentiableModel& model, const Image& image,
                    const SaliencyParams& params);
Grid integrated_gradients_signed(const DifferentiableModel& model, const Image& image,
                                 const Grid& baseline, int steps,
                                 IgRule rule = IgRule::midpoint);
Grid integrated_gradients_signed(const DifferentiableModel& model, const Image& image,
                                 const SaliencyParams& params);
Grid integrated_gradients_raw(const DifferentiableModel& model, const Image& image,
                              const SaliencyParams& params);
Grid smooth_ig_signed(const DifferentiableModel& model, const Image& image,
                      const SaliencyParams& params);
Grid smooth_ig_raw(const DifferentiableModel& model, const Image& image,
                   const SaliencyParams& params);
/// GradCAM combination step: channel weights are the spatial means of the
/// gradient; the map is the positive part of the weighted activation sum.
Grid gradcam_from_layer(const LayerGradient& layer);
/// GradCAM at the layer's own s x s resolution (not upsampled).
Grid gradcam_raw(const DifferentiableModel& model, const Image& image, std::string_view layer);
Grid guided_backprop_raw(const DifferentiableModel& model, const Image& image);
Grid guided_gradcam_raw(const DifferentiableModel& model, const Image& image,
                        std::string_view layer);

SaliencyMap grad_map(const DifferentiableModel& model, const Image& image);
SaliencyMap smoothgrad_map(const DifferentiableModel& model, const Image& image,
                           const SaliencyParams& params);
SaliencyMap integrated_gradients_map(const DifferentiableModel& model, const Image& image,
                                     const SaliencyParams& params);
SaliencyMap smooth_ig_map(const DifferentiableModel& model, const Image& image,
                          const SaliencyParams& params);
/// Empty layer name selects the final spatial layer. Output is S x S.
SaliencyMap gradcam_map(const DifferentiableModel& model, const Image& image,
                        std::string_view layer = {});
SaliencyMap guided_backprop_map(const DifferentiableModel& model, const Image& image);
SaliencyMap guided_gradcam_map(const DifferentiableModel& model, const Image& image,
                               std::string_view layer = {});

/// Dispatches on a gradient-based method tag.
SaliencyMap compute_saliency(SaliencyMethod method, const DifferentiableModel& model,
                             const Image& image, const SaliencyParams& params,
                             std::string_view layer = {});

}  // namespace wsloc
