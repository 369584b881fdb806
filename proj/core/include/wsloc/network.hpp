#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsloc/backbone.hpp"
#include "wsloc/wildcat_head.hpp"

namespace wsloc {

enum class HeadKind {
  baseline,  // global average pooling + fully connected logit
  modified,  // transfer layer + class pooling + top-k/bottom-k spatial pooling
};

std::string_view to_string(HeadKind head);
HeadKind parse_head_kind(std::string_view text);

/// Architecture of the reference network: four blocks of
/// 3x3 conv (pad 1) -> ReLU -> 2x2 average pooling, then a head.
struct NetworkSpec {
  int input_size = 64;
  std::array<int, 4> widths{8, 16, 32, 32};
  HeadKind head = HeadKind::baseline;
  PoolingConfig pooling;  // used by the modified head only

  static constexpr int kBlocks = 4;
  static constexpr int kDownsample = 1 << kBlocks;

  int map_size() const { return input_size / kDownsample; }
  int feature_channels() const { return widths.back(); }
  /// Throws InvalidInput on a bad geometry or pooling configuration.
  void validate() const;
  std::string architecture() const;
};

struct ParameterBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Two-valued output of the modified head.
struct ModifiedOutput {
  double probability = 0.5;
  std::vector<double> scores;  // one per class
  ClasswiseMaps maps;
};

/// Reference CNN with either classifier head. Parameters live in one flat
/// vector so that optimizers and checkpoints treat them uniformly.
class Network final : public DifferentiableModel {
 public:
  /// Zero-initialized parameters.
  explicit Network(NetworkSpec spec);

  /// He-normal weights, zero biases.
  void initialize(std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<ParameterBlock>& layout() const { return layout_; }
  std::span<double> block(std::string_view name);
  std::span<const double> block(std::string_view name) const;

  std::string architecture() const override { return spec_.architecture(); }
  int downsample_factor() const override { return NetworkSpec::kDownsample; }
  std::size_t output_count() const override;
  std::vector<std::string> spatial_layers() const override;
  bool has_spatial_pooling_head() const override { return spec_.head == HeadKind::modified; }

  ModelOutput forward(const Grid& pixels) const override;
  Grid input_gradient(const Grid& pixels, std::size_t output, BackpropRule rule) const override;
  LayerGradient layer_gradient(const Grid& pixels, std::string_view layer,
                               std::size_t output) const override;

  /// Requires the modified head.
  ModifiedOutput forward_modified(const Grid& pixels) const;

  /// Binary cross-entropy of the positive logit against `label`; adds
  /// dLoss/dparameters into `grad` and returns the loss.
  double accumulate_loss_gradient(const Grid& pixels, double label, std::span<double> grad) const;

  /// Adds d(sum_i logit_weights[i] * logit_i)/dparameters into `grad`.
  void accumulate_parameter_gradient(const Grid& pixels, std::span<const double> logit_weights,
                                     std::span<double> grad) const;

 private:
  struct Trace;

  static Trace& workspace();
  void run_forward(const Grid& pixels, Trace& trace) const;
  /// Backpropagates `logit_grad`. stop_block > 0 stops at the output of that
  /// block (1-based); 0 continues to the input; < 0 skips the input gradient
  /// of the first block (parameter gradients only).
  const Tensor3& run_backward(Trace& trace, std::span<const double> logit_grad,
                              BackpropRule rule, double* param_grad, int stop_block) const;
  void check_input(const Grid& pixels) const;

  NetworkSpec spec_;
  std::vector<ParameterBlock> layout_;
  std::array<std::string, NetworkSpec::kBlocks> conv_weight_;
  std::array<std::string, NetworkSpec::kBlocks> conv_bias_;
  std::vector<double> params_;
};

/// Probability and classwise maps from one forward pass.
ModifiedOutput forward_modified(const Network& model, const Image& image);

}  // namespace wsloc
