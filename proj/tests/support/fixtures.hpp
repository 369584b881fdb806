#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wsloc/backbone.hpp"
#include "wsloc/network.hpp"
#include "wsloc/rng.hpp"

namespace wsloc::testing {

/// F(x) = sum_i w_i x_i + b. Its only spatial layer is the input itself.
class LinearModel final : public DifferentiableModel {
 public:
  LinearModel(Grid weights, double bias = 0.0) : w_(std::move(weights)), b_(bias) {}

  std::string architecture() const override { return "linear"; }
  int downsample_factor() const override { return 1; }
  std::size_t output_count() const override { return 1; }
  std::vector<std::string> spatial_layers() const override { return {"pixels"}; }

  ModelOutput forward(const Grid& x) const override {
    double z = b_;
    for (std::size_t i = 0; i < x.size(); ++i) z += w_.data[i] * x.data[i];
    ModelOutput out;
    out.features.activations = Tensor3(1, x.rows, x.cols);
    out.features.activations.data = x.data;
    out.features.downsample_factor = 1;
    out.logits = {z};
    return out;
  }
  Grid input_gradient(const Grid&, std::size_t, BackpropRule) const override { return w_; }
  LayerGradient layer_gradient(const Grid& x, std::string_view layer, std::size_t) const override {
    if (layer != "pixels") throw InvalidInput("unknown layer");
    LayerGradient g{Tensor3(1, x.rows, x.cols), Tensor3(1, x.rows, x.cols)};
    g.activations.data = x.data;
    g.gradient.data = w_.data;
    return g;
  }

 private:
  Grid w_;
  double b_;
};

/// Output independent of the input.
class ConstantModel final : public DifferentiableModel {
 public:
  explicit ConstantModel(double value) : value_(value) {}

  std::string architecture() const override { return "constant"; }
  int downsample_factor() const override { return 4; }
  std::size_t output_count() const override { return 1; }
  std::vector<std::string> spatial_layers() const override { return {"grid"}; }

  ModelOutput forward(const Grid& x) const override {
    ModelOutput out;
    out.features.activations = Tensor3(2, x.rows / 4, x.cols / 4, 1.0);
    out.features.downsample_factor = 4;
    out.logits = {value_};
    return out;
  }
  Grid input_gradient(const Grid& x, std::size_t, BackpropRule) const override {
    return Grid(x.rows, x.cols);
  }
  LayerGradient layer_gradient(const Grid& x, std::string_view layer, std::size_t) const override {
    if (layer != "grid") throw InvalidInput("unknown layer");
    return {Tensor3(2, x.rows / 4, x.cols / 4, 1.0), Tensor3(2, x.rows / 4, x.cols / 4)};
  }

 private:
  double value_;
};

/// y = max(0, w . x): one piecewise-linear unit.
class SingleReluModel final : public DifferentiableModel {
 public:
  explicit SingleReluModel(Grid weights) : w_(std::move(weights)) {}

  std::string architecture() const override { return "single-relu"; }
  int downsample_factor() const override { return 1; }
  std::size_t output_count() const override { return 1; }
  std::vector<std::string> spatial_layers() const override { return {"pixels"}; }

  double pre(const Grid& x) const {
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) z += w_.data[i] * x.data[i];
    return z;
  }
  ModelOutput forward(const Grid& x) const override {
    ModelOutput out;
    out.features.activations = Tensor3(1, x.rows, x.cols);
    out.features.activations.data = x.data;
    out.logits = {std::max(0.0, pre(x))};
    return out;
  }
  Grid input_gradient(const Grid& x, std::size_t, BackpropRule rule) const override {
    const std::vector<double> z{pre(x)};
    std::vector<double> g{upstream};
    relu_backward(z, g, rule);
    Grid out = w_;
    for (double& v : out.data) v *= g[0];
    return out;
  }
  LayerGradient layer_gradient(const Grid& x, std::string_view, std::size_t) const override {
    LayerGradient g{Tensor3(1, x.rows, x.cols), Tensor3(1, x.rows, x.cols)};
    g.activations.data = x.data;
    g.gradient.data = input_gradient(x, 0, BackpropRule::standard).data;
    return g;
  }

  double upstream = 1.0;

 private:
  Grid w_;
};

inline Grid random_grid(Rng& rng, int rows, int cols, double lo = 0.0, double hi = 1.0) {
  Grid g(rows, cols);
  for (double& v : g.data) v = rng.uniform(lo, hi);
  return g;
}

inline Image random_image(Rng& rng, int size) { return Image(random_grid(rng, size, size)); }

inline Network random_network(HeadKind head, std::uint64_t seed, PoolingConfig pooling = {},
                              int input_size = 64) {
  NetworkSpec spec;
  spec.input_size = input_size;
  spec.head = head;
  spec.pooling = pooling;
  Network net(spec);
  net.initialize(seed);
  // Small random biases so that every code path sees nonzero offsets.
  Rng rng(seed ^ 0xb1a5);
  for (const auto& block : net.layout()) {
    if (block.name.find("bias") == std::string::npos) continue;
    for (double& b : net.block(block.name)) b = rng.uniform(-0.05, 0.05);
  }
  return net;
}

inline double relative_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct FiniteDifference {
  double central = 0.0;
  bool smooth = false;  // one-sided slopes agree, so no kink lies within h
};

/// Central difference of f at a scalar offset, with a kink probe that only
/// looks at f itself.
inline FiniteDifference finite_difference(const std::function<double(double)>& f, double h) {
  const double f0 = f(0.0);
  const double fp = f(h);
  const double fm = f(-h);
  FiniteDifference out;
  out.central = (fp - fm) / (2.0 * h);
  const double forward = (fp - f0) / h;
  const double backward = (f0 - fm) / h;
  out.smooth = relative_error(forward, backward, 1e-6) < 1e-3;
  return out;
}

}  // namespace wsloc::testing
