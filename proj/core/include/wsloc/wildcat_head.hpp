#pragma once

#include <span>
#include <string>
#include <vector>

#include "wsloc/backbone.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

/// Number of cells pooled at each extreme: an absolute count or a fraction of
/// the s*s cells (resolved as max(1, round(fraction * cells))).
class PoolSize {
 public:
  static PoolSize count(int k);
  static PoolSize fraction(double f);
  /// Parses "3" as a count and "0.25" as a fraction.
  static PoolSize parse(const std::string& text);

  bool is_fraction() const { return is_fraction_; }
  double value() const { return value_; }
  /// Resolved count for a map with `cells` cells; does not range-check.
  int resolve(int cells) const;
  std::string to_string() const;

  bool operator==(const PoolSize&) const = default;

 private:
  PoolSize(double v, bool frac) : value_(v), is_fraction_(frac) {}
  double value_ = 1.0;
  bool is_fraction_ = false;
};

struct PoolingConfig {
  int maps_per_class = 1;  // m
  int classes = 1;         // c
  PoolSize k = PoolSize::count(1);
  double alpha = 0.0;  // weight of the bottom-k term

  int channels() const { return maps_per_class * classes; }
  /// Validates m, c, alpha and the resolved k for a map with `cells` cells;
  /// returns the resolved k. k must leave top-k and bottom-k disjoint.
  int resolved_k(int cells) const;
  void validate() const;

  bool operator==(const PoolingConfig&) const = default;
};

struct MapGeometry {
  int image_size = 0;  // S
  int map_size = 0;    // s
  int block() const { return image_size / map_size; }  // d
};

/// One s x s activation map per class.
struct ClasswiseMaps {
  Tensor3 maps;
  MapGeometry geometry;

  Grid class_map(int cls) const { return maps.channel_grid(cls); }
};

/// 1x1 transfer layer parameters: weights are (m*c) x F row-major.
struct TransferParams {
  std::span<const double> weights;
  std::span<const double> bias;
};

Tensor3 transfer_layer(const FeatureStack& features, const PoolingConfig& config,
                       TransferParams params);

/// Mean over the m maps of each class; channels are grouped by class.
ClasswiseMaps class_pool(const Tensor3& transfer_out, const PoolingConfig& config,
                         int image_size);

/// Cells chosen by the spatial pooling. Both lists are in rank order (top: best
/// first, bottom: worst first). Ranking is by value, ties going to the lower
/// row-major index, so the argmax cell is top[0].
struct ExtremeCells {
  std::vector<int> top;
  std::vector<int> bottom;
};

ExtremeCells select_extremes(std::span<const double> cells, int k);

/// Pooled score of a single map: mean(top-k) + alpha * mean(bottom-k).
double pool_map(std::span<const double> cells, int k, double alpha);

/// Per-class scores.
std::vector<double> spatial_pool(const ClasswiseMaps& maps, const PoolingConfig& config);

/// Gradient of sum_j upstream[j] * score_j with respect to the maps.
Tensor3 spatial_pool_gradient(const ClasswiseMaps& maps, const PoolingConfig& config,
                              std::span<const double> upstream);

}  // namespace wsloc
