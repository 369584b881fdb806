#include "wsloc/wildcat_head.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace wsloc {

PoolSize PoolSize::count(int k) {
  if (k < 1) throw InvalidInput("pool size count must be >= 1, got " + std::to_string(k));
  return PoolSize(static_cast<double>(k), false);
}

PoolSize PoolSize::fraction(double f) {
  if (!(f > 0.0 && f <= 1.0)) {
    throw InvalidInput("pool size fraction must be in (0, 1], got " + std::to_string(f));
  }
  return PoolSize(f, true);
}

PoolSize PoolSize::parse(const std::string& text) {
  if (text.find_first_of(".eE") == std::string::npos) {
    int k = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw InvalidInput("cannot parse pool size '" + text + "'");
    }
    return count(k);
  }
  std::size_t used = 0;
  double f = 0.0;
  try {
    f = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw InvalidInput("cannot parse pool size '" + text + "'");
  return fraction(f);
}

int PoolSize::resolve(int cells) const {
  if (!is_fraction_) return static_cast<int>(value_);
  return std::max(1, static_cast<int>(std::lround(value_ * cells)));
}

std::string PoolSize::to_string() const {
  if (!is_fraction_) return std::to_string(static_cast<int>(value_));
  std::ostringstream os;
  os.precision(17);
  os << value_;
  std::string s = os.str();
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

void PoolingConfig::validate() const {
  if (maps_per_class < 1) throw InvalidInput("maps per class (m) must be >= 1");
  if (classes < 1) throw InvalidInput("class count (c) must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidInput("alpha must be finite and >= 0");
}

int PoolingConfig::resolved_k(int cells) const {
  validate();
  const int k = this->k.resolve(cells);
  const int limit = cells / 2;
  if (k < 1 || k > limit) {
    throw InvalidInput("resolved k=" + std::to_string(k) + " (from k=" + this->k.to_string() +
                       ") must satisfy 1 <= k <= floor(s*s/2) = " + std::to_string(limit) +
                       " for a map with " + std::to_string(cells) + " cells");
  }
  return k;
}

Tensor3 transfer_layer(const FeatureStack& features, const PoolingConfig& config,
                       TransferParams params) {
  config.validate();
  const Tensor3& in = features.activations;
  const int out_channels = config.channels();
  const std::size_t in_channels = static_cast<std::size_t>(in.channels);
  if (params.weights.size() != static_cast<std::size_t>(out_channels) * in_channels) {
    throw InvalidInput("transfer layer expects " + std::to_string(out_channels) + "x" +
                       std::to_string(in.channels) + " weights, got " +
                       std::to_string(params.weights.size()));
  }
  if (params.bias.size() != static_cast<std::size_t>(out_channels)) {
    throw InvalidInput("transfer layer expects " + std::to_string(out_channels) +
                       " biases, got " + std::to_string(params.bias.size()));
  }
  Tensor3 out(out_channels, in.rows, in.cols);
  const std::size_t plane = in.plane();
  for (int o = 0; o < out_channels; ++o) {
    auto dst = out.channel(o);
    std::fill(dst.begin(), dst.end(), params.bias[static_cast<std::size_t>(o)]);
    for (std::size_t f = 0; f < in_channels; ++f) {
      const double w = params.weights[static_cast<std::size_t>(o) * in_channels + f];
      auto src = in.channel(static_cast<int>(f));
      for (std::size_t p = 0; p < plane; ++p) dst[p] += w * src[p];
    }
  }
  return out;
}

ClasswiseMaps class_pool(const Tensor3& transfer_out, const PoolingConfig& config,
                         int image_size) {
  config.validate();
  if (transfer_out.channels != config.channels()) {
    throw InvalidInput("class_pool expects m*c = " + std::to_string(config.channels()) +
                       " channels, got " + std::to_string(transfer_out.channels));
  }
  if (transfer_out.rows == 0 || image_size % transfer_out.rows != 0) {
    throw InvalidInput("image size must be a multiple of the map size");
  }
  const int m = config.maps_per_class;
  ClasswiseMaps result{Tensor3(config.classes, transfer_out.rows, transfer_out.cols),
                       MapGeometry{image_size, transfer_out.rows}};
  const std::size_t plane = transfer_out.plane();
  for (int j = 0; j < config.classes; ++j) {
    auto dst = result.maps.channel(j);
    for (int i = 0; i < m; ++i) {
      auto src = transfer_out.channel(j * m + i);
      for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
    }
    for (std::size_t p = 0; p < plane; ++p) dst[p] /= m;
  }
  return result;
}

ExtremeCells select_extremes(std::span<const double> cells, int k) {
  const int n = static_cast<int>(cells.size());
  if (k < 1 || k > n / 2) {
    throw InvalidInput("k=" + std::to_string(k) + " must satisfy 1 <= k <= " +
                       std::to_string(n / 2));
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // Total order: higher value ranks first; equal values rank by lower index.
  auto ranks_above = [&](int a, int b) {
    const double va = cells[static_cast<std::size_t>(a)];
    const double vb = cells[static_cast<std::size_t>(b)];
    if (va != vb) return va > vb;
    return a < b;
  };
  ExtremeCells out;
  std::partial_sort(order.begin(), order.begin() + k, order.end(), ranks_above);
  out.top.assign(order.begin(), order.begin() + k);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) { return ranks_above(b, a); });
  out.bottom.assign(order.begin(), order.begin() + k);
  return out;
}

double pool_map(std::span<const double> cells, int k, double alpha) {
  const ExtremeCells sel = select_extremes(cells, k);
  double top = 0.0;
  for (int i : sel.top) top += cells[static_cast<std::size_t>(i)];
  double bottom = 0.0;
  for (int i : sel.bottom) bottom += cells[static_cast<std::size_t>(i)];
  return top / k + alpha * (bottom / k);
}

std::vector<double> spatial_pool(const ClasswiseMaps& maps, const PoolingConfig& config) {
  const int cells = static_cast<int>(maps.maps.plane());
  const int k = config.resolved_k(cells);
  std::vector<double> scores(static_cast<std::size_t>(maps.maps.channels));
  for (int j = 0; j < maps.maps.channels; ++j) {
    scores[static_cast<std::size_t>(j)] = pool_map(maps.maps.channel(j), k, config.alpha);
  }
  return scores;
}

Tensor3 spatial_pool_gradient(const ClasswiseMaps& maps, const PoolingConfig& config,
                              std::span<const double> upstream) {
  const int cells = static_cast<int>(maps.maps.plane());
  const int k = config.resolved_k(cells);
  if (upstream.size() != static_cast<std::size_t>(maps.maps.channels)) {
    throw InvalidInput("upstream gradient needs one entry per class");
  }
  Tensor3 grad(maps.maps.channels, maps.maps.rows, maps.maps.cols);
  for (int j = 0; j < maps.maps.channels; ++j) {
    const ExtremeCells sel = select_extremes(maps.maps.channel(j), k);
    const double g = upstream[static_cast<std::size_t>(j)];
    auto dst = grad.channel(j);
    for (int i : sel.top) dst[static_cast<std::size_t>(i)] += g / k;
    for (int i : sel.bottom) dst[static_cast<std::size_t>(i)] += g * config.alpha / k;
  }
  return grad;
}

}  // namespace wsloc
