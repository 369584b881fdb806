#include "wsloc/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>

#include "wsloc/rng.hpp"

namespace wsloc {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Row sum in eight fixed lanes, independent of buffer alignment.
double row_sum(const ConstMatrixMap& m, Eigen::Index row) {
  const double* p = m.data() + row * m.cols();
  const Eigen::Index n = m.cols();
  std::array<double, 8> lane{};
  Eigen::Index i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) lane[static_cast<std::size_t>(j)] += p[i + j];
  }
  for (; i < n; ++i) lane[0] += p[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

constexpr int kTaps = 9;

// col[(c*9 + ky*3 + kx), y*size + x] = in[c, y+ky-1, x+kx-1], zero outside.
void im2col(const double* in, int channels, int size, double* col) {
  const int plane = size * size;
  for (int c = 0; c < channels; ++c) {
    const double* src = in + static_cast<std::ptrdiff_t>(c) * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = col + static_cast<std::ptrdiff_t>(c * kTaps + ky * 3 + kx) * plane;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(size, size - dx);
        for (int y = 0; y < size; ++y) {
          const int sy = y + ky - 1;
          double* row = dst + y * size;
          if (sy < 0 || sy >= size) {
            std::fill(row, row + size, 0.0);
            continue;
          }
          const double* srow = src + sy * size + dx;
          if (x0 > 0) row[0] = 0.0;
          std::copy(srow + x0, srow + x1, row + x0);
          if (x1 < size) row[size - 1] = 0.0;
        }
      }
    }
  }
}

void col2im_add(const double* col, int channels, int size, double* out) {
  const int plane = size * size;
  for (int c = 0; c < channels; ++c) {
    double* dst = out + static_cast<std::ptrdiff_t>(c) * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = col + static_cast<std::ptrdiff_t>(c * kTaps + ky * 3 + kx) * plane;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(size, size - dx);
        for (int y = 0; y < size; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= size) continue;
          double* drow = dst + sy * size + dx;
          const double* srow = src + y * size;
          for (int x = x0; x < x1; ++x) drow[x] += srow[x];
        }
      }
    }
  }
}

// out[c] = 2x2 mean of relu(pre[c]).
void relu_avgpool(const Tensor3& pre, Tensor3& out) {
  const int half = pre.rows / 2;
  out.channels = pre.channels;
  out.rows = half;
  out.cols = half;
  out.data.resize(static_cast<std::size_t>(pre.channels) * half * half);
  for (int c = 0; c < pre.channels; ++c) {
    for (int y = 0; y < half; ++y) {
      for (int x = 0; x < half; ++x) {
        const double a = std::max(0.0, pre(c, 2 * y, 2 * x));
        const double b = std::max(0.0, pre(c, 2 * y, 2 * x + 1));
        const double d = std::max(0.0, pre(c, 2 * y + 1, 2 * x));
        const double e = std::max(0.0, pre(c, 2 * y + 1, 2 * x + 1));
        out(c, y, x) = 0.25 * ((a + b) + (d + e));
      }
    }
  }
}

void avgpool_backward(const Tensor3& grad_out, Tensor3& g) {
  g.channels = grad_out.channels;
  g.rows = grad_out.rows * 2;
  g.cols = grad_out.cols * 2;
  g.data.resize(static_cast<std::size_t>(g.channels) * g.plane());
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int y = 0; y < g.rows; ++y) {
      for (int x = 0; x < g.cols; ++x) g(c, y, x) = 0.25 * grad_out(c, y / 2, x / 2);
    }
  }
}

std::string block_name(int b) { return "block" + std::to_string(b); }

}  // namespace

std::string_view to_string(HeadKind head) {
  return head == HeadKind::baseline ? "baseline" : "modified";
}

HeadKind parse_head_kind(std::string_view text) {
  if (text == "baseline") return HeadKind::baseline;
  if (text == "modified" || text == "wildcat") return HeadKind::modified;
  throw InvalidInput("unknown head '" + std::string(text) + "' (expected baseline|modified)");
}

void NetworkSpec::validate() const {
  if (input_size < kMinImageSize || input_size % kDownsample != 0) {
    throw InvalidInput("input size " + std::to_string(input_size) +
                       " must be >= 16 and divisible by " + std::to_string(kDownsample));
  }
  for (int w : widths) {
    if (w < 1) throw InvalidInput("channel widths must be positive");
  }
  if (head == HeadKind::modified) pooling.resolved_k(map_size() * map_size());
}

std::string NetworkSpec::architecture() const {
  std::string name = "tinycnn";
  for (int w : widths) name += "-" + std::to_string(w);
  return name;
}

// Forward activations plus backward scratch. Reused across calls on the same
// thread so large buffers are not reallocated per image.
struct Network::Trace {
  struct Block {
    std::vector<double> col;  // im2col of the block input
    Tensor3 pre;              // conv output before ReLU
    Tensor3 out;              // block output after pooling
  };
  std::array<Block, NetworkSpec::kBlocks> blocks;
  std::vector<double> pooled;  // baseline: channel means of the final block
  ClasswiseMaps maps;          // modified
  std::vector<double> logits;

  std::array<Tensor3, NetworkSpec::kBlocks + 1> grad;  // grad[b]: gradient at the input of block b
  std::array<Tensor3, NetworkSpec::kBlocks> dpre;
  std::array<std::vector<double>, NetworkSpec::kBlocks> dcol;
};

namespace {

void reshape(Tensor3& t, int c, int r, int w) {
  t.channels = c;
  t.rows = r;
  t.cols = w;
  t.data.resize(static_cast<std::size_t>(c) * static_cast<std::size_t>(r) *
                static_cast<std::size_t>(w));
}

}  // namespace

Network::Trace& Network::workspace() {
  thread_local Trace trace;
  return trace;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t size) {
    layout_.push_back({std::move(name), offset, size});
    offset += size;
  };
  int in = 1;
  for (int b = 0; b < NetworkSpec::kBlocks; ++b) {
    const int out = spec_.widths[static_cast<std::size_t>(b)];
    conv_weight_[static_cast<std::size_t>(b)] = "conv" + std::to_string(b + 1) + ".weight";
    conv_bias_[static_cast<std::size_t>(b)] = "conv" + std::to_string(b + 1) + ".bias";
    add(conv_weight_[static_cast<std::size_t>(b)], static_cast<std::size_t>(out * in * kTaps));
    add(conv_bias_[static_cast<std::size_t>(b)], static_cast<std::size_t>(out));
    in = out;
  }
  if (spec_.head == HeadKind::baseline) {
    add("fc.weight", static_cast<std::size_t>(in));
    add("fc.bias", 1);
  } else {
    const auto mc = static_cast<std::size_t>(spec_.pooling.channels());
    add("transfer.weight", mc * static_cast<std::size_t>(in));
    add("transfer.bias", mc);
  }
  params_.assign(offset, 0.0);
}

void Network::initialize(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1417));
  std::fill(params_.begin(), params_.end(), 0.0);
  int in = 1;
  for (int b = 0; b < NetworkSpec::kBlocks; ++b) {
    const double stddev = std::sqrt(2.0 / (in * kTaps));
    for (double& w : block("conv" + std::to_string(b + 1) + ".weight")) w = stddev * rng.normal();
    in = spec_.widths[static_cast<std::size_t>(b)];
  }
  const double head_std = std::sqrt(1.0 / in);
  const char* head_weight = spec_.head == HeadKind::baseline ? "fc.weight" : "transfer.weight";
  for (double& w : block(head_weight)) w = head_std * rng.normal();
}

std::span<double> Network::block(std::string_view name) {
  for (const auto& b : layout_) {
    if (b.name == name) return {params_.data() + b.offset, b.size};
  }
  throw InvalidInput("no parameter block named '" + std::string(name) + "'");
}

std::span<const double> Network::block(std::string_view name) const {
  return const_cast<Network*>(this)->block(name);
}

std::size_t Network::output_count() const {
  return spec_.head == HeadKind::baseline ? 1 : static_cast<std::size_t>(spec_.pooling.classes);
}

std::vector<std::string> Network::spatial_layers() const {
  std::vector<std::string> names;
  for (int b = 1; b <= NetworkSpec::kBlocks; ++b) names.push_back(block_name(b));
  return names;
}

void Network::check_input(const Grid& pixels) const {
  if (pixels.rows != spec_.input_size || pixels.cols != spec_.input_size) {
    throw InvalidInput("network expects " + std::to_string(spec_.input_size) + "x" +
                       std::to_string(spec_.input_size) + " input, got " +
                       std::to_string(pixels.rows) + "x" + std::to_string(pixels.cols));
  }
}

void Network::run_forward(const Grid& pixels, Trace& t) const {
  check_input(pixels);
  const double* in = pixels.data.data();
  int in_channels = 1;
  int size = spec_.input_size;
  for (int b = 0; b < NetworkSpec::kBlocks; ++b) {
    auto& blk = t.blocks[static_cast<std::size_t>(b)];
    const int out_channels = spec_.widths[static_cast<std::size_t>(b)];
    const int plane = size * size;
    const int taps = in_channels * kTaps;
    blk.col.resize(static_cast<std::size_t>(taps) * static_cast<std::size_t>(plane));
    im2col(in, in_channels, size, blk.col.data());
    reshape(blk.pre, out_channels, size, size);
    const auto weight = block(conv_weight_[static_cast<std::size_t>(b)]);
    const auto bias = block(conv_bias_[static_cast<std::size_t>(b)]);
    MatrixMap pre(blk.pre.data.data(), out_channels, plane);
    pre.noalias() = ConstMatrixMap(weight.data(), out_channels, taps) *
                    ConstMatrixMap(blk.col.data(), taps, plane);
    for (int o = 0; o < out_channels; ++o) pre.row(o).array() += bias[static_cast<std::size_t>(o)];
    relu_avgpool(blk.pre, blk.out);
    in = blk.out.data.data();
    in_channels = out_channels;
    size /= 2;
  }

  const Tensor3& features = t.blocks.back().out;
  if (spec_.head == HeadKind::baseline) {
    const auto w = block("fc.weight");
    t.pooled.resize(static_cast<std::size_t>(features.channels));
    double logit = block("fc.bias")[0];
    for (int f = 0; f < features.channels; ++f) {
      double sum = 0.0;
      for (double v : features.channel(f)) sum += v;
      t.pooled[static_cast<std::size_t>(f)] = sum / static_cast<double>(features.plane());
      logit += w[static_cast<std::size_t>(f)] * t.pooled[static_cast<std::size_t>(f)];
    }
    t.logits.assign(1, logit);
  } else {
    const FeatureStack stack{features, NetworkSpec::kDownsample};
    const Tensor3 transfer = transfer_layer(
        stack, spec_.pooling, TransferParams{block("transfer.weight"), block("transfer.bias")});
    t.maps = class_pool(transfer, spec_.pooling, spec_.input_size);
    t.logits = spatial_pool(t.maps, spec_.pooling);
  }
}

const Tensor3& Network::run_backward(Trace& t, std::span<const double> logit_grad,
                                     BackpropRule rule, double* param_grad,
                                     int stop_block) const {
  auto grad_block = [&](const std::string& name) -> double* {
    if (param_grad == nullptr) return nullptr;
    for (const auto& b : layout_) {
      if (b.name == name) return param_grad + b.offset;
    }
    return nullptr;
  };

  const Tensor3& features = t.blocks.back().out;
  const int channels = features.channels;
  const std::size_t plane = features.plane();
  Tensor3& grad = t.grad[NetworkSpec::kBlocks];
  reshape(grad, channels, features.rows, features.cols);

  if (spec_.head == HeadKind::baseline) {
    const double g = logit_grad[0];
    const auto w = block("fc.weight");
    if (double* gw = grad_block("fc.weight")) {
      for (int f = 0; f < channels; ++f) gw[f] += g * t.pooled[static_cast<std::size_t>(f)];
      *grad_block("fc.bias") += g;
    }
    for (int f = 0; f < channels; ++f) {
      const double v = g * w[static_cast<std::size_t>(f)] / static_cast<double>(plane);
      auto dst = grad.channel(f);
      std::fill(dst.begin(), dst.end(), v);
    }
  } else {
    const PoolingConfig& pc = spec_.pooling;
    const Tensor3 dmaps = spatial_pool_gradient(t.maps, pc, logit_grad);
    const int m = pc.maps_per_class;
    const int mc = pc.channels();
    Tensor3 dtransfer(mc, features.rows, features.cols);
    for (int j = 0; j < pc.classes; ++j) {
      auto src = dmaps.channel(j);
      for (int i = 0; i < m; ++i) {
        auto dst = dtransfer.channel(j * m + i);
        for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] / m;
      }
    }
    const auto np = static_cast<Eigen::Index>(plane);
    ConstMatrixMap dt(dtransfer.data.data(), mc, np);
    ConstMatrixMap feats(features.data.data(), channels, np);
    if (double* gw = grad_block("transfer.weight")) {
      MatrixMap(gw, mc, channels).noalias() += dt * feats.transpose();
      double* gb = grad_block("transfer.bias");
      for (int o = 0; o < mc; ++o) gb[o] += row_sum(dt, o);
    }
    MatrixMap(grad.data.data(), channels, np).noalias() =
        ConstMatrixMap(block("transfer.weight").data(), mc, channels).transpose() * dt;
  }

  for (int b = NetworkSpec::kBlocks - 1; b >= 0; --b) {
    const Tensor3& above = t.grad[static_cast<std::size_t>(b) + 1];
    if (stop_block == b + 1) return above;
    const auto& blk = t.blocks[static_cast<std::size_t>(b)];
    Tensor3& dpre = t.dpre[static_cast<std::size_t>(b)];
    avgpool_backward(above, dpre);
    relu_backward(blk.pre.data, dpre.data, rule);

    const int out_channels = blk.pre.channels;
    const int in_channels = b == 0 ? 1 : t.blocks[static_cast<std::size_t>(b - 1)].out.channels;
    const int size = blk.pre.rows;
    const int taps = in_channels * kTaps;
    const Eigen::Index np = static_cast<Eigen::Index>(size) * size;
    ConstMatrixMap dp(dpre.data.data(), out_channels, np);
    const auto weight = block(conv_weight_[static_cast<std::size_t>(b)]);
    if (double* gw = grad_block(conv_weight_[static_cast<std::size_t>(b)])) {
      MatrixMap(gw, out_channels, taps).noalias() +=
          dp * ConstMatrixMap(blk.col.data(), taps, np).transpose();
      double* gb = grad_block(conv_bias_[static_cast<std::size_t>(b)]);
      for (int o = 0; o < out_channels; ++o) gb[o] += row_sum(dp, o);
    }
    // The input gradient of the first block is only needed for saliency.
    if (b == 0 && stop_block < 0) return above;
    auto& dcol = t.dcol[static_cast<std::size_t>(b)];
    dcol.resize(static_cast<std::size_t>(taps) * static_cast<std::size_t>(np));
    MatrixMap(dcol.data(), taps, np).noalias() =
        ConstMatrixMap(weight.data(), out_channels, taps).transpose() * dp;
    Tensor3& below = t.grad[static_cast<std::size_t>(b)];
    reshape(below, in_channels, size, size);
    std::fill(below.data.begin(), below.data.end(), 0.0);
    col2im_add(dcol.data(), in_channels, size, below.data.data());
  }
  return t.grad[0];
}

ModelOutput Network::forward(const Grid& pixels) const {
  Trace& t = workspace();
  run_forward(pixels, t);
  return ModelOutput{FeatureStack{t.blocks.back().out, NetworkSpec::kDownsample}, t.logits};
}

Grid Network::input_gradient(const Grid& pixels, std::size_t output, BackpropRule rule) const {
  Trace& t = workspace();
  run_forward(pixels, t);
  std::vector<double> dlogits(output_count(), 0.0);
  dlogits.at(output) = 1.0;
  return run_backward(t, dlogits, rule, nullptr, 0).channel_grid(0);
}

LayerGradient Network::layer_gradient(const Grid& pixels, std::string_view layer,
                                      std::size_t output) const {
  int stop = 0;
  for (int b = 1; b <= NetworkSpec::kBlocks; ++b) {
    if (layer == block_name(b)) stop = b;
  }
  if (stop == 0) throw InvalidInput("unknown layer '" + std::string(layer) + "'");
  Trace& t = workspace();
  run_forward(pixels, t);
  std::vector<double> dlogits(output_count(), 0.0);
  dlogits.at(output) = 1.0;
  Tensor3 g = run_backward(t, dlogits, BackpropRule::standard, nullptr, stop);
  return LayerGradient{t.blocks[static_cast<std::size_t>(stop - 1)].out, std::move(g)};
}

ModifiedOutput Network::forward_modified(const Grid& pixels) const {
  if (spec_.head != HeadKind::modified) {
    throw InvalidInput("forward_modified requires the modified head");
  }
  Trace& t = workspace();
  run_forward(pixels, t);
  const double p = logistic(t.logits.at(positive_output()));
  return ModifiedOutput{p, t.logits, t.maps};
}

double Network::accumulate_loss_gradient(const Grid& pixels, double label,
                                         std::span<double> grad) const {
  if (grad.size() != params_.size()) throw InvalidInput("gradient buffer size mismatch");
  Trace& t = workspace();
  run_forward(pixels, t);
  const double z = t.logits.at(positive_output());
  // BCE on logits: softplus(z) - label * z.
  const double loss = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - label * z;
  std::vector<double> dlogits(output_count(), 0.0);
  dlogits[positive_output()] = logistic(z) - label;
  run_backward(t, dlogits, BackpropRule::standard, grad.data(), -1);
  return loss;
}

void Network::accumulate_parameter_gradient(const Grid& pixels,
                                            std::span<const double> logit_weights,
                                            std::span<double> grad) const {
  if (grad.size() != params_.size()) throw InvalidInput("gradient buffer size mismatch");
  if (logit_weights.size() != output_count()) throw InvalidInput("one weight per output needed");
  Trace& t = workspace();
  run_forward(pixels, t);
  run_backward(t, logit_weights, BackpropRule::standard, grad.data(), -1);
}

ModifiedOutput forward_modified(const Network& model, const Image& image) {
  validate_image(image, model.downsample_factor());
  return model.forward_modified(image.pixels);
}

}  // namespace wsloc
