#include <algorithm>
#include <array>
#include <cmath>

#include "wsloc/harness.hpp"

namespace wsloc {

namespace {

using Rgb = std::array<double, 3>;

// Blue -> cyan -> yellow -> red.
Rgb colormap(double v) {
  static constexpr std::array<Rgb, 4> stops{{{0, 0, 255}, {0, 255, 255}, {255, 255, 0}, {255, 0, 0}}};
  v = std::clamp(v, 0.0, 1.0) * 3.0;
  const int i = std::min(2, static_cast<int>(v));
  const double t = v - i;
  Rgb out;
  for (int ch = 0; ch < 3; ++ch) out[ch] = stops[i][ch] * (1 - t) + stops[i + 1][ch] * t;
  return out;
}

void draw_rect(Bytes& rgb, int size, const BoundingBox& box, int scale, Rgb color) {
  const int x0 = std::clamp(static_cast<int>(std::lround(box.x * scale)), 0, size - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(box.y * scale)), 0, size - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround((box.x + box.w) * scale)) - 1, 0, size - 1);
  const int y1 = std::clamp(static_cast<int>(std::lround((box.y + box.h) * scale)) - 1, 0, size - 1);
  auto put = [&](int x, int y) {
    const std::size_t at = (static_cast<std::size_t>(y) * size + x) * 3;
    for (int ch = 0; ch < 3; ++ch) rgb[at + ch] = static_cast<std::uint8_t>(color[ch]);
  };
  for (int x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (int y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

}  // namespace

Bytes render_overlay(const Image& image, const Grid& map, std::span<const BoundingBox> truth,
                     std::span<const BoundingBox> predicted, int scale) {
  const int n = image.size();
  if (n <= 0 || image.pixels.cols != n) throw InvalidInput("overlay needs a square image");
  if (map.rows != n || map.cols != n) throw InvalidInput("overlay map must match the image size");
  if (scale < 1 || scale > 16) throw InvalidInput("overlay scale must lie in [1, 16]");
  const Grid scaled_map = min_max_scale(map);
  const int size = n * scale;
  Bytes rgb(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double gray = std::clamp(image.pixels(y / scale, x / scale), 0.0, 1.0) * 255.0;
      const Rgb heat = colormap(scaled_map(y / scale, x / scale));
      const std::size_t at = (static_cast<std::size_t>(y) * size + x) * 3;
      for (int ch = 0; ch < 3; ++ch) {
        rgb[at + ch] = static_cast<std::uint8_t>(std::lround(0.5 * gray + 0.5 * heat[ch]));
      }
    }
  }
  for (const auto& b : truth) draw_rect(rgb, size, b, scale, {0, 255, 0});
  for (const auto& b : predicted) draw_rect(rgb, size, b, scale, {255, 0, 0});
  return encode_png_rgb(size, size, rgb);
}

}  // namespace wsloc
