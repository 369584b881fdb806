#include "wsloc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "text_util.hpp"
#include "wsloc/saliency.hpp"

namespace wsloc {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Bytes encode(int width, int height, std::uint32_t format, const std::uint8_t* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr)) {
    throw InvalidInput(std::string("PNG encoding failed: ") + image.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
    throw InvalidInput(std::string("PNG encoding failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void append_rows(std::ostringstream& os, std::span<const double> values, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c > 0) os << ' ';
      os << text::format_double(values[static_cast<std::size_t>(r) * cols + c]);
    }
    os << '\n';
  }
}

}  // namespace

Bytes encode_png_gray(const Grid& values) {
  if (values.rows <= 0 || values.cols <= 0) throw InvalidInput("cannot encode an empty image");
  Bytes pixels(values.size());
  std::transform(values.data.begin(), values.data.end(), pixels.begin(), to_byte);
  return encode(values.cols, values.rows, PNG_FORMAT_GRAY, pixels.data());
}

Bytes encode_png_rgb(int width, int height, const Bytes& rgb) {
  if (width <= 0 || height <= 0 ||
      rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw InvalidInput("RGB buffer does not match the image dimensions");
  }
  return encode(width, height, PNG_FORMAT_RGB, rgb.data());
}

Grid decode_png_gray(const Bytes& png) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, png.data(), png.size())) {
    throw InvalidInput(std::string("PNG decoding failed: ") + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  Bytes pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw InvalidInput(std::string("PNG decoding failed: ") + image.message);
  }
  Grid out(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < pixels.size(); ++i) out.data[i] = pixels[i] / 255.0;
  return out;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Grid read_png_gray(const std::string& path) { return decode_png_gray(read_file(path)); }

void write_png_gray(const std::string& path, const Grid& values) {
  write_file(path, encode_png_gray(values));
}

Grid resample_area(const Grid& source, int size) {
  if (size <= 0 || source.rows <= 0 || source.cols <= 0) {
    throw InvalidInput("resample_area needs non-empty source and positive size");
  }
  if (source.rows == size && source.cols == size) return source;
  const double sy = static_cast<double>(source.rows) / size;
  const double sx = static_cast<double>(source.cols) / size;
  Grid out(size, size);
  for (int r = 0; r < size; ++r) {
    const double y0 = r * sy;
    const double y1 = y0 + sy;
    for (int c = 0; c < size; ++c) {
      const double x0 = c * sx;
      const double x1 = x0 + sx;
      double acc = 0.0;
      for (int yy = static_cast<int>(y0); yy < std::min(source.rows, static_cast<int>(std::ceil(y1))); ++yy) {
        const double wy = std::min(y1, yy + 1.0) - std::max(y0, static_cast<double>(yy));
        if (wy <= 0.0) continue;
        for (int xx = static_cast<int>(x0); xx < std::min(source.cols, static_cast<int>(std::ceil(x1))); ++xx) {
          const double wx = std::min(x1, xx + 1.0) - std::max(x0, static_cast<double>(xx));
          if (wx > 0.0) acc += wy * wx * source(yy, xx);
        }
      }
      out(r, c) = std::clamp(acc / (sy * sx), 0.0, 1.0);
    }
  }
  return out;
}

Grid min_max_scale(const Grid& values) { return normalize_map(values).values; }

std::string classwise_maps_text(const ClasswiseMaps& maps) {
  std::ostringstream os;
  os << maps.maps.rows << ' ' << maps.geometry.image_size << ' ' << maps.maps.channels << '\n';
  for (int c = 0; c < maps.maps.channels; ++c) {
    append_rows(os, maps.maps.channel(c), maps.maps.rows, maps.maps.cols);
  }
  return os.str();
}

std::string saliency_map_text(const SaliencyMap& map) {
  std::ostringstream os;
  os << map.values.rows << ' ' << map.values.rows << " 1 " << method_tag(map.method) << '\n';
  append_rows(os, map.values.data, map.values.rows, map.values.cols);
  return os.str();
}

Bytes classwise_map_png(const ClasswiseMaps& maps, int class_index) {
  if (class_index < 0 || class_index >= maps.maps.channels) {
    throw InvalidInput("class index " + std::to_string(class_index) + " out of range");
  }
  return encode_png_gray(min_max_scale(maps.class_map(class_index)));
}

Bytes saliency_map_png(const SaliencyMap& map) {
  return encode_png_gray(map.normalized ? map.values : min_max_scale(map.values));
}

}  // namespace wsloc
