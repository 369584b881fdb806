#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wsloc/types.hpp"
#include "wsloc/wildcat_head.hpp"

namespace wsloc {

struct SaliencyMap;

using Bytes = std::vector<std::uint8_t>;

/// 8-bit grayscale PNG of a grid with values in [0, 1] (clamped, rounded).
Bytes encode_png_gray(const Grid& values);
/// 8-bit RGB PNG from interleaved rows.
Bytes encode_png_rgb(int width, int height, const Bytes& rgb);
/// Decodes any PNG to grayscale in [0, 1]; the result need not be square.
Grid decode_png_gray(const Bytes& png);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, const Bytes& bytes);
void write_file(const std::string& path, std::string_view text);

Grid read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const Grid& values);

/// Area-weighted resampling to size x size.
Grid resample_area(const Grid& source, int size);

/// Min-max scaled to [0, 1]; a constant grid becomes all 0.5.
Grid min_max_scale(const Grid& values);

/// Text matrix export. The header line is "s S c", followed by s rows per
/// class of space-separated values.
std::string classwise_maps_text(const ClasswiseMaps& maps);
/// Same layout for an S x S saliency map, header "S S 1 <method tag>".
std::string saliency_map_text(const SaliencyMap& map);
/// Min-max normalized 8-bit PNG of one class map.
Bytes classwise_map_png(const ClasswiseMaps& maps, int class_index);
Bytes saliency_map_png(const SaliencyMap& map);

}  // namespace wsloc
