#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsloc/backbone.hpp"
#include "wsloc/metrics.hpp"

namespace wsloc {

/// Generator parameters of one synthetic opacity.
struct BlobRecord {
  double center_x = 0.0;
  double center_y = 0.0;
  double sigma = 0.0;
  double amplitude = 0.0;
};

struct AnnotatedSample {
  std::string id;
  Image image;
  int label = 0;
  std::vector<BoundingBox> boxes;
  std::vector<BlobRecord> blobs;  // synthetic samples only
};

struct SyntheticOptions {
  int count = 100;
  int image_size = 64;
  double positive_fraction = 0.4;
  std::uint64_t seed = 0;
};

/// Negatives are smoothed noise; positives add one or two Gaussian blobs with
/// peak 0.4-0.8 and sigma in [S/16, S/8], each annotated by its +-2 sigma
/// extent clipped to the image. Pixels are quantized to 8-bit levels so a
/// PNG round trip is exact. The positive count is round(count * fraction).
std::vector<AnnotatedSample> generate_synthetic(const SyntheticOptions& options);

struct CsvLoadOptions {
  int image_size = 64;
  /// Drop rows whose `class` column equals this value (three-class files).
  std::optional<std::string> drop_class;
  std::string image_extension = ".png";
};

/// Reads `patientId,x,y,width,height,Target[,class]` rows, merging repeated
/// ids into one sample, loading `<image_dir>/<id><ext>` as grayscale and
/// rescaling image and boxes to image_size.
std::vector<AnnotatedSample> load_annotation_csv(const std::string& csv_path,
                                                 const std::string& image_dir,
                                                 const CsvLoadOptions& options = {});

inline constexpr const char* kAnnotationHeader = "patientId,x,y,width,height,Target";

/// Writes `<dir>/annotations.csv`, `<dir>/images/<id>.png` and
/// `<dir>/dataset.cfg` (image size and sample count).
void write_dataset(const std::string& dir, std::span<const AnnotatedSample> samples);
/// Loads a directory produced by write_dataset (or laid out the same way).
/// image_size 0 uses the size recorded in dataset.cfg, else 64.
std::vector<AnnotatedSample> load_dataset(const std::string& dir, int image_size = 0);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
};

/// Stratified by label. Within each label, val and test get the rounded
/// fraction of the samples and train gets the remainder. Order within each
/// split follows the input order.
DatasetSplit split_dataset(std::span<const AnnotatedSample> samples,
                           std::array<double, 3> fractions = {0.8, 0.1, 0.1},
                           std::uint64_t seed = 0);

/// Samples of one split, in split order.
std::vector<AnnotatedSample> select_samples(std::span<const AnnotatedSample> samples,
                                            std::span<const std::string> ids);

}  // namespace wsloc
