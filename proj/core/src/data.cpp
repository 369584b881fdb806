#include "wsloc/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "text_util.hpp"
#include "wsloc/config.hpp"
#include "wsloc/image_io.hpp"
#include "wsloc/rng.hpp"

namespace wsloc {

namespace fs = std::filesystem;

namespace {

constexpr double kBackgroundLow = 0.30;
constexpr double kBackgroundHigh = 0.40;
constexpr double kSmoothNoiseStd = 0.07;
constexpr double kPixelNoiseStd = 0.02;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

// Coarse Gaussian noise on a (S/8 + 1)^2 lattice, bilinearly interpolated.
Grid smooth_noise(Rng& rng, int size) {
  const int cell = std::max(1, size / 8);
  const int n = size / cell + 1;
  Grid lattice(n, n);
  for (double& v : lattice.data) v = rng.normal();
  Grid out(size, size);
  for (int r = 0; r < size; ++r) {
    const double fy = (r + 0.5) / cell;
    const int y0 = std::min(static_cast<int>(fy), n - 2);
    const double ty = fy - y0;
    for (int c = 0; c < size; ++c) {
      const double fx = (c + 0.5) / cell;
      const int x0 = std::min(static_cast<int>(fx), n - 2);
      const double tx = fx - x0;
      const double top = lattice(y0, x0) * (1 - tx) + lattice(y0, x0 + 1) * tx;
      const double bottom = lattice(y0 + 1, x0) * (1 - tx) + lattice(y0 + 1, x0 + 1) * tx;
      out(r, c) = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

BoundingBox blob_box(const BlobRecord& blob, int size) {
  const double x0 = std::max(0.0, blob.center_x - 2.0 * blob.sigma);
  const double y0 = std::max(0.0, blob.center_y - 2.0 * blob.sigma);
  const double x1 = std::min(static_cast<double>(size), blob.center_x + 2.0 * blob.sigma);
  const double y1 = std::min(static_cast<double>(size), blob.center_y + 2.0 * blob.sigma);
  return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "syn%05zu", index);
  return buf;
}

BoundingBox clip_box(const BoundingBox& box, int size) {
  const double x0 = std::clamp(box.x, 0.0, static_cast<double>(size));
  const double y0 = std::clamp(box.y, 0.0, static_cast<double>(size));
  const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(size));
  const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(size));
  return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

}  // namespace

std::vector<AnnotatedSample> generate_synthetic(const SyntheticOptions& options) {
  if (options.count < 1) throw InvalidInput("sample count must be at least 1");
  if (!(options.positive_fraction > 0.0 && options.positive_fraction < 1.0)) {
    throw InvalidInput("positive fraction must lie in (0, 1)");
  }
  if (options.image_size < kMinImageSize) {
    throw InvalidInput("image size must be at least " + std::to_string(kMinImageSize));
  }
  const int size = options.image_size;
  const auto n = static_cast<std::size_t>(options.count);
  const auto positives = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * options.positive_fraction));

  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
  Rng label_rng(mix_seed(options.seed, 0));
  label_rng.shuffle(std::span<int>(labels));

  std::vector<AnnotatedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(options.seed, i + 1));
    AnnotatedSample sample;
    sample.id = sample_id(i);
    sample.label = labels[i];

    const double base = rng.uniform(kBackgroundLow, kBackgroundHigh);
    Grid pixels = smooth_noise(rng, size);
    for (double& v : pixels.data) v = base + kSmoothNoiseStd * v + kPixelNoiseStd * rng.normal();

    if (sample.label == 1) {
      const int blobs = rng.uniform() < 0.5 ? 1 : 2;
      for (int b = 0; b < blobs; ++b) {
        BlobRecord blob;
        blob.center_x = rng.uniform(size / 8.0, 7.0 * size / 8.0);
        blob.center_y = rng.uniform(size / 8.0, 7.0 * size / 8.0);
        blob.sigma = rng.uniform(size / 16.0, size / 8.0);
        blob.amplitude = rng.uniform(0.4, 0.8);
        const double inv = 1.0 / (2.0 * blob.sigma * blob.sigma);
        for (int r = 0; r < size; ++r) {
          const double dy = r + 0.5 - blob.center_y;
          for (int c = 0; c < size; ++c) {
            const double dx = c + 0.5 - blob.center_x;
            pixels(r, c) += blob.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
          }
        }
        sample.boxes.push_back(blob_box(blob, size));
        sample.blobs.push_back(blob);
      }
    }
    for (double& v : pixels.data) v = quantize(v);
    sample.image = Image(std::move(pixels));
    out.push_back(std::move(sample));
  }
  return out;
}

std::vector<AnnotatedSample> load_annotation_csv(const std::string& csv_path,
                                                 const std::string& image_dir,
                                                 const CsvLoadOptions& options) {
  if (options.image_size < kMinImageSize) {
    throw InvalidInput("image size must be at least " + std::to_string(kMinImageSize));
  }
  std::ifstream in(csv_path);
  if (!in) throw InvalidInput("cannot open annotation file '" + csv_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(csv_path, 1, "missing header");
  const std::string_view header = text::strip_cr(line);
  const std::string base_header = kAnnotationHeader;
  bool has_class = false;
  if (header == base_header + ",class") {
    has_class = true;
  } else if (header != base_header) {
    throw ParseError(csv_path, 1, "expected header '" + base_header + "[,class]'");
  }
  if (options.drop_class && !has_class) {
    throw InvalidInput("drop-class filter needs a 'class' column in '" + csv_path + "'");
  }

  struct Pending {
    int label;
    std::vector<BoundingBox> boxes;  // original pixel units
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Pending> pending;
  std::size_t line_no = 1;
  const std::size_t expected_fields = has_class ? 7 : 6;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = text::strip_cr(line);
    if (text::trim(row).empty()) continue;
    const auto fields = text::split(row);
    if (fields.size() != expected_fields) {
      throw ParseError(csv_path, line_no, "expected " + std::to_string(expected_fields) + " fields, got " +
                                              std::to_string(fields.size()));
    }
    if (has_class && options.drop_class && text::trim(fields[6]) == *options.drop_class) continue;
    const std::string id(text::trim(fields[0]));
    if (id.empty()) throw ParseError(csv_path, line_no, "empty patientId");
    const auto target = text::parse_int(fields[5]);
    if (!target || (*target != 0 && *target != 1)) throw ParseError(csv_path, line_no, "Target must be 0 or 1");
    const int label = static_cast<int>(*target);

    const bool coords_empty = std::all_of(fields.begin() + 1, fields.begin() + 5,
                                          [](const std::string& f) { return text::trim(f).empty(); });
    std::optional<BoundingBox> box;
    if (!coords_empty) {
      const auto x = text::parse_double(fields[1]);
      const auto y = text::parse_double(fields[2]);
      const auto w = text::parse_double(fields[3]);
      const auto h = text::parse_double(fields[4]);
      if (!x || !y || !w || !h) throw ParseError(csv_path, line_no, "malformed box coordinates");
      if (!(*w > 0.0 && *h > 0.0)) throw ParseError(csv_path, line_no, "box width and height must be positive");
      box = BoundingBox{*x, *y, *w, *h};
    }
    if (label == 1 && !box) throw ParseError(csv_path, line_no, "positive row without box coordinates");
    if (label == 0 && box) throw ParseError(csv_path, line_no, "negative row with box coordinates");

    auto [it, inserted] = pending.try_emplace(id, Pending{label, {}});
    if (inserted) {
      order.push_back(id);
    } else if (it->second.label != label) {
      throw ParseError(csv_path, line_no, "conflicting Target for '" + id + "'");
    }
    if (box) it->second.boxes.push_back(*box);
  }

  std::vector<std::string> missing;
  for (const auto& id : order) {
    if (!fs::exists(fs::path(image_dir) / (id + options.image_extension))) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw InvalidInput(std::to_string(missing.size()) + " image file(s) missing in '" + image_dir +
                       "': " + list);
  }

  const int size = options.image_size;
  std::vector<AnnotatedSample> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const Pending& p = pending[id];
    const std::string path = (fs::path(image_dir) / (id + options.image_extension)).string();
    const Grid original = read_png_gray(path);
    const double fx = static_cast<double>(size) / original.cols;
    const double fy = static_cast<double>(size) / original.rows;
    AnnotatedSample sample;
    sample.id = id;
    sample.label = p.label;
    sample.image = Image(resample_area(original, size));
    for (const auto& b : p.boxes) {
      const BoundingBox scaled = clip_box(BoundingBox{b.x * fx, b.y * fy, b.w * fx, b.h * fy}, size);
      if (!(scaled.w > 0.0 && scaled.h > 0.0)) {
        throw InvalidInput("box of '" + id + "' lies outside its image");
      }
      sample.boxes.push_back(scaled);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

void write_dataset(const std::string& dir, std::span<const AnnotatedSample> samples) {
  if (samples.empty()) throw InvalidInput("cannot write an empty dataset");
  const int size = samples.front().image.size();
  fs::create_directories(fs::path(dir) / "images");
  std::ostringstream csv;
  csv << kAnnotationHeader << '\n';
  for (const auto& s : samples) {
    if (s.image.size() != size) throw InvalidInput("dataset images must share one size");
    if (s.boxes.empty()) {
      csv << s.id << ",,,,," << s.label << '\n';
    }
    for (const auto& b : s.boxes) {
      csv << s.id << ',' << text::format_double(b.x) << ',' << text::format_double(b.y) << ','
          << text::format_double(b.w) << ',' << text::format_double(b.h) << ',' << s.label << '\n';
    }
    write_png_gray((fs::path(dir) / "images" / (s.id + ".png")).string(), s.image.pixels);
  }
  write_file((fs::path(dir) / "annotations.csv").string(), csv.str());
  write_file((fs::path(dir) / "dataset.cfg").string(),
             "image_size = " + std::to_string(size) + "\ncount = " + std::to_string(samples.size()) + "\n");
}

std::vector<AnnotatedSample> load_dataset(const std::string& dir, int image_size) {
  const fs::path root(dir);
  if (image_size == 0) {
    image_size = 64;
    if (fs::exists(root / "dataset.cfg")) {
      image_size = static_cast<int>(KeyValueConfig::load((root / "dataset.cfg").string()).get_int("image_size", 64));
    }
  }
  CsvLoadOptions options;
  options.image_size = image_size;
  return load_annotation_csv((root / "annotations.csv").string(), (root / "images").string(), options);
}

DatasetSplit split_dataset(std::span<const AnnotatedSample> samples, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidInput("split fractions must lie in [0, 1]");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw InvalidInput("split fractions must sum to 1");
  }
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) throw InvalidInput("duplicate sample id '" + s.id + "'");
  }

  // 0 = train, 1 = val, 2 = test
  std::vector<int> assignment(samples.size(), 0);
  for (int label = 0; label <= 1; ++label) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].label == label) members.push_back(i);
    }
    Rng rng(mix_seed(seed, 0x5b1700 + static_cast<std::uint64_t>(label)));
    rng.shuffle(std::span<std::size_t>(members));
    const auto n = static_cast<double>(members.size());
    const auto n_val = static_cast<std::size_t>(std::llround(n * fractions[1]));
    const auto n_test = std::min(members.size() - n_val, static_cast<std::size_t>(std::llround(n * fractions[2])));
    for (std::size_t j = 0; j < n_val; ++j) assignment[members[j]] = 1;
    for (std::size_t j = n_val; j < n_val + n_test; ++j) assignment[members[j]] = 2;
  }

  DatasetSplit split;
  split.seed = seed;
  split.fractions = fractions;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& target = assignment[i] == 0 ? split.train : assignment[i] == 1 ? split.val : split.test;
    target.push_back(samples[i].id);
  }
  return split;
}

std::vector<AnnotatedSample> select_samples(std::span<const AnnotatedSample> samples,
                                            std::span<const std::string> ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  std::vector<AnnotatedSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw InvalidInput("unknown sample id '" + id + "'");
    out.push_back(samples[it->second]);
  }
  return out;
}

}  // namespace wsloc
