#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "fixtures.hpp"
#include "wsloc/data.hpp"
#include "wsloc/image_io.hpp"

using namespace wsloc;
using namespace wsloc::testing;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

std::vector<AnnotatedSample> synthetic(int n, double frac, std::uint64_t seed, int size = 64) {
  SyntheticOptions o;
  o.count = n;
  o.positive_fraction = frac;
  o.seed = seed;
  o.image_size = size;
  return generate_synthetic(o);
}

int positives(std::span<const AnnotatedSample> s) {
  return static_cast<int>(std::count_if(s.begin(), s.end(), [](const auto& x) { return x.label == 1; }));
}

void expect_same(const AnnotatedSample& a, const AnnotatedSample& b) {
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.label, b.label);
  EXPECT_EQ(a.boxes, b.boxes);
  EXPECT_EQ(a.image, b.image);
}

}  // namespace

TEST(Synthetic, ExactPositiveCount) {
  EXPECT_EQ(positives(synthetic(100, 0.4, 7)), 40);
  EXPECT_EQ(positives(synthetic(7, 0.5, 1)), 4);  // round(3.5) away from zero
}

TEST(Synthetic, SeedDeterministic) {
  const auto a = synthetic(30, 0.4, 11);
  const auto b = synthetic(30, 0.4, 11);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) expect_same(a[i], b[i]);
  const auto c = synthetic(30, 0.4, 12);
  EXPECT_NE(a[0].image, c[0].image);
}

TEST(Synthetic, PositivesCarryBlobsInsideTheirBoxes) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (const auto& s : synthetic(50, 0.4, seed)) {
      for (double v : s.image.pixels.data) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        ASSERT_EQ(std::round(v * 255) / 255, v);
      }
      if (s.label == 0) {
        EXPECT_TRUE(s.boxes.empty());
        EXPECT_TRUE(s.blobs.empty());
        continue;
      }
      ASSERT_EQ(s.boxes.size(), s.blobs.size());
      ASSERT_GE(s.blobs.size(), 1u);
      ASSERT_LE(s.blobs.size(), 2u);
      for (std::size_t b = 0; b < s.blobs.size(); ++b) {
        const BlobRecord& blob = s.blobs[b];
        EXPECT_GE(blob.sigma, 64.0 / 16);
        EXPECT_LE(blob.sigma, 64.0 / 8);
        EXPECT_GE(blob.amplitude, 0.4);
        EXPECT_LE(blob.amplitude, 0.8);
        // The peak pixel is the one whose center is nearest the blob center.
        const int row = std::clamp(static_cast<int>(std::floor(blob.center_y)), 0, 63);
        const int col = std::clamp(static_cast<int>(std::floor(blob.center_x)), 0, 63);
        EXPECT_TRUE(s.boxes[b].covers_pixel(row, col)) << s.id;
        // Box is the +-2 sigma extent clipped to the image.
        const double x0 = std::max(0.0, blob.center_x - 2 * blob.sigma);
        const double y0 = std::max(0.0, blob.center_y - 2 * blob.sigma);
        EXPECT_NEAR(s.boxes[b].x, x0, 1e-12);
        EXPECT_NEAR(s.boxes[b].y, y0, 1e-12);
        EXPECT_NEAR(s.boxes[b].x + s.boxes[b].w, std::min(64.0, blob.center_x + 2 * blob.sigma), 1e-12);
        EXPECT_NEAR(s.boxes[b].y + s.boxes[b].h, std::min(64.0, blob.center_y + 2 * blob.sigma), 1e-12);
      }
    }
  }
}

TEST(Synthetic, BlobsBrightenTheirRegion) {
  // Mean intensity inside boxes exceeds the image mean on positives.
  for (const auto& s : synthetic(40, 0.5, 3)) {
    if (s.label == 0) continue;
    const AnnotationMask m = annotation_mask(s.boxes, 64);
    double in = 0.0;
    double all = 0.0;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      in += m.values.data[i] * s.image.pixels.data[i];
      all += s.image.pixels.data[i];
    }
    EXPECT_GT(in / m.positives(), all / 4096.0) << s.id;
  }
}

TEST(Synthetic, RejectsBadOptions) {
  EXPECT_THROW(synthetic(10, 0.0, 1), InvalidInput);
  EXPECT_THROW(synthetic(10, 1.0, 1), InvalidInput);
  EXPECT_THROW(synthetic(0, 0.4, 1), InvalidInput);
  EXPECT_THROW(synthetic(10, 0.4, 1, 8), InvalidInput);
}

TEST(Split, EightyTenTen) {
  const auto samples = synthetic(100, 0.4, 5);
  const DatasetSplit s = split_dataset(samples, {0.8, 0.1, 0.1}, 9);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
}

TEST(Split, DisjointExhaustiveAndDeterministic) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(200));
    const auto samples = synthetic(n, rng.uniform(0.2, 0.6), trial, 16);
    const std::uint64_t seed = rng.next();
    const DatasetSplit a = split_dataset(samples, {0.8, 0.1, 0.1}, seed);
    const DatasetSplit b = split_dataset(samples, {0.8, 0.1, 0.1}, seed);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    EXPECT_EQ(a.test, b.test);
    std::set<std::string> seen;
    for (const auto* part : {&a.train, &a.val, &a.test}) {
      for (const auto& id : *part) EXPECT_TRUE(seen.insert(id).second) << id;
    }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(n));
  }
}

TEST(Split, StratifiedWithinFivePoints) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 100 + static_cast<int>(rng.below(400));
    const auto samples = synthetic(n, rng.uniform(0.2, 0.6), trial + 100, 16);
    const double global = static_cast<double>(positives(samples)) / n;
    const DatasetSplit s = split_dataset(samples, {0.8, 0.1, 0.1}, trial);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      const auto chosen = select_samples(samples, *part);
      const double frac = static_cast<double>(positives(chosen)) / static_cast<double>(chosen.size());
      EXPECT_LE(std::abs(frac - global), 0.05) << "n=" << n;
    }
  }
}

TEST(Split, Errors) {
  auto samples = synthetic(10, 0.4, 1, 16);
  EXPECT_THROW(split_dataset(samples, {0.5, 0.1, 0.1}, 0), InvalidInput);
  EXPECT_THROW(split_dataset(samples, {1.2, -0.1, -0.1}, 0), InvalidInput);
  samples[1].id = samples[0].id;
  EXPECT_THROW(split_dataset(samples, {0.8, 0.1, 0.1}, 0), InvalidInput);
  const std::vector<std::string> unknown{"nope"};
  EXPECT_THROW(select_samples(samples, unknown), InvalidInput);
}

TEST(AnnotationCsv, MergesRepeatedIdsAndKeepsNegatives) {
  TempDir dir("wsloc_data_merge");
  fs::create_directories(dir / "img");
  write_png_gray(dir / "img/p1.png", Grid(64, 64, 0.2));
  write_png_gray(dir / "img/n1.png", Grid(64, 64, 0.4));
  write_file(dir / "a.csv", std::string("patientId,x,y,width,height,Target\n"
                                        "p1,1,2,10,10,1\n"
                                        "n1,,,,,0\n"
                                        "p1,30,30,5,6,1\n"));
  const auto s = load_annotation_csv(dir / "a.csv", dir / "img");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].id, "p1");
  EXPECT_EQ(s[0].label, 1);
  EXPECT_EQ(s[0].boxes, (std::vector<BoundingBox>{{1, 2, 10, 10}, {30, 30, 5, 6}}));
  EXPECT_EQ(s[1].id, "n1");
  EXPECT_EQ(s[1].label, 0);
  EXPECT_TRUE(s[1].boxes.empty());
  EXPECT_NEAR(s[1].image.pixels(0, 0), 0.4, 1.0 / 255);
}

TEST(AnnotationCsv, RescalesImagesAndBoxes) {
  TempDir dir("wsloc_data_rescale");
  write_png_gray(dir / "big.png", Grid(1024, 1024, 0.5));
  write_file(dir / "a.csv", std::string("patientId,x,y,width,height,Target\nbig,100,100,200,200,1\n"));
  const auto s = load_annotation_csv(dir / "a.csv", dir.str());
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].image.size(), 64);
  EXPECT_EQ(s[0].boxes[0], (BoundingBox{6.25, 6.25, 12.5, 12.5}));
  for (double v : s[0].image.pixels.data) EXPECT_NEAR(v, 128.0 / 255, 1e-12);
}

TEST(AnnotationCsv, BoxesStayInBoundsAfterRescale) {
  TempDir dir("wsloc_data_bounds");
  write_png_gray(dir / "q.png", Grid(100, 100, 0.5));
  write_file(dir / "a.csv", std::string("patientId,x,y,width,height,Target\nq,90,-5,30,20,1\n"));
  for (int size : {16, 32, 64, 128}) {
    CsvLoadOptions o;
    o.image_size = size;
    const auto s = load_annotation_csv(dir / "a.csv", dir.str(), o);
    const BoundingBox& b = s[0].boxes[0];
    EXPECT_GE(b.x, 0.0);
    EXPECT_GE(b.y, 0.0);
    EXPECT_LE(b.x + b.w, size);
    EXPECT_LE(b.y + b.h, size);
  }
}

TEST(AnnotationCsv, MalformedRowsReportLineNumbers) {
  TempDir dir("wsloc_data_errors");
  write_png_gray(dir / "p.png", Grid(16, 16));
  const std::vector<std::pair<std::string, std::size_t>> cases{
      {"patientId,x,y,width,height,Target\np,1,1,2,2,1\np,1,1,2,2,7\n", 3},
      {"patientId,x,y,width,height,Target\np,1,1,2,2\n", 2},
      {"patientId,x,y,width,height,Target\np,,,,,1\n", 2},
      {"patientId,x,y,width,height,Target\np,1,1,2,2,0\n", 2},
      {"patientId,x,y,width,height,Target\np,1,1,0,2,1\n", 2},
      {"patientId,x,y,width,height,Target\np,1,1,2,2,1\np,,,,,0\n", 3},
      {"id,x,y,w,h,t\n", 1},
  };
  for (const auto& [text, line] : cases) {
    write_file(dir / "a.csv", text);
    try {
      load_annotation_csv(dir / "a.csv", dir.str());
      ADD_FAILURE() << "accepted:\n" << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << text;
    }
  }
}

TEST(AnnotationCsv, MissingImagesAreListed) {
  TempDir dir("wsloc_data_missing");
  write_file(dir / "a.csv", std::string("patientId,x,y,width,height,Target\nghost,,,,,0\n"));
  try {
    load_annotation_csv(dir / "a.csv", dir.str());
    FAIL() << "missing image accepted";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(AnnotationCsv, DropClassFilter) {
  TempDir dir("wsloc_data_class");
  for (const char* id : {"a", "b", "c"}) write_png_gray(dir / (std::string(id) + ".png"), Grid(16, 16));
  write_file(dir / "a.csv", std::string("patientId,x,y,width,height,Target,class\n"
                                        "a,,,,,0,Normal\n"
                                        "b,,,,,0,No Lung Opacity / Not Normal\n"
                                        "c,1,1,4,4,1,Lung Opacity\n"));
  CsvLoadOptions o;
  o.image_size = 16;
  EXPECT_EQ(load_annotation_csv(dir / "a.csv", dir.str(), o).size(), 3u);
  o.drop_class = "No Lung Opacity / Not Normal";
  const auto s = load_annotation_csv(dir / "a.csv", dir.str(), o);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].id, "a");
  EXPECT_EQ(s[1].id, "c");
  write_file(dir / "plain.csv", std::string("patientId,x,y,width,height,Target\na,,,,,0\n"));
  EXPECT_THROW(load_annotation_csv(dir / "plain.csv", dir.str(), o), InvalidInput);
}

TEST(Dataset, WriteThenLoadRoundTrips) {
  TempDir dir("wsloc_data_roundtrip");
  const auto samples = synthetic(25, 0.4, 8);
  write_dataset(dir.str(), samples);
  const auto back = load_dataset(dir.str());
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) expect_same(samples[i], back[i]);
}
