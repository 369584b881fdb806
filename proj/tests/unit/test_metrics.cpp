#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "wsloc/data.hpp"
#include "wsloc/image_io.hpp"
#include "wsloc/metrics.hpp"

using namespace wsloc;
using namespace wsloc::testing;

namespace {

Detection centered(double cx, double cy, double confidence, double size = 4.0) {
  return Detection{BoundingBox{cx - size / 2, cy - size / 2, size, size}, confidence, {}};
}

AnnotationMask mask_of(const std::vector<int>& labels, int rows, int cols) {
  AnnotationMask m{Grid(rows, cols)};
  for (std::size_t i = 0; i < labels.size(); ++i) m.values.data[i] = labels[i];
  return m;
}

AnnotatedSample sample(std::string id, int label, std::vector<BoundingBox> boxes, int size = 8) {
  AnnotatedSample s;
  s.id = std::move(id);
  s.label = label;
  s.boxes = std::move(boxes);
  s.image = Image(Grid(size, size));
  return s;
}

}  // namespace

TEST(RocAuc, WorkedExamples) {
  const std::vector<int> two{0, 1};
  EXPECT_EQ(roc_auc(two, std::vector<double>{0.1, 0.9}), 1.0);
  const std::vector<int> four{0, 1, 1, 0};
  EXPECT_EQ(roc_auc(four, std::vector<double>(4, 0.3)), 0.5);
  const std::vector<double> scores{0.2, 0.3, 0.8, 0.9};
  EXPECT_EQ(roc_auc(four, scores), 0.5);
  EXPECT_EQ(concordance_auc(four, scores), 0.5);
}

TEST(RocAuc, AgreesWithConcordanceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(199));
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.below(2));
      scores[i] = trial % 2 == 0 ? rng.uniform() : static_cast<double>(rng.below(5)) / 4;
    }
    labels[0] = 0;
    labels[1] = 1;
    ASSERT_EQ(roc_auc(labels, scores), concordance_auc(labels, scores)) << "trial " << trial;
  }
}

TEST(RocAuc, Errors) {
  const std::vector<int> ones{1, 1};
  EXPECT_THROW(roc_auc(ones, std::vector<double>{0.1, 0.2}), UndefinedMetric);
  const std::vector<int> bad{0, 2};
  EXPECT_THROW(roc_auc(bad, std::vector<double>{0.1, 0.2}), InvalidInput);
  const std::vector<int> ok{0, 1};
  EXPECT_THROW(roc_auc(ok, std::vector<double>{0.1}), InvalidInput);
  EXPECT_THROW(roc_auc(ok, std::vector<double>{0.1, std::nan("")}), InvalidInput);
}

TEST(ExtrapolateMap, BlockReplication) {
  Grid m(2, 2);
  m.data = {1, 2, 3, 4};
  const Grid up = extrapolate_map(m, 4);
  EXPECT_EQ(up.data, (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  EXPECT_EQ(extrapolate_map(m, 2), m);
  EXPECT_THROW(extrapolate_map(m, 5), InvalidInput);
}

TEST(ExtrapolateMap, BlockMeanRecoversTheMap) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int s = 1 + static_cast<int>(rng.below(6));
    const int d = 1 + static_cast<int>(rng.below(5));
    Grid m(s, s);
    for (double& v : m.data) v = static_cast<double>(rng.below(64)) / 8 - 4;  // dyadic: sums stay exact
    const Grid up = extrapolate_map(m, s * d);
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        double sum = 0.0;
        for (int y = 0; y < d; ++y) {
          for (int x = 0; x < d; ++x) sum += up(r * d + y, c * d + x);
        }
        EXPECT_DOUBLE_EQ(sum / (d * d), m(r, c));
      }
    }
  }
}

TEST(ExtrapolateMap, ArgmaxLandsInTheSameBlock) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Grid m = random_grid(rng, 4, 4);
    const Grid up = extrapolate_map(m, 64);
    const auto src = std::max_element(m.data.begin(), m.data.end()) - m.data.begin();
    const auto dst = std::max_element(up.data.begin(), up.data.end()) - up.data.begin();
    EXPECT_EQ((dst / 64) / 16 * 4 + (dst % 64) / 16, src);
  }
}

TEST(PredictedBox, ArgmaxCellWithTieBreak) {
  ClasswiseMaps maps{Tensor3(1, 2, 2), MapGeometry{64, 2}};
  maps.maps.data = {1, 2, 3, 4};
  const Detection d = predicted_box(maps, 0, 0.7, "a");
  EXPECT_EQ(d.box, (BoundingBox{32, 32, 32, 32}));
  EXPECT_EQ(d.confidence, 0.7);
  EXPECT_EQ(d.image_id, "a");
  maps.maps.data = {5, 5, 5, 5};
  EXPECT_EQ(predicted_box(maps, 0, 0.7).box, (BoundingBox{0, 0, 32, 32}));
  EXPECT_THROW(predicted_box(maps, 1, 0.5), InvalidInput);
}

TEST(PredictedBox, CenterGeometry) {
  Rng rng(4);
  ClasswiseMaps maps{Tensor3(1, 4, 4), MapGeometry{64, 4}};
  for (int trial = 0; trial < 20; ++trial) {
    for (double& v : maps.maps.data) v = rng.normal();
    const auto at = std::max_element(maps.maps.data.begin(), maps.maps.data.end()) - maps.maps.data.begin();
    const Detection d = predicted_box(maps, 0, 0.5);
    EXPECT_EQ(d.box.center_x(), static_cast<double>(at % 4) * 16 + 8);
    EXPECT_EQ(d.box.center_y(), static_cast<double>(at / 4) * 16 + 8);
  }
}

TEST(PointwiseAp, SingleHitAndSingleMiss) {
  const std::vector<std::vector<BoundingBox>> gt{{BoundingBox{10, 10, 20, 20}}};
  EXPECT_EQ(pointwise_ap({{centered(15, 15, 0.9)}}, gt), 1.0);
  EXPECT_EQ(pointwise_ap({{centered(40, 40, 0.9)}}, gt), 0.0);
}

TEST(PointwiseAp, EdgeCentersCountAsInside) {
  const std::vector<std::vector<BoundingBox>> gt{{BoundingBox{10, 10, 20, 20}}};
  EXPECT_EQ(pointwise_ap({{centered(30, 30, 0.5)}}, gt), 1.0);
  EXPECT_EQ(pointwise_ap({{centered(10, 10, 0.5)}}, gt), 1.0);
}

TEST(PointwiseAp, ThreeImageHandExample) {
  // Ranked: TP(0.9), FP(0.8), TP(0.6), FP(0.3); 3 GT boxes.
  // Recall/precision: 1/3@1, 1/3@1/2, 2/3@2/3, 2/3@1/2 -> AP = 1/3 + 1/3 * 2/3.
  const std::vector<std::vector<BoundingBox>> gt{
      {BoundingBox{0, 0, 10, 10}}, {BoundingBox{0, 0, 10, 10}, BoundingBox{20, 20, 10, 10}}, {}};
  const std::vector<std::vector<Detection>> dets{
      {centered(5, 5, 0.9)}, {centered(25, 25, 0.6), centered(50, 50, 0.8)}, {centered(5, 5, 0.3)}};
  EXPECT_DOUBLE_EQ(pointwise_ap(dets, gt), 1.0 / 3 + 2.0 / 9);
  EXPECT_DOUBLE_EQ(threshold_sweep_ap(dets, gt), 1.0 / 3 + 2.0 / 9);
}

TEST(PointwiseAp, DuplicateDetectionsMatchOnce) {
  const std::vector<std::vector<BoundingBox>> gt{{BoundingBox{0, 0, 10, 10}}};
  // Second detection on the same box is a false positive.
  EXPECT_DOUBLE_EQ(pointwise_ap({{centered(5, 5, 0.9), centered(6, 6, 0.8)}}, gt), 1.0);
  EXPECT_DOUBLE_EQ(pointwise_ap({{centered(5, 5, 0.8), centered(50, 50, 0.9)}}, gt), 0.5);
}

TEST(PointwiseAp, AgreesWithThresholdSweepOracle) {
  Rng rng(5);
  int compared = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int images = 1 + static_cast<int>(rng.below(5));
    std::vector<std::vector<BoundingBox>> gt(images);
    std::vector<std::vector<Detection>> dets(images);
    int budget = 20;
    for (int i = 0; i < images; ++i) {
      const int boxes = static_cast<int>(rng.below(3));
      for (int b = 0; b < boxes; ++b) {
        gt[i].push_back(BoundingBox{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(5, 25), rng.uniform(5, 25)});
      }
      const int n = std::min(budget, static_cast<int>(rng.below(6)));
      budget -= n;
      for (int k = 0; k < n; ++k) {
        const double conf = trial % 3 == 0 ? static_cast<double>(rng.below(4)) / 4 : rng.uniform();
        dets[i].push_back(centered(rng.uniform(0, 64), rng.uniform(0, 64), conf));
      }
    }
    std::size_t total = 0;
    for (const auto& g : gt) total += g.size();
    if (total == 0) {
      EXPECT_THROW(pointwise_ap(dets, gt), UndefinedMetric);
      continue;
    }
    ASSERT_NEAR(pointwise_ap(dets, gt), threshold_sweep_ap(dets, gt), 1e-12) << "trial " << trial;
    ++compared;
  }
  EXPECT_GT(compared, 300);
}

TEST(PointwiseAp, InvariantUnderMonotoneConfidenceTransform) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<BoundingBox>> gt(3);
    std::vector<std::vector<Detection>> dets(3);
    for (int i = 0; i < 3; ++i) {
      gt[i].push_back(BoundingBox{rng.uniform(0, 30), rng.uniform(0, 30), 20, 20});
      for (int k = 0; k < 3; ++k) {
        dets[i].push_back(centered(rng.uniform(0, 50), rng.uniform(0, 50), static_cast<double>(rng.below(8)) / 8));
      }
    }
    auto squashed = dets;
    for (auto& list : squashed) {
      for (auto& d : list) d.confidence = d.confidence * d.confidence * d.confidence;
    }
    EXPECT_EQ(pointwise_ap(dets, gt), pointwise_ap(squashed, gt));
  }
}

TEST(PointwiseAp, Errors) {
  EXPECT_THROW(pointwise_ap({{}}, {{}}), UndefinedMetric);
  const std::vector<std::vector<BoundingBox>> gt{{BoundingBox{0, 0, 10, 10}}};
  EXPECT_THROW(pointwise_ap({{centered(5, 5, 1.5)}}, gt), InvalidInput);
  EXPECT_THROW(pointwise_ap({}, gt), InvalidInput);
}

TEST(AnnotationMask, PixelCenterCoverage) {
  const std::vector<BoundingBox> boxes{BoundingBox{10, 10, 20, 20}};
  const AnnotationMask m = annotation_mask(boxes, 64);
  EXPECT_EQ(m.positives(), 400);
  EXPECT_EQ(m.values(10, 10), 1.0);
  EXPECT_EQ(m.values(29, 29), 1.0);
  EXPECT_EQ(m.values(30, 30), 0.0);
  const std::vector<BoundingBox> sliver{BoundingBox{0.6, 0, 1, 1}};
  const AnnotationMask s = annotation_mask(sliver, 4);
  EXPECT_EQ(s.positives(), 1);
  EXPECT_EQ(s.values(0, 1), 1.0);
}

TEST(AnnotationMask, UnionOfBoxes) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<BoundingBox> boxes;
    for (int b = 0; b < 3; ++b) boxes.push_back(BoundingBox{rng.uniform(0, 12), rng.uniform(0, 12), rng.uniform(1, 6), rng.uniform(1, 6)});
    const AnnotationMask m = annotation_mask(boxes, 16);
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) {
        const bool inside = std::any_of(boxes.begin(), boxes.end(), [&](const BoundingBox& b) {
          return b.covers_pixel(r, c);
        });
        EXPECT_EQ(m.values(r, c), inside ? 1.0 : 0.0);
      }
    }
  }
}

TEST(BoxesToMap, HighestCoveringScoreWins) {
  const std::vector<Detection> dets{{BoundingBox{0, 0, 4, 4}, 0.3, {}}, {BoundingBox{2, 2, 4, 4}, 0.8, {}}};
  const Grid raw = boxes_to_raw_map(dets, 8);
  EXPECT_EQ(raw(0, 0), 0.3);
  EXPECT_EQ(raw(3, 3), 0.8);
  EXPECT_EQ(raw(7, 7), 0.0);
  for (double v : boxes_to_map({}, 8).values.data) EXPECT_EQ(v, 0.5);
  const std::vector<Detection> whole{{BoundingBox{0, 0, 8, 8}, 0.6, {}}};
  for (double v : boxes_to_raw_map(whole, 8).data) EXPECT_EQ(v, 0.6);
}

TEST(LocalizationAuprc, WorkedExamples) {
  const std::vector<int> labels{1, 0, 0, 1, 0, 0};
  const AnnotationMask mask = mask_of(labels, 2, 3);
  EXPECT_EQ(localization_auprc(mask.values, mask), 1.0);
  EXPECT_DOUBLE_EQ(localization_auprc(Grid(2, 3, 0.4), mask), 2.0 / 6);
  const AnnotationMask full = mask_of(std::vector<int>(6, 1), 2, 3);
  Rng rng(8);
  EXPECT_EQ(localization_auprc(random_grid(rng, 2, 3), full), 1.0);
  EXPECT_THROW(localization_auprc(Grid(2, 3), mask_of(std::vector<int>(6, 0), 2, 3)), UndefinedMetric);
  EXPECT_THROW(localization_auprc(Grid(3, 2), mask), InvalidInput);
}

TEST(LocalizationAuprc, AgreesWithThresholdSweepOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = 1 + static_cast<int>(rng.below(6));
    const int cols = 1 + static_cast<int>(rng.below(6));
    std::vector<int> labels(rows * cols);
    std::vector<double> scores(rows * cols);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = static_cast<int>(rng.below(2));
      scores[i] = trial % 2 == 0 ? rng.uniform() : static_cast<double>(rng.below(4));
    }
    labels[0] = 1;
    Grid map(rows, cols);
    map.data = scores;
    ASSERT_NEAR(localization_auprc(map, mask_of(labels, rows, cols)), threshold_sweep_auprc(scores, labels), 1e-12);
  }
}

TEST(LocalizationAuprc, PerfectAndReversedRankingsBoundAllOrderings) {
  // Every strict ranking of n <= 12 pixels is one placement of the positives
  // among n rank slots; enumerate them all.
  for (int n = 2; n <= 12; ++n) {
    for (int p = 1; p < n; ++p) {
      std::vector<int> ranked(n, 0);
      std::fill(ranked.begin(), ranked.begin() + p, 1);
      double lo = 2.0;
      double hi = -1.0;
      std::vector<double> descending(n);
      for (int i = 0; i < n; ++i) descending[i] = n - i;
      do {
        const double ap = threshold_sweep_auprc(descending, ranked);
        lo = std::min(lo, ap);
        hi = std::max(hi, ap);
      } while (std::prev_permutation(ranked.begin(), ranked.end()));
      std::vector<int> labels(n, 0);
      for (int i = 0; i < p; ++i) labels[(i * 7) % n] = 1;
      if (std::accumulate(labels.begin(), labels.end(), 0) != p) continue;  // collision
      const AnnotationMask mask = mask_of(labels, 1, n);
      // Strict reversal: every negative above every positive, no ties.
      Grid reversed = mask.values;
      for (std::size_t i = 0; i < reversed.size(); ++i) reversed.data[i] = (1.0 - reversed.data[i]) * 100 + i;
      EXPECT_EQ(localization_auprc(mask.values, mask), hi);
      EXPECT_NEAR(localization_auprc(reversed, mask), lo, 1e-12) << "n=" << n << " p=" << p;
    }
  }
}

TEST(LocalizationAuprc, InvariantUnderMonotoneTransform) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> labels(16);
    for (int& l : labels) l = static_cast<int>(rng.below(2));
    labels[3] = 1;
    Grid map(4, 4);
    for (double& v : map.data) v = static_cast<double>(rng.below(16)) / 16;
    Grid cubed = map;
    for (double& v : cubed.data) v = v * v * v + 2 * v;
    const AnnotationMask mask = mask_of(labels, 4, 4);
    EXPECT_EQ(localization_auprc(map, mask), localization_auprc(cubed, mask));
  }
}

TEST(LocalizationUtility, MeanOverAnnotatedImages) {
  const std::vector<AnnotatedSample> samples{
      sample("a", 1, {BoundingBox{0, 0, 4, 8}}), sample("b", 1, {BoundingBox{0, 0, 8, 8}}), sample("n", 0, {})};
  Grid perfect(8, 8);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 4; ++c) perfect(r, c) = 1.0;
  }
  const std::vector<SaliencyMap> maps{normalize_map(perfect), normalize_map(Grid(8, 8)), normalize_map(Grid(8, 8))};
  const MetricReport r = localization_utility(maps, samples);
  EXPECT_EQ(r.value, 1.0);
  ASSERT_EQ(r.per_image.size(), 2u);
  EXPECT_EQ(r.excluded, std::vector<std::string>{"n"});

  Grid half(8, 8);
  for (int c = 0; c < 8; ++c) half(0, c) = 1.0;
  const std::vector<AnnotatedSample> two{sample("a", 1, {BoundingBox{0, 0, 4, 8}}), sample("c", 1, {BoundingBox{0, 0, 8, 1}})};
  const std::vector<SaliencyMap> m2{normalize_map(Grid(8, 8)), normalize_map(half)};
  const MetricReport r2 = localization_utility(m2, two);
  EXPECT_DOUBLE_EQ(r2.value, 0.75);  // 0.5 (constant map, half positive) and 1.0
  double sum = 0.0;
  for (const auto& p : r2.per_image) sum += p.value;
  EXPECT_EQ(sum / static_cast<double>(r2.per_image.size()), r2.value);
}

TEST(LocalizationUtility, NoAnnotatedImagesIsUndefined) {
  const std::vector<AnnotatedSample> samples{sample("n", 0, {})};
  const std::vector<SaliencyMap> maps{normalize_map(Grid(8, 8))};
  EXPECT_THROW(localization_utility(maps, samples), UndefinedMetric);
}

TEST(TriageFailures, Examples) {
  const std::vector<AnnotatedSample> samples{
      sample("neg", 0, {}), sample("hit", 1, {BoundingBox{0, 0, 4, 4}}), sample("miss", 1, {BoundingBox{0, 0, 4, 4}}),
      sample("low", 1, {BoundingBox{0, 0, 4, 4}})};
  const std::vector<double> probs{0.9, 0.9, 0.9, 0.1};
  const std::vector<Detection> dets{centered(2, 2, 0.9, 2), centered(2, 2, 0.9, 2), centered(7, 7, 0.9, 2),
                                    centered(7, 7, 0.1, 2)};
  const TriageResult t = triage_failures(probs, dets, samples, 0.5);
  EXPECT_EQ(t.false_positives, std::vector<std::string>{"neg"});
  EXPECT_EQ(t.false_negatives, std::vector<std::string>{"miss"});
}

TEST(ImageScores, MaxConfidencePerImage) {
  std::vector<Detection> dets{{BoundingBox{0, 0, 1, 1}, 0.2, "a"}, {BoundingBox{0, 0, 1, 1}, 0.7, "a"},
                              {BoundingBox{0, 0, 1, 1}, 0.4, "b"}};
  const std::vector<std::string> ids{"a", "b", "c"};
  EXPECT_EQ(image_scores_from_detections(dets, ids), (std::vector<double>{0.7, 0.4, 0.0}));
}

TEST(DetectionsCsv, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "wsloc_metrics_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "dets.csv").string();
  const std::vector<Detection> dets{{BoundingBox{1.5, 2.25, 10, 12.125}, 0.875, "p1"},
                                    {BoundingBox{0, 0, 3, 3}, 0.1, "p2"}};
  write_detections_csv(path, dets);
  const auto back = read_detections_csv(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].box, dets[i].box);
    EXPECT_EQ(back[i].confidence, dets[i].confidence);
    EXPECT_EQ(back[i].image_id, dets[i].image_id);
  }
  write_file(path, std::string("image_id,confidence,x,y,width,height\np1,0.5,1,1,2,2\np2,1.5,1,1,2,2\n"));
  try {
    read_detections_csv(path);
    FAIL() << "accepted confidence 1.5";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  write_file(path, std::string("id,conf\n"));
  EXPECT_THROW(read_detections_csv(path), ParseError);
  EXPECT_THROW(read_detections_csv((dir / "absent.csv").string()), InvalidInput);
  std::filesystem::remove_all(dir);
}

TEST(ValidateBox, Rules) {
  EXPECT_NO_THROW(validate_box(BoundingBox{0, 0, 1, 1}, 8));
  EXPECT_THROW(validate_box(BoundingBox{0, 0, 0, 1}, 8), InvalidInput);
  EXPECT_THROW(validate_box(BoundingBox{9, 9, 1, 1}, 8), InvalidInput);
  EXPECT_THROW(validate_box(BoundingBox{0, std::nan(""), 1, 1}, 8), InvalidInput);
}
