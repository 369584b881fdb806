#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "wsloc/metrics.hpp"

namespace wsloc::testing {

inline double concordance_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

struct Flat {
  double confidence;
  std::size_t image;
  std::size_t index;
};

// Recomputes precision and recall from scratch at every distinct confidence
// threshold, then integrates the monotone envelope.
inline double threshold_sweep_ap(const std::vector<std::vector<Detection>>& dets,
                          const std::vector<std::vector<BoundingBox>>& gt) {
  std::vector<Flat> all;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t j = 0; j < dets[i].size(); ++j) all.push_back({dets[i][j].confidence, i, j});
  }
  std::sort(all.begin(), all.end(), [](const Flat& a, const Flat& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });
  std::size_t total_gt = 0;
  for (const auto& g : gt) total_gt += g.size();
  std::vector<double> thresholds;
  for (const auto& f : all) {
    if (thresholds.empty() || thresholds.back() != f.confidence) thresholds.push_back(f.confidence);
  }
  std::vector<double> precision;
  std::vector<double> recall;
  for (double t : thresholds) {
    std::vector<std::vector<char>> used(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) used[i].assign(gt[i].size(), 0);
    int tp = 0;
    int n = 0;
    for (const auto& f : all) {
      if (f.confidence < t) continue;
      ++n;
      const Detection& d = dets[f.image][f.index];
      for (std::size_t g = 0; g < gt[f.image].size(); ++g) {
        if (!used[f.image][g] && gt[f.image][g].contains(d.box.center_x(), d.box.center_y())) {
          used[f.image][g] = 1;
          ++tp;
          break;
        }
      }
    }
    precision.push_back(static_cast<double>(tp) / n);
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double envelope = *std::max_element(precision.begin() + static_cast<long>(i), precision.end());
    ap += (recall[i] - prev) * envelope;
    prev = recall[i];
  }
  return ap;
}

// Step AUPRC with one threshold per distinct score, recomputed from scratch.
inline double threshold_sweep_auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const int positives = std::accumulate(labels.begin(), labels.end(), 0);
  double ap = 0.0;
  double prev = 0.0;
  for (double t : thresholds) {
    int tp = 0;
    int n = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < t) continue;
      ++n;
      tp += labels[i];
    }
    const double r = static_cast<double>(tp) / positives;
    ap += (r - prev) * static_cast<double>(tp) / n;
    prev = r;
  }
  return ap;
}

}  // namespace wsloc::testing
