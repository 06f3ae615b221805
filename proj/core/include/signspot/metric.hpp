#pragma once

#include <filesystem>
#include <tuple>
#include <vector>

#include "signspot/interval.hpp"

namespace signspot {

// The 13 IoU thresholds 0.20, 0.25, ..., 0.80.
std::vector<double> default_iou_thresholds();

struct MetricConfig {
  std::vector<double> thresholds = default_iou_thresholds();

  void validate() const;  // strictly increasing, all in (0,1]
};

struct ThresholdCounts {
  double threshold = 0.0;
  int64_t tp = 0, fp = 0, fn = 0;
};

struct SpottingReport {
  std::vector<ThresholdCounts> per_threshold;
  int64_t tp = 0, fp = 0, fn = 0;  // sums over thresholds
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// |a∩b| / |a∪b| on half-open frame intervals; 0 when disjoint.
double interval_iou(const SignInterval& a, const SignInterval& b);

// One-to-one matching per (video, class): candidate pairs with
// IoU >= threshold are taken greedily in descending IoU order, ties by
// earlier ground-truth start then earlier prediction start. Returns
// (tp, fp, fn).
std::tuple<int64_t, int64_t, int64_t> match_instances(const std::vector<SignInterval>& preds,
                                                      const std::vector<SignInterval>& gts,
                                                      double threshold);

// Sums match_instances over every threshold and derives precision,
// recall and F1 from the summed counts.
SpottingReport evaluate(const std::vector<SignInterval>& preds,
                        const std::vector<SignInterval>& gts,
                        const MetricConfig& cfg = MetricConfig{});

void write_report_json(const std::filesystem::path& path, const SpottingReport& report);

}  // namespace signspot
