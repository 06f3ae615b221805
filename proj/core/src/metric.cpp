#include "signspot/metric.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "signspot/error.hpp"

namespace signspot {

std::vector<double> default_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 13; ++i) out.push_back(0.20 + 0.05 * i);
  return out;
}

void MetricConfig::validate() const {
  check_contract(!thresholds.empty(), "MetricConfig: no thresholds");
  for (size_t i = 0; i < thresholds.size(); ++i) {
    check_contract(thresholds[i] > 0.0 && thresholds[i] <= 1.0,
                   "MetricConfig: thresholds must lie in (0,1]");
    check_contract(i == 0 || thresholds[i] > thresholds[i - 1],
                   "MetricConfig: thresholds must be strictly increasing");
  }
}

double interval_iou(const SignInterval& a, const SignInterval& b) {
  const int64_t inter = std::min(a.end_frame, b.end_frame) - std::max(a.start_frame, b.start_frame);
  if (inter <= 0) return 0.0;
  const int64_t uni = a.length() + b.length() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

struct Candidate {
  double iou;
  int64_t gt_start, pred_start;
  size_t gt_index, pred_index;
};

// Greedy descending-IoU matching of one (video, class) group.
void match_group(const std::vector<const SignInterval*>& preds,
                 const std::vector<const SignInterval*>& gts, double threshold, int64_t& tp,
                 int64_t& fp, int64_t& fn) {
  std::vector<Candidate> candidates;
  for (size_t gi = 0; gi < gts.size(); ++gi) {
    for (size_t pi = 0; pi < preds.size(); ++pi) {
      const double iou = interval_iou(*preds[pi], *gts[gi]);
      if (iou >= threshold) {
        candidates.push_back(Candidate{iou, gts[gi]->start_frame, preds[pi]->start_frame, gi, pi});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.gt_start != b.gt_start) return a.gt_start < b.gt_start;
    if (a.pred_start != b.pred_start) return a.pred_start < b.pred_start;
    if (a.gt_index != b.gt_index) return a.gt_index < b.gt_index;
    return a.pred_index < b.pred_index;
  });

  std::vector<bool> gt_used(gts.size(), false);
  std::vector<bool> pred_used(preds.size(), false);
  int64_t matches = 0;
  for (const auto& c : candidates) {
    if (gt_used[c.gt_index] || pred_used[c.pred_index]) continue;
    gt_used[c.gt_index] = true;
    pred_used[c.pred_index] = true;
    ++matches;
  }
  tp += matches;
  fp += static_cast<int64_t>(preds.size()) - matches;
  fn += static_cast<int64_t>(gts.size()) - matches;
}

using GroupKey = std::pair<std::string, int>;

std::map<GroupKey, std::pair<std::vector<const SignInterval*>, std::vector<const SignInterval*>>>
group_by_video_class(const std::vector<SignInterval>& preds, const std::vector<SignInterval>& gts) {
  std::map<GroupKey, std::pair<std::vector<const SignInterval*>, std::vector<const SignInterval*>>>
      groups;
  for (const auto& p : preds) groups[{p.video_id, p.class_id}].first.push_back(&p);
  for (const auto& g : gts) groups[{g.video_id, g.class_id}].second.push_back(&g);
  return groups;
}

}  // namespace

std::tuple<int64_t, int64_t, int64_t> match_instances(const std::vector<SignInterval>& preds,
                                                      const std::vector<SignInterval>& gts,
                                                      double threshold) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [key, group] : group_by_video_class(preds, gts)) {
    match_group(group.first, group.second, threshold, tp, fp, fn);
  }
  return {tp, fp, fn};
}

SpottingReport evaluate(const std::vector<SignInterval>& preds,
                        const std::vector<SignInterval>& gts, const MetricConfig& cfg) {
  cfg.validate();
  SpottingReport report;
  const auto groups = group_by_video_class(preds, gts);
  for (double threshold : cfg.thresholds) {
    ThresholdCounts counts;
    counts.threshold = threshold;
    for (const auto& [key, group] : groups) {
      match_group(group.first, group.second, threshold, counts.tp, counts.fp, counts.fn);
    }
    report.tp += counts.tp;
    report.fp += counts.fp;
    report.fn += counts.fn;
    report.per_threshold.push_back(counts);
  }
  report.precision = (report.tp + report.fp) > 0
                         ? static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fp)
                         : 0.0;
  report.recall = (report.tp + report.fn) > 0
                      ? static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fn)
                      : 0.0;
  report.f1 = (report.precision + report.recall) > 0.0
                  ? 2.0 * report.precision * report.recall / (report.precision + report.recall)
                  : 0.0;
  return report;
}

void write_report_json(const std::filesystem::path& path, const SpottingReport& report) {
  nlohmann::json j;
  j["per_threshold"] = nlohmann::json::array();
  for (const auto& c : report.per_threshold) {
    j["per_threshold"].push_back(
        {{"threshold", c.threshold}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
  }
  j["tp"] = report.tp;
  j["fp"] = report.fp;
  j["fn"] = report.fn;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

}  // namespace signspot
