#include "signspot/objective.hpp"

#include <algorithm>

namespace signspot {

void WindowAnnotation::validate(int num_classes) const {
  check_contract(length > 0, "WindowAnnotation: length must be positive");
  for (const auto& iv : intervals) {
    check_contract(iv.start >= 0 && iv.start < iv.end && iv.end <= length,
                   "WindowAnnotation: interval [" + std::to_string(iv.start) + "," +
                       std::to_string(iv.end) + ") outside window of length " +
                       std::to_string(length));
    check_contract(iv.class_id >= 0 && iv.class_id < num_classes,
                   "WindowAnnotation: class id " + std::to_string(iv.class_id) +
                       " out of range [0," + std::to_string(num_classes) + ")");
  }
}

LevelTargets assign_targets(const WindowAnnotation& annotation, const HeadConfig& cfg) {
  check_contract(annotation.length == cfg.pyramid.input_t,
                 "assign_targets: window length " + std::to_string(annotation.length) +
                     " does not match the model window " + std::to_string(cfg.pyramid.input_t));
  annotation.validate(cfg.num_classes);

  LevelTargets targets;
  for (Level level : kAllLevels) {
    const int64_t cells = cfg.level_t(level);
    const int64_t stride = cfg.level_stride(level);
    std::vector<int>& out = targets.at(level);
    out.assign(static_cast<size_t>(cells), cfg.background_index());
    for (int64_t k = 0; k < cells; ++k) {
      const int64_t cell_start = k * stride;
      const int64_t cell_end = cell_start + stride;
      int64_t best_overlap = 0;
      int64_t best_start = 0;
      for (const auto& iv : annotation.intervals) {
        const int64_t overlap = std::min(iv.end, cell_end) - std::max(iv.start, cell_start);
        if (overlap <= 0) continue;
        if (overlap > best_overlap || (overlap == best_overlap && iv.start < best_start)) {
          best_overlap = overlap;
          best_start = iv.start;
          out[static_cast<size_t>(k)] = iv.class_id;
        }
      }
    }
  }
  return targets;
}

void BatchTargets::append(const LevelTargets& targets) {
  for (size_t l = 0; l < per_level.size(); ++l) {
    per_level[l].insert(per_level[l].end(), targets.per_level[l].begin(),
                        targets.per_level[l].end());
  }
}

template <typename T>
Tensor<T> multi_level_loss(const LevelLogits<T>& logits, const BatchTargets& targets,
                           const std::vector<double>& sample_weights) {
  Tensor<T> total;
  for (Level level : kAllLevels) {
    Tensor<T> ce = cross_entropy(logits.at(level), targets.at(level), sample_weights);
    total = total.defined() ? add(total, ce) : ce;
  }
  return scale(total, 1.0 / static_cast<double>(kAllLevels.size()));
}

double sample_mixup_lambda(double alpha, std::mt19937_64& rng) {
  check_contract(alpha > 0.0, "mixup: alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  const double denom = a + b;
  return denom > 0.0 ? a / denom : 0.5;
}

template <typename T>
Tensor<T> mix_frames(const Tensor<T>& a, const Tensor<T>& b, double lambda) {
  check_contract(a.shape() == b.shape(), "mix_frames: shape mismatch");
  std::vector<T> mixed(static_cast<size_t>(a.numel()));
  const T* av = a.data().data();
  const T* bv = b.data().data();
  for (int64_t i = 0; i < a.numel(); ++i) {
    mixed[static_cast<size_t>(i)] = static_cast<T>(
        lambda * static_cast<double>(av[i]) + (1.0 - lambda) * static_cast<double>(bv[i]));
  }
  return Tensor<T>(a.shape(), std::move(mixed));
}

template <typename T>
MixupPair<T> mixup_pair(const Tensor<T>& frames_a, const WindowAnnotation& ann_a,
                        const Tensor<T>& frames_b, const WindowAnnotation& ann_b,
                        const HeadConfig& cfg, double alpha, std::mt19937_64& rng) {
  MixupPair<T> out;
  out.lambda = sample_mixup_lambda(alpha, rng);
  out.frames = mix_frames(frames_a, frames_b, out.lambda);
  out.targets_a = assign_targets(ann_a, cfg);
  out.targets_b = assign_targets(ann_b, cfg);
  return out;
}

template Tensor<float> multi_level_loss<float>(const LevelLogits<float>&, const BatchTargets&,
                                               const std::vector<double>&);
template Tensor<double> multi_level_loss<double>(const LevelLogits<double>&, const BatchTargets&,
                                                 const std::vector<double>&);
template Tensor<float> mix_frames<float>(const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> mix_frames<double>(const Tensor<double>&, const Tensor<double>&, double);
template MixupPair<float> mixup_pair<float>(const Tensor<float>&, const WindowAnnotation&,
                                            const Tensor<float>&, const WindowAnnotation&,
                                            const HeadConfig&, double, std::mt19937_64&);
template MixupPair<double> mixup_pair<double>(const Tensor<double>&, const WindowAnnotation&,
                                              const Tensor<double>&, const WindowAnnotation&,
                                              const HeadConfig&, double, std::mt19937_64&);

}  // namespace signspot
