#pragma once

#include <random>
#include <vector>

#include "signspot/head.hpp"

namespace signspot {

// One annotated interval clipped to window-local frame coordinates.
struct ClippedInterval {
  int class_id = 0;
  int64_t start = 0;  // inclusive, in [0, window)
  int64_t end = 0;    // exclusive
};

struct WindowAnnotation {
  std::string video_id;
  int64_t window_start = 0;  // frame index in the source video
  int64_t length = 32;
  std::vector<ClippedInterval> intervals;

  void validate(int num_classes) const;
};

// Per-level integer targets; value num_classes is the background class.
struct LevelTargets {
  std::array<std::vector<int>, 5> per_level;

  std::vector<int>& at(Level level) { return per_level[static_cast<size_t>(level)]; }
  const std::vector<int>& at(Level level) const { return per_level[static_cast<size_t>(level)]; }
};

// A prediction cell at stride s covers frames [k*s, (k+1)*s). The cell
// target is the class of the overlapping interval (largest overlap wins,
// ties broken by earlier interval start); no overlap means background.
LevelTargets assign_targets(const WindowAnnotation& annotation, const HeadConfig& cfg);

// Targets for a batch: per level, N * T_level indices in batch order.
struct BatchTargets {
  std::array<std::vector<int>, 5> per_level;

  void append(const LevelTargets& targets);
  std::vector<int>& at(Level level) { return per_level[static_cast<size_t>(level)]; }
  const std::vector<int>& at(Level level) const { return per_level[static_cast<size_t>(level)]; }
};

// Unweighted mean of the five per-level cross entropies. Optional
// per-sample weights pass through to each level's cross entropy.
template <typename T>
Tensor<T> multi_level_loss(const LevelLogits<T>& logits, const BatchTargets& targets,
                           const std::vector<double>& sample_weights = {});

// Beta(alpha, alpha) draw via two gamma variates.
double sample_mixup_lambda(double alpha, std::mt19937_64& rng);

// lambda * a + (1 - lambda) * b on raw frame data; result is a fresh leaf.
template <typename T>
Tensor<T> mix_frames(const Tensor<T>& a, const Tensor<T>& b, double lambda);

// Frame-level mixup of two annotated windows. The loss contract is
// lambda * CE(targets_a) + (1 - lambda) * CE(targets_b) per level.
template <typename T>
struct MixupPair {
  Tensor<T> frames;
  LevelTargets targets_a, targets_b;
  double lambda = 1.0;
};

template <typename T>
MixupPair<T> mixup_pair(const Tensor<T>& frames_a, const WindowAnnotation& ann_a,
                        const Tensor<T>& frames_b, const WindowAnnotation& ann_b,
                        const HeadConfig& cfg, double alpha, std::mt19937_64& rng);

extern template Tensor<float> multi_level_loss<float>(const LevelLogits<float>&,
                                                      const BatchTargets&,
                                                      const std::vector<double>&);
extern template Tensor<double> multi_level_loss<double>(const LevelLogits<double>&,
                                                        const BatchTargets&,
                                                        const std::vector<double>&);

}  // namespace signspot
