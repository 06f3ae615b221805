#pragma once

#include <array>
#include <filesystem>
#include <span>

#include "signspot/interval.hpp"
#include "signspot/model.hpp"
#include "signspot/video.hpp"

namespace signspot {

// Per-frame class probabilities, one row per frame over C+1 channels
// (background last). Rows stay on the probability simplex.
struct FrameProbs {
  int64_t num_frames = 0;
  int num_channels = 0;
  std::vector<double> values;  // [frame][channel]

  FrameProbs() = default;
  FrameProbs(int64_t frames, int channels)
      : num_frames(frames),
        num_channels(channels),
        values(static_cast<size_t>(frames * channels), 0.0) {}

  double at(int64_t frame, int channel) const {
    return values[static_cast<size_t>(frame * num_channels + channel)];
  }
  std::span<double> row(int64_t frame) {
    return std::span<double>(values).subspan(static_cast<size_t>(frame * num_channels),
                                             static_cast<size_t>(num_channels));
  }
  std::span<const double> row(int64_t frame) const {
    return std::span<const double>(values).subspan(static_cast<size_t>(frame * num_channels),
                                                   static_cast<size_t>(num_channels));
  }
};

// Softmax per level, nearest temporal interpolation to the window
// length, then the arithmetic mean over the chosen levels — in that
// order. A single level reproduces that level's interpolated
// probabilities.
template <typename T>
FrameProbs fuse_levels(const LevelLogits<T>& logits, std::span<const Level> levels,
                       int64_t window_len, int64_t batch_index = 0);

// Maximal runs of identical non-background argmax labels become
// intervals; argmax ties resolve to the lowest class index. Runs shorter
// than min_len are dropped.
std::vector<SignInterval> greedy_intervals(const FrameProbs& probs, const std::string& video_id,
                                           int64_t min_len = 1);

// Per-level full-video probabilities from sliding the model over the
// video: every frame's row is the mean over all windows covering it.
// Videos shorter than the window are padded by repeating the last frame
// and the padded predictions are discarded.
template <typename T>
struct SlideResult {
  std::array<FrameProbs, 5> per_level;

  // Mean across the chosen levels.
  FrameProbs fused(std::span<const Level> levels) const;
};

template <typename T>
SlideResult<T> slide_video(SpottingModel<T>& model, const VideoFrames& video, int64_t stride = 1);

// Elementwise mean over same-shaped probability matrices (model
// ensembling).
FrameProbs ensemble(const std::vector<FrameProbs>& members);

// CSV export: frame index followed by the C+1 probability columns.
void write_frame_probs_csv(const std::filesystem::path& path, const FrameProbs& probs);

extern template FrameProbs fuse_levels<float>(const LevelLogits<float>&, std::span<const Level>,
                                              int64_t, int64_t);
extern template FrameProbs fuse_levels<double>(const LevelLogits<double>&, std::span<const Level>,
                                               int64_t, int64_t);
extern template struct SlideResult<float>;
extern template struct SlideResult<double>;
extern template SlideResult<float> slide_video<float>(SpottingModel<float>&, const VideoFrames&,
                                                      int64_t);
extern template SlideResult<double> slide_video<double>(SpottingModel<double>&, const VideoFrames&,
                                                        int64_t);

}  // namespace signspot
