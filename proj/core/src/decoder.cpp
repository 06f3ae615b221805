#include "signspot/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "signspot/parallel.hpp"

namespace signspot {

namespace {

// Renormalizes a row only when it drifted measurably off the simplex;
// means of simplex points stay on it up to rounding.
void renormalize_if_needed(std::span<double> row) {
  double total = 0.0;
  for (double v : row) total += v;
  if (std::abs(total - 1.0) > 1e-9 && total > 0.0) {
    for (double& v : row) v /= total;
  }
}

}  // namespace

template <typename T>
FrameProbs fuse_levels(const LevelLogits<T>& logits, std::span<const Level> levels,
                       int64_t window_len, int64_t batch_index) {
  check_contract(!levels.empty(), "fuse_levels: need at least one level");
  NoGradGuard no_grad;

  const Tensor<T>& first = logits.at(levels.front());
  const int channels = static_cast<int>(first.dim(1));
  FrameProbs out(window_len, channels);

  for (Level level : levels) {
    const Tensor<T>& raw = logits.at(level);
    check_contract(raw.ndim() == 3, "fuse_levels: level logits must be [N,K,T]");
    check_contract(batch_index >= 0 && batch_index < raw.dim(0), "fuse_levels: batch index out of range");
    check_contract(raw.dim(1) == channels, "fuse_levels: channel count differs between levels");
    const int64_t level_t = raw.dim(2);
    Tensor<T> probs = softmax_channels(raw);
    const T* p = probs.data().data() + batch_index * channels * level_t;
    for (int64_t f = 0; f < window_len; ++f) {
      const int64_t src = f * level_t / window_len;  // nearest (floor) step
      auto row = out.row(f);
      for (int c = 0; c < channels; ++c) {
        row[static_cast<size_t>(c)] += static_cast<double>(p[c * level_t + src]);
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(levels.size());
  for (double& v : out.values) v *= inv;
  for (int64_t f = 0; f < window_len; ++f) renormalize_if_needed(out.row(f));
  return out;
}

std::vector<SignInterval> greedy_intervals(const FrameProbs& probs, const std::string& video_id,
                                           int64_t min_len) {
  check_contract(min_len >= 1, "greedy_intervals: min_len must be >= 1");
  const int background = probs.num_channels - 1;

  std::vector<int> labels(static_cast<size_t>(probs.num_frames));
  for (int64_t f = 0; f < probs.num_frames; ++f) {
    auto row = probs.row(f);
    int best = 0;
    for (int c = 1; c < probs.num_channels; ++c) {
      if (row[static_cast<size_t>(c)] > row[static_cast<size_t>(best)]) best = c;  // ties keep lowest index
    }
    labels[static_cast<size_t>(f)] = best;
  }

  std::vector<SignInterval> out;
  int64_t run_start = 0;
  for (int64_t f = 1; f <= probs.num_frames; ++f) {
    if (f == probs.num_frames || labels[static_cast<size_t>(f)] != labels[static_cast<size_t>(run_start)]) {
      const int label = labels[static_cast<size_t>(run_start)];
      if (label != background && f - run_start >= min_len) {
        SignInterval iv;
        iv.video_id = video_id;
        iv.class_id = label;
        iv.start_frame = run_start;
        iv.end_frame = f;
        double mean_p = 0.0;
        for (int64_t g = run_start; g < f; ++g) mean_p += probs.at(g, label);
        iv.score = mean_p / static_cast<double>(f - run_start);
        out.push_back(std::move(iv));
      }
      run_start = f;
    }
  }
  return out;
}

template <typename T>
FrameProbs SlideResult<T>::fused(std::span<const Level> levels) const {
  check_contract(!levels.empty(), "SlideResult: need at least one level");
  const FrameProbs& first = per_level[static_cast<size_t>(levels.front())];
  FrameProbs out(first.num_frames, first.num_channels);
  for (Level level : levels) {
    const FrameProbs& p = per_level[static_cast<size_t>(level)];
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += p.values[i];
  }
  const double inv = 1.0 / static_cast<double>(levels.size());
  for (double& v : out.values) v *= inv;
  for (int64_t f = 0; f < out.num_frames; ++f) renormalize_if_needed(out.row(f));
  return out;
}

template <typename T>
SlideResult<T> slide_video(SpottingModel<T>& model, const VideoFrames& video, int64_t stride) {
  check_contract(stride >= 1, "slide_video: stride must be >= 1");
  const PyramidSpec& spec = model.config().head.pyramid;
  check_contract(video.height == spec.input_h && video.width == spec.input_w,
                 "slide_video: video geometry does not match the model window");
  const int64_t window = spec.input_t;
  const int64_t length = video.num_frames;
  const int channels = static_cast<int>(model.config().head.logit_channels());

  // Window starts: every `stride` frames plus the final full window so
  // the tail is always covered; short videos get one padded window.
  std::vector<int64_t> starts;
  const int64_t last = std::max<int64_t>(0, length - window);
  for (int64_t s = 0; s < last; s += stride) starts.push_back(s);
  starts.push_back(last);

  // Window evaluations are independent; the per-frame accumulation below
  // runs in start order, so results do not depend on the thread count.
  std::vector<std::array<FrameProbs, 5>> window_probs(starts.size());
  parallel_for(static_cast<int64_t>(starts.size()), [&](int64_t wi) {
    NoGradGuard no_grad;
    Tensor<T> frames(Shape{1, 3, window, spec.input_h, spec.input_w});
    copy_window(video, starts[static_cast<size_t>(wi)], window, frames.mutable_data());
    LevelLogits<T> logits = model.forward(frames, /*training=*/false);
    for (Level level : kAllLevels) {
      window_probs[static_cast<size_t>(wi)][static_cast<size_t>(level)] =
          fuse_levels(logits, std::span<const Level>(&level, 1), window);
    }
  });

  SlideResult<T> result;
  std::vector<int> cover(static_cast<size_t>(length), 0);
  for (Level level : kAllLevels) {
    result.per_level[static_cast<size_t>(level)] = FrameProbs(length, channels);
  }
  for (size_t wi = 0; wi < starts.size(); ++wi) {
    const int64_t s = starts[wi];
    const int64_t valid = std::min(window, length - s);  // padded frames discarded
    for (Level level : kAllLevels) {
      FrameProbs& acc = result.per_level[static_cast<size_t>(level)];
      const FrameProbs& wp = window_probs[wi][static_cast<size_t>(level)];
      for (int64_t f = 0; f < valid; ++f) {
        auto dst = acc.row(s + f);
        auto src = wp.row(f);
        for (int c = 0; c < channels; ++c) dst[static_cast<size_t>(c)] += src[static_cast<size_t>(c)];
      }
    }
    for (int64_t f = 0; f < valid; ++f) ++cover[static_cast<size_t>(s + f)];
  }
  for (Level level : kAllLevels) {
    FrameProbs& acc = result.per_level[static_cast<size_t>(level)];
    for (int64_t f = 0; f < length; ++f) {
      check_contract(cover[static_cast<size_t>(f)] > 0, "slide_video: frame left uncovered");
      auto row = acc.row(f);
      const double inv = 1.0 / cover[static_cast<size_t>(f)];
      for (double& v : row) v *= inv;
      renormalize_if_needed(row);
    }
  }
  return result;
}

FrameProbs ensemble(const std::vector<FrameProbs>& members) {
  check_contract(!members.empty(), "ensemble: no members");
  const FrameProbs& first = members.front();
  for (const auto& m : members) {
    check_contract(m.num_frames == first.num_frames && m.num_channels == first.num_channels,
                   "ensemble: member shape mismatch");
  }
  FrameProbs out(first.num_frames, first.num_channels);
  for (const auto& m : members) {
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : out.values) v *= inv;
  return out;
}

void write_frame_probs_csv(const std::filesystem::path& path, const FrameProbs& probs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "frame";
  for (int c = 0; c < probs.num_channels - 1; ++c) out << ",class_" << c;
  out << ",background\n";
  char buf[32];
  for (int64_t f = 0; f < probs.num_frames; ++f) {
    out << f;
    for (int c = 0; c < probs.num_channels; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", probs.at(f, c));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

template FrameProbs fuse_levels<float>(const LevelLogits<float>&, std::span<const Level>, int64_t,
                                       int64_t);
template FrameProbs fuse_levels<double>(const LevelLogits<double>&, std::span<const Level>,
                                        int64_t, int64_t);
template struct SlideResult<float>;
template struct SlideResult<double>;
template SlideResult<float> slide_video<float>(SpottingModel<float>&, const VideoFrames&, int64_t);
template SlideResult<double> slide_video<double>(SpottingModel<double>&, const VideoFrames&,
                                                 int64_t);

}  // namespace signspot
