#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "signspot/interval.hpp"
#include "signspot/objective.hpp"

namespace signspot {

// Frame-accurate annotations of one continuous video.
struct AnnotationTrack {
  std::string video_id;
  double fps = 25.0;
  int64_t num_frames = 0;
  std::vector<SignInterval> intervals;

  // Bounds and ordering checks; class range checked when num_classes >= 0.
  void validate(int num_classes = -1) const;
};

struct SamplerConfig {
  double rsp = 0.1;     // probability of a uniformly placed window
  int64_t window = 32;  // frames
  bool rebalance = true;
};

struct SampledWindow {
  std::string video_id;
  int64_t start = 0;
  WindowAnnotation annotation;
};

// Per-class pick probabilities under rebalancing: uniform 1/C for every
// class; instances are uniform within a class. Throws when a class in
// [0, num_classes) has no instance.
std::vector<double> rebalance_weights(const std::vector<AnnotationTrack>& tracks, int num_classes);

// Draws training windows: with probability rsp the window start is
// uniform over a uniformly chosen video; otherwise a target instance is
// drawn (class-uniform when rebalancing) and the window is placed
// uniformly among positions containing it, clipped to video bounds.
// The returned annotation lists every ground-truth interval intersecting
// the window, clipped to window coordinates.
class WindowSampler {
 public:
  WindowSampler(std::vector<AnnotationTrack> tracks, SamplerConfig cfg, int num_classes);

  // The generator is owned by the caller; samplers with distinct
  // generators may run concurrently.
  SampledWindow sample(std::mt19937_64& rng) const;

  const std::vector<AnnotationTrack>& tracks() const { return tracks_; }
  const SamplerConfig& config() const { return cfg_; }

 private:
  struct InstanceRef {
    size_t track;
    size_t interval;
  };

  SampledWindow window_at(size_t track_index, int64_t start) const;

  std::vector<AnnotationTrack> tracks_;
  SamplerConfig cfg_;
  int num_classes_;
  std::vector<InstanceRef> instances_;
  std::vector<std::vector<InstanceRef>> by_class_;
};

// Annotation ingestion. CSV header: video_id,class_id,start_frame,end_frame
// (or start_time,end_time in seconds, converted via the sidecar fps with
// round half up). The sidecar maps video ids to {fps, num_frames}.
std::vector<AnnotationTrack> load_annotations_csv(const std::filesystem::path& csv_path,
                                                  const std::filesystem::path& sidecar_json);
// JSON-lines variant: objects with class_id are intervals, objects
// without are per-video metadata {video_id, fps, num_frames}.
std::vector<AnnotationTrack> load_annotations_jsonl(const std::filesystem::path& path);

// Interval CSV shared by ground truth and predictions; the score column
// is written for predictions and ignored on read.
std::vector<SignInterval> load_intervals_csv(const std::filesystem::path& path);
void save_intervals_csv(const std::filesystem::path& path,
                        const std::vector<SignInterval>& intervals, bool with_score = false);

void save_annotation_sidecar(const std::filesystem::path& path,
                             const std::vector<AnnotationTrack>& tracks);

}  // namespace signspot
