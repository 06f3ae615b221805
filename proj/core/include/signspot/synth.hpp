#pragma once

#include <vector>

#include "signspot/sampler.hpp"
#include "signspot/video.hpp"

namespace signspot {

// Synthetic continuous signing videos: each vocabulary class renders a
// moving block with a class-specific direction and intensity
// oscillation; distractor segments use held-out parameter values between
// neighbouring classes. Background frames carry low-amplitude noise.
struct SynthConfig {
  int num_classes = 8;
  int64_t video_len = 600;   // frames
  int64_t height = 64;
  int64_t width = 64;
  int signs_per_video = 10;
  int64_t min_sign_len = 12;
  int64_t max_sign_len = 24;
  double distractor_rate = 0.2;  // fraction of motion segments outside the vocabulary
  double noise_level = 0.05;
  uint64_t seed = 0;
  double fps = 25.0;

  void validate() const;
};

struct SynthVideo {
  VideoFrames frames;
  AnnotationTrack track;  // sign segments only; distractors are unannotated
};

// Deterministic for a given (cfg.seed, video_index).
SynthVideo generate(const SynthConfig& cfg, int video_index = 0);

std::vector<SynthVideo> generate_dataset(const SynthConfig& cfg, int num_videos);

// Motion parameters of one vocabulary class (exposed so tests can verify
// pattern separability).
struct ClassMotion {
  double angle = 0.0;      // radians
  double speed = 0.0;      // pixels per frame
  double frequency = 0.0;  // intensity oscillation, radians per frame
};
ClassMotion class_motion(const SynthConfig& cfg, int class_id, bool distractor);

}  // namespace signspot
