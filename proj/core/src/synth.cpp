#include "signspot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace signspot {

namespace {
constexpr int64_t kBlockHalf = 3;  // block is (2*kBlockHalf+1)^2 pixels
constexpr int64_t kMinGap = 6;     // background frames between segments
}  // namespace

void SynthConfig::validate() const {
  check_contract(num_classes > 0, "SynthConfig: num_classes must be positive");
  check_contract(video_len > 0, "SynthConfig: video_len must be positive");
  check_contract(height >= 16 && width >= 16, "SynthConfig: resolution too small for the pattern");
  check_contract(signs_per_video > 0, "SynthConfig: signs_per_video must be positive");
  check_contract(min_sign_len > 0 && min_sign_len <= max_sign_len,
                 "SynthConfig: sign length bounds invalid");
  check_contract(distractor_rate >= 0.0 && distractor_rate < 1.0,
                 "SynthConfig: distractor_rate must be in [0,1)");
  check_contract(noise_level >= 0.0 && noise_level < 0.5, "SynthConfig: noise_level out of range");
}

ClassMotion class_motion(const SynthConfig& cfg, int class_id, bool distractor) {
  ClassMotion m;
  const double step = 2.0 * std::numbers::pi / cfg.num_classes;
  // Distractors sit halfway between neighbouring class directions and
  // frequencies: near misses, not vocabulary members.
  m.angle = step * (static_cast<double>(class_id) + (distractor ? 0.5 : 0.0));
  const double span = static_cast<double>(std::min(cfg.height, cfg.width) - 2 * (kBlockHalf + 1));
  m.speed = 0.6 * span / static_cast<double>(cfg.max_sign_len);
  m.frequency = 0.25 + (static_cast<double>(class_id) + (distractor ? 0.5 : 0.0)) * 0.6 /
                           static_cast<double>(cfg.num_classes);
  return m;
}

namespace {

struct Segment {
  int64_t start = 0;
  int64_t length = 0;
  int class_id = 0;
  bool distractor = false;
};

std::vector<Segment> plan_segments(const SynthConfig& cfg, std::mt19937_64& rng) {
  const int n_signs = cfg.signs_per_video;
  const int n_distractors = static_cast<int>(std::llround(
      static_cast<double>(n_signs) * cfg.distractor_rate / (1.0 - cfg.distractor_rate)));
  const int total = n_signs + n_distractors;

  std::vector<Segment> segments(static_cast<size_t>(total));
  std::uniform_int_distribution<int64_t> pick_len(cfg.min_sign_len, cfg.max_sign_len);
  std::uniform_int_distribution<int> pick_class(0, cfg.num_classes - 1);
  for (int i = 0; i < total; ++i) {
    segments[static_cast<size_t>(i)].length = pick_len(rng);
    segments[static_cast<size_t>(i)].class_id = pick_class(rng);
    segments[static_cast<size_t>(i)].distractor = i >= n_signs;
  }
  std::shuffle(segments.begin(), segments.end(), rng);

  int64_t occupied = 0;
  for (const auto& s : segments) occupied += s.length;
  const int64_t slack = cfg.video_len - occupied - kMinGap * (total + 1);
  if (slack < 0) {
    throw ContractError("SynthConfig: cannot pack " + std::to_string(total) + " segments into " +
                        std::to_string(cfg.video_len) + " frames");
  }

  // Distribute the slack over the gaps one frame at a time.
  std::vector<int64_t> gaps(static_cast<size_t>(total + 1), kMinGap);
  std::uniform_int_distribution<size_t> pick_gap(0, gaps.size() - 1);
  for (int64_t i = 0; i < slack; ++i) ++gaps[pick_gap(rng)];

  int64_t cursor = 0;
  for (int i = 0; i < total; ++i) {
    cursor += gaps[static_cast<size_t>(i)];
    segments[static_cast<size_t>(i)].start = cursor;
    cursor += segments[static_cast<size_t>(i)].length;
  }
  return segments;
}

void render_segment(const SynthConfig& cfg, const Segment& seg, VideoFrames& video,
                    std::mt19937_64& rng) {
  const ClassMotion motion = class_motion(cfg, seg.class_id, seg.distractor);
  const double dx = motion.speed * std::cos(motion.angle);
  const double dy = motion.speed * std::sin(motion.angle);
  const double travel_x = dx * static_cast<double>(seg.length - 1);
  const double travel_y = dy * static_cast<double>(seg.length - 1);

  const double margin = static_cast<double>(kBlockHalf + 1);
  const double x_lo = margin - std::min(0.0, travel_x);
  const double x_hi = static_cast<double>(cfg.width) - 1.0 - margin - std::max(0.0, travel_x);
  const double y_lo = margin - std::min(0.0, travel_y);
  const double y_hi = static_cast<double>(cfg.height) - 1.0 - margin - std::max(0.0, travel_y);
  check_contract(x_hi >= x_lo && y_hi >= y_lo, "synth: segment trajectory does not fit the frame");
  std::uniform_real_distribution<double> px(x_lo, x_hi);
  std::uniform_real_distribution<double> py(y_lo, y_hi);
  const double x0 = px(rng);
  const double y0 = py(rng);

  const int64_t plane = cfg.height * cfg.width;
  for (int64_t t = 0; t < seg.length; ++t) {
    const double cx = x0 + dx * static_cast<double>(t);
    const double cy = y0 + dy * static_cast<double>(t);
    const double brightness = 0.75 + 0.25 * std::sin(motion.frequency * static_cast<double>(t));
    const int64_t ix = static_cast<int64_t>(std::llround(cx));
    const int64_t iy = static_cast<int64_t>(std::llround(cy));
    float* frame = video.data.data() + (seg.start + t) * video.frame_stride();
    for (int64_t r = std::max<int64_t>(0, iy - kBlockHalf);
         r <= std::min(cfg.height - 1, iy + kBlockHalf); ++r) {
      for (int64_t c = std::max<int64_t>(0, ix - kBlockHalf);
           c <= std::min(cfg.width - 1, ix + kBlockHalf); ++c) {
        for (int64_t ch = 0; ch < 3; ++ch) {
          frame[ch * plane + r * cfg.width + c] = static_cast<float>(brightness);
        }
      }
    }
  }
}

}  // namespace

SynthVideo generate(const SynthConfig& cfg, int video_index) {
  cfg.validate();
  std::seed_seq seq{static_cast<uint32_t>(cfg.seed), static_cast<uint32_t>(cfg.seed >> 32),
                    static_cast<uint32_t>(video_index) + 1u};
  std::mt19937_64 rng(seq);

  SynthVideo out;
  char id[32];
  std::snprintf(id, sizeof(id), "synth_%03d", video_index);
  out.frames.video_id = id;
  out.frames.fps = cfg.fps;
  out.frames.num_frames = cfg.video_len;
  out.frames.height = cfg.height;
  out.frames.width = cfg.width;
  out.frames.data.resize(static_cast<size_t>(cfg.video_len * out.frames.frame_stride()));

  std::uniform_real_distribution<float> noise(-static_cast<float>(cfg.noise_level),
                                              static_cast<float>(cfg.noise_level));
  for (auto& v : out.frames.data) v = noise(rng);

  const std::vector<Segment> segments = plan_segments(cfg, rng);
  out.track.video_id = out.frames.video_id;
  out.track.fps = cfg.fps;
  out.track.num_frames = cfg.video_len;
  for (const auto& seg : segments) {
    render_segment(cfg, seg, out.frames, rng);
    if (!seg.distractor) {
      SignInterval iv;
      iv.video_id = out.frames.video_id;
      iv.class_id = seg.class_id;
      iv.start_frame = seg.start;
      iv.end_frame = seg.start + seg.length;
      out.track.intervals.push_back(std::move(iv));
    }
  }
  std::sort(out.track.intervals.begin(), out.track.intervals.end(),
            [](const SignInterval& a, const SignInterval& b) { return a.start_frame < b.start_frame; });
  out.track.validate(cfg.num_classes);
  return out;
}

std::vector<SynthVideo> generate_dataset(const SynthConfig& cfg, int num_videos) {
  check_contract(num_videos > 0, "generate_dataset: num_videos must be positive");
  std::vector<SynthVideo> out;
  out.reserve(static_cast<size_t>(num_videos));
  for (int i = 0; i < num_videos; ++i) out.push_back(generate(cfg, i));
  return out;
}

}  // namespace signspot
