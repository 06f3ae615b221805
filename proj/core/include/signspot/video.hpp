#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "signspot/tensor.hpp"

namespace signspot {

// Frames of one continuous video, stored frame-major [T,3,H,W] with
// values in [-1,1].
struct VideoFrames {
  std::string video_id;
  double fps = 25.0;
  int64_t num_frames = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> data;

  int64_t frame_stride() const { return 3 * height * width; }
  void validate() const;
};

// Raw-tensor video files reuse the checkpoint container with a single
// entry "frames" of shape [T,3,H,W].
void save_video_container(const std::filesystem::path& path, const VideoFrames& video);
VideoFrames load_video_container(const std::filesystem::path& path);

// Directory of numbered 8-bit binary PPM (P6) frames, mapped to [-1,1].
VideoFrames load_video_ppm_dir(const std::filesystem::path& dir);

// Copies frames [start, start+window) into dst laid out [3,window,H,W],
// repeating the last frame when the window runs past the video end.
template <typename T>
void copy_window(const VideoFrames& video, int64_t start, int64_t window, std::span<T> dst);

class VideoStore {
 public:
  void add(VideoFrames video);
  bool contains(const std::string& video_id) const;
  const VideoFrames& get(const std::string& video_id) const;  // DataError if missing
  std::vector<std::string> ids() const;                       // sorted
  size_t size() const { return videos_.size(); }

 private:
  std::map<std::string, VideoFrames> videos_;
};

// Reads the dataset layout written by `signspot generate`: a videos.json
// sidecar {id: {fps, num_frames, path}} next to per-video containers.
// Paths are resolved relative to the sidecar; missing "path" defaults to
// videos/<id>.ssck. A video directory path loads numbered PPM frames.
VideoStore load_video_store(const std::filesystem::path& sidecar_json);

void save_video_sidecar(const std::filesystem::path& sidecar_json,
                        const std::vector<VideoFrames>& videos,
                        const std::map<std::string, std::string>& paths);

extern template void copy_window<float>(const VideoFrames&, int64_t, int64_t, std::span<float>);
extern template void copy_window<double>(const VideoFrames&, int64_t, int64_t, std::span<double>);

}  // namespace signspot
