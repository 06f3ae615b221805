#include "signspot/video.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "signspot/checkpoint.hpp"

namespace signspot {

void VideoFrames::validate() const {
  check_contract(num_frames > 0 && height > 0 && width > 0,
                 "VideoFrames: geometry must be positive");
  check_contract(static_cast<int64_t>(data.size()) == num_frames * frame_stride(),
                 "VideoFrames: data length does not match geometry for '" + video_id + "'");
}

void save_video_container(const std::filesystem::path& path, const VideoFrames& video) {
  video.validate();
  CheckpointFile file;
  file.add("frames", Shape{video.num_frames, 3, video.height, video.width}, video.data);
  file.meta()["video_id"] = video.video_id;
  file.meta()["fps"] = std::to_string(video.fps);
  file.save(path);
}

VideoFrames load_video_container(const std::filesystem::path& path) {
  CheckpointFile file = CheckpointFile::load(path);
  const CheckpointFile::Record& r = file.at("frames");
  if (r.shape.ndim() != 4 || r.shape[1] != 3) {
    throw DataError("video container '" + path.string() + "': frames must be [T,3,H,W], got " +
                    r.shape.str());
  }
  VideoFrames video;
  video.num_frames = r.shape[0];
  video.height = r.shape[2];
  video.width = r.shape[3];
  video.data = r.values;
  if (auto it = file.meta().find("video_id"); it != file.meta().end()) video.video_id = it->second;
  if (auto it = file.meta().find("fps"); it != file.meta().end()) video.fps = std::stod(it->second);
  video.validate();
  return video;
}

namespace {

// Minimal binary PPM (P6, maxval 255) reader.
void read_ppm_frame(const std::filesystem::path& path, VideoFrames& video) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError("'" + path.string() + "': not a binary PPM (P6) file");
  auto next_int = [&](const char* what) {
    // Skips whitespace and '#' comment lines.
    while (true) {
      const int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int64_t v = -1;
    in >> v;
    if (!in || v <= 0) throw DataError("'" + path.string() + "': bad PPM " + what);
    return v;
  };
  const int64_t w = next_int("width");
  const int64_t h = next_int("height");
  const int64_t maxval = next_int("maxval");
  if (maxval != 255) throw DataError("'" + path.string() + "': only maxval 255 PPM supported");
  in.get();  // single whitespace before pixel data

  if (video.num_frames == 0) {
    video.height = h;
    video.width = w;
  } else if (h != video.height || w != video.width) {
    throw DataError("'" + path.string() + "': frame size differs from earlier frames");
  }

  std::vector<unsigned char> raw(static_cast<size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw DataError("'" + path.string() + "': truncated pixel data");

  const size_t base = video.data.size();
  video.data.resize(base + static_cast<size_t>(3 * h * w));
  // Interleaved RGB -> planar [3,H,W], bytes mapped to [-1,1].
  for (int64_t c = 0; c < 3; ++c) {
    float* dst = video.data.data() + base + static_cast<size_t>(c * h * w);
    for (int64_t p = 0; p < h * w; ++p) {
      dst[p] = static_cast<float>(raw[static_cast<size_t>(p * 3 + c)]) / 127.5f - 1.0f;
    }
  }
  ++video.num_frames;
}

}  // namespace

VideoFrames load_video_ppm_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw DataError("no .ppm frames found in '" + dir.string() + "'");
  std::sort(files.begin(), files.end());

  VideoFrames video;
  video.video_id = dir.filename().string();
  for (const auto& f : files) read_ppm_frame(f, video);
  video.validate();
  return video;
}

template <typename T>
void copy_window(const VideoFrames& video, int64_t start, int64_t window, std::span<T> dst) {
  video.validate();
  check_contract(start >= 0 && window > 0, "copy_window: invalid window position");
  const int64_t plane = video.height * video.width;
  check_contract(static_cast<int64_t>(dst.size()) == 3 * window * plane,
                 "copy_window: destination size mismatch");
  for (int64_t t = 0; t < window; ++t) {
    const int64_t src_t = std::min(start + t, video.num_frames - 1);  // repeat last frame
    const float* src = video.data.data() + src_t * video.frame_stride();
    for (int64_t c = 0; c < 3; ++c) {
      T* out = dst.data() + (c * window + t) * plane;
      const float* in = src + c * plane;
      for (int64_t p = 0; p < plane; ++p) out[p] = static_cast<T>(in[p]);
    }
  }
}

void VideoStore::add(VideoFrames video) {
  video.validate();
  check_contract(!videos_.contains(video.video_id),
                 "VideoStore: duplicate video id '" + video.video_id + "'");
  videos_.emplace(video.video_id, std::move(video));
}

bool VideoStore::contains(const std::string& video_id) const { return videos_.contains(video_id); }

const VideoFrames& VideoStore::get(const std::string& video_id) const {
  auto it = videos_.find(video_id);
  if (it == videos_.end()) throw DataError("unknown video '" + video_id + "'");
  return it->second;
}

std::vector<std::string> VideoStore::ids() const {
  std::vector<std::string> out;
  out.reserve(videos_.size());
  for (const auto& [id, _] : videos_) out.push_back(id);
  return out;
}

VideoStore load_video_store(const std::filesystem::path& sidecar_json) {
  std::ifstream in(sidecar_json);
  if (!in) throw DataError("cannot open '" + sidecar_json.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + sidecar_json.string() + "': invalid JSON: " + e.what());
  }

  const std::filesystem::path base = sidecar_json.parent_path();
  VideoStore store;
  for (const auto& [id, entry] : j.items()) {
    std::filesystem::path path;
    if (entry.contains("path")) {
      path = base / entry.at("path").get<std::string>();
    } else {
      path = base / "videos" / (id + ".ssck");
    }
    VideoFrames video = std::filesystem::is_directory(path) ? load_video_ppm_dir(path)
                                                            : load_video_container(path);
    video.video_id = id;
    if (entry.contains("fps")) video.fps = entry.at("fps").get<double>();
    if (entry.contains("num_frames")) {
      const int64_t expected = entry.at("num_frames").get<int64_t>();
      if (expected != video.num_frames) {
        throw DataError("video '" + id + "': sidecar lists " + std::to_string(expected) +
                        " frames but file has " + std::to_string(video.num_frames));
      }
    }
    store.add(std::move(video));
  }
  return store;
}

void save_video_sidecar(const std::filesystem::path& sidecar_json,
                        const std::vector<VideoFrames>& videos,
                        const std::map<std::string, std::string>& paths) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& v : videos) {
    nlohmann::json entry = {{"fps", v.fps}, {"num_frames", v.num_frames}};
    if (auto it = paths.find(v.video_id); it != paths.end()) entry["path"] = it->second;
    j[v.video_id] = entry;
  }
  std::ofstream out(sidecar_json);
  if (!out) throw DataError("cannot open '" + sidecar_json.string() + "' for writing");
  out << j.dump(2) << "\n";
}

template void copy_window<float>(const VideoFrames&, int64_t, int64_t, std::span<float>);
template void copy_window<double>(const VideoFrames&, int64_t, int64_t, std::span<double>);

}  // namespace signspot
