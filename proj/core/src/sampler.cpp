#include "signspot/sampler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace signspot {

void AnnotationTrack::validate(int num_classes) const {
  check_contract(!video_id.empty(), "AnnotationTrack: empty video id");
  check_contract(fps > 0, "AnnotationTrack: fps must be positive for '" + video_id + "'");
  check_contract(num_frames > 0, "AnnotationTrack: num_frames must be positive for '" + video_id + "'");
  for (const auto& iv : intervals) {
    check_contract(iv.video_id == video_id, "AnnotationTrack: interval video id mismatch");
    check_contract(iv.start_frame >= 0 && iv.start_frame < iv.end_frame && iv.end_frame <= num_frames,
                   "AnnotationTrack: interval [" + std::to_string(iv.start_frame) + "," +
                       std::to_string(iv.end_frame) + ") outside video '" + video_id + "' of " +
                       std::to_string(num_frames) + " frames");
    check_contract(iv.class_id >= 0 && (num_classes < 0 || iv.class_id < num_classes),
                   "AnnotationTrack: class id " + std::to_string(iv.class_id) + " out of range");
  }
}

std::vector<double> rebalance_weights(const std::vector<AnnotationTrack>& tracks,
                                      int num_classes) {
  check_contract(num_classes > 0, "rebalance_weights: num_classes must be positive");
  std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
  for (const auto& t : tracks) {
    for (const auto& iv : t.intervals) {
      check_contract(iv.class_id >= 0 && iv.class_id < num_classes,
                     "rebalance_weights: class id out of range");
      ++counts[static_cast<size_t>(iv.class_id)];
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<size_t>(c)] == 0) {
      throw ContractError("rebalance_weights: class " + std::to_string(c) + " has no instances");
    }
  }
  return std::vector<double>(static_cast<size_t>(num_classes), 1.0 / num_classes);
}

WindowSampler::WindowSampler(std::vector<AnnotationTrack> tracks, SamplerConfig cfg,
                             int num_classes)
    : tracks_(std::move(tracks)), cfg_(cfg), num_classes_(num_classes) {
  check_contract(cfg.rsp >= 0.0 && cfg.rsp <= 1.0, "WindowSampler: rsp must be in [0,1]");
  check_contract(cfg.window > 0, "WindowSampler: window must be positive");
  check_contract(!tracks_.empty(), "WindowSampler: no tracks");
  by_class_.resize(static_cast<size_t>(num_classes));
  for (size_t ti = 0; ti < tracks_.size(); ++ti) {
    tracks_[ti].validate(num_classes);
    for (size_t ii = 0; ii < tracks_[ti].intervals.size(); ++ii) {
      instances_.push_back(InstanceRef{ti, ii});
      by_class_[static_cast<size_t>(tracks_[ti].intervals[ii].class_id)].push_back(
          InstanceRef{ti, ii});
    }
  }
  if (cfg.rsp < 1.0) {
    check_contract(!instances_.empty(),
                   "WindowSampler: rsp < 1 requires at least one annotated interval");
    if (cfg.rebalance) rebalance_weights(tracks_, num_classes);
  }
}

SampledWindow WindowSampler::window_at(size_t track_index, int64_t start) const {
  const AnnotationTrack& track = tracks_[track_index];
  SampledWindow out;
  out.video_id = track.video_id;
  out.start = start;
  out.annotation.video_id = track.video_id;
  out.annotation.window_start = start;
  out.annotation.length = cfg_.window;
  const int64_t end = start + cfg_.window;
  for (const auto& iv : track.intervals) {
    const int64_t s = std::max(iv.start_frame, start);
    const int64_t e = std::min(iv.end_frame, end);
    if (s < e) {
      out.annotation.intervals.push_back(ClippedInterval{iv.class_id, s - start, e - start});
    }
  }
  return out;
}

SampledWindow WindowSampler::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < cfg_.rsp) {
    std::uniform_int_distribution<size_t> pick_track(0, tracks_.size() - 1);
    const size_t ti = pick_track(rng);
    const int64_t max_start = std::max<int64_t>(0, tracks_[ti].num_frames - cfg_.window);
    std::uniform_int_distribution<int64_t> pick_start(0, max_start);
    return window_at(ti, pick_start(rng));
  }

  InstanceRef ref;
  if (cfg_.rebalance) {
    std::uniform_int_distribution<int> pick_class(0, num_classes_ - 1);
    const auto& pool = by_class_[static_cast<size_t>(pick_class(rng))];
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    ref = pool[pick(rng)];
  } else {
    std::uniform_int_distribution<size_t> pick(0, instances_.size() - 1);
    ref = instances_[pick(rng)];
  }
  const AnnotationTrack& track = tracks_[ref.track];
  const SignInterval& iv = track.intervals[ref.interval];
  const int64_t max_start = std::max<int64_t>(0, track.num_frames - cfg_.window);
  // Uniform among placements containing the instance (or inside it when
  // the instance is longer than the window), clipped to video bounds.
  int64_t lo = std::min(iv.start_frame, iv.end_frame - cfg_.window);
  int64_t hi = std::max(iv.start_frame, iv.end_frame - cfg_.window);
  lo = std::clamp<int64_t>(lo, 0, max_start);
  hi = std::clamp<int64_t>(hi, 0, max_start);
  std::uniform_int_distribution<int64_t> pick_start(lo, hi);
  return window_at(ref.track, pick_start(rng));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

int64_t parse_int_field(const std::string& s, const std::string& what, size_t row) {
  int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("row " + std::to_string(row) + ": bad " + what + " '" + s + "'");
  }
  return v;
}

double parse_real_field(const std::string& s, const std::string& what, size_t row) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("row " + std::to_string(row) + ": bad " + what + " '" + s + "'");
  }
}

int64_t time_to_frame(double seconds, double fps) {
  return static_cast<int64_t>(std::floor(seconds * fps + 0.5));  // round half up
}

struct VideoMeta {
  double fps = 25.0;
  int64_t num_frames = 0;
};

std::vector<AnnotationTrack> build_tracks(const std::map<std::string, VideoMeta>& metas,
                                          std::vector<SignInterval> intervals) {
  std::map<std::string, AnnotationTrack> by_video;
  for (const auto& [id, meta] : metas) {
    AnnotationTrack t;
    t.video_id = id;
    t.fps = meta.fps;
    t.num_frames = meta.num_frames;
    by_video.emplace(id, std::move(t));
  }
  for (auto& iv : intervals) {
    auto it = by_video.find(iv.video_id);
    if (it == by_video.end()) throw DataError("annotations reference unknown video '" + iv.video_id + "'");
    it->second.intervals.push_back(std::move(iv));
  }
  std::vector<AnnotationTrack> out;
  out.reserve(by_video.size());
  for (auto& [_, t] : by_video) {
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<AnnotationTrack> load_annotations_csv(const std::filesystem::path& csv_path,
                                                  const std::filesystem::path& sidecar_json) {
  std::ifstream sidecar(sidecar_json);
  if (!sidecar) throw DataError("cannot open '" + sidecar_json.string() + "'");
  nlohmann::json j;
  try {
    sidecar >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + sidecar_json.string() + "': invalid JSON: " + e.what());
  }
  std::map<std::string, VideoMeta> metas;
  for (const auto& [id, entry] : j.items()) {
    VideoMeta meta;
    meta.fps = entry.value("fps", 25.0);
    meta.num_frames = entry.at("num_frames").get<int64_t>();
    metas.emplace(id, meta);
  }

  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open '" + csv_path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + csv_path.string() + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool time_based = false;
  if (line == "video_id,class_id,start_frame,end_frame") {
    time_based = false;
  } else if (line == "video_id,class_id,start_time,end_time") {
    time_based = true;
  } else {
    throw DataError("'" + csv_path.string() + "': unexpected header '" + line + "'");
  }

  std::vector<SignInterval> intervals;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 4) throw DataError("row " + std::to_string(row) + ": expected 4 fields");
    SignInterval iv;
    iv.video_id = fields[0];
    iv.class_id = static_cast<int>(parse_int_field(fields[1], "class_id", row));
    auto meta_it = metas.find(iv.video_id);
    if (meta_it == metas.end()) {
      throw DataError("row " + std::to_string(row) + ": unknown video '" + iv.video_id + "'");
    }
    if (time_based) {
      iv.start_frame = time_to_frame(parse_real_field(fields[2], "start_time", row), meta_it->second.fps);
      iv.end_frame = time_to_frame(parse_real_field(fields[3], "end_time", row), meta_it->second.fps);
    } else {
      iv.start_frame = parse_int_field(fields[2], "start_frame", row);
      iv.end_frame = parse_int_field(fields[3], "end_frame", row);
    }
    if (iv.start_frame < 0 || iv.start_frame >= iv.end_frame) {
      throw DataError("row " + std::to_string(row) + ": invalid interval [" +
                      std::to_string(iv.start_frame) + "," + std::to_string(iv.end_frame) + ")");
    }
    intervals.push_back(std::move(iv));
  }
  return build_tracks(metas, std::move(intervals));
}

std::vector<AnnotationTrack> load_annotations_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::map<std::string, VideoMeta> metas;
  std::vector<SignInterval> intervals;
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("row " + std::to_string(row) + ": invalid JSON: " + e.what());
    }
    try {
      const std::string id = j.at("video_id").get<std::string>();
      if (j.contains("class_id")) {
        SignInterval iv;
        iv.video_id = id;
        iv.class_id = j.at("class_id").get<int>();
        const double fps = metas.contains(id) ? metas[id].fps : 25.0;
        if (j.contains("start_frame")) {
          iv.start_frame = j.at("start_frame").get<int64_t>();
          iv.end_frame = j.at("end_frame").get<int64_t>();
        } else {
          iv.start_frame = time_to_frame(j.at("start_time").get<double>(), fps);
          iv.end_frame = time_to_frame(j.at("end_time").get<double>(), fps);
        }
        if (iv.start_frame < 0 || iv.start_frame >= iv.end_frame) {
          throw DataError("row " + std::to_string(row) + ": invalid interval");
        }
        intervals.push_back(std::move(iv));
      } else {
        VideoMeta meta;
        meta.fps = j.value("fps", 25.0);
        meta.num_frames = j.at("num_frames").get<int64_t>();
        metas[id] = meta;
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("row " + std::to_string(row) + ": " + e.what());
    }
  }
  return build_tracks(metas, std::move(intervals));
}

std::vector<SignInterval> load_intervals_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("video_id,class_id,start_frame,end_frame", 0) != 0) {
    throw DataError("'" + path.string() + "': unexpected header '" + line + "'");
  }
  std::vector<SignInterval> out;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 4) throw DataError("row " + std::to_string(row) + ": expected >= 4 fields");
    SignInterval iv;
    iv.video_id = fields[0];
    iv.class_id = static_cast<int>(parse_int_field(fields[1], "class_id", row));
    iv.start_frame = parse_int_field(fields[2], "start_frame", row);
    iv.end_frame = parse_int_field(fields[3], "end_frame", row);
    if (fields.size() >= 5 && !fields[4].empty()) {
      iv.score = parse_real_field(fields[4], "score", row);
    }
    if (iv.start_frame < 0 || iv.start_frame >= iv.end_frame) {
      throw DataError("row " + std::to_string(row) + ": invalid interval [" +
                      std::to_string(iv.start_frame) + "," + std::to_string(iv.end_frame) + ")");
    }
    out.push_back(std::move(iv));
  }
  return out;
}

void save_intervals_csv(const std::filesystem::path& path,
                        const std::vector<SignInterval>& intervals, bool with_score) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "video_id,class_id,start_frame,end_frame";
  if (with_score) out << ",score";
  out << "\n";
  char score_buf[32];
  for (const auto& iv : intervals) {
    check_contract(iv.video_id.find(',') == std::string::npos,
                   "video id must not contain a comma: '" + iv.video_id + "'");
    out << iv.video_id << ',' << iv.class_id << ',' << iv.start_frame << ',' << iv.end_frame;
    if (with_score) {
      std::snprintf(score_buf, sizeof(score_buf), "%.6f", iv.score);
      out << ',' << score_buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void save_annotation_sidecar(const std::filesystem::path& path,
                             const std::vector<AnnotationTrack>& tracks) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& t : tracks) {
    j[t.video_id] = {{"fps", t.fps}, {"num_frames", t.num_frames}};
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

}  // namespace signspot
