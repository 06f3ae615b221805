#include "signspot/cli.hpp"

#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "signspot/decoder.hpp"
#include "signspot/metric.hpp"
#include "signspot/parallel.hpp"
#include "signspot/synth.hpp"
#include "signspot/trainer.hpp"

namespace signspot {

namespace {

using nlohmann::json;

// Layered config resolution: defaults <- config file <- --set overrides.
// Keys outside the defaults are rejected.
json resolve_config(const json& defaults, const std::string& config_path,
                    const std::vector<std::string>& sets) {
  json resolved = defaults;
  auto apply = [&](const json& patch, const std::string& origin) {
    for (const auto& [key, value] : patch.items()) {
      if (!resolved.contains(key)) {
        throw DataError(origin + ": unknown config key '" + key + "'");
      }
      resolved[key] = value;
    }
  };
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw DataError("cannot open config '" + config_path + "'");
    json file_cfg;
    try {
      in >> file_cfg;
    } catch (const json::exception& e) {
      throw DataError("config '" + config_path + "': invalid JSON: " + e.what());
    }
    apply(file_cfg, "config '" + config_path + "'");
  }
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw DataError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;  // plain string value
    }
    json patch;
    patch[key] = value;
    apply(patch, "--set");
  }
  return resolved;
}

void write_resolved_config(const std::filesystem::path& out_dir, const json& resolved) {
  std::ofstream out(out_dir / "resolved_config.json");
  if (!out) throw DataError("cannot write resolved config into '" + out_dir.string() + "'");
  out << resolved.dump(2) << "\n";
}

std::vector<Level> parse_levels(const std::string& spec) {
  std::vector<Level> out;
  if (spec == "all") {
    out.assign(kAllLevels.begin(), kAllLevels.end());
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_level(item));
  }
  if (out.empty()) throw DataError("--levels: no levels given");
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

PyramidSpec pyramid_from_json(const json& p) {
  PyramidSpec spec;
  spec.input_t = p.at("input_t").get<int64_t>();
  spec.input_h = p.at("input_h").get<int64_t>();
  spec.input_w = p.at("input_w").get<int64_t>();
  spec.c_fine = p.at("c_fine").get<int64_t>();
  spec.c_mid = p.at("c_mid").get<int64_t>();
  spec.c_coarse = p.at("c_coarse").get<int64_t>();
  return spec;
}

int run_generate(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::filesystem::path& out_dir, bool seed_given, uint64_t seed_flag) {
  const json defaults = {
      {"num_classes", 8},     {"video_len", 600},     {"height", 64},
      {"width", 64},          {"signs_per_video", 10}, {"min_sign_len", 12},
      {"max_sign_len", 24},   {"distractor_rate", 0.2}, {"noise_level", 0.05},
      {"seed", 0},            {"fps", 25.0},          {"num_videos", 20},
  };
  json resolved = resolve_config(defaults, config_path, sets);
  if (seed_given) resolved["seed"] = seed_flag;

  SynthConfig cfg;
  cfg.num_classes = resolved.at("num_classes").get<int>();
  cfg.video_len = resolved.at("video_len").get<int64_t>();
  cfg.height = resolved.at("height").get<int64_t>();
  cfg.width = resolved.at("width").get<int64_t>();
  cfg.signs_per_video = resolved.at("signs_per_video").get<int>();
  cfg.min_sign_len = resolved.at("min_sign_len").get<int64_t>();
  cfg.max_sign_len = resolved.at("max_sign_len").get<int64_t>();
  cfg.distractor_rate = resolved.at("distractor_rate").get<double>();
  cfg.noise_level = resolved.at("noise_level").get<double>();
  cfg.seed = resolved.at("seed").get<uint64_t>();
  cfg.fps = resolved.at("fps").get<double>();
  const int num_videos = resolved.at("num_videos").get<int>();

  std::filesystem::create_directories(out_dir / "videos");
  std::vector<VideoFrames> videos;
  std::vector<AnnotationTrack> tracks;
  std::vector<SignInterval> intervals;
  std::map<std::string, std::string> paths;
  for (int i = 0; i < num_videos; ++i) {
    SynthVideo v = generate(cfg, i);
    const std::string rel = "videos/" + v.frames.video_id + ".ssck";
    save_video_container(out_dir / rel, v.frames);
    paths[v.frames.video_id] = rel;
    intervals.insert(intervals.end(), v.track.intervals.begin(), v.track.intervals.end());
    videos.push_back(std::move(v.frames));
    tracks.push_back(std::move(v.track));
  }
  save_intervals_csv(out_dir / "annotations.csv", intervals);
  save_video_sidecar(out_dir / "videos.json", videos, paths);
  write_resolved_config(out_dir, resolved);
  std::cout << "generated " << num_videos << " videos, " << intervals.size()
            << " sign instances into " << out_dir.string() << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
              bool seed_given, uint64_t seed_flag, bool rsp_given, double rsp_flag) {
  const json defaults = {
      {"epochs", 200},
      {"batch_size", 8},
      {"steps_per_epoch", 25},
      {"lr0", 3e-4},
      {"rsp", 0.1},
      {"rebalance", true},
      {"mixup", true},
      {"mixup_alpha", 1.0},
      {"seed", 0},
      {"num_classes", 60},
      {"pyramid",
       {{"input_t", 32}, {"input_h", 224}, {"input_w", 224}, {"c_fine", 480}, {"c_mid", 832},
        {"c_coarse", 1024}}},
      {"trunk", json::array({12, 24, 40, 64})},
      {"val_every", 0},
      {"val_stride", 1},
      {"val_fraction", 0.0},
      {"augmentations", json::array()},
      {"resume", ""},
  };
  json resolved = resolve_config(defaults, config_path, sets);
  if (seed_given) resolved["seed"] = seed_flag;
  if (rsp_given) resolved["rsp"] = rsp_flag;

  TrainConfig cfg = train_config_from_json(resolved.dump());
  const double val_fraction = resolved.at("val_fraction").get<double>();
  check_contract(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must be in [0,1)");
  const std::string resume_path = resolved.at("resume").get<std::string>();

  const VideoStore videos = load_video_store(data_dir / "videos.json");
  std::vector<AnnotationTrack> tracks =
      load_annotations_csv(data_dir / "annotations.csv", data_dir / "videos.json");

  // Hold out the tail of the sorted video ids for validation.
  std::vector<AnnotationTrack> train_tracks = tracks, val_tracks;
  if (val_fraction > 0.0) {
    std::vector<std::string> ids;
    for (const auto& t : tracks) ids.push_back(t.video_id);
    std::sort(ids.begin(), ids.end());
    const size_t held = std::max<size_t>(1, static_cast<size_t>(val_fraction * ids.size()));
    std::vector<std::string> held_ids(ids.end() - static_cast<ptrdiff_t>(held), ids.end());
    std::tie(train_tracks, val_tracks) = split_tracks_by_group(tracks, held_ids);
  }

  std::filesystem::create_directories(out_dir);
  write_resolved_config(out_dir, resolved);

  Trainer<float> trainer =
      resume_path.empty()
          ? Trainer<float>(cfg, std::move(train_tracks), &videos)
          : Trainer<float>::resume(resume_path, std::move(train_tracks), &videos);
  if (!val_tracks.empty()) trainer.set_validation(std::move(val_tracks));

  std::ofstream log(out_dir / "log.csv");
  if (!log) throw DataError("cannot write log.csv into '" + out_dir.string() + "'");
  log << "epoch,train_loss,lr,val_f1\n";
  char buf[64];
  trainer.run([&](const EpochStats& stats) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,", stats.epoch, stats.mean_loss, stats.lr);
    log << buf;
    if (stats.has_val_f1) {
      std::snprintf(buf, sizeof(buf), "%.6f", stats.val_f1);
      log << buf;
    }
    log << "\n" << std::flush;
    std::cout << "epoch " << stats.epoch << " loss " << stats.mean_loss;
    if (stats.has_val_f1) std::cout << " val_f1 " << stats.val_f1;
    std::cout << "\n";
  });
  trainer.save_checkpoint(out_dir / "checkpoint.ssck");
  std::cout << "checkpoint written to " << (out_dir / "checkpoint.ssck").string() << "\n";
  return 0;
}

int run_spot(const std::string& config_path, const std::vector<std::string>& sets,
             const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
             const std::vector<std::string>& ckpts, const std::string& levels_flag,
             bool stride_given, int64_t stride_flag, bool min_len_given, int64_t min_len_flag,
             const std::string& videos_flag) {
  const json defaults = {
      {"levels", "all"}, {"stride", 1}, {"min_len", 1}, {"videos", ""},
  };
  json resolved = resolve_config(defaults, config_path, sets);
  if (!levels_flag.empty()) resolved["levels"] = levels_flag;
  if (stride_given) resolved["stride"] = stride_flag;
  if (min_len_given) resolved["min_len"] = min_len_flag;
  if (!videos_flag.empty()) resolved["videos"] = videos_flag;
  resolved["checkpoints"] = ckpts;

  if (ckpts.empty()) throw DataError("spot: at least one checkpoint required (--ckpt/--ensemble)");
  const std::vector<Level> levels = parse_levels(resolved.at("levels").get<std::string>());
  const int64_t stride = resolved.at("stride").get<int64_t>();
  const int64_t min_len = resolved.at("min_len").get<int64_t>();

  const VideoStore videos = load_video_store(data_dir / "videos.json");
  std::vector<std::string> ids = videos.ids();
  const std::string videos_filter = resolved.at("videos").get<std::string>();
  if (!videos_filter.empty()) ids = split_commas(videos_filter);

  std::vector<SpottingModel<float>> models;
  for (const auto& path : ckpts) models.push_back(SpottingModel<float>::load(path));

  std::vector<SignInterval> predictions;
  for (const std::string& id : ids) {
    const VideoFrames& video = videos.get(id);
    std::vector<FrameProbs> members;
    for (auto& model : models) {
      members.push_back(slide_video(model, video, stride).fused(levels));
    }
    const FrameProbs fused = ensemble(members);
    for (auto& iv : greedy_intervals(fused, id, min_len)) predictions.push_back(std::move(iv));
  }

  std::filesystem::create_directories(out_dir);
  save_intervals_csv(out_dir / "predictions.csv", predictions, /*with_score=*/true);
  write_resolved_config(out_dir, resolved);
  std::cout << "wrote " << predictions.size() << " predicted intervals to "
            << (out_dir / "predictions.csv").string() << "\n";
  return 0;
}

int run_eval(const std::filesystem::path& preds_path, const std::filesystem::path& gts_path,
             const std::filesystem::path& out_dir) {
  const std::vector<SignInterval> preds = load_intervals_csv(preds_path);
  const std::vector<SignInterval> gts = load_intervals_csv(gts_path);
  const SpottingReport report = evaluate(preds, gts);

  std::filesystem::create_directories(out_dir);
  write_report_json(out_dir / "report.json", report);
  json resolved = {{"preds", preds_path.string()}, {"gts", gts_path.string()}};
  write_resolved_config(out_dir, resolved);
  std::cout << "precision=" << report.precision << " recall=" << report.recall
            << " f1=" << report.f1 << "\n";
  return 0;
}

int run_trace(const std::string& config_path, const std::vector<std::string>& sets,
              const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
              const std::string& ckpt, const std::string& video_id, const std::string& levels_flag,
              bool stride_given, int64_t stride_flag, const std::string& classes_flag) {
  const json defaults = {
      {"levels", "all"}, {"stride", 1}, {"classes", "all"},
  };
  json resolved = resolve_config(defaults, config_path, sets);
  if (!levels_flag.empty()) resolved["levels"] = levels_flag;
  if (stride_given) resolved["stride"] = stride_flag;
  if (!classes_flag.empty()) resolved["classes"] = classes_flag;
  resolved["checkpoint"] = ckpt;
  resolved["video"] = video_id;

  if (ckpt.empty()) throw DataError("trace: --ckpt required");
  if (video_id.empty()) throw DataError("trace: --video required");
  const std::vector<Level> levels = parse_levels(resolved.at("levels").get<std::string>());
  const int64_t stride = resolved.at("stride").get<int64_t>();

  SpottingModel<float> model = SpottingModel<float>::load(ckpt);
  const int channels = static_cast<int>(model.config().head.logit_channels());

  std::vector<int> classes;
  const std::string classes_spec = resolved.at("classes").get<std::string>();
  if (classes_spec == "all") {
    for (int c = 0; c < channels; ++c) classes.push_back(c);
  } else {
    for (const std::string& c : split_commas(classes_spec)) classes.push_back(std::stoi(c));
    for (int c : classes) {
      check_contract(c >= 0 && c < channels, "trace: class index out of range");
    }
  }

  const VideoStore videos = load_video_store(data_dir / "videos.json");
  const VideoFrames& video = videos.get(video_id);
  const SlideResult<float> slid = slide_video(model, video, stride);
  const FrameProbs fused = slid.fused(levels);

  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "trace.csv");
  if (!out) throw DataError("cannot write trace.csv into '" + out_dir.string() + "'");
  auto column_label = [&](int c) {
    return c == channels - 1 ? std::string("bg") : "c" + std::to_string(c);
  };
  out << "frame";
  for (Level level : levels) {
    for (int c : classes) out << ',' << level_name(level) << '_' << column_label(c);
  }
  for (int c : classes) out << ",avg_" << column_label(c);
  out << "\n";
  char buf[32];
  for (int64_t f = 0; f < video.num_frames; ++f) {
    out << f;
    for (Level level : levels) {
      const FrameProbs& p = slid.per_level[static_cast<size_t>(level)];
      for (int c : classes) {
        std::snprintf(buf, sizeof(buf), "%.9g", p.at(f, c));
        out << ',' << buf;
      }
    }
    for (int c : classes) {
      std::snprintf(buf, sizeof(buf), "%.9g", fused.at(f, c));
      out << ',' << buf;
    }
    out << "\n";
  }
  write_resolved_config(out_dir, resolved);
  std::cout << "wrote per-frame probabilities for " << video_id << " to "
            << (out_dir / "trace.csv").string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Hierarchical coarse-to-fine sign spotting pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::string data_dir;
  uint64_t seed_flag = 0;
  double rsp_flag = 0.0;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--set", sets, "config override key=value (repeatable)");
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--threads", threads, "worker threads (0 = hardware)");
    if (needs_data) cmd->add_option("--data", data_dir, "dataset directory")->required();
  };

  CLI::App* cmd_generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(cmd_generate, false);
  auto* gen_seed = cmd_generate->add_option("--seed", seed_flag, "generator seed");

  CLI::App* cmd_train = app.add_subcommand("train", "train a model on a dataset");
  add_common(cmd_train, true);
  auto* train_seed = cmd_train->add_option("--seed", seed_flag, "training seed");
  auto* train_rsp = cmd_train->add_option("--rsp", rsp_flag, "random sampling probability");

  std::vector<std::string> ckpts;
  std::string levels_flag, videos_flag, classes_flag, video_id;
  int64_t stride_flag = 1, min_len_flag = 1;
  CLI::App* cmd_spot = app.add_subcommand("spot", "predict sign intervals for videos");
  add_common(cmd_spot, true);
  cmd_spot->add_option("--ckpt", ckpts, "model checkpoint (repeatable)");
  cmd_spot->add_option("--ensemble", ckpts, "checkpoints to ensemble (mean probabilities)");
  cmd_spot->add_option("--levels", levels_flag, "temporal levels to fuse: all or e.g. x8,x32");
  auto* spot_stride = cmd_spot->add_option("--stride", stride_flag, "sliding-window stride");
  auto* spot_min_len = cmd_spot->add_option("--min-len", min_len_flag, "minimum run length");
  cmd_spot->add_option("--videos", videos_flag, "restrict to these video ids (comma separated)");

  std::string preds_path, gts_path;
  CLI::App* cmd_eval = app.add_subcommand("eval", "score predictions against ground truth");
  cmd_eval->add_option("--preds", preds_path, "predictions CSV")->required();
  cmd_eval->add_option("--gts", gts_path, "ground-truth CSV")->required();
  cmd_eval->add_option("--out", out_dir, "output directory")->required();

  CLI::App* cmd_trace = app.add_subcommand("trace", "per-frame probability traces");
  add_common(cmd_trace, true);
  std::string trace_ckpt;
  cmd_trace->add_option("--ckpt", trace_ckpt, "model checkpoint")->required();
  cmd_trace->add_option("--video", video_id, "video id")->required();
  cmd_trace->add_option("--levels", levels_flag, "levels to trace");
  auto* trace_stride = cmd_trace->add_option("--stride", stride_flag, "sliding-window stride");
  cmd_trace->add_option("--classes", classes_flag, "class indices or 'all'");

  std::vector<const char*> argv;
  argv.push_back("signspot");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    set_num_threads(threads);
    if (*cmd_generate) {
      return run_generate(config_path, sets, out_dir, gen_seed->count() > 0, seed_flag);
    }
    if (*cmd_train) {
      return run_train(config_path, sets, data_dir, out_dir, train_seed->count() > 0, seed_flag,
                       train_rsp->count() > 0, rsp_flag);
    }
    if (*cmd_spot) {
      return run_spot(config_path, sets, data_dir, out_dir, ckpts, levels_flag,
                      spot_stride->count() > 0, stride_flag, spot_min_len->count() > 0,
                      min_len_flag, videos_flag);
    }
    if (*cmd_eval) {
      return run_eval(preds_path, gts_path, out_dir);
    }
    if (*cmd_trace) {
      return run_trace(config_path, sets, data_dir, out_dir, trace_ckpt, video_id, levels_flag,
                       trace_stride->count() > 0, stride_flag, classes_flag);
    }
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace signspot
