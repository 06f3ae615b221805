#include "signspot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace signspot {

void TrainConfig::validate() const {
  check_contract(epochs > 0 && batch_size > 0 && steps_per_epoch > 0,
                 "TrainConfig: epochs, batch_size and steps_per_epoch must be positive");
  check_contract(lr0 > 0.0, "TrainConfig: lr0 must be positive");
  check_contract(rsp >= 0.0 && rsp <= 1.0, "TrainConfig: rsp must be in [0,1]");
  check_contract(mixup_alpha > 0.0, "TrainConfig: mixup_alpha must be positive");
  check_contract(num_classes > 0, "TrainConfig: num_classes must be positive");
  check_contract(val_every >= 0 && val_stride >= 1, "TrainConfig: invalid validation settings");
  check_contract(augmentations.empty(),
                 "TrainConfig: augmentations are config hooks only; none are implemented");
  pyramid.validate();
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["lr0"] = cfg.lr0;
  j["rsp"] = cfg.rsp;
  j["rebalance"] = cfg.rebalance;
  j["mixup"] = cfg.mixup;
  j["mixup_alpha"] = cfg.mixup_alpha;
  j["seed"] = cfg.seed;
  j["num_classes"] = cfg.num_classes;
  j["pyramid"] = {{"input_t", cfg.pyramid.input_t}, {"input_h", cfg.pyramid.input_h},
                  {"input_w", cfg.pyramid.input_w}, {"c_fine", cfg.pyramid.c_fine},
                  {"c_mid", cfg.pyramid.c_mid},     {"c_coarse", cfg.pyramid.c_coarse}};
  j["trunk"] = cfg.trunk;
  j["val_every"] = cfg.val_every;
  j["val_stride"] = cfg.val_stride;
  j["augmentations"] = cfg.augmentations;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig cfg;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.steps_per_epoch = j.value("steps_per_epoch", cfg.steps_per_epoch);
    cfg.lr0 = j.value("lr0", cfg.lr0);
    cfg.rsp = j.value("rsp", cfg.rsp);
    cfg.rebalance = j.value("rebalance", cfg.rebalance);
    cfg.mixup = j.value("mixup", cfg.mixup);
    cfg.mixup_alpha = j.value("mixup_alpha", cfg.mixup_alpha);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    if (j.contains("pyramid")) {
      const auto& p = j.at("pyramid");
      cfg.pyramid.input_t = p.value("input_t", cfg.pyramid.input_t);
      cfg.pyramid.input_h = p.value("input_h", cfg.pyramid.input_h);
      cfg.pyramid.input_w = p.value("input_w", cfg.pyramid.input_w);
      cfg.pyramid.c_fine = p.value("c_fine", cfg.pyramid.c_fine);
      cfg.pyramid.c_mid = p.value("c_mid", cfg.pyramid.c_mid);
      cfg.pyramid.c_coarse = p.value("c_coarse", cfg.pyramid.c_coarse);
    }
    if (j.contains("trunk")) {
      const auto trunk = j.at("trunk").get<std::vector<int64_t>>();
      check_contract(trunk.size() == 4, "train config: trunk must have 4 widths");
      std::copy(trunk.begin(), trunk.end(), cfg.trunk.begin());
    }
    cfg.val_every = j.value("val_every", cfg.val_every);
    cfg.val_stride = j.value("val_stride", cfg.val_stride);
    cfg.augmentations = j.value("augmentations", cfg.augmentations);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid train config JSON: ") + e.what());
  }
  return cfg;
}

std::vector<std::vector<std::string>> kfold_groups(std::vector<std::string> group_keys,
                                                   int folds) {
  check_contract(folds > 0, "kfold_groups: folds must be positive");
  std::sort(group_keys.begin(), group_keys.end());
  group_keys.erase(std::unique(group_keys.begin(), group_keys.end()), group_keys.end());
  check_contract(static_cast<int>(group_keys.size()) >= folds,
                 "kfold_groups: fewer groups than folds");
  std::vector<std::vector<std::string>> out(static_cast<size_t>(folds));
  for (size_t i = 0; i < group_keys.size(); ++i) {
    out[i % static_cast<size_t>(folds)].push_back(group_keys[i]);
  }
  return out;
}

std::pair<std::vector<AnnotationTrack>, std::vector<AnnotationTrack>> split_tracks_by_group(
    const std::vector<AnnotationTrack>& tracks, const std::vector<std::string>& held_out_groups) {
  const std::set<std::string> held(held_out_groups.begin(), held_out_groups.end());
  std::pair<std::vector<AnnotationTrack>, std::vector<AnnotationTrack>> out;
  for (const auto& t : tracks) {
    (held.contains(t.video_id) ? out.second : out.first).push_back(t);
  }
  return out;
}

template <typename T>
Trainer<T>::Trainer(TrainConfig cfg, std::vector<AnnotationTrack> tracks,
                    const VideoStore* videos) {
  init(std::move(cfg), std::move(tracks), videos);
  rng_.seed(cfg_.seed);
  model_ = SpottingModel<T>::build(ModelConfig{HeadConfig{cfg_.num_classes, cfg_.pyramid}, cfg_.trunk},
                                   cfg_.seed);
  optimizer_.emplace(model_.params().trainable_params(), cfg_.lr0);
}

template <typename T>
void Trainer<T>::init(TrainConfig cfg, std::vector<AnnotationTrack> tracks,
                      const VideoStore* videos) {
  cfg.validate();
  check_contract(videos != nullptr, "Trainer: video store required");
  cfg_ = std::move(cfg);
  videos_ = videos;
  for (const auto& t : tracks) {
    const VideoFrames& v = videos_->get(t.video_id);
    check_contract(v.height == cfg_.pyramid.input_h && v.width == cfg_.pyramid.input_w,
                   "Trainer: video '" + t.video_id + "' geometry does not match the window spec");
    check_contract(v.num_frames == t.num_frames,
                   "Trainer: annotation/num_frames mismatch for '" + t.video_id + "'");
  }
  sampler_.emplace(std::move(tracks),
                   SamplerConfig{cfg_.rsp, cfg_.pyramid.input_t, cfg_.rebalance},
                   cfg_.num_classes);
  total_steps_ = static_cast<int64_t>(cfg_.epochs) * cfg_.steps_per_epoch;
}

template <typename T>
void Trainer<T>::set_validation(std::vector<AnnotationTrack> val_tracks) {
  val_tracks_ = std::move(val_tracks);
}

template <typename T>
double Trainer<T>::train_step() {
  const HeadConfig& head_cfg = model_.config().head;
  const int64_t window = cfg_.pyramid.input_t;
  const int64_t item = 3 * window * cfg_.pyramid.input_h * cfg_.pyramid.input_w;
  const int batch = cfg_.batch_size;

  std::vector<SampledWindow> windows;
  windows.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) windows.push_back(sampler_->sample(rng_));

  // Raw frame windows, one slot per batch item.
  std::vector<std::vector<T>> raw(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    raw[static_cast<size_t>(i)].resize(static_cast<size_t>(item));
    copy_window(videos_->get(windows[static_cast<size_t>(i)].video_id),
                windows[static_cast<size_t>(i)].start, window,
                std::span<T>(raw[static_cast<size_t>(i)]));
  }

  // Mixup partners and coefficients; identity pairing when disabled.
  std::vector<int> partner(static_cast<size_t>(batch));
  std::iota(partner.begin(), partner.end(), 0);
  std::vector<double> lambdas(static_cast<size_t>(batch), 1.0);
  if (cfg_.mixup) {
    std::shuffle(partner.begin(), partner.end(), rng_);
    for (int i = 0; i < batch; ++i) {
      lambdas[static_cast<size_t>(i)] = sample_mixup_lambda(cfg_.mixup_alpha, rng_);
    }
  }

  Tensor<T> input(Shape{batch, 3, window, cfg_.pyramid.input_h, cfg_.pyramid.input_w});
  auto dst = input.mutable_data();
  BatchTargets targets_a, targets_b;
  std::vector<double> weights_a, weights_b;
  for (int i = 0; i < batch; ++i) {
    const int j = partner[static_cast<size_t>(i)];
    const double lam = lambdas[static_cast<size_t>(i)];
    const T* a = raw[static_cast<size_t>(i)].data();
    const T* b = raw[static_cast<size_t>(j)].data();
    T* out = dst.data() + static_cast<int64_t>(i) * item;
    for (int64_t p = 0; p < item; ++p) {
      out[p] = static_cast<T>(lam * static_cast<double>(a[p]) +
                              (1.0 - lam) * static_cast<double>(b[p]));
    }
    targets_a.append(assign_targets(windows[static_cast<size_t>(i)].annotation, head_cfg));
    targets_b.append(assign_targets(windows[static_cast<size_t>(j)].annotation, head_cfg));
    weights_a.push_back(lam);
    weights_b.push_back(1.0 - lam);
  }

  LevelLogits<T> logits = model_.forward(input, /*training=*/true);
  Tensor<T> loss = add(multi_level_loss(logits, targets_a, weights_a),
                       multi_level_loss(logits, targets_b, weights_b));
  const double loss_value = static_cast<double>(loss.item());
  if (!std::isfinite(loss_value)) {
    throw NumericError("training diverged: non-finite loss at step " +
                       std::to_string(global_step_));
  }

  optimizer_->zero_grad();
  loss.backward();
  optimizer_->set_lr(cosine_lr(global_step_, total_steps_, cfg_.lr0));
  optimizer_->step();
  ++global_step_;
  return loss_value;
}

template <typename T>
EpochStats Trainer<T>::run_epoch() {
  EpochStats stats;
  double total = 0.0;
  for (int s = 0; s < cfg_.steps_per_epoch; ++s) total += train_step();
  ++epoch_;
  stats.epoch = epoch_;
  stats.mean_loss = total / cfg_.steps_per_epoch;
  stats.lr = optimizer_->lr();
  if (cfg_.val_every > 0 && !val_tracks_.empty() && epoch_ % cfg_.val_every == 0) {
    stats.val_f1 = validation_f1();
    stats.has_val_f1 = true;
  }
  return stats;
}

template <typename T>
TrainResult Trainer<T>::run(const std::function<void(const EpochStats&)>& on_epoch) {
  TrainResult result;
  while (epoch_ < cfg_.epochs) {
    EpochStats stats = run_epoch();
    if (on_epoch) on_epoch(stats);
    result.log.push_back(std::move(stats));
  }
  return result;
}

template <typename T>
double Trainer<T>::validation_f1() {
  check_contract(!val_tracks_.empty(), "validation_f1: no validation tracks");
  std::vector<SignInterval> preds, gts;
  for (const auto& t : val_tracks_) {
    const SlideResult<T> slid = slide_video(model_, videos_->get(t.video_id), cfg_.val_stride);
    const FrameProbs fused = slid.fused(kAllLevels);
    for (auto& iv : greedy_intervals(fused, t.video_id)) preds.push_back(std::move(iv));
    gts.insert(gts.end(), t.intervals.begin(), t.intervals.end());
  }
  return evaluate(preds, gts).f1;
}

template <typename T>
void Trainer<T>::save_checkpoint(const std::filesystem::path& path) const {
  CheckpointFile file;
  save_param_store(file, model_.params());
  const auto& m = optimizer_->first_moments();
  const auto& v = optimizer_->second_moments();
  size_t pi = 0;
  for (const auto& e : model_.params().entries()) {
    if (!e.trainable) continue;
    file.add("adam.m." + e.name, e.tensor.shape(),
             std::vector<float>(m[pi].begin(), m[pi].end()));
    file.add("adam.v." + e.name, e.tensor.shape(),
             std::vector<float>(v[pi].begin(), v[pi].end()));
    ++pi;
  }

  file.meta()["model_config"] = model_config_to_json(model_.config());
  file.meta()["train_config"] = train_config_to_json(cfg_);
  std::ostringstream rng_state;
  rng_state << rng_;
  file.meta()["rng_state"] = rng_state.str();
  file.meta()["global_step"] = std::to_string(global_step_);
  file.meta()["epoch"] = std::to_string(epoch_);
  file.meta()["adam_step"] = std::to_string(optimizer_->step_count());
  file.save(path);
}

template <typename T>
Trainer<T> Trainer<T>::resume(const std::filesystem::path& checkpoint,
                              std::vector<AnnotationTrack> tracks, const VideoStore* videos) {
  CheckpointFile file = CheckpointFile::load(checkpoint);
  auto need = [&](const char* key) {
    auto it = file.meta().find(key);
    if (it == file.meta().end()) throw DataError("checkpoint missing meta '" + std::string(key) + "'");
    return it->second;
  };

  Trainer trainer;
  trainer.init(train_config_from_json(need("train_config")), std::move(tracks), videos);
  trainer.model_ = SpottingModel<T>::load(file);
  trainer.optimizer_.emplace(trainer.model_.params().trainable_params(), trainer.cfg_.lr0);

  auto& m = trainer.optimizer_->first_moments();
  auto& v = trainer.optimizer_->second_moments();
  size_t pi = 0;
  for (const auto& e : trainer.model_.params().entries()) {
    if (!e.trainable) continue;
    const auto& rm = file.at("adam.m." + e.name);
    const auto& rv = file.at("adam.v." + e.name);
    m[pi].assign(rm.values.begin(), rm.values.end());
    v[pi].assign(rv.values.begin(), rv.values.end());
    ++pi;
  }
  trainer.optimizer_->set_step_count(std::stoll(need("adam_step")));
  trainer.global_step_ = std::stoll(need("global_step"));
  trainer.epoch_ = std::stoi(need("epoch"));
  std::istringstream rng_state(need("rng_state"));
  rng_state >> trainer.rng_;
  if (!rng_state) throw DataError("checkpoint: invalid rng_state");
  return trainer;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace signspot
