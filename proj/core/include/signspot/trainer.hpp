#pragma once

#include <functional>
#include <optional>

#include "signspot/decoder.hpp"
#include "signspot/metric.hpp"
#include "signspot/model.hpp"
#include "signspot/optim.hpp"
#include "signspot/sampler.hpp"
#include "signspot/synth.hpp"

namespace signspot {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 8;
  int steps_per_epoch = 25;
  double lr0 = 3e-4;
  double rsp = 0.1;
  bool rebalance = true;
  bool mixup = true;
  double mixup_alpha = 1.0;
  uint64_t seed = 0;
  int num_classes = 60;
  PyramidSpec pyramid;  // window geometry and pyramid channels
  std::array<int64_t, 4> trunk = kDefaultTrunkWidths;
  int val_every = 0;       // epochs between validation F1 runs; 0 = never
  int64_t val_stride = 1;  // sliding-window stride for validation
  // The reference recipe lists photometric/geometric augmentations
  // without parameters; hooks only, any entry is rejected.
  std::vector<std::string> augmentations;

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double val_f1 = 0.0;
  bool has_val_f1 = false;
};

struct TrainResult {
  std::vector<EpochStats> log;
};

// Deterministic k-fold split over sorted group keys (round-robin).
std::vector<std::vector<std::string>> kfold_groups(std::vector<std::string> group_keys, int folds);
// Partition of tracks into (train, held_out) by video id membership.
std::pair<std::vector<AnnotationTrack>, std::vector<AnnotationTrack>> split_tracks_by_group(
    const std::vector<AnnotationTrack>& tracks, const std::vector<std::string>& held_out_groups);

// End-to-end training loop: window sampling, mixup, multi-level loss,
// Adam with cosine decay, checkpointing with full resume state.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<AnnotationTrack> tracks, const VideoStore* videos);

  // Restores model, optimizer state, RNG and step counters from a
  // checkpoint written by save_checkpoint.
  static Trainer resume(const std::filesystem::path& checkpoint,
                        std::vector<AnnotationTrack> tracks, const VideoStore* videos);

  void set_validation(std::vector<AnnotationTrack> val_tracks);

  // Runs the remaining epoch budget; the callback fires per epoch.
  TrainResult run(const std::function<void(const EpochStats&)>& on_epoch = {});
  EpochStats run_epoch();
  double train_step();

  SpottingModel<T>& model() { return model_; }
  int epochs_done() const { return epoch_; }
  void save_checkpoint(const std::filesystem::path& path) const;

  double validation_f1();

 private:
  Trainer() = default;
  void init(TrainConfig cfg, std::vector<AnnotationTrack> tracks, const VideoStore* videos);

  TrainConfig cfg_;
  const VideoStore* videos_ = nullptr;
  std::optional<WindowSampler> sampler_;
  std::vector<AnnotationTrack> val_tracks_;
  SpottingModel<T> model_;
  std::optional<Adam<T>> optimizer_;
  std::mt19937_64 rng_;
  int64_t global_step_ = 0;
  int64_t total_steps_ = 0;
  int epoch_ = 0;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace signspot
