#pragma once

#include <filesystem>
#include <map>

#include "signspot/backbone.hpp"
#include "signspot/checkpoint.hpp"
#include "signspot/head.hpp"

namespace signspot {

struct ModelConfig {
  HeadConfig head;
  std::array<int64_t, 4> trunk = kDefaultTrunkWidths;

  bool operator==(const ModelConfig&) const = default;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Backbone plus hierarchical head with a shared parameter store.
// Checkpoints are self-describing: the container's meta carries the
// model configuration.
template <typename T>
class SpottingModel {
 public:
  SpottingModel() = default;
  SpottingModel(const SpottingModel&) = delete;
  SpottingModel& operator=(const SpottingModel&) = delete;
  SpottingModel(SpottingModel&&) = default;
  SpottingModel& operator=(SpottingModel&&) = default;

  static SpottingModel build(const ModelConfig& cfg, uint64_t seed);

  LevelLogits<T> forward(const Tensor<T>& frames, bool training);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  void save(const std::filesystem::path& path,
            const std::map<std::string, std::string>& extra_meta = {}) const;
  static SpottingModel load(const std::filesystem::path& path,
                            std::map<std::string, std::string>* meta_out = nullptr);
  static SpottingModel load(const CheckpointFile& file);

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  MiniBackbone<T> backbone_;
  HierarchicalHead<T> head_;
};

extern template class SpottingModel<float>;
extern template class SpottingModel<double>;

}  // namespace signspot
