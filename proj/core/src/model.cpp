#include "signspot/model.hpp"

#include <json.hpp>

namespace signspot {

std::string model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["num_classes"] = cfg.head.num_classes;
  j["pyramid"] = {{"input_t", cfg.head.pyramid.input_t},   {"input_h", cfg.head.pyramid.input_h},
                  {"input_w", cfg.head.pyramid.input_w},   {"c_fine", cfg.head.pyramid.c_fine},
                  {"c_mid", cfg.head.pyramid.c_mid},       {"c_coarse", cfg.head.pyramid.c_coarse}};
  j["trunk"] = cfg.trunk;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig cfg;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    cfg.head.num_classes = j.at("num_classes").get<int>();
    const auto& p = j.at("pyramid");
    cfg.head.pyramid.input_t = p.at("input_t").get<int64_t>();
    cfg.head.pyramid.input_h = p.at("input_h").get<int64_t>();
    cfg.head.pyramid.input_w = p.at("input_w").get<int64_t>();
    cfg.head.pyramid.c_fine = p.at("c_fine").get<int64_t>();
    cfg.head.pyramid.c_mid = p.at("c_mid").get<int64_t>();
    cfg.head.pyramid.c_coarse = p.at("c_coarse").get<int64_t>();
    const auto trunk = j.at("trunk").get<std::vector<int64_t>>();
    check_contract(trunk.size() == 4, "model config: trunk must have 4 widths");
    std::copy(trunk.begin(), trunk.end(), cfg.trunk.begin());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid model config JSON: ") + e.what());
  }
  return cfg;
}

template <typename T>
SpottingModel<T> SpottingModel<T>::build(const ModelConfig& cfg, uint64_t seed) {
  cfg.head.validate();
  SpottingModel model;
  model.cfg_ = cfg;
  std::mt19937_64 rng(seed);
  model.backbone_ = MiniBackbone<T>(cfg.head.pyramid, cfg.trunk, model.store_, rng);
  model.head_ = HierarchicalHead<T>(cfg.head, model.store_, rng);
  return model;
}

template <typename T>
LevelLogits<T> SpottingModel<T>::forward(const Tensor<T>& frames, bool training) {
  FeaturePyramid<T> pyramid = backbone_.forward(frames, training);
  return head_.forward(pyramid, training);
}

template <typename T>
void SpottingModel<T>::save(const std::filesystem::path& path,
                            const std::map<std::string, std::string>& extra_meta) const {
  CheckpointFile file;
  save_param_store(file, store_);
  file.meta()["model_config"] = model_config_to_json(cfg_);
  for (const auto& [k, v] : extra_meta) file.meta()[k] = v;
  file.save(path);
}

template <typename T>
SpottingModel<T> SpottingModel<T>::load(const std::filesystem::path& path,
                                        std::map<std::string, std::string>* meta_out) {
  CheckpointFile file = CheckpointFile::load(path);
  if (meta_out) *meta_out = file.meta();
  return load(file);
}

template <typename T>
SpottingModel<T> SpottingModel<T>::load(const CheckpointFile& file) {
  auto it = file.meta().find("model_config");
  if (it == file.meta().end()) throw DataError("checkpoint has no model_config meta entry");
  SpottingModel model = build(model_config_from_json(it->second), /*seed=*/0);
  load_param_store(file, model.store_);
  return model;
}

template class SpottingModel<float>;
template class SpottingModel<double>;

}  // namespace signspot
