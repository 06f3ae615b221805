#pragma once

#include <array>
#include <random>
#include <string>

#include "signspot/backbone.hpp"
#include "signspot/layers.hpp"

namespace signspot {

// Temporal prediction levels: xK emits K predictions per paper-scale
// 32-frame window; x is the combined level at full frame rate.
enum class Level { X4 = 0, X8 = 1, X16 = 2, X32 = 3, X = 4 };

inline constexpr std::array<Level, 5> kAllLevels{Level::X4, Level::X8, Level::X16, Level::X32,
                                                 Level::X};
const char* level_name(Level level);
Level parse_level(const std::string& name);  // DataError on unknown names

struct HeadConfig {
  int num_classes = 60;  // sign classes; background is appended at index num_classes
  PyramidSpec pyramid;

  int64_t logit_channels() const { return num_classes + 1; }
  int background_index() const { return num_classes; }
  // Temporal extent of a level's logits for this window geometry.
  int64_t level_t(Level level) const;
  // Frames covered by one prediction cell of a level.
  int64_t level_stride(Level level) const { return pyramid.input_t / level_t(level); }

  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

// Per-level class score maps, each [N, C+1, T_level].
template <typename T>
struct LevelLogits {
  std::array<Tensor<T>, 5> levels;

  Tensor<T>& at(Level level) { return levels[static_cast<size_t>(level)]; }
  const Tensor<T>& at(Level level) const { return levels[static_cast<size_t>(level)]; }
};

// Residual reduction of one pyramid feature: channels halved, temporal
// kept, spatial brought to the coarse grid and then pooled to 1x1.
template <typename T>
struct DownPoolBlock {
  Conv3dLayer<T> conv1, conv2, shortcut;
  BatchNormLayer<T> bn1, bn2, bn_shortcut;

  DownPoolBlock() = default;
  DownPoolBlock(ParamStore<T>& store, const std::string& name, int64_t in_channels,
                int64_t spatial_stride, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);
};

// Two pointwise conv+BN+swish stages; the second maps to twice the
// smaller of the two channel counts that entered the preceding CAT.
template <typename T>
struct MergeBlock {
  Conv3dLayer<T> conv1, conv2;
  BatchNormLayer<T> bn1, bn2;
  int64_t out_channels = 0;

  MergeBlock() = default;
  MergeBlock(ParamStore<T>& store, const std::string& name, int64_t cat_channels,
             int64_t merged_channels, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);
};

// Hierarchical head: fuses the pyramid bottom-up in time and emits class
// logits at five temporal levels.
template <typename T>
class HierarchicalHead {
 public:
  HierarchicalHead() = default;
  HierarchicalHead(const HeadConfig& cfg, ParamStore<T>& store, std::mt19937_64& rng);

  LevelLogits<T> forward(const FeaturePyramid<T>& pyramid, bool training);

  const HeadConfig& config() const { return cfg_; }
  // Channel count entering the combined-level FC (2576 for the paper
  // configuration).
  int64_t combined_cat_channels() const { return cat_x_channels_; }

 private:
  HeadConfig cfg_;
  int64_t cat_x_channels_ = 0;
  UpLayer<T> up8_, up16_, up32_;
  DownPoolBlock<T> down8_, down16_;
  MergeBlock<T> merge8_, merge16_;
  Conv3dLayer<T> conv32_;
  FcLayer<T> fc_x4_, fc_x8_, fc_x16_, fc_x32_, fc_x_;
};

extern template class HierarchicalHead<float>;
extern template class HierarchicalHead<double>;

}  // namespace signspot
