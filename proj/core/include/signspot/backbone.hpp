#pragma once

#include <array>
#include <filesystem>
#include <random>

#include "signspot/layers.hpp"

namespace signspot {

// Geometry and channel contract of the three-level feature pyramid.
// Temporal extents are input_t/{2,4,8}, spatial extents input/{8,16,32}.
struct PyramidSpec {
  int64_t input_t = 32;
  int64_t input_h = 224;
  int64_t input_w = 224;
  int64_t c_fine = 480;
  int64_t c_mid = 832;
  int64_t c_coarse = 1024;

  void validate() const;

  Shape fine_shape(int64_t batch) const { return Shape{batch, c_fine, input_t / 2, input_h / 8, input_w / 8}; }
  Shape mid_shape(int64_t batch) const { return Shape{batch, c_mid, input_t / 4, input_h / 16, input_w / 16}; }
  Shape coarse_shape(int64_t batch) const { return Shape{batch, c_coarse, input_t / 8, input_h / 32, input_w / 32}; }

  bool operator==(const PyramidSpec&) const = default;
};

template <typename T>
struct FeaturePyramid {
  Tensor<T> fine;    // [N, c_fine,   T/2, H/8,  W/8 ]
  Tensor<T> mid;     // [N, c_mid,    T/4, H/16, W/16]
  Tensor<T> coarse;  // [N, c_coarse, T/8, H/32, W/32]
};

// Default trunk widths of the miniature backbone (stem + 3 downsampling
// stages). Pyramid channels are reached through 1x1x1 projections at the
// taps, which keeps the paper-scale channel widths off the 3x3x3 trunk.
inline constexpr std::array<int64_t, 4> kDefaultTrunkWidths{12, 24, 40, 64};

// Miniature trainable 3D CNN standing in for the pretrained backbone:
// a strided stem, three strided conv stages, and per-tap projections to
// the pyramid channel contract. Only the output shape contract mirrors
// the original network.
template <typename T>
class MiniBackbone {
 public:
  MiniBackbone() = default;
  MiniBackbone(const PyramidSpec& spec, std::array<int64_t, 4> trunk_widths,
               ParamStore<T>& store, std::mt19937_64& rng);

  FeaturePyramid<T> forward(const Tensor<T>& frames, bool training);

  const PyramidSpec& spec() const { return spec_; }
  const std::array<int64_t, 4>& trunk_widths() const { return trunk_widths_; }

 private:
  PyramidSpec spec_;
  std::array<int64_t, 4> trunk_widths_{};
  Conv3dLayer<T> stem_conv_, stage2_conv_, stage3_conv_, stage4_conv_;
  BatchNormLayer<T> stem_bn_, stage2_bn_, stage3_bn_, stage4_bn_;
  Conv3dLayer<T> proj_fine_, proj_mid_, proj_coarse_;
  BatchNormLayer<T> proj_fine_bn_, proj_mid_bn_, proj_coarse_bn_;
};

// Validates a loaded pyramid against the spec (any batch size).
template <typename T>
void validate_pyramid(const FeaturePyramid<T>& pyramid, const PyramidSpec& spec);

// Feature-file ingestion via the checkpoint container (entries "fine",
// "mid", "coarse").
template <typename T>
FeaturePyramid<T> load_feature_pyramid(const std::filesystem::path& path, const PyramidSpec& spec);
template <typename T>
void save_feature_pyramid(const std::filesystem::path& path, const FeaturePyramid<T>& pyramid);

extern template class MiniBackbone<float>;
extern template class MiniBackbone<double>;

}  // namespace signspot
