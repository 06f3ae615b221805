#include "signspot/backbone.hpp"

#include "signspot/checkpoint.hpp"

namespace signspot {

void PyramidSpec::validate() const {
  check_contract(input_t > 0 && input_t % 8 == 0,
                 "PyramidSpec: input_t must be a positive multiple of 8, got " + std::to_string(input_t));
  check_contract(input_h > 0 && input_h % 32 == 0,
                 "PyramidSpec: input_h must be a positive multiple of 32, got " + std::to_string(input_h));
  check_contract(input_w > 0 && input_w % 32 == 0,
                 "PyramidSpec: input_w must be a positive multiple of 32, got " + std::to_string(input_w));
  check_contract(c_fine > 0 && c_mid > 0 && c_coarse > 0, "PyramidSpec: channels must be positive");
  check_contract(c_fine % 2 == 0 && c_mid % 2 == 0 && c_coarse % 2 == 0,
                 "PyramidSpec: channels must be even (the head halves them)");
}

template <typename T>
MiniBackbone<T>::MiniBackbone(const PyramidSpec& spec, std::array<int64_t, 4> trunk_widths,
                              ParamStore<T>& store, std::mt19937_64& rng)
    : spec_(spec), trunk_widths_(trunk_widths) {
  spec.validate();
  for (int64_t w : trunk_widths) check_contract(w > 0, "MiniBackbone: trunk widths must be positive");
  const auto [w1, w2, w3, w4] = trunk_widths;

  // Stem: T preserved, H,W divided by 4. Remaining stages halve T and H,W,
  // so the taps land on the /2,/8 - /4,/16 - /8,/32 grid.
  stem_conv_ = Conv3dLayer<T>(store, "backbone.stem.conv", 3, w1, {3, 5, 5},
                              Stride3{1, 4, 4}, Pad3{1, 2, 2}, false, rng);
  stem_bn_ = BatchNormLayer<T>(store, "backbone.stem.bn", w1);
  stage2_conv_ = Conv3dLayer<T>(store, "backbone.stage2.conv", w1, w2, {3, 3, 3},
                                Stride3{2, 2, 2}, Pad3{1, 1, 1}, false, rng);
  stage2_bn_ = BatchNormLayer<T>(store, "backbone.stage2.bn", w2);
  stage3_conv_ = Conv3dLayer<T>(store, "backbone.stage3.conv", w2, w3, {3, 3, 3},
                                Stride3{2, 2, 2}, Pad3{1, 1, 1}, false, rng);
  stage3_bn_ = BatchNormLayer<T>(store, "backbone.stage3.bn", w3);
  stage4_conv_ = Conv3dLayer<T>(store, "backbone.stage4.conv", w3, w4, {3, 3, 3},
                                Stride3{2, 2, 2}, Pad3{1, 1, 1}, false, rng);
  stage4_bn_ = BatchNormLayer<T>(store, "backbone.stage4.bn", w4);

  proj_fine_ = Conv3dLayer<T>(store, "backbone.proj_fine.conv", w2, spec.c_fine, {1, 1, 1},
                              Stride3{}, Pad3{}, false, rng);
  proj_fine_bn_ = BatchNormLayer<T>(store, "backbone.proj_fine.bn", spec.c_fine);
  proj_mid_ = Conv3dLayer<T>(store, "backbone.proj_mid.conv", w3, spec.c_mid, {1, 1, 1},
                             Stride3{}, Pad3{}, false, rng);
  proj_mid_bn_ = BatchNormLayer<T>(store, "backbone.proj_mid.bn", spec.c_mid);
  proj_coarse_ = Conv3dLayer<T>(store, "backbone.proj_coarse.conv", w4, spec.c_coarse, {1, 1, 1},
                                Stride3{}, Pad3{}, false, rng);
  proj_coarse_bn_ = BatchNormLayer<T>(store, "backbone.proj_coarse.bn", spec.c_coarse);
}

template <typename T>
FeaturePyramid<T> MiniBackbone<T>::forward(const Tensor<T>& frames, bool training) {
  check_contract(frames.ndim() == 5 && frames.dim(1) == 3,
                 "MiniBackbone: frames must be [N,3,T,H,W], got " + frames.shape().str());
  check_contract(frames.dim(2) == spec_.input_t && frames.dim(3) == spec_.input_h &&
                     frames.dim(4) == spec_.input_w,
                 "MiniBackbone: frame geometry " + frames.shape().str() +
                     " does not match the pyramid spec");

  Tensor<T> x = swish(stem_bn_.forward(stem_conv_.forward(frames), training));
  Tensor<T> s2 = swish(stage2_bn_.forward(stage2_conv_.forward(x), training));
  Tensor<T> s3 = swish(stage3_bn_.forward(stage3_conv_.forward(s2), training));
  Tensor<T> s4 = swish(stage4_bn_.forward(stage4_conv_.forward(s3), training));

  FeaturePyramid<T> pyramid;
  pyramid.fine = swish(proj_fine_bn_.forward(proj_fine_.forward(s2), training));
  pyramid.mid = swish(proj_mid_bn_.forward(proj_mid_.forward(s3), training));
  pyramid.coarse = swish(proj_coarse_bn_.forward(proj_coarse_.forward(s4), training));
  validate_pyramid(pyramid, spec_);
  return pyramid;
}

template <typename T>
void validate_pyramid(const FeaturePyramid<T>& pyramid, const PyramidSpec& spec) {
  const int64_t batch = pyramid.fine.dim(0);
  check_contract(pyramid.fine.shape() == spec.fine_shape(batch),
                 "pyramid: fine shape " + pyramid.fine.shape().str() + " != expected " +
                     spec.fine_shape(batch).str());
  check_contract(pyramid.mid.shape() == spec.mid_shape(batch),
                 "pyramid: mid shape " + pyramid.mid.shape().str() + " != expected " +
                     spec.mid_shape(batch).str());
  check_contract(pyramid.coarse.shape() == spec.coarse_shape(batch),
                 "pyramid: coarse shape " + pyramid.coarse.shape().str() + " != expected " +
                     spec.coarse_shape(batch).str());
}

template <typename T>
FeaturePyramid<T> load_feature_pyramid(const std::filesystem::path& path,
                                       const PyramidSpec& spec) {
  CheckpointFile file = CheckpointFile::load(path);
  FeaturePyramid<T> pyramid;
  pyramid.fine = file.tensor<T>("fine");
  pyramid.mid = file.tensor<T>("mid");
  pyramid.coarse = file.tensor<T>("coarse");
  check_contract(pyramid.fine.ndim() == 5, "feature file: fine must be 5-dimensional");
  validate_pyramid(pyramid, spec);
  return pyramid;
}

template <typename T>
void save_feature_pyramid(const std::filesystem::path& path, const FeaturePyramid<T>& pyramid) {
  CheckpointFile file;
  file.add_tensor("fine", pyramid.fine);
  file.add_tensor("mid", pyramid.mid);
  file.add_tensor("coarse", pyramid.coarse);
  file.save(path);
}

template class MiniBackbone<float>;
template class MiniBackbone<double>;
template void validate_pyramid<float>(const FeaturePyramid<float>&, const PyramidSpec&);
template void validate_pyramid<double>(const FeaturePyramid<double>&, const PyramidSpec&);
template FeaturePyramid<float> load_feature_pyramid<float>(const std::filesystem::path&, const PyramidSpec&);
template FeaturePyramid<double> load_feature_pyramid<double>(const std::filesystem::path&, const PyramidSpec&);
template void save_feature_pyramid<float>(const std::filesystem::path&, const FeaturePyramid<float>&);
template void save_feature_pyramid<double>(const std::filesystem::path&, const FeaturePyramid<double>&);

}  // namespace signspot
