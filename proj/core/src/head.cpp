#include "signspot/head.hpp"

namespace signspot {

const char* level_name(Level level) {
  switch (level) {
    case Level::X4: return "x4";
    case Level::X8: return "x8";
    case Level::X16: return "x16";
    case Level::X32: return "x32";
    case Level::X: return "x";
  }
  throw ContractError("level_name: invalid level");
}

Level parse_level(const std::string& name) {
  for (Level level : kAllLevels) {
    if (name == level_name(level)) return level;
  }
  throw DataError("unknown temporal level '" + name + "' (expected x4, x8, x16, x32 or x)");
}

int64_t HeadConfig::level_t(Level level) const {
  switch (level) {
    case Level::X4: return pyramid.input_t / 8;
    case Level::X8: return pyramid.input_t / 4;
    case Level::X16: return pyramid.input_t / 2;
    case Level::X32:
    case Level::X: return pyramid.input_t;
  }
  throw ContractError("level_t: invalid level");
}

void HeadConfig::validate() const {
  check_contract(num_classes > 0, "HeadConfig: num_classes must be positive");
  pyramid.validate();
}

template <typename T>
DownPoolBlock<T>::DownPoolBlock(ParamStore<T>& store, const std::string& name, int64_t in_channels,
                                int64_t spatial_stride, std::mt19937_64& rng) {
  check_contract(in_channels % 2 == 0,
                 name + ": cannot halve odd channel count " + std::to_string(in_channels));
  const int64_t half = in_channels / 2;
  const Stride3 strided{1, spatial_stride, spatial_stride};
  conv1 = Conv3dLayer<T>(store, name + ".conv1", in_channels, half, {1, 3, 3}, strided,
                         Pad3{0, 1, 1}, false, rng);
  bn1 = BatchNormLayer<T>(store, name + ".bn1", half);
  conv2 = Conv3dLayer<T>(store, name + ".conv2", half, half, {1, 3, 3}, Stride3{}, Pad3{0, 1, 1},
                         false, rng);
  bn2 = BatchNormLayer<T>(store, name + ".bn2", half);
  shortcut = Conv3dLayer<T>(store, name + ".shortcut", in_channels, half, {1, 1, 1}, strided,
                            Pad3{}, false, rng);
  bn_shortcut = BatchNormLayer<T>(store, name + ".bn_shortcut", half);
}

template <typename T>
Tensor<T> DownPoolBlock<T>::forward(const Tensor<T>& x, bool training) {
  Tensor<T> main = swish(bn1.forward(conv1.forward(x), training));
  main = bn2.forward(conv2.forward(main), training);
  Tensor<T> skip = bn_shortcut.forward(shortcut.forward(x), training);
  return global_avg_pool_spatial(swish(main + skip));
}

template <typename T>
MergeBlock<T>::MergeBlock(ParamStore<T>& store, const std::string& name, int64_t cat_channels,
                          int64_t merged_channels, std::mt19937_64& rng)
    : out_channels(merged_channels) {
  conv1 = Conv3dLayer<T>(store, name + ".conv1", cat_channels, cat_channels, {1, 1, 1}, Stride3{},
                         Pad3{}, false, rng);
  bn1 = BatchNormLayer<T>(store, name + ".bn1", cat_channels);
  conv2 = Conv3dLayer<T>(store, name + ".conv2", cat_channels, merged_channels, {1, 1, 1},
                         Stride3{}, Pad3{}, false, rng);
  bn2 = BatchNormLayer<T>(store, name + ".bn2", merged_channels);
}

template <typename T>
Tensor<T> MergeBlock<T>::forward(const Tensor<T>& x, bool training) {
  Tensor<T> y = swish(bn1.forward(conv1.forward(x), training));
  return swish(bn2.forward(conv2.forward(y), training));
}

template <typename T>
HierarchicalHead<T>::HierarchicalHead(const HeadConfig& cfg, ParamStore<T>& store,
                                      std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg.validate();
  const PyramidSpec& pyr = cfg.pyramid;
  const int64_t logits = cfg.logit_channels();

  // Channel flow. MERGE output is twice the smaller channel count that
  // entered the CAT, which reproduces the pyramid widths 832 and 480 in
  // the paper configuration.
  const int64_t p4_c = pyr.c_coarse;
  up8_ = UpLayer<T>(store, "head.up8", p4_c, rng);
  down8_ = DownPoolBlock<T>(store, "head.down8", pyr.c_mid, 2, rng);
  const int64_t u8_c = p4_c / 2;
  const int64_t d8_c = pyr.c_mid / 2;
  const int64_t m8_c = 2 * std::min(u8_c, d8_c);
  merge8_ = MergeBlock<T>(store, "head.merge8", u8_c + d8_c, m8_c, rng);

  up16_ = UpLayer<T>(store, "head.up16", m8_c, rng);
  down16_ = DownPoolBlock<T>(store, "head.down16", pyr.c_fine, 4, rng);
  const int64_t u16_c = m8_c / 2;
  const int64_t d16_c = pyr.c_fine / 2;
  const int64_t m16_c = 2 * std::min(u16_c, d16_c);
  merge16_ = MergeBlock<T>(store, "head.merge16", u16_c + d16_c, m16_c, rng);

  up32_ = UpLayer<T>(store, "head.up32", m16_c, rng);
  const int64_t u32_c = m16_c / 2;
  conv32_ = Conv3dLayer<T>(store, "head.conv32", u32_c, u32_c, {1, 1, 1}, Stride3{}, Pad3{}, true,
                           rng);

  cat_x_channels_ = p4_c + m8_c + m16_c + u32_c;
  if (pyr.c_fine == 480 && pyr.c_mid == 832 && pyr.c_coarse == 1024) {
    check_contract(m8_c == 832 && m16_c == 480 && cat_x_channels_ == 2576,
                   "head: channel arithmetic does not reproduce the reference configuration");
  }

  fc_x4_ = FcLayer<T>(store, "head.fc_x4", p4_c, logits, rng);
  fc_x8_ = FcLayer<T>(store, "head.fc_x8", m8_c, logits, rng);
  fc_x16_ = FcLayer<T>(store, "head.fc_x16", m16_c, logits, rng);
  fc_x32_ = FcLayer<T>(store, "head.fc_x32", u32_c, logits, rng);
  fc_x_ = FcLayer<T>(store, "head.fc_x", cat_x_channels_, logits, rng);
}

template <typename T>
LevelLogits<T> HierarchicalHead<T>::forward(const FeaturePyramid<T>& pyramid, bool training) {
  validate_pyramid(pyramid, cfg_.pyramid);
  const int64_t batch = pyramid.coarse.dim(0);
  const int64_t window_t = cfg_.pyramid.input_t;
  const int64_t logits = cfg_.logit_channels();

  auto to_level_logits = [&](const Tensor<T>& t5, Level level) {
    return reshape(t5, Shape{batch, logits, cfg_.level_t(level)});
  };

  Tensor<T> p4 = global_avg_pool_spatial(pyramid.coarse);

  Tensor<T> u8 = up8_.forward(p4);
  Tensor<T> d8 = down8_.forward(pyramid.mid, training);
  Tensor<T> m8 = merge8_.forward(concat_channels<T>({u8, d8}), training);

  Tensor<T> u16 = up16_.forward(m8);
  Tensor<T> d16 = down16_.forward(pyramid.fine, training);
  Tensor<T> m16 = merge16_.forward(concat_channels<T>({u16, d16}), training);

  Tensor<T> u32 = conv32_.forward(up32_.forward(m16));

  Tensor<T> cat_x = concat_channels<T>({nearest_interp_temporal(p4, window_t),
                                        nearest_interp_temporal(m8, window_t),
                                        nearest_interp_temporal(m16, window_t),
                                        nearest_interp_temporal(u32, window_t)});

  LevelLogits<T> out;
  out.at(Level::X4) = to_level_logits(fc_x4_.forward(p4), Level::X4);
  out.at(Level::X8) = to_level_logits(fc_x8_.forward(m8), Level::X8);
  out.at(Level::X16) = to_level_logits(fc_x16_.forward(m16), Level::X16);
  out.at(Level::X32) = to_level_logits(fc_x32_.forward(u32), Level::X32);
  out.at(Level::X) = to_level_logits(fc_x_.forward(cat_x), Level::X);
  return out;
}

template class HierarchicalHead<float>;
template class HierarchicalHead<double>;
template struct DownPoolBlock<float>;
template struct DownPoolBlock<double>;
template struct MergeBlock<float>;
template struct MergeBlock<double>;

}  // namespace signspot
