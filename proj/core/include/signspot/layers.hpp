#pragma once

#include <array>
#include <random>
#include <string>

#include "signspot/ops.hpp"
#include "signspot/params.hpp"

namespace signspot {

// Parameterized 3D convolution. Convolutions followed by batch norm are
// built without bias.
template <typename T>
struct Conv3dLayer {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when the layer has none
  Stride3 stride;
  Pad3 padding;

  Conv3dLayer() = default;
  Conv3dLayer(ParamStore<T>& store, const std::string& name, int64_t in_channels,
              int64_t out_channels, std::array<int64_t, 3> kernel, Stride3 stride_, Pad3 padding_,
              bool with_bias, std::mt19937_64& rng) {
    stride = stride_;
    padding = padding_;
    const int64_t fan_in = in_channels * kernel[0] * kernel[1] * kernel[2];
    weight = store.add_param(
        name + ".weight",
        uniform_fan_in<T>(Shape{out_channels, in_channels, kernel[0], kernel[1], kernel[2]},
                          fan_in, rng));
    if (with_bias) {
      bias = store.add_param(name + ".bias", uniform_fan_in<T>(Shape{out_channels}, fan_in, rng));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv3d(x, weight, bias, stride, padding); }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> scale, shift, running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNormLayer() = default;
  BatchNormLayer(ParamStore<T>& store, const std::string& name, int64_t channels) {
    scale = store.add_param(name + ".scale", Tensor<T>(Shape{channels}, T(1)));
    shift = store.add_param(name + ".shift", Tensor<T>(Shape{channels}, T(0)));
    running_mean = store.add_buffer(name + ".running_mean", Tensor<T>(Shape{channels}, T(0)));
    running_var = store.add_buffer(name + ".running_var", Tensor<T>(Shape{channels}, T(1)));
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return batch_norm(x, scale, shift, running_mean, running_var, training, momentum, epsilon);
  }
};

// Affine map along the channel axis, applied at every temporal position.
template <typename T>
struct FcLayer {
  Tensor<T> weight;  // [C_out, C_in]
  Tensor<T> bias;    // [C_out]

  FcLayer() = default;
  FcLayer(ParamStore<T>& store, const std::string& name, int64_t in_channels,
          int64_t out_channels, std::mt19937_64& rng) {
    weight = store.add_param(name + ".weight",
                             uniform_fan_in<T>(Shape{out_channels, in_channels}, in_channels, rng));
    bias = store.add_param(name + ".bias", uniform_fan_in<T>(Shape{out_channels}, in_channels, rng));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return fully_connected(x, weight, bias); }
};

// Temporal upsampling: transpose convolution doubling T and halving C.
template <typename T>
struct UpLayer {
  Tensor<T> weight;  // [C, C/2, 2, 1, 1]

  UpLayer() = default;
  UpLayer(ParamStore<T>& store, const std::string& name, int64_t in_channels,
          std::mt19937_64& rng) {
    check_contract(in_channels % 2 == 0,
                   name + ": cannot halve odd channel count " + std::to_string(in_channels));
    weight = store.add_param(
        name + ".weight",
        uniform_fan_in<T>(Shape{in_channels, in_channels / 2, 2, 1, 1}, in_channels, rng));
  }

  int64_t out_channels() const { return weight.dim(1); }
  Tensor<T> forward(const Tensor<T>& x) const { return transpose_conv3d_temporal(x, weight); }
};

}  // namespace signspot
