#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "signspot/tensor.hpp"

namespace signspot {

struct Stride3 {
  int64_t t = 1, h = 1, w = 1;
};

struct Pad3 {
  int64_t t = 0, h = 0, w = 0;
};

// 3D convolution over [N,C,T,H,W] with weight [K,C,kt,kh,kw], optional
// bias [K], zero padding. Output extents follow the usual floor formula.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Stride3 stride = {}, Pad3 padding = {});

// Temporal transpose convolution with fixed kernel (2,1,1) and stride
// (2,1,1): doubles T, maps C input channels to K via weight [C,K,2,1,1].
// Each input step feeds exactly two adjacent output steps.
template <typename T>
Tensor<T> transpose_conv3d_temporal(const Tensor<T>& input, const Tensor<T>& weight);

// Mean over the H,W plane: [N,C,T,H,W] -> [N,C,T,1,1].
template <typename T>
Tensor<T> global_avg_pool_spatial(const Tensor<T>& input);

// Batch normalization over all axes except channel (axis 1). Train mode
// normalizes with biased batch statistics and updates the running
// buffers in place; eval mode uses the running buffers.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum = 0.1, double epsilon = 1e-5);

// x * sigmoid(x), elementwise.
template <typename T>
Tensor<T> swish(const Tensor<T>& input);

// Concatenates along the channel axis (axis 1); all other extents must match.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs);

// Nearest-neighbour resize of the temporal axis: output step t reads
// input step floor(t*T/target_t).
template <typename T>
Tensor<T> nearest_interp_temporal(const Tensor<T>& input, int64_t target_t);

// Affine map along the channel axis at every remaining position:
// [N,C_in,...] with weight [C_out,C_in], bias [C_out] -> [N,C_out,...].
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias);

// Softmax along axis 1, computed with max subtraction.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input);

// Mean negative log softmax probability of the targets over all
// (batch, position) cells of logits [N,K,R...]. Optional per-sample
// weights scale each batch item's cells; the normalizer stays N*R so
// that weights summing to 1 across mixed targets keep mean semantics.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                        const std::vector<double>& sample_weights = {});

// Elementwise helpers used to assemble losses and residual blocks.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
// Scalar dot product with a fixed coefficient vector; handy for seeding
// gradient checks with a non-uniform direction.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& a, std::span<const double> coeffs);
// Same data, new shape (numel must match).
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, double factor) { return scale(a, factor); }
template <typename T>
Tensor<T> operator*(double factor, const Tensor<T>& a) { return scale(a, factor); }

}  // namespace signspot
