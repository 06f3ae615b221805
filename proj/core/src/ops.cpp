#include "signspot/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "signspot/parallel.hpp"

namespace signspot {

namespace {

template <typename T>
using Node = detail::TensorNode<T>;

// Adds a double accumulation buffer into a typed grad span.
template <typename T>
void add_into(std::span<T> dst, const std::vector<double>& src, int64_t offset = 0) {
  for (size_t i = 0; i < src.size(); ++i) {
    dst[static_cast<size_t>(offset) + i] += static_cast<T>(src[i]);
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ConvDims {
  int64_t n, ci, t, h, w;      // input
  int64_t k, kt, kh, kw;       // weight
  int64_t ot, oh, ow;          // output
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& weight, Stride3 stride,
                   Pad3 pad) {
  check_contract(input.ndim() == 5, "conv3d: input must be [N,C,T,H,W], got " + input.shape().str());
  check_contract(weight.ndim() == 5, "conv3d: weight must be [K,C,kt,kh,kw], got " + weight.shape().str());
  ConvDims d{};
  d.n = input.dim(0);
  d.ci = input.dim(1);
  d.t = input.dim(2);
  d.h = input.dim(3);
  d.w = input.dim(4);
  d.k = weight.dim(0);
  d.kt = weight.dim(2);
  d.kh = weight.dim(3);
  d.kw = weight.dim(4);
  check_contract(weight.dim(1) == d.ci, "conv3d: weight channels " + std::to_string(weight.dim(1)) +
                                            " do not match input channels " + std::to_string(d.ci));
  check_contract(stride.t >= 1 && stride.h >= 1 && stride.w >= 1, "conv3d: stride components must be >= 1");
  check_contract(pad.t >= 0 && pad.h >= 0 && pad.w >= 0, "conv3d: padding must be >= 0");
  check_contract(d.kt <= d.t + 2 * pad.t && d.kh <= d.h + 2 * pad.h && d.kw <= d.w + 2 * pad.w,
                 "conv3d: kernel larger than padded input");
  d.ot = (d.t + 2 * pad.t - d.kt) / stride.t + 1;
  d.oh = (d.h + 2 * pad.h - d.kh) / stride.h + 1;
  d.ow = (d.w + 2 * pad.w - d.kw) / stride.w + 1;
  return d;
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Stride3 stride, Pad3 pad) {
  const ConvDims d = conv_dims(input, weight, stride, pad);
  if (bias.defined()) {
    check_contract(bias.numel() == d.k, "conv3d: bias length must equal output channels");
  }

  const T* x = input.data().data();
  const T* wt = weight.data().data();
  const T* b = bias.defined() ? bias.data().data() : nullptr;
  std::vector<T> out(static_cast<size_t>(d.n * d.k * d.ot * d.oh * d.ow));

  const int64_t x_c = d.t * d.h * d.w;
  const int64_t w_k = d.ci * d.kt * d.kh * d.kw;
  const int64_t o_cell = d.ot * d.oh * d.ow;

  parallel_for(d.n * d.k, [&](int64_t task) {
    const int64_t n = task / d.k;
    const int64_t k = task % d.k;
    const T* xn = x + n * d.ci * x_c;
    const T* wk = wt + k * w_k;
    T* dst = out.data() + task * o_cell;
    for (int64_t ot = 0; ot < d.ot; ++ot) {
      for (int64_t oh = 0; oh < d.oh; ++oh) {
        for (int64_t ow = 0; ow < d.ow; ++ow) {
          double acc = b ? static_cast<double>(b[k]) : 0.0;
          for (int64_t ci = 0; ci < d.ci; ++ci) {
            const T* xc = xn + ci * x_c;
            const T* wc = wk + ci * d.kt * d.kh * d.kw;
            for (int64_t dt = 0; dt < d.kt; ++dt) {
              const int64_t it = ot * stride.t + dt - pad.t;
              if (it < 0 || it >= d.t) continue;
              for (int64_t dh = 0; dh < d.kh; ++dh) {
                const int64_t ih = oh * stride.h + dh - pad.h;
                if (ih < 0 || ih >= d.h) continue;
                const T* xrow = xc + (it * d.h + ih) * d.w;
                const T* wrow = wc + (dt * d.kh + dh) * d.kw;
                for (int64_t dw = 0; dw < d.kw; ++dw) {
                  const int64_t iw = ow * stride.w + dw - pad.w;
                  if (iw < 0 || iw >= d.w) continue;
                  acc += static_cast<double>(xrow[iw]) * static_cast<double>(wrow[dw]);
                }
              }
            }
          }
          *dst++ = static_cast<T>(acc);
        }
      }
    }
  });

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);

  auto backward = [input, weight, bias, stride, pad, d](Node<T>& node) {
    const std::vector<T>& go = node.grad;
    const T* x = input.data().data();
    const T* wt = weight.data().data();
    const int64_t x_c = d.t * d.h * d.w;
    const int64_t w_k = d.ci * d.kt * d.kh * d.kw;
    const int64_t o_cell = d.ot * d.oh * d.ow;

    if (input.requires_grad()) {
      auto gx = input.node()->ensure_grad();
      parallel_for(d.n * d.ci, [&](int64_t task) {
        const int64_t n = task / d.ci;
        const int64_t ci = task % d.ci;
        std::vector<double> buf(static_cast<size_t>(x_c), 0.0);
        for (int64_t k = 0; k < d.k; ++k) {
          const T* gok = go.data() + (n * d.k + k) * o_cell;
          const T* wc = wt + k * w_k + ci * d.kt * d.kh * d.kw;
          for (int64_t ot = 0; ot < d.ot; ++ot) {
            for (int64_t oh = 0; oh < d.oh; ++oh) {
              for (int64_t ow = 0; ow < d.ow; ++ow) {
                const double g = static_cast<double>(gok[(ot * d.oh + oh) * d.ow + ow]);
                if (g == 0.0) continue;
                for (int64_t dt = 0; dt < d.kt; ++dt) {
                  const int64_t it = ot * stride.t + dt - pad.t;
                  if (it < 0 || it >= d.t) continue;
                  for (int64_t dh = 0; dh < d.kh; ++dh) {
                    const int64_t ih = oh * stride.h + dh - pad.h;
                    if (ih < 0 || ih >= d.h) continue;
                    const T* wrow = wc + (dt * d.kh + dh) * d.kw;
                    double* brow = buf.data() + (it * d.h + ih) * d.w;
                    for (int64_t dw = 0; dw < d.kw; ++dw) {
                      const int64_t iw = ow * stride.w + dw - pad.w;
                      if (iw < 0 || iw >= d.w) continue;
                      brow[iw] += g * static_cast<double>(wrow[dw]);
                    }
                  }
                }
              }
            }
          }
        }
        add_into(gx, buf, (n * d.ci + ci) * x_c);
      });
    }

    if (weight.requires_grad()) {
      auto gw = weight.node()->ensure_grad();
      parallel_for(d.k, [&](int64_t k) {
        std::vector<double> buf(static_cast<size_t>(w_k), 0.0);
        for (int64_t n = 0; n < d.n; ++n) {
          const T* xn = x + n * d.ci * x_c;
          const T* gok = go.data() + (n * d.k + k) * o_cell;
          for (int64_t ot = 0; ot < d.ot; ++ot) {
            for (int64_t oh = 0; oh < d.oh; ++oh) {
              for (int64_t ow = 0; ow < d.ow; ++ow) {
                const double g = static_cast<double>(gok[(ot * d.oh + oh) * d.ow + ow]);
                if (g == 0.0) continue;
                for (int64_t ci = 0; ci < d.ci; ++ci) {
                  const T* xc = xn + ci * x_c;
                  double* bc = buf.data() + ci * d.kt * d.kh * d.kw;
                  for (int64_t dt = 0; dt < d.kt; ++dt) {
                    const int64_t it = ot * stride.t + dt - pad.t;
                    if (it < 0 || it >= d.t) continue;
                    for (int64_t dh = 0; dh < d.kh; ++dh) {
                      const int64_t ih = oh * stride.h + dh - pad.h;
                      if (ih < 0 || ih >= d.h) continue;
                      const T* xrow = xc + (it * d.h + ih) * d.w;
                      double* brow = bc + (dt * d.kh + dh) * d.kw;
                      for (int64_t dw = 0; dw < d.kw; ++dw) {
                        const int64_t iw = ow * stride.w + dw - pad.w;
                        if (iw < 0 || iw >= d.w) continue;
                        brow[dw] += g * static_cast<double>(xrow[iw]);
                      }
                    }
                  }
                }
              }
            }
          }
        }
        add_into(gw, buf, k * w_k);
      });
    }

    if (bias.defined() && bias.requires_grad()) {
      auto gb = bias.node()->ensure_grad();
      for (int64_t k = 0; k < d.k; ++k) {
        double acc = 0.0;
        for (int64_t n = 0; n < d.n; ++n) {
          const T* gok = go.data() + (n * d.k + k) * o_cell;
          for (int64_t i = 0; i < o_cell; ++i) acc += static_cast<double>(gok[i]);
        }
        gb[static_cast<size_t>(k)] += static_cast<T>(acc);
      }
    }
  };

  return Tensor<T>::make_op_result(Shape{d.n, d.k, d.ot, d.oh, d.ow}, std::move(out),
                                   std::move(inputs), std::move(backward), "conv3d");
}

template <typename T>
Tensor<T> transpose_conv3d_temporal(const Tensor<T>& input, const Tensor<T>& weight) {
  check_contract(input.ndim() == 5,
                 "transpose_conv3d_temporal: input must be [N,C,T,H,W], got " + input.shape().str());
  check_contract(weight.ndim() == 5 && weight.dim(2) == 2 && weight.dim(3) == 1 && weight.dim(4) == 1,
                 "transpose_conv3d_temporal: weight must be [C,K,2,1,1], got " + weight.shape().str());
  check_contract(weight.dim(0) == input.dim(1),
                 "transpose_conv3d_temporal: weight input channels do not match");

  const int64_t n_dim = input.dim(0), c_dim = input.dim(1), t_dim = input.dim(2);
  const int64_t h_dim = input.dim(3), w_dim = input.dim(4);
  const int64_t k_dim = weight.dim(1);
  const int64_t plane = h_dim * w_dim;

  const T* x = input.data().data();
  const T* wt = weight.data().data();  // [C,K,2]
  std::vector<T> out(static_cast<size_t>(n_dim * k_dim * 2 * t_dim * plane));

  parallel_for(n_dim * k_dim, [&](int64_t task) {
    const int64_t n = task / k_dim;
    const int64_t k = task % k_dim;
    T* dst = out.data() + task * 2 * t_dim * plane;
    for (int64_t t = 0; t < t_dim; ++t) {
      for (int64_t dt = 0; dt < 2; ++dt) {
        T* drow = dst + (2 * t + dt) * plane;
        for (int64_t p = 0; p < plane; ++p) {
          double acc = 0.0;
          for (int64_t c = 0; c < c_dim; ++c) {
            acc += static_cast<double>(x[((n * c_dim + c) * t_dim + t) * plane + p]) *
                   static_cast<double>(wt[(c * k_dim + k) * 2 + dt]);
          }
          drow[p] = static_cast<T>(acc);
        }
      }
    }
  });

  auto backward = [input, weight, n_dim, c_dim, t_dim, plane, k_dim](Node<T>& node) {
    const std::vector<T>& go = node.grad;
    const T* x = input.data().data();
    const T* wt = weight.data().data();

    if (input.requires_grad()) {
      auto gx = input.node()->ensure_grad();
      parallel_for(n_dim * c_dim, [&](int64_t task) {
        const int64_t n = task / c_dim;
        const int64_t c = task % c_dim;
        std::vector<double> buf(static_cast<size_t>(t_dim * plane), 0.0);
        for (int64_t k = 0; k < k_dim; ++k) {
          const T* gok = go.data() + (n * k_dim + k) * 2 * t_dim * plane;
          for (int64_t t = 0; t < t_dim; ++t) {
            for (int64_t dt = 0; dt < 2; ++dt) {
              const double wv = static_cast<double>(wt[(c * k_dim + k) * 2 + dt]);
              const T* grow = gok + (2 * t + dt) * plane;
              double* brow = buf.data() + t * plane;
              for (int64_t p = 0; p < plane; ++p) brow[p] += wv * static_cast<double>(grow[p]);
            }
          }
        }
        add_into(gx, buf, task * t_dim * plane);
      });
    }

    if (weight.requires_grad()) {
      auto gw = weight.node()->ensure_grad();
      parallel_for(c_dim, [&](int64_t c) {
        std::vector<double> buf(static_cast<size_t>(k_dim * 2), 0.0);
        for (int64_t n = 0; n < n_dim; ++n) {
          const T* xc = x + (n * c_dim + c) * t_dim * plane;
          for (int64_t k = 0; k < k_dim; ++k) {
            const T* gok = go.data() + (n * k_dim + k) * 2 * t_dim * plane;
            for (int64_t t = 0; t < t_dim; ++t) {
              for (int64_t dt = 0; dt < 2; ++dt) {
                const T* grow = gok + (2 * t + dt) * plane;
                const T* xrow = xc + t * plane;
                double acc = 0.0;
                for (int64_t p = 0; p < plane; ++p) {
                  acc += static_cast<double>(xrow[p]) * static_cast<double>(grow[p]);
                }
                buf[static_cast<size_t>(k * 2 + dt)] += acc;
              }
            }
          }
        }
        add_into(gw, buf, c * k_dim * 2);
      });
    }
  };

  return Tensor<T>::make_op_result(Shape{n_dim, k_dim, 2 * t_dim, h_dim, w_dim}, std::move(out),
                                   {input, weight}, std::move(backward),
                                   "transpose_conv3d_temporal");
}

template <typename T>
Tensor<T> global_avg_pool_spatial(const Tensor<T>& input) {
  check_contract(input.ndim() == 5,
                 "global_avg_pool_spatial: input must be [N,C,T,H,W], got " + input.shape().str());
  const int64_t nct = input.dim(0) * input.dim(1) * input.dim(2);
  const int64_t plane = input.dim(3) * input.dim(4);
  const T* x = input.data().data();
  std::vector<T> out(static_cast<size_t>(nct));
  for (int64_t i = 0; i < nct; ++i) {
    double acc = 0.0;
    const T* row = x + i * plane;
    for (int64_t p = 0; p < plane; ++p) acc += static_cast<double>(row[p]);
    out[static_cast<size_t>(i)] = static_cast<T>(acc / static_cast<double>(plane));
  }

  auto backward = [input, nct, plane](Node<T>& node) {
    if (!input.requires_grad()) return;
    auto gx = input.node()->ensure_grad();
    const double inv = 1.0 / static_cast<double>(plane);
    for (int64_t i = 0; i < nct; ++i) {
      const double g = static_cast<double>(node.grad[static_cast<size_t>(i)]) * inv;
      T* row = gx.data() + i * plane;
      for (int64_t p = 0; p < plane; ++p) row[p] += static_cast<T>(g);
    }
  };

  return Tensor<T>::make_op_result(Shape{input.dim(0), input.dim(1), input.dim(2), 1, 1},
                                   std::move(out), {input}, std::move(backward),
                                   "global_avg_pool_spatial");
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& scale_t, const Tensor<T>& shift_t,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     double momentum, double epsilon) {
  check_contract(input.ndim() >= 2, "batch_norm: input must be [N,C,...]");
  check_contract(epsilon > 0.0, "batch_norm: epsilon must be > 0");
  check_contract(momentum > 0.0 && momentum <= 1.0, "batch_norm: momentum must be in (0,1]");
  const int64_t n_dim = input.dim(0);
  const int64_t c_dim = input.dim(1);
  const int64_t rest = input.numel() / (n_dim * c_dim);
  check_contract(scale_t.numel() == c_dim && shift_t.numel() == c_dim &&
                     running_mean.numel() == c_dim && running_var.numel() == c_dim,
                 "batch_norm: per-channel parameter length mismatch");

  const T* x = input.data().data();
  const T* sc = scale_t.data().data();
  const T* sh = shift_t.data().data();
  const int64_t m = n_dim * rest;

  std::vector<double> mean(static_cast<size_t>(c_dim), 0.0);
  std::vector<double> invstd(static_cast<size_t>(c_dim), 0.0);

  if (training) {
    for (int64_t c = 0; c < c_dim; ++c) {
      double s = 0.0;
      for (int64_t n = 0; n < n_dim; ++n) {
        const T* row = x + (n * c_dim + c) * rest;
        for (int64_t r = 0; r < rest; ++r) s += static_cast<double>(row[r]);
      }
      mean[static_cast<size_t>(c)] = s / static_cast<double>(m);
    }
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (int64_t c = 0; c < c_dim; ++c) {
      double s = 0.0;
      for (int64_t n = 0; n < n_dim; ++n) {
        const T* row = x + (n * c_dim + c) * rest;
        for (int64_t r = 0; r < rest; ++r) {
          const double d = static_cast<double>(row[r]) - mean[static_cast<size_t>(c)];
          s += d * d;
        }
      }
      const double var = s / static_cast<double>(m);  // biased
      invstd[static_cast<size_t>(c)] = 1.0 / std::sqrt(var + epsilon);
      rm[static_cast<size_t>(c)] = static_cast<T>((1.0 - momentum) * static_cast<double>(rm[static_cast<size_t>(c)]) + momentum * mean[static_cast<size_t>(c)]);
      rv[static_cast<size_t>(c)] = static_cast<T>((1.0 - momentum) * static_cast<double>(rv[static_cast<size_t>(c)]) + momentum * var);
    }
  } else {
    const T* rm = running_mean.data().data();
    const T* rv = running_var.data().data();
    for (int64_t c = 0; c < c_dim; ++c) {
      mean[static_cast<size_t>(c)] = static_cast<double>(rm[c]);
      invstd[static_cast<size_t>(c)] = 1.0 / std::sqrt(static_cast<double>(rv[c]) + epsilon);
    }
  }

  std::vector<T> xhat(static_cast<size_t>(input.numel()));
  std::vector<T> out(static_cast<size_t>(input.numel()));
  for (int64_t n = 0; n < n_dim; ++n) {
    for (int64_t c = 0; c < c_dim; ++c) {
      const int64_t base = (n * c_dim + c) * rest;
      const double mu = mean[static_cast<size_t>(c)];
      const double is = invstd[static_cast<size_t>(c)];
      const double g = static_cast<double>(sc[c]);
      const double b = static_cast<double>(sh[c]);
      for (int64_t r = 0; r < rest; ++r) {
        const double xh = (static_cast<double>(x[base + r]) - mu) * is;
        xhat[static_cast<size_t>(base + r)] = static_cast<T>(xh);
        out[static_cast<size_t>(base + r)] = static_cast<T>(g * xh + b);
      }
    }
  }

  auto backward = [input, scale_t, shift_t, xhat = std::move(xhat), invstd = std::move(invstd),
                   n_dim, c_dim, rest, training](Node<T>& node) {
    const std::vector<T>& go = node.grad;
    const T* sc = scale_t.data().data();
    const int64_t m = n_dim * rest;

    // Per-channel reductions shared by all three gradients.
    std::vector<double> sum_go(static_cast<size_t>(c_dim), 0.0);
    std::vector<double> sum_go_xhat(static_cast<size_t>(c_dim), 0.0);
    for (int64_t n = 0; n < n_dim; ++n) {
      for (int64_t c = 0; c < c_dim; ++c) {
        const int64_t base = (n * c_dim + c) * rest;
        double s0 = 0.0, s1 = 0.0;
        for (int64_t r = 0; r < rest; ++r) {
          const double g = static_cast<double>(go[static_cast<size_t>(base + r)]);
          s0 += g;
          s1 += g * static_cast<double>(xhat[static_cast<size_t>(base + r)]);
        }
        sum_go[static_cast<size_t>(c)] += s0;
        sum_go_xhat[static_cast<size_t>(c)] += s1;
      }
    }

    if (scale_t.requires_grad()) {
      auto gs = scale_t.node()->ensure_grad();
      for (int64_t c = 0; c < c_dim; ++c) gs[static_cast<size_t>(c)] += static_cast<T>(sum_go_xhat[static_cast<size_t>(c)]);
    }
    if (shift_t.requires_grad()) {
      auto gb = shift_t.node()->ensure_grad();
      for (int64_t c = 0; c < c_dim; ++c) gb[static_cast<size_t>(c)] += static_cast<T>(sum_go[static_cast<size_t>(c)]);
    }
    if (input.requires_grad()) {
      auto gx = input.node()->ensure_grad();
      for (int64_t n = 0; n < n_dim; ++n) {
        for (int64_t c = 0; c < c_dim; ++c) {
          const int64_t base = (n * c_dim + c) * rest;
          const double coef = static_cast<double>(sc[c]) * invstd[static_cast<size_t>(c)];
          const double mean_go = sum_go[static_cast<size_t>(c)] / static_cast<double>(m);
          const double mean_go_xhat = sum_go_xhat[static_cast<size_t>(c)] / static_cast<double>(m);
          for (int64_t r = 0; r < rest; ++r) {
            const double g = static_cast<double>(go[static_cast<size_t>(base + r)]);
            double dx;
            if (training) {
              dx = coef * (g - mean_go -
                           static_cast<double>(xhat[static_cast<size_t>(base + r)]) * mean_go_xhat);
            } else {
              dx = coef * g;
            }
            gx[static_cast<size_t>(base + r)] += static_cast<T>(dx);
          }
        }
      }
    }
  };

  return Tensor<T>::make_op_result(input.shape(), std::move(out), {input, scale_t, shift_t},
                                   std::move(backward), "batch_norm");
}

template <typename T>
Tensor<T> swish(const Tensor<T>& input) {
  const T* x = input.data().data();
  std::vector<T> out(static_cast<size_t>(input.numel()));
  for (int64_t i = 0; i < input.numel(); ++i) {
    const double xv = static_cast<double>(x[i]);
    out[static_cast<size_t>(i)] = static_cast<T>(xv * sigmoid(xv));
  }

  auto backward = [input](Node<T>& node) {
    if (!input.requires_grad()) return;
    auto gx = input.node()->ensure_grad();
    const T* x = input.data().data();
    for (int64_t i = 0; i < input.numel(); ++i) {
      const double xv = static_cast<double>(x[i]);
      const double s = sigmoid(xv);
      gx[static_cast<size_t>(i)] += static_cast<T>(
          static_cast<double>(node.grad[static_cast<size_t>(i)]) * s * (1.0 + xv * (1.0 - s)));
    }
  };

  return Tensor<T>::make_op_result(input.shape(), std::move(out), {input}, std::move(backward),
                                   "swish");
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs) {
  check_contract(!inputs.empty(), "concat_channels: needs at least one input");
  const Shape& first = inputs[0].shape();
  check_contract(first.ndim() >= 2, "concat_channels: inputs must be [N,C,...]");
  int64_t c_total = 0;
  for (const auto& t : inputs) {
    check_contract(t.ndim() == first.ndim(), "concat_channels: rank mismatch");
    for (int a = 0; a < first.ndim(); ++a) {
      check_contract(a == 1 || t.dim(a) == first[a],
                     "concat_channels: non-channel extent mismatch at axis " + std::to_string(a) +
                         ": " + t.shape().str() + " vs " + first.str());
    }
    c_total += t.dim(1);
  }
  const int64_t n_dim = first[0];
  const int64_t rest = inputs[0].numel() / (n_dim * first[1]);

  std::vector<T> out(static_cast<size_t>(n_dim * c_total * rest));
  for (int64_t n = 0; n < n_dim; ++n) {
    T* dst = out.data() + n * c_total * rest;
    for (const auto& t : inputs) {
      const int64_t block = t.dim(1) * rest;
      std::memcpy(dst, t.data().data() + n * block, static_cast<size_t>(block) * sizeof(T));
      dst += block;
    }
  }

  std::vector<int64_t> dims = first.dims();
  dims[1] = c_total;

  auto backward = [inputs, n_dim, rest, c_total](Node<T>& node) {
    for (int64_t n = 0; n < n_dim; ++n) {
      const T* src = node.grad.data() + n * c_total * rest;
      for (const auto& t : inputs) {
        const int64_t block = t.dim(1) * rest;
        if (t.requires_grad()) {
          auto g = t.node()->ensure_grad();
          T* dst = g.data() + n * block;
          for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
        }
        src += block;
      }
    }
  };

  return Tensor<T>::make_op_result(Shape(dims), std::move(out), inputs, std::move(backward),
                                   "concat_channels");
}

template <typename T>
Tensor<T> nearest_interp_temporal(const Tensor<T>& input, int64_t target_t) {
  check_contract(input.ndim() == 5,
                 "nearest_interp_temporal: input must be [N,C,T,H,W], got " + input.shape().str());
  check_contract(target_t >= 1, "nearest_interp_temporal: target_t must be >= 1");
  const int64_t nc = input.dim(0) * input.dim(1);
  const int64_t t_dim = input.dim(2);
  const int64_t plane = input.dim(3) * input.dim(4);

  const T* x = input.data().data();
  std::vector<T> out(static_cast<size_t>(nc * target_t * plane));
  for (int64_t i = 0; i < nc; ++i) {
    const T* src = x + i * t_dim * plane;
    T* dst = out.data() + i * target_t * plane;
    for (int64_t t = 0; t < target_t; ++t) {
      const int64_t st = t * t_dim / target_t;
      std::memcpy(dst + t * plane, src + st * plane, static_cast<size_t>(plane) * sizeof(T));
    }
  }

  auto backward = [input, nc, t_dim, plane, target_t](Node<T>& node) {
    if (!input.requires_grad()) return;
    auto gx = input.node()->ensure_grad();
    for (int64_t i = 0; i < nc; ++i) {
      const T* src = node.grad.data() + i * target_t * plane;
      T* dst = gx.data() + i * t_dim * plane;
      for (int64_t t = 0; t < target_t; ++t) {
        const int64_t st = t * t_dim / target_t;
        const T* srow = src + t * plane;
        T* drow = dst + st * plane;
        for (int64_t p = 0; p < plane; ++p) drow[p] += srow[p];
      }
    }
  };

  return Tensor<T>::make_op_result(
      Shape{input.dim(0), input.dim(1), target_t, input.dim(3), input.dim(4)}, std::move(out),
      {input}, std::move(backward), "nearest_interp_temporal");
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_contract(input.ndim() >= 2, "fully_connected: input must be [N,C,...]");
  check_contract(weight.ndim() == 2, "fully_connected: weight must be [C_out,C_in]");
  const int64_t n_dim = input.dim(0);
  const int64_t c_in = input.dim(1);
  const int64_t rest = input.numel() / (n_dim * c_in);
  const int64_t c_out = weight.dim(0);
  check_contract(weight.dim(1) == c_in, "fully_connected: weight C_in " + std::to_string(weight.dim(1)) +
                                            " does not match input channels " + std::to_string(c_in));
  if (bias.defined()) check_contract(bias.numel() == c_out, "fully_connected: bias length mismatch");

  const T* x = input.data().data();
  const T* wt = weight.data().data();
  const T* b = bias.defined() ? bias.data().data() : nullptr;
  std::vector<T> out(static_cast<size_t>(n_dim * c_out * rest));

  parallel_for(n_dim * c_out, [&](int64_t task) {
    const int64_t n = task / c_out;
    const int64_t k = task % c_out;
    const T* xn = x + n * c_in * rest;
    const T* wk = wt + k * c_in;
    T* dst = out.data() + task * rest;
    for (int64_t r = 0; r < rest; ++r) {
      double acc = b ? static_cast<double>(b[k]) : 0.0;
      for (int64_t c = 0; c < c_in; ++c) {
        acc += static_cast<double>(wk[c]) * static_cast<double>(xn[c * rest + r]);
      }
      dst[r] = static_cast<T>(acc);
    }
  });

  std::vector<Tensor<T>> op_inputs{input, weight};
  if (bias.defined()) op_inputs.push_back(bias);

  auto backward = [input, weight, bias, n_dim, c_in, c_out, rest](Node<T>& node) {
    const std::vector<T>& go = node.grad;
    const T* x = input.data().data();
    const T* wt = weight.data().data();

    if (input.requires_grad()) {
      auto gx = input.node()->ensure_grad();
      parallel_for(n_dim, [&](int64_t n) {
        std::vector<double> buf(static_cast<size_t>(c_in * rest), 0.0);
        const T* gon = go.data() + n * c_out * rest;
        for (int64_t k = 0; k < c_out; ++k) {
          const T* grow = gon + k * rest;
          const T* wk = wt + k * c_in;
          for (int64_t c = 0; c < c_in; ++c) {
            const double wv = static_cast<double>(wk[c]);
            double* brow = buf.data() + c * rest;
            for (int64_t r = 0; r < rest; ++r) brow[r] += wv * static_cast<double>(grow[r]);
          }
        }
        add_into(gx, buf, n * c_in * rest);
      });
    }

    if (weight.requires_grad()) {
      auto gw = weight.node()->ensure_grad();
      parallel_for(c_out, [&](int64_t k) {
        std::vector<double> buf(static_cast<size_t>(c_in), 0.0);
        for (int64_t n = 0; n < n_dim; ++n) {
          const T* grow = go.data() + (n * c_out + k) * rest;
          const T* xn = x + n * c_in * rest;
          for (int64_t r = 0; r < rest; ++r) {
            const double g = static_cast<double>(grow[r]);
            if (g == 0.0) continue;
            for (int64_t c = 0; c < c_in; ++c) {
              buf[static_cast<size_t>(c)] += g * static_cast<double>(xn[c * rest + r]);
            }
          }
        }
        add_into(gw, buf, k * c_in);
      });
    }

    if (bias.defined() && bias.requires_grad()) {
      auto gb = bias.node()->ensure_grad();
      for (int64_t k = 0; k < c_out; ++k) {
        double acc = 0.0;
        for (int64_t n = 0; n < n_dim; ++n) {
          const T* grow = go.data() + (n * c_out + k) * rest;
          for (int64_t r = 0; r < rest; ++r) acc += static_cast<double>(grow[r]);
        }
        gb[static_cast<size_t>(k)] += static_cast<T>(acc);
      }
    }
  };

  std::vector<int64_t> dims = input.shape().dims();
  dims[1] = c_out;
  return Tensor<T>::make_op_result(Shape(dims), std::move(out), std::move(op_inputs),
                                   std::move(backward), "fully_connected");
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input) {
  check_contract(input.ndim() >= 2, "softmax_channels: input must be [N,K,...]");
  const int64_t n_dim = input.dim(0);
  const int64_t k_dim = input.dim(1);
  const int64_t rest = input.numel() / (n_dim * k_dim);

  const T* x = input.data().data();
  std::vector<T> out(static_cast<size_t>(input.numel()));
  for (int64_t n = 0; n < n_dim; ++n) {
    const T* xn = x + n * k_dim * rest;
    T* on = out.data() + n * k_dim * rest;
    for (int64_t r = 0; r < rest; ++r) {
      double mx = static_cast<double>(xn[r]);
      for (int64_t k = 1; k < k_dim; ++k) mx = std::max(mx, static_cast<double>(xn[k * rest + r]));
      double denom = 0.0;
      for (int64_t k = 0; k < k_dim; ++k) denom += std::exp(static_cast<double>(xn[k * rest + r]) - mx);
      for (int64_t k = 0; k < k_dim; ++k) {
        on[k * rest + r] = static_cast<T>(std::exp(static_cast<double>(xn[k * rest + r]) - mx) / denom);
      }
    }
  }

  auto backward = [input, n_dim, k_dim, rest](Node<T>& node) {
    if (!input.requires_grad()) return;
    auto gx = input.node()->ensure_grad();
    const std::vector<T>& p = node.value;
    const std::vector<T>& go = node.grad;
    for (int64_t n = 0; n < n_dim; ++n) {
      const int64_t base = n * k_dim * rest;
      for (int64_t r = 0; r < rest; ++r) {
        double dot = 0.0;
        for (int64_t k = 0; k < k_dim; ++k) {
          const size_t i = static_cast<size_t>(base + k * rest + r);
          dot += static_cast<double>(go[i]) * static_cast<double>(p[i]);
        }
        for (int64_t k = 0; k < k_dim; ++k) {
          const size_t i = static_cast<size_t>(base + k * rest + r);
          gx[i] += static_cast<T>(static_cast<double>(p[i]) *
                                  (static_cast<double>(go[i]) - dot));
        }
      }
    }
  };

  return Tensor<T>::make_op_result(input.shape(), std::move(out), {input}, std::move(backward),
                                   "softmax_channels");
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                        const std::vector<double>& sample_weights) {
  check_contract(logits.ndim() >= 2, "cross_entropy: logits must be [N,K,...]");
  const int64_t n_dim = logits.dim(0);
  const int64_t k_dim = logits.dim(1);
  const int64_t rest = logits.numel() / (n_dim * k_dim);
  check_contract(static_cast<int64_t>(targets.size()) == n_dim * rest,
                 "cross_entropy: expected " + std::to_string(n_dim * rest) + " targets, got " +
                     std::to_string(targets.size()));
  check_contract(sample_weights.empty() || static_cast<int64_t>(sample_weights.size()) == n_dim,
                 "cross_entropy: sample_weights must have one entry per batch item");
  for (int tgt : targets) {
    check_contract(tgt >= 0 && tgt < k_dim,
                   "cross_entropy: target index " + std::to_string(tgt) + " out of range [0," +
                       std::to_string(k_dim) + ")");
  }

  const T* x = logits.data().data();
  const double norm = 1.0 / static_cast<double>(n_dim * rest);
  double loss = 0.0;
  for (int64_t n = 0; n < n_dim; ++n) {
    const T* xn = x + n * k_dim * rest;
    const double wn = sample_weights.empty() ? 1.0 : sample_weights[static_cast<size_t>(n)];
    for (int64_t r = 0; r < rest; ++r) {
      double mx = static_cast<double>(xn[r]);
      for (int64_t k = 1; k < k_dim; ++k) mx = std::max(mx, static_cast<double>(xn[k * rest + r]));
      double denom = 0.0;
      for (int64_t k = 0; k < k_dim; ++k) denom += std::exp(static_cast<double>(xn[k * rest + r]) - mx);
      const int tgt = targets[static_cast<size_t>(n * rest + r)];
      const double log_p = static_cast<double>(xn[tgt * rest + r]) - mx - std::log(denom);
      loss -= wn * log_p;
    }
  }
  loss *= norm;

  auto backward = [logits, targets, sample_weights, n_dim, k_dim, rest, norm](Node<T>& node) {
    if (!logits.requires_grad()) return;
    auto gx = logits.node()->ensure_grad();
    const T* x = logits.data().data();
    const double g0 = static_cast<double>(node.grad[0]) * norm;
    for (int64_t n = 0; n < n_dim; ++n) {
      const T* xn = x + n * k_dim * rest;
      T* gn = gx.data() + n * k_dim * rest;
      const double wn = sample_weights.empty() ? 1.0 : sample_weights[static_cast<size_t>(n)];
      for (int64_t r = 0; r < rest; ++r) {
        double mx = static_cast<double>(xn[r]);
        for (int64_t k = 1; k < k_dim; ++k) mx = std::max(mx, static_cast<double>(xn[k * rest + r]));
        double denom = 0.0;
        for (int64_t k = 0; k < k_dim; ++k) denom += std::exp(static_cast<double>(xn[k * rest + r]) - mx);
        const int tgt = targets[static_cast<size_t>(n * rest + r)];
        for (int64_t k = 0; k < k_dim; ++k) {
          const double p = std::exp(static_cast<double>(xn[k * rest + r]) - mx) / denom;
          const double ind = (k == tgt) ? 1.0 : 0.0;
          gn[k * rest + r] += static_cast<T>(g0 * wn * (p - ind));
        }
      }
    }
  };

  return Tensor<T>::make_op_result(Shape{1}, std::vector<T>{static_cast<T>(loss)}, {logits},
                                   std::move(backward), "cross_entropy");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_contract(a.shape() == b.shape(),
                 "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const T* av = a.data().data();
  const T* bv = b.data().data();
  std::vector<T> out(static_cast<size_t>(a.numel()));
  for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] = av[i] + bv[i];

  auto backward = [a, b](Node<T>& node) {
    for (const Tensor<T>& t : {a, b}) {
      if (!t.requires_grad()) continue;
      auto g = t.node()->ensure_grad();
      for (size_t i = 0; i < node.grad.size(); ++i) g[i] += node.grad[i];
    }
  };
  return Tensor<T>::make_op_result(a.shape(), std::move(out), {a, b}, std::move(backward), "add");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  const T* av = a.data().data();
  std::vector<T> out(static_cast<size_t>(a.numel()));
  for (int64_t i = 0; i < a.numel(); ++i) {
    out[static_cast<size_t>(i)] = static_cast<T>(static_cast<double>(av[i]) * factor);
  }
  auto backward = [a, factor](Node<T>& node) {
    if (!a.requires_grad()) return;
    auto g = a.node()->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) {
      g[i] += static_cast<T>(static_cast<double>(node.grad[i]) * factor);
    }
  };
  return Tensor<T>::make_op_result(a.shape(), std::move(out), {a}, std::move(backward), "scale");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const T* av = a.data().data();
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(av[i]);
  auto backward = [a](Node<T>& node) {
    if (!a.requires_grad()) return;
    auto g = a.node()->ensure_grad();
    const T gv = node.grad[0];
    for (size_t i = 0; i < g.size(); ++i) g[i] += gv;
  };
  return Tensor<T>::make_op_result(Shape{1}, std::vector<T>{static_cast<T>(acc)}, {a},
                                   std::move(backward), "sum");
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& a, std::span<const double> coeffs) {
  check_contract(static_cast<int64_t>(coeffs.size()) == a.numel(),
                 "weighted_sum: coefficient count mismatch");
  const T* av = a.data().data();
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += coeffs[static_cast<size_t>(i)] * static_cast<double>(av[i]);
  std::vector<double> saved(coeffs.begin(), coeffs.end());
  auto backward = [a, saved = std::move(saved)](Node<T>& node) {
    if (!a.requires_grad()) return;
    auto g = a.node()->ensure_grad();
    const double gv = static_cast<double>(node.grad[0]);
    for (size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(gv * saved[i]);
  };
  return Tensor<T>::make_op_result(Shape{1}, std::vector<T>{static_cast<T>(acc)}, {a},
                                   std::move(backward), "weighted_sum");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  check_contract(shape.numel() == a.numel(),
                 "reshape: numel mismatch " + a.shape().str() + " -> " + shape.str());
  std::vector<T> out(a.data().begin(), a.data().end());
  auto backward = [a](Node<T>& node) {
    if (!a.requires_grad()) return;
    auto g = a.node()->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) g[i] += node.grad[i];
  };
  return Tensor<T>::make_op_result(std::move(shape), std::move(out), {a}, std::move(backward),
                                   "reshape");
}

#define SIGNSPOT_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Stride3,   \
                               Pad3);                                                            \
  template Tensor<T> transpose_conv3d_temporal<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> global_avg_pool_spatial<T>(const Tensor<T>&);                              \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                   Tensor<T>&, Tensor<T>&, bool, double, double);               \
  template Tensor<T> swish<T>(const Tensor<T>&);                                                \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                         \
  template Tensor<T> nearest_interp_temporal<T>(const Tensor<T>&, int64_t);                     \
  template Tensor<T> fully_connected<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> softmax_channels<T>(const Tensor<T>&);                                     \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<int>&,                \
                                      const std::vector<double>&);                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale<T>(const Tensor<T>&, double);                                        \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                  \
  template Tensor<T> weighted_sum<T>(const Tensor<T>&, std::span<const double>);                \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);

SIGNSPOT_INSTANTIATE_OPS(float)
SIGNSPOT_INSTANTIATE_OPS(double)

#undef SIGNSPOT_INSTANTIATE_OPS

}  // namespace signspot
