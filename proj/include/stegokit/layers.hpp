#pragma once

// Forward and backward passes of the learnable layer set: 2-D convolution,
// batch normalization, ReLU, average pooling, fully-connected and the
// softmax cross-entropy loss. Every function is templated on the scalar type
// so the same code runs in float (training) and double (gradient checks).

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "stegokit/error.hpp"
#include "stegokit/tensor.hpp"

namespace stegokit::nn {

enum class Mode { train, eval };

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

// ---- convolution -----------------------------------------------------------

namespace detail {

constexpr int floor_div(int a, int b) noexcept { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Splits one image into stride x stride phase planes, phase (pr, pc) holding
// x(a*s + pr, b*s + pc), so a strided window becomes a contiguous row segment.
template <class T>
struct Phases {
  int s = 1, hp = 0, wp = 0, channels = 0;
  std::vector<T> data;  // [pr][pc][c][hp][wp], zero outside the image

  const T* plane(int pr, int pc, int c) const {
    return data.data() + ((static_cast<std::size_t>(pr * s + pc) * channels + c) * hp) * wp;
  }
};

template <class T>
void split_phases(const T* x, int channels, int h, int w, int s, Phases<T>& ph) {
  ph.s = s;
  ph.channels = channels;
  ph.hp = (h + s - 1) / s;
  ph.wp = (w + s - 1) / s;
  ph.data.assign(static_cast<std::size_t>(s) * s * channels * ph.hp * ph.wp, T{0});
  for (int pr = 0; pr < s; ++pr)
    for (int pc = 0; pc < s; ++pc)
      for (int c = 0; c < channels; ++c) {
        T* dst = const_cast<T*>(ph.plane(pr, pc, c));
        for (int a = 0; a * s + pr < h; ++a) {
          const T* src = x + (static_cast<std::size_t>(c) * h + a * s + pr) * w + pc;
          T* row = dst + static_cast<std::size_t>(a) * ph.wp;
          for (int b = 0; b * s + pc < w; ++b) row[b] = src[b * s];
        }
      }
}

// Column buffer of one image: row (c*k + u)*k + v, column i*wo + j.
template <class T>
void im2col(const T* x, int channels, int h, int w, int k, ConvGeometry g, int ho, int wo, T* col,
            Phases<T>& ph) {
  const int s = g.stride;
  const T* base = x;
  int hp = h, wp = w;
  if (s > 1) {
    split_phases(x, channels, h, w, s, ph);
    hp = ph.hp;
    wp = ph.wp;
  }
  for (int c = 0; c < channels; ++c)
    for (int u = 0; u < k; ++u)
      for (int v = 0; v < k; ++v) {
        T* dst = col + static_cast<std::size_t>((c * k + u) * k + v) * ho * wo;
        const int du = u - g.pad, dv = v - g.pad;
        const int fu = floor_div(du, s), fv = floor_div(dv, s);
        const int pr = du - fu * s, pc = dv - fv * s;
        const T* src = s > 1 ? ph.plane(pr, pc, c) : base + static_cast<std::size_t>(c) * h * w;
        // Phase planes can be one longer than the image allows for this phase;
        // those cells are zero, so reading them is harmless.
        const int jlo = std::clamp(-fv, 0, wo), jhi = std::clamp(wp - fv, jlo, wo);
        for (int i = 0; i < ho; ++i) {
          T* out = dst + static_cast<std::size_t>(i) * wo;
          const int a = i + fu;
          if (a < 0 || a >= hp) {
            std::fill(out, out + wo, T{0});
            continue;
          }
          std::fill(out, out + jlo, T{0});
          std::copy(src + static_cast<std::size_t>(a) * wp + jlo + fv, src + static_cast<std::size_t>(a) * wp + jhi + fv,
                    out + jlo);
          std::fill(out + jhi, out + wo, T{0});
        }
      }
}

template <class T>
void col2im(const T* col, int channels, int h, int w, int k, ConvGeometry g, int ho, int wo, T* x) {
  for (int c = 0; c < channels; ++c)
    for (int u = 0; u < k; ++u)
      for (int v = 0; v < k; ++v) {
        const T* src = col + static_cast<std::size_t>((c * k + u) * k + v) * ho * wo;
        for (int i = 0; i < ho; ++i) {
          const int r = i * g.stride + u - g.pad;
          if (r < 0 || r >= h) continue;
          T* dst = x + (static_cast<std::size_t>(c) * h + r) * w;
          const int jlo = std::max(0, floor_div(g.pad - v + g.stride - 1, g.stride));
          const int jhi = std::min(wo, floor_div(w - 1 + g.pad - v, g.stride) + 1);
          for (int j = jlo; j < jhi; ++j) dst[j * g.stride + v - g.pad] += src[i * wo + j];
        }
      }
}

}  // namespace detail

/// out(b,o,i,j) = sum_c sum_{u,v} W(o,c,u,v) x(b,c,i*s+u-pad, j*s+v-pad) + bias(o),
/// zero padded. `weight` has shape (out_channels, in_channels, k, k).
template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const Tensor4<T>& weight, std::type_identity_t<std::span<const T>> bias,
                          ConvGeometry g) {
  const int k = weight.h();
  if (weight.w() != k) throw InvalidArgument("conv2d: kernel must be square");
  if (weight.c() != x.c())
    throw InvalidArgument("conv2d: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                          std::to_string(weight.c()));
  if (bias.size() != static_cast<std::size_t>(weight.n())) throw InvalidArgument("conv2d: bias size mismatch");
  if (g.stride < 1 || g.pad < 0) throw InvalidArgument("conv2d: bad stride/padding");
  const int ho = conv_out_size(x.h(), k, g.stride, g.pad);
  const int wo = conv_out_size(x.w(), k, g.stride, g.pad);
  if (ho < 1 || wo < 1) throw InvalidArgument("conv2d: output would be empty");

  const int outc = weight.n();
  const int rows = x.c() * k * k;
  Tensor4<T> out(x.n(), outc, ho, wo);
  std::vector<T> col(static_cast<std::size_t>(rows) * ho * wo);
  detail::Phases<T> phases;
  ConstMatrixMap<T> wmat(weight.data(), outc, rows);
  for (int b = 0; b < x.n(); ++b) {
    detail::im2col(x.item(b), x.c(), x.h(), x.w(), k, g, ho, wo, col.data(), phases);
    MatrixMap<T> y(out.item(b), outc, ho * wo);
    y.noalias() = wmat * ConstMatrixMap<T>(col.data(), rows, ho * wo);
    for (int o = 0; o < outc; ++o) y.row(o).array() += bias[o];
  }
  return out;
}

template <class T>
struct ConvGrads {
  Tensor4<T> input;  // empty when not requested
  Tensor4<T> weight;
  std::vector<T> bias;
};

template <class T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_out, ConvGeometry g,
                             bool want_input_grad = true) {
  const int k = weight.h();
  const int ho = conv_out_size(x.h(), k, g.stride, g.pad);
  const int wo = conv_out_size(x.w(), k, g.stride, g.pad);
  if (weight.c() != x.c() || grad_out.n() != x.n() || grad_out.c() != weight.n() || grad_out.h() != ho ||
      grad_out.w() != wo)
    throw InvalidArgument("conv2d_backward: shape mismatch");
  const int outc = weight.n();
  const int rows = x.c() * k * k;

  ConvGrads<T> grads;
  grads.weight = Tensor4<T>(weight.shape());
  grads.bias.assign(outc, T{0});
  if (want_input_grad) grads.input = Tensor4<T>(x.shape());

  std::vector<T> col(static_cast<std::size_t>(rows) * ho * wo);
  detail::Phases<T> phases;
  ConstMatrixMap<T> wmat(weight.data(), outc, rows);
  MatrixMap<T> gw(grads.weight.data(), outc, rows);
  for (int b = 0; b < x.n(); ++b) {
    ConstMatrixMap<T> gy(grad_out.item(b), outc, ho * wo);
    detail::im2col(x.item(b), x.c(), x.h(), x.w(), k, g, ho, wo, col.data(), phases);
    gw.noalias() += gy * ConstMatrixMap<T>(col.data(), rows, ho * wo).transpose();
    for (int o = 0; o < outc; ++o) {
      const T* row = grad_out.item(b) + static_cast<std::size_t>(o) * ho * wo;
      T acc{0};
      for (int i = 0; i < ho * wo; ++i) acc += row[i];
      grads.bias[o] += acc;
    }
    if (want_input_grad) {
      MatrixMap<T> gcol(col.data(), rows, ho * wo);
      gcol.noalias() = wmat.transpose() * gy;
      detail::col2im(col.data(), x.c(), x.h(), x.w(), k, g, ho, wo, grads.input.item(b));
    }
  }
  return grads;
}

// ---- batch normalization ---------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

template <class T>
struct BatchNormState {
  std::vector<T> gamma, beta, running_mean, running_var;

  explicit BatchNormState(int channels = 0)
      : gamma(channels, T{1}), beta(channels, T{0}), running_mean(channels, T{0}), running_var(channels, T{1}) {}
  int channels() const noexcept { return static_cast<int>(gamma.size()); }
};

template <class T>
struct BatchNormCache {
  Tensor4<T> normalized;
  std::vector<T> inv_std;
};

/// Train mode: per-channel batch statistics (biased variance, eps 1e-5),
/// running statistics updated as r <- 0.9 r + 0.1 batch (unbiased variance).
/// Eval mode: running statistics.
template <class T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, BatchNormState<T>& state, Mode mode,
                             BatchNormCache<T>* cache = nullptr) {
  const int channels = x.c();
  if (state.channels() != channels) throw InvalidArgument("batchnorm: channel count mismatch");
  if (mode == Mode::train && x.n() < 2) throw InvalidArgument("batchnorm: train mode needs batch >= 2");
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  const std::size_t count = plane * x.n();
  Tensor4<T> out(x.shape());
  if (cache) {
    cache->normalized = Tensor4<T>(x.shape());
    cache->inv_std.assign(channels, T{0});
  }
  for (int c = 0; c < channels; ++c) {
    T mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (int b = 0; b < x.n(); ++b) {
        const T* p = x.item(b) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (int b = 0; b < x.n(); ++b) {
        const T* p = x.item(b) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          ss += d * d;
        }
      }
      mean = static_cast<T>(m);
      var = static_cast<T>(ss / static_cast<double>(count));
      const T unbiased = count > 1 ? static_cast<T>(ss / static_cast<double>(count - 1)) : var;
      const T keep = static_cast<T>(kBatchNormMomentum);
      state.running_mean[c] = keep * state.running_mean[c] + (T{1} - keep) * mean;
      state.running_var[c] = keep * state.running_var[c] + (T{1} - keep) * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const T inv_std = T{1} / std::sqrt(var + static_cast<T>(kBatchNormEps));
    const T gamma = state.gamma[c], beta = state.beta[c];
    for (int b = 0; b < x.n(); ++b) {
      const T* p = x.item(b) + c * plane;
      T* o = out.item(b) + c * plane;
      T* nrm = cache ? cache->normalized.item(b) + c * plane : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (p[i] - mean) * inv_std;
        if (nrm) nrm[i] = xh;
        o[i] = gamma * xh + beta;
      }
    }
    if (cache) cache->inv_std[c] = inv_std;
  }
  return out;
}

template <class T>
struct BatchNormGrads {
  Tensor4<T> input;
  std::vector<T> gamma, beta;
};

/// Exact gradient of the train-mode forward, including the dependence of the
/// batch mean and variance on the input.
template <class T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BatchNormState<T>& state,
                                     const Tensor4<T>& grad_out) {
  const auto& xh = cache.normalized;
  if (grad_out.shape() != xh.shape() || state.channels() != xh.c())
    throw InvalidArgument("batchnorm_backward: shape mismatch");
  const int channels = xh.c();
  const std::size_t plane = static_cast<std::size_t>(xh.h()) * xh.w();
  const double count = static_cast<double>(plane * xh.n());
  BatchNormGrads<T> g{Tensor4<T>(xh.shape()), std::vector<T>(channels), std::vector<T>(channels)};
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int b = 0; b < xh.n(); ++b) {
      const T* dy = grad_out.item(b) + c * plane;
      const T* h = xh.item(b) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xh += static_cast<double>(dy[i]) * h[i];
      }
    }
    g.beta[c] = static_cast<T>(sum_dy);
    g.gamma[c] = static_cast<T>(sum_dy_xh);
    const T scale = state.gamma[c] * cache.inv_std[c];
    const T mean_dy = static_cast<T>(sum_dy / count);
    const T mean_dy_xh = static_cast<T>(sum_dy_xh / count);
    for (int b = 0; b < xh.n(); ++b) {
      const T* dy = grad_out.item(b) + c * plane;
      const T* h = xh.item(b) + c * plane;
      T* dx = g.input.item(b) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) dx[i] = scale * (dy[i] - mean_dy - h[i] * mean_dy_xh);
    }
  }
  return g;
}

// ---- ReLU ------------------------------------------------------------------

template <class T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

/// Gradient passes where the forward output was positive.
template <class T>
Tensor4<T> relu_backward(const Tensor4<T>& output, const Tensor4<T>& grad_out) {
  if (output.shape() != grad_out.shape()) throw InvalidArgument("relu_backward: shape mismatch");
  Tensor4<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

// ---- average pooling -------------------------------------------------------

/// Average pooling; padded cells count as zeros in the window average.
struct PoolGeometry {
  int window = 2;
  int stride = 2;
  int pad = 0;
};

template <class T>
Tensor4<T> avgpool_forward(const Tensor4<T>& x, PoolGeometry g) {
  const int ho = conv_out_size(x.h(), g.window, g.stride, g.pad);
  const int wo = conv_out_size(x.w(), g.window, g.stride, g.pad);
  if (ho < 1 || wo < 1 || g.stride < 1 || g.pad < 0) throw InvalidArgument("avgpool: bad geometry");
  const T scale = T{1} / static_cast<T>(g.window * g.window);
  Tensor4<T> out(x.n(), x.c(), ho, wo);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          T s{0};
          for (int u = 0; u < g.window; ++u) {
            const int r = i * g.stride + u - g.pad;
            if (r < 0 || r >= x.h()) continue;
            for (int v = 0; v < g.window; ++v) {
              const int q = j * g.stride + v - g.pad;
              if (q >= 0 && q < x.w()) s += x(b, c, r, q);
            }
          }
          out(b, c, i, j) = s * scale;
        }
  return out;
}

template <class T>
Tensor4<T> avgpool_backward(Shape4 input_shape, const Tensor4<T>& grad_out, PoolGeometry g) {
  const int ho = conv_out_size(input_shape.h, g.window, g.stride, g.pad);
  const int wo = conv_out_size(input_shape.w, g.window, g.stride, g.pad);
  if (grad_out.shape() != Shape4{input_shape.n, input_shape.c, ho, wo})
    throw InvalidArgument("avgpool_backward: shape mismatch");
  const T scale = T{1} / static_cast<T>(g.window * g.window);
  Tensor4<T> gx(input_shape);
  for (int b = 0; b < input_shape.n; ++b)
    for (int c = 0; c < input_shape.c; ++c)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          const T d = grad_out(b, c, i, j) * scale;
          for (int u = 0; u < g.window; ++u) {
            const int r = i * g.stride + u - g.pad;
            if (r < 0 || r >= input_shape.h) continue;
            for (int v = 0; v < g.window; ++v) {
              const int q = j * g.stride + v - g.pad;
              if (q >= 0 && q < input_shape.w) gx(b, c, r, q) += d;
            }
          }
        }
  return gx;
}

// ---- fully connected -------------------------------------------------------

/// y = x W^T + b, with x flattened per batch item and W of shape (out, in, 1, 1).
template <class T>
Tensor4<T> fc_forward(const Tensor4<T>& x, const Tensor4<T>& weight,
                      std::type_identity_t<std::span<const T>> bias) {
  const int in = static_cast<int>(x.shape().per_item());
  const int out = weight.n();
  if (static_cast<int>(weight.shape().per_item()) != in)
    throw InvalidArgument("fc: input width " + std::to_string(in) + " does not match weights " +
                          std::to_string(weight.shape().per_item()));
  if (bias.size() != static_cast<std::size_t>(out)) throw InvalidArgument("fc: bias size mismatch");
  Tensor4<T> y(x.n(), out, 1, 1);
  MatrixMap<T> ym(y.data(), x.n(), out);
  ym.noalias() = ConstMatrixMap<T>(x.data(), x.n(), in) * ConstMatrixMap<T>(weight.data(), out, in).transpose();
  for (int b = 0; b < x.n(); ++b)
    for (int o = 0; o < out; ++o) ym(b, o) += bias[o];
  return y;
}

template <class T>
struct FcGrads {
  Tensor4<T> input;
  Tensor4<T> weight;
  std::vector<T> bias;
};

template <class T>
FcGrads<T> fc_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_out) {
  const int in = static_cast<int>(x.shape().per_item());
  const int out = weight.n();
  if (grad_out.n() != x.n() || static_cast<int>(grad_out.shape().per_item()) != out ||
      static_cast<int>(weight.shape().per_item()) != in)
    throw InvalidArgument("fc_backward: shape mismatch");
  FcGrads<T> g{Tensor4<T>(x.shape()), Tensor4<T>(weight.shape()), std::vector<T>(out, T{0})};
  ConstMatrixMap<T> gy(grad_out.data(), x.n(), out);
  MatrixMap<T>(g.weight.data(), out, in).noalias() = gy.transpose() * ConstMatrixMap<T>(x.data(), x.n(), in);
  MatrixMap<T>(g.input.data(), x.n(), in).noalias() = gy * ConstMatrixMap<T>(weight.data(), out, in);
  for (int b = 0; b < x.n(); ++b)
    for (int o = 0; o < out; ++o) g.bias[o] += gy(b, o);
  return g;
}

// ---- softmax + cross-entropy -----------------------------------------------

template <class T>
Tensor4<T> softmax(const Tensor4<T>& logits) {
  const int k = static_cast<int>(logits.shape().per_item());
  Tensor4<T> p(logits.shape());
  for (int b = 0; b < logits.n(); ++b) {
    const T* z = logits.item(b);
    T* out = p.item(b);
    const T mx = *std::max_element(z, z + k);
    T s{0};
    for (int i = 0; i < k; ++i) s += out[i] = std::exp(z[i] - mx);
    for (int i = 0; i < k; ++i) out[i] /= s;
  }
  return p;
}

template <class T>
struct LossAndGrad {
  double loss = 0.0;
  Tensor4<T> grad;
};

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits.
template <class T>
LossAndGrad<T> softmax_xent(const Tensor4<T>& logits, std::span<const int> labels) {
  if (logits.size() == 0 || labels.empty()) throw InvalidArgument("softmax_xent: empty batch");
  if (labels.size() != static_cast<std::size_t>(logits.n())) throw InvalidArgument("softmax_xent: label count mismatch");
  const int k = static_cast<int>(logits.shape().per_item());
  LossAndGrad<T> r{0.0, softmax(logits)};
  const T inv_n = T{1} / static_cast<T>(logits.n());
  for (int b = 0; b < logits.n(); ++b) {
    const int y = labels[b];
    if (y < 0 || y >= k) throw InvalidArgument("softmax_xent: label out of range");
    const T* z = logits.item(b);
    const T mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += std::exp(static_cast<double>(z[i] - mx));
    r.loss += -(static_cast<double>(z[y] - mx) - std::log(s));
    T* g = r.grad.item(b);
    g[y] -= T{1};
    for (int i = 0; i < k; ++i) g[i] *= inv_n;
  }
  r.loss /= logits.n();
  return r;
}

}  // namespace stegokit::nn
