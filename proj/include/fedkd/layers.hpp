#pragma once

// Batched layer kernels shared by the float32 training path and the float64
// gradient-check path. Activations are laid out [batch, length, channels]
// with channels innermost; flattened activations are [batch, units].

#include <cstddef>
#include <cstdint>
#include <span>

namespace fedkd::layers {

// y[b, t, o] = bias[o] + sum_{k, c} x[b, t + k, c] * w[k, c, o]  (stride 1, valid).
template <typename T>
void conv1d_forward(std::span<const T> x, std::size_t batch, std::size_t length,
                    std::size_t in_channels, std::span<const T> w, std::span<const T> bias,
                    std::size_t kernel, std::size_t out_channels, std::span<T> y) {
  const std::size_t out_len = length - kernel + 1;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * length * in_channels;
    T* yb = y.data() + b * out_len * out_channels;
    for (std::size_t t = 0; t < out_len; ++t) {
      T* yt = yb + t * out_channels;
      for (std::size_t o = 0; o < out_channels; ++o) yt[o] = bias[o];
      for (std::size_t k = 0; k < kernel; ++k) {
        const T* xt = xb + (t + k) * in_channels;
        const T* wk = w.data() + k * in_channels * out_channels;
        for (std::size_t c = 0; c < in_channels; ++c) {
          const T xv = xt[c];
          const T* wkc = wk + c * out_channels;
          for (std::size_t o = 0; o < out_channels; ++o) yt[o] += xv * wkc[o];
        }
      }
    }
  }
}

// Accumulates into dw/dbias; dx is overwritten when non-empty.
template <typename T>
void conv1d_backward(std::span<const T> x, std::size_t batch, std::size_t length,
                     std::size_t in_channels, std::span<const T> w, std::size_t kernel,
                     std::size_t out_channels, std::span<const T> dy, std::span<T> dw,
                     std::span<T> dbias, std::span<T> dx) {
  const std::size_t out_len = length - kernel + 1;
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), T{});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * length * in_channels;
    const T* dyb = dy.data() + b * out_len * out_channels;
    T* dxb = dx.empty() ? nullptr : dx.data() + b * length * in_channels;
    for (std::size_t t = 0; t < out_len; ++t) {
      const T* dyt = dyb + t * out_channels;
      for (std::size_t o = 0; o < out_channels; ++o) dbias[o] += dyt[o];
      for (std::size_t k = 0; k < kernel; ++k) {
        const T* xt = xb + (t + k) * in_channels;
        for (std::size_t c = 0; c < in_channels; ++c) {
          const std::size_t base = (k * in_channels + c) * out_channels;
          T* dwkc = dw.data() + base;
          const T* wkc = w.data() + base;
          const T xv = xt[c];
          T acc{};
          for (std::size_t o = 0; o < out_channels; ++o) {
            dwkc[o] += xv * dyt[o];
            acc += wkc[o] * dyt[o];
          }
          if (dxb) dxb[(t + k) * in_channels + c] += acc;
        }
      }
    }
  }
}

// Window 2, stride 2. argmax receives the flat input index chosen for each
// output; ties resolve to the earlier position.
template <typename T>
void maxpool_forward(std::span<const T> x, std::size_t batch, std::size_t length,
                     std::size_t channels, std::span<T> y, std::span<std::uint32_t> argmax) {
  const std::size_t out_len = length / 2;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i0 = (b * length + 2 * t) * channels + c;
        const std::size_t i1 = i0 + channels;
        const std::size_t pick = x[i0] >= x[i1] ? i0 : i1;
        const std::size_t out = (b * out_len + t) * channels + c;
        y[out] = x[pick];
        argmax[out] = static_cast<std::uint32_t>(pick);
      }
    }
  }
}

template <typename T>
void maxpool_backward(std::span<const T> dy, std::span<const std::uint32_t> argmax,
                      std::span<T> dx) {
  std::fill(dx.begin(), dx.end(), T{});
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
}

// y[b, o] = bias[o] + sum_i x[b, i] * w[i, o]
template <typename T>
void dense_forward(std::span<const T> x, std::size_t batch, std::size_t in, std::span<const T> w,
                   std::span<const T> bias, std::size_t out, std::span<T> y) {
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * in;
    T* yb = y.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) yb[o] = bias[o];
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = xb[i];
      const T* wi = w.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yb[o] += xv * wi[o];
    }
  }
}

template <typename T>
void dense_backward(std::span<const T> x, std::size_t batch, std::size_t in, std::span<const T> w,
                    std::size_t out, std::span<const T> dy, std::span<T> dw, std::span<T> dbias,
                    std::span<T> dx) {
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * in;
    const T* dyb = dy.data() + b * out;
    T* dxb = dx.empty() ? nullptr : dx.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) dbias[o] += dyb[o];
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = xb[i];
      T* dwi = dw.data() + i * out;
      const T* wi = w.data() + i * out;
      T acc{};
      for (std::size_t o = 0; o < out; ++o) {
        dwi[o] += xv * dyb[o];
        acc += wi[o] * dyb[o];
      }
      if (dxb) dxb[i] = acc;
    }
  }
}

template <typename T>
void relu_forward(std::span<const T> pre, std::span<T> y) {
  for (std::size_t i = 0; i < pre.size(); ++i) y[i] = pre[i] > T{} ? pre[i] : T{};
}

template <typename T>
void relu_backward(std::span<const T> pre, std::span<const T> dy, std::span<T> dpre) {
  for (std::size_t i = 0; i < pre.size(); ++i) dpre[i] = pre[i] > T{} ? dy[i] : T{};
}

}  // namespace fedkd::layers
