#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace fedkd {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <typename T>
struct BasicTensor {
  Shape shape;
  std::vector<T> values;

  BasicTensor() = default;
  explicit BasicTensor(Shape s) : shape(std::move(s)), values(element_count(shape), T{}) {}

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

// Ordered per-layer tensors of one model; the unit of all FL communication.
template <typename T>
struct BasicWeights {
  std::vector<BasicTensor<T>> tensors;

  std::size_t total_params() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  bool same_layout(const BasicWeights& other) const noexcept {
    if (tensors.size() != other.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (tensors[i].shape != other.tensors[i].shape) return false;
    }
    return true;
  }

  BasicWeights zeros_like() const {
    BasicWeights out;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) out.tensors.emplace_back(t.shape);
    return out;
  }

  template <typename U>
  BasicWeights<U> cast() const {
    BasicWeights<U> out;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) {
      BasicTensor<U> u;
      u.shape = t.shape;
      u.values.assign(t.values.begin(), t.values.end());
      out.tensors.push_back(std::move(u));
    }
    return out;
  }

  friend bool operator==(const BasicWeights&, const BasicWeights&) = default;
};

using Tensor = BasicTensor<float>;
using WeightVector = BasicWeights<float>;

template <typename T>
struct BasicMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  BasicMatrix() = default;
  BasicMatrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), values(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) noexcept { return values[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }
  std::span<T> row(std::size_t r) noexcept { return {values.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const noexcept { return {values.data() + r * cols, cols}; }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;
};

using Matrix = BasicMatrix<float>;

// Row-wise softmax of logits / temperature, computed with the max-shift trick.
template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& logits, T temperature = T{1}) {
  BasicMatrix<T> out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto in = logits.row(r);
    auto dst = out.row(r);
    if (in.empty()) continue;
    const T peak = *std::max_element(in.begin(), in.end());
    T sum{};
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp((in[c] - peak) / temperature);
      sum += dst[c];
    }
    for (auto& v : dst) v /= sum;
  }
  return out;
}

// Row-wise log-softmax of logits / temperature.
template <typename T>
BasicMatrix<T> log_softmax_rows(const BasicMatrix<T>& logits, T temperature = T{1}) {
  BasicMatrix<T> out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto in = logits.row(r);
    auto dst = out.row(r);
    if (in.empty()) continue;
    const T peak = *std::max_element(in.begin(), in.end()) / temperature;
    T sum{};
    for (std::size_t c = 0; c < in.size(); ++c) sum += std::exp(in[c] / temperature - peak);
    const T log_norm = peak + std::log(sum);
    for (std::size_t c = 0; c < in.size(); ++c) dst[c] = in[c] / temperature - log_norm;
  }
  return out;
}

}  // namespace fedkd
