#include "fedkd/distillation.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "fedkd/error.hpp"

namespace fedkd {
namespace {

std::atomic<std::uint64_t> soft_calls{0};

}  // namespace

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

std::uint64_t soft_loss_calls() noexcept { return soft_calls.load(); }

template <typename T>
LossValue<T> hard_loss(const BasicMatrix<T>& student_logits, std::span<const std::uint8_t> labels) {
  if (labels.size() != student_logits.rows) throw DataError("hard_loss: label count differs from batch");
  if (student_logits.rows == 0) throw DataError("hard_loss: empty batch");
  for (const auto label : labels) {
    if (label >= student_logits.cols) {
      throw DataError("hard_loss: label " + std::to_string(label) + " out of range");
    }
  }
  const auto log_p = log_softmax_rows(student_logits);
  const T inv_batch = T{1} / static_cast<T>(student_logits.rows);
  LossValue<T> out;
  out.logit_gradient = BasicMatrix<T>(student_logits.rows, student_logits.cols);
  T total{};
  for (std::size_t r = 0; r < student_logits.rows; ++r) {
    total -= log_p(r, labels[r]);
    for (std::size_t c = 0; c < student_logits.cols; ++c) {
      const T onehot = c == labels[r] ? T{1} : T{0};
      out.logit_gradient(r, c) = (std::exp(log_p(r, c)) - onehot) * inv_batch;
    }
  }
  out.value = total * inv_batch;
  return out;
}

template <typename T>
LossValue<T> soft_loss(const BasicMatrix<T>& student_logits, const BasicMatrix<T>& teacher_logits,
                       T temperature) {
  soft_calls.fetch_add(1, std::memory_order_relaxed);
  if (!(temperature > T{0})) throw ConfigError("soft_loss: temperature must be positive");
  if (student_logits.rows != teacher_logits.rows || student_logits.cols != teacher_logits.cols) {
    throw DataError("soft_loss: teacher and student logits differ in shape");
  }
  if (student_logits.rows == 0) throw DataError("soft_loss: empty batch");
  const auto log_q = log_softmax_rows(student_logits, temperature);
  const auto log_p = log_softmax_rows(teacher_logits, temperature);
  const T inv_batch = T{1} / static_cast<T>(student_logits.rows);
  const T t2 = temperature * temperature;
  LossValue<T> out;
  out.logit_gradient = BasicMatrix<T>(student_logits.rows, student_logits.cols);
  T total{};
  for (std::size_t r = 0; r < student_logits.rows; ++r) {
    T kl{};
    for (std::size_t c = 0; c < student_logits.cols; ++c) {
      const T p = std::exp(log_p(r, c));
      const T q = std::exp(log_q(r, c));
      if (p > T{0}) kl += p * (log_p(r, c) - log_q(r, c));
      // d/dz_s [T^2 KL] = T (q - p)
      out.logit_gradient(r, c) = temperature * (q - p) * inv_batch;
    }
    total += kl;
  }
  out.value = t2 * total * inv_batch;
  if (out.value < T{0}) out.value = T{0};  // rounding can leave -1 ulp for equal rows
  return out;
}

template <typename T>
BasicLossBreakdown<T> distill_loss(const BasicMatrix<T>& student_logits,
                                   const BasicMatrix<T>& teacher_logits,
                                   std::span<const std::uint8_t> labels,
                                   const DistillConfig& config) {
  config.validate();
  const T alpha = static_cast<T>(config.alpha);
  const T beta = T{1} - alpha;
  auto hard = hard_loss(student_logits, labels);
  BasicLossBreakdown<T> out;
  out.hard = hard.value;
  if (alpha == T{0}) {
    out.combined = beta * hard.value;
    out.logit_gradient = std::move(hard.logit_gradient);
    for (auto& g : out.logit_gradient.values) g = beta * g;
    return out;
  }
  auto soft = soft_loss(student_logits, teacher_logits, static_cast<T>(config.temperature));
  out.soft = soft.value;
  out.combined = alpha * soft.value + beta * hard.value;
  out.logit_gradient = BasicMatrix<T>(student_logits.rows, student_logits.cols);
  for (std::size_t i = 0; i < out.logit_gradient.values.size(); ++i) {
    out.logit_gradient.values[i] =
        alpha * soft.logit_gradient.values[i] + beta * hard.logit_gradient.values[i];
  }
  return out;
}

template LossValue<float> hard_loss(const BasicMatrix<float>&, std::span<const std::uint8_t>);
template LossValue<double> hard_loss(const BasicMatrix<double>&, std::span<const std::uint8_t>);
template LossValue<float> soft_loss(const BasicMatrix<float>&, const BasicMatrix<float>&, float);
template LossValue<double> soft_loss(const BasicMatrix<double>&, const BasicMatrix<double>&, double);
template BasicLossBreakdown<float> distill_loss(const BasicMatrix<float>&, const BasicMatrix<float>&,
                                                std::span<const std::uint8_t>, const DistillConfig&);
template BasicLossBreakdown<double> distill_loss(const BasicMatrix<double>&, const BasicMatrix<double>&,
                                                 std::span<const std::uint8_t>, const DistillConfig&);

}  // namespace fedkd
