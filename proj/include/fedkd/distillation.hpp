#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "fedkd/tensor.hpp"

namespace fedkd {

struct DistillConfig {
  double alpha = 0.5;        // weight of the soft (teacher) term
  double temperature = 5.0;

  void validate() const;
};

template <typename T>
struct LossValue {
  T value{};
  BasicMatrix<T> logit_gradient;
};

template <typename T>
struct BasicLossBreakdown {
  T hard{};
  T soft{};  // left at 0 when alpha == 0, the soft term is not evaluated
  T combined{};
  BasicMatrix<T> logit_gradient;
};

using LossBreakdown = BasicLossBreakdown<float>;

// Mean categorical cross-entropy of softmax(logits); gradient (p - onehot) / batch.
template <typename T>
LossValue<T> hard_loss(const BasicMatrix<T>& student_logits, std::span<const std::uint8_t> labels);

// Mean over the batch of T^2 * KL(softmax(teacher / T) || softmax(student / T)).
// The teacher is treated as a constant.
template <typename T>
LossValue<T> soft_loss(const BasicMatrix<T>& student_logits, const BasicMatrix<T>& teacher_logits,
                       T temperature);

// combined = alpha * soft + (1 - alpha) * hard, gradient likewise. With
// alpha == 0 the teacher logits are ignored and may be empty.
template <typename T>
BasicLossBreakdown<T> distill_loss(const BasicMatrix<T>& student_logits,
                                   const BasicMatrix<T>& teacher_logits,
                                   std::span<const std::uint8_t> labels,
                                   const DistillConfig& config);

// Number of soft_loss evaluations since process start (instrumentation).
std::uint64_t soft_loss_calls() noexcept;

}  // namespace fedkd
