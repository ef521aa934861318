#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedkd/nn.hpp"

namespace fedkd {

// counts[true][predicted]
struct ConfusionMatrix {
  std::size_t num_classes = kNumClasses;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t classes = kNumClasses)
      : num_classes(classes), counts(classes * classes, 0) {}

  std::uint64_t& at(std::size_t truth, std::size_t predicted) {
    return counts[truth * num_classes + predicted];
  }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * num_classes + predicted];
  }
  std::uint64_t total() const noexcept;
  // Element-wise merge of chunk results.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(std::span<const std::uint8_t> predictions,
                          std::span<const std::uint8_t> labels,
                          std::size_t num_classes = kNumClasses);

enum class Averaging { Weighted, Macro };

struct ClassMetrics {
  std::size_t class_index = 0;
  std::uint64_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool zero_predictions = false;  // precision forced to 0
  bool zero_support = false;      // recall forced to 0
};

struct EvalMetrics {
  double accuracy = 0.0;  // fraction
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Averaging averaging = Averaging::Weighted;
  std::vector<ClassMetrics> per_class;
  std::vector<std::string> warnings;
};

// Per-class precision/recall/F1 and their support-weighted (or macro) average.
EvalMetrics metrics_from_confusion(const ConfusionMatrix& cm,
                                   Averaging averaging = Averaging::Weighted);

// First recorded round whose accuracy reaches `threshold` (same units as history).
std::optional<std::uint32_t> rounds_to_threshold(
    std::span<const std::pair<std::uint32_t, double>> history, double threshold);

struct InferenceTiming {
  double mean_seconds = 0.0;
  std::size_t batch_size = 0;
  std::size_t repetitions = 0;
};

// Mean wall time of predict() over `repetitions` runs after one warm-up.
InferenceTiming inference_time(const ModelState& model, const InputBatch& batch,
                               std::size_t repetitions);

// Predicts in chunks and accumulates the confusion matrix.
ConfusionMatrix evaluate(const ModelState& model, const InputBatch& data, std::size_t chunk = 512);

}  // namespace fedkd
