#include "fedkd/metrics.hpp"

#include <chrono>
#include <string>

#include "fedkd/error.hpp"

namespace fedkd {

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t n = 0;
  for (const auto c : counts) n += c;
  return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes != num_classes) throw UsageError("confusion merge: class counts differ");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ConfusionMatrix confusion(std::span<const std::uint8_t> predictions,
                          std::span<const std::uint8_t> labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw UsageError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw UsageError("confusion: no samples");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw UsageError("confusion: class index out of range");
    }
    ++cm.at(labels[i], predictions[i]);
  }
  return cm;
}

EvalMetrics metrics_from_confusion(const ConfusionMatrix& cm, Averaging averaging) {
  const std::size_t k = cm.num_classes;
  const std::uint64_t total = cm.total();
  if (total == 0) throw UsageError("metrics: empty confusion matrix");

  EvalMetrics m;
  m.averaging = averaging;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t tp = cm.at(c, c);
    std::uint64_t predicted = 0;
    std::uint64_t support = 0;
    for (std::size_t j = 0; j < k; ++j) {
      predicted += cm.at(j, c);
      support += cm.at(c, j);
    }
    trace += tp;
    ClassMetrics cls;
    cls.class_index = c;
    cls.support = support;
    if (predicted == 0) {
      cls.zero_predictions = true;
      if (support > 0) m.warnings.push_back("class " + std::to_string(c) + " never predicted; precision set to 0");
    } else {
      cls.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    }
    if (support == 0) {
      cls.zero_support = true;
    } else {
      cls.recall = static_cast<double>(tp) / static_cast<double>(support);
    }
    const double denom = cls.precision + cls.recall;
    cls.f1 = denom > 0.0 ? 2.0 * cls.precision * cls.recall / denom : 0.0;
    m.per_class.push_back(cls);
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  if (averaging == Averaging::Weighted) {
    for (const auto& cls : m.per_class) {
      const double w = static_cast<double>(cls.support) / static_cast<double>(total);
      m.precision += w * cls.precision;
      m.recall += w * cls.recall;
      m.f1 += w * cls.f1;
    }
  } else {
    std::size_t present = 0;
    for (const auto& cls : m.per_class) {
      if (cls.zero_support && cls.zero_predictions) continue;
      m.precision += cls.precision;
      m.recall += cls.recall;
      m.f1 += cls.f1;
      ++present;
    }
    if (present > 0) {
      m.precision /= static_cast<double>(present);
      m.recall /= static_cast<double>(present);
      m.f1 /= static_cast<double>(present);
    }
  }
  return m;
}

std::optional<std::uint32_t> rounds_to_threshold(
    std::span<const std::pair<std::uint32_t, double>> history, double threshold) {
  for (const auto& [round, accuracy] : history) {
    if (accuracy >= threshold) return round;
  }
  return std::nullopt;
}

InferenceTiming inference_time(const ModelState& model, const InputBatch& batch,
                               std::size_t repetitions) {
  if (batch.size == 0) throw UsageError("inference_time: empty batch");
  if (repetitions < 3) throw UsageError("inference_time: needs at least 3 repetitions");
  (void)predict(model, batch);  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < repetitions; ++i) (void)predict(model, batch);
  const auto stop = std::chrono::steady_clock::now();
  return {std::chrono::duration<double>(stop - start).count() / static_cast<double>(repetitions),
          batch.size, repetitions};
}

ConfusionMatrix evaluate(const ModelState& model, const InputBatch& data, std::size_t chunk) {
  if (data.size == 0) throw UsageError("evaluate: empty data");
  ConfusionMatrix cm(model.arch().num_classes);
  const std::size_t len = data.input_length;
  for (std::size_t start = 0; start < data.size; start += chunk) {
    const std::size_t n = std::min(chunk, data.size - start);
    InputBatch part;
    part.size = n;
    part.input_length = len;
    part.features.assign(data.features.begin() + static_cast<std::ptrdiff_t>(start * len),
                         data.features.begin() + static_cast<std::ptrdiff_t>((start + n) * len));
    part.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                       data.labels.begin() + static_cast<std::ptrdiff_t>(start + n));
    const auto p = predict(model, part);
    cm += confusion(p.classes, part.labels, cm.num_classes);
  }
  return cm;
}

}  // namespace fedkd
