#pragma once

// Teacher/student 1D-CNN engine: shape propagation, forward/backward passes,
// Adam updates and the FKDW weight blob.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedkd/tensor.hpp"

namespace fedkd {

inline constexpr std::size_t kNumClasses = 6;

enum class LayerKind { Conv1D, MaxPool1D, Flatten, DenseReLU, DenseSoftmax };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::size_t kernel_size = 0;
  std::size_t units = 0;  // output channels for Conv1D, units for Dense layers
  std::size_t stride = 1;

  static LayerSpec conv1d(std::size_t kernel, std::size_t filters) {
    return {LayerKind::Conv1D, kernel, filters, 1};
  }
  static LayerSpec maxpool() { return {LayerKind::MaxPool1D, 2, 0, 2}; }
  static LayerSpec flatten() { return {LayerKind::Flatten, 0, 0, 1}; }
  static LayerSpec dense_relu(std::size_t units) { return {LayerKind::DenseReLU, 0, units, 1}; }
  static LayerSpec dense_softmax(std::size_t units) {
    return {LayerKind::DenseSoftmax, 0, units, 1};
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Activation shape after a layer. Flat shapes carry their unit count in `length`.
struct ActivationShape {
  std::size_t length = 0;
  std::size_t channels = 1;
  bool flat = false;

  std::size_t size() const noexcept { return flat ? length : length * channels; }
  // "(28, 32)" for sequences, "384" for flat vectors.
  std::string to_string() const;
  friend bool operator==(const ActivationShape&, const ActivationShape&) = default;
};

struct ModelArch {
  std::size_t input_length = 30;
  std::size_t input_channels = 1;
  std::vector<LayerSpec> layers;
  std::size_t num_classes = kNumClasses;

  // 32/64 conv filters, dense 128.
  static ModelArch teacher(std::size_t input_length = 30);
  // 16/32 conv filters, dense 64.
  static ModelArch student(std::size_t input_length = 30);

  // Throws ConfigError when shapes cannot be propagated.
  void validate() const;
  // Output shape of every layer, in order.
  std::vector<ActivationShape> shape_trace() const;

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

struct ParamCount {
  std::vector<std::size_t> per_layer;
  std::size_t total = 0;
};

ParamCount param_count(const ModelArch& arch);

// One entry per weight tensor, in WeightVector order.
struct TensorSlot {
  std::size_t layer_index;
  Shape shape;
  bool is_bias;
};

std::vector<TensorSlot> weight_layout(const ModelArch& arch);

// Zero-filled weights with the layout of `arch`.
WeightVector zero_weights(const ModelArch& arch);

// Glorot-uniform kernels, zero biases.
WeightVector init_weights(const ModelArch& arch, std::uint64_t seed);

bool conforms(const WeightVector& weights, const ModelArch& arch);

struct AdamState {
  WeightVector first_moment;
  WeightVector second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Parameters plus optimizer state for one model. Every mutation bumps a
// version so backward() can reject caches from an earlier forward pass.
class ModelState {
 public:
  ModelState(ModelArch arch, WeightVector weights, double learning_rate = 0.001);

  static ModelState initialized(const ModelArch& arch, std::uint64_t seed,
                                double learning_rate = 0.001);

  const ModelArch& arch() const noexcept { return arch_; }
  const WeightVector& weights() const noexcept { return weights_; }
  const AdamState& optimizer() const noexcept { return optimizer_; }
  AdamState& optimizer() noexcept { return optimizer_; }

  // Replaces the parameters; optimizer moments are kept.
  void load_weights(WeightVector weights);

  // Identifies this object and its current parameters.
  std::uint64_t instance_id() const noexcept { return instance_id_; }
  std::uint64_t version() const noexcept { return version_; }

  ModelState(const ModelState& other);
  ModelState& operator=(const ModelState& other);
  ModelState(ModelState&&) noexcept = default;
  ModelState& operator=(ModelState&&) noexcept = default;

 private:
  friend void adam_step(ModelState& model, const WeightVector& gradients);

  ModelArch arch_;
  WeightVector weights_;
  AdamState optimizer_;
  std::uint64_t instance_id_;
  std::uint64_t version_ = 0;
};

// Features laid out [batch, input_length, 1], already scaled to [0, 1].
struct InputBatch {
  std::size_t size = 0;
  std::size_t input_length = 0;
  std::vector<float> features;
  std::vector<std::uint8_t> labels;
};

template <typename T>
struct ForwardCache {
  std::uint64_t instance_id = 0;
  std::uint64_t version = 0;
  std::size_t batch = 0;
  // inputs[i] is the input of layer i; pre[i] holds the pre-activation of
  // ReLU layers; argmax[i] the routing of pool layers.
  std::vector<std::vector<T>> inputs;
  std::vector<std::vector<T>> pre;
  std::vector<std::vector<std::uint32_t>> argmax;
  BasicMatrix<T> logits;

  bool empty() const noexcept { return inputs.empty(); }
};

// Arch-level passes used by both precisions. No staleness tracking.
template <typename T>
ForwardCache<T> forward(const ModelArch& arch, const BasicWeights<T>& weights,
                        std::span<const T> features, std::size_t batch);

template <typename T>
BasicWeights<T> backward(const ModelArch& arch, const BasicWeights<T>& weights,
                         const ForwardCache<T>& cache, const BasicMatrix<T>& logit_gradient);

ForwardCache<float> forward(const ModelState& model, const InputBatch& batch);

// Throws UsageError if the cache is empty or was produced by another model or
// an older version of this one.
WeightVector backward(const ModelState& model, const ForwardCache<float>& cache,
                      const Matrix& logit_gradient);

// Bias-corrected Adam. Throws NumericError (with the owning layer index)
// before touching any weight if a gradient is NaN/Inf.
void adam_step(ModelState& model, const WeightVector& gradients);

struct Prediction {
  std::vector<std::uint8_t> classes;
  Matrix probabilities;
};

// Softmax at temperature 1; argmax ties go to the lowest class index.
Prediction predict(const ModelState& model, const InputBatch& batch);

std::size_t argmax_lowest(std::span<const float> row);

inline constexpr std::uint32_t kWeightBlobVersion = 1;
inline constexpr std::size_t kWeightBlobHeaderBytes = 16;

std::vector<std::uint8_t> serialize_weights(const WeightVector& weights);
WeightVector deserialize_weights(std::span<const std::uint8_t> blob, const ModelArch& arch);

// Equals serialize_weights(weights).size().
constexpr std::size_t update_size_bytes(std::size_t total_params) noexcept {
  return kWeightBlobHeaderBytes + 4 * total_params;
}
inline std::size_t update_size_bytes(const WeightVector& weights) noexcept {
  return update_size_bytes(weights.total_params());
}

}  // namespace fedkd
