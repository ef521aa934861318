#include "fedkd/nn.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fedkd/error.hpp"
#include "fedkd/layers.hpp"
#include "fedkd/random.hpp"

namespace fedkd {
namespace {

std::atomic<std::uint64_t> next_instance_id{1};

constexpr char kBlobMagic[4] = {'F', 'K', 'D', 'W'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1D: return "Conv1D";
    case LayerKind::MaxPool1D: return "MaxPooling1D";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::DenseReLU: return "Dense (ReLU)";
    case LayerKind::DenseSoftmax: return "Dense (Softmax)";
  }
  return "?";
}

std::string ActivationShape::to_string() const {
  if (flat) return std::to_string(length);
  std::ostringstream os;
  os << '(' << length << ", " << channels << ')';
  return os.str();
}

ModelArch ModelArch::teacher(std::size_t input_length) {
  ModelArch arch;
  arch.input_length = input_length;
  arch.layers = {LayerSpec::conv1d(3, 32), LayerSpec::maxpool(),       LayerSpec::conv1d(3, 64),
                 LayerSpec::maxpool(),     LayerSpec::flatten(),       LayerSpec::dense_relu(128),
                 LayerSpec::dense_softmax(kNumClasses)};
  return arch;
}

ModelArch ModelArch::student(std::size_t input_length) {
  ModelArch arch;
  arch.input_length = input_length;
  arch.layers = {LayerSpec::conv1d(3, 16), LayerSpec::maxpool(),       LayerSpec::conv1d(3, 32),
                 LayerSpec::maxpool(),     LayerSpec::flatten(),       LayerSpec::dense_relu(64),
                 LayerSpec::dense_softmax(kNumClasses)};
  return arch;
}

std::vector<ActivationShape> ModelArch::shape_trace() const {
  if (input_length == 0 || input_channels == 0) throw ConfigError("arch: empty input shape");
  if (layers.empty()) throw ConfigError("arch: no layers");
  if (num_classes == 0) throw ConfigError("arch: num_classes must be positive");

  std::vector<ActivationShape> trace;
  ActivationShape cur{input_length, input_channels, false};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "arch layer " + std::to_string(i) + " (" + fedkd::to_string(l.kind) + "): ";
    switch (l.kind) {
      case LayerKind::Conv1D:
        if (cur.flat) throw ConfigError(where + "needs a sequence input");
        if (l.stride != 1) throw ConfigError(where + "stride must be 1");
        if (l.kernel_size == 0 || l.units == 0) throw ConfigError(where + "kernel and filters must be positive");
        if (l.kernel_size > cur.length) throw ConfigError(where + "kernel longer than input");
        cur = {cur.length - l.kernel_size + 1, l.units, false};
        break;
      case LayerKind::MaxPool1D:
        if (cur.flat) throw ConfigError(where + "needs a sequence input");
        if (l.kernel_size != 2 || l.stride != 2) throw ConfigError(where + "window and stride must be 2");
        if (cur.length < 2) throw ConfigError(where + "input shorter than pool window");
        cur = {cur.length / 2, cur.channels, false};
        break;
      case LayerKind::Flatten:
        if (cur.flat) throw ConfigError(where + "input already flat");
        cur = {cur.length * cur.channels, 1, true};
        break;
      case LayerKind::DenseReLU:
      case LayerKind::DenseSoftmax:
        if (!cur.flat) throw ConfigError(where + "needs a flattened input");
        if (l.units == 0) throw ConfigError(where + "units must be positive");
        cur = {l.units, 1, true};
        break;
    }
    if (l.kind == LayerKind::DenseSoftmax) {
      if (i + 1 != layers.size()) throw ConfigError(where + "must be the last layer");
      if (l.units != num_classes) throw ConfigError(where + "units must equal num_classes");
    }
    trace.push_back(cur);
  }
  if (layers.back().kind != LayerKind::DenseSoftmax) {
    throw ConfigError("arch: last layer must be Dense (Softmax)");
  }
  return trace;
}

void ModelArch::validate() const { (void)shape_trace(); }

std::vector<TensorSlot> weight_layout(const ModelArch& arch) {
  const auto trace = arch.shape_trace();
  std::vector<TensorSlot> slots;
  ActivationShape in{arch.input_length, arch.input_channels, false};
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    if (l.kind == LayerKind::Conv1D) {
      slots.push_back({i, {l.kernel_size, in.channels, l.units}, false});
      slots.push_back({i, {l.units}, true});
    } else if (l.kind == LayerKind::DenseReLU || l.kind == LayerKind::DenseSoftmax) {
      slots.push_back({i, {in.size(), l.units}, false});
      slots.push_back({i, {l.units}, true});
    }
    in = trace[i];
  }
  return slots;
}

ParamCount param_count(const ModelArch& arch) {
  ParamCount pc;
  pc.per_layer.assign(arch.layers.size(), 0);
  for (const auto& slot : weight_layout(arch)) {
    const std::size_t n = element_count(slot.shape);
    pc.per_layer[slot.layer_index] += n;
    pc.total += n;
  }
  return pc;
}

WeightVector zero_weights(const ModelArch& arch) {
  WeightVector w;
  for (const auto& slot : weight_layout(arch)) w.tensors.emplace_back(slot.shape);
  return w;
}

WeightVector init_weights(const ModelArch& arch, std::uint64_t seed) {
  WeightVector w = zero_weights(arch);
  Rng rng(derive_seed(seed, 0x696E6974 /* "init" */));
  for (auto& t : w.tensors) {
    if (t.shape.size() < 2) continue;  // bias
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    if (t.shape.size() == 3) {  // [kernel, in, out]
      fan_in = t.shape[0] * t.shape[1];
      fan_out = t.shape[0] * t.shape[2];
    } else {
      fan_in = t.shape[0];
      fan_out = t.shape[1];
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.values) v = static_cast<float>(rng.uniform(-limit, limit));
  }
  return w;
}

bool conforms(const WeightVector& weights, const ModelArch& arch) {
  const auto layout = weight_layout(arch);
  if (weights.tensors.size() != layout.size()) return false;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (weights.tensors[i].shape != layout[i].shape) return false;
    if (weights.tensors[i].values.size() != element_count(layout[i].shape)) return false;
  }
  return true;
}

ModelState::ModelState(ModelArch arch, WeightVector weights, double learning_rate)
    : arch_(std::move(arch)), weights_(std::move(weights)), instance_id_(next_instance_id++) {
  arch_.validate();
  if (!conforms(weights_, arch_)) throw ConfigError("model weights do not conform to arch");
  optimizer_.first_moment = weights_.zeros_like();
  optimizer_.second_moment = weights_.zeros_like();
  optimizer_.learning_rate = learning_rate;
}

ModelState ModelState::initialized(const ModelArch& arch, std::uint64_t seed,
                                   double learning_rate) {
  return ModelState(arch, init_weights(arch, seed), learning_rate);
}

ModelState::ModelState(const ModelState& other)
    : arch_(other.arch_),
      weights_(other.weights_),
      optimizer_(other.optimizer_),
      instance_id_(next_instance_id++),
      version_(0) {}

ModelState& ModelState::operator=(const ModelState& other) {
  if (this != &other) {
    arch_ = other.arch_;
    weights_ = other.weights_;
    optimizer_ = other.optimizer_;
    ++version_;
  }
  return *this;
}

void ModelState::load_weights(WeightVector weights) {
  if (!conforms(weights, arch_)) throw ConfigError("loaded weights do not conform to arch");
  weights_ = std::move(weights);
  ++version_;
}

template <typename T>
ForwardCache<T> forward(const ModelArch& arch, const BasicWeights<T>& weights,
                        std::span<const T> features, std::size_t batch) {
  const auto trace = arch.shape_trace();
  if (batch == 0) throw ConfigError("forward: empty batch");
  if (features.size() != batch * arch.input_length * arch.input_channels) {
    throw ConfigError("forward: feature length does not match arch input_length");
  }
  const auto layout = weight_layout(arch);
  if (weights.tensors.size() != layout.size()) throw ConfigError("forward: weights do not match arch");

  ForwardCache<T> cache;
  cache.batch = batch;
  cache.inputs.resize(arch.layers.size());
  cache.pre.resize(arch.layers.size());
  cache.argmax.resize(arch.layers.size());

  std::vector<T> cur(features.begin(), features.end());
  ActivationShape in{arch.input_length, arch.input_channels, false};
  std::size_t slot = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const ActivationShape out_shape = trace[i];
    std::vector<T> out(batch * out_shape.size());
    switch (l.kind) {
      case LayerKind::Conv1D: {
        const auto& w = weights.tensors[slot].values;
        const auto& b = weights.tensors[slot + 1].values;
        slot += 2;
        std::vector<T> pre(out.size());
        layers::conv1d_forward<T>(cur, batch, in.length, in.channels, w, b, l.kernel_size, l.units, pre);
        layers::relu_forward<T>(pre, out);
        cache.pre[i] = std::move(pre);
        break;
      }
      case LayerKind::MaxPool1D: {
        std::vector<std::uint32_t> idx(out.size());
        layers::maxpool_forward<T>(cur, batch, in.length, in.channels, out, idx);
        cache.argmax[i] = std::move(idx);
        break;
      }
      case LayerKind::Flatten:
        out = cur;  // layout is already [batch, length * channels]
        break;
      case LayerKind::DenseReLU:
      case LayerKind::DenseSoftmax: {
        const auto& w = weights.tensors[slot].values;
        const auto& b = weights.tensors[slot + 1].values;
        slot += 2;
        if (l.kind == LayerKind::DenseReLU) {
          std::vector<T> pre(out.size());
          layers::dense_forward<T>(cur, batch, in.size(), w, b, l.units, pre);
          layers::relu_forward<T>(pre, out);
          cache.pre[i] = std::move(pre);
        } else {
          layers::dense_forward<T>(cur, batch, in.size(), w, b, l.units, out);
        }
        break;
      }
    }
    cache.inputs[i] = std::move(cur);
    cur = std::move(out);
    in = out_shape;
  }
  cache.logits.rows = batch;
  cache.logits.cols = arch.num_classes;
  cache.logits.values = std::move(cur);
  return cache;
}

template <typename T>
BasicWeights<T> backward(const ModelArch& arch, const BasicWeights<T>& weights,
                         const ForwardCache<T>& cache, const BasicMatrix<T>& logit_gradient) {
  if (cache.empty()) throw UsageError("backward: missing forward cache");
  if (cache.inputs.size() != arch.layers.size()) throw UsageError("backward: cache belongs to another arch");
  if (logit_gradient.rows != cache.batch || logit_gradient.cols != arch.num_classes) {
    throw UsageError("backward: logit gradient shape does not match cache");
  }
  const auto trace = arch.shape_trace();
  BasicWeights<T> grads = weights.zeros_like();

  std::size_t slot = weights.tensors.size();
  std::vector<T> dy = logit_gradient.values;
  const std::size_t batch = cache.batch;
  for (std::size_t idx = arch.layers.size(); idx-- > 0;) {
    const LayerSpec& l = arch.layers[idx];
    const ActivationShape in = idx == 0 ? ActivationShape{arch.input_length, arch.input_channels, false}
                                        : trace[idx - 1];
    const std::vector<T>& x = cache.inputs[idx];
    // The input gradient of the first layer is never needed.
    std::vector<T> dx(idx == 0 ? 0 : x.size());
    switch (l.kind) {
      case LayerKind::Conv1D: {
        slot -= 2;
        std::vector<T> dpre(dy.size());
        layers::relu_backward<T>(cache.pre[idx], dy, dpre);
        layers::conv1d_backward<T>(x, batch, in.length, in.channels, weights.tensors[slot].values,
                                   l.kernel_size, l.units, dpre, grads.tensors[slot].values,
                                   grads.tensors[slot + 1].values, dx);
        break;
      }
      case LayerKind::MaxPool1D:
        if (idx == 0) dx.resize(x.size());
        layers::maxpool_backward<T>(dy, cache.argmax[idx], dx);
        break;
      case LayerKind::Flatten:
        dx = dy;
        break;
      case LayerKind::DenseReLU:
      case LayerKind::DenseSoftmax: {
        slot -= 2;
        std::vector<T> dpre;
        if (l.kind == LayerKind::DenseReLU) {
          dpre.resize(dy.size());
          layers::relu_backward<T>(cache.pre[idx], dy, dpre);
        } else {
          dpre = dy;
        }
        layers::dense_backward<T>(x, batch, in.size(), weights.tensors[slot].values, l.units, dpre,
                                  grads.tensors[slot].values, grads.tensors[slot + 1].values, dx);
        break;
      }
    }
    dy = std::move(dx);
  }
  return grads;
}

template ForwardCache<float> forward(const ModelArch&, const BasicWeights<float>&,
                                     std::span<const float>, std::size_t);
template ForwardCache<double> forward(const ModelArch&, const BasicWeights<double>&,
                                      std::span<const double>, std::size_t);
template BasicWeights<float> backward(const ModelArch&, const BasicWeights<float>&,
                                      const ForwardCache<float>&, const BasicMatrix<float>&);
template BasicWeights<double> backward(const ModelArch&, const BasicWeights<double>&,
                                       const ForwardCache<double>&, const BasicMatrix<double>&);

ForwardCache<float> forward(const ModelState& model, const InputBatch& batch) {
  if (batch.input_length != model.arch().input_length) {
    throw ConfigError("forward: batch feature length " + std::to_string(batch.input_length) +
                      " differs from arch input_length " + std::to_string(model.arch().input_length));
  }
  auto cache = forward<float>(model.arch(), model.weights(), batch.features, batch.size);
  cache.instance_id = model.instance_id();
  cache.version = model.version();
  return cache;
}

WeightVector backward(const ModelState& model, const ForwardCache<float>& cache,
                      const Matrix& logit_gradient) {
  if (cache.empty()) throw UsageError("backward: missing forward cache");
  if (cache.instance_id != model.instance_id() || cache.version != model.version()) {
    throw UsageError("backward: stale forward cache");
  }
  return backward<float>(model.arch(), model.weights(), cache, logit_gradient);
}

void adam_step(ModelState& model, const WeightVector& gradients) {
  if (!gradients.same_layout(model.weights_)) throw ConfigError("adam_step: gradient shapes differ from weights");
  const auto layout = weight_layout(model.arch_);
  for (std::size_t t = 0; t < gradients.tensors.size(); ++t) {
    for (const float g : gradients.tensors[t].values) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in layer " +
                               std::to_string(layout[t].layer_index),
                           layout[t].layer_index);
      }
    }
  }

  AdamState& opt = model.optimizer_;
  opt.step_count += 1;
  const double step = static_cast<double>(opt.step_count);
  const float b1 = static_cast<float>(opt.beta1);
  const float b2 = static_cast<float>(opt.beta2);
  const float lr = static_cast<float>(opt.learning_rate);
  const float eps = static_cast<float>(opt.epsilon);
  const float correction1 = static_cast<float>(1.0 - std::pow(opt.beta1, step));
  const float correction2 = static_cast<float>(1.0 - std::pow(opt.beta2, step));
  for (std::size_t t = 0; t < gradients.tensors.size(); ++t) {
    auto& w = model.weights_.tensors[t].values;
    auto& m = opt.first_moment.tensors[t].values;
    auto& v = opt.second_moment.tensors[t].values;
    const auto& g = gradients.tensors[t].values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float m_hat = m[i] / correction1;
      const float v_hat = v[i] / correction2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  ++model.version_;
}

std::size_t argmax_lowest(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

Prediction predict(const ModelState& model, const InputBatch& batch) {
  const auto cache = forward(model, batch);
  Prediction p;
  p.probabilities = softmax_rows(cache.logits);
  p.classes.reserve(batch.size);
  for (std::size_t r = 0; r < cache.logits.rows; ++r) {
    p.classes.push_back(static_cast<std::uint8_t>(argmax_lowest(cache.logits.row(r))));
  }
  return p;
}

std::vector<std::uint8_t> serialize_weights(const WeightVector& weights) {
  std::vector<std::uint8_t> out;
  out.reserve(update_size_bytes(weights));
  out.insert(out.end(), kBlobMagic, kBlobMagic + 4);
  put_u32(out, kWeightBlobVersion);
  put_u32(out, static_cast<std::uint32_t>(weights.tensors.size()));
  put_u32(out, static_cast<std::uint32_t>(weights.total_params()));
  for (const auto& t : weights.tensors) {
    for (const float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

WeightVector deserialize_weights(std::span<const std::uint8_t> blob, const ModelArch& arch) {
  if (blob.size() < kWeightBlobHeaderBytes) throw FormatError("weight blob: truncated header");
  if (std::memcmp(blob.data(), kBlobMagic, 4) != 0) throw FormatError("weight blob: bad magic");
  if (get_u32(blob, 4) != kWeightBlobVersion) throw FormatError("weight blob: unsupported version");
  WeightVector w = zero_weights(arch);
  if (get_u32(blob, 8) != w.tensors.size() || get_u32(blob, 12) != w.total_params()) {
    throw FormatError("weight blob: tensor/parameter count does not match arch");
  }
  if (blob.size() != update_size_bytes(w)) throw FormatError("weight blob: truncated payload");
  std::size_t offset = kWeightBlobHeaderBytes;
  for (auto& t : w.tensors) {
    for (auto& v : t.values) {
      v = std::bit_cast<float>(get_u32(blob, offset));
      offset += 4;
    }
  }
  return w;
}

}  // namespace fedkd
