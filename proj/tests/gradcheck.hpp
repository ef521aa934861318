#pragma once

// Central-difference gradient oracle in float64. Coordinates whose +h and -h
// evaluations take different ReLU masks or pooling routes are skipped, since
// the function is not differentiable across the kink.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedkd/distillation.hpp"
#include "fedkd/layers.hpp"
#include "fedkd/nn.hpp"
#include "fedkd/random.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-4;
inline constexpr double kTolerance = 1e-4;

struct Eval {
  double loss = 0.0;
  std::vector<std::uint32_t> signature;  // piecewise-linear region
};

struct Report {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel = 0.0;
  std::string worst;

  void merge(const Report& o) {
    checked += o.checked;
    skipped += o.skipped;
    if (o.max_rel > max_rel) {
      max_rel = o.max_rel;
      worst = o.worst;
    }
  }
  bool passed(double tol = kTolerance) const { return checked > 0 && max_rel < tol; }
};

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// Perturbs params[c] for each c in coords and compares the central difference
// of eval().loss with analytic[c].
inline Report check_coords(std::vector<double>& params, std::span<const double> analytic,
                           std::span<const std::size_t> coords,
                           const std::function<Eval(const std::vector<double>&)>& eval,
                           const std::string& label) {
  Report r;
  for (const auto c : coords) {
    const double saved = params[c];
    params[c] = saved + kStep;
    const Eval up = eval(params);
    params[c] = saved - kStep;
    const Eval down = eval(params);
    params[c] = saved;
    if (up.signature != down.signature) {
      ++r.skipped;
      continue;
    }
    const double numeric = (up.loss - down.loss) / (2 * kStep);
    const double err = rel_error(analytic[c], numeric);
    ++r.checked;
    if (err > r.max_rel) {
      r.max_rel = err;
      r.worst = label + "[" + std::to_string(c) + "] analytic " + std::to_string(analytic[c]) + " numeric " +
                std::to_string(numeric);
    }
  }
  return r;
}

inline std::vector<std::size_t> all_coords(std::size_t n) {
  std::vector<std::size_t> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = i;
  return c;
}

inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t k, fedkd::Rng& rng) {
  auto c = all_coords(n);
  if (k >= n) return c;
  rng.shuffle(std::span<std::size_t>(c));
  c.resize(k);
  std::sort(c.begin(), c.end());
  return c;
}

inline std::vector<double> uniform_vec(std::size_t n, double lo, double hi, fedkd::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

using Span = std::span<const double>;

// L = sum(R * conv(x; w, b)) checked against x, w and b.
inline Report conv1d_suite(std::uint64_t seed) {
  namespace L = fedkd::layers;
  fedkd::Rng rng(seed);
  const std::size_t batch = 2, length = 8, in = 3, kernel = 3, out = 4, out_len = length - kernel + 1;
  auto x = uniform_vec(batch * length * in, -1, 1, rng);
  auto w = uniform_vec(kernel * in * out, -1, 1, rng);
  auto b = uniform_vec(out, -1, 1, rng);
  const auto R = uniform_vec(batch * out_len * out, -1, 1, rng);
  auto loss = [&](Span xs, Span ws, Span bs) {
    std::vector<double> y(batch * out_len * out);
    L::conv1d_forward<double>(xs, batch, length, in, ws, bs, kernel, out, y);
    return dot(y, R);
  };
  std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0), db(b.size(), 0.0);
  L::conv1d_backward<double>(x, batch, length, in, w, kernel, out, R, dw, db, dx);
  Report r;
  r.merge(check_coords(x, dx, all_coords(x.size()), [&](const std::vector<double>& p) { return Eval{loss(p, w, b), {}}; }, "conv.x"));
  r.merge(check_coords(w, dw, all_coords(w.size()), [&](const std::vector<double>& p) { return Eval{loss(x, p, b), {}}; }, "conv.w"));
  r.merge(check_coords(b, db, all_coords(b.size()), [&](const std::vector<double>& p) { return Eval{loss(x, w, p), {}}; }, "conv.b"));
  return r;
}

inline Report dense_suite(std::uint64_t seed) {
  namespace L = fedkd::layers;
  fedkd::Rng rng(seed);
  const std::size_t batch = 3, in = 7, out = 5;
  auto x = uniform_vec(batch * in, -1, 1, rng);
  auto w = uniform_vec(in * out, -1, 1, rng);
  auto b = uniform_vec(out, -1, 1, rng);
  const auto R = uniform_vec(batch * out, -1, 1, rng);
  auto loss = [&](Span xs, Span ws, Span bs) {
    std::vector<double> y(batch * out);
    L::dense_forward<double>(xs, batch, in, ws, bs, out, y);
    return dot(y, R);
  };
  std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0), db(b.size(), 0.0);
  L::dense_backward<double>(x, batch, in, w, out, R, dw, db, dx);
  Report r;
  r.merge(check_coords(x, dx, all_coords(x.size()), [&](const std::vector<double>& p) { return Eval{loss(p, w, b), {}}; }, "dense.x"));
  r.merge(check_coords(w, dw, all_coords(w.size()), [&](const std::vector<double>& p) { return Eval{loss(x, p, b), {}}; }, "dense.w"));
  r.merge(check_coords(b, db, all_coords(b.size()), [&](const std::vector<double>& p) { return Eval{loss(x, w, p), {}}; }, "dense.b"));
  return r;
}

inline Report maxpool_suite(std::uint64_t seed) {
  namespace L = fedkd::layers;
  fedkd::Rng rng(seed);
  const std::size_t batch = 2, length = 9, channels = 3, out_len = length / 2;
  auto x = uniform_vec(batch * length * channels, -1, 1, rng);
  const auto R = uniform_vec(batch * out_len * channels, -1, 1, rng);
  auto eval = [&](const std::vector<double>& xs) {
    std::vector<double> y(R.size());
    std::vector<std::uint32_t> arg(R.size());
    L::maxpool_forward<double>(xs, batch, length, channels, y, arg);
    return Eval{dot(y, R), arg};
  };
  std::vector<double> y(R.size());
  std::vector<std::uint32_t> arg(R.size());
  L::maxpool_forward<double>(x, batch, length, channels, y, arg);
  std::vector<double> dx(x.size(), 0.0);
  L::maxpool_backward<double>(R, arg, dx);
  return check_coords(x, dx, all_coords(x.size()), eval, "maxpool.x");
}

inline Report relu_suite(std::uint64_t seed) {
  namespace L = fedkd::layers;
  fedkd::Rng rng(seed);
  auto pre = uniform_vec(40, -1, 1, rng);
  const auto R = uniform_vec(pre.size(), -1, 1, rng);
  auto eval = [&](const std::vector<double>& p) {
    std::vector<double> y(p.size());
    L::relu_forward<double>(p, y);
    std::vector<std::uint32_t> mask(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) mask[i] = p[i] > 0 ? 1 : 0;
    return Eval{dot(y, R), mask};
  };
  std::vector<double> dpre(pre.size(), 0.0);
  L::relu_backward<double>(pre, R, dpre);
  return check_coords(pre, dpre, all_coords(pre.size()), eval, "relu.x");
}

inline fedkd::BasicMatrix<double> random_logits(std::size_t rows, std::size_t cols, double scale, fedkd::Rng& rng) {
  fedkd::BasicMatrix<double> m(rows, cols);
  for (auto& v : m.values) v = rng.uniform(-scale, scale);
  return m;
}

inline std::vector<std::uint8_t> random_labels(std::size_t n, std::size_t classes, fedkd::Rng& rng) {
  std::vector<std::uint8_t> l(n);
  for (auto& v : l) v = static_cast<std::uint8_t>(rng.below(classes));
  return l;
}

// Gradient of a loss over logits, checked against every logit.
template <typename LossFn>
Report logit_suite(std::uint64_t seed, const std::string& label, LossFn&& fn) {
  fedkd::Rng rng(seed);
  auto z = random_logits(5, fedkd::kNumClasses, 3.0, rng);
  const auto teacher = random_logits(5, fedkd::kNumClasses, 4.0, rng);
  const auto labels = random_labels(5, fedkd::kNumClasses, rng);
  const auto analytic = fn(z, teacher, labels).logit_gradient.values;
  auto eval = [&](const std::vector<double>& p) {
    fedkd::BasicMatrix<double> m = z;
    m.values = p;
    return Eval{static_cast<double>(fn(m, teacher, labels).value), {}};
  };
  return check_coords(z.values, analytic, all_coords(z.values.size()), eval, label);
}

inline Report hard_loss_suite(std::uint64_t seed) {
  return logit_suite(seed, "hard_loss", [](const auto& z, const auto&, const auto& labels) {
    return fedkd::hard_loss<double>(z, labels);
  });
}

inline Report soft_loss_suite(std::uint64_t seed, double temperature) {
  return logit_suite(seed, "soft_loss", [temperature](const auto& z, const auto& t, const auto&) {
    return fedkd::soft_loss<double>(z, t, temperature);
  });
}

struct CombinedAsValue {
  double value;
  fedkd::BasicMatrix<double> logit_gradient;
};

inline Report distill_loss_suite(std::uint64_t seed, double alpha, double temperature = 5.0) {
  return logit_suite(seed, "distill_loss", [alpha, temperature](const auto& z, const auto& t, const auto& labels) {
    auto b = fedkd::distill_loss<double>(z, t, labels, fedkd::DistillConfig{alpha, temperature});
    return CombinedAsValue{b.combined, std::move(b.logit_gradient)};
  });
}

// Full model: distillation loss through every layer, checked on a random
// subset of coordinates per weight tensor.
inline Report model_suite(const fedkd::ModelArch& arch, std::uint64_t seed, std::size_t coords_per_tensor = 24) {
  fedkd::Rng rng(seed);
  auto weights = fedkd::init_weights(arch, fedkd::derive_seed(seed, 1)).cast<double>();
  const auto layout = fedkd::weight_layout(arch);
  for (std::size_t t = 0; t < layout.size(); ++t) {
    if (layout[t].is_bias) {
      for (auto& v : weights.tensors[t].values) v = rng.uniform(-0.1, 0.1);
    }
  }
  const std::size_t batch = 3;
  const auto x = uniform_vec(batch * arch.input_length * arch.input_channels, 0, 1, rng);
  const auto teacher = random_logits(batch, arch.num_classes, 4.0, rng);
  const auto labels = random_labels(batch, arch.num_classes, rng);
  const fedkd::DistillConfig cfg{0.5, 5.0};

  auto eval_weights = [&](const fedkd::BasicWeights<double>& w) {
    const auto cache = fedkd::forward<double>(arch, w, x, batch);
    Eval e;
    e.loss = fedkd::distill_loss<double>(cache.logits, teacher, labels, cfg).combined;
    for (const auto& pre : cache.pre) {
      for (const double v : pre) e.signature.push_back(v > 0 ? 1 : 0);
    }
    for (const auto& arg : cache.argmax) e.signature.insert(e.signature.end(), arg.begin(), arg.end());
    return e;
  };
  const auto cache = fedkd::forward<double>(arch, weights, x, batch);
  const auto grad_logits = fedkd::distill_loss<double>(cache.logits, teacher, labels, cfg).logit_gradient;
  const auto grads = fedkd::backward<double>(arch, weights, cache, grad_logits);

  Report r;
  for (std::size_t t = 0; t < weights.tensors.size(); ++t) {
    auto& params = weights.tensors[t].values;
    const auto coords = sample_coords(params.size(), coords_per_tensor, rng);
    auto eval = [&](const std::vector<double>& p) {
      auto w = weights;
      w.tensors[t].values = p;
      return eval_weights(w);
    };
    r.merge(check_coords(params, grads.tensors[t].values, coords, eval,
                         "layer" + std::to_string(layout[t].layer_index) + (layout[t].is_bias ? ".b" : ".w")));
  }
  return r;
}

}  // namespace gradcheck
