#pragma once

// Multinomial logistic regression over flattened windows. It exists so the
// pipeline runs end to end without an external deep-learning stack; external
// models plug in through the prediction file instead.

#include "lobkit/error.hpp"
#include "lobkit/forecast_eval.hpp"
#include "lobkit/pipeline.hpp"
#include "lobkit/random.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

namespace lobkit {

inline constexpr std::size_t kBatchSize = 32;

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  double l2 = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
};

struct LinearModel {
  std::size_t n_features = 0;
  std::vector<double> weights; ///< 3 x n_features, row per class (Down, Stable, Up)
  std::array<double, 3> bias{};
  TrainingMetadata meta;

  explicit LinearModel(std::size_t features = 0) : n_features(features), weights(3 * features, 0.0) {}

  std::span<const double> row(int k) const {
    return std::span<const double>(weights).subspan(static_cast<std::size_t>(k) * n_features, n_features);
  }
};

inline std::array<double, 3> softmax(const std::array<double, 3> &z) {
  const double m = std::max({z[0], z[1], z[2]});
  std::array<double, 3> p{std::exp(z[0] - m), std::exp(z[1] - m), std::exp(z[2] - m)};
  const double s = p[0] + p[1] + p[2];
  for (auto &v : p) v /= s;
  return p;
}

inline std::array<double, 3> logits(const LinearModel &m, std::span<const float> x) {
  if (x.size() != m.n_features)
    fail(Errc::ShapeMismatch, "model expects " + std::to_string(m.n_features) + " features, got " +
                                  std::to_string(x.size()));
  std::array<double, 3> z = m.bias;
  for (int k = 0; k < 3; ++k) {
    const auto w = m.row(k);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * static_cast<double>(x[j]);
    z[k] += acc;
  }
  return z;
}

inline std::array<double, 3> predict(const LinearModel &m, std::span<const float> x) {
  for (float v : x)
    if (!std::isfinite(v)) fail(Errc::InvalidArgument, "non-finite input feature");
  return softmax(logits(m, x));
}

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  std::array<double, 3> grad_bias{};
};

/// Mean cross-entropy over the selected windows plus (l2/2)||W||^2, with its
/// exact gradient.
inline LossGradient loss_and_gradient(const LinearModel &m, std::span<const LabeledWindow> windows,
                                      std::span<const std::size_t> batch, double l2 = 0.0) {
  LossGradient g;
  g.grad_weights.assign(m.weights.size(), 0.0);
  if (batch.empty()) return g;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto i : batch) {
    const auto &w = windows[i];
    const auto p = softmax(logits(m, w.features));
    const int y = class_index(w.label);
    g.loss -= std::log(std::max(p[y], 1e-300)) * inv;
    for (int k = 0; k < 3; ++k) {
      const double delta = (p[k] - (k == y ? 1.0 : 0.0)) * inv;
      g.grad_bias[k] += delta;
      double *gw = g.grad_weights.data() + static_cast<std::size_t>(k) * m.n_features;
      for (std::size_t j = 0; j < m.n_features; ++j) gw[j] += delta * static_cast<double>(w.features[j]);
    }
  }
  if (l2 > 0.0) {
    double sq = 0.0;
    for (std::size_t j = 0; j < m.weights.size(); ++j) {
      sq += m.weights[j] * m.weights[j];
      g.grad_weights[j] += l2 * m.weights[j];
    }
    g.loss += 0.5 * l2 * sq;
  }
  return g;
}

struct TrainOptions {
  int epochs = 10;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  double l2 = 0.0;
};

/// Mini-batch gradient descent (batch 32) from zero parameters. The sample
/// order is reshuffled each epoch from `seed`, so training is deterministic.
inline LinearModel train(std::span<const LabeledWindow> windows, const TrainOptions &opt) {
  if (windows.empty()) fail(Errc::EmptyClass, "no training windows");
  const auto nf = windows.front().features.size();
  ClassCounts counts;
  for (const auto &w : windows) {
    if (w.features.size() != nf) fail(Errc::ShapeMismatch, "training windows differ in feature count");
    switch (w.label) {
    case Label::Down: ++counts.down; break;
    case Label::Stable: ++counts.stable; break;
    case Label::Up: ++counts.up; break;
    }
  }
  if (counts.down == 0 || counts.stable == 0 || counts.up == 0)
    fail(Errc::EmptyClass, "training set lacks at least one class");
  if (opt.epochs < 0 || !(opt.learning_rate > 0.0) || opt.l2 < 0.0)
    fail(Errc::InvalidArgument, "epochs >= 0, learning rate > 0 and l2 >= 0 required");

  LinearModel m(nf);
  m.meta.seed = opt.seed;
  m.meta.epochs = opt.epochs;
  m.meta.learning_rate = opt.learning_rate;
  m.meta.l2 = opt.l2;
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(opt.seed);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += kBatchSize) {
      const auto len = std::min(kBatchSize, order.size() - start);
      const auto g = loss_and_gradient(m, windows, std::span<const std::size_t>(order).subspan(start, len), opt.l2);
      if (!std::isfinite(g.loss)) fail(Errc::NonFiniteLoss, "loss diverged in epoch " + std::to_string(epoch));
      for (std::size_t j = 0; j < m.weights.size(); ++j) m.weights[j] -= opt.learning_rate * g.grad_weights[j];
      for (int k = 0; k < 3; ++k) m.bias[k] -= opt.learning_rate * g.grad_bias[k];
      loss_sum += g.loss;
      ++batches;
    }
    m.meta.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  for (double w : m.weights)
    if (!std::isfinite(w)) fail(Errc::NonFiniteLoss, "non-finite parameter after training");
  std::vector<std::size_t> all(windows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  m.meta.final_loss = loss_and_gradient(m, windows, all, opt.l2).loss;
  return m;
}

inline std::vector<ForecastRecord> predict_stream(const LinearModel &m, std::span<const LabeledWindow> windows) {
  std::vector<ForecastRecord> out(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out[i].index = static_cast<std::int64_t>(i);
    out[i].probs = predict(m, windows[i].features);
  }
  return out;
}

// Checkpoint ("LOBKMDL1"): magic[8] | u64 header_len | JSON header |
// f64 weights[3 * n_features] | f64 bias[3], little-endian.
inline constexpr char kModelMagic[8] = {'L', 'O', 'B', 'K', 'M', 'D', 'L', '1'};

inline void save_model(std::ostream &os, const LinearModel &m) {
  const nlohmann::json header = {{"shape", {3, m.n_features}},
                                 {"seed", m.meta.seed},
                                 {"epochs", m.meta.epochs},
                                 {"learning_rate", m.meta.learning_rate},
                                 {"l2", m.meta.l2},
                                 {"final_loss", m.meta.final_loss},
                                 {"epoch_losses", m.meta.epoch_losses}};
  const auto text = header.dump();
  os.write(kModelMagic, 8);
  detail::put_le(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double w : m.weights) detail::put_le(os, w);
  for (double b : m.bias) detail::put_le(os, b);
}

inline LinearModel load_model(std::istream &is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0) fail(Errc::MalformedRow, "not a lobkit model");
  const auto len = detail::get_le<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) fail(Errc::MalformedRow, "truncated model header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    fail(Errc::MalformedRow, std::string("model header: ") + e.what());
  }
  const auto shape = h.at("shape");
  if (shape.at(0).get<int>() != 3) fail(Errc::ShapeMismatch, "model must have 3 classes");
  LinearModel m(shape.at(1).get<std::size_t>());
  m.meta.seed = h.at("seed").get<std::uint64_t>();
  m.meta.epochs = h.at("epochs").get<int>();
  m.meta.learning_rate = h.at("learning_rate").get<double>();
  m.meta.l2 = h.at("l2").get<double>();
  m.meta.final_loss = h.at("final_loss").get<double>();
  m.meta.epoch_losses = h.at("epoch_losses").get<std::vector<double>>();
  for (auto &w : m.weights) w = detail::get_le<double>(is);
  for (auto &b : m.bias) b = detail::get_le<double>(is);
  return m;
}

} // namespace lobkit
