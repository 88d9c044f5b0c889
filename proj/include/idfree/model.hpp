// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "idfree/errors.hpp"
#include "idfree/rng.hpp"

namespace idfree {

/// Single-hidden-layer tanh classifier over the concatenation [u; x] of an
/// embedding and a feature vector. Frozen (trainable == false) during device
/// phases; the cloud trains a private copy.
struct ToyModel {
  int d_u = 0;
  int d_x = 0;
  int d_h = 0;
  int n_classes = 0;
  std::vector<double> w1;  // (d_u + d_x) x d_h, row-major
  std::vector<double> b1;  // d_h
  std::vector<double> w2;  // d_h x n_classes, row-major
  std::vector<double> b2;  // n_classes
  bool trainable = false;
};

inline void validate(const ToyModel& m) {
  const std::size_t in = static_cast<std::size_t>(m.d_u + m.d_x);
  if (m.d_u < 0 || m.d_x <= 0 || m.d_h <= 0 || m.n_classes < 2) {
    throw ShapeError("model dimensions invalid");
  }
  if (m.w1.size() != in * static_cast<std::size_t>(m.d_h) ||
      m.b1.size() != static_cast<std::size_t>(m.d_h) ||
      m.w2.size() != static_cast<std::size_t>(m.d_h) *
                         static_cast<std::size_t>(m.n_classes) ||
      m.b2.size() != static_cast<std::size_t>(m.n_classes)) {
    throw ShapeError("model weight shapes inconsistent with dimensions");
  }
}

/// Uniform fan-in-scaled initialization; deterministic for a given stream.
/// embed_gain scales the embedding-slot input rows only. Those rows receive
/// no gradient while the model trains on zero embeddings, so their magnitude
/// sets how strongly a later nonzero embedding can steer the logits (and how
/// large the embedding gradients are that device training sees). logit_gain
/// scales the output layer, which raises that sensitivity further without
/// pushing the tanh units toward saturation.
inline ToyModel make_model(int d_u, int d_x, int d_h, int n_classes, Rng& rng,
                           bool trainable = false, double embed_gain = 1.0,
                           double logit_gain = 1.0) {
  ToyModel m;
  m.d_u = d_u;
  m.d_x = d_x;
  m.d_h = d_h;
  m.n_classes = n_classes;
  m.trainable = trainable;
  const std::size_t in = static_cast<std::size_t>(d_u + d_x);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(d_h));
  m.w1.resize(in * d_h);
  m.b1.assign(d_h, 0.0);
  m.w2.resize(static_cast<std::size_t>(d_h) * n_classes);
  m.b2.assign(n_classes, 0.0);
  for (std::size_t i = 0; i < in; ++i) {
    const double scale = i < static_cast<std::size_t>(d_u) ? embed_gain * r1 : r1;
    for (int j = 0; j < d_h; ++j) {
      m.w1[i * d_h + j] = scale * (2.0 * rng.uniform() - 1.0);
    }
  }
  for (double& w : m.w2) w = logit_gain * r2 * (2.0 * rng.uniform() - 1.0);
  return m;
}

/// Scratch buffers for the forward/backward passes, reusable across calls.
struct ModelWorkspace {
  std::vector<double> input;
  std::vector<double> hidden;
  std::vector<double> probs;
  std::vector<double> dlogits;
  std::vector<double> dpre;
};

namespace detail {

inline void check_io_shapes(const ToyModel& m, std::span<const double> u,
                            std::span<const double> x) {
  if (u.size() != static_cast<std::size_t>(m.d_u) ||
      x.size() != static_cast<std::size_t>(m.d_x)) {
    throw ShapeError("model input shapes do not match model dimensions");
  }
}

// Fills ws.input, ws.hidden (post-tanh) and ws.probs.
inline void forward_ws(const ToyModel& m, std::span<const double> u,
                       std::span<const double> x, ModelWorkspace& ws) {
  check_io_shapes(m, u, x);
  const std::size_t in = static_cast<std::size_t>(m.d_u + m.d_x);
  ws.input.resize(in);
  std::copy(u.begin(), u.end(), ws.input.begin());
  std::copy(x.begin(), x.end(), ws.input.begin() + m.d_u);
  ws.hidden.assign(m.d_h, 0.0);
  for (std::size_t i = 0; i < in; ++i) {
    const double v = ws.input[i];
    const double* row = &m.w1[i * m.d_h];
    for (int j = 0; j < m.d_h; ++j) ws.hidden[j] += v * row[j];
  }
  for (int j = 0; j < m.d_h; ++j) {
    ws.hidden[j] = std::tanh(ws.hidden[j] + m.b1[j]);
  }
  ws.probs.assign(m.n_classes, 0.0);
  for (int c = 0; c < m.n_classes; ++c) ws.probs[c] = m.b2[c];
  for (int j = 0; j < m.d_h; ++j) {
    const double h = ws.hidden[j];
    const double* row = &m.w2[static_cast<std::size_t>(j) * m.n_classes];
    for (int c = 0; c < m.n_classes; ++c) ws.probs[c] += h * row[c];
  }
  const double peak = *std::max_element(ws.probs.begin(), ws.probs.end());
  double total = 0.0;
  for (double& p : ws.probs) {
    p = std::exp(p - peak);
    total += p;
  }
  for (double& p : ws.probs) p /= total;
}

// After forward_ws: fills ws.dlogits and ws.dpre for target label y.
inline void backward_shared_ws(const ToyModel& m, int y, ModelWorkspace& ws) {
  if (y < 0 || y >= m.n_classes) throw ShapeError("label out of range");
  ws.dlogits = ws.probs;
  ws.dlogits[y] -= 1.0;
  ws.dpre.assign(m.d_h, 0.0);
  for (int j = 0; j < m.d_h; ++j) {
    const double* row = &m.w2[static_cast<std::size_t>(j) * m.n_classes];
    double acc = 0.0;
    for (int c = 0; c < m.n_classes; ++c) acc += row[c] * ws.dlogits[c];
    const double h = ws.hidden[j];
    ws.dpre[j] = acc * (1.0 - h * h);
  }
}

// Loss gradient with respect to the embedding slot only.
inline void grad_embedding_ws(const ToyModel& m, ModelWorkspace& ws,
                              std::span<double> out) {
  for (int i = 0; i < m.d_u; ++i) {
    const double* row = &m.w1[static_cast<std::size_t>(i) * m.d_h];
    double acc = 0.0;
    for (int j = 0; j < m.d_h; ++j) acc += row[j] * ws.dpre[j];
    out[i] = acc;
  }
}

}  // namespace detail

/// Class probabilities for input [u; x]; entries are positive and sum to 1.
inline std::vector<double> forward(const ToyModel& m, std::span<const double> u,
                                   std::span<const double> x) {
  ModelWorkspace ws;
  detail::forward_ws(m, u, x, ws);
  return ws.probs;
}

/// Cross-entropy against a class label, clamped away from log(0).
inline double cross_entropy(std::span<const double> probs, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= probs.size()) {
    throw ShapeError("label out of range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(y)], 1e-12));
}

/// Analytic gradient of cross_entropy(forward(m, u, x), y) with respect to u.
inline std::vector<double> grad_embedding(const ToyModel& m,
                                          std::span<const double> u,
                                          std::span<const double> x, int y) {
  ModelWorkspace ws;
  detail::forward_ws(m, u, x, ws);
  detail::backward_shared_ws(m, y, ws);
  std::vector<double> out(m.d_u);
  detail::grad_embedding_ws(m, ws, out);
  return out;
}

/// Gradient record matching the weight layout of ToyModel.
struct ModelGrad {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;
};

inline ModelGrad zero_grad_like(const ToyModel& m) {
  return ModelGrad{std::vector<double>(m.w1.size(), 0.0),
                   std::vector<double>(m.b1.size(), 0.0),
                   std::vector<double>(m.w2.size(), 0.0),
                   std::vector<double>(m.b2.size(), 0.0)};
}

namespace detail {

// Accumulates the full weight gradient into `acc` after forward/backward.
inline void grad_model_ws(const ToyModel& m, ModelWorkspace& ws,
                          ModelGrad& acc) {
  const std::size_t in = static_cast<std::size_t>(m.d_u + m.d_x);
  for (std::size_t i = 0; i < in; ++i) {
    const double v = ws.input[i];
    double* row = &acc.w1[i * m.d_h];
    for (int j = 0; j < m.d_h; ++j) row[j] += v * ws.dpre[j];
  }
  for (int j = 0; j < m.d_h; ++j) acc.b1[j] += ws.dpre[j];
  for (int j = 0; j < m.d_h; ++j) {
    const double h = ws.hidden[j];
    double* row = &acc.w2[static_cast<std::size_t>(j) * m.n_classes];
    for (int c = 0; c < m.n_classes; ++c) row[c] += h * ws.dlogits[c];
  }
  for (int c = 0; c < m.n_classes; ++c) acc.b2[c] += ws.dlogits[c];
}

}  // namespace detail

/// Analytic gradient of the loss with respect to every weight.
inline ModelGrad grad_model(const ToyModel& m, std::span<const double> u,
                            std::span<const double> x, int y) {
  ModelWorkspace ws;
  detail::forward_ws(m, u, x, ws);
  detail::backward_shared_ws(m, y, ws);
  ModelGrad g = zero_grad_like(m);
  detail::grad_model_ws(m, ws, g);
  return g;
}

/// In-place SGD step: weights -= lr * grad.
inline void apply_sgd(ToyModel& m, const ModelGrad& g, double lr) {
  if (!m.trainable) throw ConfigError("apply_sgd: model is frozen");
  for (std::size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= lr * g.w1[i];
  for (std::size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= lr * g.b1[i];
  for (std::size_t i = 0; i < m.w2.size(); ++i) m.w2[i] -= lr * g.w2[i];
  for (std::size_t i = 0; i < m.b2.size(); ++i) m.b2[i] -= lr * g.b2[i];
}

/// Bit-exact checksum over all weights (FNV-1a on the raw bytes); used to
/// assert that frozen models are never mutated.
inline std::uint64_t weights_checksum(const ToyModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::vector<double>& v) {
    for (double d : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof(bits));
      for (int k = 0; k < 8; ++k) {
        h ^= (bits >> (8 * k)) & 0xffULL;
        h *= 0x100000001b3ULL;
      }
    }
  };
  mix(m.w1);
  mix(m.b1);
  mix(m.w2);
  mix(m.b2);
  return h;
}

inline nlohmann::json model_to_json(const ToyModel& m) {
  return nlohmann::json{{"d_u", m.d_u},   {"d_x", m.d_x}, {"d_h", m.d_h},
                        {"classes", m.n_classes}, {"w1", m.w1}, {"b1", m.b1},
                        {"w2", m.w2},     {"b2", m.b2}};
}

inline ToyModel model_from_json(const nlohmann::json& j) {
  ToyModel m;
  m.d_u = j.at("d_u").get<int>();
  m.d_x = j.at("d_x").get<int>();
  m.d_h = j.at("d_h").get<int>();
  m.n_classes = j.at("classes").get<int>();
  m.w1 = j.at("w1").get<std::vector<double>>();
  m.b1 = j.at("b1").get<std::vector<double>>();
  m.w2 = j.at("w2").get<std::vector<double>>();
  m.b2 = j.at("b2").get<std::vector<double>>();
  validate(m);
  return m;
}

inline void save_model(const std::string& path, const ToyModel& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open model checkpoint for writing: " + path);
  out << model_to_json(m).dump(2) << "\n";
}

inline ToyModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace idfree
