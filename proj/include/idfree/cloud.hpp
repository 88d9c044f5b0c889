// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "idfree/device_trainer.hpp"
#include "idfree/errors.hpp"
#include "idfree/model.hpp"
#include "idfree/rng.hpp"
#include "idfree/synthetic.hpp"
#include "idfree/wire.hpp"

namespace idfree {

/// The cloud's pooled training set. Iteration order is fixed by the shuffle
/// seed and the record contents alone, never by which source produced a
/// record or when it arrived.
struct CloudDataset {
  std::vector<AnonymousRecord> records;
  std::uint64_t shuffle_seed = 0;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Pools per-device record batches into one dataset. The order is a seeded
/// shuffle keyed on record content, so producer arrival order cannot leak
/// into (or perturb) the result, and source boundaries are not retained.
inline CloudDataset collect(
    const std::vector<std::vector<AnonymousRecord>>& sources,
    std::uint64_t shuffle_seed) {
  CloudDataset ds;
  ds.shuffle_seed = shuffle_seed;
  std::size_t total = 0;
  for (const auto& s : sources) total += s.size();
  ds.records.reserve(total);
  std::size_t d_e = 0;
  std::size_t d_x = 0;
  bool first = true;
  for (const auto& source : sources) {
    for (const auto& r : source) {
      if (first) {
        d_e = r.e.size();
        d_x = r.x.size();
        first = false;
      } else if (r.e.size() != d_e || r.x.size() != d_x) {
        throw ShapeError("collect: records disagree on dimensions");
      }
      ds.records.push_back(r);
    }
  }
  std::vector<std::pair<std::uint64_t, std::string>> keys;
  keys.reserve(ds.records.size());
  for (const auto& r : ds.records) {
    std::string line = record_to_line(r);
    keys.emplace_back(detail::fnv1a(line, shuffle_seed), std::move(line));
  }
  std::vector<std::size_t> order(ds.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&keys](std::size_t a, std::size_t b) {
    if (keys[a].first != keys[b].first) return keys[a].first < keys[b].first;
    return keys[a].second < keys[b].second;
  });
  std::vector<AnonymousRecord> shuffled;
  shuffled.reserve(ds.records.size());
  for (std::size_t idx : order) shuffled.push_back(std::move(ds.records[idx]));
  ds.records = std::move(shuffled);
  return ds;
}

/// Mean cross-entropy of the model over embedding-free samples (zero vector
/// in the embedding slot).
inline double mean_loss_plain(const ToyModel& m,
                              std::span<const LabeledSample> samples) {
  ModelWorkspace ws;
  const std::vector<double> zero_e(static_cast<std::size_t>(m.d_u), 0.0);
  double total = 0.0;
  for (const auto& s : samples) {
    detail::forward_ws(m, zero_e, s.x, ws);
    total += cross_entropy(ws.probs, s.y);
  }
  return total / static_cast<double>(samples.size());
}

inline double mean_loss(const ToyModel& m, const CloudDataset& ds) {
  ModelWorkspace ws;
  double total = 0.0;
  for (const auto& r : ds.records) {
    detail::forward_ws(m, r.e, r.x, ws);
    total += cross_entropy(ws.probs, r.y);
  }
  return total / static_cast<double>(ds.records.size());
}

namespace detail {

inline void apply_sgd_scaled(ToyModel& m, const ModelGrad& g, double scaled_lr) {
  for (std::size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= scaled_lr * g.w1[i];
  for (std::size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= scaled_lr * g.b1[i];
  for (std::size_t i = 0; i < m.w2.size(); ++i) m.w2[i] -= scaled_lr * g.w2[i];
  for (std::size_t i = 0; i < m.b2.size(); ++i) m.b2[i] -= scaled_lr * g.b2[i];
}

template <typename GetInput>
inline void sgd_epochs(ToyModel& m, std::size_t count, GetInput&& get_input,
                       int epochs, double lr, int batch_size,
                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  ModelWorkspace ws;
  ModelGrad acc = zero_grad_like(m);
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < count; start += bs) {
      const std::size_t end = std::min(start + bs, count);
      std::fill(acc.w1.begin(), acc.w1.end(), 0.0);
      std::fill(acc.b1.begin(), acc.b1.end(), 0.0);
      std::fill(acc.w2.begin(), acc.w2.end(), 0.0);
      std::fill(acc.b2.begin(), acc.b2.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto [e, x, y] = get_input(order[k]);
        forward_ws(m, e, x, ws);
        backward_shared_ws(m, y, ws);
        grad_model_ws(m, ws, acc);
      }
      apply_sgd_scaled(m, acc, lr / static_cast<double>(end - start));
    }
  }
}

}  // namespace detail

/// Trains the model on embedding-free samples with the embedding slot held
/// at zero. This model is what devices download and freeze before any
/// distribution exists.
inline ToyModel bootstrap_train(ToyModel model,
                                std::span<const LabeledSample> samples,
                                int epochs, double lr, int batch_size,
                                std::uint64_t seed) {
  if (epochs < 0 || batch_size < 1) throw ConfigError("bad training schedule");
  if (epochs > 0 && samples.empty()) {
    throw ConfigError("bootstrap_train: no samples");
  }
  model.trainable = true;
  const std::vector<double> zero_e(static_cast<std::size_t>(model.d_u), 0.0);
  detail::sgd_epochs(
      model, samples.size(),
      [&](std::size_t i) {
        return std::tuple<std::span<const double>, std::span<const double>, int>(
            zero_e, samples[i].x, samples[i].y);
      },
      epochs, lr, batch_size, seed);
  return model;
}

/// Mini-batch SGD over the pooled (embedding, features, label) records.
/// Deterministic for a given seed.
inline ToyModel finetune(ToyModel model, const CloudDataset& data, int epochs,
                         double lr, int batch_size, std::uint64_t seed) {
  if (!model.trainable) throw ConfigError("finetune requires a trainable model");
  if (epochs < 0 || batch_size < 1) throw ConfigError("bad training schedule");
  if (epochs > 0 && data.records.empty()) {
    throw ConfigError("finetune: empty dataset");
  }
  if (!data.records.empty() &&
      (data.records.front().e.size() != static_cast<std::size_t>(model.d_u) ||
       data.records.front().x.size() != static_cast<std::size_t>(model.d_x))) {
    throw ShapeError("finetune: record dims do not match model");
  }
  detail::sgd_epochs(
      model, data.records.size(),
      [&](std::size_t i) {
        const auto& r = data.records[i];
        return std::tuple<std::span<const double>, std::span<const double>, int>(
            r.e, r.x, r.y);
      },
      epochs, lr, batch_size, seed);
  return model;
}

/// Pure inference: predicted class (ties broken toward the lowest index)
/// plus the full probability vector.
inline std::pair<int, std::vector<double>> serve(const ToyModel& m,
                                                 std::span<const double> e,
                                                 std::span<const double> x) {
  std::vector<double> probs = forward(m, e, x);
  int best = 0;
  for (int c = 1; c < m.n_classes; ++c) {
    if (probs[static_cast<std::size_t>(c)] >
        probs[static_cast<std::size_t>(best)]) {
      best = c;
    }
  }
  return {best, std::move(probs)};
}

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_user;
  int total_samples = 0;
};

/// Per-user test accuracy with embeddings drawn from each user's trained
/// distribution; fresh_per_query = false reuses one draw per user instead.
inline EvalReport evaluate(const ToyModel& m,
                           const std::vector<DeviceDataset>& devices,
                           const std::vector<TrainedDistribution>& dists,
                           Rng& rng, bool fresh_per_query = true) {
  if (devices.size() != dists.size()) {
    throw ConfigError("evaluate: one trained distribution per device required");
  }
  EvalReport report;
  ModelWorkspace ws;
  int correct_total = 0;
  for (std::size_t n = 0; n < devices.size(); ++n) {
    std::vector<double> cached;
    if (!fresh_per_query) cached = sample(dists[n].dist, rng);
    int correct = 0;
    for (const auto& s : devices[n].test) {
      const std::vector<double> e =
          fresh_per_query ? sample(dists[n].dist, rng) : cached;
      detail::forward_ws(m, e, s.x, ws);
      int best = 0;
      for (int c = 1; c < m.n_classes; ++c) {
        if (ws.probs[c] > ws.probs[best]) best = c;
      }
      if (best == s.y) ++correct;
    }
    report.per_user.push_back(
        devices[n].test.empty()
            ? 0.0
            : static_cast<double>(correct) / devices[n].test.size());
    correct_total += correct;
    report.total_samples += static_cast<int>(devices[n].test.size());
  }
  report.accuracy = report.total_samples == 0
                        ? 0.0
                        : static_cast<double>(correct_total) / report.total_samples;
  return report;
}

/// Accuracy of a model run with the zero embedding everywhere (the
/// no-personalization path).
inline EvalReport evaluate_zero_embedding(
    const ToyModel& m, const std::vector<DeviceDataset>& devices) {
  EvalReport report;
  ModelWorkspace ws;
  const std::vector<double> zero_e(static_cast<std::size_t>(m.d_u), 0.0);
  int correct_total = 0;
  for (const auto& dev : devices) {
    int correct = 0;
    for (const auto& s : dev.test) {
      detail::forward_ws(m, zero_e, s.x, ws);
      int best = 0;
      for (int c = 1; c < m.n_classes; ++c) {
        if (ws.probs[c] > ws.probs[best]) best = c;
      }
      if (best == s.y) ++correct;
    }
    report.per_user.push_back(
        dev.test.empty() ? 0.0
                         : static_cast<double>(correct) / dev.test.size());
    correct_total += correct;
    report.total_samples += static_cast<int>(dev.test.size());
  }
  report.accuracy = report.total_samples == 0
                        ? 0.0
                        : static_cast<double>(correct_total) / report.total_samples;
  return report;
}

}  // namespace idfree
