// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "idfree/distribution.hpp"
#include "idfree/errors.hpp"
#include "idfree/model.hpp"
#include "idfree/rng.hpp"
#include "idfree/synthetic.hpp"
#include "idfree/wire.hpp"

namespace idfree {

enum class DistFamily { gaussian, beta };

/// Knobs of the on-device distribution trainer. max_steps counts mini-batch
/// gradient steps; there is no early stopping, so the step budget is exactly
/// what the misattribution bound sees.
struct TrainerConfig {
  double learning_rate = 1e-3;
  int max_steps = 100;
  double clip_norm = 5.0;
  int mc_samples = 8;
  DistFamily mode = DistFamily::gaussian;
  double sigma = 0.2;  // fixed Gaussian std, not a trained parameter
  EmbeddingDistribution shared_init;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

inline void validate(const TrainerConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (cfg.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(cfg.clip_norm > 0.0)) throw ConfigError("clip norm must be > 0");
  if (cfg.mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  validate(cfg.shared_init);
  if (cfg.mode == DistFamily::gaussian) {
    const auto* g = std::get_if<DiagGaussian>(&cfg.shared_init);
    if (g == nullptr || g->sigma != cfg.sigma) {
      throw ConfigError(
          "gaussian mode requires a DiagGaussian shared init carrying the "
          "configured sigma");
    }
  } else if (!std::holds_alternative<BetaPerDim>(cfg.shared_init)) {
    throw ConfigError("beta mode requires a BetaPerDim shared init");
  }
}

/// The result of one device's local training run. The user id stays on the
/// device side; only the distribution's samples ever leave.
struct TrainedDistribution {
  int local_user_id = -1;
  EmbeddingDistribution dist;
  int iterations_used = 0;
  double final_train_loss = 0.0;
  std::size_t skipped_gradient_coords = 0;  // near-boundary Beta draws
};

namespace detail {

struct GradWorkspace {
  NoiseDraw noise;
  std::vector<double> embedding;
  std::vector<double> upstream;
  ModelWorkspace model_ws;
};

// One (sample, noise draw) contribution added into `acc`.
inline void accumulate_sample_grad(const EmbeddingDistribution& dist,
                                   const ToyModel& model,
                                   const LabeledSample& sample, Rng& rng,
                                   DistGradient& acc, GradWorkspace& ws,
                                   std::size_t* skipped) {
  draw_noise_into(dist, rng, ws.noise);
  ws.embedding = reparam_sample(dist, ws.noise);
  forward_ws(model, ws.embedding, sample.x, ws.model_ws);
  backward_shared_ws(model, sample.y, ws.model_ws);
  ws.upstream.resize(static_cast<std::size_t>(model.d_u));
  grad_embedding_ws(model, ws.model_ws, ws.upstream);
  grad_accumulate(acc,
                  reparam_grad_params(dist, ws.noise, ws.upstream, skipped));
}

}  // namespace detail

/// Monte Carlo estimate of the gradient of the expected-loss objective with
/// respect to the distribution parameters, averaged over the batch and over
/// mc_samples noise draws per sample. Near-boundary Beta draws are counted
/// in `skipped` when supplied (their coordinates contribute zero).
inline DistGradient estimate_obj_grad(const EmbeddingDistribution& dist,
                                      const ToyModel& model,
                                      std::span<const LabeledSample> batch,
                                      int mc_samples, Rng& rng,
                                      std::size_t* skipped = nullptr) {
  if (batch.empty()) throw ConfigError("estimate_obj_grad: empty batch");
  DistGradient acc = zero_grad_like(dist);
  detail::GradWorkspace ws;
  for (const auto& sample : batch) {
    for (int s = 0; s < mc_samples; ++s) {
      detail::accumulate_sample_grad(dist, model, sample, rng, acc, ws, skipped);
    }
  }
  grad_scale(acc, 1.0 / (static_cast<double>(batch.size()) * mc_samples));
  return acc;
}

/// Monte Carlo estimate of the expected loss over the given samples.
inline double estimate_objective(const EmbeddingDistribution& dist,
                                 const ToyModel& model,
                                 std::span<const LabeledSample> samples,
                                 int mc_samples, Rng& rng) {
  if (samples.empty()) throw ConfigError("estimate_objective: empty sample set");
  detail::GradWorkspace ws;
  double total = 0.0;
  for (const auto& sample : samples) {
    for (int s = 0; s < mc_samples; ++s) {
      draw_noise_into(dist, rng, ws.noise);
      ws.embedding = reparam_sample(dist, ws.noise);
      detail::forward_ws(model, ws.embedding, sample.x, ws.model_ws);
      total += cross_entropy(ws.model_ws.probs, sample.y);
    }
  }
  return total / (static_cast<double>(samples.size()) * mc_samples);
}

/// L2 gradient clipping: rescales to max_norm when the norm exceeds it,
/// preserving direction.
inline DistGradient clip_gradient(DistGradient grad, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be > 0");
  const double norm = grad_norm(grad);
  if (norm > max_norm) grad_scale(grad, max_norm / norm);
  return grad;
}

namespace detail {

inline double softplus(double z) {
  return z > 30.0 ? z : std::log1p(std::exp(z));
}

inline double softplus_inv(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Trainable view of the distribution parameters. Beta shapes live in an
// unconstrained space and map through softplus, so a gradient step can never
// leave the positive domain.
struct RawParams {
  DistFamily mode;
  double sigma = 0.0;
  std::vector<double> mean;     // gaussian
  std::vector<double> raw_a;    // beta, softplus^-1(alpha)
  std::vector<double> raw_b;    // beta, softplus^-1(beta)

  static RawParams from(const EmbeddingDistribution& dist, DistFamily mode) {
    RawParams p;
    p.mode = mode;
    if (const auto* g = std::get_if<DiagGaussian>(&dist)) {
      p.sigma = g->sigma;
      p.mean = g->mean;
    } else {
      const auto& b = std::get<BetaPerDim>(dist);
      p.raw_a.resize(b.alpha.size());
      p.raw_b.resize(b.beta.size());
      for (std::size_t i = 0; i < b.alpha.size(); ++i) {
        p.raw_a[i] = softplus_inv(b.alpha[i]);
        p.raw_b[i] = softplus_inv(b.beta[i]);
      }
    }
    return p;
  }

  EmbeddingDistribution to_distribution() const {
    if (mode == DistFamily::gaussian) return DiagGaussian{mean, sigma};
    BetaPerDim b;
    b.alpha.resize(raw_a.size());
    b.beta.resize(raw_b.size());
    for (std::size_t i = 0; i < raw_a.size(); ++i) {
      b.alpha[i] = softplus(raw_a[i]);
      b.beta[i] = softplus(raw_b[i]);
    }
    return b;
  }

  // Chains a parameter-space gradient into raw space.
  DistGradient to_raw_gradient(const DistGradient& grad) const {
    if (mode == DistFamily::gaussian) return grad;
    const auto& bg = std::get<BetaGrad>(grad);
    BetaGrad raw{std::vector<double>(raw_a.size()),
                 std::vector<double>(raw_b.size())};
    for (std::size_t i = 0; i < raw_a.size(); ++i) {
      raw.alpha[i] = bg.alpha[i] * sigmoid(raw_a[i]);
      raw.beta[i] = bg.beta[i] * sigmoid(raw_b[i]);
    }
    return raw;
  }

  void step(const DistGradient& raw_grad, double lr) {
    if (mode == DistFamily::gaussian) {
      const auto& g = std::get<GaussianGrad>(raw_grad);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] -= lr * g.mean[i];
      return;
    }
    const auto& bg = std::get<BetaGrad>(raw_grad);
    for (std::size_t i = 0; i < raw_a.size(); ++i) {
      raw_a[i] -= lr * bg.alpha[i];
      raw_b[i] -= lr * bg.beta[i];
    }
  }
};

}  // namespace detail

/// Clipped-SGD training of a device's embedding distribution against the
/// frozen model, starting from the shared initialization. Deterministic for
/// a given (dataset, config, seed).
inline TrainedDistribution train_device(const DeviceDataset& dataset,
                                        const ToyModel& model,
                                        const TrainerConfig& cfg) {
  validate(cfg);
  if (model.trainable) {
    throw ConfigError("train_device requires a frozen model");
  }
  if (dataset.train.empty()) {
    throw ConfigError("train_device: device has no training data");
  }

  Rng rng(cfg.seed);
  auto params = detail::RawParams::from(cfg.shared_init, cfg.mode);
  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  detail::GradWorkspace ws;
  int steps = 0;
  const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::size_t skipped = 0;
  while (steps < cfg.max_steps) {
    rng.shuffle(order);
    for (std::size_t start = 0;
         start < order.size() && steps < cfg.max_steps; start += batch_size) {
      const std::size_t end = std::min(start + batch_size, order.size());
      const EmbeddingDistribution dist = params.to_distribution();
      DistGradient acc = zero_grad_like(dist);
      for (std::size_t k = start; k < end; ++k) {
        for (int s = 0; s < cfg.mc_samples; ++s) {
          detail::accumulate_sample_grad(dist, model, dataset.train[order[k]],
                                         rng, acc, ws, &skipped);
        }
      }
      grad_scale(acc, 1.0 / (static_cast<double>(end - start) * cfg.mc_samples));
      const DistGradient raw =
          clip_gradient(params.to_raw_gradient(acc), cfg.clip_norm);
      params.step(raw, cfg.learning_rate);
      ++steps;
    }
  }

  TrainedDistribution out;
  out.local_user_id = dataset.local_user_id;
  out.dist = params.to_distribution();
  out.iterations_used = steps;
  out.skipped_gradient_coords = skipped;
  Rng eval_rng(derive_seed(cfg.seed, 0x7f1e));
  out.final_train_loss = estimate_objective(out.dist, model, dataset.train,
                                            cfg.mc_samples, eval_rng);
  return out;
}

/// One anonymous record per training sample, each carrying a fresh embedding
/// drawn from the trained distribution.
inline std::vector<AnonymousRecord> emit_uploads(
    const TrainedDistribution& trained, const DeviceDataset& dataset,
    Rng& rng) {
  validate(trained.dist);
  std::vector<AnonymousRecord> records;
  records.reserve(dataset.train.size());
  for (const auto& item : dataset.train) {
    AnonymousRecord r;
    r.e = sample(trained.dist, rng);
    r.x = item.x;
    r.y = item.y;
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace idfree
