// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "idfree/cloud.hpp"
#include "idfree/device_trainer.hpp"
#include "idfree/distribution.hpp"
#include "idfree/errors.hpp"
#include "idfree/model.hpp"
#include "idfree/rng.hpp"
#include "idfree/synthetic.hpp"

namespace idfree {

/// Shannon entropy (nats) of the empirical distribution of predicted classes.
inline double prediction_entropy(std::span<const int> predictions,
                                 int n_classes) {
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (int p : predictions) counts[static_cast<std::size_t>(p)]++;
  double h = 0.0;
  const double total = static_cast<double>(predictions.size());
  for (int c : counts) {
    if (c == 0) continue;
    const double p = c / total;
    h -= p * std::log(p);
  }
  return h;
}

/// Test samples bucketed by their sensitivity to the choice of user
/// embedding, with per-bucket accuracy under the owner's embedding and under
/// the no-personalization baseline. Counts sum to the total test-set size.
struct EntropyBucketReport {
  std::vector<double> bucket_edges;
  std::vector<double> per_bucket_accuracy;
  std::vector<double> per_bucket_baseline_accuracy;
  std::vector<int> per_bucket_count;
  int users_per_item = 0;
};

/// For each test sample: serve it once under embeddings from users_per_item
/// users chosen uniformly at random, compute the entropy of those predicted
/// classes, and bucket the sample by that entropy. Accuracy inside a bucket
/// is measured under a fresh draw from the sample owner's distribution
/// (personalized model) and under the zero embedding (baseline model).
inline EntropyBucketReport user_entropy_report(
    const ToyModel& personalized, const ToyModel& baseline,
    const std::vector<DeviceDataset>& devices,
    const std::vector<TrainedDistribution>& dists, int users_per_item,
    std::vector<double> bucket_edges, Rng& rng) {
  if (devices.size() != dists.size()) {
    throw ConfigError("user_entropy_report: one distribution per device");
  }
  if (users_per_item < 2) {
    throw ConfigError("user_entropy_report: need at least 2 users per item");
  }
  if (static_cast<std::size_t>(users_per_item) > dists.size()) {
    throw ConfigError("user_entropy_report: users_per_item exceeds user count");
  }
  if (bucket_edges.size() < 2 ||
      !std::is_sorted(bucket_edges.begin(), bucket_edges.end())) {
    throw ConfigError("user_entropy_report: bucket edges must be increasing");
  }

  const std::size_t n_buckets = bucket_edges.size() - 1;
  EntropyBucketReport report;
  report.bucket_edges = std::move(bucket_edges);
  report.per_bucket_accuracy.assign(n_buckets, 0.0);
  report.per_bucket_baseline_accuracy.assign(n_buckets, 0.0);
  report.per_bucket_count.assign(n_buckets, 0);
  report.users_per_item = users_per_item;

  std::vector<int> bucket_correct(n_buckets, 0);
  std::vector<int> bucket_baseline_correct(n_buckets, 0);

  // Partial Fisher-Yates pool for drawing distinct user indices.
  std::vector<std::size_t> pool(dists.size());
  std::vector<int> preds(static_cast<std::size_t>(users_per_item));
  ModelWorkspace ws;
  const std::vector<double> zero_e(static_cast<std::size_t>(baseline.d_u), 0.0);

  auto predict = [&ws](const ToyModel& m, std::span<const double> e,
                       std::span<const double> x) {
    detail::forward_ws(m, e, x, ws);
    int best = 0;
    for (int c = 1; c < m.n_classes; ++c) {
      if (ws.probs[c] > ws.probs[best]) best = c;
    }
    return best;
  };

  for (std::size_t n = 0; n < devices.size(); ++n) {
    for (const auto& s : devices[n].test) {
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      for (int k = 0; k < users_per_item; ++k) {
        const std::size_t j =
            static_cast<std::size_t>(k) +
            static_cast<std::size_t>(rng.below(pool.size() - k));
        std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
        const std::vector<double> e = sample(dists[pool[k]].dist, rng);
        preds[static_cast<std::size_t>(k)] = predict(personalized, e, s.x);
      }
      const double h = prediction_entropy(preds, personalized.n_classes);

      const auto upper = std::upper_bound(report.bucket_edges.begin(),
                                          report.bucket_edges.end(), h);
      std::size_t bucket =
          upper == report.bucket_edges.begin()
              ? 0
              : static_cast<std::size_t>(upper - report.bucket_edges.begin()) - 1;
      bucket = std::min(bucket, n_buckets - 1);

      const std::vector<double> own = sample(dists[n].dist, rng);
      const bool correct = predict(personalized, own, s.x) == s.y;
      const bool baseline_correct = predict(baseline, zero_e, s.x) == s.y;
      report.per_bucket_count[bucket]++;
      bucket_correct[bucket] += correct ? 1 : 0;
      bucket_baseline_correct[bucket] += baseline_correct ? 1 : 0;
    }
  }

  for (std::size_t b = 0; b < n_buckets; ++b) {
    if (report.per_bucket_count[b] > 0) {
      report.per_bucket_accuracy[b] =
          static_cast<double>(bucket_correct[b]) / report.per_bucket_count[b];
      report.per_bucket_baseline_accuracy[b] =
          static_cast<double>(bucket_baseline_correct[b]) /
          report.per_bucket_count[b];
    }
  }
  return report;
}

}  // namespace idfree
