// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "idfree/errors.hpp"
#include "idfree/rng.hpp"
#include "idfree/vec.hpp"

namespace idfree {

struct LabeledSample {
  std::vector<double> x;
  int y = 0;
};

/// One device's local data. The user id is a device-side handle for the
/// harness; it never appears in any wire encoding. true_bias is generator
/// ground truth kept for diagnostics only.
struct DeviceDataset {
  int local_user_id = -1;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::vector<double> true_bias;
};

struct SyntheticTaskSpec {
  int num_users = 50;
  int per_user = 200;
  int d_x = 16;
  int n_classes = 4;
  double bias_strength = 3.0;    // scales the per-user label bias
  double label_noise = 0.05;     // chance a label flips to another class
  std::uint64_t seed = 1;
};

inline void validate(const SyntheticTaskSpec& s) {
  if (s.num_users < 2) throw ConfigError("task needs at least 2 users");
  if (s.per_user < 4) throw ConfigError("task needs at least 4 samples per user");
  if (s.d_x <= 0 || s.n_classes < 2) throw ConfigError("task dims invalid");
  if (s.bias_strength < 0.0) throw ConfigError("bias strength must be >= 0");
  if (!(s.label_noise >= 0.0 && s.label_noise < 0.5)) {
    throw ConfigError("label noise must lie in [0, 0.5)");
  }
}

/// Generator internals exposed so oracle classifiers can be built from the
/// true data-generating process.
struct TaskGroundTruth {
  static constexpr int kBiasDim = 8;
  std::vector<std::vector<double>> feature_protos;  // per class, d_x
  std::vector<std::vector<double>> bias_protos;     // per class, kBiasDim
  double bias_strength = 0.0;
};

struct SyntheticTask {
  std::vector<DeviceDataset> devices;
  TaskGroundTruth truth;
};

/// Clean class score before label noise: feature_proto . x plus the
/// bias-strength-scaled bias_proto . b term.
inline int argmax_score(const TaskGroundTruth& truth, std::span<const double> x,
                        std::span<const double> bias) {
  int best = 0;
  double best_score = -1e300;
  for (std::size_t c = 0; c < truth.feature_protos.size(); ++c) {
    double score = dot(truth.feature_protos[c], x);
    if (!bias.empty()) {
      score += truth.bias_strength * dot(truth.bias_protos[c], bias);
    }
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(c);
    }
  }
  return best;
}

/// Each user draws a bias direction on the unit sphere; labels follow the
/// argmax of class scores mixing a shared feature term with the user term,
/// then flip to a random other class with probability label_noise. The
/// per-user split is first 80% train, last 20% test, in generation order.
inline SyntheticTask generate_synthetic(const SyntheticTaskSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  SyntheticTask task;
  task.truth.bias_strength = spec.bias_strength;
  for (int c = 0; c < spec.n_classes; ++c) {
    std::vector<double> w(spec.d_x);
    for (double& v : w) v = rng.normal();
    task.truth.feature_protos.push_back(std::move(w));
    std::vector<double> v(TaskGroundTruth::kBiasDim);
    for (double& e : v) e = rng.normal();
    task.truth.bias_protos.push_back(std::move(v));
  }

  const int n_train = spec.per_user * 4 / 5;
  for (int n = 0; n < spec.num_users; ++n) {
    DeviceDataset ds;
    ds.local_user_id = n;
    ds.true_bias.resize(TaskGroundTruth::kBiasDim);
    for (double& e : ds.true_bias) e = rng.normal();
    const double norm = l2_norm(ds.true_bias);
    for (double& e : ds.true_bias) e /= norm;

    for (int s = 0; s < spec.per_user; ++s) {
      LabeledSample sample;
      sample.x.resize(spec.d_x);
      for (double& v : sample.x) v = rng.normal();
      sample.y = argmax_score(task.truth, sample.x, ds.true_bias);
      if (spec.label_noise > 0.0 && rng.uniform() < spec.label_noise) {
        const int other =
            static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_classes - 1)));
        sample.y = other >= sample.y ? other + 1 : other;
      }
      if (s < n_train) {
        ds.train.push_back(std::move(sample));
      } else {
        ds.test.push_back(std::move(sample));
      }
    }
    task.devices.push_back(std::move(ds));
  }
  return task;
}

/// Local-only dataset dump, one {"x": [...], "y": k} record per line.
inline void save_device_dataset(const std::string& path,
                                const DeviceDataset& ds) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open dataset dump for writing: " + path);
  auto write = [&out](const LabeledSample& s) {
    nlohmann::json j{{"x", s.x}, {"y", s.y}};
    out << j.dump() << "\n";
  };
  for (const auto& s : ds.train) write(s);
  for (const auto& s : ds.test) write(s);
}

}  // namespace idfree
