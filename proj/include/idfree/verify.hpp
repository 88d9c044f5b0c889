// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "idfree/harness.hpp"

namespace idfree {

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyResult {
  std::vector<VerifyCheck> checks;
  bool all_pass = true;

  void add(std::string name, bool pass, std::string detail) {
    all_pass = all_pass && pass;
    checks.push_back({std::move(name), pass, std::move(detail)});
  }
};

namespace verify_detail {

inline double rel_err(double got, double want) {
  const double scale = std::max({std::fabs(got), std::fabs(want), 1e-12});
  return std::fabs(got - want) / scale;
}

// Central finite difference of the cross-entropy loss along one input slot.
template <typename Eval>
inline double central_diff(Eval&& eval, std::vector<double>& v, std::size_t i,
                           double h) {
  const double keep = v[i];
  v[i] = keep + h;
  const double up = eval();
  v[i] = keep - h;
  const double down = eval();
  v[i] = keep;
  return (up - down) / (2.0 * h);
}

inline VerifyCheck check_phi_properties() {
  double worst_symmetry = 0.0;
  bool monotone = true;
  double prev = 0.0;
  for (int i = 0; i <= 160; ++i) {
    const double x = -8.0 + 0.1 * i;
    const double p = std_normal_cdf(x);
    worst_symmetry =
        std::max(worst_symmetry, std::fabs(p + std_normal_cdf(-x) - 1.0));
    if (i > 0 && p < prev) monotone = false;
    prev = p;
  }
  const bool pass = monotone && worst_symmetry <= 1e-12 &&
                    std::fabs(std_normal_cdf(0.0) - 0.5) <= 1e-15;
  std::ostringstream detail;
  detail << "max |Phi(x)+Phi(-x)-1| = " << worst_symmetry;
  return {"phi-properties", pass, detail.str()};
}

inline VerifyCheck check_model_gradients() {
  Rng rng(41);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int d_u = 2 + static_cast<int>(rng.below(4));
    const int d_x = 2 + static_cast<int>(rng.below(4));
    const int d_h = 3 + static_cast<int>(rng.below(5));
    const int classes = 2 + static_cast<int>(rng.below(3));
    ToyModel m = make_model(d_u, d_x, d_h, classes, rng);
    std::vector<double> u(static_cast<std::size_t>(d_u));
    std::vector<double> x(static_cast<std::size_t>(d_x));
    for (double& v : u) v = rng.normal();
    for (double& v : x) v = rng.normal();
    const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));

    const auto loss_at = [&] {
      return cross_entropy(forward(m, u, x), y);
    };
    const auto analytic_u = grad_embedding(m, u, x, y);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double fd = central_diff(loss_at, u, i, 1e-5);
      worst = std::max(worst, rel_err(analytic_u[i], fd));
    }
    const ModelGrad analytic_w = grad_model(m, u, x, y);
    for (std::size_t i = 0; i < m.w1.size(); i += 1 + m.w1.size() / 7) {
      const double fd = central_diff(loss_at, m.w1, i, 1e-5);
      worst = std::max(worst, rel_err(analytic_w.w1[i], fd));
    }
    for (std::size_t i = 0; i < m.w2.size(); i += 1 + m.w2.size() / 7) {
      const double fd = central_diff(loss_at, m.w2, i, 1e-5);
      worst = std::max(worst, rel_err(analytic_w.w2[i], fd));
    }
  }
  std::ostringstream detail;
  detail << "worst relative error vs finite differences = " << worst;
  return {"model-gradients-fd", worst < 1e-5, detail.str()};
}

inline VerifyCheck check_reparam_crn() {
  Rng rng(97);
  const int d_u = 5;
  const int d_x = 6;
  ToyModel m = make_model(d_u, d_x, 8, 3, rng);
  std::vector<LabeledSample> batch(6);
  for (auto& s : batch) {
    s.x.resize(static_cast<std::size_t>(d_x));
    for (double& v : s.x) v = rng.normal();
    s.y = static_cast<int>(rng.below(3));
  }
  DiagGaussian g{std::vector<double>(d_u, 0.1), 0.2};
  const int mc = 10000;
  const std::uint64_t noise_seed = 1234;
  Rng grad_rng(noise_seed);
  const auto grad = std::get<GaussianGrad>(
      estimate_obj_grad(EmbeddingDistribution{g}, m, batch, mc, grad_rng));

  // Monte Carlo objective under common random numbers.
  const auto objective = [&](const DiagGaussian& dist) {
    Rng obj_rng(noise_seed);
    return estimate_objective(EmbeddingDistribution{dist}, m, batch, mc,
                              obj_rng);
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < g.mean.size(); ++i) {
    DiagGaussian up = g;
    DiagGaussian down = g;
    up.mean[i] += 1e-4;
    down.mean[i] -= 1e-4;
    const double fd = (objective(up) - objective(down)) / 2e-4;
    worst = std::max(worst, rel_err(grad.mean[i], fd));
  }
  std::ostringstream detail;
  detail << "worst relative error of pathwise gradient vs CRN finite "
            "difference = "
         << worst;
  return {"reparam-gradient-crn", worst < 1e-3, detail.str()};
}

inline VerifyCheck check_nearest_mean_probability() {
  Rng rng(7);
  double worst = 0.0;
  const int draws = 200000;
  const int dims[] = {1, 8, 64};
  for (int c = 0; c < 3; ++c) {
    const double distance = 0.05 + 0.3 * rng.uniform();
    const double sigma = 0.1 + 0.3 * rng.uniform();
    const int d = dims[c];
    const double expected = closer_to_own_mean_prob(distance, sigma);
    std::vector<double> mu_n(static_cast<std::size_t>(d), 0.0);
    std::vector<double> mu_k(static_cast<std::size_t>(d), 0.0);
    mu_k[0] = distance;
    int closer = 0;
    std::vector<double> u(static_cast<std::size_t>(d));
    for (int i = 0; i < draws; ++i) {
      for (int j = 0; j < d; ++j) {
        u[static_cast<std::size_t>(j)] =
            mu_n[static_cast<std::size_t>(j)] + sigma * rng.normal();
      }
      if (l2_distance(u, mu_n) <= l2_distance(u, mu_k)) ++closer;
    }
    const double freq = static_cast<double>(closer) / draws;
    worst = std::max(worst, std::fabs(freq - expected));
  }
  std::ostringstream detail;
  detail << "max |closed form - Monte Carlo| = " << worst << " at " << draws
         << " draws";
  return {"nearest-mean-probability-mc", worst <= 0.01, detail.str()};
}

inline VerifyCheck check_misattribution_bound(const ExperimentConfig& cfg) {
  if (cfg.embedding.mode != DistFamily::gaussian) {
    return {"misattribution-bound", false,
            "check requires gaussian mode configuration"};
  }
  if (!(cfg.embedding.sigma > 0.0)) {
    return {"misattribution-bound", false,
            "sigma is 0: the bound requires sigma > 0"};
  }
  const ProtocolResult r = run_protocol(cfg);
  const double bound = r.attack.theoretical_bound.value_or(0.0);
  const bool bound_ok = r.attack.empirical_misattribution >= bound - 0.01;
  const bool gap_ok = r.gap.has_value() && r.gap->pass;
  std::ostringstream detail;
  detail << "empirical = " << r.attack.empirical_misattribution
         << ", bound = " << bound << ", max mean gap = "
         << (r.gap.has_value() ? r.gap->max_gap : -1.0)
         << " vs " << (r.gap.has_value() ? r.gap->bound : -1.0);
  return {"misattribution-bound", bound_ok && gap_ok, detail.str()};
}

inline VerifyCheck check_nonidentifiability() {
  MixtureRepresentation mix;
  mix.components.push_back(
      {0.5, BetaPerDim{{2.0, 3.0}, {3.0, 2.0}}});
  mix.components.push_back(
      {0.3, BetaPerDim{{1.5, 1.0}, {2.5, 4.0}}});
  mix.components.push_back(
      {0.2, BetaPerDim{{4.0, 2.0}, {1.0, 5.0}}});
  const MixtureRepresentation alt = split_beta_component(mix, 0, 1);
  const NonIdentReport witness = verify_nonidentifiability(mix, alt, 120, 1e-9);

  MixtureRepresentation perturbed = mix;
  perturbed.components[0].weight += 1e-3;
  perturbed.components[1].weight -= 1e-3;
  const NonIdentReport control =
      verify_nonidentifiability(mix, perturbed, 120, 1e-9);

  const bool pass = witness.pass && !control.pass &&
                    control.max_pdf_diff > 1e-9;
  std::ostringstream detail;
  detail << "witness max density gap = " << witness.max_pdf_diff
         << ", perturbed control gap = " << control.max_pdf_diff;
  return {"nonidentifiability-witness", pass, detail.str()};
}

inline VerifyCheck check_wire_anonymity(const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.task.num_users = 6;
  cfg.task.per_user = 40;
  cfg.trainer.max_steps = 5;
  cfg.cloud.bootstrap_epochs = 2;
  cfg.cloud.finetune_epochs = 1;
  cfg.attack.draws_per_user = 10;
  const ProtocolResult r = run_protocol(cfg);

  bool keys_ok = true;
  bool tokens_ok = true;
  for (const auto& payload : r.device_payloads) {
    for (const char* token : {"user", "device", "uid", "\"id\""}) {
      if (payload.find(token) != std::string::npos) tokens_ok = false;
    }
    std::size_t start = 0;
    while (start < payload.size()) {
      std::size_t end = payload.find('\n', start);
      if (end == std::string::npos) end = payload.size();
      if (end > start) {
        const auto j = nlohmann::json::parse(payload.substr(start, end - start));
        if (!j.is_object() || j.size() != 3 || !j.contains("e") ||
            !j.contains("x") || !j.contains("y")) {
          keys_ok = false;
        }
      }
      start = end + 1;
    }
  }

  // Same payloads through the socket transport must collect identically.
  ExperimentConfig socket_cfg = cfg;
  socket_cfg.transport = "socket:127.0.0.1:0";
  const auto socket_sessions =
      pipeline::transport_sessions(socket_cfg, r.device_payloads);
  const CloudDataset socket_ds =
      collect(socket_sessions, r.dataset.shuffle_seed);
  bool transport_ok = socket_ds.records.size() == r.dataset.records.size();
  if (transport_ok) {
    for (std::size_t i = 0; i < socket_ds.records.size(); ++i) {
      if (!(socket_ds.records[i] == r.dataset.records[i])) {
        transport_ok = false;
        break;
      }
    }
  }

  // Positional clustering by source in the collected order, via the runs
  // test on harness-side source labels (device 0 vs the rest).
  std::unordered_map<std::string, int> source_of;
  for (std::size_t n = 0; n < r.device_payloads.size(); ++n) {
    const auto& payload = r.device_payloads[n];
    std::size_t start = 0;
    while (start < payload.size()) {
      std::size_t end = payload.find('\n', start);
      if (end == std::string::npos) end = payload.size();
      if (end > start) {
        source_of[payload.substr(start, end - start)] = static_cast<int>(n);
      }
      start = end + 1;
    }
  }
  std::vector<int> labels;
  labels.reserve(r.dataset.records.size());
  for (const auto& rec : r.dataset.records) {
    labels.push_back(source_of.at(record_to_line(rec)) == 0 ? 1 : 0);
  }
  const double p_value = runs_test_pvalue(labels);
  const bool shuffle_ok = p_value > 0.01;

  std::ostringstream detail;
  detail << (keys_ok ? "record schema is exactly {e,x,y}"
                     : "record schema violation")
         << "; " << (tokens_ok ? "no identifier tokens" : "identifier token found")
         << "; "
         << (transport_ok ? "socket and in-process collections identical"
                          : "transport mismatch")
         << "; runs test p = " << p_value;
  return {"wire-anonymity", keys_ok && tokens_ok && transport_ok && shuffle_ok,
          detail.str()};
}

}  // namespace verify_detail

/// Runs every module's invariant suite at a scale suitable for a pre-flight
/// check. The misattribution-bound stage runs the configured experiment
/// as-is; the other stages use small fixed workloads.
inline VerifyResult verify_all(const ExperimentConfig& cfg) {
  VerifyResult result;
  auto take = [&result](VerifyCheck check) {
    result.add(check.name, check.pass, check.detail);
  };
  take(verify_detail::check_phi_properties());
  take(verify_detail::check_model_gradients());
  take(verify_detail::check_reparam_crn());
  take(verify_detail::check_nearest_mean_probability());
  take(verify_detail::check_nonidentifiability());
  take(verify_detail::check_wire_anonymity(cfg));
  take(verify_detail::check_misattribution_bound(cfg));
  return result;
}

}  // namespace idfree
