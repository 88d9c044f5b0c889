// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "idfree/attack.hpp"
#include "idfree/cloud.hpp"
#include "idfree/config.hpp"
#include "idfree/device_trainer.hpp"
#include "idfree/entropy.hpp"
#include "idfree/errors.hpp"
#include "idfree/identifiability.hpp"
#include "idfree/model.hpp"
#include "idfree/pca.hpp"
#include "idfree/synthetic.hpp"
#include "idfree/transport.hpp"

namespace idfree {

inline std::string format_number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

namespace detail {

// Deterministic fan-out: work items are claimed from a shared counter but
// every result lands in its own slot, so the reduction order is fixed
// regardless of the worker count.
template <typename Fn>
inline void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  pool.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) {
    pool.emplace_back([&next, n, &fn] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

struct SocketAddress {
  std::string host;
  int port = 0;
};

inline std::optional<SocketAddress> parse_socket_transport(
    const std::string& transport) {
  if (transport == "inprocess") return std::nullopt;
  const std::string prefix = "socket:";
  if (transport.rfind(prefix, 0) != 0) {
    throw ConfigError("transport must be inprocess or socket:HOST:PORT");
  }
  const std::string addr = transport.substr(prefix.size());
  const std::size_t colon = addr.rfind(':');
  SocketAddress out;
  if (colon == std::string::npos) {
    out.host = addr;
  } else {
    out.host = addr.substr(0, colon);
    try {
      out.port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("invalid transport port in: " + transport);
    }
  }
  if (out.host.empty()) out.host = "127.0.0.1";
  return out;
}

}  // namespace detail

/// Wald-Wolfowitz runs test on a binary sequence; returns the two-sided
/// p-value under the normal approximation. Used to check that the collected
/// order shows no positional clustering by source.
inline double runs_test_pvalue(std::span<const int> seq) {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  for (int v : seq) (v ? n1 : n2)++;
  if (n1 == 0 || n2 == 0) return 1.0;
  std::size_t runs = 1;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if ((seq[i] != 0) != (seq[i - 1] != 0)) ++runs;
  }
  const double a = static_cast<double>(n1);
  const double b = static_cast<double>(n2);
  const double mean = 2.0 * a * b / (a + b) + 1.0;
  const double var =
      2.0 * a * b * (2.0 * a * b - a - b) / ((a + b) * (a + b) * (a + b - 1.0));
  if (var <= 0.0) return 1.0;
  const double z = (static_cast<double>(runs) - mean) / std::sqrt(var);
  return 2.0 * (1.0 - std_normal_cdf(std::fabs(z)));
}

struct ProtocolResult {
  double accuracy_personalized = 0.0;
  double accuracy_bootstrap = 0.0;
  std::vector<double> per_user_accuracy;
  AttackReport attack;
  EntropyBucketReport entropy;
  std::optional<GapCheckReport> gap;  // Gaussian mode only
  std::vector<TrainedDistribution> dists;
  ToyModel bootstrap_model;
  ToyModel final_model;
  SyntheticTask task;
  // Wire bytes per device session (final round, device order) and the
  // collected dataset built from them.
  std::vector<std::string> device_payloads;
  CloudDataset dataset;
};

namespace pipeline {

inline SyntheticTask build_task(const ExperimentConfig& cfg) {
  SyntheticTaskSpec spec = cfg.task;
  spec.seed = derive_seed(derive_seed(cfg.seed, stream::kTask), cfg.task.seed);
  return generate_synthetic(spec);
}

inline ToyModel build_bootstrap(const ExperimentConfig& cfg,
                                const SyntheticTask& task) {
  Rng init_rng(derive_seed(cfg.seed, stream::kModelInit));
  ToyModel model = make_model(cfg.model.d_u, cfg.task.d_x, cfg.model.d_h,
                              cfg.task.n_classes, init_rng, true,
                              cfg.model.embed_gain, cfg.model.logit_gain);
  std::vector<LabeledSample> pooled;
  for (const auto& dev : task.devices) {
    pooled.insert(pooled.end(), dev.train.begin(), dev.train.end());
  }
  return bootstrap_train(std::move(model), pooled, cfg.cloud.bootstrap_epochs,
                         cfg.cloud.lr, cfg.cloud.batch_size,
                         derive_seed(cfg.seed, stream::kBootstrap));
}

inline std::vector<TrainedDistribution> train_devices(
    const ExperimentConfig& cfg, const SyntheticTask& task,
    const ToyModel& frozen, int round) {
  std::vector<TrainedDistribution> dists(task.devices.size());
  const std::uint64_t base =
      stream::kDeviceBase +
      static_cast<std::uint64_t>(round) * task.devices.size();
  detail::parallel_for(
      static_cast<int>(task.devices.size()), cfg.workers, [&](int n) {
        const TrainerConfig tc = make_trainer_config(
            cfg, derive_seed(cfg.seed, base + static_cast<std::uint64_t>(n)));
        dists[static_cast<std::size_t>(n)] =
            train_device(task.devices[static_cast<std::size_t>(n)], frozen, tc);
      });
  return dists;
}

inline std::vector<std::string> make_device_payloads(
    const ExperimentConfig& cfg, const SyntheticTask& task,
    const std::vector<TrainedDistribution>& dists, int round) {
  std::vector<std::string> payloads(task.devices.size());
  const std::uint64_t base =
      stream::kUploadBase +
      static_cast<std::uint64_t>(round) * task.devices.size();
  detail::parallel_for(
      static_cast<int>(task.devices.size()), cfg.workers, [&](int n) {
        Rng rng(derive_seed(cfg.seed, base + static_cast<std::uint64_t>(n)));
        const auto records =
            emit_uploads(dists[static_cast<std::size_t>(n)],
                         task.devices[static_cast<std::size_t>(n)], rng);
        payloads[static_cast<std::size_t>(n)] = session_payload(records);
      });
  return payloads;
}

/// Ships the session payloads over the configured transport and returns the
/// sessions as the cloud received them.
inline std::vector<std::vector<AnonymousRecord>> transport_sessions(
    const ExperimentConfig& cfg, const std::vector<std::string>& payloads) {
  UploadCollector collector;
  const auto socket_addr = detail::parse_socket_transport(cfg.transport);
  if (!socket_addr.has_value()) {
    for (const auto& p : payloads) collector.submit_payload(p);
    return collector.sessions();
  }
  RecordSocketServer server(socket_addr->host, socket_addr->port, collector);
  server.start(static_cast<int>(payloads.size()));
  detail::parallel_for(
      static_cast<int>(payloads.size()), std::max(cfg.workers, 2), [&](int n) {
        const auto records =
            parse_session_payload(payloads[static_cast<std::size_t>(n)]);
        send_session_over_socket(socket_addr->host, server.port(), records);
      });
  server.wait();
  return collector.sessions();
}

inline std::vector<double> attack_prior(const ExperimentConfig& cfg,
                                        const SyntheticTask& task) {
  const std::size_t n = task.devices.size();
  std::vector<double> prior(n, 1.0 / static_cast<double>(n));
  if (cfg.attack.prior == "weighted") {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      prior[i] = static_cast<double>(task.devices[i].train.size());
      total += prior[i];
    }
    for (double& p : prior) p /= total;
  }
  return prior;
}

}  // namespace pipeline

inline void write_protocol_outputs(const ExperimentConfig& cfg,
                                   const ProtocolResult& r,
                                   const std::string& out_dir);

namespace detail {

// Runs one protocol stage and prefixes any failure with the stage name,
// keeping ConfigError distinct so CLI exit codes stay meaningful.
template <typename Fn>
inline auto protocol_stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("stage ") + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace detail

/// The full single- or multi-round protocol: synthesize data, bootstrap the
/// cloud model, train device distributions against the frozen model, upload
/// anonymous records over the configured transport, pool and fine-tune, then
/// evaluate, attack and report. Writes reports under out_dir when given.
/// Failures carry the name of the stage that raised them.
inline ProtocolResult run_protocol(const ExperimentConfig& cfg,
                                   const std::string& out_dir = "") {
  ProtocolResult result;
  result.task = detail::protocol_stage(
      "generate-data", [&] { return pipeline::build_task(cfg); });
  result.bootstrap_model = detail::protocol_stage(
      "bootstrap", [&] { return pipeline::build_bootstrap(cfg, result.task); });

  ToyModel current = result.bootstrap_model;
  for (int round = 0; round < cfg.rounds; ++round) {
    ToyModel frozen = current;
    frozen.trainable = false;
    result.dists = detail::protocol_stage("device-training", [&] {
      return pipeline::train_devices(cfg, result.task, frozen, round);
    });
    result.device_payloads = detail::protocol_stage("upload", [&] {
      return pipeline::make_device_payloads(cfg, result.task, result.dists,
                                            round);
    });
    const auto sessions = detail::protocol_stage("transport", [&] {
      return pipeline::transport_sessions(cfg, result.device_payloads);
    });
    result.dataset = detail::protocol_stage("collect", [&] {
      return collect(sessions,
                     derive_seed(cfg.seed, stream::kCollect +
                                               static_cast<std::uint64_t>(round)));
    });
    ToyModel base = current;
    if (cfg.cloud.from_scratch) {
      Rng fresh_rng(derive_seed(cfg.seed, stream::kModelInit + 100 +
                                              static_cast<std::uint64_t>(round)));
      base = make_model(cfg.model.d_u, cfg.task.d_x, cfg.model.d_h,
                        cfg.task.n_classes, fresh_rng, true,
                        cfg.model.embed_gain, cfg.model.logit_gain);
    }
    current = detail::protocol_stage("finetune", [&] {
      return finetune(std::move(base), result.dataset,
                      cfg.cloud.finetune_epochs, cfg.cloud.lr,
                      cfg.cloud.batch_size,
                      derive_seed(cfg.seed, stream::kFinetune +
                                                static_cast<std::uint64_t>(round)));
    });
  }
  result.final_model = std::move(current);

  detail::protocol_stage("evaluate", [&] {
    Rng eval_rng(derive_seed(cfg.seed, stream::kEval));
    const EvalReport personalized =
        evaluate(result.final_model, result.task.devices, result.dists,
                 eval_rng, cfg.fresh_embedding_per_query);
    result.accuracy_personalized = personalized.accuracy;
    result.per_user_accuracy = personalized.per_user;
    result.accuracy_bootstrap =
        evaluate_zero_embedding(result.bootstrap_model, result.task.devices)
            .accuracy;
    return 0;
  });

  detail::protocol_stage("attack", [&] {
    std::vector<EmbeddingDistribution> dists_only;
    dists_only.reserve(result.dists.size());
    for (const auto& t : result.dists) dists_only.push_back(t.dist);
    const std::vector<double> prior = pipeline::attack_prior(cfg, result.task);
    std::optional<double> bound;
    if (cfg.embedding.mode == DistFamily::gaussian &&
        cfg.embedding.sigma > 0.0) {
      bound = misattribution_lower_bound(
          cfg.trainer.learning_rate, cfg.trainer.max_steps,
          cfg.trainer.clip_norm, cfg.embedding.sigma,
          static_cast<int>(result.dists.size()));
    }
    Rng attack_rng(derive_seed(cfg.seed, stream::kAttack));
    result.attack = misattribution_mc(dists_only, prior,
                                      cfg.attack.draws_per_user, attack_rng,
                                      bound);
    if (cfg.embedding.mode == DistFamily::gaussian) {
      result.gap =
          pairwise_gap_check(dists_only, cfg.trainer.learning_rate,
                             cfg.trainer.max_steps, cfg.trainer.clip_norm);
    }
    return 0;
  });

  detail::protocol_stage("entropy-analysis", [&] {
    Rng entropy_rng(derive_seed(cfg.seed, stream::kEntropy));
    const int k = std::min<int>(cfg.entropy.users_per_item,
                                static_cast<int>(result.dists.size()));
    result.entropy = user_entropy_report(
        result.final_model, result.bootstrap_model, result.task.devices,
        result.dists, k, cfg.entropy.bucket_edges, entropy_rng);
    return 0;
  });

  if (!out_dir.empty()) {
    detail::protocol_stage("write-outputs", [&] {
      write_protocol_outputs(cfg, result, out_dir);
      return 0;
    });
  }
  return result;
}

inline nlohmann::json metrics_to_json(const ProtocolResult& r) {
  nlohmann::json j;
  j["accuracy_personalized"] = r.accuracy_personalized;
  j["accuracy_bootstrap"] = r.accuracy_bootstrap;
  j["per_user_accuracy"] = r.per_user_accuracy;
  j["attack"] = to_json(r.attack);
  if (r.gap.has_value()) {
    j["pairwise_gap"] = {{"max_gap", r.gap->max_gap},
                         {"bound", r.gap->bound},
                         {"pass", r.gap->pass}};
  }
  nlohmann::json buckets = nlohmann::json::array();
  for (std::size_t b = 0; b + 1 < r.entropy.bucket_edges.size(); ++b) {
    buckets.push_back({{"lo", r.entropy.bucket_edges[b]},
                       {"hi", r.entropy.bucket_edges[b + 1]},
                       {"count", r.entropy.per_bucket_count[b]},
                       {"accuracy", r.entropy.per_bucket_accuracy[b]},
                       {"baseline_accuracy",
                        r.entropy.per_bucket_baseline_accuracy[b]}});
  }
  j["user_entropy"] = buckets;
  return j;
}

inline void write_entropy_csv(const std::string& path,
                              const EntropyBucketReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open entropy CSV for writing: " + path);
  out << "bucket_lo,bucket_hi,count,accuracy\n";
  for (std::size_t b = 0; b + 1 < report.bucket_edges.size(); ++b) {
    out << format_number(report.bucket_edges[b]) << ','
        << format_number(report.bucket_edges[b + 1]) << ','
        << report.per_bucket_count[b] << ','
        << format_number(report.per_bucket_accuracy[b]) << "\n";
  }
}

inline void write_attack_csv(const std::string& path,
                             const AttackReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open attack CSV for writing: " + path);
  out << "user,misattribution\n";
  for (std::size_t n = 0; n < report.per_user_rates.size(); ++n) {
    out << n << ',' << format_number(report.per_user_rates[n]) << "\n";
  }
}

inline void write_protocol_outputs(const ExperimentConfig& cfg,
                                   const ProtocolResult& r,
                                   const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto path = [&out_dir](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  {
    std::ofstream out(path("metrics.json"));
    out << metrics_to_json(r).dump(2) << "\n";
  }
  write_entropy_csv(path("entropy.csv"), r.entropy);
  write_attack_csv(path("attack.csv"), r.attack);
  {
    std::ofstream out(path("collected.ndjson"));
    for (const auto& rec : r.dataset.records) {
      out << record_to_line(rec) << "\n";
    }
  }
  {
    std::ofstream out(path("resolved_config.json"));
    out << config_to_json(cfg).dump(2) << "\n";
  }
  save_model(path("model.json"), r.final_model);
  save_model(path("bootstrap_model.json"), r.bootstrap_model);
}

/// Cloud-only baseline: the bootstrap model evaluated with zero embeddings.
inline double baseline_no_id(const ExperimentConfig& cfg) {
  const SyntheticTask task = pipeline::build_task(cfg);
  const ToyModel bootstrap = pipeline::build_bootstrap(cfg, task);
  return evaluate_zero_embedding(bootstrap, task.devices).accuracy;
}

struct OnDeviceBaselineResult {
  std::vector<double> per_user;
  double mean_accuracy = 0.0;
};

/// Local-personalization baseline: each user copies the bootstrap model and
/// fine-tunes all weights on local data only (no embeddings anywhere), then
/// is scored on the local test split.
inline OnDeviceBaselineResult baseline_on_device(const ExperimentConfig& cfg) {
  const SyntheticTask task = pipeline::build_task(cfg);
  const ToyModel bootstrap = pipeline::build_bootstrap(cfg, task);
  OnDeviceBaselineResult result;
  result.per_user.resize(task.devices.size());
  detail::parallel_for(
      static_cast<int>(task.devices.size()), cfg.workers, [&](int n) {
        const auto& dev = task.devices[static_cast<std::size_t>(n)];
        ToyModel local = bootstrap_train(
            bootstrap, dev.train, cfg.on_device.epochs, cfg.on_device.lr,
            cfg.on_device.batch_size,
            derive_seed(cfg.seed,
                        stream::kDeviceBase + static_cast<std::uint64_t>(n)));
        const EvalReport rep = evaluate_zero_embedding(local, {dev});
        result.per_user[static_cast<std::size_t>(n)] = rep.accuracy;
      });
  double total = 0.0;
  for (double a : result.per_user) total += a;
  result.mean_accuracy = total / static_cast<double>(result.per_user.size());
  return result;
}

struct SweepRow {
  double sigma = 0.0;
  double accuracy = 0.0;
  double misattribution = 0.0;
};

inline void write_sweep_csv(const std::string& path,
                            const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open sweep CSV for writing: " + path);
  out << "sigma,accuracy,misattribution\n";
  for (const auto& row : rows) {
    out << format_number(row.sigma) << ',' << format_number(row.accuracy) << ','
        << format_number(row.misattribution) << "\n";
  }
}

/// One full protocol run per sigma, all under the same seeds; rows come back
/// in request order.
inline std::vector<SweepRow> sweep_variance(const ExperimentConfig& cfg,
                                            const std::vector<double>& sigmas,
                                            const std::string& csv_path = "") {
  if (cfg.embedding.mode != DistFamily::gaussian) {
    throw ConfigError("variance sweep requires gaussian mode");
  }
  std::vector<SweepRow> rows;
  for (double sigma : sigmas) {
    ExperimentConfig point = cfg;
    point.embedding.sigma = sigma;
    const ProtocolResult r = run_protocol(point);
    rows.push_back({sigma, r.accuracy_personalized,
                    r.attack.empirical_misattribution});
  }
  if (!csv_path.empty()) write_sweep_csv(csv_path, rows);
  return rows;
}

struct ProjectionResult {
  std::vector<std::array<double, 2>> points;
  std::vector<int> tags;
  double ratio = 0.0;
};

/// Samples embeddings from the trained distributions, projects them to 2-D
/// and reports the between/within separability ratio. The per-point user tag
/// is harness ground truth for plotting, never wire data.
inline ProjectionResult export_embedding_projection(
    const std::vector<TrainedDistribution>& dists, int samples_per_user,
    std::uint64_t seed, const std::string& csv_path = "") {
  if (samples_per_user < 1) {
    throw ConfigError("projection needs samples_per_user >= 1");
  }
  std::vector<std::vector<double>> rows;
  std::vector<int> tags;
  Rng rng(seed);
  for (std::size_t n = 0; n < dists.size(); ++n) {
    for (int s = 0; s < samples_per_user; ++s) {
      rows.push_back(sample(dists[n].dist, rng));
      tags.push_back(static_cast<int>(n));
    }
  }
  ProjectionResult result;
  result.points = project_top2(rows);
  result.tags = std::move(tags);
  result.ratio = separability_ratio(result.points, result.tags);
  if (!csv_path.empty()) {
    write_projection_csv(csv_path, result.points, result.tags);
  }
  return result;
}

/// Runs the pipeline far enough to obtain trained distributions (no cloud
/// fine-tuning) and exports their projection.
inline ProjectionResult run_projection(const ExperimentConfig& cfg,
                                       int samples_per_user,
                                       const std::string& csv_path = "") {
  const SyntheticTask task = pipeline::build_task(cfg);
  ToyModel frozen = pipeline::build_bootstrap(cfg, task);
  frozen.trainable = false;
  const auto dists = pipeline::train_devices(cfg, task, frozen, 0);
  return export_embedding_projection(
      dists, samples_per_user, derive_seed(cfg.seed, stream::kProjection),
      csv_path);
}

}  // namespace idfree
