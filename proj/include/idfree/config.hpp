// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "idfree/device_trainer.hpp"
#include "idfree/errors.hpp"
#include "idfree/synthetic.hpp"

namespace idfree {

struct ModelConfig {
  int d_u = 16;
  int d_h = 48;
  double embed_gain = 8.0;   // scale of the frozen embedding input block
  double logit_gain = 10.0;  // scale of the output layer at initialization
};

struct EmbeddingConfig {
  DistFamily mode = DistFamily::gaussian;
  double sigma = 0.2;
  double beta_init_alpha = 2.0;  // symmetric interior init for beta mode
  double beta_init_beta = 2.0;
};

struct CloudConfig {
  int bootstrap_epochs = 20;
  int finetune_epochs = 15;
  double lr = 0.05;
  int batch_size = 64;
  bool from_scratch = false;  // otherwise fine-tune from bootstrap weights
};

struct OnDeviceConfig {
  int epochs = 1000;  // local fine-tuning to convergence
  double lr = 0.3;
  int batch_size = 32;
};

struct AttackConfig {
  int draws_per_user = 1000;
  std::string prior = "uniform";  // or "weighted" (by upload counts)
};

struct EntropyConfig {
  int users_per_item = 20;
  std::vector<double> bucket_edges = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
};

struct TrainerCoreConfig {
  double learning_rate = 1e-3;
  int max_steps = 100;
  double clip_norm = 5.0;
  int mc_samples = 8;
  int batch_size = 32;
};

/// Full experiment description. Every field has a default; unknown keys in a
/// config document are an error so typos fail fast. All random behavior is
/// traced to the master seed through named substreams.
struct ExperimentConfig {
  SyntheticTaskSpec task;
  ModelConfig model;
  EmbeddingConfig embedding;
  TrainerCoreConfig trainer;
  CloudConfig cloud;
  OnDeviceConfig on_device;
  AttackConfig attack;
  EntropyConfig entropy;
  std::string transport = "inprocess";  // or "socket:HOST:PORT"
  int rounds = 1;
  int workers = 1;
  bool fresh_embedding_per_query = true;
  std::uint64_t seed = 1;
};

// Named substream tags hanging off the master seed.
namespace stream {
inline constexpr std::uint64_t kTask = 1;
inline constexpr std::uint64_t kModelInit = 2;
inline constexpr std::uint64_t kBootstrap = 3;
inline constexpr std::uint64_t kCollect = 4;
inline constexpr std::uint64_t kFinetune = 5;
inline constexpr std::uint64_t kEval = 6;
inline constexpr std::uint64_t kAttack = 7;
inline constexpr std::uint64_t kEntropy = 8;
inline constexpr std::uint64_t kProjection = 9;
inline constexpr std::uint64_t kDeviceBase = 1000;
inline constexpr std::uint64_t kUploadBase = 2000;
}  // namespace stream

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& known,
                                const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    if (known.find(key) == known.end()) {
      throw ConfigError("unknown config key: " + scope + key);
    }
  }
}

template <typename T>
inline void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config document must be an object");
  detail::reject_unknown_keys(
      j,
      {"task", "model", "embedding", "trainer", "cloud", "on_device", "attack",
       "entropy", "transport", "rounds", "workers", "fresh_embedding_per_query",
       "seed"},
      "");
  ExperimentConfig cfg;
  if (j.contains("task")) {
    const auto& t = j.at("task");
    detail::reject_unknown_keys(t,
                                {"users", "per_user", "d_x", "classes",
                                 "bias_strength", "label_noise", "seed"},
                                "task.");
    detail::read_field(t, "users", cfg.task.num_users);
    detail::read_field(t, "per_user", cfg.task.per_user);
    detail::read_field(t, "d_x", cfg.task.d_x);
    detail::read_field(t, "classes", cfg.task.n_classes);
    detail::read_field(t, "bias_strength", cfg.task.bias_strength);
    detail::read_field(t, "label_noise", cfg.task.label_noise);
    detail::read_field(t, "seed", cfg.task.seed);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::reject_unknown_keys(m, {"d_u", "d_h", "embed_gain", "logit_gain"},
                                "model.");
    detail::read_field(m, "d_u", cfg.model.d_u);
    detail::read_field(m, "d_h", cfg.model.d_h);
    detail::read_field(m, "embed_gain", cfg.model.embed_gain);
    detail::read_field(m, "logit_gain", cfg.model.logit_gain);
  }
  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    detail::reject_unknown_keys(
        e, {"mode", "sigma", "beta_init_alpha", "beta_init_beta"},
        "embedding.");
    if (e.contains("mode")) {
      const std::string mode = e.at("mode").get<std::string>();
      if (mode == "gaussian") {
        cfg.embedding.mode = DistFamily::gaussian;
      } else if (mode == "beta") {
        cfg.embedding.mode = DistFamily::beta;
      } else {
        throw ConfigError("embedding.mode must be gaussian or beta");
      }
    }
    detail::read_field(e, "sigma", cfg.embedding.sigma);
    detail::read_field(e, "beta_init_alpha", cfg.embedding.beta_init_alpha);
    detail::read_field(e, "beta_init_beta", cfg.embedding.beta_init_beta);
  }
  if (j.contains("trainer")) {
    const auto& t = j.at("trainer");
    detail::reject_unknown_keys(t,
                                {"learning_rate", "max_steps", "clip_norm",
                                 "mc_samples", "batch_size"},
                                "trainer.");
    detail::read_field(t, "learning_rate", cfg.trainer.learning_rate);
    detail::read_field(t, "max_steps", cfg.trainer.max_steps);
    detail::read_field(t, "clip_norm", cfg.trainer.clip_norm);
    detail::read_field(t, "mc_samples", cfg.trainer.mc_samples);
    detail::read_field(t, "batch_size", cfg.trainer.batch_size);
  }
  if (j.contains("cloud")) {
    const auto& c = j.at("cloud");
    detail::reject_unknown_keys(c,
                                {"bootstrap_epochs", "finetune_epochs", "lr",
                                 "batch_size", "from_scratch"},
                                "cloud.");
    detail::read_field(c, "bootstrap_epochs", cfg.cloud.bootstrap_epochs);
    detail::read_field(c, "finetune_epochs", cfg.cloud.finetune_epochs);
    detail::read_field(c, "lr", cfg.cloud.lr);
    detail::read_field(c, "batch_size", cfg.cloud.batch_size);
    detail::read_field(c, "from_scratch", cfg.cloud.from_scratch);
  }
  if (j.contains("on_device")) {
    const auto& o = j.at("on_device");
    detail::reject_unknown_keys(o, {"epochs", "lr", "batch_size"}, "on_device.");
    detail::read_field(o, "epochs", cfg.on_device.epochs);
    detail::read_field(o, "lr", cfg.on_device.lr);
    detail::read_field(o, "batch_size", cfg.on_device.batch_size);
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    detail::reject_unknown_keys(a, {"draws_per_user", "prior"}, "attack.");
    detail::read_field(a, "draws_per_user", cfg.attack.draws_per_user);
    detail::read_field(a, "prior", cfg.attack.prior);
    if (cfg.attack.prior != "uniform" && cfg.attack.prior != "weighted") {
      throw ConfigError("attack.prior must be uniform or weighted");
    }
  }
  if (j.contains("entropy")) {
    const auto& e = j.at("entropy");
    detail::reject_unknown_keys(e, {"users_per_item", "bucket_edges"},
                                "entropy.");
    detail::read_field(e, "users_per_item", cfg.entropy.users_per_item);
    detail::read_field(e, "bucket_edges", cfg.entropy.bucket_edges);
  }
  detail::read_field(j, "transport", cfg.transport);
  detail::read_field(j, "rounds", cfg.rounds);
  detail::read_field(j, "workers", cfg.workers);
  detail::read_field(j, "fresh_embedding_per_query",
                     cfg.fresh_embedding_per_query);
  detail::read_field(j, "seed", cfg.seed);

  if (cfg.rounds < 1) throw ConfigError("rounds must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  if (cfg.model.d_u < 1 || cfg.model.d_h < 1) {
    throw ConfigError("model dims must be positive");
  }
  if (cfg.embedding.sigma < 0.0) throw ConfigError("sigma must be >= 0");
  validate(cfg.task);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["task"] = {{"users", cfg.task.num_users},
               {"per_user", cfg.task.per_user},
               {"d_x", cfg.task.d_x},
               {"classes", cfg.task.n_classes},
               {"bias_strength", cfg.task.bias_strength},
               {"label_noise", cfg.task.label_noise},
               {"seed", cfg.task.seed}};
  j["model"] = {{"d_u", cfg.model.d_u},
                {"d_h", cfg.model.d_h},
                {"embed_gain", cfg.model.embed_gain},
                {"logit_gain", cfg.model.logit_gain}};
  j["embedding"] = {
      {"mode", cfg.embedding.mode == DistFamily::gaussian ? "gaussian" : "beta"},
      {"sigma", cfg.embedding.sigma},
      {"beta_init_alpha", cfg.embedding.beta_init_alpha},
      {"beta_init_beta", cfg.embedding.beta_init_beta}};
  j["trainer"] = {{"learning_rate", cfg.trainer.learning_rate},
                  {"max_steps", cfg.trainer.max_steps},
                  {"clip_norm", cfg.trainer.clip_norm},
                  {"mc_samples", cfg.trainer.mc_samples},
                  {"batch_size", cfg.trainer.batch_size}};
  j["cloud"] = {{"bootstrap_epochs", cfg.cloud.bootstrap_epochs},
                {"finetune_epochs", cfg.cloud.finetune_epochs},
                {"lr", cfg.cloud.lr},
                {"batch_size", cfg.cloud.batch_size},
                {"from_scratch", cfg.cloud.from_scratch}};
  j["on_device"] = {{"epochs", cfg.on_device.epochs},
                    {"lr", cfg.on_device.lr},
                    {"batch_size", cfg.on_device.batch_size}};
  j["attack"] = {{"draws_per_user", cfg.attack.draws_per_user},
                 {"prior", cfg.attack.prior}};
  j["entropy"] = {{"users_per_item", cfg.entropy.users_per_item},
                  {"bucket_edges", cfg.entropy.bucket_edges}};
  j["transport"] = cfg.transport;
  j["rounds"] = cfg.rounds;
  j["workers"] = cfg.workers;
  j["fresh_embedding_per_query"] = cfg.fresh_embedding_per_query;
  j["seed"] = cfg.seed;
  return j;
}

/// The distribution every device starts from: zero-mean Gaussian or the
/// configured symmetric Beta, always identical across devices.
inline EmbeddingDistribution make_shared_init(const ExperimentConfig& cfg) {
  if (cfg.embedding.mode == DistFamily::gaussian) {
    return DiagGaussian{std::vector<double>(cfg.model.d_u, 0.0),
                        cfg.embedding.sigma};
  }
  return BetaPerDim{
      std::vector<double>(cfg.model.d_u, cfg.embedding.beta_init_alpha),
      std::vector<double>(cfg.model.d_u, cfg.embedding.beta_init_beta)};
}

inline TrainerConfig make_trainer_config(const ExperimentConfig& cfg,
                                         std::uint64_t device_seed) {
  TrainerConfig tc;
  tc.learning_rate = cfg.trainer.learning_rate;
  tc.max_steps = cfg.trainer.max_steps;
  tc.clip_norm = cfg.trainer.clip_norm;
  tc.mc_samples = cfg.trainer.mc_samples;
  tc.mode = cfg.embedding.mode;
  tc.sigma = cfg.embedding.sigma;
  tc.shared_init = make_shared_init(cfg);
  tc.batch_size = cfg.trainer.batch_size;
  tc.seed = device_seed;
  return tc;
}

}  // namespace idfree
