// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: runs the anonymous-personalization protocol on a
// synthetic task, the privacy/accuracy sweeps and baselines, the attribution
// attack, the embedding projection export, and the verification suite.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "idfree/config.hpp"
#include "idfree/harness.hpp"
#include "idfree/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;

std::string out_path(const std::string& out_dir, const char* name) {
  std::filesystem::create_directories(out_dir);
  return (std::filesystem::path(out_dir) / name).string();
}

void print_metrics(const idfree::ProtocolResult& r) {
  std::cout << "accuracy_personalized " << idfree::format_number(r.accuracy_personalized)
            << "\n";
  std::cout << "accuracy_bootstrap   " << idfree::format_number(r.accuracy_bootstrap)
            << "\n";
  std::cout << "misattribution       "
            << idfree::format_number(r.attack.empirical_misattribution) << "\n";
  if (r.attack.theoretical_bound.has_value()) {
    std::cout << "misattribution_bound "
              << idfree::format_number(*r.attack.theoretical_bound) << "\n";
  }
  if (r.gap.has_value()) {
    std::cout << "pairwise_gap         " << idfree::format_number(r.gap->max_gap)
              << " (bound " << idfree::format_number(r.gap->bound)
              << (r.gap->pass ? ", ok" : ", VIOLATED") << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anonymous personalized-embedding protocol simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string transport_override;
  std::optional<std::uint64_t> seed_override;
  app.add_option("--config", config_path, "Experiment config file (JSON)");
  app.add_option("--seed", seed_override, "Override the master seed");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--transport", transport_override,
                 "inprocess or socket:HOST:PORT");

  auto* run_cmd = app.add_subcommand("run", "Run the full protocol");
  bool dump_data = false;
  run_cmd->add_flag("--dump-data", dump_data,
                    "Also dump per-user datasets (local-only files)");

  auto* sweep_cmd =
      app.add_subcommand("sweep", "Variance sweep: one protocol run per sigma");
  std::vector<double> sigmas{0.0, 0.1, 0.2, 0.3};
  sweep_cmd->add_option("--sigmas", sigmas, "Sigma values to sweep")
      ->delimiter(',')
      ->capture_default_str();

  auto* attack_cmd = app.add_subcommand(
      "attack", "Train distributions and run the attribution attack");

  auto* verify_cmd =
      app.add_subcommand("verify", "Run the verification suite");

  auto* proj_cmd = app.add_subcommand(
      "export-proj", "Export a 2-D projection of sampled user embeddings");
  int samples_per_user = 10;
  proj_cmd->add_option("--samples-per-user", samples_per_user)
      ->capture_default_str();

  auto* baseline_cmd = app.add_subcommand("baseline", "Run a baseline");
  std::string kind;
  baseline_cmd
      ->add_option("--kind", kind, "no-id | on-device | static-embedding")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    idfree::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = idfree::load_config(config_path);
    if (seed_override.has_value()) cfg.seed = *seed_override;
    if (!transport_override.empty()) cfg.transport = transport_override;

    if (run_cmd->parsed()) {
      const idfree::ProtocolResult r = idfree::run_protocol(cfg, out_dir);
      if (dump_data) {
        const std::string data_dir = out_path(out_dir, "device_data");
        std::filesystem::create_directories(data_dir);
        for (const auto& dev : r.task.devices) {
          idfree::save_device_dataset(
              (std::filesystem::path(data_dir) /
               ("device_" + std::to_string(dev.local_user_id) + ".ndjson"))
                  .string(),
              dev);
        }
      }
      print_metrics(r);
    } else if (sweep_cmd->parsed()) {
      const auto rows =
          idfree::sweep_variance(cfg, sigmas, out_path(out_dir, "sweep.csv"));
      std::cout << "sigma,accuracy,misattribution\n";
      for (const auto& row : rows) {
        std::cout << idfree::format_number(row.sigma) << ','
                  << idfree::format_number(row.accuracy) << ','
                  << idfree::format_number(row.misattribution) << "\n";
      }
    } else if (attack_cmd->parsed()) {
      const idfree::SyntheticTask task = idfree::pipeline::build_task(cfg);
      idfree::ToyModel frozen = idfree::pipeline::build_bootstrap(cfg, task);
      frozen.trainable = false;
      const auto dists = idfree::pipeline::train_devices(cfg, task, frozen, 0);
      std::vector<idfree::EmbeddingDistribution> dists_only;
      for (const auto& t : dists) dists_only.push_back(t.dist);
      std::optional<double> bound;
      if (cfg.embedding.mode == idfree::DistFamily::gaussian &&
          cfg.embedding.sigma > 0.0) {
        bound = idfree::misattribution_lower_bound(
            cfg.trainer.learning_rate, cfg.trainer.max_steps,
            cfg.trainer.clip_norm, cfg.embedding.sigma,
            static_cast<int>(dists.size()));
      }
      idfree::Rng rng(idfree::derive_seed(cfg.seed, idfree::stream::kAttack));
      const idfree::AttackReport report = idfree::misattribution_mc(
          dists_only, idfree::pipeline::attack_prior(cfg, task),
          cfg.attack.draws_per_user, rng, bound);
      {
        std::ofstream out(out_path(out_dir, "attack.json"));
        out << idfree::to_json(report).dump(2) << "\n";
      }
      idfree::write_attack_csv(out_path(out_dir, "attack.csv"), report);
      std::cout << "misattribution "
                << idfree::format_number(report.empirical_misattribution) << "\n";
      if (report.theoretical_bound.has_value()) {
        std::cout << "bound          "
                  << idfree::format_number(*report.theoretical_bound) << "\n";
      }
    } else if (verify_cmd->parsed()) {
      const idfree::VerifyResult result = idfree::verify_all(cfg);
      for (const auto& check : result.checks) {
        std::cout << (check.pass ? "[PASS] " : "[FAIL] ") << check.name << ": "
                  << check.detail << "\n";
      }
      if (!result.all_pass) {
        std::cout << "verification FAILED\n";
        return kExitVerify;
      }
      std::cout << "verification passed\n";
    } else if (proj_cmd->parsed()) {
      const idfree::ProjectionResult r = idfree::run_projection(
          cfg, samples_per_user, out_path(out_dir, "projection.csv"));
      std::cout << "between_within_ratio " << idfree::format_number(r.ratio)
                << "\n";
    } else if (baseline_cmd->parsed()) {
      if (kind == "no-id") {
        std::cout << "accuracy " << idfree::format_number(idfree::baseline_no_id(cfg))
                  << "\n";
      } else if (kind == "on-device") {
        const auto r = idfree::baseline_on_device(cfg);
        std::cout << "accuracy " << idfree::format_number(r.mean_accuracy) << "\n";
        for (std::size_t n = 0; n < r.per_user.size(); ++n) {
          std::cout << "user_" << n << " " << idfree::format_number(r.per_user[n])
                    << "\n";
        }
      } else if (kind == "static-embedding") {
        idfree::ExperimentConfig static_cfg = cfg;
        static_cfg.embedding.mode = idfree::DistFamily::gaussian;
        static_cfg.embedding.sigma = 0.0;
        const idfree::ProtocolResult r = idfree::run_protocol(static_cfg, out_dir);
        print_metrics(r);
      } else {
        throw idfree::ConfigError(
            "baseline kind must be no-id, on-device or static-embedding");
      }
    }
    return kExitOk;
  } catch (const idfree::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
