// Copyright 2026 the idfree authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line tool: subcommands, artifacts on
// disk, exit codes (0 ok, 2 config error, 3 verification failure), and
// byte-identical reruns.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

#ifndef IDFREE_CLI_PATH
#error "IDFREE_CLI_PATH must point at the CLI binary"
#endif

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(IDFREE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_tiny_config(const fs::path& dir, bool zero_sigma = false) {
  nlohmann::json j{
      {"task",
       {{"users", 4}, {"per_user", 12}, {"d_x", 4}, {"classes", 3},
        {"bias_strength", 2.0}, {"label_noise", 0.05}}},
      {"model", {{"d_u", 3}, {"d_h", 8}}},
      {"trainer", {{"max_steps", 40}, {"mc_samples", 2}, {"batch_size", 8}}},
      {"cloud", {{"bootstrap_epochs", 2}, {"finetune_epochs", 2}}},
      {"attack", {{"draws_per_user", 10}}},
      {"entropy", {{"users_per_item", 2}}},
      {"seed", 5}};
  if (zero_sigma) j["embedding"] = {{"sigma", 0.0}};
  const fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << j.dump(2);
  return path;
}

TEST(Cli, HelpExitsCleanly) { EXPECT_EQ(run_cli("--help"), 0); }

TEST(Cli, MissingSubcommandIsAUsageError) { EXPECT_EQ(run_cli(""), 2); }

TEST(Cli, UnknownConfigKeyExitsWithConfigError) {
  const fs::path dir = fresh_dir("idfree_cli_badcfg");
  const fs::path path = dir / "bad.json";
  {
    std::ofstream out(path);
    out << R"({"taskz": {}})";
  }
  EXPECT_EQ(run_cli("--config " + path.string() + " run"), 2);
}

TEST(Cli, RunWritesAllArtifacts) {
  const fs::path dir = fresh_dir("idfree_cli_run");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "out";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + out.string() +
                    " run --dump-data"),
            0);

  const auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
  EXPECT_TRUE(metrics.contains("accuracy_personalized"));
  EXPECT_TRUE(metrics.contains("accuracy_bootstrap"));
  EXPECT_TRUE(metrics.at("attack").contains("empirical_misattribution"));

  const std::string entropy_csv = slurp(out / "entropy.csv");
  EXPECT_EQ(entropy_csv.rfind("bucket_lo,bucket_hi,count,accuracy\n", 0), 0u);

  // Collected wire records carry exactly the three anonymous keys.
  std::istringstream collected(slurp(out / "collected.ndjson"));
  std::string line;
  int lines = 0;
  while (std::getline(collected, line)) {
    const auto j = nlohmann::json::parse(line);
    ASSERT_EQ(j.size(), 3u);
    EXPECT_TRUE(j.contains("e"));
    EXPECT_TRUE(j.contains("x"));
    EXPECT_TRUE(j.contains("y"));
    ++lines;
  }
  EXPECT_EQ(lines, 4 * 9);  // users x train split

  // Local-only dataset dumps hold features and labels, nothing else.
  std::istringstream dump(slurp(out / "device_data" / "device_0.ndjson"));
  while (std::getline(dump, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.size(), 2u);
    EXPECT_TRUE(j.contains("x"));
    EXPECT_TRUE(j.contains("y"));
  }
}

TEST(Cli, SweepRerunsAreByteIdentical) {
  const fs::path dir = fresh_dir("idfree_cli_sweep");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out_a = dir / "a";
  const fs::path out_b = dir / "b";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + out_a.string() +
                    " sweep --sigmas 0,0.15"),
            0);
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + out_b.string() +
                    " sweep --sigmas 0,0.15"),
            0);
  const std::string csv = slurp(out_a / "sweep.csv");
  EXPECT_EQ(csv, slurp(out_b / "sweep.csv"));
  EXPECT_EQ(csv.rfind("sigma,accuracy,misattribution\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Cli, AttackAndProjectionSubcommandsWriteReports) {
  const fs::path dir = fresh_dir("idfree_cli_attack");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "out";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + out.string() +
                    " attack"),
            0);
  const auto report = nlohmann::json::parse(slurp(out / "attack.json"));
  EXPECT_TRUE(report.contains("empirical_misattribution"));
  EXPECT_TRUE(report.contains("per_user_rates"));
  const std::string attack_csv = slurp(out / "attack.csv");
  EXPECT_EQ(attack_csv.rfind("user,misattribution\n", 0), 0u);
  EXPECT_EQ(std::count(attack_csv.begin(), attack_csv.end(), '\n'), 1 + 4);

  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + out.string() +
                    " export-proj --samples-per-user 3"),
            0);
  const std::string proj = slurp(out / "projection.csv");
  EXPECT_EQ(proj.rfind("x,y,user\n", 0), 0u);
  EXPECT_EQ(std::count(proj.begin(), proj.end(), '\n'), 1 + 4 * 3);
}

TEST(Cli, BaselineKindsRunAndRejectUnknown) {
  const fs::path dir = fresh_dir("idfree_cli_baseline");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "out";
  const std::string base =
      "--config " + cfg.string() + " --out " + out.string() + " baseline ";
  EXPECT_EQ(run_cli(base + "--kind no-id"), 0);
  EXPECT_EQ(run_cli(base + "--kind on-device"), 0);
  EXPECT_EQ(run_cli(base + "--kind static-embedding"), 0);
  EXPECT_EQ(run_cli(base + "--kind mystery"), 2);
}

TEST(Cli, VerifyPassesOnAHealthyConfiguration) {
  const fs::path dir = fresh_dir("idfree_cli_verify_ok");
  const fs::path cfg = write_tiny_config(dir);
  EXPECT_EQ(run_cli("--config " + cfg.string() + " verify"), 0);
}

TEST(Cli, VerifyFailsWithExitThreeOnABrokenConfiguration) {
  const fs::path dir = fresh_dir("idfree_cli_verify");
  const fs::path cfg = write_tiny_config(dir, /*zero_sigma=*/true);
  EXPECT_EQ(run_cli("--config " + cfg.string() + " verify"), 3);
}

TEST(Cli, SocketTransportFlagWorksEndToEnd) {
  const fs::path dir = fresh_dir("idfree_cli_socket");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "out";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + out.string() +
                    " --transport socket:127.0.0.1:0 run"),
            0);
  // The collected dataset is transport-independent for identical seeds.
  const fs::path out2 = dir / "out2";
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + out2.string() +
                    " --transport inprocess run"),
            0);
  EXPECT_EQ(slurp(out / "collected.ndjson"), slurp(out2 / "collected.ndjson"));
}

}  // namespace
