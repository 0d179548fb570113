// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hfo/cli.hpp"

#ifndef HFO_CLI_PATH
#error "HFO_CLI_PATH must point at the hfo executable"
#endif

namespace hfo {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("hfo_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("HF_NUM_WORKERS");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("HF_NUM_WORKERS");
  }

  std::vector<std::string> base_args() const {
    return {"--dims", "10,8,4", "--synthetic-n", "300", "--batch-size", "32",
            "--max-iters", "3", "--out", (dir_ / "runs").string()};
  }

  int run_cli(const std::string& args) const {
    const std::string cmd = std::string(HFO_CLI_PATH) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST_F(CliTest, FlagsPopulateManifest) {
  const auto m = parse_config({"--method", "hf_bicgstab", "--batch-size", "256", "--workers", "4"});
  EXPECT_EQ(m.config.method, Method::hf_bicgstab);
  EXPECT_EQ(m.config.batch_size, 256u);
  EXPECT_EQ(m.workers, 4u);
  EXPECT_EQ(m.settings.at("batch-size"), "256");
  EXPECT_EQ(m.run_id.size(), 16u);
}

TEST_F(CliTest, InvalidValuesAreUsageErrors) {
  try {
    parse_config({"--batch-size", "0"});
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_EQ(e.key(), "batch-size");
  }
  EXPECT_THROW(parse_config({"--lambda0", "abc"}), UsageError);
  EXPECT_THROW(parse_config({"--method", "adam"}), UsageError);
  EXPECT_THROW(parse_config({"--dims", "10"}), UsageError);
  EXPECT_THROW(parse_config({"--no-such-flag", "1"}), UsageError);
  EXPECT_THROW(parse_config({"--eta", "2"}), UsageError);
}

TEST_F(CliTest, FlagOverridesFileOverridesEnv) {
  const fs::path cfg = dir_ / "run.cfg";
  std::ofstream(cfg) << "# comment\nbatch-size = 64\nworkers=3\nrun-id=ignored\n";
  setenv("HF_NUM_WORKERS", "2", 1);
  EXPECT_EQ(parse_config({}).workers, 2u);
  const auto m = parse_config({"--config", cfg.string(), "--batch-size", "128"});
  EXPECT_EQ(m.config.batch_size, 128u);
  EXPECT_EQ(m.workers, 3u);

  std::ofstream(dir_ / "bad.cfg") << "bogus=1\n";
  EXPECT_THROW(parse_config({"--config", (dir_ / "bad.cfg").string()}), UsageError);
}

TEST_F(CliTest, ManifestRoundTripsThroughConfigFile) {
  const auto m = parse_config(base_args());
  const fs::path file = dir_ / "manifest.txt";
  std::ofstream(file) << serialize_manifest(m);
  const auto again = parse_config({"--config", file.string()});
  EXPECT_EQ(again.settings, m.settings);
  EXPECT_EQ(again.run_id, m.run_id);
}

TEST_F(CliTest, RunWritesManifestAndCsv) {
  const auto m = parse_config(base_args());
  std::ostringstream log;
  const auto outcome = execute_run(m, log);
  ASSERT_EQ(outcome.exit_code, kExitOk) << outcome.error;
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(m.run_dir())) files.push_back(e.path().filename());
  std::sort(files.begin(), files.end());
  EXPECT_EQ(files, (std::vector<std::string>{"manifest.txt", "metrics.csv"}));

  const auto rows = read_csv(m.run_dir() / "metrics.csv");
  ASSERT_EQ(rows.size(), 4u);
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  EXPECT_EQ(header, kMetricsHeader);
  double prev_epochs = 0.0;
  double prev_comm = 0.0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    ASSERT_EQ(rows[r].size(), 11u);
    for (const auto& cell : rows[r]) {
      std::size_t used = 0;
      (void)std::stod(cell, &used);
      EXPECT_EQ(used, cell.size()) << cell;
    }
    EXPECT_GE(std::stod(rows[r][1]), prev_epochs);
    EXPECT_GE(std::stod(rows[r][2]), prev_comm);
    prev_epochs = std::stod(rows[r][1]);
    prev_comm = std::stod(rows[r][2]);
  }
  EXPECT_NE(read_text(m.run_dir() / "manifest.txt").find("batch-size=32"), std::string::npos);
}

TEST_F(CliTest, RerunIsIdenticalExceptWallTime) {
  const auto m = parse_config(base_args());
  std::ostringstream log;
  ASSERT_EQ(execute_run(m, log).exit_code, kExitOk);
  const auto first = read_csv(m.run_dir() / "metrics.csv");
  ASSERT_EQ(execute_run(m, log).exit_code, kExitOk);
  const auto second = read_csv(m.run_dir() / "metrics.csv");
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t r = 0; r < first.size(); ++r) {
    for (std::size_t c = 0; c + 1 < first[r].size(); ++c) EXPECT_EQ(first[r][c], second[r][c]);
  }
}

TEST_F(CliTest, ExitCodes) {
  std::string common;
  for (const auto& a : base_args()) common += a + " ";
  EXPECT_EQ(run_cli("run " + common), kExitOk);
  EXPECT_EQ(run_cli("run " + common + "--batch-size 0"), kExitUsage);
  EXPECT_EQ(run_cli("run " + common + "--bogus 3"), kExitUsage);
  EXPECT_EQ(run_cli("frobnicate"), kExitUsage);
  EXPECT_EQ(run_cli(""), kExitUsage);
  EXPECT_EQ(run_cli("run --help"), kExitOk);
  EXPECT_NE(read_text(dir_ / "stdout.txt").find("usage:"), std::string::npos);
  EXPECT_EQ(run_cli("run " + common + "--dataset mnist --mnist-dir " + (dir_ / "nowhere").string()),
            kExitIo);
  EXPECT_EQ(run_cli("run " + common + "--out /proc/hfo-denied"), kExitIo);
  // Exploding SGD on an unbounded loss aborts with a numeric error and keeps the CSV.
  const std::string numeric = "run " + common +
                              "--method sgd --lr 1e6 --activation relu --loss mse --max-iters 50";
  EXPECT_EQ(run_cli(numeric), kExitNumeric);
  std::vector<std::string> args = base_args();
  for (const auto& extra : {"--method", "sgd", "--lr", "1e6", "--activation", "relu", "--loss",
                            "mse", "--max-iters", "50"}) {
    args.push_back(extra);
  }
  const auto m = parse_config(args);
  EXPECT_TRUE(fs::exists(m.run_dir() / "metrics.csv"));
  EXPECT_GE(read_csv(m.run_dir() / "metrics.csv").size(), 1u);
  EXPECT_EQ(run_cli("cost --dims 784,400,10 --n 1024 --batch-size 64 --workers 4"), kExitOk);
  EXPECT_NE(read_text(dir_ / "stdout.txt").find("model_parallel.floats_on_wire_per_epoch=839680"),
            std::string::npos);
  EXPECT_EQ(run_cli("cost --n 1000 --batch-size 64"), kExitUsage);
}

TEST_F(CliTest, BatchSweepWritesOneRowPerValue) {
  const auto m = parse_config(base_args());
  std::ostringstream log;
  fs::path sweep_dir;
  EXPECT_EQ(run_sweep(m, SweepAxis::batch_size, {"16", "64", "128"}, log, false, &sweep_dir),
            kExitOk);
  const auto rows = read_csv(sweep_dir / "summary.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1][0], "16");
  EXPECT_EQ(rows[3][0], "128");
}

TEST_F(CliTest, SweepIsolatesFailures) {
  const auto m = parse_config(base_args());
  std::ostringstream log;
  fs::path sweep_dir;
  // 1000 exceeds the training set: that run fails, the others complete.
  EXPECT_EQ(run_sweep(m, SweepAxis::batch_size, {"16", "1000", "32"}, log, true, &sweep_dir),
            kExitUsage);
  const auto rows = read_csv(sweep_dir / "summary.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].back(), "0");
  EXPECT_EQ(rows[2].back(), "2");
  EXPECT_EQ(rows[3].back(), "0");
}

TEST_F(CliTest, MethodSweepSgdCommunicatesMore) {
  auto args = base_args();
  args.insert(args.end(), {"--max-iters", "1", "--batch-size", "8"});
  const auto m = parse_config(args);
  std::ostringstream log;
  fs::path sweep_dir;
  ASSERT_EQ(run_sweep(m, SweepAxis::method, {"sgd", "hf_bicgstab"}, log, false, &sweep_dir),
            kExitOk);
  const auto rows = read_csv(sweep_dir / "summary.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_GT(std::stoull(rows[1][3]), std::stoull(rows[2][3]));
}

TEST_F(CliTest, WorkersSweepSameTrajectory) {
  const auto m = parse_config(base_args());
  std::vector<std::vector<IterationRecord>> runs;
  for (const char* w : {"1", "2", "4"}) {
    Settings s = m.settings;
    s["workers"] = w;
    std::ostringstream log;
    const auto outcome = execute_run(resolve_manifest(s), log);
    ASSERT_EQ(outcome.exit_code, kExitOk) << outcome.error;
    runs.push_back(outcome.records);
  }
  for (std::size_t r = 1; r < runs.size(); ++r) {
    ASSERT_EQ(runs[r].size(), runs[0].size());
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
      EXPECT_NEAR(runs[r][i].train_loss, runs[0][i].train_loss, 1e-10);
    }
  }
}

TEST_F(CliTest, IterationsToThreshold) {
  std::vector<IterationRecord> recs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    recs[i].k = i + 1;
    recs[i].train_error = 0.5 - 0.2 * static_cast<double>(i);
  }
  EXPECT_EQ(iterations_to_threshold(recs, 0.3), 2);
  EXPECT_EQ(iterations_to_threshold(recs, 0.01), -1);
}

}  // namespace
}  // namespace hfo
