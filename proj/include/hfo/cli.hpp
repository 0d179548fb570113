// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: configuration, dispatch, metrics CSV and sweeps.
//
// Configuration keys are the long flag names without dashes ("batch-size",
// "lambda0", ...). Later sources override earlier ones:
//   built-in defaults < HF_NUM_WORKERS (workers only) < --config file < flags.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hfo/error.hpp"
#include "hfo/model.hpp"
#include "hfo/optimizer.hpp"

namespace hfo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr std::string_view kMetricsHeader =
    "iter,epochs,comm_rounds,train_loss,train_err,test_err,lambda,alpha,inner_iters,"
    "curvature,wall_ms";
inline constexpr std::string_view kSummaryHeader =
    "value,iters_to_threshold,final_loss,comm_rounds,wall_ms,exit_code";
inline constexpr std::string_view kManifestFile = "manifest.txt";
inline constexpr std::string_view kMetricsFile = "metrics.csv";

/// Invalid configuration value; carries the offending key.
class UsageError : public ConfigError {
 public:
  UsageError(std::string key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

using Settings = std::map<std::string, std::string>;

/// Every recognized key with its default value.
const Settings& default_settings();

/// Flat key=value file; blank lines and '#' comments ignored. Unknown keys
/// throw UsageError.
Settings read_config_file(const std::filesystem::path& path);

struct RunManifest {
  TrainConfig config;
  NetworkSpec network;
  std::string dataset = "synthetic";
  std::filesystem::path mnist_dir;
  std::size_t subset = 0;
  std::size_t synthetic_n = 4096;
  double noise = 0.5;
  double train_fraction = 0.7;
  std::size_t workers = 1;
  double threshold = 0.05;
  std::filesystem::path out_dir = "runs";
  std::string run_id;

  Settings settings;  // resolved key=value view, the serialized form

  std::filesystem::path run_dir() const { return out_dir / run_id; }
};

/// Validates every key and builds the manifest (run id included).
RunManifest resolve_manifest(const Settings& settings);

/// Parses flags (argv without the program/subcommand name) plus the optional
/// --config file and HF_NUM_WORKERS.
RunManifest parse_config(const std::vector<std::string>& args);

/// key=value lines in key order, followed by the run id and output paths.
std::string serialize_manifest(const RunManifest& manifest);

/// 16 hex digits of FNV-1a over the resolved settings (output dir excluded).
std::string compute_run_id(const Settings& settings);

struct RunOutcome {
  int exit_code = kExitOk;
  std::vector<IterationRecord> records;
  std::string error;
};

/// Loads data, trains and writes <out>/<run id>/{manifest.txt, metrics.csv}.
/// Rows are flushed as they are produced.
RunOutcome execute_run(const RunManifest& manifest, std::ostream& log);

int run_experiment(const RunManifest& manifest, std::ostream& log);

enum class SweepAxis { batch_size, workers, method };

SweepAxis parse_sweep_axis(std::string_view s);

/// First record index (1-based k) with train_err <= threshold, or -1.
long iterations_to_threshold(const std::vector<IterationRecord>& records, double threshold);

/// One run per value (same seed), each isolated; writes summary.csv into
/// <out>/sweep-<axis>-<run id>/. Returns 0 if every run succeeded, otherwise
/// the first failing run's exit code.
int run_sweep(const RunManifest& manifest, SweepAxis axis, const std::vector<std::string>& values,
              std::ostream& log, bool parallel_runs = false,
              std::filesystem::path* sweep_dir_out = nullptr);

std::string format_record_row(const IterationRecord& rec);

/// Entry point of the `hfo` tool: `hfo run|sweep|cost [flags]`.
int cli_main(int argc, char** argv);

}  // namespace hfo
