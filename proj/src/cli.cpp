// SPDX-License-Identifier: Apache-2.0

#include "hfo/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "hfo/data.hpp"
#include "hfo/parallel.hpp"

namespace hfo {
namespace {

// Informational keys written into manifests; accepted and ignored on read.
constexpr std::string_view kRunIdKey = "run-id";
constexpr std::string_view kRunDirKey = "run-dir";

std::size_t parse_count(const Settings& s, const std::string& key) {
  const std::string& text = s.at(key);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw UsageError(key, "expected a nonnegative integer, got '" + text + "'");
  }
  return value;
}

double parse_real(const Settings& s, const std::string& key) {
  const std::string& text = s.at(key);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty() ||
      !std::isfinite(value)) {
    throw UsageError(key, "expected a finite number, got '" + text + "'");
  }
  return value;
}

bool parse_bool(const Settings& s, const std::string& key) {
  const std::string& text = s.at(key);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw UsageError(key, "expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_dims(const Settings& s, const std::string& key) {
  std::vector<std::size_t> dims;
  std::stringstream ss(s.at(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    Settings one{{key, item}};
    dims.push_back(parse_count(one, key));
  }
  return dims;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Keys a sweep axis rewrites.
std::string axis_key(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::batch_size:
      return "batch-size";
    case SweepAxis::workers:
      return "workers";
    case SweepAxis::method:
      return "method";
  }
  return "";
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::batch_size:
      return "batch_size";
    case SweepAxis::workers:
      return "workers";
    case SweepAxis::method:
      return "method";
  }
  return "";
}

struct LoadedData {
  Dataset train;
  Dataset test;
};

LoadedData load_data(const RunManifest& m) {
  Dataset all;
  if (m.dataset == "mnist") {
    all = load_idx(m.mnist_dir / "train-images-idx3-ubyte", m.mnist_dir / "train-labels-idx1-ubyte");
    if (m.subset > 0 && m.subset < all.size()) {
      std::vector<std::size_t> first(m.subset);
      for (std::size_t i = 0; i < m.subset; ++i) first[i] = i;
      all = gather(all, first);
    }
  } else {
    all = synthetic_classification(m.config.seed, m.synthetic_n, m.network.input_dim(),
                                   m.network.output_dim(), m.noise);
  }
  if (all.features() != m.network.input_dim()) {
    throw UsageError("dims", "dataset has " + std::to_string(all.features()) +
                                 " features but dims starts with " +
                                 std::to_string(m.network.input_dim()));
  }
  if (all.num_classes > m.network.output_dim()) {
    throw UsageError("dims", "dataset has " + std::to_string(all.num_classes) +
                                 " classes but the output layer has " +
                                 std::to_string(m.network.output_dim()));
  }
  auto [train, test] = split(all, m.train_fraction, m.config.seed);
  return {std::move(train), std::move(test)};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

UsageError::UsageError(std::string key, const std::string& message)
    : ConfigError("invalid value for '" + key + "': " + message), key_(std::move(key)) {}

const Settings& default_settings() {
  static const Settings defaults = {
      {"method", "hf_bicgstab"},
      {"dataset", "synthetic"},
      {"mnist-dir", ""},
      {"dims", "50,32,10"},
      {"activation", "sigmoid"},
      {"loss", "softmax_cross_entropy"},
      {"batch-size", "512"},
      {"workers", "1"},
      {"max-iters", "100"},
      {"lambda0", "0.01"},
      {"eta", "0.7"},
      {"warm-start", "true"},
      {"cg-iters", "5"},
      {"cg-tol", "1e-8"},
      {"lr", "0.1"},
      {"seed", "1"},
      {"threshold", "0.05"},
      {"out", "runs"},
      {"armijo-c", "1e-4"},
      {"armijo-shrink", "0.5"},
      {"max-backtracks", "20"},
      {"synthetic-n", "4096"},
      {"noise", "0.5"},
      {"train-fraction", "0.7"},
      {"subset", "0"},
  };
  return defaults;
}

Settings read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config", "cannot open " + path.string());
  Settings out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config", path.string() + ":" + std::to_string(line_no) +
                                     ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == kRunIdKey || key == kRunDirKey) continue;
    if (!default_settings().contains(key)) throw UsageError(key, "unknown configuration key");
    out[key] = value;
  }
  return out;
}

std::string compute_run_id(const Settings& settings) {
  std::uint64_t hash = 1469598103934665603ULL;
  auto mix = [&hash](std::string_view s) {
    for (unsigned char c : s) {
      hash ^= c;
      hash *= 1099511628211ULL;
    }
  };
  for (const auto& [key, value] : settings) {
    if (key == "out") continue;
    mix(key);
    mix("=");
    mix(value);
    mix("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

RunManifest resolve_manifest(const Settings& input) {
  Settings s = default_settings();
  for (const auto& [key, value] : input) {
    if (!s.contains(key)) throw UsageError(key, "unknown configuration key");
    s[key] = value;
  }

  RunManifest m;
  TrainConfig& c = m.config;
  try {
    c.method = parse_method(s.at("method"));
  } catch (const ConfigError& e) {
    throw UsageError("method", e.what());
  }
  m.dataset = s.at("dataset");
  if (m.dataset != "mnist" && m.dataset != "synthetic") {
    throw UsageError("dataset", "expected mnist or synthetic");
  }
  m.mnist_dir = s.at("mnist-dir");
  if (m.dataset == "mnist" && m.mnist_dir.empty()) {
    throw UsageError("mnist-dir", "required when dataset=mnist");
  }

  m.network.dims = parse_dims(s, "dims");
  try {
    m.network.hidden_activation = parse_activation(s.at("activation"));
  } catch (const ConfigError& e) {
    throw UsageError("activation", e.what());
  }
  try {
    m.network.output = parse_output_loss(s.at("loss"));
  } catch (const ConfigError& e) {
    throw UsageError("loss", e.what());
  }
  try {
    m.network.validate();
  } catch (const ConfigError& e) {
    throw UsageError("dims", e.what());
  }

  c.batch_size = parse_count(s, "batch-size");
  if (c.batch_size == 0) throw UsageError("batch-size", "must be >= 1");
  m.workers = parse_count(s, "workers");
  if (m.workers == 0) throw UsageError("workers", "must be >= 1");
  c.max_outer_iter = parse_count(s, "max-iters");
  c.lambda0 = parse_real(s, "lambda0");
  if (c.lambda0 < 0.0) throw UsageError("lambda0", "must be >= 0");
  c.warm_start_decay = parse_real(s, "eta");
  if (c.warm_start_decay < 0.0 || c.warm_start_decay > 1.0) {
    throw UsageError("eta", "must lie in [0,1]");
  }
  c.warm_start = parse_bool(s, "warm-start");
  c.max_cg_iter = parse_count(s, "cg-iters");
  if (c.max_cg_iter == 0) throw UsageError("cg-iters", "must be >= 1");
  c.cg_tol = parse_real(s, "cg-tol");
  if (c.cg_tol <= 0.0) throw UsageError("cg-tol", "must be > 0");
  c.sgd_learning_rate = parse_real(s, "lr");
  if (c.sgd_learning_rate <= 0.0) throw UsageError("lr", "must be > 0");
  c.seed = parse_count(s, "seed");
  m.threshold = parse_real(s, "threshold");
  c.armijo_c = parse_real(s, "armijo-c");
  if (c.armijo_c <= 0.0 || c.armijo_c >= 1.0) throw UsageError("armijo-c", "must lie in (0,1)");
  c.armijo_shrink = parse_real(s, "armijo-shrink");
  if (c.armijo_shrink <= 0.0 || c.armijo_shrink >= 1.0) {
    throw UsageError("armijo-shrink", "must lie in (0,1)");
  }
  c.max_backtracks = parse_count(s, "max-backtracks");
  if (c.max_backtracks == 0) throw UsageError("max-backtracks", "must be >= 1");
  m.synthetic_n = parse_count(s, "synthetic-n");
  if (m.synthetic_n == 0) throw UsageError("synthetic-n", "must be >= 1");
  m.noise = parse_real(s, "noise");
  if (m.noise < 0.0) throw UsageError("noise", "must be >= 0");
  m.train_fraction = parse_real(s, "train-fraction");
  if (m.train_fraction <= 0.0 || m.train_fraction >= 1.0) {
    throw UsageError("train-fraction", "must lie in (0,1)");
  }
  m.subset = parse_count(s, "subset");
  m.out_dir = s.at("out");
  if (m.out_dir.empty()) throw UsageError("out", "must not be empty");

  m.settings = s;
  m.run_id = compute_run_id(s);
  return m;
}

RunManifest parse_config(const std::vector<std::string>& args) {
  CLI::App app{"hfo run"};
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> options;
  for (const auto& [key, _] : default_settings()) {
    options[key] = app.add_option("--" + key, flag_values[key])
                       ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
  std::string config_path;
  app.add_option("--config", config_path)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw UsageError("flags", e.what());
  }

  Settings merged;
  if (const char* env = std::getenv("HF_NUM_WORKERS"); env != nullptr && *env != '\0') {
    merged["workers"] = env;
  }
  if (!config_path.empty()) {
    for (const auto& [key, value] : read_config_file(config_path)) merged[key] = value;
  }
  for (const auto& [key, opt] : options) {
    if (opt->count() > 0) merged[key] = flag_values[key];
  }
  return resolve_manifest(merged);
}

std::string serialize_manifest(const RunManifest& m) {
  std::ostringstream out;
  out << "# resolved run manifest\n";
  for (const auto& [key, value] : m.settings) out << key << '=' << value << '\n';
  out << kRunIdKey << '=' << m.run_id << '\n';
  out << kRunDirKey << '=' << m.run_dir().string() << '\n';
  return out.str();
}

std::string format_record_row(const IterationRecord& r) {
  std::ostringstream out;
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_ms);
  out << r.k << ',' << format_real(r.epochs_consumed) << ',' << r.comm_rounds << ','
      << format_real(r.train_loss) << ',' << format_real(r.train_error) << ','
      << format_real(r.test_error) << ',' << format_real(r.lambda) << ','
      << format_real(r.alpha) << ',' << r.inner_iterations << ','
      << static_cast<int>(r.curvature) << ',' << wall;
  return out.str();
}

RunOutcome execute_run(const RunManifest& m, std::ostream& log) {
  RunOutcome outcome;
  std::ofstream csv;
  try {
    std::filesystem::create_directories(m.run_dir());
    write_text_file(m.run_dir() / kManifestFile, serialize_manifest(m));
    csv.open(m.run_dir() / kMetricsFile, std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (m.run_dir() / kMetricsFile).string());
    csv << kMetricsHeader << '\n' << std::flush;

    const LoadedData data = load_data(m);
    m.config.validate(data.train.size());
    ParallelExecutor exec(m.network, data.train, m.workers, m.config.seed);
    Vector theta = init_params(m.network, m.config.seed);
    Rng rng(m.config.seed);

    TrainHooks hooks;
    hooks.on_record = [&](const IterationRecord& rec) {
      outcome.records.push_back(rec);
      csv << format_record_row(rec) << '\n' << std::flush;
      if (!csv) throw IoError("metrics write failed");
    };
    log << "run " << m.run_id << ": " << to_string(m.config.method) << ", n=" << data.train.size()
        << ", b=" << m.config.batch_size << ", workers=" << m.workers << '\n';
    train(m.config, exec, theta, &data.test, rng, &hooks);
  } catch (const NumericError& e) {
    outcome.exit_code = kExitNumeric;
    outcome.error = e.what();
  } catch (const ConfigError& e) {
    outcome.exit_code = kExitUsage;
    outcome.error = e.what();
  } catch (const DimensionError& e) {
    outcome.exit_code = kExitUsage;
    outcome.error = e.what();
  } catch (const IoError& e) {
    outcome.exit_code = kExitIo;
    outcome.error = e.what();
  } catch (const FormatError& e) {
    outcome.exit_code = kExitIo;
    outcome.error = e.what();
  } catch (const std::filesystem::filesystem_error& e) {
    outcome.exit_code = kExitIo;
    outcome.error = e.what();
  }
  if (!outcome.error.empty()) log << "error: " << outcome.error << '\n';
  return outcome;
}

int run_experiment(const RunManifest& manifest, std::ostream& log) {
  return execute_run(manifest, log).exit_code;
}

SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "batch_size" || s == "batch-size") return SweepAxis::batch_size;
  if (s == "workers") return SweepAxis::workers;
  if (s == "method") return SweepAxis::method;
  throw UsageError("axis", "expected batch_size, workers or method");
}

long iterations_to_threshold(const std::vector<IterationRecord>& records, double threshold) {
  for (const auto& r : records) {
    if (r.train_error <= threshold) return static_cast<long>(r.k);
  }
  return -1;
}

int run_sweep(const RunManifest& manifest, SweepAxis axis, const std::vector<std::string>& values,
              std::ostream& log, bool parallel_runs, std::filesystem::path* sweep_dir_out) {
  if (values.empty()) throw UsageError("values", "sweep needs at least one value");
  const std::string key = axis_key(axis);
  const auto sweep_dir = manifest.out_dir / ("sweep-" + axis_name(axis) + "-" + manifest.run_id);
  if (sweep_dir_out != nullptr) *sweep_dir_out = sweep_dir;

  // Resolve every run up front so a bad value is a usage error before any work.
  std::vector<RunManifest> runs;
  for (const auto& value : values) {
    Settings s = manifest.settings;
    s[key] = value;
    s["out"] = sweep_dir.string();
    runs.push_back(resolve_manifest(s));
  }

  std::vector<RunOutcome> outcomes(runs.size());
  if (parallel_runs) {
    std::vector<std::future<RunOutcome>> jobs;
    std::vector<std::ostringstream> logs(runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i) {
      jobs.push_back(std::async(std::launch::async,
                                [&, i] { return execute_run(runs[i], logs[i]); }));
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
      outcomes[i] = jobs[i].get();
      log << logs[i].str();
    }
  } else {
    for (std::size_t i = 0; i < runs.size(); ++i) outcomes[i] = execute_run(runs[i], log);
  }

  std::ostringstream summary;
  summary << kSummaryHeader << '\n';
  int status = kExitOk;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& recs = outcomes[i].records;
    double wall = 0.0;
    for (const auto& r : recs) wall += r.wall_ms;
    char wall_buf[32];
    std::snprintf(wall_buf, sizeof wall_buf, "%.3f", wall);
    summary << values[i] << ',' << iterations_to_threshold(recs, manifest.threshold) << ','
            << (recs.empty() ? std::string("nan") : format_real(recs.back().train_loss)) << ','
            << (recs.empty() ? 0 : recs.back().comm_rounds) << ',' << wall_buf << ','
            << outcomes[i].exit_code << '\n';
    if (outcomes[i].exit_code != kExitOk && status == kExitOk) status = outcomes[i].exit_code;
  }
  try {
    std::filesystem::create_directories(sweep_dir);
    write_text_file(sweep_dir / "summary.csv", summary.str());
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return status;
}

namespace {

int run_cost(const std::vector<std::string>& args) {
  CLI::App app{"hfo cost"};
  std::string dims_text = "784,400,10";
  std::uint64_t n = 1024;
  std::uint64_t b = 64;
  std::uint64_t workers = 4;
  app.add_option("--dims", dims_text);
  app.add_option("--n", n);
  app.add_option("--batch-size", b);
  app.add_option("--workers", workers);
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }
  try {
    const auto dims = parse_dims(Settings{{"dims", dims_text}}, "dims");
    const auto model = cost_model_parallel(dims, n, b, workers);
    const auto data = cost_data_parallel(dims, n, b, workers);
    std::cout << "model_parallel.floats_on_wire_per_epoch=" << model.floats_on_wire_per_epoch << '\n'
              << "model_parallel.sync_rounds_per_epoch=" << model.sync_rounds_per_epoch << '\n'
              << "model_parallel.floats_stored_per_node=" << model.floats_stored_per_node << '\n'
              << "data_parallel.floats_on_wire_per_epoch=" << data.floats_on_wire_per_epoch << '\n'
              << "data_parallel.corrected_floats_on_wire_per_epoch="
              << data.corrected_floats_on_wire_per_epoch << '\n'
              << "data_parallel.sync_rounds_per_epoch=" << data.sync_rounds_per_epoch << '\n'
              << "data_parallel.floats_stored_per_node=" << data.floats_stored_per_node << '\n';
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

void print_usage() {
  std::cout << "usage: hfo run   [--method M] [--dataset mnist|synthetic] [--dims a,b,c] ... \n"
               "       hfo sweep --axis batch_size|workers|method --values v1,v2,... [run flags]\n"
               "                 [--parallel-runs]\n"
               "       hfo cost  [--dims a,b,c] [--n N] [--batch-size B] [--workers W]\n"
               "run flags:";
  for (const auto& [key, value] : default_settings()) {
    std::cout << "\n  --" << key << " (default: " << (value.empty() ? "\"\"" : value) << ')';
  }
  std::cout << "\n  --config FILE (key=value lines)\n";
}

}  // namespace

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    print_usage();
    return args.empty() ? kExitUsage : kExitOk;
  }
  const std::string command = args.front();
  args.erase(args.begin());
  if (std::find_if(args.begin(), args.end(), [](const std::string& a) {
        return a == "--help" || a == "-h";
      }) != args.end()) {
    print_usage();
    return kExitOk;
  }
  if (command == "cost") return run_cost(args);
  if (command != "run" && command != "sweep") {
    std::cerr << "error: unknown command '" << command << "'\n";
    print_usage();
    return kExitUsage;
  }
  try {
    std::string axis_text;
    std::string values_text;
    bool parallel_runs = false;
    if (command == "sweep") {
      std::vector<std::string> rest;
      for (std::size_t i = 0; i < args.size(); ++i) {
        if ((args[i] == "--axis" || args[i] == "--values") && i + 1 < args.size()) {
          (args[i] == "--axis" ? axis_text : values_text) = args[i + 1];
          ++i;
        } else if (args[i] == "--parallel-runs") {
          parallel_runs = true;
        } else {
          rest.push_back(args[i]);
        }
      }
      args = std::move(rest);
      if (axis_text.empty()) throw UsageError("axis", "required for sweep");
      if (values_text.empty()) throw UsageError("values", "required for sweep");
    }
    const RunManifest manifest = parse_config(args);
    if (command == "run") {
      const int code = run_experiment(manifest, std::cerr);
      if (code == kExitOk) std::cout << manifest.run_dir().string() << '\n';
      return code;
    }
    const SweepAxis axis = parse_sweep_axis(axis_text);
    std::vector<std::string> values;
    std::stringstream ss(values_text);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(trim(item));
    std::filesystem::path sweep_dir;
    const int code = run_sweep(manifest, axis, values, std::cerr, parallel_runs, &sweep_dir);
    std::cout << sweep_dir.string() << '\n';
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace hfo
