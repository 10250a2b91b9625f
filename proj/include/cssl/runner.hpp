#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cssl/protocol.hpp"
#include "cssl/types.hpp"

namespace cssl {

enum class BatteryKind { car_like, ccc_like, custom };
std::string to_string(BatteryKind kind);
BatteryKind battery_kind_from_string(const std::string& s);

struct WarmupConfig {
  double learning_rate = 0.05;
  int epochs = 20;
  int batch_size = 128;
};

// Fully resolved description of one sequence in a battery: either generated
// from the drift presets or ingested from a CSV stream.
struct SequenceSpec {
  std::string id;
  TaskKind kind = TaskKind::classification;
  DriftGroup group = DriftGroup::contiguous;
  std::array<int, 3> folds{0, 0, 0};
  int subfold_size = 1;

  bool from_csv = false;
  std::string csv_path;

  int length = 0;
  int d = 0;
  int classes = 0;  // classification only

  // classification drift knobs (effective values after group resolution)
  double mean_radius = 3.0;
  double sigma = 1.0;
  double drift_per_length = 1.0;
  double jump_scale = 0.0;
  double jump_growth = 1.0;
  double background_prior = 0.30;

  // regression knobs
  double weight_scale = 1.0;
  double reg_drift_per_length = 0.5;
  double reg_jump_scale = 0.0;
  double noise_std = 0.1;
};

struct ExperimentConfig {
  int schema_version = 1;
  BatteryKind battery = BatteryKind::custom;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int workers = 2;
  bool union_warmup = false;  // one warm-up model on the union of S folds
  WarmupConfig warmup;
  SelfTrainConfig self_train;
  std::vector<SequenceSpec> sequences;
};

// Shipped defaults: the 15-sequence classification battery (5 sequences per
// drift group) and the 3-sequence regression battery with splits
// (400,800,800)/(400,800,800)/(150,300,300).
ExperimentConfig default_config(BatteryKind kind, std::uint64_t seed);

struct ConfigError {
  std::string path;     // dotted field path, e.g. "self_train.threshold"
  std::string message;
};

struct ConfigValidation {
  std::optional<ExperimentConfig> config;
  std::vector<ConfigError> errors;

  bool ok() const { return errors.empty() && config.has_value(); }
};

// Parses and normalizes a config file: battery defaults resolved, every
// field checked, unknown keys rejected. Never throws for content problems;
// they land in `errors` with their field path.
ConfigValidation validate_config_file(const std::string& path);

// Canonical JSON form of a normalized config (stable key order).
std::string normalized_config_json(const ExperimentConfig& cfg);

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct run_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunManifest {
  int schema_version = 1;
  std::string battery;
  std::string config_hash;  // FNV-1a of the normalized config JSON
  std::uint64_t seed = 0;
  std::vector<std::string> modes;
  std::vector<std::pair<std::string, std::string>> sequence_dirs;  // id -> dir
};

struct RunOptions {
  std::vector<Mode> modes = {Mode::sup_ft, Mode::upd_v, Mode::upd_t,
                             Mode::upd_v_plus_t};
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool plots = true;
};

// Runs warm-up plus the requested modes over every sequence, writes
// manifest.json, per-sequence predictions, reports.json, summary_table.csv,
// deltas and plots under the output directory. Wall-clock timing goes to
// run.log, the only non-deterministic output.
RunManifest run_battery(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Renders plots from an existing reports.json (the `plot` subcommand).
// Returns the written file paths; an empty reports file yields none.
std::vector<std::string> emit_plots(const std::string& reports_json_path,
                                    const std::string& out_dir);

std::string fnv1a_hex(const std::string& data);

}  // namespace cssl
