#include "cssl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include <json.hpp>

#include "cssl/metrics.hpp"
#include "cssl/plots.hpp"
#include "cssl/report_io.hpp"
#include "cssl/rng.hpp"
#include "cssl/sequence_io.hpp"
#include "cssl/streamgen.hpp"

namespace cssl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kGenerateStream = 0x67656e65ULL;
constexpr std::uint64_t kWarmupStream = 0x7761726dULL;
constexpr std::uint64_t kSelfTrainStream = 0x73656c66ULL;

void parallel_for(int n, int workers, const std::function<void(int)>& fn,
                  std::vector<std::string>& errors) {
  errors.assign(static_cast<std::size_t>(n), "");
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
  };
  const int count = std::clamp(workers, 1, n > 0 ? n : 1);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
}

}  // namespace

std::string to_string(BatteryKind kind) {
  switch (kind) {
    case BatteryKind::car_like: return "car-like";
    case BatteryKind::ccc_like: return "ccc-like";
    case BatteryKind::custom: return "custom";
  }
  return "custom";
}

BatteryKind battery_kind_from_string(const std::string& s) {
  if (s == "car-like") return BatteryKind::car_like;
  if (s == "ccc-like") return BatteryKind::ccc_like;
  if (s == "custom") return BatteryKind::custom;
  throw std::invalid_argument("unknown battery kind: " + s);
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (const unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

ExperimentConfig default_config(BatteryKind kind, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.battery = kind;
  cfg.seed = seed;
  cfg.out_dir = "out";
  cfg.workers = 2;

  if (kind == BatteryKind::car_like) {
    cfg.union_warmup = true;
    cfg.warmup = WarmupConfig{0.05, 20, 128};
    cfg.self_train.threshold = 0.4;
    cfg.self_train.epochs_per_session = 1;
    cfg.self_train.learning_rate = 0.05;
    cfg.self_train.batch_size = 128;
    for (int i = 0; i < 15; ++i) {
      SequenceSpec spec;
      char id[16];
      std::snprintf(id, sizeof(id), "car-%02d", i);
      spec.id = id;
      spec.kind = TaskKind::classification;
      spec.group = i < 5    ? DriftGroup::contiguous
                   : i < 10 ? DriftGroup::short_gap
                            : DriftGroup::long_gap;
      spec.folds = {7500, 7500, 7500};
      spec.subfold_size = 1500;
      spec.length = 22500;
      spec.d = 16;
      spec.classes = 9;
      spec.mean_radius = 3.0;
      spec.sigma = 1.0;
      spec.drift_per_length = 1.0;
      spec.jump_scale = spec.group == DriftGroup::contiguous  ? 0.0
                        : spec.group == DriftGroup::short_gap ? 1.2
                                                              : 2.5;
      spec.jump_growth = spec.group == DriftGroup::long_gap ? 2.0 : 1.0;
      spec.background_prior = 0.30;
      cfg.sequences.push_back(std::move(spec));
    }
  } else if (kind == BatteryKind::ccc_like) {
    cfg.union_warmup = false;
    cfg.warmup = WarmupConfig{0.05, 100, 64};
    cfg.self_train.threshold = 0.4;
    cfg.self_train.epochs_per_session = 5;
    cfg.self_train.learning_rate = 0.05;
    cfg.self_train.batch_size = 64;
    const struct {
      const char* id;
      int length;
      std::array<int, 3> folds;
    } presets[] = {{"ccc-mall", 2000, {400, 800, 800}},
                   {"ccc-ucsd", 2000, {400, 800, 800}},
                   {"ccc-fdst", 750, {150, 300, 300}}};
    for (const auto& p : presets) {
      SequenceSpec spec;
      spec.id = p.id;
      spec.kind = TaskKind::regression;
      spec.group = DriftGroup::contiguous;
      spec.folds = p.folds;
      spec.subfold_size = 100;
      spec.length = p.length;
      spec.d = 8;
      spec.weight_scale = 1.0;
      spec.reg_drift_per_length = 0.5;
      spec.reg_jump_scale = 0.0;
      spec.noise_std = 0.1;
      cfg.sequences.push_back(std::move(spec));
    }
  } else {
    cfg.union_warmup = false;
    cfg.warmup = WarmupConfig{0.05, 20, 128};
  }
  return cfg;
}

// --------------------------------------------------------------------------
// Config file parsing
// --------------------------------------------------------------------------

namespace {

// Tracks consumed keys of one JSON object and reports the leftovers as
// unknown-key errors, each with its dotted path.
class BlockReader {
 public:
  BlockReader(const json& block, std::string path, std::vector<ConfigError>& errors)
      : block_(block), path_(std::move(path)), errors_(errors) {}

  ~BlockReader() {
    for (const auto& [key, value] : block_.items())
      if (!seen_.count(key)) error(key, "unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return block_.contains(key);
  }

  template <typename T, typename Pred>
  void read(const std::string& key, T& target, Pred valid, const std::string& why) {
    if (!has(key)) return;
    try {
      T value = block_.at(key).get<T>();
      if (!valid(value)) {
        error(key, why);
        return;
      }
      target = std::move(value);
    } catch (const json::exception&) {
      error(key, "wrong type");
    }
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    read(key, target, [](const T&) { return true; }, "");
  }

  const json* child(const std::string& key) {
    if (!has(key)) return nullptr;
    if (!block_.at(key).is_object()) {
      error(key, "must be an object");
      return nullptr;
    }
    return &block_.at(key);
  }

  void error(const std::string& key, const std::string& message) {
    errors_.push_back({path_.empty() ? key : path_ + "." + key, message});
  }

  std::string sub_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& block_;
  std::string path_;
  std::vector<ConfigError>& errors_;
  std::set<std::string> seen_;
};

const auto positive = [](auto v) { return v > 0 && std::isfinite(static_cast<double>(v)); };
const auto non_negative = [](auto v) {
  return v >= 0 && std::isfinite(static_cast<double>(v));
};
const auto at_least_one = [](int v) { return v >= 1; };

void read_warmup(const json& block, const std::string& path, WarmupConfig& warmup,
                 std::vector<ConfigError>& errors) {
  BlockReader r(block, path, errors);
  r.read<double>("learning_rate", warmup.learning_rate, positive, "must be > 0");
  r.read<int>("epochs", warmup.epochs, at_least_one, "must be >= 1");
  r.read<int>("batch_size", warmup.batch_size, at_least_one, "must be >= 1");
}

void read_self_train(const json& block, const std::string& path, SelfTrainConfig& st,
                     std::vector<ConfigError>& errors) {
  BlockReader r(block, path, errors);
  r.read<double>("threshold", st.threshold,
                 [](double v) { return v >= 0.0 && v <= 1.0; }, "must be in [0, 1]");
  r.read<int>("epochs_per_session", st.epochs_per_session, at_least_one,
              "must be >= 1");
  r.read<double>("learning_rate", st.learning_rate, non_negative, "must be >= 0");
  r.read<int>("batch_size", st.batch_size, at_least_one, "must be >= 1");
  r.read<double>("regression_trim", st.regression_trim,
                 [](double v) { return v >= 0.0 && v < 1.0; }, "must be in [0, 1)");
  if (r.has("eval_mode")) {
    const std::string mode = block.at("eval_mode").is_string()
                                 ? block.at("eval_mode").get<std::string>()
                                 : "";
    if (mode == "pre_update")
      st.eval_mode = EvalMode::pre_update;
    else if (mode == "post_update")
      st.eval_mode = EvalMode::post_update;
    else
      r.error("eval_mode", "must be 'pre_update' or 'post_update'");
  }
}

struct GeometryDefaults {
  int length = 22500;
  std::array<int, 3> folds{7500, 7500, 7500};
  int subfold_size = 1500;
  int d = 16;
  int classes = 9;
};

struct DriftDefaults {
  double mean_radius = 3.0;
  double sigma = 1.0;
  double drift_per_length = 1.0;
  double jump_scale_short = 1.2;
  double jump_scale_long = 2.5;
  double jump_growth_long = 2.0;  // successive long-gap jumps grow by this factor
  double background_prior = 0.30;
};

struct RegressionDefaults {
  int d = 8;
  double weight_scale = 1.0;
  double drift_per_length = 0.5;
  double jump_scale = 0.0;
  double noise_std = 0.1;
};

void read_geometry(const json& block, const std::string& path, GeometryDefaults& g,
                   std::vector<ConfigError>& errors) {
  BlockReader r(block, path, errors);
  r.read<int>("length", g.length, positive, "must be > 0");
  r.read<int>("subfold_size", g.subfold_size, at_least_one, "must be >= 1");
  r.read<int>("d", g.d, positive, "must be > 0");
  r.read<int>("classes", g.classes, [](int v) { return v >= 2; }, "must be >= 2");
  if (r.has("folds")) {
    const json& folds = block.at("folds");
    if (!folds.is_array() || folds.size() != 3)
      r.error("folds", "must be an array of 3 sizes");
    else
      for (int i = 0; i < 3; ++i) {
        const int v = folds.at(i).get<int>();
        if (v < 0)
          r.error("folds", "sizes must be >= 0");
        else
          g.folds[static_cast<std::size_t>(i)] = v;
      }
  }
}

void read_drift(const json& block, const std::string& path, DriftDefaults& d,
                std::vector<ConfigError>& errors) {
  BlockReader r(block, path, errors);
  r.read<double>("mean_radius", d.mean_radius, non_negative, "must be >= 0");
  r.read<double>("sigma", d.sigma, positive, "must be > 0");
  r.read<double>("drift_per_length", d.drift_per_length, non_negative, "must be >= 0");
  r.read<double>("jump_scale_short", d.jump_scale_short, non_negative, "must be >= 0");
  r.read<double>("jump_scale_long", d.jump_scale_long, non_negative, "must be >= 0");
  r.read<double>("jump_growth_long", d.jump_growth_long, positive, "must be > 0");
  r.read<double>("background_prior", d.background_prior,
                 [](double v) { return v > 0.0 && v < 1.0; }, "must be in (0, 1)");
}

void read_regression(const json& block, const std::string& path, RegressionDefaults& rg,
                     std::vector<ConfigError>& errors) {
  BlockReader r(block, path, errors);
  r.read<int>("d", rg.d, positive, "must be > 0");
  r.read<double>("weight_scale", rg.weight_scale, non_negative, "must be >= 0");
  r.read<double>("drift_per_length", rg.drift_per_length, non_negative, "must be >= 0");
  r.read<double>("jump_scale", rg.jump_scale, non_negative, "must be >= 0");
  r.read<double>("noise_std", rg.noise_std, non_negative, "must be >= 0");
}

double group_jump_scale(DriftGroup group, const DriftDefaults& d) {
  switch (group) {
    case DriftGroup::contiguous: return 0.0;
    case DriftGroup::short_gap: return d.jump_scale_short;
    case DriftGroup::long_gap: return d.jump_scale_long;
  }
  return 0.0;
}

double group_jump_growth(DriftGroup group, const DriftDefaults& d) {
  return group == DriftGroup::long_gap ? d.jump_growth_long : 1.0;
}

SequenceSpec read_sequence_spec(const json& block, const std::string& path,
                                const GeometryDefaults& g, const DriftDefaults& dd,
                                const RegressionDefaults& rg,
                                std::vector<ConfigError>& errors) {
  SequenceSpec spec;
  BlockReader r(block, path, errors);

  r.read<std::string>("id", spec.id,
                      [](const std::string& s) {
                        if (s.empty()) return false;
                        for (char c : s)
                          if (!std::isalnum(static_cast<unsigned char>(c)) &&
                              c != '-' && c != '_')
                            return false;
                        return true;
                      },
                      "must be non-empty, [A-Za-z0-9_-] only");
  if (!block.contains("id")) r.error("id", "required");

  if (r.has("kind")) {
    try {
      spec.kind = task_kind_from_string(block.at("kind").get<std::string>());
    } catch (const std::exception&) {
      r.error("kind", "must be 'classification' or 'regression'");
    }
  } else {
    r.error("kind", "required");
  }

  if (r.has("group")) {
    try {
      spec.group = drift_group_from_string(block.at("group").get<std::string>());
    } catch (const std::exception&) {
      r.error("group", "must be contiguous | short-gap | long-gap");
    }
  }

  if (r.has("folds")) {
    const json& folds = block.at("folds");
    if (!folds.is_array() || folds.size() != 3)
      r.error("folds", "must be an array of 3 sizes");
    else
      for (int i = 0; i < 3; ++i)
        spec.folds[static_cast<std::size_t>(i)] = folds.at(i).get<int>();
  } else {
    spec.folds = g.folds;
  }

  spec.subfold_size = g.subfold_size;
  r.read<int>("subfold_size", spec.subfold_size, at_least_one, "must be >= 1");

  // Defaults before per-sequence overrides.
  spec.length = g.length;
  spec.d = spec.kind == TaskKind::classification ? g.d : rg.d;
  spec.classes = g.classes;
  spec.mean_radius = dd.mean_radius;
  spec.sigma = dd.sigma;
  spec.drift_per_length = dd.drift_per_length;
  spec.jump_scale = group_jump_scale(spec.group, dd);
  spec.jump_growth = group_jump_growth(spec.group, dd);
  spec.background_prior = dd.background_prior;
  spec.weight_scale = rg.weight_scale;
  spec.reg_drift_per_length = rg.drift_per_length;
  spec.reg_jump_scale = rg.jump_scale;
  spec.noise_std = rg.noise_std;

  const json* source = r.child("source");
  if (!source) {
    if (!block.contains("source")) r.error("source", "required");
    return spec;
  }
  BlockReader sr(*source, r.sub_path("source"), errors);
  const bool has_csv = sr.has("csv");
  const json* generate = sr.child("generate");
  if (has_csv == (generate != nullptr || source->contains("generate"))) {
    sr.error("", "exactly one of 'csv' or 'generate' required");
    return spec;
  }
  if (has_csv) {
    spec.from_csv = true;
    spec.csv_path = source->at("csv").get<std::string>();
    if (!fs::exists(spec.csv_path))
      sr.error("csv", "file not found: " + spec.csv_path);
  } else if (generate) {
    BlockReader gr(*generate, sr.sub_path("generate"), errors);
    gr.read<int>("length", spec.length, positive, "must be > 0");
    gr.read<int>("d", spec.d, positive, "must be > 0");
    if (spec.kind == TaskKind::classification) {
      gr.read<int>("classes", spec.classes, [](int v) { return v >= 2; },
                   "must be >= 2");
      gr.read<double>("mean_radius", spec.mean_radius, non_negative, "must be >= 0");
      gr.read<double>("sigma", spec.sigma, positive, "must be > 0");
      gr.read<double>("drift_per_length", spec.drift_per_length, non_negative,
                      "must be >= 0");
      gr.read<double>("jump_scale", spec.jump_scale, non_negative, "must be >= 0");
      gr.read<double>("jump_growth", spec.jump_growth, positive, "must be > 0");
      gr.read<double>("background_prior", spec.background_prior,
                      [](double v) { return v > 0.0 && v < 1.0; },
                      "must be in (0, 1)");
    } else {
      gr.read<double>("weight_scale", spec.weight_scale, non_negative, "must be >= 0");
      gr.read<double>("drift_per_length", spec.reg_drift_per_length, non_negative,
                      "must be >= 0");
      gr.read<double>("jump_scale", spec.reg_jump_scale, non_negative, "must be >= 0");
      gr.read<double>("noise_std", spec.noise_std, non_negative, "must be >= 0");
    }
  }
  return spec;
}

}  // namespace

namespace {

// The readers report unknown keys from their destructors, so the parse body
// lives in its own function and the reader scopes close before the caller
// looks at the error list.
std::optional<ExperimentConfig> parse_config(const json& root,
                                             std::vector<ConfigError>& errors) {
  BatteryKind battery = BatteryKind::custom;
  if (root.contains("battery") && root.at("battery").is_string()) {
    try {
      battery = battery_kind_from_string(root.at("battery").get<std::string>());
    } catch (const std::exception&) {
      errors.push_back({"battery", "must be car-like | ccc-like | custom"});
      return std::nullopt;
    }
  } else {
    errors.push_back({"battery", "required"});
    return std::nullopt;
  }

  ExperimentConfig cfg = default_config(battery, 0);

  BlockReader r(root, "", errors);
  r.has("battery");

  int schema_version = 1;
  r.read<int>("schema_version", schema_version);
  if (schema_version != 1) r.error("schema_version", "unsupported version");
  cfg.schema_version = schema_version;

  if (r.has("seed")) {
    if (root.at("seed").is_number_unsigned() || root.at("seed").is_number_integer()) {
      const long long v = root.at("seed").get<long long>();
      if (v < 0)
        r.error("seed", "must be >= 0");
      else
        cfg.seed = static_cast<std::uint64_t>(v);
    } else {
      r.error("seed", "must be an integer");
    }
  } else {
    r.error("seed", "required (runs never default to wall-clock seeds)");
  }

  r.read<std::string>("out_dir", cfg.out_dir,
                      [](const std::string& s) { return !s.empty(); },
                      "must be non-empty");
  r.read<int>("workers", cfg.workers, at_least_one, "must be >= 1");

  if (r.has("warmup_mode")) {
    const std::string mode = root.at("warmup_mode").is_string()
                                 ? root.at("warmup_mode").get<std::string>()
                                 : "";
    if (mode == "union")
      cfg.union_warmup = true;
    else if (mode == "per-sequence")
      cfg.union_warmup = false;
    else
      r.error("warmup_mode", "must be 'union' or 'per-sequence'");
  }

  if (const json* block = r.child("warmup")) read_warmup(*block, "warmup", cfg.warmup, errors);
  if (const json* block = r.child("self_train"))
    read_self_train(*block, "self_train", cfg.self_train, errors);

  GeometryDefaults geometry;
  DriftDefaults drift;
  RegressionDefaults regression;

  const bool allow_classification_blocks = battery != BatteryKind::ccc_like;
  const bool allow_regression_block = battery != BatteryKind::car_like;

  if (r.has("geometry")) {
    if (!allow_classification_blocks)
      r.error("geometry", "not applicable to a ccc-like battery");
    else if (root.at("geometry").is_object())
      read_geometry(root.at("geometry"), "geometry", geometry, errors);
    else
      r.error("geometry", "must be an object");
  }
  if (r.has("drift")) {
    if (!allow_classification_blocks)
      r.error("drift", "not applicable to a ccc-like battery");
    else if (root.at("drift").is_object())
      read_drift(root.at("drift"), "drift", drift, errors);
    else
      r.error("drift", "must be an object");
  }
  if (r.has("regression")) {
    if (!allow_regression_block)
      r.error("regression", "not applicable to a car-like battery");
    else if (root.at("regression").is_object())
      read_regression(root.at("regression"), "regression", regression, errors);
    else
      r.error("regression", "must be an object");
  }

  if (battery == BatteryKind::custom) {
    cfg.sequences.clear();
    if (!r.has("sequences") || !root.at("sequences").is_array() ||
        root.at("sequences").empty()) {
      r.error("sequences", "custom battery requires a non-empty sequence array");
    } else {
      const json& sequences = root.at("sequences");
      for (std::size_t i = 0; i < sequences.size(); ++i) {
        const std::string path_i = "sequences[" + std::to_string(i) + "]";
        if (!sequences.at(i).is_object()) {
          errors.push_back({path_i, "must be an object"});
          continue;
        }
        cfg.sequences.push_back(read_sequence_spec(sequences.at(i), path_i, geometry,
                                                   drift, regression, errors));
      }
    }
  } else {
    if (r.has("sequences"))
      r.error("sequences", "only custom batteries take an explicit sequence list");
    // Re-materialize the preset sequences under the possibly overridden knobs.
    const std::uint64_t seed = cfg.seed;
    const WarmupConfig warmup = cfg.warmup;
    const SelfTrainConfig self_train = cfg.self_train;
    const std::string out_dir = cfg.out_dir;
    const int workers = cfg.workers;
    const bool union_warmup = cfg.union_warmup;
    cfg = default_config(battery, seed);
    cfg.warmup = warmup;
    cfg.self_train = self_train;
    cfg.out_dir = out_dir;
    cfg.workers = workers;
    cfg.union_warmup = union_warmup;
    if (battery == BatteryKind::car_like) {
      for (SequenceSpec& spec : cfg.sequences) {
        spec.length = geometry.length;
        spec.folds = geometry.folds;
        spec.subfold_size = geometry.subfold_size;
        spec.d = geometry.d;
        spec.classes = geometry.classes;
        spec.mean_radius = drift.mean_radius;
        spec.sigma = drift.sigma;
        spec.drift_per_length = drift.drift_per_length;
        spec.jump_scale = group_jump_scale(spec.group, drift);
        spec.jump_growth = group_jump_growth(spec.group, drift);
        spec.background_prior = drift.background_prior;
      }
    } else {
      for (SequenceSpec& spec : cfg.sequences) {
        spec.d = regression.d;
        spec.weight_scale = regression.weight_scale;
        spec.reg_drift_per_length = regression.drift_per_length;
        spec.reg_jump_scale = regression.jump_scale;
        spec.noise_std = regression.noise_std;
      }
    }
  }

  // Cross-field invariants on the materialized specs.
  std::set<std::string> ids;
  std::set<TaskKind> kinds;
  for (std::size_t i = 0; i < cfg.sequences.size(); ++i) {
    const SequenceSpec& spec = cfg.sequences[i];
    const std::string path_i = "sequences[" + std::to_string(i) + "]";
    if (!ids.insert(spec.id).second)
      errors.push_back({path_i + ".id", "duplicate sequence id '" + spec.id + "'"});
    kinds.insert(spec.kind);
    if (!spec.from_csv) {
      const long fold_sum = static_cast<long>(spec.folds[0]) + spec.folds[1] + spec.folds[2];
      for (int f : spec.folds)
        if (f < 0) errors.push_back({path_i + ".folds", "sizes must be >= 0"});
      if (fold_sum != spec.length)
        errors.push_back({path_i + ".folds",
                          "fold sizes sum to " + std::to_string(fold_sum) +
                              " but the sequence length is " +
                              std::to_string(spec.length)});
    }
  }
  if (kinds.size() > 1)
    errors.push_back({"sequences", "a battery must be homogeneous in task kind"});
  if (cfg.union_warmup && !cfg.sequences.empty()) {
    if (cfg.sequences.front().kind != TaskKind::classification)
      errors.push_back({"warmup_mode", "union warm-up only applies to classification"});
    for (const SequenceSpec& spec : cfg.sequences)
      if (!spec.from_csv && (spec.d != cfg.sequences.front().d ||
                             spec.classes != cfg.sequences.front().classes))
        errors.push_back(
            {"warmup_mode", "union warm-up requires a shared (d, classes) layout"});
  }

  return cfg;
}

}  // namespace

ConfigValidation validate_config_file(const std::string& path) {
  ConfigValidation result;

  std::ifstream in(path);
  if (!in) {
    result.errors.push_back({"", "cannot open config file: " + path});
    return result;
  }
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    result.errors.push_back({"", std::string("invalid JSON: ") + e.what()});
    return result;
  }
  if (!root.is_object()) {
    result.errors.push_back({"", "config root must be a JSON object"});
    return result;
  }

  std::optional<ExperimentConfig> cfg = parse_config(root, result.errors);
  if (cfg && result.errors.empty()) result.config = std::move(cfg);
  return result;
}

std::string normalized_config_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = cfg.schema_version;
  j["battery"] = to_string(cfg.battery);
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["workers"] = cfg.workers;
  j["warmup_mode"] = cfg.union_warmup ? "union" : "per-sequence";
  j["warmup"] = {{"learning_rate", cfg.warmup.learning_rate},
                 {"epochs", cfg.warmup.epochs},
                 {"batch_size", cfg.warmup.batch_size}};
  j["self_train"] = {
      {"threshold", cfg.self_train.threshold},
      {"epochs_per_session", cfg.self_train.epochs_per_session},
      {"eval_mode",
       cfg.self_train.eval_mode == EvalMode::post_update ? "post_update" : "pre_update"},
      {"learning_rate", cfg.self_train.learning_rate},
      {"batch_size", cfg.self_train.batch_size},
      {"regression_trim", cfg.self_train.regression_trim}};
  json sequences = json::array();
  for (const SequenceSpec& spec : cfg.sequences) {
    json s;
    s["id"] = spec.id;
    s["kind"] = to_string(spec.kind);
    s["group"] = to_string(spec.group);
    s["folds"] = spec.folds;
    s["subfold_size"] = spec.subfold_size;
    if (spec.from_csv) {
      s["source"] = {{"csv", spec.csv_path}};
    } else if (spec.kind == TaskKind::classification) {
      s["source"] = {{"generate",
                      {{"length", spec.length},
                       {"d", spec.d},
                       {"classes", spec.classes},
                       {"mean_radius", spec.mean_radius},
                       {"sigma", spec.sigma},
                       {"drift_per_length", spec.drift_per_length},
                       {"jump_scale", spec.jump_scale},
                       {"jump_growth", spec.jump_growth},
                       {"background_prior", spec.background_prior}}}};
    } else {
      s["source"] = {{"generate",
                      {{"length", spec.length},
                       {"d", spec.d},
                       {"weight_scale", spec.weight_scale},
                       {"drift_per_length", spec.reg_drift_per_length},
                       {"jump_scale", spec.reg_jump_scale},
                       {"noise_std", spec.noise_std}}}};
    }
    sequences.push_back(std::move(s));
  }
  j["sequences"] = std::move(sequences);
  return j.dump(2) + "\n";
}

// --------------------------------------------------------------------------
// Battery execution
// --------------------------------------------------------------------------

namespace {

Sequence materialize_sequence(const SequenceSpec& spec, std::uint64_t master_seed,
                              int index) {
  if (spec.from_csv) {
    SequenceCsvSchema schema;
    schema.kind = spec.kind;
    schema.C = spec.classes;
    schema.sequence_id = spec.id;
    schema.group = spec.group;
    Sequence seq = load_sequence_csv(spec.csv_path, schema);
    const long fold_sum =
        static_cast<long>(spec.folds[0]) + spec.folds[1] + spec.folds[2];
    if (fold_sum != seq.length())
      throw run_error("sequence " + spec.id + ": fold sizes sum to " +
                      std::to_string(fold_sum) + " but " + spec.csv_path + " has " +
                      std::to_string(seq.length()) + " rows");
    return seq;
  }

  const std::uint64_t sample_seed =
      derive_seed(derive_seed(master_seed, kGenerateStream),
                  static_cast<std::uint64_t>(index));
  if (spec.kind == TaskKind::classification) {
    ClassificationPreset preset;
    preset.d = spec.d;
    preset.C = spec.classes;
    preset.length = spec.length;
    preset.boundaries = {spec.folds[0], spec.folds[0] + spec.folds[1]};
    preset.mean_radius = spec.mean_radius;
    preset.sigma = spec.sigma;
    preset.drift_per_length = spec.drift_per_length;
    preset.jump_scale = spec.jump_scale;
    preset.jump_growth = spec.jump_growth;
    preset.background_prior = spec.background_prior;
    const DriftSchedule schedule = make_classification_schedule(
        preset, master_seed, static_cast<std::uint64_t>(index));
    return make_classification_stream(schedule, spec.length, spec.d, spec.classes,
                                      sample_seed, spec.id, spec.group);
  }
  RegressionPreset preset;
  preset.d = spec.d;
  preset.length = spec.length;
  preset.boundaries = {spec.folds[0], spec.folds[0] + spec.folds[1]};
  preset.weight_scale = spec.weight_scale;
  preset.drift_per_length = spec.reg_drift_per_length;
  preset.jump_scale = spec.reg_jump_scale;
  preset.noise_std = spec.noise_std;
  const RegressionDrift drift =
      make_regression_drift(preset, master_seed, static_cast<std::uint64_t>(index));
  return make_regression_stream(drift, preset.noise_std, spec.length, spec.d,
                                sample_seed, spec.id, spec.group);
}

PredictionLog filter_log(const PredictionLog& log, Mode mode) {
  if (mode == Mode::sup_ft || mode == Mode::upd_v_plus_t) return log;
  const FoldTag keep = mode == Mode::upd_v ? FoldTag::V : FoldTag::T;
  PredictionLog out;
  for (const PredictionRow& row : log.rows)
    if (row.fold == keep) out.rows.push_back(row);
  return out;
}

json forgetting_json(const std::vector<SessionRecord>& sessions,
                     const LearnerState& warm, const std::vector<Example>& past) {
  json per_session = json::array();
  const LearnerState* previous = &warm;
  double final_rate = 0.0;
  for (const SessionRecord& record : sessions) {
    const ForgettingReport report =
        forgetting_diagnostic(record.state_after, *previous, past);
    per_session.push_back({{"session", record.index},
                           {"selected", record.selected_count},
                           {"violation_rate", report.violation_rate}});
    previous = &record.state_after;
  }
  if (!sessions.empty())
    final_rate =
        forgetting_diagnostic(sessions.back().state_after, warm, past).violation_rate;
  json j;
  j["per_session"] = std::move(per_session);
  j["final_violation_rate"] = final_rate;
  return j;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw run_error("cannot write " + path.string());
  out << content;
  if (!out) throw run_error("failed writing " + path.string());
}

}  // namespace

RunManifest run_battery(const ExperimentConfig& base_cfg, const RunOptions& opts) {
  const auto started = std::chrono::steady_clock::now();

  ExperimentConfig cfg = base_cfg;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.workers) cfg.workers = *opts.workers;

  if (cfg.sequences.empty()) throw config_error("battery has no sequences");
  if (opts.modes.empty()) throw config_error("no modes requested");
  for (const SequenceSpec& spec : cfg.sequences) {
    const long fold_sum =
        static_cast<long>(spec.folds[0]) + spec.folds[1] + spec.folds[2];
    if (!spec.from_csv && fold_sum != spec.length)
      throw config_error("sequence " + spec.id + ": fold sizes do not sum to length");
  }
  const TaskKind kind = cfg.sequences.front().kind;
  for (const SequenceSpec& spec : cfg.sequences)
    if (spec.kind != kind)
      throw config_error("battery must be homogeneous in task kind");
  if (cfg.union_warmup && kind != TaskKind::classification)
    throw config_error("union warm-up only applies to classification batteries");

  const int n = static_cast<int>(cfg.sequences.size());
  const std::string normalized = normalized_config_json(cfg);

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  RunManifest manifest;
  manifest.battery = to_string(cfg.battery);
  manifest.config_hash = fnv1a_hex(normalized);
  manifest.seed = cfg.seed;
  for (Mode mode : opts.modes) manifest.modes.push_back(to_string(mode));
  for (const SequenceSpec& spec : cfg.sequences) {
    manifest.sequence_dirs.emplace_back(spec.id, (out / spec.id).string());
    fs::create_directories(out / spec.id);
  }

  // The manifest and the normalized config land on disk before any result.
  write_text(out / "config.json", normalized);
  {
    json mj;
    mj["schema_version"] = manifest.schema_version;
    mj["battery"] = manifest.battery;
    mj["config_hash"] = manifest.config_hash;
    mj["seed"] = manifest.seed;
    mj["modes"] = manifest.modes;
    json dirs = json::object();
    for (const auto& [id, dir] : manifest.sequence_dirs) dirs[id] = dir;
    mj["sequence_dirs"] = std::move(dirs);
    write_text(out / "manifest.json", mj.dump(2) + "\n");
  }

  // Phase 1: materialize sequences and folds.
  std::vector<FoldSplit> splits(static_cast<std::size_t>(n));
  std::vector<TruthChannel> truths(static_cast<std::size_t>(n));
  std::vector<std::string> errors;
  parallel_for(n, cfg.workers,
               [&](int i) {
                 const SequenceSpec& spec = cfg.sequences[static_cast<std::size_t>(i)];
                 Sequence seq = materialize_sequence(spec, cfg.seed, i);
                 splits[static_cast<std::size_t>(i)] = split_folds(seq, spec.folds);
                 truths[static_cast<std::size_t>(i)] =
                     truth_from_split(splits[static_cast<std::size_t>(i)]);
                 save_truth_csv(splits[static_cast<std::size_t>(i)],
                                (out / spec.id / "truth.csv").string());
               },
               errors);
  std::vector<std::string> failures;
  for (int i = 0; i < n; ++i)
    if (!errors[static_cast<std::size_t>(i)].empty())
      failures.push_back(cfg.sequences[static_cast<std::size_t>(i)].id + ": " +
                         errors[static_cast<std::size_t>(i)]);
  if (!failures.empty()) {
    std::string message = "sequence preparation failed:";
    for (const std::string& f : failures) message += "\n  " + f;
    throw run_error(message);
  }

  // Phase 2: supervised warm-up.
  std::vector<LearnerState> warm(static_cast<std::size_t>(n));
  const std::uint64_t warm_stream = derive_seed(cfg.seed, kWarmupStream);
  if (cfg.union_warmup) {
    std::vector<Example> pool;
    for (const FoldSplit& split : splits)
      pool.insert(pool.end(), split.S.begin(), split.S.end());
    if (pool.empty()) throw run_error("union warm-up with empty supervised folds");
    TrainConfig tc{cfg.warmup.learning_rate, cfg.warmup.epochs, cfg.warmup.batch_size,
                   warm_stream};
    const LearnerState base = make_classifier(splits.front().d, splits.front().C);
    const LearnerState fitted = fit(base, make_batch(pool), tc);
    save_learner(fitted, (out / "warmup.learner").string());
    for (int i = 0; i < n; ++i) warm[static_cast<std::size_t>(i)] = fitted;
  } else {
    parallel_for(n, cfg.workers,
                 [&](int i) {
                   const FoldSplit& split = splits[static_cast<std::size_t>(i)];
                   if (split.S.empty())
                     throw run_error("sequence " + split.sequence_id +
                                     ": empty supervised fold");
                   TrainConfig tc{cfg.warmup.learning_rate, cfg.warmup.epochs,
                                  cfg.warmup.batch_size,
                                  derive_seed(warm_stream, static_cast<std::uint64_t>(i))};
                   const LearnerState base =
                       split.kind == TaskKind::classification
                           ? make_classifier(split.d, split.C)
                           : make_regressor(split.d);
                   warm[static_cast<std::size_t>(i)] = fit(base, make_batch(split.S), tc);
                   save_learner(warm[static_cast<std::size_t>(i)],
                                (out / split.sequence_id / "warmup.learner").string());
                 },
                 errors);
    for (int i = 0; i < n; ++i)
      if (!errors[static_cast<std::size_t>(i)].empty())
        failures.push_back(cfg.sequences[static_cast<std::size_t>(i)].id + ": " +
                           errors[static_cast<std::size_t>(i)]);
    if (!failures.empty()) {
      std::string message = "warm-up failed:";
      for (const std::string& f : failures) message += "\n  " + f;
      throw run_error(message);
    }
  }

  // Phase 3: modes per sequence.
  struct SequenceOutcome {
    std::vector<json> per_mode;      // report + trace (+ forgetting)
    std::vector<Report> reports;     // parallel to opts.modes
  };
  std::vector<SequenceOutcome> outcomes(static_cast<std::size_t>(n));
  const std::uint64_t self_train_stream = derive_seed(cfg.seed, kSelfTrainStream);

  parallel_for(
      n, cfg.workers,
      [&](int i) {
        const SequenceSpec& spec = cfg.sequences[static_cast<std::size_t>(i)];
        const FoldSplit& split = splits[static_cast<std::size_t>(i)];
        const TruthChannel& truth = truths[static_cast<std::size_t>(i)];
        SequenceOutcome& outcome = outcomes[static_cast<std::size_t>(i)];

        SelfTrainConfig st = cfg.self_train;
        st.seed = derive_seed(self_train_stream, static_cast<std::uint64_t>(i));

        for (const Mode mode : opts.modes) {
          const ModeResult result = run_mode(warm[static_cast<std::size_t>(i)], split,
                                             mode, st, spec.subfold_size);
          const fs::path mode_dir = out / spec.id / to_string(mode);
          fs::create_directories(mode_dir);
          save_prediction_log_csv(result.log, (mode_dir / "predictions.csv").string());

          Report report = score_log(result.log, truth, split.kind, split.C, spec.id,
                                    to_string(mode));
          json j = to_json(report);
          j["trace"] = to_json(session_trace(filter_log(result.log, mode), truth,
                                             split.kind));
          if (mode != Mode::sup_ft && !split.S.empty())
            j["forgetting"] =
                forgetting_json(result.sessions, warm[static_cast<std::size_t>(i)],
                                split.S);
          outcome.per_mode.push_back(std::move(j));
          outcome.reports.push_back(std::move(report));
        }
      },
      errors);
  for (int i = 0; i < n; ++i)
    if (!errors[static_cast<std::size_t>(i)].empty())
      failures.push_back(cfg.sequences[static_cast<std::size_t>(i)].id + ": " +
                         errors[static_cast<std::size_t>(i)]);
  if (!failures.empty()) {
    std::string message = "mode execution failed:";
    for (const std::string& f : failures) message += "\n  " + f;
    throw run_error(message);
  }

  // Phase 4: aggregation.
  json reports_json;
  reports_json["schema_version"] = 1;
  reports_json["battery"] = to_string(cfg.battery);
  reports_json["kind"] = to_string(kind);
  reports_json["seed"] = cfg.seed;
  reports_json["config_hash"] = manifest.config_hash;
  reports_json["modes"] = manifest.modes;

  json results = json::object();
  std::vector<BatteryReport> batteries;
  for (std::size_t m = 0; m < opts.modes.size(); ++m) {
    std::vector<Report> mode_reports;
    json sequences = json::array();
    for (int i = 0; i < n; ++i) {
      mode_reports.push_back(outcomes[static_cast<std::size_t>(i)].reports[m]);
      sequences.push_back(outcomes[static_cast<std::size_t>(i)].per_mode[m]);
    }
    const BatteryReport battery = battery_report(mode_reports);
    json mode_json;
    mode_json["battery"] = to_json(battery);
    mode_json["sequences"] = std::move(sequences);
    results[to_string(opts.modes[m])] = std::move(mode_json);
    batteries.push_back(battery);
  }
  reports_json["results"] = std::move(results);

  // Incremental deltas against the frozen sup-ft baseline.
  json deltas = json::array();
  const auto sup_it = std::find(opts.modes.begin(), opts.modes.end(), Mode::sup_ft);
  if (sup_it != opts.modes.end()) {
    const std::size_t sup_index =
        static_cast<std::size_t>(sup_it - opts.modes.begin());
    const std::vector<ReportMetric> delta_metrics =
        kind == TaskKind::classification
            ? std::vector<ReportMetric>{ReportMetric::accuracy, ReportMetric::f1_macro,
                                        ReportMetric::f1_weighted}
            : std::vector<ReportMetric>{ReportMetric::mae};
    for (std::size_t m = 0; m < opts.modes.size(); ++m) {
      if (opts.modes[m] == Mode::sup_ft) continue;
      for (FoldTag fold : {FoldTag::V, FoldTag::T}) {
        // Battery-level deltas on the mean-over-sequences aggregate.
        const FoldScores* updated = nullptr;
        const FoldScores* baseline = nullptr;
        for (const FoldScores& f : batteries[m].mean_over_sequences)
          if (f.fold == fold) updated = &f;
        for (const FoldScores& f : batteries[sup_index].mean_over_sequences)
          if (f.fold == fold) baseline = &f;
        if (!updated || !baseline) continue;
        for (const ReportMetric metric : delta_metrics) {
          json dj = to_json(incremental_delta(*updated, *baseline, metric));
          dj["mode"] = to_string(opts.modes[m]);
          dj["scope"] = "battery";
          deltas.push_back(std::move(dj));
        }
      }
      for (int i = 0; i < n; ++i) {
        const Report& updated = outcomes[static_cast<std::size_t>(i)].reports[m];
        const Report& baseline =
            outcomes[static_cast<std::size_t>(i)].reports[sup_index];
        for (FoldTag fold : {FoldTag::V, FoldTag::T}) {
          const FoldScores* u = updated.fold(fold);
          const FoldScores* b = baseline.fold(fold);
          if (!u || !b) continue;
          for (const ReportMetric metric : delta_metrics) {
            json dj = to_json(incremental_delta(*u, *b, metric));
            dj["mode"] = to_string(opts.modes[m]);
            dj["scope"] = "sequence";
            dj["sequence_id"] = cfg.sequences[static_cast<std::size_t>(i)].id;
            deltas.push_back(std::move(dj));
          }
        }
      }
    }
  }
  reports_json["deltas"] = std::move(deltas);

  write_text(out / "reports.json", reports_json.dump(2) + "\n");
  write_text(out / "summary_table.csv", summary_table_csv(reports_json));

  if (opts.plots) {
    try {
      render_plots(reports_json, out.string());
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: plot rendering failed: %s\n", e.what());
    }
  }

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  char timing[64];
  std::snprintf(timing, sizeof(timing), "wall_seconds %.3f\n", seconds);
  write_text(out / "run.log", timing);

  return manifest;
}

std::vector<std::string> emit_plots(const std::string& reports_json_path,
                                    const std::string& out_dir) {
  std::ifstream in(reports_json_path);
  if (!in) throw run_error("cannot open reports file: " + reports_json_path);
  json reports;
  try {
    in >> reports;
  } catch (const json::exception& e) {
    throw run_error(std::string("invalid reports JSON: ") + e.what());
  }
  return render_plots(reports, out_dir);
}

}  // namespace cssl
