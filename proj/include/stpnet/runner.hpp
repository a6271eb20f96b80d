#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpnet/experiments.hpp"
#include "stpnet/isl.hpp"
#include "stpnet/tsne.hpp"

namespace stpnet::exp {

inline constexpr const char* kArtifactVersion = "1.0.0";

enum class ExperimentKind { Calibrate, SampleTarget, Train, Generate, Classify, SweepStp, PatternComplete, Compare };

const char* to_string(ExperimentKind kind);
/// Accepts the config names ("sample-target", "sweep-stp", ...).
std::optional<ExperimentKind> experiment_kind_from_string(const std::string& name);

struct DatasetSpec {
  enum class Source { None, Bars, Mnist, File };
  Source source = Source::None;
  // bars
  std::size_t side = 10;
  data::BarsMode bars_mode = data::BarsMode::Hard;
  std::size_t per_class = 100;
  // mnist
  std::filesystem::path images;
  std::filesystem::path labels;
  std::vector<int> classes;                     ///< kept classes, relabeled 0..k-1; empty keeps all
  std::map<int, std::size_t> class_counts;      ///< per original class, drawn without replacement
  // file (text container)
  std::filesystem::path file;
  std::size_t test_count = 0;  ///< held out after a seeded shuffle
  std::uint64_t seed = 1;
};

struct MachineSpec {
  std::optional<std::filesystem::path> path;
  std::size_t random_units = 0;  ///< > 0: random machine with U(-range, range) parameters
  double weight_range = 0.6;
  double bias_range = 0.6;
  std::uint64_t seed = 1;
};

/// Two STP parameters vary over a grid; the third stays at its base value.
struct SweepSpec {
  std::string x_param = "tau_rec";
  std::vector<double> x_values;
  std::string y_param = "u0";
  std::vector<double> y_values;
  lif::StpParams base{1.0, 0.0, 0.0};
  std::string metric = "kl";  ///< "kl" (target machine) or "isl" (dataset)
};

struct CompletionSpec {
  int from_class = 1;     ///< relabeled class index whose exemplar is clamped
  int towards_class = 0;  ///< class the exemplar half should resemble
  data::Half half = data::Half::Lower;
};

struct TsneSpec {
  std::size_t points = 300;  ///< consecutive valid samples taken
  std::size_t stride = 1;    ///< keep every stride-th of them
  eval::TsneConfig config;
};

struct RunConfig {
  ExperimentKind kind = ExperimentKind::SampleTarget;
  DatasetSpec dataset;
  MachineSpec machine;
  std::optional<sampling::RbmLayout> layout;
  sampling::TrainingSchedule training;
  std::uint64_t training_seed = 1;
  SamplerSpec sampler;
  std::size_t samples = 1000;  ///< valid samples per run
  std::size_t mode_window = 10;
  eval::IslConfig isl;
  std::vector<std::size_t> isl_checkpoints;  ///< empty: a log-spaced default
  std::optional<TsneSpec> tsne;
  bool write_traces = false;
  bool kl_visible_only = false;  ///< marginal over visible units instead of the joint
  SweepSpec sweep;
  CompletionSpec completion;
  lif::CalibrationOptions calibration;
  std::optional<std::filesystem::path> calibration_file;
  std::uint64_t calibration_seed = 1;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output = "runs/out";
  /// The parsed document with defaults left implicit; hashed for the manifest.
  nlohmann::json document;

  /// Cross-field checks and path existence. Throws ConfigError naming the field.
  void validate() const;
};

/// Parses a configuration document. Relative paths resolve against `base_dir`.
/// Unknown keys are rejected so typos surface as field errors.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Reads JSON that may contain // and /* */ comments.
RunConfig load_run_config(const std::filesystem::path& path);

/// SHA-256 (hex) of the canonical serialization: object keys sorted, no
/// whitespace. The "output" key is excluded so reruns elsewhere share a hash.
std::string config_hash(const nlohmann::json& doc);

struct SeedRecord {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<std::string> files;  ///< relative to the output directory
  double wall_seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string artifact_version = kArtifactVersion;
  std::string experiment;
  std::vector<std::string> shared_files;
  std::vector<SeedRecord> seeds;
  double wall_seconds = 0.0;

  bool ok() const;
  nlohmann::json to_json() const;
};

/// Executes the experiment for every seed (concurrently, up to `workers`),
/// writes per-seed outputs under config.output/seed-<n>/ plus manifest.json.
/// A failing seed is recorded in the manifest; other seeds still run.
RunManifest run(const RunConfig& config, std::size_t workers = 1);

}  // namespace stpnet::exp
