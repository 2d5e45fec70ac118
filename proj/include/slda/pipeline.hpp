#pragma once

// Run configuration and the generate -> train -> evaluate pipeline shared by
// the command-line tool, the Python bindings and the acceptance suite.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "slda/cascade.hpp"
#include "slda/evaluate.hpp"

namespace slda {

struct RunConfig {
  OpticalConfig optics;
  int grid_rows = kDefaultGridRows;
  int grid_cols = kDefaultGridCols;
  int experiment = 1;
  std::uint64_t master_seed = 20210611;
  int samples_per_category = kDefaultSamplesPerCategory;
  TrainConfig train;
  int threads = 1;
  bool keep_frames = false;
  bool strict = true;
  std::filesystem::path out_dir = "slda_run";
  std::optional<std::filesystem::path> dataset_path;
  std::optional<std::filesystem::path> model_dir;

  std::filesystem::path dataset_file() const;
  std::filesystem::path models() const;
  std::filesystem::path reports() const;

  /// Throws ConfigError.
  void validate() const;
};

/// Fully resolved configuration as JSON (defaults filled in).
std::string config_to_json(const RunConfig& cfg);
/// Overrides fields of `base` with those present in `text`; unknown keys are
/// rejected with ConfigError.
RunConfig config_from_json(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Writes run_config.json into `dir`.
void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir);

/// Seeds of the pipeline phases, all derived from the master seed.
std::uint64_t dataset_seed(std::uint64_t master);
std::uint64_t split_seed(std::uint64_t master);
std::uint64_t training_seed(std::uint64_t master);

DatasetManifest make_manifest(const RunConfig& cfg);

using Log = std::function<void(const std::string&)>;

/// Generates and writes the dataset of cfg.experiment.
Dataset run_generate(const RunConfig& cfg, const Log& log = {});
/// Reads the dataset, trains every stage, writes the model files and
/// exp{N}_train_report.json.
ModelBundle run_train(const RunConfig& cfg, const Log& log = {});
/// Reads dataset and models, evaluates on the test split and writes the
/// report files (including sample frames).
EvaluationReport run_evaluate(const RunConfig& cfg, const Log& log = {});

/// Parses an exp{N}_summary.json back into a report (no confusion cells or
/// loss curves).
EvaluationReport parse_summary_json(std::string_view text);

/// Scene description: {"grid_rows", "grid_cols", "seed", "particles": [{"kind",
/// "size", "row", "col"}]}. Particles without row/col are placed randomly
/// with the given seed. Throws FormatError.
SceneSpec parse_scene_json(std::string_view text);

}  // namespace slda
