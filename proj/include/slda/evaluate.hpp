#pragma once

// Splitting, training every stage of an experiment, and scoring the
// cascades on the held-out test split.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slda/cascade.hpp"

namespace slda {

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

struct SplitPlan {
  std::vector<Split> assignment;  // one entry per dataset record
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices(Split which) const;
};

/// Stratified split: within every category the records are shuffled with a
/// category-specific seed, floor(ratio * n) go to validation and test, and
/// the remainder to training. Throws ConfigError when a category is too
/// small for every split to receive at least one record.
SplitPlan split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

/// Accuracy bands used when comparing against the reference accuracies.
inline constexpr double kAcceptanceBand = 0.05;

struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::size_t> counts;  // [true][predicted], row-major

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_labels);

  std::size_t classes() const { return labels.size(); }
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes() + predicted]; }
  void add(std::size_t truth, std::size_t predicted);
  std::size_t total() const;
  std::size_t trace() const;
  std::size_t row_sum(std::size_t truth) const;
  std::size_t column_sum(std::size_t predicted) const;
  /// trace / total; 0 for an empty matrix.
  double accuracy() const;
  double precision(std::size_t k) const;
  double recall(std::size_t k) const;
};

struct StageResult {
  std::string name;
  std::vector<std::size_t> hidden;
  ConfusionMatrix confusion;  // end-to-end: upstream stages use predictions
  double accuracy = 0.0;
  double oracle_accuracy = 0.0;  // upstream stages fed the ground truth
  /// Metric compared with the reference: accuracy, except for the
  /// experiment-2 pair stage which uses mixed samples only.
  double acceptance_accuracy = 0.0;
  double target_accuracy = 0.0;
  std::size_t epochs = 0;
  std::string stop_reason;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;

  bool passes(double band = kAcceptanceBand) const {
    return acceptance_accuracy >= target_accuracy - band - 1e-12;
  }
};

struct EvaluationReport {
  int experiment = 1;
  std::size_t test_samples = 0;
  std::vector<StageResult> stages;
  std::optional<double> pair_accuracy_mixed;  // experiment 2
  double mean_latency_ms = 0.0;               // per-sample cascade prediction

  bool all_pass(double band = kAcceptanceBand) const;
};

using TrainProgress = std::function<void(const std::string& stage, const TrainReport& report)>;

/// Trains every stage of `dataset.manifest.experiment` on the training
/// split (validation split for early stopping) with ground-truth upstream
/// one-hots. Stage seeds derive from cfg.seed. A stage whose training
/// fails is recorded in ModelBundle::failures and the remaining stages are
/// still trained.
ModelBundle train_all(const Dataset& dataset, const SplitPlan& plan, const TrainConfig& cfg,
                      const TrainProgress& progress = {});

/// Scores the cascade on the test split. Dominant-geometry matrices group
/// samples by their true parity and use the 3-label set
/// {geometry1, geometry2, balanced}, since a mispredicted count can route an
/// odd sample through the even network.
EvaluationReport evaluate_cascade(const Dataset& dataset, const SplitPlan& plan, const ModelBundle& models);

/// Writes exp{N}_{stage}_confusion.csv, exp{N}_{stage}_loss.csv,
/// exp{N}_summary.json and exp{N}_summary.txt for every report, plus each
/// named sample frame as exp{N}_{name}_frame.pgm. Throws FormatError when
/// the directory cannot be written.
void export_report(const std::vector<EvaluationReport>& reports, const std::filesystem::path& dir,
                   const std::vector<std::pair<std::string, CameraFrame>>& samples = {},
                   int sample_experiment = 1);

/// Text table comparing every stage against its reference accuracy.
std::string summary_table(const std::vector<EvaluationReport>& reports);

/// JSON summary of one report (the content of exp{N}_summary.json).
std::string summary_json(const EvaluationReport& report);

}  // namespace slda
