#pragma once

// Feed-forward classifier: logistic-sigmoid hidden layers, softmax output,
// mean cross-entropy loss, trained full-batch by scaled conjugate gradient.

#include <Eigen/Dense>

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "slda/error.hpp"
#include "slda/features.hpp"

namespace slda {

inline constexpr double kProbabilityFloor = 1e-15;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Network parameters in a single flat vector. Layer l occupies a row-major
/// (out x in) weight block followed by its out-element bias.
class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters. Needs at least input and output sizes, all > 0.
  explicit Mlp(std::vector<std::size_t> layer_sizes);
  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Mlp initialized(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  std::size_t parameter_count() const { return std::size_t(params_.size()); }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::Map<const RowMajorMatrix> weights(std::size_t layer) const;
  Eigen::Map<RowMajorMatrix> weights(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  /// Class probabilities for one input. Throws DimensionError.
  Eigen::VectorXd forward(std::span<const double> input) const;
  /// Column-per-sample batch: inputs is input_size x n, result K x n.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.sizes_ == b.sizes_ && a.params_ == b.params_;
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's weight block
  Eigen::VectorXd params_;
};

/// -sum_k t_k ln p_k with p clamped to [1e-15, 1].
double cross_entropy(std::span<const double> probabilities, std::span<const double> target);

/// Inputs stored one column per sample plus integer class labels.
struct Batch {
  Eigen::MatrixXd inputs;  // input_size x n
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  /// Builds a batch from row-major `rows` x `dim` data.
  static Batch from_rows(std::span<const double> data, std::size_t rows, std::size_t dim,
                         std::vector<std::size_t> labels);
};

/// Mean cross-entropy over the batch.
double mean_loss(const Mlp& model, const Batch& batch);

/// Mean cross-entropy and its exact gradient (backpropagation, output delta
/// p - t). `gradient` is resized to parameter_count(). Batch must be non-empty.
double loss_and_gradient(const Mlp& model, const Batch& batch, Eigen::VectorXd& gradient);

/// Index of the largest probability; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct TrainConfig {
  int max_epochs = 1000;
  SplitRatios ratios;
  /// Consecutive non-improving validation checks tolerated before stopping.
  int patience = 20;
  double sigma = 5e-5;
  double lambda_init = 5e-7;
  double gradient_tolerance = 1e-8;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
};

enum class StopReason { MaxEpochs, Patience, GradientConverged };
std::string_view to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view name);

struct TrainReport {
  std::vector<double> train_loss;       // after each epoch
  std::vector<double> validation_loss;  // monitored loss after each epoch
  std::vector<std::uint8_t> accepted;   // 1 when the epoch's SCG step was taken
  StopReason stop_reason = StopReason::MaxEpochs;
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_validation_loss = 0.0;
  double duration_s = 0.0;

  std::size_t epochs() const { return train_loss.size(); }
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, TrainReport report)
      : Error(what), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

struct TrainResult {
  Mlp model;
  TrainReport report;
};

/// Full-batch scaled conjugate gradient (Moller 1993). Curvature along the
/// search direction comes from a forward difference of gradients; the
/// Levenberg scale lambda is raised when the comparison ratio is below 0.25
/// and lowered above 0.75, and steps that do not lower the training loss are
/// rejected. The direction restarts to steepest descent every
/// parameter_count() epochs. Stops at max_epochs, after `patience`
/// consecutive non-improving validation losses, or when the gradient norm
/// drops below gradient_tolerance, and returns the best-validation
/// parameters. With an empty validation batch the training loss is
/// monitored instead. Throws TrainingError on a non-finite loss.
TrainResult scg_train(Mlp model, const Batch& train, const Batch& validation,
                      const TrainConfig& cfg);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

/// Standardizes a copy of `raw` and runs the network.
Prediction predict(const Mlp& model, const Standardizer& standardizer, std::span<const double> raw);

}  // namespace slda
