#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "slda/neuralnet.hpp"

namespace slda {

namespace {

constexpr double kLambdaMax = 1e100;

}  // namespace

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::MaxEpochs:
      return "max-epochs";
    case StopReason::Patience:
      return "patience";
    case StopReason::GradientConverged:
      return "gradient-converged";
  }
  return "unknown";
}

StopReason stop_reason_from_string(std::string_view name) {
  if (name == "max-epochs") return StopReason::MaxEpochs;
  if (name == "patience") return StopReason::Patience;
  if (name == "gradient-converged") return StopReason::GradientConverged;
  throw FormatError("unknown stop reason '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (!(sigma > 0.0)) throw ConfigError("SCG sigma must be positive");
  if (!(lambda_init > 0.0)) throw ConfigError("SCG lambda must be positive");
  if (ratios.train <= 0.0 || ratios.validation < 0.0 || ratios.test < 0.0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");
}

TrainResult scg_train(Mlp model, const Batch& train, const Batch& validation,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw DimensionError("empty training batch");
  const auto started = std::chrono::steady_clock::now();

  TrainReport report;
  report.best_validation_loss = std::numeric_limits<double>::infinity();
  auto finish = [&](StopReason reason) {
    report.stop_reason = reason;
    report.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  auto monitor = [&](const Mlp& m, double train_loss) {
    return validation.empty() ? train_loss : mean_loss(m, validation);
  };

  Eigen::VectorXd& w = model.parameters();
  const Eigen::Index n_params = w.size();
  Eigen::VectorXd grad, grad_probe, grad_trial;
  double loss = loss_and_gradient(model, train, grad);
  if (!std::isfinite(loss)) throw TrainingError("initial training loss is not finite", report);

  Eigen::VectorXd r = -grad;
  Eigen::VectorXd p = r;
  Eigen::VectorXd best = w;
  double lambda = cfg.lambda_init;
  double lambda_bar = 0.0;
  double delta = 0.0;
  bool success = true;
  int stale = 0;

  Mlp probe = model;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (grad.norm() < cfg.gradient_tolerance) {
      finish(StopReason::GradientConverged);
      model.parameters() = best;
      return {std::move(model), std::move(report)};
    }

    double p_norm2 = p.squaredNorm();
    if (success) {
      // Curvature along p from a forward difference of gradients.
      const double step = cfg.sigma / std::sqrt(p_norm2);
      probe.parameters() = w + step * p;
      loss_and_gradient(probe, train, grad_probe);
      delta = p.dot(grad_probe - grad) / step;
    }
    delta += (lambda - lambda_bar) * p_norm2;
    if (delta <= 0.0) {
      // Force a positive-definite local model.
      lambda_bar = 2.0 * (lambda - delta / p_norm2);
      delta = -delta + lambda * p_norm2;
      lambda = lambda_bar;
    }

    double mu = p.dot(r);
    if (mu <= 0.0) {
      // Not a descent direction: restart from steepest descent.
      p = r;
      p_norm2 = p.squaredNorm();
      mu = p_norm2;
      success = true;
      const double step = cfg.sigma / std::sqrt(p_norm2);
      probe.parameters() = w + step * p;
      loss_and_gradient(probe, train, grad_probe);
      delta = p.dot(grad_probe - grad) / step + lambda * p_norm2;
      if (delta <= 0.0) delta = lambda * p_norm2 + std::abs(delta);
    }
    const double alpha = mu / delta;

    probe.parameters() = w + alpha * p;
    const double trial_loss = loss_and_gradient(probe, train, grad_trial);
    if (!std::isfinite(trial_loss)) {
      finish(StopReason::MaxEpochs);
      throw TrainingError("training loss diverged at epoch " + std::to_string(epoch), report);
    }
    const double comparison = 2.0 * delta * (loss - trial_loss) / (mu * mu);

    const bool accepted = trial_loss < loss;
    if (accepted) {
      w = probe.parameters();
      loss = trial_loss;
      grad.swap(grad_trial);
      const Eigen::VectorXd r_old = r;
      r = -grad;
      lambda_bar = 0.0;
      success = true;
      if (epoch % n_params == 0) {
        p = r;
      } else {
        const double beta = (r.squaredNorm() - r.dot(r_old)) / mu;
        p = r + beta * p;
      }
      if (comparison >= 0.75) lambda *= 0.25;
    } else {
      lambda_bar = lambda;
      success = false;
    }
    if (comparison < 0.25) lambda = std::min(lambda + delta * (1.0 - comparison) / p_norm2, kLambdaMax);

    const double monitored = monitor(model, loss);
    if (!std::isfinite(monitored)) {
      finish(StopReason::MaxEpochs);
      throw TrainingError("validation loss is not finite at epoch " + std::to_string(epoch), report);
    }
    report.train_loss.push_back(loss);
    report.validation_loss.push_back(monitored);
    report.accepted.push_back(accepted ? 1 : 0);
    if (monitored < report.best_validation_loss) {
      report.best_validation_loss = monitored;
      report.best_epoch = epoch;
      best = w;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) {
      finish(StopReason::Patience);
      model.parameters() = best;
      return {std::move(model), std::move(report)};
    }
  }
  finish(StopReason::MaxEpochs);
  model.parameters() = best;
  return {std::move(model), std::move(report)};
}

}  // namespace slda
