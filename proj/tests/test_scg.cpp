#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "slda/error.hpp"
#include "slda/neuralnet.hpp"
#include "slda/random.hpp"

using namespace slda;

namespace {

Batch blobs(std::uint64_t seed, std::size_t per_class) {
  const double centres[3][2] = {{-4.0, 0.0}, {4.0, 0.0}, {0.0, 6.0}};
  Rng rng(seed);
  Batch b;
  b.inputs.resize(2, Eigen::Index(3 * per_class));
  Eigen::Index j = 0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < per_class; ++i, ++j) {
      b.inputs(0, j) = centres[k][0] + 0.7 * rng.normal();
      b.inputs(1, j) = centres[k][1] + 0.7 * rng.normal();
      b.labels.push_back(k);
    }
  return b;
}

Batch xor_batch() {
  Batch b;
  b.inputs.resize(2, 4);
  b.inputs << 0, 0, 1, 1,  //
      0, 1, 0, 1;
  b.labels = {0, 1, 1, 0};
  return b;
}

// Multinomial logistic regression loss written out directly for the oracle.
double softmax_regression_loss(const Eigen::MatrixXd& W, const Eigen::VectorXd& bias, const Batch& b) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < b.inputs.cols(); ++j) {
    Eigen::VectorXd z = W * b.inputs.col(j) + bias;
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    total += lse - z[Eigen::Index(b.labels[std::size_t(j)])];
  }
  return total / double(b.inputs.cols());
}

// Brute-force oracle: plain fixed-step gradient descent on the convex problem.
double gradient_descent_oracle(const Batch& b, int iterations) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(3, 2);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(3);
  const double rate = 0.1;
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd gW = Eigen::MatrixXd::Zero(3, 2);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(3);
    for (Eigen::Index j = 0; j < b.inputs.cols(); ++j) {
      Eigen::VectorXd z = W * b.inputs.col(j) + bias;
      Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp();
      p /= p.sum();
      p[Eigen::Index(b.labels[std::size_t(j)])] -= 1.0;
      gW += p * b.inputs.col(j).transpose();
      gb += p;
    }
    const double n = double(b.inputs.cols());
    W -= rate * gW / n;
    bias -= rate * gb / n;
  }
  return softmax_regression_loss(W, bias, b);
}

double accuracy(const Mlp& m, const Batch& b) {
  const auto probs = m.forward_batch(b.inputs);
  std::size_t hits = 0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    Eigen::VectorXd col = probs.col(j);
    hits += argmax(std::span<const double>(col.data(), std::size_t(col.size()))) == b.labels[std::size_t(j)];
  }
  return double(hits) / double(b.size());
}

}  // namespace

TEST_CASE("separable blobs: SCG reaches low cross-entropy within 200 epochs") {
  const auto train = blobs(1, 40);
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  const auto result = scg_train(Mlp({2, 3}), train, Batch{}, cfg);
  const double oracle = gradient_descent_oracle(train, 20000);
  CHECK(oracle < 0.05);

  const auto W = result.model.weights(0);
  const Eigen::VectorXd bias = result.model.bias(0);
  const double direct = softmax_regression_loss(W, bias, train);
  CHECK(direct == doctest::Approx(mean_loss(result.model, train)).epsilon(1e-10));
  CHECK(direct < 0.05);
  CHECK(result.report.epochs() <= 200);
  CHECK(accuracy(result.model, train) == 1.0);

  // Held-out blobs from the same distribution are classified too.
  CHECK(accuracy(result.model, blobs(2, 40)) >= 0.98);
}

TEST_CASE("XOR with a hidden layer") {
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrainConfig cfg;
    cfg.max_epochs = 1000;
    cfg.patience = 1000;
    const auto result = scg_train(Mlp::initialized({2, 5, 2}, seed), xor_batch(), Batch{}, cfg);
    solved += accuracy(result.model, xor_batch()) == 1.0 && mean_loss(result.model, xor_batch()) < 0.1;
  }
  CHECK(solved >= 8);
}

TEST_CASE("patience 0 stops after one epoch") {
  TrainConfig cfg;
  cfg.patience = 0;
  const auto train = blobs(3, 10);
  const auto result = scg_train(Mlp::initialized({2, 4, 3}, 1), train, blobs(4, 5), cfg);
  CHECK(result.report.epochs() == 1);
  CHECK(result.report.stop_reason == StopReason::Patience);
}

TEST_CASE("training loss never increases and the returned model is the best-validation one") {
  const auto train = blobs(5, 30);
  const auto val = blobs(6, 10);
  TrainConfig cfg;
  cfg.max_epochs = 300;
  cfg.patience = 15;
  const auto result = scg_train(Mlp::initialized({2, 6, 3}, 9), train, val, cfg);
  const auto& rep = result.report;
  REQUIRE(rep.epochs() >= 1);
  CHECK(rep.validation_loss.size() == rep.epochs());
  CHECK(rep.accepted.size() == rep.epochs());
  for (std::size_t i = 1; i < rep.epochs(); ++i) {
    CHECK(rep.train_loss[i] <= rep.train_loss[i - 1]);
    if (!rep.accepted[i]) CHECK(rep.train_loss[i] == rep.train_loss[i - 1]);
  }
  const auto min_it = std::min_element(rep.validation_loss.begin(), rep.validation_loss.end());
  CHECK(rep.best_validation_loss == *min_it);
  CHECK(rep.best_epoch == int(min_it - rep.validation_loss.begin()) + 1);
  CHECK(mean_loss(result.model, val) == doctest::Approx(rep.best_validation_loss).epsilon(1e-12));
  if (rep.stop_reason == StopReason::Patience) CHECK(int(rep.epochs()) - rep.best_epoch == cfg.patience);
}

TEST_CASE("training is deterministic") {
  const auto train = blobs(7, 20);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  const auto a = scg_train(Mlp::initialized({2, 5, 3}, 4), train, blobs(8, 5), cfg);
  const auto b = scg_train(Mlp::initialized({2, 5, 3}, 4), train, blobs(8, 5), cfg);
  CHECK(a.model == b.model);
  CHECK(a.report.train_loss == b.report.train_loss);
}

TEST_CASE("gradient convergence and configuration errors") {
  // All-zero inputs with balanced labels: the zero model is already optimal.
  Batch flat;
  flat.inputs = Eigen::MatrixXd::Zero(2, 4);
  flat.labels = {0, 1, 0, 1};
  const auto result = scg_train(Mlp({2, 2}), flat, Batch{}, TrainConfig{});
  CHECK(result.report.stop_reason == StopReason::GradientConverged);
  CHECK(result.report.epochs() == 0);

  TrainConfig bad;
  bad.max_epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.ratios = {0.5, 0.3, 0.3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(scg_train(Mlp({2, 2}), Batch{}, Batch{}, TrainConfig{}), DimensionError);

  Batch nan_batch = xor_batch();
  nan_batch.inputs(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(scg_train(Mlp::initialized({2, 3, 2}, 1), nan_batch, Batch{}, TrainConfig{}), TrainingError);

  CHECK(to_string(StopReason::Patience) == "patience");
  CHECK(stop_reason_from_string("max-epochs") == StopReason::MaxEpochs);
  CHECK_THROWS_AS(stop_reason_from_string("bogus"), FormatError);
}
