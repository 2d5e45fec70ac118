#include <doctest.h>

#include <cmath>
#include <limits>

#include "slda/error.hpp"
#include "slda/neuralnet.hpp"
#include "slda/random.hpp"

using namespace slda;

namespace {

Batch random_batch(std::uint64_t seed, std::size_t dim, std::size_t n, std::size_t classes) {
  Rng rng(seed);
  Batch b;
  b.inputs.resize(Eigen::Index(dim), Eigen::Index(n));
  for (Eigen::Index j = 0; j < b.inputs.cols(); ++j)
    for (Eigen::Index i = 0; i < b.inputs.rows(); ++i) b.inputs(i, j) = rng.normal();
  for (std::size_t j = 0; j < n; ++j) b.labels.push_back(rng.uniform_below(classes));
  return b;
}

}  // namespace

TEST_CASE("zero weights give a uniform output") {
  for (std::size_t k : {2, 3, 4, 9}) {
    Mlp net({26, 5, k});
    std::vector<double> x(26, 3.0);
    const auto p = net.forward(x);
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(1.0 / double(k)).epsilon(1e-15));
  }
}

TEST_CASE("softmax ignores a common shift and stays finite for large logits") {
  Mlp net({2, 3});
  net.weights(0).setZero();
  net.bias(0) << 0.3, -1.2, 2.0;
  std::vector<double> x = {0.0, 0.0};
  const auto p = net.forward(x);
  net.bias(0).array() += 50.0;
  const auto q = net.forward(x);
  for (int i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12));

  net.bias(0) << 1000.0, -1000.0, 0.0;
  const auto big = net.forward(x);
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big.sum() == doctest::Approx(1.0));
}

TEST_CASE("cross entropy") {
  const std::vector<double> onehot = {0.0, 1.0, 0.0};
  CHECK(cross_entropy(std::vector<double>{0.0, 1.0, 0.0}, onehot) == 0.0);
  CHECK(cross_entropy(std::vector<double>{0.25, 0.5, 0.25}, onehot) == doctest::Approx(std::log(2.0)));
  const double floor_loss = cross_entropy(std::vector<double>{1.0, 0.0, 0.0}, onehot);
  CHECK(floor_loss == doctest::Approx(-std::log(1e-15)));
  CHECK(std::isfinite(floor_loss));
}

TEST_CASE("backpropagation matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto net = Mlp::initialized({26, 5, 3}, seed);
    const auto batch = random_batch(1000 + seed, 26, 8, 3);
    Eigen::VectorXd grad;
    loss_and_gradient(net, batch, grad);
    REQUIRE(grad.size() == Eigen::Index(net.parameter_count()));
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      Mlp plus = net, minus = net;
      plus.parameters()[i] += h;
      minus.parameters()[i] -= h;
      const double fd = (mean_loss(plus, batch) - mean_loss(minus, batch)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst <= 1e-5);
  }
  // Deeper network as well.
  auto deep = Mlp::initialized({10, 7, 4, 5}, 3);
  const auto batch = random_batch(3, 10, 6, 5);
  Eigen::VectorXd grad;
  const double loss = loss_and_gradient(deep, batch, grad);
  CHECK(loss == doctest::Approx(mean_loss(deep, batch)).epsilon(1e-14));
  for (Eigen::Index i = 0; i < grad.size(); i += 3) {
    Mlp plus = deep, minus = deep;
    plus.parameters()[i] += 1e-6;
    minus.parameters()[i] -= 1e-6;
    const double fd = (mean_loss(plus, batch) - mean_loss(minus, batch)) / 2e-6;
    CHECK(std::abs(fd - grad[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("mean loss and gradient are invariant to duplicating the batch") {
  auto net = Mlp::initialized({4, 3, 2}, 8);
  const auto b = random_batch(8, 4, 5, 2);
  Batch twice;
  twice.inputs.resize(4, 10);
  twice.inputs << b.inputs, b.inputs;
  twice.labels = b.labels;
  twice.labels.insert(twice.labels.end(), b.labels.begin(), b.labels.end());
  Eigen::VectorXd g1, g2;
  const double l1 = loss_and_gradient(net, b, g1);
  const double l2 = loss_and_gradient(net, twice, g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-14));
  CHECK((g1 - g2).norm() <= 1e-14 * std::max(1.0, g1.norm()));
}

TEST_CASE("forward_batch agrees with forward") {
  auto net = Mlp::initialized({6, 4, 3}, 2);
  const auto b = random_batch(2, 6, 7, 3);
  const auto all = net.forward_batch(b.inputs);
  for (Eigen::Index j = 0; j < b.inputs.cols(); ++j) {
    Eigen::VectorXd col = b.inputs.col(j);
    const auto p = net.forward(std::span<const double>(col.data(), std::size_t(col.size())));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(all(i, j) == doctest::Approx(p[i]).epsilon(1e-15));
  }
  CHECK_THROWS_AS(net.forward(std::vector<double>(5, 0.0)), DimensionError);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.1, 0.2, 0.7}) == 2);
}

TEST_CASE("parameter layout and initialization") {
  Mlp net({3, 2, 4});
  CHECK(net.parameter_count() == 3 * 2 + 2 + 2 * 4 + 4);
  net.parameters().setLinSpaced(Eigen::Index(net.parameter_count()), 0.0, double(net.parameter_count() - 1));
  CHECK(net.weights(0)(0, 1) == 1.0);
  CHECK(net.weights(0)(1, 0) == 3.0);
  CHECK(net.bias(0)[0] == 6.0);
  CHECK(net.weights(1)(0, 0) == 8.0);
  CHECK(net.bias(1)[3] == 19.0);

  const auto a = Mlp::initialized({26, 20, 5}, 42);
  const auto b = Mlp::initialized({26, 20, 5}, 42);
  const auto c = Mlp::initialized({26, 20, 5}, 43);
  CHECK(a == b);
  CHECK(!(a == c));
  CHECK(a.weights(0).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(26.0));
  CHECK(a.weights(1).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(20.0));
  CHECK_THROWS(Mlp({5}));
}

TEST_CASE("predict standardizes before the forward pass") {
  Mlp net({2, 2});
  net.weights(0) << 1.0, 0.0, -1.0, 0.0;
  const Standardizer s({10.0, 0.0}, {2.0, 1.0});
  const auto hi = predict(net, s, std::vector<double>{14.0, 0.0});
  CHECK(hi.label == 0);
  const auto lo = predict(net, s, std::vector<double>{6.0, 0.0});
  CHECK(lo.label == 1);
  CHECK(hi.probabilities[0] == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))));
}
