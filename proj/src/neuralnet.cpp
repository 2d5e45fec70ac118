#include "slda/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "slda/random.hpp"

namespace slda {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

// Column-wise softmax with the max logit subtracted.
void softmax_columns(Eigen::MatrixXd& z) {
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    auto col = z.col(j);
    const double m = col.maxCoeff();
    col = (col.array() - m).exp().matrix();
    col /= col.sum();
  }
}

// Activations of every layer, index 0 being the input.
std::vector<Eigen::MatrixXd> forward_all(const Mlp& model, const Eigen::MatrixXd& inputs) {
  if (std::size_t(inputs.rows()) != model.input_size())
    throw DimensionError("network expects " + std::to_string(model.input_size()) +
                         " inputs, got " + std::to_string(inputs.rows()));
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(model.layer_count() + 1);
  acts.push_back(inputs);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    Eigen::MatrixXd z = model.weights(l) * acts.back();
    z.colwise() += model.bias(l);
    if (l + 1 == model.layer_count()) {
      softmax_columns(z);
      acts.push_back(std::move(z));
    } else {
      acts.push_back(sigmoid(z));
    }
  }
  return acts;
}

double batch_loss(const Eigen::MatrixXd& probs, const std::vector<std::size_t>& labels) {
  double sum = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j)
    sum -= std::log(std::clamp(probs(Eigen::Index(labels[j]), Eigen::Index(j)), kProbabilityFloor, 1.0));
  return sum / double(labels.size());
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw DimensionError("network needs input and output layers");
  for (std::size_t s : sizes_)
    if (s == 0) throw DimensionError("layer sizes must be positive");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(Eigen::Index(total));
}

Mlp Mlp::initialized(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
  Mlp model(std::move(layer_sizes));
  Rng rng(seed);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const double r = 1.0 / std::sqrt(double(model.sizes_[l]));
    auto w = model.weights(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-r, r);
    auto b = model.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-r, r);
  }
  return model;
}

Eigen::Map<const RowMajorMatrix> Mlp::weights(std::size_t layer) const {
  return {params_.data() + offsets_[layer], Eigen::Index(sizes_[layer + 1]), Eigen::Index(sizes_[layer])};
}

Eigen::Map<RowMajorMatrix> Mlp::weights(std::size_t layer) {
  return {params_.data() + offsets_[layer], Eigen::Index(sizes_[layer + 1]), Eigen::Index(sizes_[layer])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t layer) const {
  return {params_.data() + offsets_[layer] + sizes_[layer + 1] * sizes_[layer],
          Eigen::Index(sizes_[layer + 1])};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t layer) {
  return {params_.data() + offsets_[layer] + sizes_[layer + 1] * sizes_[layer],
          Eigen::Index(sizes_[layer + 1])};
}

Eigen::VectorXd Mlp::forward(std::span<const double> input) const {
  const Eigen::Map<const Eigen::MatrixXd> x(input.data(), Eigen::Index(input.size()), 1);
  return forward_batch(x).col(0);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& inputs) const {
  return std::move(forward_all(*this, inputs).back());
}

double cross_entropy(std::span<const double> probabilities, std::span<const double> target) {
  if (probabilities.size() != target.size())
    throw DimensionError("probability and target lengths differ");
  double loss = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k)
    if (target[k] != 0.0)
      loss -= target[k] * std::log(std::clamp(probabilities[k], kProbabilityFloor, 1.0));
  return loss;
}

Batch Batch::from_rows(std::span<const double> data, std::size_t rows, std::size_t dim,
                       std::vector<std::size_t> labels) {
  if (data.size() != rows * dim || labels.size() != rows)
    throw DimensionError("batch data has inconsistent dimensions");
  Batch b;
  b.inputs = Eigen::Map<const RowMajorMatrix>(data.data(), Eigen::Index(rows), Eigen::Index(dim))
                 .transpose();
  b.labels = std::move(labels);
  return b;
}

double mean_loss(const Mlp& model, const Batch& batch) {
  if (batch.empty()) throw DimensionError("empty batch");
  return batch_loss(model.forward_batch(batch.inputs), batch.labels);
}

double loss_and_gradient(const Mlp& model, const Batch& batch, Eigen::VectorXd& gradient) {
  if (batch.empty()) throw DimensionError("empty batch");
  const auto acts = forward_all(model, batch.inputs);
  const Eigen::MatrixXd& probs = acts.back();
  const double loss = batch_loss(probs, batch.labels);
  const double inv_n = 1.0 / double(batch.size());

  Eigen::MatrixXd delta = probs;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (batch.labels[j] >= model.output_size()) throw LabelError("label exceeds class count");
    delta(Eigen::Index(batch.labels[j]), Eigen::Index(j)) -= 1.0;
  }
  delta *= inv_n;

  Mlp grad_view(model.layer_sizes());
  for (std::size_t l = model.layer_count(); l-- > 0;) {
    grad_view.weights(l).noalias() = delta * acts[l].transpose();
    grad_view.bias(l) = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = model.weights(l).transpose() * delta;
      delta = (back.array() * acts[l].array() * (1.0 - acts[l].array())).matrix();
    }
  }
  gradient = std::move(grad_view.parameters());
  return loss;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Prediction predict(const Mlp& model, const Standardizer& standardizer, std::span<const double> raw) {
  if (raw.size() != model.input_size())
    throw DimensionError("network expects " + std::to_string(model.input_size()) +
                         " features, got " + std::to_string(raw.size()));
  std::vector<double> x(raw.begin(), raw.end());
  standardizer.apply(x);
  const Eigen::VectorXd p = model.forward(x);
  Prediction out;
  out.probabilities.assign(p.data(), p.data() + p.size());
  out.label = argmax(out.probabilities);
  return out;
}

}  // namespace slda
