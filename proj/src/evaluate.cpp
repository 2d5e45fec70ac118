#include "slda/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "slda/error.hpp"
#include "slda/random.hpp"

namespace slda {

std::vector<std::size_t> SplitPlan::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == which) out.push_back(i);
  return out;
}

SplitPlan split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  TrainConfig probe;
  probe.ratios = ratios;
  probe.validate();

  std::vector<std::vector<std::size_t>> by_category(dataset.manifest.category_count());
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto cat = dataset.records[i].category;
    if (cat >= by_category.size()) throw FormatError("record category index out of range");
    by_category[cat].push_back(i);
  }

  SplitPlan plan;
  plan.seed = seed;
  plan.assignment.assign(dataset.records.size(), Split::Train);
  for (std::size_t cat = 0; cat < by_category.size(); ++cat) {
    auto& members = by_category[cat];
    const std::size_t n = members.size();
    // The small epsilon keeps e.g. 0.15 * 100 from flooring to 14.
    const auto n_val = std::size_t(std::floor(ratios.validation * double(n) + 1e-9));
    const auto n_test = std::size_t(std::floor(ratios.test * double(n) + 1e-9));
    if (n_val < 1 || n_test < 1 || n_val + n_test >= n)
      throw ConfigError("category " + std::to_string(cat) + " has " + std::to_string(n) +
                        " samples, too few for a train/validation/test split");
    Rng rng(derive_seed(seed, {std::uint64_t(cat)}));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < n_val; ++k) plan.assignment[members[k]] = Split::Validation;
    for (std::size_t k = n_val; k < n_val + n_test; ++k) plan.assignment[members[k]] = Split::Test;
  }
  return plan;
}

// --- confusion matrices ----------------------------------------------------

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_labels)
    : labels(std::move(class_labels)), counts(labels.size() * labels.size(), 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes() || predicted >= classes()) throw LabelError("confusion matrix index out of range");
  ++counts[truth * classes() + predicted];
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < classes(); ++k) t += at(k, k);
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < classes(); ++k) t += at(truth, k);
  return t;
}

std::size_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < classes(); ++k) t += at(k, predicted);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  return t ? double(trace()) / double(t) : 0.0;
}

double ConfusionMatrix::precision(std::size_t k) const {
  const auto c = column_sum(k);
  return c ? double(at(k, k)) / double(c) : 0.0;
}

double ConfusionMatrix::recall(std::size_t k) const {
  const auto r = row_sum(k);
  return r ? double(at(k, k)) / double(r) : 0.0;
}

bool EvaluationReport::all_pass(double band) const {
  return std::all_of(stages.begin(), stages.end(), [band](const StageResult& s) { return s.passes(band); });
}

// --- training --------------------------------------------------------------

namespace {

struct StageData {
  std::vector<double> rows;
  std::vector<std::size_t> labels;
  std::size_t dim = 0;
};

StageData stage_data(const Dataset& dataset, const std::vector<std::size_t>& indices, std::size_t stage,
                     const StageSpec& spec) {
  const int experiment = dataset.manifest.experiment;
  StageData d;
  d.dim = spec.input_size();
  for (std::size_t i : indices) {
    const auto& rec = dataset.records[i];
    const auto target = stage_target(experiment, stage, rec.label);
    if (!target) continue;
    const auto upstream = stage_upstream(experiment, stage, rec.label);
    const auto x = augment(rec.features, spec.upstream, upstream);
    d.rows.insert(d.rows.end(), x.begin(), x.end());
    d.labels.push_back(*target);
  }
  return d;
}

Batch standardized_batch(StageData data, const Standardizer& st) {
  for (std::size_t r = 0; r < data.labels.size(); ++r)
    st.apply(std::span<double>(data.rows.data() + r * data.dim, data.dim));
  const std::size_t rows = data.labels.size();
  return Batch::from_rows(data.rows, rows, data.dim, std::move(data.labels));
}

}  // namespace

ModelBundle train_all(const Dataset& dataset, const SplitPlan& plan, const TrainConfig& cfg,
                      const TrainProgress& progress) {
  cfg.validate();
  if (plan.assignment.size() != dataset.records.size())
    throw DimensionError("split plan does not match the dataset");
  const int experiment = dataset.manifest.experiment;
  const auto specs = stage_specs(experiment);
  const auto train_idx = plan.indices(Split::Train);
  const auto val_idx = plan.indices(Split::Validation);

  ModelBundle bundle;
  bundle.experiment = experiment;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& spec = specs[s];
    StageData train = stage_data(dataset, train_idx, s, spec);
    StageData val = stage_data(dataset, val_idx, s, spec);
    if (train.labels.size() < 2) {
      bundle.failures.push_back(spec.name + ": fewer than 2 training samples");
      continue;
    }
    TrainedNetwork net;
    net.experiment = experiment;
    net.spec = spec;
    net.standardizer = Standardizer::fit(train.rows, train.labels.size(), train.dim, kFeatureLength);
    const Batch train_batch = standardized_batch(std::move(train), net.standardizer);
    const Batch val_batch = standardized_batch(std::move(val), net.standardizer);

    std::vector<std::size_t> sizes{spec.input_size()};
    sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
    sizes.push_back(spec.class_labels.size());
    TrainConfig stage_cfg = cfg;
    stage_cfg.seed = derive_seed(cfg.seed, {std::uint64_t(experiment), std::uint64_t(s)});
    try {
      auto result = scg_train(Mlp::initialized(sizes, stage_cfg.seed), train_batch, val_batch, stage_cfg);
      net.model = std::move(result.model);
      net.report = std::move(result.report);
    } catch (const TrainingError& e) {
      bundle.failures.push_back(spec.name + ": " + e.what());
      continue;
    }
    if (progress) progress(spec.name, net.report);
    bundle.networks.push_back(std::move(net));
  }
  return bundle;
}

// --- evaluation ------------------------------------------------------------

namespace {

std::vector<std::string> dominant_labels() { return {"geometry1", "geometry2", "balanced"}; }

}  // namespace

EvaluationReport evaluate_cascade(const Dataset& dataset, const SplitPlan& plan, const ModelBundle& models) {
  const int experiment = dataset.manifest.experiment;
  if (models.experiment != experiment) throw DimensionError("model bundle and dataset experiments differ");
  models.validate();
  if (plan.assignment.size() != dataset.records.size())
    throw DimensionError("split plan does not match the dataset");
  const auto specs = stage_specs(experiment);
  const auto test_idx = plan.indices(Split::Test);

  EvaluationReport report;
  report.experiment = experiment;
  report.test_samples = test_idx.size();
  std::vector<ConfusionMatrix> matrices;
  std::vector<std::size_t> oracle_hits(specs.size(), 0), oracle_total(specs.size(), 0);
  for (std::size_t s = 0; s < specs.size(); ++s)
    matrices.emplace_back(experiment == 2 && s >= 2 ? dominant_labels() : specs[s].class_labels);

  std::size_t mixed_hits = 0, mixed_total = 0;
  double elapsed_ms = 0.0;
  for (std::size_t i : test_idx) {
    const auto& rec = dataset.records[i];
    const auto t0 = std::chrono::steady_clock::now();
    if (experiment == 1) {
      const auto pred = predict_exp1(rec.features, models);
      elapsed_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      for (std::size_t s = 0; s < 3; ++s) matrices[s].add(*stage_target(1, s, rec.label), pred.stages[s].label);
    } else {
      const auto pred = predict_exp2(rec.features, models);
      elapsed_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const auto& truth = std::get<Exp2Label>(rec.label);
      matrices[0].add(std::size_t(truth.pair), pred.stages[0].label);
      matrices[1].add(*stage_target(2, 1, rec.label), pred.stages[1].label);
      matrices[truth.total() % 2 == 0 ? 2 : 3].add(std::size_t(truth.dominant()), std::size_t(pred.dominant));
      if (truth.mixed()) {
        ++mixed_total;
        mixed_hits += pred.stages[0].label == std::size_t(truth.pair);
      }
    }
    // Same stages, upstream one-hots taken from the ground truth.
    for (std::size_t s = 0; s < specs.size(); ++s) {
      const auto target = stage_target(experiment, s, rec.label);
      if (!target) continue;
      const auto x = augment(rec.features, specs[s].upstream, stage_upstream(experiment, s, rec.label));
      const auto& net = models.networks[s];
      oracle_hits[s] += predict(net.model, net.standardizer, x).label == *target;
      ++oracle_total[s];
    }
  }

  for (std::size_t s = 0; s < specs.size(); ++s) {
    StageResult r;
    r.name = specs[s].name;
    r.hidden = specs[s].hidden;
    r.confusion = std::move(matrices[s]);
    r.accuracy = r.confusion.accuracy();
    r.oracle_accuracy = oracle_total[s] ? double(oracle_hits[s]) / double(oracle_total[s]) : 0.0;
    r.acceptance_accuracy = r.accuracy;
    r.target_accuracy = specs[s].target_accuracy;
    const auto& rep = models.networks[s].report;
    r.epochs = rep.epochs();
    r.stop_reason = std::string(to_string(rep.stop_reason));
    r.train_loss = rep.train_loss;
    r.validation_loss = rep.validation_loss;
    report.stages.push_back(std::move(r));
  }
  if (experiment == 2) {
    report.pair_accuracy_mixed = mixed_total ? double(mixed_hits) / double(mixed_total) : 0.0;
    report.stages[0].acceptance_accuracy = *report.pair_accuracy_mixed;
  }
  report.mean_latency_ms = test_idx.empty() ? 0.0 : elapsed_ms / double(test_idx.size());
  return report;
}

// --- export ----------------------------------------------------------------

std::string summary_json(const EvaluationReport& report) {
  nlohmann::json j;
  j["experiment"] = report.experiment;
  j["test_samples"] = report.test_samples;
  j["mean_latency_ms"] = report.mean_latency_ms;
  j["acceptance_band"] = kAcceptanceBand;
  if (report.pair_accuracy_mixed) j["pair_accuracy_mixed"] = *report.pair_accuracy_mixed;
  j["networks"] = nlohmann::json::array();
  for (const auto& s : report.stages) {
    j["networks"].push_back({
        {"name", s.name},
        {"accuracy", s.accuracy},
        {"oracle_upstream_accuracy", s.oracle_accuracy},
        {"acceptance_accuracy", s.acceptance_accuracy},
        {"reference_accuracy", s.target_accuracy},
        {"pass", s.passes()},
        {"hidden_layers", s.hidden.size()},
        {"neurons", s.hidden},
        {"epochs", s.epochs},
        {"stop_reason", s.stop_reason},
        {"test_samples", s.confusion.total()},
    });
  }
  return j.dump(2);
}

std::string summary_table(const std::vector<EvaluationReport>& reports) {
  std::ostringstream out;
  out << std::left << std::setw(5) << "exp" << std::setw(16) << "network" << std::setw(12) << "layers"
      << std::right << std::setw(10) << "accuracy" << std::setw(10) << "oracle" << std::setw(11) << "reference"
      << std::setw(8) << "status" << '\n';
  for (const auto& rep : reports) {
    for (const auto& s : rep.stages) {
      std::string layers;
      for (std::size_t k = 0; k < s.hidden.size(); ++k) layers += (k ? ";" : "") + std::to_string(s.hidden[k]);
      out << std::left << std::setw(5) << rep.experiment << std::setw(16) << s.name << std::setw(12) << layers
          << std::right << std::fixed << std::setprecision(2) << std::setw(9) << 100.0 * s.acceptance_accuracy
          << '%' << std::setw(9) << 100.0 * s.oracle_accuracy << '%' << std::setw(10) << 100.0 * s.target_accuracy
          << '%' << std::setw(8) << (s.passes() ? "ok" : "LOW") << '\n';
    }
    if (rep.pair_accuracy_mixed)
      out << "     pair accuracy over all test samples: " << std::fixed << std::setprecision(2)
          << 100.0 * rep.stages[0].accuracy << "% (mixed samples: " << 100.0 * *rep.pair_accuracy_mixed << "%)\n";
  }
  if (reports.empty()) out << "(no networks evaluated)\n";
  return out.str();
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m) {
  auto out = open_for_write(path);
  out << "true\\predicted";
  for (const auto& l : m.labels) out << ',' << l;
  out << '\n';
  for (std::size_t t = 0; t < m.classes(); ++t) {
    out << m.labels[t];
    for (std::size_t p = 0; p < m.classes(); ++p) out << ',' << m.at(t, p);
    out << '\n';
  }
}

void write_loss_csv(const std::filesystem::path& path, const StageResult& s) {
  auto out = open_for_write(path);
  out << "epoch,train_cross_entropy,validation_cross_entropy\n";
  out.precision(17);
  for (std::size_t e = 0; e < s.train_loss.size(); ++e)
    out << e + 1 << ',' << s.train_loss[e] << ',' << s.validation_loss[e] << '\n';
}

}  // namespace

void export_report(const std::vector<EvaluationReport>& reports, const std::filesystem::path& dir,
                   const std::vector<std::pair<std::string, CameraFrame>>& samples, int sample_experiment) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& rep : reports) {
    const std::string prefix = "exp" + std::to_string(rep.experiment) + "_";
    for (const auto& s : rep.stages) {
      write_confusion_csv(dir / (prefix + s.name + "_confusion.csv"), s.confusion);
      write_loss_csv(dir / (prefix + s.name + "_loss.csv"), s);
    }
    open_for_write(dir / (prefix + "summary.json")) << summary_json(rep) << '\n';
    open_for_write(dir / (prefix + "summary.txt")) << summary_table({rep});
  }
  if (reports.empty()) open_for_write(dir / "summary.txt") << summary_table({});
  for (const auto& [name, frame] : samples)
    write_pgm(dir / ("exp" + std::to_string(sample_experiment) + "_" + name + "_frame.pgm"), frame);
}

}  // namespace slda
