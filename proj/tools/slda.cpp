// slda: generate datasets, train the cascades, evaluate and predict.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "slda/error.hpp"
#include "slda/io.hpp"
#include "slda/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  int experiment = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool keep_frames = false;
  std::optional<bool> strict;
  std::optional<std::string> dataset;
  std::optional<std::string> models;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--experiment", f.experiment, "Experiment id (1 or 2)")->check(CLI::IsMember({1, 2}));
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--samples-per-category", f.samples, "Samples per category (default 100)");
  cmd->add_option("--threads", f.threads, "Worker threads for dataset generation");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--dataset", f.dataset, "Dataset file (default OUT/expN_dataset.slda)");
  cmd->add_option("--models", f.models, "Model directory (default OUT/models)");
  cmd->add_flag("--keep-frames", f.keep_frames, "Store raw 400x400 frames in the dataset");
  cmd->add_flag("--strict,!--no-strict", f.strict, "Exit non-zero when a network misses its accuracy band");
}

slda::RunConfig resolve(const CommonFlags& f) {
  slda::RunConfig cfg;
  if (!f.config_path.empty()) cfg = slda::load_config(f.config_path, cfg);
  if (f.experiment) cfg.experiment = f.experiment;
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.samples) cfg.samples_per_category = *f.samples;
  if (f.threads) cfg.threads = *f.threads;
  if (f.out) cfg.out_dir = *f.out;
  if (f.dataset) cfg.dataset_path = *f.dataset;
  if (f.models) cfg.model_dir = *f.models;
  if (f.keep_frames) cfg.keep_frames = true;
  if (f.strict) cfg.strict = *f.strict;
  cfg.validate();
  return cfg;
}

void log_line(const std::string& s) { std::cout << s << (s.ends_with('\n') ? "" : "\n") << std::flush; }

void print_probabilities(const std::string& stage, const std::vector<double>& p) {
  std::cout << "  " << std::left << std::setw(14) << stage << '[';
  for (std::size_t k = 0; k < p.size(); ++k) std::cout << (k ? ", " : "") << std::fixed << std::setprecision(4) << p[k];
  std::cout << "]\n";
}

int cmd_predict(const slda::RunConfig& cfg, const std::string& scene_path, const std::string& frame_path,
                std::optional<double> power) {
  using clock = std::chrono::steady_clock;
  const slda::ModelBundle models = slda::load_bundle(cfg.models(), cfg.experiment);

  slda::CameraFrame frame;
  if (!scene_path.empty()) {
    std::ifstream in(scene_path);
    if (!in) throw slda::FormatError("cannot open scene file " + scene_path);
    std::stringstream ss;
    ss << in.rdbuf();
    frame = slda::simulate_frame(slda::parse_scene_json(ss.str()), cfg.optics);
  } else {
    if (!power) throw slda::ConfigError("--power is required with --frame");
    frame = slda::read_pgm(frame_path);
    if (frame.size != slda::kFrameSize)
      throw slda::DimensionError("frame must be 400x400, got " + std::to_string(frame.size) + "x" +
                                 std::to_string(frame.size));
    frame.power_reading = *power;
  }

  // Warm-up call so the reported time is steady-state.
  const auto v1 = slda::to_storage_precision(slda::build_v1(frame));
  if (cfg.experiment == 1) {
    slda::predict_exp1(v1, models);
    const auto t0 = clock::now();
    const auto p = slda::predict_exp1(frame, models);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    std::cout << "geometry=" << slda::to_string(p.geometry) << " size=" << p.size_mirrors << " count=" << p.count
              << '\n';
    print_probabilities("geometry", p.stages[0].probabilities);
    print_probabilities("size", p.stages[1].probabilities);
    print_probabilities("count", p.stages[2].probabilities);
    std::cout << "inference_ms=" << std::setprecision(3) << ms << '\n';
  } else {
    slda::predict_exp2(v1, models);
    const auto t0 = clock::now();
    const auto p = slda::predict_exp2(frame, models);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    std::cout << "pair=" << slda::to_string(p.pair) << " count=" << p.total << " dominant=" << slda::to_string(p.dominant)
              << '\n';
    print_probabilities("pair", p.stages[0].probabilities);
    print_probabilities("count", p.stages[1].probabilities);
    print_probabilities(p.even_network ? "dominant_even" : "dominant_odd", p.stages[2].probabilities);
    std::cout << "inference_ms=" << std::setprecision(3) << ms << '\n';
  }
  return 0;
}

int cmd_report(const slda::RunConfig& cfg) {
  std::vector<slda::EvaluationReport> reports;
  for (int exp : {1, 2}) {
    const auto path = cfg.reports() / ("exp" + std::to_string(exp) + "_summary.json");
    if (!std::filesystem::exists(path)) continue;
    const auto bytes = slda::read_file(path);
    reports.push_back(slda::parse_summary_json(std::string(bytes.begin(), bytes.end())));
  }
  const std::string table = slda::summary_table(reports);
  std::cout << table;
  std::filesystem::create_directories(cfg.reports());
  std::ofstream(cfg.reports() / "comparison.txt") << table;
  bool ok = true;
  for (const auto& r : reports) ok = ok && r.all_pass();
  return (!ok && cfg.strict) ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated laser diffraction analysis of particle mixtures"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, pred_f, rep_f;
  auto* gen = app.add_subcommand("generate", "Simulate the diffraction dataset of an experiment");
  add_common(gen, gen_f);
  auto* train = app.add_subcommand("train", "Train every network of an experiment");
  add_common(train, train_f);
  auto* eval = app.add_subcommand("evaluate", "Score the cascade on the held-out test split");
  add_common(eval, eval_f);
  auto* pred = app.add_subcommand("predict", "Classify one scene or camera frame");
  add_common(pred, pred_f);
  std::string scene_path, frame_path;
  std::optional<double> power;
  auto* scene_opt = pred->add_option("--scene", scene_path, "Scene JSON file")->check(CLI::ExistingFile);
  auto* frame_opt = pred->add_option("--frame", frame_path, "400x400 binary PGM frame")->check(CLI::ExistingFile);
  pred->add_option("--power", power, "Power reading accompanying --frame");
  scene_opt->excludes(frame_opt);
  auto* rep = app.add_subcommand("report", "Print the accuracy comparison of evaluated experiments");
  add_common(rep, rep_f);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      slda::run_generate(resolve(gen_f), log_line);
      return 0;
    }
    if (train->parsed()) {
      slda::run_train(resolve(train_f), log_line);
      return 0;
    }
    if (eval->parsed()) {
      const auto cfg = resolve(eval_f);
      const auto report = slda::run_evaluate(cfg, log_line);
      if (!report.all_pass()) {
        std::cerr << (cfg.strict ? "error" : "warning") << ": a network is below its accuracy band\n";
        return cfg.strict ? 2 : 0;
      }
      return 0;
    }
    if (pred->parsed()) {
      if (scene_path.empty() && frame_path.empty()) throw slda::ConfigError("predict needs --scene or --frame");
      return cmd_predict(resolve(pred_f), scene_path, frame_path, power);
    }
    if (rep->parsed()) return cmd_report(resolve(rep_f));
  } catch (const slda::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
