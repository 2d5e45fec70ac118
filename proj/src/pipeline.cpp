#include "slda/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "slda/error.hpp"
#include "slda/io.hpp"
#include "slda/random.hpp"

namespace slda {

namespace {

using nlohmann::json;

std::string exp_prefix(int experiment) { return "exp" + std::to_string(experiment) + "_"; }

void emit(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

template <typename T>
void maybe(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
}

}  // namespace

std::filesystem::path RunConfig::dataset_file() const {
  return dataset_path ? *dataset_path : out_dir / (exp_prefix(experiment) + "dataset.slda");
}

std::filesystem::path RunConfig::models() const { return model_dir ? *model_dir : out_dir / "models"; }

std::filesystem::path RunConfig::reports() const { return out_dir / "reports"; }

void RunConfig::validate() const {
  optics.validate_for_grid(grid_rows, grid_cols, kExp1Sizes.back());
  check_experiment(experiment);
  if (samples_per_category < 1) throw ConfigError("samples per category must be >= 1");
  if (threads < 1) throw ConfigError("thread count must be >= 1");
  train.validate();
  const auto ds = std::filesystem::weakly_canonical(dataset_file());
  const auto md = std::filesystem::weakly_canonical(models());
  const auto rd = std::filesystem::weakly_canonical(reports());
  if (ds == md || ds == rd || md == rd) throw ConfigError("dataset, model and report paths must be distinct");
}

std::string config_to_json(const RunConfig& cfg) {
  json j = {
      {"optics",
       {{"wavelength_m", cfg.optics.wavelength_m},
        {"mirror_pitch_m", cfg.optics.mirror_pitch_m},
        {"pad_size", cfg.optics.pad_size},
        {"crop_size", cfg.optics.crop_size},
        {"bit_depth", cfg.optics.bit_depth},
        {"noise_sigma", cfg.optics.noise_sigma},
        {"crop_half_angle_deg", cfg.optics.crop_half_angle_deg()}}},
      {"grid_rows", cfg.grid_rows},
      {"grid_cols", cfg.grid_cols},
      {"experiment", cfg.experiment},
      {"master_seed", cfg.master_seed},
      {"samples_per_category", cfg.samples_per_category},
      {"train",
       {{"max_epochs", cfg.train.max_epochs},
        {"patience", cfg.train.patience},
        {"scg_sigma", cfg.train.sigma},
        {"scg_lambda", cfg.train.lambda_init},
        {"gradient_tolerance", cfg.train.gradient_tolerance},
        {"train_ratio", cfg.train.ratios.train},
        {"validation_ratio", cfg.train.ratios.validation},
        {"test_ratio", cfg.train.ratios.test}}},
      {"threads", cfg.threads},
      {"keep_frames", cfg.keep_frames},
      {"strict", cfg.strict},
      {"out_dir", cfg.out_dir.string()},
      {"dataset_path", cfg.dataset_file().string()},
      {"model_dir", cfg.models().string()},
  };
  return j.dump(2);
}

RunConfig config_from_json(std::string_view text, RunConfig base) {
  static const std::set<std::string> known{"optics",  "grid_rows",   "grid_cols",  "experiment", "master_seed",
                                           "samples_per_category", "train", "threads", "keep_frames",
                                           "strict",  "out_dir",     "dataset_path", "model_dir"};
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    if (j.contains("optics")) {
      const auto& o = j.at("optics");
      // crop_half_angle_deg is derived; the echoed config carries it for reference.
      reject_unknown(o, "optics",
                     {"wavelength_m", "mirror_pitch_m", "pad_size", "crop_size", "bit_depth", "noise_sigma",
                      "crop_half_angle_deg"});
      maybe(o, "wavelength_m", base.optics.wavelength_m);
      maybe(o, "mirror_pitch_m", base.optics.mirror_pitch_m);
      maybe(o, "pad_size", base.optics.pad_size);
      maybe(o, "crop_size", base.optics.crop_size);
      maybe(o, "bit_depth", base.optics.bit_depth);
      maybe(o, "noise_sigma", base.optics.noise_sigma);
    }
    maybe(j, "grid_rows", base.grid_rows);
    maybe(j, "grid_cols", base.grid_cols);
    maybe(j, "experiment", base.experiment);
    maybe(j, "master_seed", base.master_seed);
    maybe(j, "samples_per_category", base.samples_per_category);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, "train",
                     {"max_epochs", "patience", "scg_sigma", "scg_lambda", "gradient_tolerance", "train_ratio",
                      "validation_ratio", "test_ratio"});
      maybe(t, "max_epochs", base.train.max_epochs);
      maybe(t, "patience", base.train.patience);
      maybe(t, "scg_sigma", base.train.sigma);
      maybe(t, "scg_lambda", base.train.lambda_init);
      maybe(t, "gradient_tolerance", base.train.gradient_tolerance);
      maybe(t, "train_ratio", base.train.ratios.train);
      maybe(t, "validation_ratio", base.train.ratios.validation);
      maybe(t, "test_ratio", base.train.ratios.test);
    }
    maybe(j, "threads", base.threads);
    maybe(j, "keep_frames", base.keep_frames);
    maybe(j, "strict", base.strict);
    if (j.contains("out_dir")) base.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("dataset_path")) base.dataset_path = j.at("dataset_path").get<std::string>();
    if (j.contains("model_dir")) base.model_dir = j.at("model_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "run_config.json");
  if (!out) throw FormatError("cannot write " + (dir / "run_config.json").string());
  out << config_to_json(cfg) << '\n';
}

std::uint64_t dataset_seed(std::uint64_t master) { return derive_seed(master, {1}); }
std::uint64_t split_seed(std::uint64_t master) { return derive_seed(master, {2}); }
std::uint64_t training_seed(std::uint64_t master) { return derive_seed(master, {3}); }

DatasetManifest make_manifest(const RunConfig& cfg) {
  DatasetManifest m;
  m.experiment = cfg.experiment;
  m.samples_per_category = cfg.samples_per_category;
  m.global_seed = dataset_seed(cfg.master_seed);
  m.grid_rows = cfg.grid_rows;
  m.grid_cols = cfg.grid_cols;
  m.optics_hash = cfg.optics.hash();
  return m;
}

Dataset run_generate(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto manifest = make_manifest(cfg);
  emit(log, "experiment " + std::to_string(cfg.experiment) + ": " + std::to_string(manifest.category_count()) +
                " categories x " + std::to_string(cfg.samples_per_category) + " samples");
  GenerateOptions opts;
  opts.keep_frames = cfg.keep_frames;
  opts.threads = cfg.threads;
  const auto t0 = std::chrono::steady_clock::now();
  Dataset ds = generate_dataset(manifest, cfg.optics, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_dataset(cfg.dataset_file(), ds);
  write_config_echo(cfg, cfg.dataset_file().parent_path().empty() ? "." : cfg.dataset_file().parent_path());
  std::ostringstream msg;
  msg << "wrote " << ds.records.size() << " records to " << cfg.dataset_file().string() << " in " << secs << " s";
  emit(log, msg.str());
  return ds;
}

ModelBundle run_train(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const Dataset ds = read_dataset(cfg.dataset_file());
  if (ds.manifest.experiment != cfg.experiment)
    throw ConfigError("dataset " + cfg.dataset_file().string() + " is for experiment " +
                      std::to_string(ds.manifest.experiment));
  const SplitPlan plan = split(ds, cfg.train.ratios, split_seed(cfg.master_seed));
  TrainConfig tc = cfg.train;
  tc.seed = training_seed(cfg.master_seed);

  json report = json::array();
  ModelBundle bundle = train_all(ds, plan, tc, [&](const std::string& stage, const TrainReport& r) {
    std::ostringstream msg;
    msg << "trained " << stage << ": " << r.epochs() << " epochs, stop=" << to_string(r.stop_reason)
        << ", best validation cross-entropy " << r.best_validation_loss << " (" << r.duration_s << " s)";
    emit(log, msg.str());
    report.push_back({{"stage", stage},
                      {"epochs", r.epochs()},
                      {"stop_reason", to_string(r.stop_reason)},
                      {"best_epoch", r.best_epoch},
                      {"best_validation_loss", r.best_validation_loss},
                      {"duration_s", r.duration_s}});
  });
  save_bundle(cfg.models(), bundle);
  write_config_echo(cfg, cfg.models());
  std::ofstream(cfg.models() / (exp_prefix(cfg.experiment) + "train_report.json")) << report.dump(2) << '\n';
  if (bundle.partial()) {
    std::string all;
    for (const auto& f : bundle.failures) all += "\n  " + f;
    throw Error("training failed for some stages (partial bundle written):" + all);
  }
  return bundle;
}

EvaluationReport run_evaluate(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  if (!std::filesystem::exists(cfg.dataset_file()))
    throw FormatError("missing dataset " + cfg.dataset_file().string());
  const Dataset ds = read_dataset(cfg.dataset_file());
  if (ds.manifest.experiment != cfg.experiment)
    throw ConfigError("dataset " + cfg.dataset_file().string() + " is for experiment " +
                      std::to_string(ds.manifest.experiment));
  const ModelBundle models = load_bundle(cfg.models(), cfg.experiment);
  const SplitPlan plan = split(ds, cfg.train.ratios, split_seed(cfg.master_seed));
  EvaluationReport rep = evaluate_cascade(ds, plan, models);

  // A few test-split frames for inspection, re-simulated from provenance.
  std::vector<std::pair<std::string, CameraFrame>> samples;
  const auto test = plan.indices(Split::Test);
  if (!test.empty() && cfg.optics.bit_depth == 8) {
    for (std::size_t k : {std::size_t(0), test.size() / 2, test.size() - 1}) {
      const auto& rec = ds.records[test[k]];
      if (!rec.scene) continue;
      samples.emplace_back("category" + std::to_string(rec.category) + "_sample" + std::to_string(rec.sample),
                           simulate_frame(*rec.scene, ds.optics));
    }
  }
  export_report({rep}, cfg.reports(), samples, cfg.experiment);
  write_config_echo(cfg, cfg.reports());
  emit(log, summary_table({rep}));
  return rep;
}

EvaluationReport parse_summary_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    EvaluationReport rep;
    rep.experiment = j.at("experiment").get<int>();
    rep.test_samples = j.at("test_samples").get<std::size_t>();
    rep.mean_latency_ms = j.at("mean_latency_ms").get<double>();
    if (j.contains("pair_accuracy_mixed")) rep.pair_accuracy_mixed = j.at("pair_accuracy_mixed").get<double>();
    for (const auto& n : j.at("networks")) {
      StageResult s;
      s.name = n.at("name").get<std::string>();
      s.accuracy = n.at("accuracy").get<double>();
      s.oracle_accuracy = n.at("oracle_upstream_accuracy").get<double>();
      s.acceptance_accuracy = n.at("acceptance_accuracy").get<double>();
      s.target_accuracy = n.at("reference_accuracy").get<double>();
      s.hidden = n.at("neurons").get<std::vector<std::size_t>>();
      s.epochs = n.at("epochs").get<std::size_t>();
      s.stop_reason = n.at("stop_reason").get<std::string>();
      rep.stages.push_back(std::move(s));
    }
    return rep;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed summary: ") + e.what());
  }
}

SceneSpec parse_scene_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    const int rows = j.value("grid_rows", kDefaultGridRows);
    const int cols = j.value("grid_cols", kDefaultGridCols);
    const auto seed = j.value("seed", std::uint64_t(0));
    const auto& parts = j.at("particles");
    if (!parts.is_array() || parts.empty()) throw FormatError("scene needs a non-empty 'particles' array");
    const bool placed = parts.front().contains("row");
    if (placed) {
      SceneSpec s;
      s.grid_rows = rows;
      s.grid_cols = cols;
      s.seed = seed;
      for (const auto& p : parts)
        s.particles.push_back({shape_kind_from_string(p.at("kind").get<std::string>()), p.at("size").get<int>(),
                               p.at("row").get<int>(), p.at("col").get<int>()});
      validate_scene(s);
      return s;
    }
    std::vector<ParticleRequest> reqs;
    for (const auto& p : parts)
      reqs.push_back({shape_kind_from_string(p.at("kind").get<std::string>()), p.at("size").get<int>()});
    return place_particles(rows, cols, reqs, seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed scene file: ") + e.what());
  }
}

}  // namespace slda
