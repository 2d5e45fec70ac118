#include "slda/cascade.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "slda/error.hpp"
#include "slda/random.hpp"

namespace slda {

void check_experiment(int experiment) {
  if (experiment != 1 && experiment != 2)
    throw ConfigError("unknown experiment id " + std::to_string(experiment) + " (expected 1 or 2)");
}

std::size_t Exp1Label::size_class() const {
  const auto it = std::find(kExp1Sizes.begin(), kExp1Sizes.end(), size_mirrors);
  if (it == kExp1Sizes.end()) throw LabelError("size " + std::to_string(size_mirrors) + " is not an experiment-1 size");
  return std::size_t(it - kExp1Sizes.begin());
}

ShapeKind first_geometry(GeometryPair pair) {
  return pair == GeometryPair::TriangleCircle ? ShapeKind::Triangle : ShapeKind::Square;
}

ShapeKind second_geometry(GeometryPair pair) {
  return pair == GeometryPair::SquareTriangle ? ShapeKind::Triangle : ShapeKind::Circle;
}

std::string to_string(GeometryPair pair) {
  return std::string(to_string(first_geometry(pair))) + "+" + std::string(to_string(second_geometry(pair)));
}

std::string_view to_string(Dominant d) {
  switch (d) {
    case Dominant::Geometry1:
      return "geometry1";
    case Dominant::Geometry2:
      return "geometry2";
    case Dominant::Balanced:
      return "balanced";
  }
  return "unknown";
}

Dominant dominant_of(int n1, int n2) {
  if (n1 > n2) return Dominant::Geometry1;
  if (n2 > n1) return Dominant::Geometry2;
  return Dominant::Balanced;
}

std::vector<CategoryLabel> enumerate_categories(int experiment) {
  check_experiment(experiment);
  std::vector<CategoryLabel> out;
  if (experiment == 1) {
    for (std::size_t g = 0; g < kShapeKindCount; ++g)
      for (int size : kExp1Sizes)
        for (int count = 1; count <= kExp1MaxCount; ++count)
          out.emplace_back(Exp1Label{static_cast<ShapeKind>(g), size, count});
  } else {
    for (std::size_t p = 0; p < kGeometryPairCount; ++p)
      for (int total = kExp2MinCount; total <= kExp2MaxCount; ++total)
        for (int n1 = 0; n1 <= total; ++n1)
          out.emplace_back(Exp2Label{static_cast<GeometryPair>(p), n1, total - n1});
  }
  return out;
}

std::string describe(const CategoryLabel& label) {
  if (const auto* a = std::get_if<Exp1Label>(&label))
    return std::to_string(a->count) + " x " + std::string(to_string(a->geometry)) + " size " +
           std::to_string(a->size_mirrors);
  const auto& b = std::get<Exp2Label>(label);
  return to_string(b.pair) + " (" + std::to_string(b.n1) + "+" + std::to_string(b.n2) + ")";
}

// --- stage schemas ---------------------------------------------------------

std::size_t StageSpec::input_size() const {
  std::size_t n = kFeatureLength;
  for (const auto& seg : upstream) n += seg.width;
  return n;
}

std::vector<StageSpec> stage_specs(int experiment) {
  check_experiment(experiment);
  if (experiment == 1) {
    std::vector<std::string> geometries, sizes, counts;
    for (std::size_t g = 0; g < kShapeKindCount; ++g)
      geometries.emplace_back(to_string(static_cast<ShapeKind>(g)));
    for (int s : kExp1Sizes) sizes.push_back(std::to_string(s));
    for (int c = 1; c <= kExp1MaxCount; ++c) counts.push_back(std::to_string(c));
    const OneHotSegment geo{"geometry", geometries.size()};
    const OneHotSegment size{"size", sizes.size()};
    return {
        {"geometry", {}, geometries, {5}, 0.99},
        {"size", {geo}, sizes, {5}, 0.99},
        {"count", {geo, size}, counts, {20, 5}, 0.93},
    };
  }
  std::vector<std::string> pairs, counts;
  for (std::size_t p = 0; p < kGeometryPairCount; ++p) pairs.push_back(to_string(static_cast<GeometryPair>(p)));
  for (int c = kExp2MinCount; c <= kExp2MaxCount; ++c) counts.push_back(std::to_string(c));
  const OneHotSegment pair{"pair", pairs.size()};
  const OneHotSegment count{"count", counts.size()};
  return {
      {"pair", {}, pairs, {30, 20}, 0.94},
      {"count", {pair}, counts, {80, 50}, 0.92},
      {"dominant_even", {pair, count}, {"geometry1", "geometry2", "balanced"}, {30, 20}, 0.95},
      {"dominant_odd", {pair, count}, {"geometry1", "geometry2"}, {30, 20}, 0.98},
  };
}

std::optional<std::size_t> stage_target(int experiment, std::size_t stage, const CategoryLabel& label) {
  check_experiment(experiment);
  if (experiment == 1) {
    const auto& l = std::get<Exp1Label>(label);
    switch (stage) {
      case 0:
        return std::size_t(l.geometry);
      case 1:
        return l.size_class();
      case 2:
        return std::size_t(l.count - 1);
    }
  } else {
    const auto& l = std::get<Exp2Label>(label);
    const bool even = l.total() % 2 == 0;
    switch (stage) {
      case 0:
        return std::size_t(l.pair);
      case 1:
        return std::size_t(l.total() - kExp2MinCount);
      case 2:
        return even ? std::optional<std::size_t>(std::size_t(l.dominant())) : std::nullopt;
      case 3:
        return even ? std::nullopt : std::optional<std::size_t>(std::size_t(l.dominant()));
    }
  }
  throw LabelError("stage index " + std::to_string(stage) + " out of range");
}

std::vector<std::optional<std::size_t>> stage_upstream(int experiment, std::size_t stage,
                                                       const CategoryLabel& label) {
  std::vector<std::optional<std::size_t>> out;
  const std::size_t depth = experiment == 2 ? std::min<std::size_t>(stage, 2) : stage;
  for (std::size_t s = 0; s < depth; ++s) out.push_back(stage_target(experiment, s, label));
  return out;
}

// --- datasets --------------------------------------------------------------

std::uint64_t sample_seed(std::uint64_t global_seed, std::size_t category, std::size_t sample) {
  return derive_seed(global_seed, {std::uint64_t(category), std::uint64_t(sample)});
}

SceneSpec sample_scene(const DatasetManifest& manifest, const CategoryLabel& label,
                       std::size_t category, std::size_t sample) {
  const std::uint64_t seed = sample_seed(manifest.global_seed, category, sample);
  std::vector<ParticleRequest> requests;
  if (const auto* a = std::get_if<Exp1Label>(&label)) {
    requests.assign(std::size_t(a->count), ParticleRequest{a->geometry, a->size_mirrors});
  } else {
    const auto& b = std::get<Exp2Label>(label);
    requests.assign(std::size_t(b.n1), ParticleRequest{first_geometry(b.pair), kExp2Size});
    requests.insert(requests.end(), std::size_t(b.n2), ParticleRequest{second_geometry(b.pair), kExp2Size});
    Rng order(derive_seed(seed, {0}));
    order.shuffle(std::span<ParticleRequest>(requests));
  }
  return place_particles(manifest.grid_rows, manifest.grid_cols, requests, seed);
}

CameraFrame simulate_frame(const SceneSpec& scene, const OpticalConfig& optics) {
  const ApertureMask mask = rasterize(scene);
  return capture_window(far_field_window(mask, optics), optics, derive_seed(scene.seed, {1}));
}

Dataset generate_dataset(const DatasetManifest& manifest, const OpticalConfig& optics,
                         const GenerateOptions& options) {
  check_experiment(manifest.experiment);
  if (manifest.samples_per_category < 1) throw ConfigError("samples per category must be >= 1");
  optics.validate_for_grid(manifest.grid_rows, manifest.grid_cols, kExp1Sizes.back());
  if (options.keep_frames && (optics.crop_size != kFrameSize || optics.bit_depth != 8))
    throw ConfigError("keeping frames requires 400x400 crops at 8 bits");

  Dataset ds;
  ds.manifest = manifest;
  ds.manifest.optics_hash = optics.hash();
  ds.optics = optics;
  const auto categories = enumerate_categories(manifest.experiment);
  const std::size_t per = std::size_t(manifest.samples_per_category);
  const std::size_t total = categories.size() * per;
  ds.records.resize(total);

  std::atomic<std::size_t> next{0}, done{0};
  std::exception_ptr failure;
  std::mutex failure_mutex, progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      const std::size_t cat = i / per, sample = i % per;
      try {
        Record rec;
        rec.category = std::uint32_t(cat);
        rec.sample = std::uint32_t(sample);
        rec.label = categories[cat];
        SceneSpec scene;
        try {
          scene = sample_scene(ds.manifest, categories[cat], cat, sample);
        } catch (const PlacementError& e) {
          throw PlacementError(e.particle_index(), "category " + std::to_string(cat) + " [" +
                                                     describe(categories[cat]) + "] sample " +
                                                     std::to_string(sample) + ": " + e.what());
        }
        const CameraFrame frame = simulate_frame(scene, optics);
        rec.features = to_storage_precision(build_v1(frame));
        if (options.keep_frames) rec.frame.assign(frame.image.begin(), frame.image.end());
        if (options.keep_scenes) rec.scene = std::move(scene);
        ds.records[i] = std::move(rec);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
      const std::size_t finished = ++done;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(finished, total);
      }
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return ds;
}

// --- trained cascades ------------------------------------------------------

void validate_network(const TrainedNetwork& net) {
  const auto& sizes = net.model.layer_sizes();
  if (sizes.empty()) throw DimensionError("stage '" + net.spec.name + "' has no network");
  if (net.model.input_size() != net.spec.input_size())
    throw DimensionError("stage '" + net.spec.name + "' expects " + std::to_string(net.spec.input_size()) +
                         " inputs but its network takes " + std::to_string(net.model.input_size()));
  if (net.model.output_size() != net.spec.class_labels.size())
    throw DimensionError("stage '" + net.spec.name + "' has " + std::to_string(net.spec.class_labels.size()) +
                         " classes but its network outputs " + std::to_string(net.model.output_size()));
  if (net.standardizer.scaled_count() != kFeatureLength)
    throw DimensionError("stage '" + net.spec.name + "' standardizer does not cover the core features");
}

void ModelBundle::validate() const {
  const auto specs = stage_specs(experiment);
  if (networks.size() != specs.size())
    throw DimensionError("experiment " + std::to_string(experiment) + " needs " + std::to_string(specs.size()) +
                         " networks, bundle has " + std::to_string(networks.size()));
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& net = networks[s];
    if (net.experiment != experiment || net.spec.name != specs[s].name)
      throw DimensionError("bundle stage " + std::to_string(s) + " is '" + net.spec.name + "', expected '" +
                           specs[s].name + "'");
    if (net.spec.upstream.size() != specs[s].upstream.size())
      throw DimensionError("stage '" + net.spec.name + "' has a mismatched upstream schema");
    for (std::size_t u = 0; u < specs[s].upstream.size(); ++u)
      if (net.spec.upstream[u].width != specs[s].upstream[u].width)
        throw DimensionError("stage '" + net.spec.name + "' upstream width mismatch");
    if (net.spec.class_labels != specs[s].class_labels)
      throw DimensionError("stage '" + net.spec.name + "' class labels differ from the schema");
    validate_network(net);
  }
}

namespace {

StageOutput run_stage(const TrainedNetwork& net, const FeatureVector& v1,
                      std::span<const std::optional<std::size_t>> upstream) {
  const auto x = augment(v1, net.spec.upstream, upstream);
  Prediction p = predict(net.model, net.standardizer, x);
  return {p.label, std::move(p.probabilities)};
}

void require_experiment(const ModelBundle& models, int experiment) {
  if (models.experiment != experiment)
    throw DimensionError("model bundle is for experiment " + std::to_string(models.experiment) +
                         ", expected " + std::to_string(experiment));
  models.validate();
}

}  // namespace

Exp1Prediction predict_exp1(const FeatureVector& v1, const ModelBundle& models) {
  require_experiment(models, 1);
  Exp1Prediction out;
  std::vector<std::optional<std::size_t>> upstream;
  for (std::size_t s = 0; s < 3; ++s) {
    out.stages[s] = run_stage(models.networks[s], v1, upstream);
    upstream.emplace_back(out.stages[s].label);
  }
  out.geometry = static_cast<ShapeKind>(out.stages[0].label);
  out.size_mirrors = kExp1Sizes[out.stages[1].label];
  out.count = int(out.stages[2].label) + 1;
  return out;
}

Exp1Prediction predict_exp1(const CameraFrame& frame, const ModelBundle& models) {
  return predict_exp1(to_storage_precision(build_v1(frame)), models);
}

Exp2Prediction predict_exp2(const FeatureVector& v1, const ModelBundle& models) {
  require_experiment(models, 2);
  Exp2Prediction out;
  std::vector<std::optional<std::size_t>> upstream;
  out.stages[0] = run_stage(models.networks[0], v1, upstream);
  upstream.emplace_back(out.stages[0].label);
  out.stages[1] = run_stage(models.networks[1], v1, upstream);
  upstream.emplace_back(out.stages[1].label);
  out.pair = static_cast<GeometryPair>(out.stages[0].label);
  out.total = int(out.stages[1].label) + kExp2MinCount;
  out.even_network = out.total % 2 == 0;
  out.stages[2] = run_stage(models.networks[out.even_network ? 2 : 3], v1, upstream);
  out.dominant = static_cast<Dominant>(out.stages[2].label);
  return out;
}

Exp2Prediction predict_exp2(const CameraFrame& frame, const ModelBundle& models) {
  return predict_exp2(to_storage_precision(build_v1(frame)), models);
}

}  // namespace slda
