#pragma once

// Label schemas for the two experiments, dataset generation, and the
// cascaded classifiers (each stage sees the core vector plus one-hot
// encodings of the upstream stages' labels).

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "slda/features.hpp"
#include "slda/neuralnet.hpp"
#include "slda/optics.hpp"
#include "slda/scene.hpp"

namespace slda {

inline constexpr std::array<int, 4> kExp1Sizes{11, 15, 21, 25};
inline constexpr int kExp1MaxCount = 5;
inline constexpr int kExp2Size = 15;
inline constexpr int kExp2MinCount = 2;
inline constexpr int kExp2MaxCount = 10;
inline constexpr int kDefaultSamplesPerCategory = 100;

/// Throws ConfigError for ids other than 1 and 2.
void check_experiment(int experiment);

struct Exp1Label {
  ShapeKind geometry = ShapeKind::Square;
  int size_mirrors = 11;
  int count = 1;

  /// Index of size_mirrors in kExp1Sizes; throws LabelError.
  std::size_t size_class() const;
  friend bool operator==(const Exp1Label&, const Exp1Label&) = default;
};

enum class GeometryPair : std::uint8_t { SquareTriangle = 0, SquareCircle = 1, TriangleCircle = 2 };
inline constexpr std::size_t kGeometryPairCount = 3;
ShapeKind first_geometry(GeometryPair pair);
ShapeKind second_geometry(GeometryPair pair);
std::string to_string(GeometryPair pair);

enum class Dominant : std::uint8_t { Geometry1 = 0, Geometry2 = 1, Balanced = 2 };
std::string_view to_string(Dominant d);
Dominant dominant_of(int n1, int n2);

struct Exp2Label {
  GeometryPair pair = GeometryPair::SquareTriangle;
  int n1 = 0;  // particles of first_geometry(pair)
  int n2 = 0;  // particles of second_geometry(pair)

  int total() const { return n1 + n2; }
  Dominant dominant() const { return dominant_of(n1, n2); }
  bool mixed() const { return n1 > 0 && n2 > 0; }
  friend bool operator==(const Exp2Label&, const Exp2Label&) = default;
};

using CategoryLabel = std::variant<Exp1Label, Exp2Label>;

/// Experiment 1: 3 geometries x 4 sizes x counts 1..5 (60 categories).
/// Experiment 2: 3 pairs x every n1 + n2 = N for N in 2..10, endpoints
/// included (189 categories).
std::vector<CategoryLabel> enumerate_categories(int experiment);

std::string describe(const CategoryLabel& label);

// --- stage schemas ---------------------------------------------------------

struct StageSpec {
  std::string name;
  std::vector<OneHotSegment> upstream;
  std::vector<std::string> class_labels;
  std::vector<std::size_t> hidden;  // hidden-layer widths
  double target_accuracy = 0.0;     // reference accuracy the stage is compared against

  std::size_t input_size() const;
};

/// Experiment 1: geometry, size, count. Experiment 2: pair, count,
/// dominant_even, dominant_odd.
std::vector<StageSpec> stage_specs(int experiment);

/// Ground-truth class of `label` for stage `stage`, or nullopt when the
/// stage does not apply (dominant networks of the other parity).
std::optional<std::size_t> stage_target(int experiment, std::size_t stage, const CategoryLabel& label);

/// Ground-truth upstream labels for stage `stage` (teacher forcing).
std::vector<std::optional<std::size_t>> stage_upstream(int experiment, std::size_t stage,
                                                       const CategoryLabel& label);

// --- datasets --------------------------------------------------------------

struct DatasetManifest {
  int experiment = 1;
  int samples_per_category = kDefaultSamplesPerCategory;
  std::uint64_t global_seed = 0;
  int grid_rows = kDefaultGridRows;
  int grid_cols = kDefaultGridCols;
  std::uint64_t optics_hash = 0;

  std::size_t category_count() const { return enumerate_categories(experiment).size(); }
  std::size_t total_records() const { return category_count() * std::size_t(samples_per_category); }
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Record {
  std::uint32_t category = 0;
  std::uint32_t sample = 0;
  CategoryLabel label;
  FeatureVector features{};  // float32-representable values
  std::optional<SceneSpec> scene;
  std::vector<std::uint8_t> frame;  // kFrameSize^2 bytes when kept, else empty

  friend bool operator==(const Record&, const Record&) = default;
};

struct Dataset {
  DatasetManifest manifest;
  OpticalConfig optics;
  std::vector<Record> records;
};

struct GenerateOptions {
  bool keep_frames = false;
  bool keep_scenes = true;
  int threads = 1;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Seed of one sample, a pure function of (global seed, category, sample).
std::uint64_t sample_seed(std::uint64_t global_seed, std::size_t category, std::size_t sample);

/// Scene for one sample of a category. Experiment 2 particles are placed in
/// a seeded random order of the two geometries.
SceneSpec sample_scene(const DatasetManifest& manifest, const CategoryLabel& label,
                       std::size_t category, std::size_t sample);

/// Scene -> mask -> far field window -> camera frame.
CameraFrame simulate_frame(const SceneSpec& scene, const OpticalConfig& optics);

/// Generates every record of the manifest. Output order is (category,
/// sample) regardless of thread count. Placement failures are rethrown with
/// the category named.
Dataset generate_dataset(const DatasetManifest& manifest, const OpticalConfig& optics,
                         const GenerateOptions& options = {});

// --- trained cascades ------------------------------------------------------

/// One trained stage with everything needed to run it on raw features.
struct TrainedNetwork {
  int experiment = 1;
  StageSpec spec;
  Mlp model;
  Standardizer standardizer;
  TrainReport report;
};

/// Checks dimensional chaining: input = 26 + upstream one-hot widths,
/// output = class count, standardizer covers the 26 core features.
/// Throws DimensionError.
void validate_network(const TrainedNetwork& net);

struct ModelBundle {
  int experiment = 1;
  std::vector<TrainedNetwork> networks;  // in stage_specs order
  std::vector<std::string> failures;     // stages whose training failed

  bool partial() const { return !failures.empty(); }
  /// Throws DimensionError unless every stage is present, in order, and
  /// matches its schema.
  void validate() const;
};

struct StageOutput {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

struct Exp1Prediction {
  ShapeKind geometry = ShapeKind::Square;
  int size_mirrors = 0;
  int count = 0;
  std::array<StageOutput, 3> stages;
};

struct Exp2Prediction {
  GeometryPair pair = GeometryPair::SquareTriangle;
  int total = 0;
  Dominant dominant = Dominant::Geometry1;
  bool even_network = false;
  std::array<StageOutput, 3> stages;  // pair, count, dominant
};

/// Runs the three-stage cascade, each stage consuming the hard predictions
/// of the previous ones.
Exp1Prediction predict_exp1(const FeatureVector& v1, const ModelBundle& models);
Exp1Prediction predict_exp1(const CameraFrame& frame, const ModelBundle& models);

/// Pair, then total count, then dominant geometry from the even (3-class)
/// or odd (2-class) network chosen by the parity of the predicted count.
Exp2Prediction predict_exp2(const FeatureVector& v1, const ModelBundle& models);
Exp2Prediction predict_exp2(const CameraFrame& frame, const ModelBundle& models);

}  // namespace slda
