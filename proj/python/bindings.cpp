#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "slda/cascade.hpp"
#include "slda/error.hpp"
#include "slda/features.hpp"
#include "slda/io.hpp"
#include "slda/optics.hpp"
#include "slda/pipeline.hpp"
#include "slda/scene.hpp"

namespace py = pybind11;
using namespace slda;

namespace {

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  py::array_t<T> out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ApertureMask mask_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw DimensionError("mask must be a 2D array");
  ApertureMask m;
  m.rows = int(a.shape(0));
  m.cols = int(a.shape(1));
  m.cells.resize(std::size_t(a.size()));
  for (std::size_t i = 0; i < m.cells.size(); ++i) m.cells[i] = a.data()[i] ? 1 : 0;
  m.on_count = std::size_t(std::count(m.cells.begin(), m.cells.end(), 1));
  return m;
}

CameraFrame frame_from(const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& image,
                       double power) {
  if (image.ndim() != 2 || image.shape(0) != image.shape(1))
    throw DimensionError("frame must be a square 2D array");
  CameraFrame f;
  f.size = int(image.shape(0));
  f.image.assign(image.data(), image.data() + image.size());
  f.power_reading = power;
  return f;
}

FeatureVector features_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
  if (v.size() != py::ssize_t(kFeatureLength)) throw DimensionError("feature vector must have 26 elements");
  FeatureVector out;
  std::copy(v.data(), v.data() + kFeatureLength, out.begin());
  return out;
}

RunConfig run_config(const std::filesystem::path& out_dir, int experiment, int samples, std::uint64_t seed,
                     int threads) {
  RunConfig cfg;
  cfg.out_dir = out_dir;
  cfg.experiment = experiment;
  cfg.samples_per_category = samples;
  cfg.master_seed = seed;
  cfg.threads = threads;
  return cfg;
}

py::dict stages_dict(const std::array<StageOutput, 3>& stages, const std::vector<std::string>& names) {
  py::dict d;
  for (std::size_t s = 0; s < 3; ++s) d[py::str(names[s])] = stages[s].probabilities;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Far-field diffraction simulation, feature extraction and cascaded particle classifiers.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::enum_<ShapeKind>(m, "ShapeKind")
      .value("Square", ShapeKind::Square)
      .value("Triangle", ShapeKind::Triangle)
      .value("Circle", ShapeKind::Circle);

  m.def(
      "shape_footprint",
      [](ShapeKind kind, int size) {
        const Stencil st = shape_footprint(kind, size);
        return to_array(st.cells, std::size_t(st.size), std::size_t(st.size));
      },
      py::arg("kind"), py::arg("size"));

  py::class_<ParticleSpec>(m, "ParticleSpec")
      .def_readonly("kind", &ParticleSpec::kind)
      .def_readonly("size", &ParticleSpec::size_mirrors)
      .def_readonly("row", &ParticleSpec::row)
      .def_readonly("col", &ParticleSpec::col)
      .def("__repr__", [](const ParticleSpec& p) {
        return "ParticleSpec(" + std::string(to_string(p.kind)) + ", " + std::to_string(p.size_mirrors) + ", " +
               std::to_string(p.row) + ", " + std::to_string(p.col) + ")";
      });

  py::class_<SceneSpec>(m, "SceneSpec")
      .def_readonly("grid_rows", &SceneSpec::grid_rows)
      .def_readonly("grid_cols", &SceneSpec::grid_cols)
      .def_readonly("particles", &SceneSpec::particles)
      .def_readonly("seed", &SceneSpec::seed);

  m.def(
      "place_particles",
      [](const std::vector<std::pair<ShapeKind, int>>& requests, std::uint64_t seed, int grid_rows, int grid_cols) {
        std::vector<ParticleRequest> reqs;
        for (const auto& [k, s] : requests) reqs.push_back({k, s});
        return place_particles(grid_rows, grid_cols, reqs, seed);
      },
      py::arg("requests"), py::arg("seed"), py::arg("grid_rows") = kDefaultGridRows,
      py::arg("grid_cols") = kDefaultGridCols);

  m.def(
      "rasterize",
      [](const SceneSpec& scene) {
        const ApertureMask mask = rasterize(scene);
        return to_array(mask.cells, std::size_t(mask.rows), std::size_t(mask.cols));
      },
      py::arg("scene"));

  py::class_<OpticalConfig>(m, "OpticalConfig")
      .def(py::init<>())
      .def_readwrite("wavelength_m", &OpticalConfig::wavelength_m)
      .def_readwrite("mirror_pitch_m", &OpticalConfig::mirror_pitch_m)
      .def_readwrite("pad_size", &OpticalConfig::pad_size)
      .def_readwrite("crop_size", &OpticalConfig::crop_size)
      .def_readwrite("bit_depth", &OpticalConfig::bit_depth)
      .def_readwrite("noise_sigma", &OpticalConfig::noise_sigma)
      .def_property_readonly("angle_per_bin", &OpticalConfig::angle_per_bin)
      .def_property_readonly("crop_half_angle_deg", &OpticalConfig::crop_half_angle_deg);

  m.def(
      "far_field",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask, const OpticalConfig& cfg) {
        const FarFieldPattern p = far_field(mask_from_array(mask), cfg);
        return py::make_tuple(to_array(p.intensity, std::size_t(p.size), std::size_t(p.size)), p.total_power);
      },
      py::arg("mask"), py::arg("config") = OpticalConfig{},
      "Centered far-field intensity (P x P) and its total power.");

  m.def(
      "analytic_far_field",
      [](ShapeKind kind, int size, const OpticalConfig& cfg) {
        const FarFieldPattern p = analytic_far_field(kind, size, cfg);
        return to_array(p.intensity, std::size_t(p.size), std::size_t(p.size));
      },
      py::arg("kind"), py::arg("size"), py::arg("config") = OpticalConfig{});

  m.def(
      "simulate_frame",
      [](const SceneSpec& scene, const OpticalConfig& cfg) {
        const CameraFrame f = simulate_frame(scene, cfg);
        return py::make_tuple(to_array(f.image, std::size_t(f.size), std::size_t(f.size)), f.power_reading);
      },
      py::arg("scene"), py::arg("config") = OpticalConfig{},
      "Camera image (crop x crop, integer) and the unquantized power reading.");

  m.def(
      "overlap",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        if (a.ndim() != b.ndim()) throw DimensionError("overlap inputs differ in shape");
        for (py::ssize_t d = 0; d < a.ndim(); ++d)
          if (a.shape(d) != b.shape(d)) throw DimensionError("overlap inputs differ in shape");
        return overlap({a.data(), std::size_t(a.size())}, {b.data(), std::size_t(b.size())});
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "downsample",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image) {
        if (image.ndim() != 2) throw DimensionError("image must be 2D");
        const auto ds = downsample(std::span<const double>(image.data(), std::size_t(image.size())),
                                   int(image.shape(0)), int(image.shape(1)));
        return to_array(std::vector<double>(ds.begin(), ds.end()), kDownsampledSize, kDownsampledSize);
      },
      py::arg("image"));

  m.def(
      "build_v1",
      [](const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& image, double power) {
        const FeatureVector v = build_v1(frame_from(image, power));
        return std::vector<double>(v.begin(), v.end());
      },
      py::arg("image"), py::arg("power_reading"));

  m.def(
      "enumerate_categories",
      [](int experiment) {
        std::vector<std::string> out;
        for (const auto& c : enumerate_categories(experiment)) out.push_back(describe(c));
        return out;
      },
      py::arg("experiment"));

  m.def(
      "generate_dataset",
      [](int experiment, int samples_per_category, std::uint64_t seed, const OpticalConfig& cfg) {
        DatasetManifest manifest;
        manifest.experiment = experiment;
        manifest.samples_per_category = samples_per_category;
        manifest.global_seed = seed;
        Dataset ds;
        {
          py::gil_scoped_release release;
          ds = generate_dataset(manifest, cfg);
        }
        const std::size_t n = ds.records.size();
        py::array_t<double> features({n, kFeatureLength});
        py::array_t<int> labels({n, std::size_t(4)});
        auto f = features.mutable_unchecked<2>();
        auto l = labels.mutable_unchecked<2>();
        for (std::size_t i = 0; i < n; ++i) {
          const auto& rec = ds.records[i];
          for (std::size_t k = 0; k < kFeatureLength; ++k) f(i, k) = rec.features[k];
          l(i, 0) = int(rec.category);
          if (const auto* a = std::get_if<Exp1Label>(&rec.label)) {
            l(i, 1) = int(a->geometry);
            l(i, 2) = a->size_mirrors;
            l(i, 3) = a->count;
          } else {
            const auto& b = std::get<Exp2Label>(rec.label);
            l(i, 1) = int(b.pair);
            l(i, 2) = b.n1;
            l(i, 3) = b.n2;
          }
        }
        return py::make_tuple(features, labels);
      },
      py::arg("experiment"), py::arg("samples_per_category"), py::arg("seed"), py::arg("config") = OpticalConfig{},
      "Features (N x 26) and labels (N x 4: category, then geometry/size/count or pair/n1/n2).");

  py::class_<ModelBundle>(m, "ModelBundle")
      .def_readonly("experiment", &ModelBundle::experiment)
      .def_property_readonly("stages", [](const ModelBundle& b) {
        std::vector<std::string> names;
        for (const auto& n : b.networks) names.push_back(n.spec.name);
        return names;
      });

  m.def(
      "run_generate",
      [](const std::filesystem::path& out_dir, int experiment, int samples, std::uint64_t seed, int threads) {
        py::gil_scoped_release release;
        return run_generate(run_config(out_dir, experiment, samples, seed, threads)).records.size();
      },
      py::arg("out_dir"), py::arg("experiment"), py::arg("samples_per_category") = kDefaultSamplesPerCategory,
      py::arg("seed") = RunConfig{}.master_seed, py::arg("threads") = 1,
      "Generates OUT_DIR/expN_dataset.slda and returns the record count.");

  m.def(
      "run_train",
      [](const std::filesystem::path& out_dir, int experiment, int samples, std::uint64_t seed) {
        py::gil_scoped_release release;
        return run_train(run_config(out_dir, experiment, samples, seed, 1));
      },
      py::arg("out_dir"), py::arg("experiment"), py::arg("samples_per_category") = kDefaultSamplesPerCategory,
      py::arg("seed") = RunConfig{}.master_seed, "Trains every stage and writes OUT_DIR/models.");

  m.def(
      "run_evaluate",
      [](const std::filesystem::path& out_dir, int experiment, int samples, std::uint64_t seed) {
        EvaluationReport rep;
        {
          py::gil_scoped_release release;
          rep = run_evaluate(run_config(out_dir, experiment, samples, seed, 1));
        }
        py::dict out;
        out["experiment"] = rep.experiment;
        out["test_samples"] = rep.test_samples;
        py::dict acc;
        for (const auto& s : rep.stages) acc[py::str(s.name)] = s.acceptance_accuracy;
        out["accuracy"] = acc;
        if (rep.pair_accuracy_mixed) out["pair_accuracy_mixed"] = *rep.pair_accuracy_mixed;
        out["all_pass"] = rep.all_pass();
        return out;
      },
      py::arg("out_dir"), py::arg("experiment"), py::arg("samples_per_category") = kDefaultSamplesPerCategory,
      py::arg("seed") = RunConfig{}.master_seed,
      "Scores the cascade on the test split, writes OUT_DIR/reports and returns per-stage accuracies.");

  m.def("load_models", &load_bundle, py::arg("directory"), py::arg("experiment"));

  m.def(
      "predict",
      [](const ModelBundle& models, const py::array_t<double, py::array::c_style | py::array::forcecast>& features) {
        const FeatureVector v = to_storage_precision(features_from(features));
        py::dict out;
        if (models.experiment == 1) {
          const auto p = predict_exp1(v, models);
          out["geometry"] = std::string(to_string(p.geometry));
          out["size"] = p.size_mirrors;
          out["count"] = p.count;
          out["probabilities"] = stages_dict(p.stages, {"geometry", "size", "count"});
        } else {
          const auto p = predict_exp2(v, models);
          out["pair"] = to_string(p.pair);
          out["count"] = p.total;
          out["dominant"] = std::string(to_string(p.dominant));
          out["probabilities"] = stages_dict(p.stages, {"pair", "count", "dominant"});
        }
        return out;
      },
      py::arg("models"), py::arg("features"), "Cascade prediction from a raw 26-element feature vector.");
}
