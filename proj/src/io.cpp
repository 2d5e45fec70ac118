#include "slda/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "slda/error.hpp"

namespace slda {

namespace {

using nlohmann::json;

constexpr std::array<char, 4> kDatasetMagic{'S', 'L', 'D', 'A'};
constexpr std::array<char, 4> kModelMagic{'S', 'L', 'D', 'M'};
constexpr std::size_t kFrameBytes = std::size_t(kFrameSize) * kFrameSize;

class ByteWriter {
 public:
  void magic(const std::array<char, 4>& m) {
    for (char c : m) bytes_.push_back(std::uint8_t(c));
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(std::uint8_t(std::uint64_t(v) >> (8 * i)));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  void text(const std::string& s) {
    uint(std::uint32_t(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

  void magic(const std::array<char, 4>& m) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m.data(), 4) != 0)
      throw FormatError(std::string(what_) + ": bad magic, expected '" + std::string(m.data(), 4) + "'");
    pos_ += 4;
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return T(v);
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() {
    const auto n = uint<std::uint32_t>();
    auto s = raw(n);
    return {s.begin(), s.end()};
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string(what_) + ": truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  const char* what_;
};

json optics_to_json(const OpticalConfig& o) {
  return {{"wavelength_m", o.wavelength_m}, {"mirror_pitch_m", o.mirror_pitch_m},
          {"pad_size", o.pad_size},         {"crop_size", o.crop_size},
          {"bit_depth", o.bit_depth},       {"noise_sigma", o.noise_sigma}};
}

OpticalConfig optics_from_json(const json& j) {
  OpticalConfig o;
  o.wavelength_m = j.at("wavelength_m").get<double>();
  o.mirror_pitch_m = j.at("mirror_pitch_m").get<double>();
  o.pad_size = j.at("pad_size").get<int>();
  o.crop_size = j.at("crop_size").get<int>();
  o.bit_depth = j.at("bit_depth").get<int>();
  o.noise_sigma = j.at("noise_sigma").get<double>();
  return o;
}

std::array<std::uint8_t, 3> label_fields(const CategoryLabel& label) {
  if (const auto* a = std::get_if<Exp1Label>(&label))
    return {std::uint8_t(a->geometry), std::uint8_t(a->size_mirrors), std::uint8_t(a->count)};
  const auto& b = std::get<Exp2Label>(label);
  return {std::uint8_t(b.pair), std::uint8_t(b.n1), std::uint8_t(b.n2)};
}

CategoryLabel label_from_fields(int experiment, const std::array<std::uint8_t, 3>& f) {
  if (experiment == 1) return Exp1Label{shape_kind_from_code(f[0]), f[1], f[2]};
  if (f[0] >= kGeometryPairCount) throw FormatError("dataset: invalid pair code");
  return Exp2Label{static_cast<GeometryPair>(f[0]), f[1], f[2]};
}

double finite_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

// --- dataset ---------------------------------------------------------------

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  const bool frames = !ds.records.empty() && !ds.records.front().frame.empty();
  const bool scenes = !ds.records.empty() && ds.records.front().scene.has_value();
  json manifest = {
      {"experiment", ds.manifest.experiment},
      {"samples_per_category", ds.manifest.samples_per_category},
      {"global_seed", ds.manifest.global_seed},
      {"grid_rows", ds.manifest.grid_rows},
      {"grid_cols", ds.manifest.grid_cols},
      {"optics_hash", ds.manifest.optics_hash},
      {"optics", optics_to_json(ds.optics)},
      {"category_count", ds.manifest.category_count()},
      {"record_count", ds.records.size()},
      {"has_frames", frames},
      {"has_scenes", scenes},
  };
  json cats = json::array();
  for (const auto& c : enumerate_categories(ds.manifest.experiment))
    cats.push_back({{"label", describe(c)}, {"samples", ds.manifest.samples_per_category}});
  manifest["categories"] = std::move(cats);

  ByteWriter w;
  w.magic(kDatasetMagic);
  w.uint(kDatasetVersion);
  w.text(manifest.dump());
  for (const auto& rec : ds.records) {
    w.uint(rec.category);
    w.uint(rec.sample);
    for (auto f : label_fields(rec.label)) w.uint(f);
    for (double v : rec.features) w.f32(float(v));
    if (frames) {
      if (rec.frame.size() != kFrameBytes) throw FormatError("dataset: record without a frame");
      w.raw(rec.frame);
    }
    if (scenes) {
      if (!rec.scene) throw FormatError("dataset: record without a scene");
      const auto& s = *rec.scene;
      w.uint(s.seed);
      w.uint(std::uint16_t(s.grid_rows));
      w.uint(std::uint16_t(s.grid_cols));
      w.uint(std::uint16_t(s.particles.size()));
      for (const auto& p : s.particles) {
        w.uint(std::uint8_t(p.kind));
        w.uint(std::uint8_t(p.size_mirrors));
        w.uint(std::uint16_t(p.row));
        w.uint(std::uint16_t(p.col));
      }
    }
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "dataset");
  r.magic(kDatasetMagic);
  const auto version = r.uint<std::uint16_t>();
  if (version != kDatasetVersion)
    throw FormatError("dataset: unsupported format version " + std::to_string(version));
  json manifest;
  try {
    manifest = json::parse(r.text());
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: malformed manifest: ") + e.what());
  }

  Dataset ds;
  bool frames = false, scenes = false;
  std::size_t count = 0;
  try {
    ds.manifest.experiment = manifest.at("experiment").get<int>();
    ds.manifest.samples_per_category = manifest.at("samples_per_category").get<int>();
    ds.manifest.global_seed = manifest.at("global_seed").get<std::uint64_t>();
    ds.manifest.grid_rows = manifest.at("grid_rows").get<int>();
    ds.manifest.grid_cols = manifest.at("grid_cols").get<int>();
    ds.manifest.optics_hash = manifest.at("optics_hash").get<std::uint64_t>();
    ds.optics = optics_from_json(manifest.at("optics"));
    frames = manifest.at("has_frames").get<bool>();
    scenes = manifest.at("has_scenes").get<bool>();
    count = manifest.at("record_count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: incomplete manifest: ") + e.what());
  }
  check_experiment(ds.manifest.experiment);

  ds.records.resize(count);
  for (auto& rec : ds.records) {
    rec.category = r.uint<std::uint32_t>();
    rec.sample = r.uint<std::uint32_t>();
    std::array<std::uint8_t, 3> f{};
    for (auto& v : f) v = r.uint<std::uint8_t>();
    rec.label = label_from_fields(ds.manifest.experiment, f);
    for (double& v : rec.features) v = double(r.f32());
    if (frames) {
      auto b = r.raw(kFrameBytes);
      rec.frame.assign(b.begin(), b.end());
    }
    if (scenes) {
      SceneSpec s;
      s.seed = r.uint<std::uint64_t>();
      s.grid_rows = r.uint<std::uint16_t>();
      s.grid_cols = r.uint<std::uint16_t>();
      const auto n = r.uint<std::uint16_t>();
      for (std::uint16_t k = 0; k < n; ++k) {
        ParticleSpec p;
        p.kind = shape_kind_from_code(r.uint<std::uint8_t>());
        p.size_mirrors = r.uint<std::uint8_t>();
        p.row = r.uint<std::uint16_t>();
        p.col = r.uint<std::uint16_t>();
        s.particles.push_back(p);
      }
      rec.scene = std::move(s);
    }
  }
  if (!r.at_end()) throw FormatError("dataset: trailing bytes after the last record");
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

// --- networks --------------------------------------------------------------

std::vector<std::uint8_t> encode_network(const TrainedNetwork& net) {
  validate_network(net);
  const auto& rep = net.report;
  json upstream = json::array();
  for (const auto& seg : net.spec.upstream) upstream.push_back({{"name", seg.name}, {"width", seg.width}});
  json train = {
      {"epochs", rep.epochs()},
      {"stop_reason", to_string(rep.stop_reason)},
      {"best_epoch", rep.best_epoch},
      {"best_validation_loss", std::isfinite(rep.best_validation_loss) ? json(rep.best_validation_loss) : json()},
  };
  if (rep.epochs()) {
    train["final_train_loss"] = rep.train_loss.back();
    train["final_validation_loss"] = rep.validation_loss.back();
  }
  json header = {
      {"experiment", net.experiment},
      {"stage", net.spec.name},
      {"feature_layout",
       {{"core", {{"downsampled_image", kImageFeatures}, {"power_reading", 1}}}, {"upstream_one_hot", upstream}}},
      {"class_labels", net.spec.class_labels},
      {"hidden", net.spec.hidden},
      {"reference_accuracy", net.spec.target_accuracy},
      {"layer_sizes", net.model.layer_sizes()},
      {"parameter_count", net.model.parameter_count()},
      {"standardized_features", net.standardizer.scaled_count()},
      {"train", train},
  };

  ByteWriter w;
  w.magic(kModelMagic);
  w.uint(kModelVersion);
  w.text(header.dump());
  const auto& params = net.model.parameters();
  for (Eigen::Index i = 0; i < params.size(); ++i) w.f64(params[i]);
  for (double v : net.standardizer.mean()) w.f64(v);
  for (double v : net.standardizer.stddev()) w.f64(v);
  for (double v : rep.train_loss) w.f64(v);
  for (double v : rep.validation_loss) w.f64(v);
  for (auto a : rep.accepted) w.uint(a);
  return w.take();
}

TrainedNetwork decode_network(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "model");
  r.magic(kModelMagic);
  const auto version = r.uint<std::uint16_t>();
  if (version != kModelVersion) throw FormatError("model: unsupported format version " + std::to_string(version));

  TrainedNetwork net;
  std::size_t params = 0, standardized = 0, epochs = 0;
  std::vector<std::size_t> sizes;
  try {
    const json h = json::parse(r.text());
    net.experiment = h.at("experiment").get<int>();
    net.spec.name = h.at("stage").get<std::string>();
    for (const auto& seg : h.at("feature_layout").at("upstream_one_hot"))
      net.spec.upstream.push_back({seg.at("name").get<std::string>(), seg.at("width").get<std::size_t>()});
    net.spec.class_labels = h.at("class_labels").get<std::vector<std::string>>();
    net.spec.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    net.spec.target_accuracy = h.at("reference_accuracy").get<double>();
    sizes = h.at("layer_sizes").get<std::vector<std::size_t>>();
    params = h.at("parameter_count").get<std::size_t>();
    standardized = h.at("standardized_features").get<std::size_t>();
    const auto& t = h.at("train");
    epochs = t.at("epochs").get<std::size_t>();
    net.report.stop_reason = stop_reason_from_string(t.at("stop_reason").get<std::string>());
    net.report.best_epoch = t.at("best_epoch").get<int>();
    net.report.best_validation_loss = finite_or_inf(t.at("best_validation_loss"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: malformed header: ") + e.what());
  }
  check_experiment(net.experiment);

  try {
    net.model = Mlp(sizes);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  if (net.model.parameter_count() != params) throw FormatError("model: parameter count does not match layer sizes");
  auto& p = net.model.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = r.f64();
  std::vector<double> mean(standardized), sd(standardized);
  for (double& v : mean) v = r.f64();
  for (double& v : sd) v = r.f64();
  try {
    net.standardizer = Standardizer(std::move(mean), std::move(sd));
  } catch (const Error& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  net.report.train_loss.resize(epochs);
  net.report.validation_loss.resize(epochs);
  net.report.accepted.resize(epochs);
  for (double& v : net.report.train_loss) v = r.f64();
  for (double& v : net.report.validation_loss) v = r.f64();
  for (auto& a : net.report.accepted) a = r.uint<std::uint8_t>();
  if (!r.at_end()) throw FormatError("model: trailing bytes");
  validate_network(net);
  return net;
}

void save_network(const std::filesystem::path& path, const TrainedNetwork& net) {
  write_file(path, encode_network(net));
}

TrainedNetwork load_network(const std::filesystem::path& path) { return decode_network(read_file(path)); }

std::filesystem::path network_path(const std::filesystem::path& dir, int experiment, const std::string& stage) {
  return dir / ("exp" + std::to_string(experiment) + "_" + stage + ".sldm");
}

void save_bundle(const std::filesystem::path& dir, const ModelBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& net : bundle.networks) save_network(network_path(dir, bundle.experiment, net.spec.name), net);
}

ModelBundle load_bundle(const std::filesystem::path& dir, int experiment) {
  ModelBundle bundle;
  bundle.experiment = experiment;
  for (const auto& spec : stage_specs(experiment)) {
    const auto path = network_path(dir, experiment, spec.name);
    if (!std::filesystem::exists(path)) throw FormatError("missing model file " + path.string());
    bundle.networks.push_back(load_network(path));
  }
  bundle.validate();
  return bundle;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw FormatError("failed reading " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace slda
