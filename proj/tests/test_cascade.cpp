#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "slda/cascade.hpp"
#include "slda/error.hpp"
#include "slda/random.hpp"

using namespace slda;

namespace {

ModelBundle random_bundle(int experiment, std::uint64_t seed) {
  ModelBundle b;
  b.experiment = experiment;
  const auto specs = stage_specs(experiment);
  for (std::size_t s = 0; s < specs.size(); ++s) {
    std::vector<std::size_t> sizes = {specs[s].input_size()};
    sizes.insert(sizes.end(), specs[s].hidden.begin(), specs[s].hidden.end());
    sizes.push_back(specs[s].class_labels.size());
    TrainedNetwork net;
    net.experiment = experiment;
    net.spec = specs[s];
    net.model = Mlp::initialized(sizes, derive_seed(seed, {s}));
    // Scale the output layer up so predictions actually vary.
    net.model.weights(net.model.layer_count() - 1) *= 20.0;
    net.standardizer = Standardizer(std::vector<double>(kFeatureLength, 0.0), std::vector<double>(kFeatureLength, 1.0));
    b.networks.push_back(std::move(net));
  }
  return b;
}

std::map<ShapeKind, int> kinds_in(const SceneSpec& s) {
  std::map<ShapeKind, int> out;
  for (const auto& p : s.particles) ++out[p.kind];
  return out;
}

}  // namespace

TEST_CASE("category enumeration") {
  const auto e1 = enumerate_categories(1);
  CHECK(e1.size() == 60);
  std::set<std::string> names;
  for (const auto& c : e1) names.insert(describe(c));
  CHECK(names.size() == 60);

  const auto e2 = enumerate_categories(2);
  CHECK(e2.size() == 189);
  std::map<int, int> per_total;
  std::set<std::tuple<int, int, int>> distinct;
  for (const auto& c : e2) {
    const auto& l = std::get<Exp2Label>(c);
    ++per_total[l.total()];
    distinct.insert({int(l.pair), l.n1, l.n2});
    CHECK(l.n1 >= 0);
    CHECK(l.n2 >= 0);
  }
  CHECK(distinct.size() == 189);
  for (int n = 2; n <= 10; ++n) CHECK(per_total[n] == 3 * (n + 1));

  // N = 2 for one pair: (2,0), (1,1), (0,2).
  std::set<std::pair<int, int>> two;
  for (const auto& c : e2) {
    const auto& l = std::get<Exp2Label>(c);
    if (l.pair == GeometryPair::SquareCircle && l.total() == 2) two.insert({l.n1, l.n2});
  }
  CHECK(two == std::set<std::pair<int, int>>{{2, 0}, {1, 1}, {0, 2}});
  CHECK_THROWS_AS(enumerate_categories(3), ConfigError);
}

TEST_CASE("dominant labels and stage targets") {
  CHECK(dominant_of(3, 1) == Dominant::Geometry1);
  CHECK(dominant_of(1, 3) == Dominant::Geometry2);
  CHECK(dominant_of(2, 2) == Dominant::Balanced);
  CHECK(dominant_of(0, 4) == Dominant::Geometry2);

  const CategoryLabel odd = Exp2Label{GeometryPair::TriangleCircle, 2, 1};
  CHECK(stage_target(2, 0, odd) == std::size_t(2));
  CHECK(stage_target(2, 1, odd) == std::size_t(1));
  CHECK(!stage_target(2, 2, odd).has_value());
  CHECK(stage_target(2, 3, odd) == std::size_t(0));
  const CategoryLabel even = Exp2Label{GeometryPair::SquareTriangle, 2, 2};
  CHECK(stage_target(2, 2, even) == std::size_t(2));
  CHECK(!stage_target(2, 3, even).has_value());

  const CategoryLabel e1 = Exp1Label{ShapeKind::Circle, 21, 4};
  CHECK(stage_target(1, 0, e1) == std::size_t(2));
  CHECK(stage_target(1, 1, e1) == std::size_t(2));
  CHECK(stage_target(1, 2, e1) == std::size_t(3));
  const auto up = stage_upstream(1, 2, e1);
  REQUIRE(up.size() == 2);
  CHECK(up[0] == std::size_t(2));
  CHECK(up[1] == std::size_t(2));
}

TEST_CASE("stage input and output widths chain") {
  const auto s1 = stage_specs(1);
  REQUIRE(s1.size() == 3);
  CHECK(s1[0].input_size() == 26);
  CHECK(s1[1].input_size() == 29);
  CHECK(s1[2].input_size() == 33);
  CHECK(s1[0].class_labels.size() == 3);
  CHECK(s1[1].class_labels.size() == 4);
  CHECK(s1[2].class_labels.size() == 5);

  const auto s2 = stage_specs(2);
  REQUIRE(s2.size() == 4);
  CHECK(s2[0].input_size() == 26);
  CHECK(s2[1].input_size() == 29);
  CHECK(s2[2].input_size() == 38);
  CHECK(s2[3].input_size() == 38);
  CHECK(s2[1].class_labels.size() == 9);
  CHECK(s2[2].class_labels.size() == 3);
  CHECK(s2[3].class_labels.size() == 2);

  for (int e : {1, 2}) CHECK_NOTHROW(random_bundle(e, 1).validate());
}

TEST_CASE("schema mismatches are rejected") {
  auto b = random_bundle(1, 2);
  b.networks[1].model = Mlp({30, 5, 4});
  CHECK_THROWS_AS(b.validate(), DimensionError);
  CHECK_THROWS_AS(validate_network(b.networks[1]), DimensionError);

  b = random_bundle(1, 2);
  b.networks[2].model = Mlp({33, 20, 5, 6});
  CHECK_THROWS_AS(b.validate(), DimensionError);

  b = random_bundle(1, 2);
  b.networks.pop_back();
  CHECK_THROWS_AS(b.validate(), DimensionError);

  b = random_bundle(2, 2);
  std::swap(b.networks[2], b.networks[3]);
  CHECK_THROWS_AS(b.validate(), DimensionError);

  b = random_bundle(2, 2);
  b.networks[0].standardizer = Standardizer({0.0}, {1.0});
  CHECK_THROWS_AS(b.validate(), DimensionError);

  CHECK_THROWS(predict_exp2(FeatureVector{}, random_bundle(1, 3)));
}

TEST_CASE("cascade prediction is total on an all-zero frame") {
  CameraFrame zero;
  zero.size = kFrameSize;
  zero.image.assign(std::size_t(kFrameSize) * kFrameSize, 0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p1 = predict_exp1(zero, random_bundle(1, seed));
    CHECK(std::find(kExp1Sizes.begin(), kExp1Sizes.end(), p1.size_mirrors) != kExp1Sizes.end());
    CHECK(p1.count >= 1);
    CHECK(p1.count <= 5);
    const auto p2 = predict_exp2(zero, random_bundle(2, seed));
    CHECK(p2.total >= 2);
    CHECK(p2.total <= 10);
    for (const auto& st : p2.stages) {
      double sum = 0.0;
      for (double v : st.probabilities) sum += v;
      CHECK(sum == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("odd predicted counts route to the two-class network") {
  Rng rng(17);
  int odd_seen = 0, even_seen = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto bundle = random_bundle(2, 100 + seed);
    for (int trial = 0; trial < 40; ++trial) {
      FeatureVector v{};
      for (auto& x : v) x = rng.normal();
      const auto p = predict_exp2(v, bundle);
      CHECK(p.even_network == (p.total % 2 == 0));
      if (!p.even_network) {
        ++odd_seen;
        CHECK(p.dominant != Dominant::Balanced);
        CHECK(p.stages[2].probabilities.size() == 2);
      } else {
        ++even_seen;
        CHECK(p.stages[2].probabilities.size() == 3);
      }
    }
  }
  CHECK(odd_seen > 0);
  CHECK(even_seen > 0);
}

TEST_CASE("scenes match their category labels") {
  for (int e : {1, 2}) {
    DatasetManifest m;
    m.experiment = e;
    m.samples_per_category = 3;
    m.global_seed = 5;
    const auto cats = enumerate_categories(e);
    for (std::size_t c = 0; c < cats.size(); ++c)
      for (std::size_t s = 0; s < 3; ++s) {
        const auto scene = sample_scene(m, cats[c], c, s);
        CHECK_NOTHROW(validate_scene(scene));
        const auto kinds = kinds_in(scene);
        if (e == 1) {
          const auto& l = std::get<Exp1Label>(cats[c]);
          CHECK(int(scene.particles.size()) == l.count);
          CHECK(kinds.at(l.geometry) == l.count);
          for (const auto& p : scene.particles) CHECK(p.size_mirrors == l.size_mirrors);
        } else {
          const auto& l = std::get<Exp2Label>(cats[c]);
          CHECK(int(scene.particles.size()) == l.total());
          const auto count = [&](ShapeKind k) { return kinds.count(k) ? kinds.at(k) : 0; };
          CHECK(count(first_geometry(l.pair)) == l.n1);
          CHECK(count(second_geometry(l.pair)) == l.n2);
          for (const auto& p : scene.particles) CHECK(p.size_mirrors == kExp2Size);
        }
      }
  }
}

TEST_CASE("sample scenes vary within a category") {
  DatasetManifest m;
  m.experiment = 1;
  m.samples_per_category = 100;
  m.global_seed = 11;
  const auto cats = enumerate_categories(1);
  for (std::size_t c = 0; c < cats.size(); ++c) {
    std::set<std::vector<std::pair<int, int>>> layouts;
    for (std::size_t s = 0; s < 100; ++s) {
      std::vector<std::pair<int, int>> pos;
      for (const auto& p : sample_scene(m, cats[c], c, s).particles) pos.emplace_back(p.row, p.col);
      layouts.insert(pos);
    }
    CHECK(layouts.size() >= 99);
  }
  CHECK(sample_seed(1, 2, 3) == sample_seed(1, 2, 3));
  CHECK(sample_seed(1, 2, 3) != sample_seed(1, 3, 2));
  CHECK(sample_seed(1, 2, 3) != sample_seed(2, 2, 3));
}

TEST_CASE("dataset generation is deterministic and thread-count independent") {
  DatasetManifest m;
  m.experiment = 1;
  m.samples_per_category = 1;
  m.global_seed = 3;
  const OpticalConfig optics;
  m.optics_hash = optics.hash();
  GenerateOptions one;
  one.keep_frames = true;
  GenerateOptions three = one;
  three.threads = 3;
  std::size_t last_done = 0;
  three.progress = [&](std::size_t done, std::size_t) { last_done = std::max(last_done, done); };
  const auto a = generate_dataset(m, optics, one);
  const auto b = generate_dataset(m, optics, three);
  REQUIRE(a.records.size() == 60);
  CHECK(a.records == b.records);
  CHECK(last_done == 60);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& r = a.records[i];
    CHECK(r.category == i);
    CHECK(r.frame.size() == std::size_t(kFrameSize) * kFrameSize);
    CHECK(*std::max_element(r.frame.begin(), r.frame.end()) == 255);
    REQUIRE(r.scene.has_value());
    // Features are reproducible from the stored scene.
    CHECK(to_storage_precision(build_v1(simulate_frame(*r.scene, optics))) == r.features);
    // Power reading equals (on mirrors) x P^2 scaled into the crop: positive and finite.
    CHECK(r.features[25] > 0.0);
  }
}

TEST_CASE("impossible placement names the category") {
  DatasetManifest m;
  m.experiment = 1;
  m.samples_per_category = 1;
  m.grid_rows = 30;
  m.grid_cols = 30;
  try {
    generate_dataset(m, OpticalConfig{});
    FAIL("expected a PlacementError");
  } catch (const PlacementError& e) {
    CHECK(std::string(e.what()).find("category") != std::string::npos);
  }
}
