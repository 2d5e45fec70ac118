#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "slda/error.hpp"
#include "slda/optics.hpp"
#include "slda/random.hpp"
#include "slda/scene.hpp"

using namespace slda;

namespace {

OpticalConfig small_config(int pad = 256, int crop = 64) {
  OpticalConfig cfg;
  cfg.pad_size = pad;
  cfg.crop_size = crop;
  return cfg;
}

ApertureMask mask_of(const SceneSpec& s) { return rasterize(s); }

ApertureMask single(ShapeKind kind, int size, int row = 0, int col = 0, int rows = 484, int cols = 861) {
  SceneSpec s;
  s.grid_rows = rows;
  s.grid_cols = cols;
  s.particles = {{kind, size, row, col}};
  return rasterize(s);
}

ApertureMask random_mask(std::uint64_t seed, int rows, int cols) {
  Rng rng(seed);
  ApertureMask m;
  m.rows = rows;
  m.cols = cols;
  m.cells.resize(std::size_t(rows) * cols);
  for (auto& c : m.cells) c = rng.uniform01() < 0.3;
  m.on_count = std::size_t(std::count(m.cells.begin(), m.cells.end(), 1));
  return m;
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

// Brute-force DFT value at centred frequency (kr, kc), straight from the definition.
double dft_intensity(const ApertureMask& m, int pad, int kr, int kc) {
  std::complex<double> sum = 0.0;
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c)
      if (m.at(r, c)) sum += std::polar(1.0, -2.0 * std::numbers::pi * (double(kr) * r + double(kc) * c) / pad);
  return std::norm(sum);
}

// Bessel J1 via its integral representation, Simpson's rule.
double bessel_j1_quadrature(double x) {
  const int n = 2000;
  const double h = std::numbers::pi / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = i * h;
    const double f = std::cos(t - x * std::sin(t));
    s += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return s * h / 3.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("Parseval holds for random masks") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_mask(seed, 40 + int(seed), 70);
    const auto cfg = small_config();
    const auto p = far_field(m, cfg);
    const double expected = double(cfg.pad_size) * cfg.pad_size * double(m.on_count);
    CHECK(std::abs(p.total_power - expected) <= 1e-9 * expected);
  }
}

TEST_CASE("Parseval and centrosymmetry at the default pad size") {
  SceneSpec s;
  s.particles = {{ShapeKind::Triangle, 25, 10, 20}, {ShapeKind::Circle, 15, 200, 500}, {ShapeKind::Square, 11, 400, 800}};
  const auto m = mask_of(s);
  const OpticalConfig cfg;
  const auto p = far_field(m, cfg);
  const double n = cfg.pad_size;
  CHECK(std::abs(p.total_power - n * n * double(m.on_count)) <= 1e-9 * n * n * double(m.on_count));
  const double peak = max_of(p.intensity);
  double worst = 0.0;
  for (int i = 1; i < p.size; ++i)
    for (int j = 1; j < p.size; ++j)
      worst = std::max(worst, std::abs(p.at(i, j) - p.at(p.size - i, p.size - j)));
  CHECK(worst <= 1e-9 * peak);
  // Zero frequency holds the global maximum (on_count squared).
  CHECK(p.at(p.size / 2, p.size / 2) == doctest::Approx(double(m.on_count) * double(m.on_count)).epsilon(1e-12));
  CHECK(peak == p.at(p.size / 2, p.size / 2));
}

TEST_CASE("far_field_window matches the full transform") {
  const auto m = random_mask(99, 30, 50);
  const auto cfg = small_config(256, 64);
  const auto full = center_crop(far_field(m, cfg), cfg.crop_size);
  const auto win = far_field_window(m, cfg);
  REQUIRE(full.size() == win.size());
  const double peak = max_of(full);
  for (std::size_t i = 0; i < full.size(); ++i) REQUIRE(std::abs(full[i] - win[i]) <= 1e-9 * peak);

  SceneSpec s;
  s.particles = {{ShapeKind::Circle, 21, 100, 300}, {ShapeKind::Triangle, 21, 300, 600}};
  const OpticalConfig def;
  const auto full2 = center_crop(far_field(rasterize(s), def), def.crop_size);
  const auto win2 = far_field_window(rasterize(s), def);
  const double peak2 = max_of(full2);
  for (std::size_t i = 0; i < full2.size(); ++i) REQUIRE(std::abs(full2[i] - win2[i]) <= 1e-9 * peak2);
}

TEST_CASE("single square: central row follows the aperture transform with first zero at lambda/(11 pitch)") {
  const OpticalConfig cfg;
  const auto m = single(ShapeKind::Square, 11, 37, 91);
  const auto p = far_field(m, cfg);
  const int c0 = p.size / 2;
  const double peak = p.at(c0, c0);
  for (int k = -200; k < 200; k += 7) {
    const double oracle = dft_intensity(m, cfg.pad_size, 0, k);
    CHECK(std::abs(p.at(c0, c0 + k) - oracle) <= 1e-9 * peak);
  }
  // The continuous zero falls between bins; the sampled row has its minimum at the nearest bin.
  const double zero_angle = cfg.wavelength_m / (11 * cfg.mirror_pitch_m);
  CHECK(zero_angle == doctest::Approx(4.83e-3).epsilon(0.01));
  CHECK(zero_angle * 180.0 / std::numbers::pi == doctest::Approx(0.277).epsilon(0.01));
  const int zero_bin = int(std::lround(zero_angle / p.angle_per_bin));
  CHECK(p.at(c0, c0 + zero_bin) < p.at(c0, c0 + zero_bin - 3));
  CHECK(p.at(c0, c0 + zero_bin) < p.at(c0, c0 + zero_bin + 3));
  CHECK(p.at(c0, c0 + zero_bin) < 1e-3 * peak);
}

TEST_CASE("translation only changes spectral phase") {
  const OpticalConfig cfg;
  const auto a = single(ShapeKind::Triangle, 21, 10, 10);
  const auto b = single(ShapeKind::Triangle, 21, 300, 700);
  const auto pa = far_field_window(a, cfg);
  const auto pb = far_field_window(b, cfg);
  const double peak = max_of(pa);
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(std::abs(pa[i] - pb[i]) <= 1e-9 * peak);

  const auto fa = capture_window(pa, cfg);
  const auto fb = capture_window(pb, cfg);
  CHECK(fa.image == fb.image);
  CHECK(fa.power_reading == doctest::Approx(fb.power_reading).epsilon(1e-9));
}

TEST_CASE("two identical squares give cos^2 fringes on the single-square envelope") {
  const OpticalConfig cfg;
  const int d = 120;
  const auto one = far_field(single(ShapeKind::Square, 15, 50, 100), cfg);
  SceneSpec s;
  s.particles = {{ShapeKind::Square, 15, 50, 100}, {ShapeKind::Square, 15, 50, 100 + d}};
  const auto two = far_field(rasterize(s), cfg);
  const double peak = max_of(two.intensity);
  const int c0 = cfg.pad_size / 2;
  for (int kr = -200; kr < 200; kr += 13)
    for (int kc = -200; kc < 200; ++kc) {
      const double fringe = std::cos(std::numbers::pi * kc * d / cfg.pad_size);
      const double expected = 4.0 * fringe * fringe * one.at(c0 + kr, c0 + kc);
      REQUIRE(std::abs(two.at(c0 + kr, c0 + kc) - expected) <= 1e-9 * peak);
    }
}

TEST_CASE("capture: max normalization, power meter and degenerate crops") {
  OpticalConfig cfg = small_config(16, 8);
  FarFieldPattern p;
  p.size = 16;
  p.intensity.assign(256, 3.5);
  auto f = capture(p, cfg);
  CHECK(std::all_of(f.image.begin(), f.image.end(), [](auto v) { return v == 255; }));
  CHECK(f.power_reading == doctest::Approx(64 * 3.5));

  p.intensity.assign(256, 0.0);
  f = capture(p, cfg);
  CHECK(std::all_of(f.image.begin(), f.image.end(), [](auto v) { return v == 0; }));
  CHECK(f.power_reading == 0.0);

  Rng rng(5);
  for (auto& v : p.intensity) v = rng.uniform(0.0, 10.0);
  const auto base = capture(p, cfg);
  for (auto& v : p.intensity) v *= 2.0;
  const auto doubled = capture(p, cfg);
  CHECK(base.image == doubled.image);
  CHECK(doubled.power_reading == doctest::Approx(2.0 * base.power_reading).epsilon(1e-14));

  // Pixels follow floor(v / max * 255).
  const auto window = center_crop(p, cfg.crop_size);
  const double peak = max_of(window);
  for (std::size_t i = 0; i < window.size(); ++i)
    CHECK(doubled.image[i] == std::uint16_t(std::floor(window[i] / peak * 255.0)));
}

TEST_CASE("capture noise is optional, seeded and leaves the power reading alone") {
  OpticalConfig cfg = small_config(64, 32);
  cfg.noise_sigma = 0.05;
  const auto m = random_mask(3, 20, 20);
  const auto w = far_field_window(m, cfg);
  const auto a = capture_window(w, cfg, 11);
  const auto b = capture_window(w, cfg, 11);
  const auto c = capture_window(w, cfg, 12);
  CHECK(a.image == b.image);
  CHECK(a.image != c.image);
  cfg.noise_sigma = 0.0;
  const auto clean = capture_window(w, cfg, 11);
  CHECK(clean.power_reading == a.power_reading);
}

TEST_CASE("overlap parameter") {
  Rng rng(1);
  std::vector<double> a(400), b(400);
  for (auto& v : a) v = rng.uniform(0.0, 5.0);
  CHECK(overlap(a, a) == 1.0);

  std::vector<double> left(10, 0.0), right(10, 0.0);
  std::fill(left.begin(), left.begin() + 5, 1.0);
  std::fill(right.begin() + 5, right.end(), 2.0);
  CHECK(overlap(left, right) == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    for (auto& v : a) v = rng.uniform(0.0, 5.0);
    for (auto& v : b) v = rng.uniform(0.0, 5.0);
    const double o = overlap(a, b);
    CHECK(o >= 0.0);
    CHECK(o <= 1.0);
    CHECK(overlap(b, a) == doctest::Approx(o).epsilon(1e-14));
    std::vector<double> scaled = b;
    for (auto& v : scaled) v *= 17.0;
    CHECK(overlap(a, scaled) == doctest::Approx(o).epsilon(1e-12));
  }

  std::vector<double> zeros(400, 0.0);
  CHECK_THROWS_AS(overlap(a, zeros), OverlapError);
  CHECK_THROWS_AS(overlap(a, std::vector<double>(3, 1.0)), DimensionError);
  std::vector<double> negative = a;
  negative[0] = -1.0;
  CHECK_THROWS_AS(overlap(negative, a), OverlapError);
}

TEST_CASE("analytic far fields") {
  const OpticalConfig cfg;
  const auto sq = analytic_far_field(ShapeKind::Square, 11, cfg);
  const int c0 = cfg.pad_size / 2;
  CHECK(sq.at(c0, c0) == max_of(sq.intensity));
  CHECK(sq.at(c0, c0) == doctest::Approx(121.0 * 121.0));

  // First Airy zero from an independent J1 (integral representation + bisection).
  double lo = 3.0, hi = 4.5;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (bessel_j1_quadrature(lo) * bessel_j1_quadrature(mid) <= 0.0 ? hi : lo) = mid;
  }
  const double j1_zero = 0.5 * (lo + hi);
  CHECK(j1_zero == doctest::Approx(3.8317).epsilon(1e-4));
  const double ring_angle = j1_zero / std::numbers::pi * cfg.wavelength_m / (25 * cfg.mirror_pitch_m);
  CHECK(ring_angle == doctest::Approx(2.59e-3).epsilon(0.01));

  const auto disk = analytic_far_field(ShapeKind::Circle, 25, cfg);
  const int ring_bin = int(std::lround(ring_angle / disk.angle_per_bin));
  const double peak = disk.at(c0, c0);
  CHECK(disk.at(c0, c0 + ring_bin) < 1e-5 * peak);
  CHECK(disk.at(c0, c0 + ring_bin) < disk.at(c0, c0 + ring_bin - 4));
  CHECK(disk.at(c0, c0 + ring_bin) < disk.at(c0, c0 + ring_bin + 4));
  // Radially symmetric.
  CHECK(disk.at(c0 + 30, c0) == doctest::Approx(disk.at(c0, c0 + 30)));

  CHECK_THROWS_AS(analytic_far_field(ShapeKind::Triangle, 15, cfg), UnsupportedOracleError);
}

TEST_CASE("simulated and closed-form square overlap above 0.9 on the crop") {
  const OpticalConfig cfg;
  const auto sim = center_crop(far_field(single(ShapeKind::Square, 11), cfg), cfg.crop_size);
  const auto theory = center_crop(analytic_far_field(ShapeKind::Square, 11, cfg), cfg.crop_size);
  CHECK(overlap(sim, theory) > 0.9);
}

TEST_CASE("angular calibration of the default crop") {
  const OpticalConfig cfg;
  const double half = 200.0 * cfg.wavelength_m / (cfg.pad_size * cfg.mirror_pitch_m);
  CHECK(cfg.crop_half_angle_rad() == doctest::Approx(half));
  CHECK(cfg.crop_half_angle_rad() == doctest::Approx(5.19e-3).epsilon(0.005));
  CHECK(cfg.crop_half_angle_deg() == doctest::Approx(0.297).epsilon(0.005));
  CHECK(std::abs(cfg.crop_half_angle_deg() - 0.26) / 0.26 <= 0.15);
}

TEST_CASE("configuration errors") {
  OpticalConfig cfg = small_config(64, 32);
  CHECK_THROWS_AS(far_field(random_mask(1, 80, 10), cfg), ConfigError);
  CHECK_THROWS_AS(far_field_window(random_mask(1, 10, 80), cfg), ConfigError);
  cfg.crop_size = 128;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  OpticalConfig def;
  CHECK_NOTHROW(def.validate_for_grid(484, 861, 25));
  def.pad_size = 512;
  CHECK_THROWS_AS(def.validate_for_grid(484, 861, 25), ConfigError);
  OpticalConfig exact;
  exact.pad_size = 2340;
  CHECK_NOTHROW(exact.validate());
  CHECK(exact.crop_half_angle_deg() == doctest::Approx(0.26).epsilon(0.01));
}

TEST_CASE("PGM and CSV export") {
  const auto dir = std::filesystem::temp_directory_path() / "slda_optics_test";
  std::filesystem::create_directories(dir);
  OpticalConfig cfg;
  const auto frame = capture_window(far_field_window(single(ShapeKind::Circle, 15), cfg), cfg);
  write_pgm(dir / "f.pgm", frame);
  const auto back = read_pgm(dir / "f.pgm");
  CHECK(back.size == 400);
  CHECK(back.image == frame.image);
  CHECK(std::filesystem::file_size(dir / "f.pgm") == 400u * 400u + std::string("P5\n400 400\n255\n").size());

  OpticalConfig tiny = small_config(8, 4);
  const auto p = far_field(random_mask(2, 3, 3), tiny);
  write_csv(dir / "p.csv", p);
  std::ifstream in(dir / "p.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
  }
  CHECK(lines == 8);
  std::filesystem::remove_all(dir);
}
