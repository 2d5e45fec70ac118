#include "slda/optics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>

#include "slda/error.hpp"
#include "slda/random.hpp"

namespace slda {

namespace {

// fftw_malloc'd storage; FFTW's new-array execute calls need the alignment.
template <typename T>
class FftwBuffer {
 public:
  explicit FftwBuffer(std::size_t n)
      : ptr_(static_cast<T*>(fftw_malloc(sizeof(T) * n))), n_(n) {
    if (!ptr_) throw std::bad_alloc();
    std::memset(static_cast<void*>(ptr_), 0, sizeof(T) * n);
  }
  ~FftwBuffer() { fftw_free(ptr_); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;

  T* data() { return ptr_; }
  std::size_t size() const { return n_; }

 private:
  T* ptr_;
  std::size_t n_;
};

// The FFTW planner is not thread-safe; plans are created once under a lock
// and then executed concurrently through the new-array interface.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan r2c_2d(int n) {
    return get(r2c_2d_, n, 0, [n] {
      FftwBuffer<double> in(std::size_t(n) * n);
      FftwBuffer<fftw_complex> out(std::size_t(n) * (n / 2 + 1));
      return fftw_plan_dft_r2c_2d(n, n, in.data(), out.data(), FFTW_ESTIMATE);
    });
  }

  fftw_plan r2c_1d(int n) {
    return get(r2c_1d_, n, 0, [n] {
      FftwBuffer<double> in(n);
      FftwBuffer<fftw_complex> out(n / 2 + 1);
      return fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE);
    });
  }

  // `howmany` contiguous out-of-place columns of length n.
  fftw_plan c2c_columns(int n, int howmany) {
    return get(c2c_many_, n, howmany, [n, howmany] {
      FftwBuffer<fftw_complex> in(std::size_t(n) * howmany);
      FftwBuffer<fftw_complex> out(std::size_t(n) * howmany);
      return fftw_plan_many_dft(1, &n, howmany, in.data(), nullptr, 1, n, out.data(), nullptr,
                                1, n, FFTW_FORWARD, FFTW_ESTIMATE);
    });
  }

 private:
  using Key = std::pair<int, int>;

  template <typename Make>
  fftw_plan get(std::map<Key, fftw_plan>& table, int n, int m, Make make) {
    std::lock_guard lock(mutex_);
    auto it = table.find({n, m});
    if (it != table.end()) return it->second;
    fftw_plan plan = make();
    if (!plan) throw ConfigError("FFTW could not create a plan for size " + std::to_string(n));
    table.emplace(Key{n, m}, plan);
    return plan;
  }

  std::mutex mutex_;
  std::map<Key, fftw_plan> r2c_2d_, r2c_1d_, c2c_many_;
};

void check_mask_fits(const ApertureMask& mask, const OpticalConfig& cfg) {
  cfg.validate();
  if (mask.rows > cfg.pad_size || mask.cols > cfg.pad_size)
    throw ConfigError("mask of " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                      " does not fit in a " + std::to_string(cfg.pad_size) + " padded window");
}

// Per-thread scratch for far_field_window. Reusing it avoids allocating
// ~2 x 13 MB of aligned memory per frame, which fragments the heap badly
// when millions of small record allocations interleave with it.
struct WindowWorkspace {
  int n = 0;
  int crop = 0;
  std::unique_ptr<FftwBuffer<double>> row_in;
  std::unique_ptr<FftwBuffer<fftw_complex>> row_out;
  std::unique_ptr<FftwBuffer<fftw_complex>> columns;   // column-major input, sparse in rows
  std::unique_ptr<FftwBuffer<fftw_complex>> spectrum;  // column-major output
  std::vector<int> dirty_rows;                         // rows of `columns` holding data

  void prepare(int pad, int crop_size) {
    if (pad == n && crop_size == crop) {
      for (int r : dirty_rows)
        for (int j = 0; j < crop; ++j) {
          fftw_complex& z = columns->data()[std::size_t(j) * n + r];
          z[0] = z[1] = 0.0;
        }
    } else {
      n = pad;
      crop = crop_size;
      row_in = std::make_unique<FftwBuffer<double>>(n);
      row_out = std::make_unique<FftwBuffer<fftw_complex>>(n / 2 + 1);
      columns = std::make_unique<FftwBuffer<fftw_complex>>(std::size_t(n) * crop);
      spectrum = std::make_unique<FftwBuffer<fftw_complex>>(std::size_t(n) * crop);
    }
    dirty_rows.clear();
  }
};

inline double norm2(const fftw_complex& z) { return z[0] * z[0] + z[1] * z[1]; }

inline int wrap(int k, int n) { return ((k % n) + n) % n; }

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

double airy_amplitude(double v) { return v == 0.0 ? 1.0 : 2.0 * std::cyl_bessel_j(1.0, v) / v; }

}  // namespace

double OpticalConfig::crop_half_angle_deg() const {
  return crop_half_angle_rad() * 180.0 / std::numbers::pi;
}

void OpticalConfig::validate() const {
  if (!(wavelength_m > 0.0)) throw ConfigError("wavelength must be positive");
  if (!(mirror_pitch_m > 0.0)) throw ConfigError("mirror pitch must be positive");
  if (pad_size < 2 || pad_size % 2 != 0) throw ConfigError("pad size must be even and >= 2");
  if (crop_size < 2 || crop_size % 2 != 0) throw ConfigError("crop size must be even and >= 2");
  if (crop_size > pad_size) throw ConfigError("crop size exceeds pad size");
  if (bit_depth < 1 || bit_depth > 16) throw ConfigError("bit depth must lie in 1..16");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
}

void OpticalConfig::validate_for_grid(int grid_rows, int grid_cols, int largest_footprint) const {
  validate();
  if (std::max(grid_rows, grid_cols) + largest_footprint > pad_size)
    throw ConfigError("pad size " + std::to_string(pad_size) +
                      " is smaller than grid extent plus largest footprint");
}

std::uint64_t OpticalConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv_mix(h, &wavelength_m, sizeof wavelength_m);
  fnv_mix(h, &mirror_pitch_m, sizeof mirror_pitch_m);
  fnv_mix(h, &pad_size, sizeof pad_size);
  fnv_mix(h, &crop_size, sizeof crop_size);
  fnv_mix(h, &bit_depth, sizeof bit_depth);
  fnv_mix(h, &noise_sigma, sizeof noise_sigma);
  return h;
}

FarFieldPattern far_field(const ApertureMask& mask, const OpticalConfig& cfg) {
  check_mask_fits(mask, cfg);
  const int n = cfg.pad_size;
  const int half_cols = n / 2 + 1;
  FftwBuffer<double> in(std::size_t(n) * n);
  FftwBuffer<fftw_complex> out(std::size_t(n) * half_cols);
  for (int r = 0; r < mask.rows; ++r)
    for (int c = 0; c < mask.cols; ++c) in.data()[std::size_t(r) * n + c] = mask.at(r, c);
  fftw_execute_dft_r2c(PlanCache::instance().r2c_2d(n), in.data(), out.data());

  FarFieldPattern pattern;
  pattern.size = n;
  pattern.angle_per_bin = cfg.angle_per_bin();
  pattern.intensity.assign(std::size_t(n) * n, 0.0);
  const fftw_complex* spec = out.data();
  for (int kr = 0; kr < n; ++kr) {
    const int row = wrap(kr + n / 2, n);
    for (int kc = 0; kc < n; ++kc) {
      // Hermitian symmetry fills the half plane FFTW does not store.
      const double v = kc < half_cols ? norm2(spec[std::size_t(kr) * half_cols + kc])
                                      : norm2(spec[std::size_t(wrap(-kr, n)) * half_cols + (n - kc)]);
      pattern.intensity[std::size_t(row) * n + wrap(kc + n / 2, n)] = v;
    }
  }
  double total = 0.0;
  for (double v : pattern.intensity) total += v;
  pattern.total_power = total;
  return pattern;
}

std::vector<double> far_field_window(const ApertureMask& mask, const OpticalConfig& cfg) {
  check_mask_fits(mask, cfg);
  const int n = cfg.pad_size;
  const int crop = cfg.crop_size;
  const int half = crop / 2;
  const int half_cols = n / 2 + 1;

  auto& plans = PlanCache::instance();
  fftw_plan row_plan = plans.r2c_1d(n);
  fftw_plan col_plan = plans.c2c_columns(n, crop);

  thread_local WindowWorkspace ws;
  ws.prepare(n, crop);
  double* row_in = ws.row_in->data();
  fftw_complex* row_out = ws.row_out->data();
  // Column-major: column j (frequency j - half) is contiguous over the n rows.
  fftw_complex* columns = ws.columns->data();
  fftw_complex* spectrum = ws.spectrum->data();

  for (int r = 0; r < mask.rows; ++r) {
    const std::uint8_t* src = mask.cells.data() + std::size_t(r) * mask.cols;
    if (std::none_of(src, src + mask.cols, [](std::uint8_t v) { return v != 0; })) continue;
    std::fill(row_in, row_in + n, 0.0);
    for (int c = 0; c < mask.cols; ++c) row_in[c] = src[c];
    fftw_execute_dft_r2c(row_plan, row_in, row_out);
    for (int j = 0; j < crop; ++j) {
      const int k = j - half;
      fftw_complex& dst = columns[std::size_t(j) * n + r];
      const fftw_complex& z = row_out[std::abs(k)];
      dst[0] = z[0];
      dst[1] = k < 0 ? -z[1] : z[1];
    }
    ws.dirty_rows.push_back(r);
  }
  fftw_execute_dft(col_plan, columns, spectrum);

  std::vector<double> window(std::size_t(crop) * crop);
  for (int i = 0; i < crop; ++i) {
    const int kr = wrap(i - half, n);
    for (int j = 0; j < crop; ++j)
      window[std::size_t(i) * crop + j] = norm2(spectrum[std::size_t(j) * n + kr]);
  }
  return window;
}

std::vector<double> center_crop(const FarFieldPattern& pattern, int crop_size) {
  if (crop_size > pattern.size || crop_size <= 0)
    throw DimensionError("crop of " + std::to_string(crop_size) + " from a pattern of size " +
                         std::to_string(pattern.size));
  const int start = pattern.size / 2 - crop_size / 2;
  std::vector<double> out(std::size_t(crop_size) * crop_size);
  for (int i = 0; i < crop_size; ++i)
    std::copy_n(pattern.intensity.begin() + std::ptrdiff_t(start + i) * pattern.size + start,
                crop_size, out.begin() + std::ptrdiff_t(i) * crop_size);
  return out;
}

CameraFrame capture_window(std::span<const double> window, const OpticalConfig& cfg,
                           std::uint64_t noise_seed) {
  cfg.validate();
  const std::size_t expected = std::size_t(cfg.crop_size) * cfg.crop_size;
  if (window.size() != expected)
    throw DimensionError("capture expects a " + std::to_string(cfg.crop_size) + "x" +
                         std::to_string(cfg.crop_size) + " window");
  CameraFrame frame;
  frame.size = cfg.crop_size;
  frame.image.assign(expected, 0);

  double power = 0.0;
  for (double v : window) power += v;
  frame.power_reading = power;

  std::vector<double> signal(window.begin(), window.end());
  double peak = *std::max_element(signal.begin(), signal.end());
  if (cfg.noise_sigma > 0.0 && peak > 0.0) {
    Rng rng(noise_seed);
    const double sd = cfg.noise_sigma * peak;
    for (double& v : signal) v = std::max(0.0, v + sd * rng.normal());
    peak = *std::max_element(signal.begin(), signal.end());
  }
  if (!(peak > 0.0)) return frame;

  // Divide before scaling so the peak maps to exactly max_pixel_value.
  const double top = cfg.max_pixel_value();
  for (std::size_t i = 0; i < expected; ++i)
    frame.image[i] = static_cast<std::uint16_t>(std::floor(signal[i] / peak * top));
  return frame;
}

CameraFrame capture(const FarFieldPattern& pattern, const OpticalConfig& cfg,
                    std::uint64_t noise_seed) {
  return capture_window(center_crop(pattern, cfg.crop_size), cfg, noise_seed);
}

double overlap(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("overlap inputs differ in size");
  double cross = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0) throw OverlapError("overlap inputs must be non-negative");
    // sqrt(x * x) == x in IEEE arithmetic, so identical inputs give exactly 1.
    cross += std::sqrt(a[i] * b[i]);
    sum_a += a[i];
    sum_b += b[i];
  }
  if (!(sum_a > 0.0) || !(sum_b > 0.0)) throw OverlapError("overlap undefined for zero-total input");
  return std::clamp(cross * cross / (sum_a * sum_b), 0.0, 1.0);
}

FarFieldPattern analytic_far_field(ShapeKind kind, int size_mirrors, const OpticalConfig& cfg) {
  cfg.validate();
  if (kind == ShapeKind::Triangle)
    throw UnsupportedOracleError("no closed-form far field for triangles");
  if (size_mirrors < kMinShapeSize) throw ShapeError("degenerate shape size");
  const int n = cfg.pad_size;
  const double s = size_mirrors;
  const double scale = std::numbers::pi * s / n;

  FarFieldPattern pattern;
  pattern.size = n;
  pattern.angle_per_bin = cfg.angle_per_bin();
  pattern.intensity.resize(std::size_t(n) * n);
  if (kind == ShapeKind::Square) {
    std::vector<double> axis(n);
    for (int i = 0; i < n; ++i) axis[i] = s * sinc(scale * (i - n / 2));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double amp = axis[i] * axis[j];
        pattern.intensity[std::size_t(i) * n + j] = amp * amp;
      }
  } else {
    const double area = std::numbers::pi * s * s / 4.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double rho = std::hypot(double(i - n / 2), double(j - n / 2));
        const double amp = area * airy_amplitude(scale * rho);
        pattern.intensity[std::size_t(i) * n + j] = amp * amp;
      }
  }
  double total = 0.0;
  for (double v : pattern.intensity) total += v;
  pattern.total_power = total;
  return pattern;
}

void write_pgm(const std::filesystem::path& path, const CameraFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "P5\n" << frame.size << ' ' << frame.size << "\n255\n";
  std::vector<unsigned char> bytes(frame.image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (frame.image[i] > 255) throw FormatError("PGM export requires an 8-bit frame");
    bytes[i] = static_cast<unsigned char>(frame.image[i]);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

CameraFrame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  auto next_token = [&in]() {
    std::string tok;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> tok;
    return tok;
  };
  if (next_token() != "P5") throw FormatError(path.string() + " is not a binary PGM (P5)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw FormatError("malformed PGM header in " + path.string());
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255)
    throw FormatError("unsupported PGM geometry or maxval in " + path.string());
  if (width != height)
    throw DimensionError("frame must be square, got " + std::to_string(width) + "x" +
                         std::to_string(height));
  in.get();
  std::vector<unsigned char> bytes(std::size_t(width) * height);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (in.gcount() != std::streamsize(bytes.size()))
    throw FormatError("truncated PGM payload in " + path.string());
  CameraFrame frame;
  frame.size = width;
  frame.image.assign(bytes.begin(), bytes.end());
  return frame;
}

void write_csv(const std::filesystem::path& path, const FarFieldPattern& pattern) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (int i = 0; i < pattern.size; ++i) {
    for (int j = 0; j < pattern.size; ++j) {
      if (j) out << ',';
      out << pattern.at(i, j);
    }
    out << '\n';
  }
}

}  // namespace slda
