#pragma once

// Far-field (Fraunhofer) propagation of an aperture mask, camera and power
// meter models, and the pattern overlap parameter.
//
// DFT convention, fixed throughout: the mask is zero-padded into a P x P
// window at the origin and transformed with the unnormalized forward DFT
//
//     F(kr, kc) = sum_{r,c} m(r, c) exp(-2 pi i (kr r + kc c) / P),
//
// so Parseval reads  sum |F|^2 = P^2 * sum |m|^2 = P^2 * on_count.
// Intensity arrays are stored zero-frequency centered: element (i, j) holds
// frequency (i - P/2, j - P/2). One frequency bin corresponds to an angle of
// wavelength / (P * mirror_pitch) radians.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "slda/scene.hpp"

namespace slda {

struct OpticalConfig {
  double wavelength_m = 405e-9;
  double mirror_pitch_m = 7.63e-6;
  int pad_size = 2048;
  int crop_size = 400;
  int bit_depth = 8;
  /// Standard deviation of additive camera noise relative to the crop peak
  /// (applied before quantization); 0 disables it.
  double noise_sigma = 0.0;

  double angle_per_bin() const { return wavelength_m / (double(pad_size) * mirror_pitch_m); }
  double crop_half_angle_rad() const { return 0.5 * crop_size * angle_per_bin(); }
  double crop_half_angle_deg() const;
  int max_pixel_value() const { return (1 << bit_depth) - 1; }

  /// Throws ConfigError on non-physical values.
  void validate() const;
  /// Additionally checks that a grid_rows x grid_cols mask plus the largest
  /// footprint fits in the padded window.
  void validate_for_grid(int grid_rows, int grid_cols, int largest_footprint) const;
  /// Stable 64-bit FNV-1a hash of every field, for dataset manifests.
  std::uint64_t hash() const;

  friend bool operator==(const OpticalConfig&, const OpticalConfig&) = default;
};

struct FarFieldPattern {
  int size = 0;                   // P
  std::vector<double> intensity;  // P x P, row-major, zero frequency at (P/2, P/2)
  double angle_per_bin = 0.0;
  double total_power = 0.0;

  double at(int row, int col) const { return intensity[std::size_t(row) * size + col]; }
};

struct CameraFrame {
  int size = 0;  // crop_size
  std::vector<std::uint16_t> image;  // size x size, row-major
  double power_reading = 0.0;

  std::uint16_t at(int row, int col) const { return image[std::size_t(row) * size + col]; }
};

/// |centered DFT of the zero-padded mask|^2 over the full P x P plane.
/// Throws ConfigError if the mask does not fit in the padded window.
FarFieldPattern far_field(const ApertureMask& mask, const OpticalConfig& cfg);

/// The same intensities as far_field, restricted to the centered
/// crop_size x crop_size window (row-major). Only the mask rows that contain
/// mirrors and the crop's frequency columns are transformed, so this is the
/// path used for bulk dataset generation.
std::vector<double> far_field_window(const ApertureMask& mask, const OpticalConfig& cfg);

/// Centered crop_size x crop_size window of a full pattern.
std::vector<double> center_crop(const FarFieldPattern& pattern, int crop_size);

/// Camera model: crop, read the power meter, max-normalize and floor to
/// bit_depth. An all-zero crop gives an all-zero image. When
/// cfg.noise_sigma > 0 the image (not the power reading) receives Gaussian
/// noise drawn from `noise_seed`.
CameraFrame capture(const FarFieldPattern& pattern, const OpticalConfig& cfg,
                    std::uint64_t noise_seed = 0);

/// Camera model applied to an already cropped window.
CameraFrame capture_window(std::span<const double> window, const OpticalConfig& cfg,
                           std::uint64_t noise_seed = 0);

/// Overlap parameter between two intensity distributions:
///   [sum sqrt(a) sqrt(b)]^2 / (sum a * sum b), in [0, 1].
/// Throws DimensionError on size mismatch, OverlapError on negative entries
/// or a zero total.
double overlap(std::span<const double> a, std::span<const double> b);

/// Closed-form Fraunhofer intensity of a single Square (separable sinc^2) or
/// Circle (Airy) of characteristic length `size_mirrors`, sampled on the
/// same centered grid as far_field and scaled so the zero-frequency value
/// equals (aperture area in mirrors)^2. Throws UnsupportedOracleError for
/// triangles.
FarFieldPattern analytic_far_field(ShapeKind kind, int size_mirrors, const OpticalConfig& cfg);

/// Binary PGM (P5, maxval 255). Requires an 8-bit frame.
void write_pgm(const std::filesystem::path& path, const CameraFrame& frame);
/// Reads a P5 PGM with maxval <= 255; throws FormatError.
CameraFrame read_pgm(const std::filesystem::path& path);
/// Headerless row-major CSV of the full intensity array.
void write_csv(const std::filesystem::path& path, const FarFieldPattern& pattern);

}  // namespace slda
