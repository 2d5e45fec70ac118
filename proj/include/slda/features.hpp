#pragma once

// Feature extraction: 400x400 frame -> 5x5 block means + power reading.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slda/optics.hpp"

namespace slda {

inline constexpr int kFrameSize = 400;
inline constexpr int kBlockSize = 80;
inline constexpr int kDownsampledSize = kFrameSize / kBlockSize;  // 5
inline constexpr std::size_t kImageFeatures = std::size_t(kDownsampledSize) * kDownsampledSize;
inline constexpr std::size_t kFeatureLength = kImageFeatures + 1;  // + power reading

/// Core vector: 25 row-major block means followed by the power reading.
using FeatureVector = std::array<double, kFeatureLength>;

using Downsampled = std::array<double, kImageFeatures>;

/// Averages each 80x80 block of a 400x400 image. Throws DimensionError.
Downsampled downsample(std::span<const std::uint16_t> image, int rows, int cols);
Downsampled downsample(std::span<const double> image, int rows, int cols);

FeatureVector build_v1(const CameraFrame& frame);

/// Rounds every element through float32, the precision features are stored at.
FeatureVector to_storage_precision(const FeatureVector& v);

/// One upstream stage appended to the core vector as a one-hot block.
struct OneHotSegment {
  std::string name;
  std::size_t width = 0;
};

/// Appends one-hot encodings of `labels` in schema order. A missing label
/// may only be followed by missing labels (cascade ordering), and each
/// present label must lie below its segment width. Throws LabelError.
std::vector<double> augment(const FeatureVector& v1, std::span<const OneHotSegment> schema,
                            std::span<const std::optional<std::size_t>> labels);

/// Per-feature z-scoring of the leading `scaled_count` features; the rest
/// (one-hot blocks) pass through unchanged.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> stddev);

  /// Fits on row-major `rows` x `dim` data. Zero-variance features get a
  /// deviation of 1. Throws Error when fewer than 2 rows are given.
  static Standardizer fit(std::span<const double> data, std::size_t rows, std::size_t dim,
                          std::size_t scaled_count);

  std::size_t scaled_count() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

  /// Standardizes in place; the vector must hold at least scaled_count values.
  void apply(std::span<double> v) const;
  void invert(std::span<double> v) const;

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

}  // namespace slda
