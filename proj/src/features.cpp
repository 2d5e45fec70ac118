#include "slda/features.hpp"

#include <cmath>

#include "slda/error.hpp"

namespace slda {

namespace {

template <typename T>
Downsampled block_means(std::span<const T> image, int rows, int cols) {
  if (rows != kFrameSize || cols != kFrameSize ||
      image.size() != std::size_t(kFrameSize) * kFrameSize)
    throw DimensionError("downsample expects a " + std::to_string(kFrameSize) + "x" +
                         std::to_string(kFrameSize) + " image, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  Downsampled out{};
  constexpr double inv = 1.0 / (double(kBlockSize) * kBlockSize);
  for (int bi = 0; bi < kDownsampledSize; ++bi)
    for (int bj = 0; bj < kDownsampledSize; ++bj) {
      double sum = 0.0;
      for (int r = bi * kBlockSize; r < (bi + 1) * kBlockSize; ++r)
        for (int c = bj * kBlockSize; c < (bj + 1) * kBlockSize; ++c)
          sum += double(image[std::size_t(r) * cols + c]);
      out[std::size_t(bi) * kDownsampledSize + bj] = sum * inv;
    }
  return out;
}

}  // namespace

Downsampled downsample(std::span<const std::uint16_t> image, int rows, int cols) {
  return block_means(image, rows, cols);
}

Downsampled downsample(std::span<const double> image, int rows, int cols) {
  return block_means(image, rows, cols);
}

FeatureVector build_v1(const CameraFrame& frame) {
  const Downsampled ds = downsample(std::span<const std::uint16_t>(frame.image), frame.size, frame.size);
  FeatureVector v{};
  std::copy(ds.begin(), ds.end(), v.begin());
  v[kImageFeatures] = frame.power_reading;
  return v;
}

FeatureVector to_storage_precision(const FeatureVector& v) {
  FeatureVector out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    // volatile: GCC 11 at -O3 vectorizes this loop and drops the narrowing
    // for the trailing elements.
    volatile float narrowed = static_cast<float>(v[i]);
    out[i] = narrowed;
  }
  return out;
}

std::vector<double> augment(const FeatureVector& v1, std::span<const OneHotSegment> schema,
                            std::span<const std::optional<std::size_t>> labels) {
  if (labels.size() > schema.size())
    throw LabelError("more labels than one-hot segments in the schema");
  std::vector<double> out(v1.begin(), v1.end());
  bool missing = false;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (!labels[s]) {
      missing = true;
      continue;
    }
    if (missing)
      throw LabelError("label for '" + schema[s].name + "' requires all upstream labels");
    if (*labels[s] >= schema[s].width)
      throw LabelError("label " + std::to_string(*labels[s]) + " outside '" + schema[s].name +
                       "' with " + std::to_string(schema[s].width) + " classes");
    const std::size_t start = out.size();
    out.resize(start + schema[s].width, 0.0);
    out[start + *labels[s]] = 1.0;
  }
  return out;
}

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size())
    throw DimensionError("standardizer mean and deviation lengths differ");
  for (double s : stddev_)
    if (!(s > 0.0)) throw Error("standardizer deviations must be positive");
}

Standardizer Standardizer::fit(std::span<const double> data, std::size_t rows, std::size_t dim,
                               std::size_t scaled_count) {
  if (rows < 2) throw Error("standardizer needs at least 2 training vectors");
  if (data.size() != rows * dim || scaled_count > dim)
    throw DimensionError("standardizer fit data has inconsistent dimensions");
  std::vector<double> mean(scaled_count, 0.0), sd(scaled_count, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < scaled_count; ++f) mean[f] += data[r * dim + f];
  for (double& m : mean) m /= double(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < scaled_count; ++f) {
      const double d = data[r * dim + f] - mean[f];
      sd[f] += d * d;
    }
  for (double& s : sd) {
    s = std::sqrt(s / double(rows));
    if (!(s > 0.0)) s = 1.0;
  }
  return Standardizer(std::move(mean), std::move(sd));
}

void Standardizer::apply(std::span<double> v) const {
  if (v.size() < mean_.size()) throw DimensionError("vector shorter than standardizer");
  for (std::size_t i = 0; i < mean_.size(); ++i) v[i] = (v[i] - mean_[i]) / stddev_[i];
}

void Standardizer::invert(std::span<double> v) const {
  if (v.size() < mean_.size()) throw DimensionError("vector shorter than standardizer");
  for (std::size_t i = 0; i < mean_.size(); ++i) v[i] = v[i] * stddev_[i] + mean_[i];
}

}  // namespace slda
