#pragma once

// Particle scenes on the micromirror grid and their binary apertures.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace slda {

enum class ShapeKind : std::uint8_t { Square = 0, Triangle = 1, Circle = 2 };

inline constexpr std::size_t kShapeKindCount = 3;

std::string_view to_string(ShapeKind kind);
/// Parses "square" / "triangle" / "circle" (case-insensitive); throws ShapeError.
ShapeKind shape_kind_from_string(std::string_view name);
/// Maps the stable serialization code 0/1/2 back to a kind; throws ShapeError.
ShapeKind shape_kind_from_code(int code);

/// Default grid: 3.69 mm x 6.57 mm chip at 7.63 um pitch, rounded down.
inline constexpr int kDefaultGridRows = 484;
inline constexpr int kDefaultGridCols = 861;
inline constexpr int kMinShapeSize = 3;
inline constexpr int kDefaultMaxAttempts = 10'000;

/// Binary size x size stencil of one particle.
struct Stencil {
  int size = 0;
  std::vector<std::uint8_t> cells;  // row-major, 0/1
  std::size_t on_count = 0;

  bool at(int row, int col) const { return cells[std::size_t(row) * size + col] != 0; }
};

/// Builds the footprint of `kind` with characteristic length `size_mirrors`.
///
/// A mirror is on when its center lies inside the shape:
///   Square   fills the box;
///   Circle   centered disk of diameter size;
///   Triangle upright equilateral triangle, horizontal base of length size
///            on the bottom edge of the box.
/// Throws ShapeError when size_mirrors < 3.
Stencil shape_footprint(ShapeKind kind, int size_mirrors);

struct ParticleSpec {
  ShapeKind kind = ShapeKind::Square;
  int size_mirrors = 0;
  int row = 0;  // bounding-box top-left corner, mirror units
  int col = 0;

  friend bool operator==(const ParticleSpec&, const ParticleSpec&) = default;
};

struct ParticleRequest {
  ShapeKind kind = ShapeKind::Square;
  int size_mirrors = 0;
};

struct SceneSpec {
  int grid_rows = kDefaultGridRows;
  int grid_cols = kDefaultGridCols;
  std::vector<ParticleSpec> particles;
  std::uint64_t seed = 0;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct ApertureMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;  // row-major, 0/1
  std::size_t on_count = 0;

  bool at(int row, int col) const { return cells[std::size_t(row) * cols + col] != 0; }
};

/// Draws positions uniformly by rejection sampling so that footprints are
/// pixel-disjoint with at least one free mirror (8-neighbourhood) between
/// any two particles. Deterministic for a fixed seed.
/// Throws PlacementError naming the particle index after `max_attempts`
/// failed draws for one particle, ConfigError for non-positive grid sizes.
SceneSpec place_particles(int grid_rows, int grid_cols,
                          const std::vector<ParticleRequest>& requests, std::uint64_t seed,
                          int max_attempts = kDefaultMaxAttempts);

/// Checks the SceneSpec invariants; throws SceneError.
void validate_scene(const SceneSpec& scene);

/// Stamps every particle stencil onto the grid. Validates the scene first.
ApertureMask rasterize(const SceneSpec& scene);

}  // namespace slda
