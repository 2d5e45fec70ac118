#include "slda/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "slda/error.hpp"
#include "slda/random.hpp"

namespace slda {

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Square:
      return "square";
    case ShapeKind::Triangle:
      return "triangle";
    case ShapeKind::Circle:
      return "circle";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  if (lower == "square") return ShapeKind::Square;
  if (lower == "triangle") return ShapeKind::Triangle;
  if (lower == "circle") return ShapeKind::Circle;
  throw ShapeError("unknown shape kind '" + std::string(name) + "'");
}

ShapeKind shape_kind_from_code(int code) {
  if (code < 0 || code >= int(kShapeKindCount))
    throw ShapeError("invalid shape code " + std::to_string(code));
  return static_cast<ShapeKind>(code);
}

Stencil shape_footprint(ShapeKind kind, int size_mirrors) {
  if (size_mirrors < kMinShapeSize)
    throw ShapeError("degenerate shape: size " + std::to_string(size_mirrors) + " below " +
                     std::to_string(kMinShapeSize));
  const int s = size_mirrors;
  const double half = 0.5 * s;
  const double height = half * std::sqrt(3.0);
  const double apex_y = s - height;

  Stencil st;
  st.size = s;
  st.cells.assign(std::size_t(s) * s, 0);
  for (int r = 0; r < s; ++r) {
    const double y = r + 0.5;
    for (int c = 0; c < s; ++c) {
      const double x = c + 0.5;
      bool on = false;
      switch (kind) {
        case ShapeKind::Square:
          on = true;
          break;
        case ShapeKind::Circle:
          on = (x - half) * (x - half) + (y - half) * (y - half) <= half * half;
          break;
        case ShapeKind::Triangle:
          on = y >= apex_y && std::abs(x - half) <= (y - apex_y) / std::sqrt(3.0);
          break;
      }
      if (on) {
        st.cells[std::size_t(r) * s + c] = 1;
        ++st.on_count;
      }
    }
  }
  return st;
}

namespace {

// Occupancy grid that also tracks the one-mirror exclusion margin.
class Occupancy {
 public:
  Occupancy(int rows, int cols) : rows_(rows), cols_(cols), blocked_(std::size_t(rows) * cols, 0) {}

  bool fits(const Stencil& st, int row, int col) const {
    for (int r = 0; r < st.size; ++r)
      for (int c = 0; c < st.size; ++c)
        if (st.at(r, c) && blocked_[std::size_t(row + r) * cols_ + (col + c)]) return false;
    return true;
  }

  void stamp(const Stencil& st, int row, int col) {
    for (int r = 0; r < st.size; ++r)
      for (int c = 0; c < st.size; ++c) {
        if (!st.at(r, c)) continue;
        const int rr0 = std::max(row + r - 1, 0), rr1 = std::min(row + r + 1, rows_ - 1);
        const int cc0 = std::max(col + c - 1, 0), cc1 = std::min(col + c + 1, cols_ - 1);
        for (int rr = rr0; rr <= rr1; ++rr)
          for (int cc = cc0; cc <= cc1; ++cc) blocked_[std::size_t(rr) * cols_ + cc] = 1;
      }
  }

 private:
  int rows_, cols_;
  std::vector<std::uint8_t> blocked_;
};

}  // namespace

SceneSpec place_particles(int grid_rows, int grid_cols,
                          const std::vector<ParticleRequest>& requests, std::uint64_t seed,
                          int max_attempts) {
  if (grid_rows <= 0 || grid_cols <= 0)
    throw ConfigError("grid dimensions must be positive");
  if (max_attempts <= 0) throw ConfigError("max_attempts must be positive");

  SceneSpec scene;
  scene.grid_rows = grid_rows;
  scene.grid_cols = grid_cols;
  scene.seed = seed;
  scene.particles.reserve(requests.size());

  Rng rng(seed);
  Occupancy occupancy(grid_rows, grid_cols);
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& req = requests[i];
    const Stencil st = shape_footprint(req.kind, req.size_mirrors);
    if (st.size > grid_rows || st.size > grid_cols)
      throw PlacementError(i, "particle " + std::to_string(i) + " does not fit in the grid");
    const auto row_span = std::uint64_t(grid_rows - st.size + 1);
    const auto col_span = std::uint64_t(grid_cols - st.size + 1);
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      const int row = int(rng.uniform_below(row_span));
      const int col = int(rng.uniform_below(col_span));
      if (!occupancy.fits(st, row, col)) continue;
      occupancy.stamp(st, row, col);
      scene.particles.push_back({req.kind, req.size_mirrors, row, col});
      placed = true;
    }
    if (!placed)
      throw PlacementError(i, "could not place particle " + std::to_string(i) + " after " +
                                  std::to_string(max_attempts) + " attempts");
  }
  return scene;
}

void validate_scene(const SceneSpec& scene) {
  if (scene.grid_rows <= 0 || scene.grid_cols <= 0)
    throw SceneError("grid dimensions must be positive");
  if (scene.particles.empty()) throw SceneError("scene has no particles");
  std::vector<std::uint8_t> seen(std::size_t(scene.grid_rows) * scene.grid_cols, 0);
  for (std::size_t i = 0; i < scene.particles.size(); ++i) {
    const auto& p = scene.particles[i];
    const Stencil st = shape_footprint(p.kind, p.size_mirrors);
    if (p.row < 0 || p.col < 0 || p.row + st.size > scene.grid_rows ||
        p.col + st.size > scene.grid_cols)
      throw SceneError("particle " + std::to_string(i) + " lies outside the grid");
    for (int r = 0; r < st.size; ++r)
      for (int c = 0; c < st.size; ++c) {
        if (!st.at(r, c)) continue;
        auto& cell = seen[std::size_t(p.row + r) * scene.grid_cols + (p.col + c)];
        if (cell) throw SceneError("particle " + std::to_string(i) + " overlaps another particle");
        cell = 1;
      }
  }
}

ApertureMask rasterize(const SceneSpec& scene) {
  validate_scene(scene);
  ApertureMask mask;
  mask.rows = scene.grid_rows;
  mask.cols = scene.grid_cols;
  mask.cells.assign(std::size_t(mask.rows) * mask.cols, 0);
  for (const auto& p : scene.particles) {
    const Stencil st = shape_footprint(p.kind, p.size_mirrors);
    for (int r = 0; r < st.size; ++r)
      for (int c = 0; c < st.size; ++c)
        if (st.at(r, c)) mask.cells[std::size_t(p.row + r) * mask.cols + (p.col + c)] = 1;
  }
  mask.on_count = std::size_t(std::count(mask.cells.begin(), mask.cells.end(), 1));
  return mask;
}

}  // namespace slda
