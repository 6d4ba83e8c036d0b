#pragma once

#include "scenediff/scene_model.hpp"

#include <array>
#include <span>
#include <vector>

namespace scenediff {

// Horizontal projection of a box: four (x, z) corners, counter-clockwise.
using Footprint = std::array<Vec2, 4>;

// Throws DegenerateInputError for boxes with a non-positive horizontal extent
// (this covers the EMPTY placeholder, whose size is zero).
Footprint footprint(const Box& box);

double polygon_area(std::span<const Vec2> polygon);

// Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

double footprint_intersection_area(const Box& a, const Box& b);
// Length of the overlap of [y - h/2, y + h/2] intervals.
double vertical_overlap(const Box& a, const Box& b);
double intersection_volume(const Box& a, const Box& b);

// Exact 3D IoU of two yaw-only boxes. Throws DegenerateInputError on zero volume.
double iou3d(const Box& a, const Box& b);

// 2D signed distance from an (x, z) point to the box footprint, negative inside.
double sdf_footprint(const Vec2& p, const Box& box);

// Exact 3D signed distance from a point to an oriented box, negative inside.
double sdf_point_box(const Vec3& p, const Box& box);
// Minimum over non-EMPTY objects. Throws DegenerateInputError on an
// all-EMPTY scene.
double sdf_point_scene(const Vec3& p, const Scene& scene);

enum class RasterMode { hard, soft };

// Default soft temperature: half a pixel.
double default_temperature(const GridMask& grid);

// Dense rasterization onto the grid lattice. hard: 1 iff the pixel center
// lies inside the (closed) footprint. soft: sigmoid(-sdf / tau).
std::vector<double> rasterize(const Box& box, const GridMask& grid, RasterMode mode,
                              double tau = 0.0);

// Pixel window [row0, row0 + rows) x [col0, col0 + cols) on the grid lattice.
// Windows may extend past the grid when not clipped.
struct PixelWindow {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  bool empty() const { return rows <= 0 || cols <= 0; }
  PixelWindow intersect(const PixelWindow& o) const;
};

// Hard raster restricted to the footprint's bounding window.
struct HardRaster {
  PixelWindow window;
  std::vector<std::uint8_t> inside;  // rows * cols, row-major

  long long count() const;
};

HardRaster hard_raster(const Box& box, const GridMask& grid, bool clip_to_grid = true);

// Soft raster over the footprint window padded by 20 tau, with derivatives
// of every value w.r.t. location x/z, yaw, width (size x) and depth (size z).
struct SoftRaster {
  PixelWindow window;
  std::vector<double> value;
  std::vector<double> d_x;
  std::vector<double> d_z;
  std::vector<double> d_yaw;
  std::vector<double> d_width;
  std::vector<double> d_depth;
};

SoftRaster soft_raster(const Box& box, const GridMask& grid, double tau, bool clip_to_grid = true);

// Sum of soft values over the set pixels of `mask`, with the same partials.
struct SoftCoverage {
  double value = 0.0;
  double d_x = 0.0;
  double d_z = 0.0;
  double d_yaw = 0.0;
  double d_width = 0.0;
  double d_depth = 0.0;
};

SoftCoverage soft_masked_sum(const Box& box, const GridMask& mask, double tau);

// Greedy max-min subset of `candidates`, seeded by candidates[0]; ties go to
// the lowest index. When n exceeds the candidate count the selection order
// repeats from the start.
std::vector<int> farthest_point_order(std::span<const Vec2> candidates, int n);

// FPS over free pixel centers (row-major order, so the seed is the
// lexicographically first free pixel), lifted to 3D with y = 0. Throws
// DegenerateInputError when the mask has no free pixel.
Eigen::MatrixX3d farthest_point_sample(const GridMask& free, int n = kLayoutPointCount);

// Layout points for a condition: FPS over floor (x) (1 - free_space), the
// floor area still available for furniture.
Eigen::MatrixX3d layout_points_for(const GridMask& floor, const GridMask& free_space,
                                   int n = kLayoutPointCount);

}  // namespace scenediff
