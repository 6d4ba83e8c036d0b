#include "scenediff/geometry.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scenediff {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

void require_footprint(const Box& box) {
  if (!(box.size.x() > 0) || !(box.size.z() > 0)) {
    throw DegenerateInputError("box has a degenerate footprint (EMPTY or zero size)");
  }
}

// Local (footprint-frame) coordinates of a world (x, z) point.
Vec2 to_local(const Vec2& p, const Box& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double dx = p.x() - box.location.x(), dz = p.y() - box.location.z();
  return {c * dx + s * dz, -s * dx + c * dz};
}

double sigmoid(double v) {
  if (v >= 0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Lattice index range whose pixel centers fall in [lo, hi].
std::pair<int, int> lattice_range(double lo, double hi, const GridMask& grid) {
  const double px = grid.pixel_size();
  const double half = grid.world_extent() / 2;
  const int first = static_cast<int>(std::ceil((lo + half) / px - 0.5));
  const int last = static_cast<int>(std::floor((hi + half) / px - 0.5));
  return {first, last};
}

PixelWindow window_for(const Box& box, const GridMask& grid, double margin, bool clip) {
  const Footprint fp = footprint(box);
  double xmin = fp[0].x(), xmax = fp[0].x(), zmin = fp[0].y(), zmax = fp[0].y();
  for (const auto& c : fp) {
    xmin = std::min(xmin, c.x());
    xmax = std::max(xmax, c.x());
    zmin = std::min(zmin, c.y());
    zmax = std::max(zmax, c.y());
  }
  auto [c0, c1] = lattice_range(xmin - margin, xmax + margin, grid);
  auto [r0, r1] = lattice_range(zmin - margin, zmax + margin, grid);
  if (clip) {
    c0 = std::max(c0, 0);
    r0 = std::max(r0, 0);
    c1 = std::min(c1, grid.resolution() - 1);
    r1 = std::min(r1, grid.resolution() - 1);
  }
  return PixelWindow{r0, c0, std::max(0, r1 - r0 + 1), std::max(0, c1 - c0 + 1)};
}

}  // namespace

Footprint footprint(const Box& box) {
  require_footprint(box);
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hw = box.size.x() / 2, hd = box.size.z() / 2;
  const std::array<Vec2, 4> local = {Vec2(-hw, -hd), Vec2(hw, -hd), Vec2(hw, hd), Vec2(-hw, hd)};
  Footprint out;
  for (int i = 0; i < 4; ++i) {
    out[i] = Vec2(box.location.x() + c * local[i].x() - s * local[i].y(),
                  box.location.z() + s * local[i].x() + c * local[i].y());
  }
  return out;
}

double polygon_area(std::span<const Vec2> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) twice += cross(polygon[i], polygon[(i + 1) % n]);
  return 0.5 * twice;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> output(subject.begin(), subject.end());
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % m];
    const Vec2 edge = b - a;
    auto side = [&](const Vec2& p) { return cross(edge, p - a); };
    std::vector<Vec2> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2& cur = input[i];
      const Vec2& prev = input[(i + input.size() - 1) % input.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0) {
        if (sp < 0) output.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        output.push_back(cur);
      } else if (sp >= 0) {
        output.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
  }
  return output;
}

double footprint_intersection_area(const Box& a, const Box& b) {
  const Footprint fa = footprint(a);
  const Footprint fb = footprint(b);
  // Cheap reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.size.x(), a.size.z());
  const double rb = 0.5 * std::hypot(b.size.x(), b.size.z());
  const double dist = std::hypot(a.location.x() - b.location.x(), a.location.z() - b.location.z());
  if (dist >= ra + rb) return 0.0;
  const auto poly = clip_convex(fa, fb);
  return std::max(0.0, polygon_area(poly));
}

double vertical_overlap(const Box& a, const Box& b) {
  const double lo = std::max(a.location.y() - a.size.y() / 2, b.location.y() - b.size.y() / 2);
  const double hi = std::min(a.location.y() + a.size.y() / 2, b.location.y() + b.size.y() / 2);
  return std::max(0.0, hi - lo);
}

double intersection_volume(const Box& a, const Box& b) {
  const double h = vertical_overlap(a, b);
  if (h <= 0) return 0.0;
  return footprint_intersection_area(a, b) * h;
}

double iou3d(const Box& a, const Box& b) {
  const double va = a.volume(), vb = b.volume();
  if (!(va > 0) || !(vb > 0)) throw DegenerateInputError("iou3d on a zero-volume box");
  const double inter = intersection_volume(a, b);
  const double uni = va + vb - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double sdf_footprint(const Vec2& p, const Box& box) {
  const Vec2 q = to_local(p, box);
  const double dx = std::abs(q.x()) - box.size.x() / 2;
  const double dz = std::abs(q.y()) - box.size.z() / 2;
  const double ox = std::max(dx, 0.0), oz = std::max(dz, 0.0);
  return std::hypot(ox, oz) + std::min(std::max(dx, dz), 0.0);
}

double sdf_point_box(const Vec3& p, const Box& box) {
  const Vec2 q = to_local(Vec2(p.x(), p.z()), box);
  const Vec3 d(std::abs(q.x()) - box.size.x() / 2, std::abs(p.y() - box.location.y()) - box.size.y() / 2,
               std::abs(q.y()) - box.size.z() / 2);
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

double sdf_point_scene(const Vec3& p, const Scene& scene) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < scene.capacity(); ++i) {
    if (scene.is_empty(i)) continue;
    best = std::min(best, sdf_point_box(p, scene.objects[i].box));
  }
  if (!std::isfinite(best)) throw DegenerateInputError("signed distance to a scene with no objects");
  return best;
}

double default_temperature(const GridMask& grid) { return grid.pixel_size() / 2; }

PixelWindow PixelWindow::intersect(const PixelWindow& o) const {
  const int r0 = std::max(row0, o.row0), c0 = std::max(col0, o.col0);
  const int r1 = std::min(row0 + rows, o.row0 + o.rows), c1 = std::min(col0 + cols, o.col0 + o.cols);
  return PixelWindow{r0, c0, std::max(0, r1 - r0), std::max(0, c1 - c0)};
}

long long HardRaster::count() const {
  long long n = 0;
  for (auto v : inside) n += v;
  return n;
}

HardRaster hard_raster(const Box& box, const GridMask& grid, bool clip_to_grid) {
  HardRaster out;
  out.window = window_for(box, grid, 1e-9, clip_to_grid);
  const auto& w = out.window;
  out.inside.assign(static_cast<std::size_t>(std::max(0, w.rows * w.cols)), 0);
  const double hw = box.size.x() / 2, hd = box.size.z() / 2;
  for (int r = 0; r < w.rows; ++r) {
    const double z = grid.row_center_z(w.row0 + r);
    for (int c = 0; c < w.cols; ++c) {
      const Vec2 q = to_local(Vec2(grid.col_center_x(w.col0 + c), z), box);
      out.inside[r * w.cols + c] = (std::abs(q.x()) <= hw && std::abs(q.y()) <= hd) ? 1 : 0;
    }
  }
  return out;
}

namespace {

struct SoftPixel {
  double value, d_x, d_z, d_yaw, d_width, d_depth;
};

// Soft occupancy of one pixel center and its partials. Beyond 20 tau from the
// boundary the sigmoid is within 2e-9 of 0 or 1 and is snapped there.
struct SoftKernel {
  const Box& box;
  double tau, c, s, hw, hd;

  SoftKernel(const Box& b, double t)
      : box(b), tau(t), c(std::cos(b.yaw)), s(std::sin(b.yaw)), hw(b.size.x() / 2), hd(b.size.z() / 2) {}

  SoftPixel operator()(double px, double pz) const {
    const double ex = px - box.location.x(), ez = pz - box.location.z();
    const double qx = c * ex + s * ez;
    const double qz = -s * ex + c * ez;
    const double dx = std::abs(qx) - hw;
    const double dz = std::abs(qz) - hd;
    const double sx = qx >= 0 ? 1.0 : -1.0;
    const double sz = qz >= 0 ? 1.0 : -1.0;

    // sdf and its partials w.r.t. the local coordinates and half extents.
    double sdf, g_qx = 0.0, g_qz = 0.0, g_hw = 0.0, g_hd = 0.0;
    if (dx > 0 || dz > 0) {
      const double ox = std::max(dx, 0.0), oz = std::max(dz, 0.0);
      sdf = std::hypot(ox, oz);
      if (sdf > 20.0 * tau) return {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
      g_qx = sx * ox / sdf;
      g_qz = sz * oz / sdf;
      g_hw = -ox / sdf;
      g_hd = -oz / sdf;
    } else if (dx >= dz) {
      sdf = dx;
      g_qx = sx;
      g_hw = -1.0;
    } else {
      sdf = dz;
      g_qz = sz;
      g_hd = -1.0;
    }
    if (sdf < -20.0 * tau) return {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    const double v = sigmoid(-sdf / tau);
    const double dv = -v * (1.0 - v) / tau;  // d value / d sdf
    // q = R(-yaw) (p - loc): dq/dloc_x = (-c, s), dq/dloc_z = (-s, -c),
    // dq/dyaw = (qz, -qx).
    return {v,
            dv * (g_qx * -c + g_qz * s),
            dv * (g_qx * -s + g_qz * -c),
            dv * (g_qx * qz - g_qz * qx),
            dv * g_hw * 0.5,
            dv * g_hd * 0.5};
  }
};

}  // namespace

SoftRaster soft_raster(const Box& box, const GridMask& grid, double tau, bool clip_to_grid) {
  if (!(tau > 0)) throw ConfigError("soft rasterization needs tau > 0");
  SoftRaster out;
  out.window = window_for(box, grid, 20.0 * tau, clip_to_grid);
  const auto& w = out.window;
  const std::size_t n = static_cast<std::size_t>(std::max(0, w.rows * w.cols));
  out.value.assign(n, 0.0);
  out.d_x.assign(n, 0.0);
  out.d_z.assign(n, 0.0);
  out.d_yaw.assign(n, 0.0);
  out.d_width.assign(n, 0.0);
  out.d_depth.assign(n, 0.0);

  const SoftKernel kernel(box, tau);
  for (int r = 0; r < w.rows; ++r) {
    const double pz = grid.row_center_z(w.row0 + r);
    for (int col = 0; col < w.cols; ++col) {
      const SoftPixel p = kernel(grid.col_center_x(w.col0 + col), pz);
      const std::size_t i = static_cast<std::size_t>(r) * w.cols + col;
      out.value[i] = p.value;
      out.d_x[i] = p.d_x;
      out.d_z[i] = p.d_z;
      out.d_yaw[i] = p.d_yaw;
      out.d_width[i] = p.d_width;
      out.d_depth[i] = p.d_depth;
    }
  }
  return out;
}

SoftCoverage soft_masked_sum(const Box& box, const GridMask& mask, double tau) {
  if (!(tau > 0)) throw ConfigError("soft rasterization needs tau > 0");
  SoftCoverage out;
  const PixelWindow w = window_for(box, mask, 20.0 * tau, true);
  const SoftKernel kernel(box, tau);
  for (int r = 0; r < w.rows; ++r) {
    const int row = w.row0 + r;
    const double pz = mask.row_center_z(row);
    for (int col = w.col0; col < w.col0 + w.cols; ++col) {
      if (!mask.at(row, col)) continue;
      const SoftPixel p = kernel(mask.col_center_x(col), pz);
      out.value += p.value;
      out.d_x += p.d_x;
      out.d_z += p.d_z;
      out.d_yaw += p.d_yaw;
      out.d_width += p.d_width;
      out.d_depth += p.d_depth;
    }
  }
  return out;
}

std::vector<double> rasterize(const Box& box, const GridMask& grid, RasterMode mode, double tau) {
  const int res = grid.resolution();
  std::vector<double> mask(static_cast<std::size_t>(res) * res, 0.0);
  if (mode == RasterMode::hard) {
    const HardRaster h = hard_raster(box, grid, true);
    for (int r = 0; r < h.window.rows; ++r) {
      for (int c = 0; c < h.window.cols; ++c) {
        mask[static_cast<std::size_t>(h.window.row0 + r) * res + h.window.col0 + c] = h.inside[r * h.window.cols + c];
      }
    }
    return mask;
  }
  if (!(tau > 0)) throw ConfigError("soft rasterization needs tau > 0");
  require_footprint(box);
  for (int r = 0; r < res; ++r) {
    for (int c = 0; c < res; ++c) {
      mask[static_cast<std::size_t>(r) * res + c] = sigmoid(-sdf_footprint(grid.pixel_center(r, c), box) / tau);
    }
  }
  return mask;
}

std::vector<int> farthest_point_order(std::span<const Vec2> candidates, int n) {
  const int m = static_cast<int>(candidates.size());
  std::vector<int> order;
  if (m == 0 || n <= 0) return order;
  order.reserve(n);
  std::vector<double> min_d2(m, std::numeric_limits<double>::infinity());
  int current = 0;
  for (int k = 0; k < std::min(n, m); ++k) {
    order.push_back(current);
    const Vec2 p = candidates[current];
    int best = -1;
    double best_d2 = -1.0;
    for (int j = 0; j < m; ++j) {
      const double d2 = (candidates[j] - p).squaredNorm();
      if (d2 < min_d2[j]) min_d2[j] = d2;
      if (min_d2[j] > best_d2) {
        best_d2 = min_d2[j];
        best = j;
      }
    }
    current = best;
  }
  for (int k = m; k < n; ++k) order.push_back(order[k % m]);
  return order;
}

Eigen::MatrixX3d farthest_point_sample(const GridMask& free, int n) {
  std::vector<Vec2> candidates;
  for (int r = 0; r < free.resolution(); ++r) {
    for (int c = 0; c < free.resolution(); ++c) {
      if (free.at(r, c)) candidates.push_back(free.pixel_center(r, c));
    }
  }
  if (candidates.empty()) throw DegenerateInputError("floor plan has no free pixel to sample layout points from");
  const auto order = farthest_point_order(candidates, n);
  Eigen::MatrixX3d pts(n, 3);
  for (int k = 0; k < n; ++k) pts.row(k) << candidates[order[k]].x(), 0.0, candidates[order[k]].y();
  return pts;
}

Eigen::MatrixX3d layout_points_for(const GridMask& floor, const GridMask& free_space, int n) {
  return farthest_point_sample(floor.hadamard(free_space.complement()), n);
}

}  // namespace scenediff
