#include "scenediff/errors.hpp"
#include "scenediff/geometry.hpp"

#include "support.hpp"

#include <cmath>

using namespace scenediff;
using testing::make_box;
using testing::random_box;

namespace {

// Point-in-box test written independently of the library's footprint code.
bool inside_box(const Vec3& p, const Box& b) {
  const double dx = p.x() - b.location.x(), dz = p.z() - b.location.z();
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double u = c * dx + s * dz, v = -s * dx + c * dz;
  return std::abs(u) <= b.size.x() / 2 && std::abs(v) <= b.size.z() / 2 &&
         std::abs(p.y() - b.location.y()) <= b.size.y() / 2;
}

bool inside_footprint_xz(double x, double z, const Box& b) {
  return inside_box(Vec3(x, b.location.y(), z), b);
}

// Monte-Carlo IoU over the union's bounding box with its standard error.
std::pair<double, double> mc_iou(const Box& a, const Box& b, int n, std::mt19937_64& rng) {
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (const Box* bx : {&a, &b}) {
    const double r = 0.5 * std::hypot(bx->size.x(), bx->size.z());
    lo = lo.cwiseMin(Vec3(bx->location.x() - r, bx->location.y() - bx->size.y() / 2, bx->location.z() - r));
    hi = hi.cwiseMax(Vec3(bx->location.x() + r, bx->location.y() + bx->size.y() / 2, bx->location.z() + r));
  }
  std::uniform_real_distribution<double> u(0, 1);
  long long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 p(lo.x() + u(rng) * (hi.x() - lo.x()), lo.y() + u(rng) * (hi.y() - lo.y()),
                 lo.z() + u(rng) * (hi.z() - lo.z()));
    const bool ia = inside_box(p, a), ib = inside_box(p, b);
    inter += ia && ib;
    uni += ia || ib;
  }
  const double est = uni ? static_cast<double>(inter) / uni : 0.0;
  const double se = uni ? std::sqrt(std::max(est * (1 - est), 1e-12) / uni) : 0.0;
  return {est, se};
}

}  // namespace

TEST_CASE("polygon area and clipping of squares") {
  const std::vector<Vec2> sq = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK(polygon_area(sq) == doctest::Approx(1.0));
  const std::vector<Vec2> shifted = {{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}, {0.5, 1.5}};
  CHECK(polygon_area(clip_convex(sq, shifted)) == doctest::Approx(0.25));
  const std::vector<Vec2> far = {{5, 5}, {6, 5}, {6, 6}, {5, 6}};
  CHECK(polygon_area(clip_convex(sq, far)) == doctest::Approx(0.0));
}

TEST_CASE("iou3d closed-form cases") {
  const Box a = make_box(0, 0, 1, 1);
  CHECK(iou3d(a, a) == doctest::Approx(1.0));
  CHECK(iou3d(a, make_box(3, 0, 1, 1)) == 0.0);
  // Half overlap along x: 0.5 / 1.5.
  CHECK(iou3d(a, make_box(0.5, 0, 1, 1)) == doctest::Approx(1.0 / 3.0));
  // Vertical offset by half the height.
  CHECK(iou3d(a, make_box(0, 0, 1, 1, 0, 1.0)) == doctest::Approx(1.0 / 3.0));
  // Unit cube against the same cube turned 45 degrees: overlap octagon area
  // 2(sqrt2 - 1), so IoU = sqrt2 / 2.
  const double expect = std::sqrt(2.0) / 2;
  CHECK(std::abs(iou3d(a, make_box(0, 0, 1, 1, kPi / 4)) - expect) < 1e-3);
  CHECK(std::abs(iou3d(a, make_box(0, 0, 1, 1, kPi / 4)) - expect) < 1e-9);
  // Touching faces give exactly zero.
  CHECK(iou3d(a, make_box(1.0, 0, 1, 1)) == 0.0);
  CHECK_THROWS_AS(iou3d(a, Box{}), DegenerateInputError);
}

TEST_CASE("iou3d agrees with Monte-Carlo on random pairs") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const Box a = random_box(rng, 0.6), b = random_box(rng, 0.6);
    const double exact = iou3d(a, b);
    CHECK(exact == doctest::Approx(iou3d(b, a)).epsilon(1e-12));
    const auto [est, se] = mc_iou(a, b, 100000, rng);
    CHECK(std::abs(exact - est) < 4 * se + 1e-9);
  }
}

TEST_CASE("signed distances") {
  const Box b = make_box(0, 0, 2, 1, 0, 0.5, 1.0);
  CHECK(sdf_footprint(Vec2(0, 0), b) == doctest::Approx(-0.5));
  CHECK(sdf_footprint(Vec2(2, 0), b) == doctest::Approx(1.0));
  CHECK(sdf_footprint(Vec2(4, 4.5), b) == doctest::Approx(5.0));  // 3-4-5 from the corner
  CHECK(sdf_point_box(Vec3(0, 0.5, 0), b) == doctest::Approx(-0.5));
  CHECK(sdf_point_box(Vec3(0, 2.0, 0), b) == doctest::Approx(1.0));
  CHECK(sdf_point_box(Vec3(1.0, 0.5, 0), b) == doctest::Approx(0.0));
  // Rotating the box and the query together leaves the distance unchanged.
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Box r = random_box(rng);
    const Vec3 p(std::uniform_real_distribution<double>(-2, 2)(rng), 0.3, std::uniform_real_distribution<double>(-2, 2)(rng));
    const double theta = 0.7;
    const Box rr = rotate_box(r, theta);
    const Vec3 pr(std::cos(theta) * p.x() - std::sin(theta) * p.z(), p.y(),
                  std::sin(theta) * p.x() + std::cos(theta) * p.z());
    CHECK(sdf_point_box(pr, rr) == doctest::Approx(sdf_point_box(p, r)).epsilon(1e-9));
    CHECK((sdf_point_box(p, r) <= 0) == inside_box(p, r));
  }
}

TEST_CASE("hard raster equals pixel-center enumeration") {
  std::mt19937_64 rng(21);
  const GridMask grid;
  for (int i = 0; i < 30; ++i) {
    Box b = random_box(rng, 3.4);  // some boxes leave the extent
    const HardRaster h = hard_raster(b, grid);
    long long brute = 0;
    for (int r = 0; r < grid.resolution(); ++r) {
      for (int c = 0; c < grid.resolution(); ++c) {
        const Vec2 p = grid.pixel_center(r, c);
        const bool in = inside_footprint_xz(p.x(), p.y(), b);
        brute += in;
        const int wr = r - h.window.row0, wc = c - h.window.col0;
        const bool listed = wr >= 0 && wc >= 0 && wr < h.window.rows && wc < h.window.cols &&
                            h.inside[static_cast<std::size_t>(wr) * h.window.cols + wc];
        if (in != listed) FAIL_CHECK("pixel mismatch at " << r << "," << c);
      }
    }
    CHECK(h.count() == brute);
    const auto dense = rasterize(b, grid, RasterMode::hard);
    double dense_sum = 0;
    for (double v : dense) dense_sum += v;
    CHECK(dense_sum == brute);
  }
}

TEST_CASE("soft raster matches the sigmoid of the signed distance") {
  const GridMask grid;
  const double tau = default_temperature(grid);
  CHECK(tau == doctest::Approx(grid.pixel_size() / 2));
  const Box b = make_box(0.3, -0.2, 1.1, 0.7, 0.4);
  const SoftRaster s = soft_raster(b, grid, tau);
  for (int k = 0; k < 200; ++k) {
    const int wr = (k * 37) % s.window.rows, wc = (k * 53) % s.window.cols;
    const Vec2 p(grid.col_center_x(s.window.col0 + wc), grid.row_center_z(s.window.row0 + wr));
    const double d = sdf_footprint(p, b);
    const double expect = std::abs(d) > 20 * tau ? (d < 0 ? 1.0 : 0.0) : 1.0 / (1.0 + std::exp(d / tau));
    CHECK(s.value[static_cast<std::size_t>(wr) * s.window.cols + wc] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(soft_raster(b, grid, 0.0), ConfigError);
}

TEST_CASE("soft raster gradients match central differences") {
  const GridMask grid;
  const double tau = default_temperature(grid);
  const double h = 1e-6;
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Box b = random_box(rng, 1.5);
    const SoftRaster s = soft_raster(b, grid, tau, false);
    auto value_at = [&](const Box& q, int row, int col) {
      const SoftRaster t = soft_raster(q, grid, tau, false);
      const int wr = row - t.window.row0, wc = col - t.window.col0;
      if (wr < 0 || wc < 0 || wr >= t.window.rows || wc >= t.window.cols) return 0.0;
      return t.value[static_cast<std::size_t>(wr) * t.window.cols + wc];
    };
    for (std::size_t idx = 0; idx < s.value.size(); idx += 97) {
      const double v = s.value[idx];
      if (v < 1e-3 || v > 1 - 1e-3) continue;  // flat region, nothing to compare
      const int row = s.window.row0 + static_cast<int>(idx / s.window.cols);
      const int col = s.window.col0 + static_cast<int>(idx % s.window.cols);
      const std::pair<std::vector<double> SoftRaster::*, int> channels[] = {
          {&SoftRaster::d_x, 0}, {&SoftRaster::d_z, 1}, {&SoftRaster::d_yaw, 2},
          {&SoftRaster::d_width, 3}, {&SoftRaster::d_depth, 4}};
      for (const auto& ch : channels) {
        Box p = b, m = b;
        switch (ch.second) {
          case 0: p.location.x() += h; m.location.x() -= h; break;
          case 1: p.location.z() += h; m.location.z() -= h; break;
          case 2: p.yaw += h; m.yaw -= h; break;
          case 3: p.size.x() += h; m.size.x() -= h; break;
          default: p.size.z() += h; m.size.z() -= h; break;
        }
        const double fd = (value_at(p, row, col) - value_at(m, row, col)) / (2 * h);
        const double an = (s.*(ch.first))[idx];
        CHECK(std::abs(an - fd) <= 1e-3 * std::max(std::abs(fd), 1.0));
        ++checked;
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("soft masked sum gradients match central differences") {
  const GridMask grid;
  const double tau = default_temperature(grid);
  GridMask mask = grid;
  for (int r = 0; r < 256; ++r)
    for (int c = 0; c < 256; ++c) mask.set(r, c, ((r / 7) + (c / 5)) % 3 == 0);
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const Box b = random_box(rng, 1.5);
    const SoftCoverage s = soft_masked_sum(b, mask, tau);
    const double h = 1e-6;
    auto fd = [&](auto mutate) {
      Box p = b, m = b;
      mutate(p, h);
      mutate(m, -h);
      return (soft_masked_sum(p, mask, tau).value - soft_masked_sum(m, mask, tau).value) / (2 * h);
    };
    const double gx = fd([](Box& q, double e) { q.location.x() += e; });
    const double gz = fd([](Box& q, double e) { q.location.z() += e; });
    const double gy = fd([](Box& q, double e) { q.yaw += e; });
    CHECK(std::abs(s.d_x - gx) <= 1e-3 * std::max(std::abs(gx), 1.0));
    CHECK(std::abs(s.d_z - gz) <= 1e-3 * std::max(std::abs(gz), 1.0));
    CHECK(std::abs(s.d_yaw - gy) <= 1e-3 * std::max(std::abs(gy), 1.0));
    // Value agrees with the dense raster summed over the mask.
    const auto dense = rasterize(b, mask, RasterMode::soft, tau);
    double sum = 0;
    for (std::size_t i = 0; i < dense.size(); ++i) sum += mask.data()[i] ? dense[i] : 0.0;
    CHECK(s.value == doctest::Approx(sum).epsilon(1e-9));
  }
}

TEST_CASE("farthest point order matches a brute-force greedy oracle") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec2> pts(60);
  for (auto& p : pts) p = Vec2(u(rng), u(rng));
  const auto order = farthest_point_order(pts, 20);
  std::vector<int> oracle = {0};
  while (oracle.size() < 20) {
    int best = -1;
    double best_d = -1;
    for (int i = 0; i < 60; ++i) {
      double d = 1e18;
      for (int j : oracle) d = std::min(d, (pts[i] - pts[j]).squaredNorm());
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    oracle.push_back(best);
  }
  CHECK(order == oracle);
}

TEST_CASE("layout points lie on the floor outside free space") {
  GridMask floor, fs;
  for (int r = 60; r < 200; ++r)
    for (int c = 50; c < 210; ++c) floor.set(r, c, 1);
  for (int r = 100; r < 150; ++r)
    for (int c = 80; c < 180; ++c) fs.set(r, c, 1);
  const auto pts = layout_points_for(floor, fs, 300);
  REQUIRE(pts.rows() == 300);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    CHECK(pts(i, 1) == 0.0);
    const Vec2 pix = fs.world_to_pixel(Vec2(pts(i, 0), pts(i, 2)));
    const int r = static_cast<int>(pix.y()), c = static_cast<int>(pix.x());
    CHECK(floor.at(r, c) == 1);
    CHECK(fs.at(r, c) == 0);
  }
  CHECK_THROWS_AS(farthest_point_sample(GridMask(), 10), DegenerateInputError);
}
