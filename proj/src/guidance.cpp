#include "scenediff/guidance.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace scenediff {

double GuidanceConfig::temperature_for(const GridMask& grid) const {
  return temperature > 0 ? temperature : default_temperature(grid);
}

void GuidanceConfig::validate() const {
  if (!(gamma >= 0) || !std::isfinite(gamma)) throw ConfigError("guidance gamma must be finite and >= 0");
  if (!(fd_step > 0)) throw ConfigError("finite-difference step must be > 0");
  if (!(clip > 0)) throw ConfigError("gradient clip must be > 0");
  if (temperature < 0) throw ConfigError("soft temperature must be >= 0");
  for (double w : {weight_motion, weight_boundary, weight_object}) {
    if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("guidance term weights must be finite and >= 0");
  }
}

BoxGradient& BoxGradient::operator+=(const BoxGradient& o) {
  location += o.location;
  size += o.size;
  yaw += o.yaw;
  return *this;
}

BoxGradient BoxGradient::operator*(double k) const {
  BoxGradient g;
  g.location = location * k;
  g.size = size * k;
  g.yaw = yaw * k;
  return g;
}

namespace {

long long hard_masked_count(const Box& box, const GridMask& mask) {
  const HardRaster h = hard_raster(box, mask, true);
  long long n = 0;
  for (int r = 0; r < h.window.rows; ++r) {
    for (int c = 0; c < h.window.cols; ++c) {
      if (h.inside[static_cast<std::size_t>(r) * h.window.cols + c] && mask.at(h.window.row0 + r, h.window.col0 + c)) {
        ++n;
      }
    }
  }
  return n;
}

// Sum over objects of masked coverage divided by the mask's pixel count.
double coverage_ratio(const Scene& scene, const GridMask& mask, RasterMode mode, double tau,
                      std::vector<BoxGradient>* grad) {
  const double total = static_cast<double>(mask.count());
  if (grad) grad->assign(scene.objects.size(), BoxGradient{});
  double sum = 0.0;
  for (int i = 0; i < scene.capacity(); ++i) {
    if (scene.is_empty(i)) continue;
    const Box& b = scene.objects[i].box;
    if (mode == RasterMode::hard) {
      sum += static_cast<double>(hard_masked_count(b, mask));
      continue;
    }
    const SoftCoverage cov = soft_masked_sum(b, mask, tau);
    sum += cov.value;
    if (grad) {
      BoxGradient& g = (*grad)[i];
      g.location = Vec3(cov.d_x, 0.0, cov.d_z) / total;
      g.size = Vec3(cov.d_width, 0.0, cov.d_depth) / total;
      g.yaw = cov.d_yaw / total;
    }
  }
  return sum / total;
}

GridMask outside_floor(const GridMask& floor) {
  GridMask out = floor.complement();
  if (out.count() == 0) {
    throw EmptyMaskError("floor_complement", "floor covers the whole world extent; boundary score is undefined");
  }
  return out;
}

void require_free_space(const GridMask& fs) {
  if (fs.count() == 0) throw EmptyMaskError("free_space", "free-space mask is empty; motion score is undefined");
}

double tau_or_default(double tau, const GridMask& grid) { return tau > 0 ? tau : default_temperature(grid); }

}  // namespace

double motion_collision(const Scene& scene, const GridMask& free_space, RasterMode mode, double tau) {
  require_free_space(free_space);
  return coverage_ratio(scene, free_space, mode, tau_or_default(tau, free_space), nullptr);
}

double boundary_violation(const Scene& scene, const GridMask& floor, RasterMode mode, double tau) {
  return coverage_ratio(scene, outside_floor(floor), mode, tau_or_default(tau, floor), nullptr);
}

double soft_motion_collision(const Scene& scene, const GridMask& free_space, double tau,
                             std::vector<BoxGradient>* grad) {
  require_free_space(free_space);
  return coverage_ratio(scene, free_space, RasterMode::soft, tau_or_default(tau, free_space), grad);
}

double soft_boundary_violation(const Scene& scene, const GridMask& floor, double tau,
                               std::vector<BoxGradient>* grad) {
  return coverage_ratio(scene, outside_floor(floor), RasterMode::soft, tau_or_default(tau, floor), grad);
}

double soft_object_collision(const Scene& scene, const GridMask& grid, double tau,
                             std::vector<BoxGradient>* grad) {
  tau = tau_or_default(tau, grid);
  const int n = scene.capacity();
  if (grad) grad->assign(n, BoxGradient{});
  std::vector<SoftRaster> rasters(n);
  for (int i = 0; i < n; ++i) {
    if (!scene.is_empty(i)) rasters[i] = soft_raster(scene.objects[i].box, grid, tau, false);
  }
  const double pa = grid.pixel_area();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (scene.is_empty(i)) continue;
    for (int j = i + 1; j < n; ++j) {
      if (scene.is_empty(j)) continue;
      const Box& a = scene.objects[i].box;
      const Box& b = scene.objects[j].box;
      const double h = vertical_overlap(a, b);
      if (h <= 0) continue;
      const SoftRaster& ra = rasters[i];
      const SoftRaster& rb = rasters[j];
      const PixelWindow w = ra.window.intersect(rb.window);
      if (w.empty()) continue;

      // Soft footprint intersection and its partials w.r.t. each box.
      double area = 0.0;
      double da[5] = {0, 0, 0, 0, 0}, db[5] = {0, 0, 0, 0, 0};
      for (int r = w.row0; r < w.row0 + w.rows; ++r) {
        for (int c = w.col0; c < w.col0 + w.cols; ++c) {
          const std::size_t ia = static_cast<std::size_t>(r - ra.window.row0) * ra.window.cols + (c - ra.window.col0);
          const std::size_t ib = static_cast<std::size_t>(r - rb.window.row0) * rb.window.cols + (c - rb.window.col0);
          const double va = ra.value[ia], vb = rb.value[ib];
          // Exact zeros only occur outside the sigmoid band, where the
          // partials vanish too.
          if (va == 0.0 || vb == 0.0) continue;
          area += va * vb;
          if (!grad) continue;
          da[0] += ra.d_x[ia] * vb;
          da[1] += ra.d_z[ia] * vb;
          da[2] += ra.d_yaw[ia] * vb;
          da[3] += ra.d_width[ia] * vb;
          da[4] += ra.d_depth[ia] * vb;
          db[0] += rb.d_x[ib] * va;
          db[1] += rb.d_z[ib] * va;
          db[2] += rb.d_yaw[ib] * va;
          db[3] += rb.d_width[ib] * va;
          db[4] += rb.d_depth[ib] * va;
        }
      }
      area *= pa;
      if (area <= 0) continue;
      const double inter = area * h;
      const double va = a.volume(), vb = b.volume();
      const double uni = va + vb - inter;
      const double iou = inter / uni;
      total += 2.0 * iou;
      if (!grad) continue;

      const double d_inter = 2.0 * (va + vb) / (uni * uni);
      const double d_vol = -2.0 * inter / (uni * uni);
      // Vertical overlap partials: h = min(top) - max(bottom).
      const double top_a = a.location.y() + a.size.y() / 2, top_b = b.location.y() + b.size.y() / 2;
      const double bot_a = a.location.y() - a.size.y() / 2, bot_b = b.location.y() - b.size.y() / 2;
      const double a_top = top_a <= top_b ? 1.0 : 0.0, a_bot = bot_a >= bot_b ? 1.0 : 0.0;
      const double b_top = 1.0 - a_top, b_bot = 1.0 - a_bot;

      auto accumulate = [&](BoxGradient& g, const double* d, const Box& box, double own_top, double own_bot) {
        const double k = d_inter * h * pa;
        g.location.x() += k * d[0];
        g.location.z() += k * d[1];
        g.yaw += k * d[2];
        g.location.y() += d_inter * area * (own_top - own_bot);
        g.size.x() += k * d[3] + d_vol * box.size.y() * box.size.z();
        g.size.z() += k * d[4] + d_vol * box.size.x() * box.size.y();
        g.size.y() += d_inter * area * 0.5 * (own_top + own_bot) + d_vol * box.size.x() * box.size.z();
      };
      accumulate((*grad)[i], da, a, a_top, a_bot);
      accumulate((*grad)[j], db, b, b_top, b_bot);
    }
  }
  return total;
}

double object_collision(const Scene& scene, RasterMode mode, const GridMask& grid, double tau) {
  if (mode == RasterMode::soft) return soft_object_collision(scene, grid, tau, nullptr);
  double total = 0.0;
  for (int i = 0; i < scene.capacity(); ++i) {
    if (scene.is_empty(i)) continue;
    for (int j = i + 1; j < scene.capacity(); ++j) {
      if (scene.is_empty(j)) continue;
      total += 2.0 * iou3d(scene.objects[i].box, scene.objects[j].box);
    }
  }
  return total;
}

GuidanceTerms hard_scores(const Scene& scene, const ConditionSet& cond) {
  GuidanceTerms t;
  t.motion = motion_collision(scene, cond.free_space, RasterMode::hard);
  t.boundary = boundary_violation(scene, cond.floor, RasterMode::hard);
  t.object = object_collision(scene, RasterMode::hard);
  return t;
}

namespace {

Scene decode_for_guidance(const SceneTensor& x0, const TensorContext& ctx) {
  return decode_scene(x0, ctx.norm, ctx.contact_count, ctx.room);
}

struct TermGradients {
  GuidanceTerms value;
  std::vector<BoxGradient> motion, boundary, object;
};

TermGradients soft_terms(const Scene& scene, const ConditionSet& cond, const GuidanceConfig& cfg, bool with_grad) {
  TermGradients out;
  const double tau = cfg.temperature_for(cond.floor);
  if (cfg.motion) {
    out.value.motion = soft_motion_collision(scene, cond.free_space, tau, with_grad ? &out.motion : nullptr);
  }
  if (cfg.boundary) {
    out.value.boundary = soft_boundary_violation(scene, cond.floor, tau, with_grad ? &out.boundary : nullptr);
  }
  if (cfg.object) {
    out.value.object = soft_object_collision(scene, cond.floor, tau, with_grad ? &out.object : nullptr);
  }
  return out;
}

double weighted(const GuidanceTerms& t, const GuidanceConfig& cfg) {
  double j = 0.0;
  if (cfg.motion) j += cfg.weight_motion * t.motion;
  if (cfg.boundary) j += cfg.weight_boundary * t.boundary;
  if (cfg.object) j += cfg.weight_object * t.object;
  return j;
}

std::vector<int> guided_channels(const GuidanceConfig& cfg, const TensorLayout& lay) {
  std::vector<int> ch;
  if (cfg.guide_location) {
    for (int a = 0; a < 3; ++a) ch.push_back(lay.location_begin() + a);
  }
  if (cfg.guide_size) {
    for (int a = 0; a < 3; ++a) ch.push_back(lay.size_begin() + a);
  }
  if (cfg.guide_yaw) {
    ch.push_back(lay.yaw_cos());
    ch.push_back(lay.yaw_sin());
  }
  return ch;
}

// Chain rule from box parameters to the tensor channels of one row.
void box_to_channels(const BoxGradient& g, const SceneTensor& x0, int row, const GuidanceConfig& cfg,
                     const TensorContext& ctx, SceneTensor& out) {
  const TensorLayout lay{static_cast<int>(x0.cols()) - 9};
  const NormalizationStats& n = ctx.norm;
  if (cfg.guide_location) {
    for (int a = 0; a < 3; ++a) {
      out(row, lay.location_begin() + a) += g.location[a] * 0.5 * (n.location_max[a] - n.location_min[a]);
    }
  }
  if (cfg.guide_size) {
    for (int a = 0; a < 3; ++a) {
      const int ch = lay.size_begin() + a;
      // Sizes clamped at decode time do not respond to the channel.
      if (n.denormalize(x0(row, ch), n.size_min[a], n.size_max[a]) < kMinObjectSize) continue;
      out(row, ch) += g.size[a] * 0.5 * (n.size_max[a] - n.size_min[a]);
    }
  }
  if (cfg.guide_yaw) {
    const double c = x0(row, lay.yaw_cos()), s = x0(row, lay.yaw_sin());
    const double r2 = c * c + s * s;
    if (r2 > 1e-12) {
      out(row, lay.yaw_cos()) += g.yaw * -s / r2;
      out(row, lay.yaw_sin()) += g.yaw * c / r2;
    }
  }
}

void require_finite(const SceneTensor& g, const char* term) {
  if (!g.allFinite()) throw GuidanceError(term, std::string("non-finite guidance gradient in term ") + term);
}

SceneTensor term_to_channels(const std::vector<BoxGradient>& grads, const Scene& scene, const SceneTensor& x0,
                             const GuidanceConfig& cfg, const TensorContext& ctx) {
  SceneTensor out = SceneTensor::Zero(x0.rows(), x0.cols());
  for (int i = 0; i < scene.capacity(); ++i) {
    if (!scene.is_empty(i)) box_to_channels(grads[i], x0, i, cfg, ctx, out);
  }
  return out;
}

SceneTensor analytic_gradient(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                              const TensorContext& ctx) {
  const Scene scene = decode_for_guidance(x0, ctx);
  const TermGradients t = soft_terms(scene, cond, cfg, true);
  SceneTensor g = SceneTensor::Zero(x0.rows(), x0.cols());
  if (cfg.motion) {
    const SceneTensor gm = term_to_channels(t.motion, scene, x0, cfg, ctx);
    require_finite(gm, "motion");
    g += cfg.weight_motion * gm;
  }
  if (cfg.boundary) {
    const SceneTensor gb = term_to_channels(t.boundary, scene, x0, cfg, ctx);
    require_finite(gb, "boundary");
    g += cfg.weight_boundary * gb;
  }
  if (cfg.object) {
    const SceneTensor go = term_to_channels(t.object, scene, x0, cfg, ctx);
    require_finite(go, "object");
    g += cfg.weight_object * go;
  }
  return g;
}

SceneTensor finite_difference_gradient(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                                       const TensorContext& ctx) {
  const Scene scene = decode_for_guidance(x0, ctx);
  const TensorLayout lay{static_cast<int>(x0.cols()) - 9};
  SceneTensor gm = SceneTensor::Zero(x0.rows(), x0.cols());
  SceneTensor gb = gm, go = gm;
  const double h = cfg.fd_step;
  for (int i = 0; i < x0.rows(); ++i) {
    if (scene.is_empty(i)) continue;
    for (int ch : guided_channels(cfg, lay)) {
      SceneTensor xp = x0, xm = x0;
      xp(i, ch) += h;
      xm(i, ch) -= h;
      const GuidanceTerms tp = soft_terms(decode_for_guidance(xp, ctx), cond, cfg, false).value;
      const GuidanceTerms tm = soft_terms(decode_for_guidance(xm, ctx), cond, cfg, false).value;
      gm(i, ch) = (tp.motion - tm.motion) / (2 * h);
      gb(i, ch) = (tp.boundary - tm.boundary) / (2 * h);
      go(i, ch) = (tp.object - tm.object) / (2 * h);
    }
  }
  require_finite(gm, "motion");
  require_finite(gb, "boundary");
  require_finite(go, "object");
  SceneTensor g = SceneTensor::Zero(x0.rows(), x0.cols());
  if (cfg.motion) g += cfg.weight_motion * gm;
  if (cfg.boundary) g += cfg.weight_boundary * gb;
  if (cfg.object) g += cfg.weight_object * go;
  return g;
}

}  // namespace

double soft_objective(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                      const TensorContext& ctx, GuidanceTerms* terms) {
  const TermGradients t = soft_terms(decode_for_guidance(x0, ctx), cond, cfg, false);
  if (terms) *terms = t.value;
  return weighted(t.value, cfg);
}

SceneTensor guidance_gradient(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                              const TensorContext& ctx) {
  cfg.validate();
  if (!cfg.any_term()) return SceneTensor::Zero(x0.rows(), x0.cols());
  return cfg.gradient == GradientMode::analytic ? analytic_gradient(x0, cond, cfg, ctx)
                                                : finite_difference_gradient(x0, cond, cfg, ctx);
}

SceneTensor guide_x0(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                     const TensorContext& ctx) {
  cfg.validate();
  if (cfg.gamma == 0.0 || !cfg.any_term()) return x0;
  const SceneTensor g = guidance_gradient(x0, cond, cfg, ctx).cwiseMax(-cfg.clip).cwiseMin(cfg.clip);
  return x0 - cfg.gamma * g;
}

}  // namespace scenediff
