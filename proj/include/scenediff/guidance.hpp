#pragma once

#include "scenediff/geometry.hpp"
#include "scenediff/scene_model.hpp"

#include <vector>

namespace scenediff {

enum class GradientMode { analytic, finite_difference };

struct GuidanceConfig {
  double gamma = 1.0;
  double weight_motion = 1.0;
  double weight_boundary = 1.0;
  double weight_object = 1.0;
  bool motion = true;
  bool boundary = true;
  bool object = true;
  double temperature = 0.0;  // 0 selects half a pixel
  GradientMode gradient = GradientMode::analytic;
  double fd_step = 1e-4;  // normalized units
  bool guide_location = true;
  bool guide_yaw = true;
  bool guide_size = false;
  double clip = 0.2;  // per-channel bound on the gradient, normalized units

  bool any_term() const { return motion || boundary || object; }
  double temperature_for(const GridMask& grid) const;
  void validate() const;
};

// Derivatives of a score w.r.t. one object's box parameters.
struct BoxGradient {
  Vec3 location = Vec3::Zero();
  Vec3 size = Vec3::Zero();
  double yaw = 0.0;

  BoxGradient& operator+=(const BoxGradient& o);
  BoxGradient operator*(double k) const;
};

// Coverage of the free-space mask: sum over non-EMPTY objects of
// covered FS pixels, divided by the FS pixel count. Overlapping objects count
// a pixel once each. Throws EmptyMaskError when FS is empty.
double motion_collision(const Scene& scene, const GridMask& free_space, RasterMode mode, double tau = 0.0);
// Same with the outside-floor pixels 1 - F inside the world extent. Throws
// EmptyMaskError when the floor covers the whole extent.
double boundary_violation(const Scene& scene, const GridMask& floor, RasterMode mode, double tau = 0.0);
// Sum of 3D IoU over ordered pairs i != j of non-EMPTY objects. In soft mode
// the footprint intersection area is the soft-raster product sum on the
// lattice of `grid` (which need not contain the boxes).
double object_collision(const Scene& scene, RasterMode mode, const GridMask& grid = GridMask(),
                        double tau = 0.0);

// Soft scores with per-object gradients (EMPTY rows get zero gradients).
double soft_motion_collision(const Scene& scene, const GridMask& free_space, double tau,
                             std::vector<BoxGradient>* grad);
double soft_boundary_violation(const Scene& scene, const GridMask& floor, double tau,
                               std::vector<BoxGradient>* grad);
double soft_object_collision(const Scene& scene, const GridMask& grid, double tau,
                             std::vector<BoxGradient>* grad);

struct GuidanceTerms {
  double motion = 0.0;
  double boundary = 0.0;
  double object = 0.0;
};

// Unweighted hard scores of every term (disabled ones included).
GuidanceTerms hard_scores(const Scene& scene, const ConditionSet& cond);

// Everything needed to read a clean-scene tensor as geometry.
struct TensorContext {
  NormalizationStats norm;
  int contact_count = 0;
  RoomType room = RoomType::bedroom;
};

// Weighted soft J of the decoded tensor, enabled terms only.
double soft_objective(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                      const TensorContext& ctx, GuidanceTerms* terms = nullptr);

// dJ/dx0 on the guided channels (zero elsewhere), before clipping and gamma.
// Throws GuidanceError naming the term on a non-finite gradient.
SceneTensor guidance_gradient(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                              const TensorContext& ctx);

// x0 - gamma * clip(dJ/dx0).
SceneTensor guide_x0(const SceneTensor& x0, const ConditionSet& cond, const GuidanceConfig& cfg,
                     const TensorContext& ctx);

}  // namespace scenediff
