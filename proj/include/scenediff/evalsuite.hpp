#pragma once

#include "scenediff/scene_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace scenediff {

constexpr double kCollisionThreshold = 0.01;  // tau_c
constexpr double kKlSmoothing = 1e-6;

// Mean over contact boxes of the best iou3d with any non-EMPTY object (or
// only objects of the intended category when category_constrained). An
// unmatched contact scores 0. Throws DegenerateInputError without contacts.
double iou_contact(const Scene& scene, const std::vector<ContactBox>& contacts, bool category_constrained = false);

// Hard motion / boundary scores clamped to [0, 1].
double col_mot(const Scene& scene, const ConditionSet& cond);
double r_out(const Scene& scene, const ConditionSet& cond);

// Fraction of non-EMPTY objects whose largest IoU with another object
// exceeds tau_c. 0 for scenes without objects.
double col_obj(const Scene& scene, double tau_c = kCollisionThreshold);

// KL(p_gen || p_ref) of non-EMPTY category frequencies, each smoothed as
// (f + eps) / (1 + K eps).
double ckl(const std::vector<Scene>& generated, const std::vector<Scene>& reference, int num_categories);

struct SceneMetrics {
  std::optional<double> iou_contact;  // absent when the scene has no contacts
  double col_mot = 0.0;
  double r_out = 0.0;
  double col_obj = 0.0;
};

struct EvalOptions {
  double tau_c = kCollisionThreshold;
  bool category_constrained = false;
};

struct MetricsReport {
  std::vector<SceneMetrics> scenes;
  double mean_iou_contact = 0.0;
  double mean_col_mot = 0.0;
  double mean_col_obj = 0.0;
  double mean_r_out = 0.0;
  double ckl = 0.0;
  EvalOptions options;
  std::vector<std::uint64_t> seeds;  // echo of the sampling seeds, may be empty

  std::string to_json() const;
  std::string to_table() const;
};

// Scene i is scored against conditions[i]. CKL uses `reference`.
MetricsReport evaluate(const std::vector<Scene>& generated, const std::vector<const ConditionSet*>& conditions,
                       const std::vector<Scene>& reference, const EvalOptions& options = {});

}  // namespace scenediff
