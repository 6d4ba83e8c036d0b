#pragma once

#include "scenediff/diffusion.hpp"
#include "scenediff/guidance.hpp"

#include <cstdint>
#include <vector>

namespace scenediff {

struct GenerationOptions {
  bool guidance = false;
  GuidanceConfig guidance_config;
  int steps = 0;  // 0 = full schedule
  std::uint64_t seed = 0;
};

struct GeneratedScene {
  Scene scene;
  DecodeLog log;
  std::uint64_t seed = 0;
};

// One reverse chain for one condition. With guidance on, every step replaces
// x0_hat by guide_x0(x0_hat) before forming the posterior mean.
GeneratedScene sample_scene(const SceneDiffusionModel& model, const ConditionSet& cond,
                            const DiffusionSchedule& sched, const GenerationOptions& options);

// Scene i uses conditions[i % size] and seed derive_seed(options.seed, i).
std::vector<GeneratedScene> sample_scenes(const SceneDiffusionModel& model,
                                          const std::vector<const ConditionSet*>& conditions,
                                          const DiffusionSchedule& sched, const GenerationOptions& options,
                                          int count);

}  // namespace scenediff
