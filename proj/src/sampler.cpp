#include "scenediff/sampler.hpp"

#include "scenediff/errors.hpp"

namespace scenediff {

GeneratedScene sample_scene(const SceneDiffusionModel& model, const ConditionSet& cond,
                            const DiffusionSchedule& sched, const GenerationOptions& options) {
  const int contact_count = static_cast<int>(cond.contacts.size());
  if (contact_count > model.capacity()) throw ContractError("more contact boxes than scene capacity");
  TensorContext ctx{model.normalization(), contact_count, model.room()};
  X0Perturbation perturb;
  if (options.guidance) {
    options.guidance_config.validate();
    perturb = [&](const SceneTensor& x0, int) { return guide_x0(x0, cond, options.guidance_config, ctx); };
  }
  SamplerOptions so;
  so.steps = options.steps;
  so.seed = options.seed;
  const SceneTensor x0 = sample_tensor(model, cond, sched, so, perturb);
  GeneratedScene out;
  out.seed = options.seed;
  out.scene = decode_scene(x0, model.normalization(), contact_count, model.room(), &out.log);
  return out;
}

std::vector<GeneratedScene> sample_scenes(const SceneDiffusionModel& model,
                                          const std::vector<const ConditionSet*>& conditions,
                                          const DiffusionSchedule& sched, const GenerationOptions& options,
                                          int count) {
  if (conditions.empty()) throw ContractError("sampling needs at least one condition");
  if (count < 0) throw ContractError("negative sample count");
  std::vector<GeneratedScene> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    GenerationOptions o = options;
    o.seed = derive_seed(options.seed, static_cast<std::uint64_t>(i));
    out.push_back(sample_scene(model, *conditions[i % conditions.size()], sched, o));
  }
  return out;
}

}  // namespace scenediff
