#pragma once

#include "scenediff/denoiser.hpp"
#include "scenediff/scene_model.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace scenediff {

// Linear variance schedule. Arrays are indexed by step t in [1, T]; index 0
// holds the t = 0 convention (beta 0, alpha_bar 1).
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // sqrt(1 - alpha_t)

  double beta1() const { return beta[1]; }
  double beta_last() const { return beta[steps]; }
};

// beta_t = beta1 + (t-1)(betaT - beta1)/(T-1). Throws ConfigError unless
// 0 < beta1 < betaT < 1 and T >= 2.
DiffusionSchedule make_schedule(int steps = 200, double beta1 = 1e-4, double beta_last = 0.02);

// Subsequence of `count` evenly spaced steps with betas recomputed from the
// cumulative products, so the marginals match the full chain.
struct RespacedSchedule {
  DiffusionSchedule schedule;
  std::vector<int> model_step;  // model_step[k] = original t for respaced step k
};
RespacedSchedule respace(const DiffusionSchedule& full, int count);

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
SceneTensor q_sample(const SceneTensor& x0, int t, const SceneTensor& eps, const DiffusionSchedule& sched);
// (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
SceneTensor predict_x0(const SceneTensor& x_t, int t, const SceneTensor& eps_hat, const DiffusionSchedule& sched);
// Reverse-process mean from predicted noise:
// (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t)
SceneTensor epsilon_mean(const SceneTensor& x_t, int t, const SceneTensor& eps_hat, const DiffusionSchedule& sched);
// Posterior mean of q(x_{t-1} | x_t, x0).
SceneTensor posterior_mean(const SceneTensor& x0, const SceneTensor& x_t, int t, const DiffusionSchedule& sched);

// One ancestral step with variance (1 - alpha_t) I and no noise at t = 1.
// With perturbed_x0 the mean is the posterior mean around that clean scene.
SceneTensor ddpm_step(const SceneTensor& x_t, int t, const SceneTensor& eps_hat, const DiffusionSchedule& sched,
                      std::mt19937_64& rng, const SceneTensor* perturbed_x0 = nullptr);

SceneTensor standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

// Derives an independent stream seed (splitmix64 of seed and index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Denoiser bundled with everything needed to interpret its tensors. This is
// what a checkpoint stores.
class SceneDiffusionModel {
 public:
  SceneDiffusionModel(DenoiserConfig config, NormalizationStats norm, RoomType room, int capacity,
                      std::uint64_t seed);

  const DenoiserConfig& config() const { return net_.config(); }
  const NormalizationStats& normalization() const { return norm_; }
  RoomType room() const { return room_; }
  int capacity() const { return capacity_; }
  int num_categories() const { return net_.config().num_categories; }
  int row_width() const { return net_.config().row_width(); }

  Denoiser& network() { return net_; }
  const Denoiser& network() const { return net_; }

  // Encoded contact rows (L x d) for the network.
  nn::Matrix contact_rows(const ConditionSet& cond) const;
  ConditionEncoding prepare(const ConditionSet& cond) const;

  SceneTensor predict_noise(const SceneTensor& x_t, int t, const ConditionEncoding& cond,
                            bool attention = true) const;
  // Convenience overload that encodes the condition on every call.
  SceneTensor predict_noise(const SceneTensor& x_t, int t, const ConditionSet& cond) const;

 private:
  Denoiser net_;
  NormalizationStats norm_;
  RoomType room_;
  int capacity_;
};

struct TrainingSample {
  Scene scene;
  ConditionSet condition;
};

using NoiseFunction = std::function<SceneTensor(const SceneTensor& x_t, int t, const ConditionSet& cond)>;

// Mean over the batch of the per-element squared error between the drawn
// noise and the model's prediction, with t ~ U{1..T}, eps ~ N(0, I) and,
// when rotate is set, one random global rotation per sample.
double training_loss(const std::vector<TrainingSample>& batch, const NormalizationStats& norm,
                     const NoiseFunction& model, const DiffusionSchedule& sched, std::mt19937_64& rng,
                     bool rotate);

enum class LrSchedule { constant, cosine };

struct TrainingConfig {
  double learning_rate = 1e-4;
  // cosine: lr * (1 + cos(pi k / iterations)) / 2 at optimizer step k.
  LrSchedule lr_schedule = LrSchedule::constant;
  int batch_size = 16;
  int iterations = 1000;
  bool rotation_augmentation = true;
  double condition_dropout = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Desk-scale defaults: lr 1e-3 with cosine decay, batch 8, 3000 iterations.
TrainingConfig desk_training_config();

// Adam, no weight decay. One Trainer owns the optimizer state for one model.
class Trainer {
 public:
  Trainer(SceneDiffusionModel& model, TrainingConfig config, DiffusionSchedule sched);

  // One optimizer step on the given samples; returns the mean loss.
  double step(const std::vector<const TrainingSample*>& batch);
  // Runs config.iterations steps drawing batches uniformly with replacement.
  // on_step(iteration, loss) may be empty.
  std::vector<double> fit(const std::vector<TrainingSample>& corpus,
                          const std::function<void(int, double)>& on_step = {});

  long long iterations_done() const { return optimizer_.steps(); }

 private:
  SceneDiffusionModel& model_;
  TrainingConfig config_;
  DiffusionSchedule sched_;
  nn::Adam optimizer_;
  std::mt19937_64 rng_;
};

// Deterministic estimate of L_sim on fixed draws: `draws` (t, eps) pairs per
// sample from the given seed, no augmentation.
double evaluate_loss(const SceneDiffusionModel& model, const std::vector<TrainingSample>& samples,
                     const DiffusionSchedule& sched, int draws, std::uint64_t seed);

// Maps a clean-scene estimate at step t to its guided replacement.
using X0Perturbation = std::function<SceneTensor(const SceneTensor& x0_hat, int t)>;

struct SamplerOptions {
  int steps = 0;  // 0 = full schedule, otherwise respaced
  std::uint64_t seed = 0;
};

// Full reverse chain from x_T ~ N(0, I). With a perturbation, every step
// uses the posterior mean around the perturbed x0 estimate.
SceneTensor sample_tensor(const SceneDiffusionModel& model, const ConditionSet& cond,
                          const DiffusionSchedule& sched, const SamplerOptions& options,
                          const X0Perturbation& perturb = {});

}  // namespace scenediff
