#include "scenediff/diffusion.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <cmath>

namespace scenediff {

DiffusionSchedule make_schedule(int steps, double beta1, double beta_last) {
  if (steps < 2) throw ConfigError("diffusion schedule needs T >= 2");
  if (!(beta1 > 0) || !(beta1 < beta_last) || !(beta_last < 1)) {
    throw ConfigError("diffusion schedule needs 0 < beta1 < betaT < 1");
  }
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  s.sigma.assign(steps + 1, 0.0);
  for (int t = 1; t <= steps; ++t) {
    s.beta[t] = beta1 + (t - 1) * (beta_last - beta1) / (steps - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.sigma[t] = std::sqrt(1.0 - s.alpha[t]);
  }
  return s;
}

RespacedSchedule respace(const DiffusionSchedule& full, int count) {
  if (count < 1 || count > full.steps) throw ConfigError("respaced step count must be in [1, T]");
  RespacedSchedule out;
  out.model_step.assign(count + 1, 0);
  for (int k = 1; k <= count; ++k) {
    out.model_step[k] = count == 1 ? full.steps
                                   : static_cast<int>(std::lround(1.0 + (k - 1) * double(full.steps - 1) / (count - 1)));
  }
  auto& s = out.schedule;
  s.steps = count;
  s.beta.assign(count + 1, 0.0);
  s.alpha.assign(count + 1, 1.0);
  s.alpha_bar.assign(count + 1, 1.0);
  s.sigma.assign(count + 1, 0.0);
  for (int k = 1; k <= count; ++k) {
    s.alpha_bar[k] = full.alpha_bar[out.model_step[k]];
    s.alpha[k] = s.alpha_bar[k] / s.alpha_bar[k - 1];
    s.beta[k] = 1.0 - s.alpha[k];
    s.sigma[k] = std::sqrt(s.beta[k]);
  }
  return out;
}

namespace {

void check_step(int t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw ContractError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps) + "]");
  }
}

nn::Matrix to_float(const SceneTensor& x) { return x.cast<float>(); }
SceneTensor to_double(const nn::Matrix& x) { return x.cast<double>(); }

}  // namespace

SceneTensor q_sample(const SceneTensor& x0, int t, const SceneTensor& eps, const DiffusionSchedule& sched) {
  check_step(t, sched);
  const double ab = sched.alpha_bar[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

SceneTensor predict_x0(const SceneTensor& x_t, int t, const SceneTensor& eps_hat, const DiffusionSchedule& sched) {
  check_step(t, sched);
  const double ab = sched.alpha_bar[t];
  return (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

SceneTensor epsilon_mean(const SceneTensor& x_t, int t, const SceneTensor& eps_hat, const DiffusionSchedule& sched) {
  check_step(t, sched);
  const double a = sched.alpha[t], ab = sched.alpha_bar[t];
  return (x_t - ((1.0 - a) / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(a);
}

SceneTensor posterior_mean(const SceneTensor& x0, const SceneTensor& x_t, int t, const DiffusionSchedule& sched) {
  check_step(t, sched);
  const double ab = sched.alpha_bar[t], ab_prev = sched.alpha_bar[t - 1];
  const double c0 = std::sqrt(ab_prev) * sched.beta[t] / (1.0 - ab);
  const double ct = std::sqrt(sched.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab);
  return c0 * x0 + ct * x_t;
}

SceneTensor standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  SceneTensor z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = n01(rng);
  }
  return z;
}

SceneTensor ddpm_step(const SceneTensor& x_t, int t, const SceneTensor& eps_hat, const DiffusionSchedule& sched,
                      std::mt19937_64& rng, const SceneTensor* perturbed_x0) {
  check_step(t, sched);
  SceneTensor mean = perturbed_x0 ? posterior_mean(*perturbed_x0, x_t, t, sched) : epsilon_mean(x_t, t, eps_hat, sched);
  if (t == 1) return mean;
  return mean + sched.sigma[t] * standard_normal(x_t.rows(), x_t.cols(), rng);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------

SceneDiffusionModel::SceneDiffusionModel(DenoiserConfig config, NormalizationStats norm, RoomType room, int capacity,
                                         std::uint64_t seed)
    : net_(config, seed), norm_(norm), room_(room), capacity_(capacity) {
  if (capacity <= 0) throw ConfigError("scene capacity must be positive");
}

nn::Matrix SceneDiffusionModel::contact_rows(const ConditionSet& cond) const {
  if (static_cast<int>(cond.contacts.size()) > capacity_) {
    throw ContractError("condition has more contact boxes than the scene capacity");
  }
  nn::Matrix rows(cond.contacts.size(), row_width());
  for (std::size_t i = 0; i < cond.contacts.size(); ++i) {
    rows.row(i) = encode_contact(cond.contacts[i], num_categories(), norm_).cast<float>();
  }
  return rows;
}

ConditionEncoding SceneDiffusionModel::prepare(const ConditionSet& cond) const {
  if (cond.layout_points.rows() == 0) throw ContractError("condition has no layout points");
  return net_.encode_condition(contact_rows(cond), cond.layout_points);
}

SceneTensor SceneDiffusionModel::predict_noise(const SceneTensor& x_t, int t, const ConditionEncoding& cond,
                                               bool attention) const {
  if (x_t.rows() != capacity_ || x_t.cols() != row_width()) throw ContractError("scene tensor shape mismatch");
  return to_double(net_.predict(to_float(x_t), static_cast<double>(t), cond, attention));
}

SceneTensor SceneDiffusionModel::predict_noise(const SceneTensor& x_t, int t, const ConditionSet& cond) const {
  return predict_noise(x_t, t, prepare(cond));
}

// ---------------------------------------------------------------------------

double training_loss(const std::vector<TrainingSample>& batch, const NormalizationStats& norm,
                     const NoiseFunction& model, const DiffusionSchedule& sched, std::mt19937_64& rng,
                     bool rotate) {
  if (batch.empty()) throw ContractError("training loss on an empty batch");
  std::uniform_int_distribution<int> step(1, sched.steps);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  double total = 0.0;
  for (const auto& sample : batch) {
    const int t = step(rng);
    const double theta = rotate ? angle(rng) : 0.0;
    const Scene scene = rotate ? rotate_scene(sample.scene, theta) : sample.scene;
    const ConditionSet cond = rotate ? rotate_condition(sample.condition, theta) : sample.condition;
    const SceneTensor x0 = encode_scene(scene, norm);
    const SceneTensor eps = standard_normal(x0.rows(), x0.cols(), rng);
    const SceneTensor pred = model(q_sample(x0, t, eps, sched), t, cond);
    total += (pred - eps).squaredNorm() / static_cast<double>(eps.size());
  }
  return total / static_cast<double>(batch.size());
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (iterations < 0) throw ConfigError("iteration budget must be non-negative");
  if (condition_dropout < 0 || condition_dropout > 1) throw ConfigError("condition dropout must lie in [0, 1]");
}

TrainingConfig desk_training_config() {
  TrainingConfig c;
  c.learning_rate = 1e-3;
  c.lr_schedule = LrSchedule::cosine;
  c.batch_size = 8;
  c.iterations = 3000;
  return c;
}

Trainer::Trainer(SceneDiffusionModel& model, TrainingConfig config, DiffusionSchedule sched)
    : model_(model),
      config_(config),
      sched_(std::move(sched)),
      optimizer_(model.network().parameters(), nn::AdamConfig{static_cast<float>(config.learning_rate)}),
      rng_(config.seed) {
  config_.validate();
}

double Trainer::step(const std::vector<const TrainingSample*>& batch) {
  if (batch.empty()) throw ContractError("training step on an empty batch");
  auto& net = model_.network();
  net.parameters().zero_grad();
  std::uniform_int_distribution<int> step(1, sched_.steps);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const float weight = 1.0f / static_cast<float>(batch.size());
  double total = 0.0;
  for (const TrainingSample* sample : batch) {
    const int t = step(rng_);
    const double theta = config_.rotation_augmentation ? angle(rng_) : 0.0;
    const bool drop = config_.condition_dropout > 0 && unit(rng_) < config_.condition_dropout;

    // Masks are not network inputs, so only boxes and layout points rotate.
    ConditionSet cond;
    cond.contacts = drop ? std::vector<ContactBox>{} : sample->condition.contacts;
    cond.layout_points = sample->condition.layout_points;
    Scene scene = sample->scene;
    if (theta != 0.0) {
      scene = rotate_scene(scene, theta);
      for (auto& c : cond.contacts) c.box = rotate_box(c.box, theta);
      const double c = std::cos(theta), s = std::sin(theta);
      for (Eigen::Index i = 0; i < cond.layout_points.rows(); ++i) {
        const double x = cond.layout_points(i, 0), z = cond.layout_points(i, 2);
        cond.layout_points(i, 0) = c * x - s * z;
        cond.layout_points(i, 2) = s * x + c * z;
      }
    }
    const SceneTensor x0 = encode_scene(scene, model_.normalization());
    const SceneTensor eps = standard_normal(x0.rows(), x0.cols(), rng_);
    const SceneTensor xt = q_sample(x0, t, eps, sched_);
    total += net.accumulate_gradient(to_float(xt), static_cast<double>(t), model_.contact_rows(cond),
                                     cond.layout_points, to_float(eps), weight);
  }
  if (config_.lr_schedule == LrSchedule::cosine && config_.iterations > 0) {
    const double progress = std::min(1.0, static_cast<double>(optimizer_.steps()) / config_.iterations);
    optimizer_.set_learning_rate(static_cast<float>(config_.learning_rate * 0.5 * (1.0 + std::cos(kPi * progress))));
  }
  optimizer_.step(net.parameters());
  return total / static_cast<double>(batch.size());
}

std::vector<double> Trainer::fit(const std::vector<TrainingSample>& corpus,
                                 const std::function<void(int, double)>& on_step) {
  if (corpus.empty()) throw ContractError("training on an empty corpus");
  std::vector<double> losses;
  losses.reserve(config_.iterations);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::vector<const TrainingSample*> batch(config_.batch_size);
  for (int it = 0; it < config_.iterations; ++it) {
    for (auto& b : batch) b = &corpus[pick(rng_)];
    const double loss = step(batch);
    losses.push_back(loss);
    if (on_step) on_step(it, loss);
  }
  return losses;
}

double evaluate_loss(const SceneDiffusionModel& model, const std::vector<TrainingSample>& samples,
                     const DiffusionSchedule& sched, int draws, std::uint64_t seed) {
  if (samples.empty() || draws <= 0) throw ContractError("loss evaluation needs samples and draws");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> step(1, sched.steps);
  double total = 0.0;
  for (const auto& sample : samples) {
    const ConditionEncoding enc = model.prepare(sample.condition);
    const SceneTensor x0 = encode_scene(sample.scene, model.normalization());
    for (int d = 0; d < draws; ++d) {
      const int t = step(rng);
      const SceneTensor eps = standard_normal(x0.rows(), x0.cols(), rng);
      const SceneTensor pred = model.predict_noise(q_sample(x0, t, eps, sched), t, enc);
      total += (pred - eps).squaredNorm() / static_cast<double>(eps.size());
    }
  }
  return total / (static_cast<double>(samples.size()) * draws);
}

SceneTensor sample_tensor(const SceneDiffusionModel& model, const ConditionSet& cond, const DiffusionSchedule& sched,
                          const SamplerOptions& options, const X0Perturbation& perturb) {
  RespacedSchedule plan;
  if (options.steps > 0 && options.steps != sched.steps) {
    plan = respace(sched, options.steps);
  } else {
    plan.schedule = sched;
    plan.model_step.resize(sched.steps + 1);
    for (int t = 0; t <= sched.steps; ++t) plan.model_step[t] = t;
  }
  const DiffusionSchedule& s = plan.schedule;
  std::mt19937_64 rng(options.seed);
  const ConditionEncoding enc = model.prepare(cond);
  SceneTensor x = standard_normal(model.capacity(), model.row_width(), rng);
  for (int k = s.steps; k >= 1; --k) {
    const int t = plan.model_step[k];
    const SceneTensor eps = model.predict_noise(x, t, enc);
    if (perturb) {
      const SceneTensor x0 = perturb(predict_x0(x, k, eps, s), t);
      x = ddpm_step(x, k, eps, s, rng, &x0);
    } else {
      x = ddpm_step(x, k, eps, s, rng);
    }
  }
  return x;
}

}  // namespace scenediff
