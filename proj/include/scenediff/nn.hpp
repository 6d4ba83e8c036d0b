#pragma once

// Minimal reverse-mode building blocks for the set denoiser. Every layer
// exposes forward (optionally filling a cache) and a backward that
// accumulates parameter gradients into the ParameterStore and returns the
// gradient w.r.t. its input.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace scenediff::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class ParameterStore {
 public:
  int add(std::string name, int rows, int cols);

  Parameter& at(int id) { return params_[id]; }
  const Parameter& at(int id) const { return params_[id]; }
  const Matrix& value(int id) const { return params_[id].value; }
  Matrix& grad(int id) { return params_[id].grad; }

  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  void zero_grad();
  long long scalar_count() const;

 private:
  std::vector<Parameter> params_;
};

struct Linear {
  int weight = -1;  // in x out
  int bias = -1;    // 1 x out
  int in = 0;
  int out = 0;

  static Linear create(ParameterStore& store, const std::string& name, int in, int out);

  Matrix forward(const ParameterStore& store, const Matrix& x) const;
  Matrix backward(ParameterStore& store, const Matrix& x, const Matrix& dy) const;
};

// Xavier-uniform weights and zero biases.
void init_xavier(ParameterStore& store, const Linear& layer, std::mt19937_64& rng);
void init_zero(ParameterStore& store, const Linear& layer);

Matrix silu(const Matrix& x);
Matrix silu_backward(const Matrix& x, const Matrix& dy);
Matrix gelu(const Matrix& x);  // tanh approximation
Matrix gelu_backward(const Matrix& x, const Matrix& dy);
Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& x, const Matrix& dy);

struct LayerNormCache {
  Matrix normalized;
  Eigen::VectorXf inv_std;
};

// Row-wise normalization without affine parameters.
Matrix layer_norm(const Matrix& x, LayerNormCache* cache);
Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& dy);

struct AttentionCache {
  Matrix input;
  Matrix qkv;
  Matrix heads_out;
  std::vector<Matrix> probs;
};

// Multi-head self-attention over the rows of x. With `enabled` false every
// row attends only to itself (used for coupling ablations).
struct MultiHeadAttention {
  Linear qkv;
  Linear proj;
  int heads = 1;
  int width = 0;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, int width, int heads);

  Matrix forward(const ParameterStore& store, const Matrix& x, bool enabled, AttentionCache* cache) const;
  Matrix backward(ParameterStore& store, const AttentionCache& cache, const Matrix& dy, bool enabled) const;
};

// Sinusoidal embedding of a scalar step with frequency base 1e4.
RowVector timestep_sinusoid(double t, int width);

struct AdamConfig {
  float learning_rate = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig config);

  void step(ParameterStore& store);
  long long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(float lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long long steps_ = 0;
};

}  // namespace scenediff::nn
