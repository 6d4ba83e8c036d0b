#pragma once

#include "scenediff/nn.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <vector>

namespace scenediff {

struct DenoiserConfig {
  int num_categories = 8;
  int hidden = 128;
  int blocks = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int point_hidden = 64;
  int point_features = 64;
  // Layout points are divided by this before the point encoder.
  double point_scale = 3.1;

  int row_width() const { return num_categories + 9; }
  // 512 wide, 4 blocks, 8 heads.
  static DenoiserConfig full_scale(int num_categories);
  void validate() const;

  bool operator==(const DenoiserConfig&) const = default;
};

// Condition embeddings that stay fixed along one sampling chain.
struct ConditionEncoding {
  nn::Matrix contact_embedding;  // L x hidden
  nn::RowVector layout_embedding;  // 1 x hidden

  int contact_count() const { return static_cast<int>(contact_embedding.rows()); }
};

// Permutation-equivariant set denoiser eps_theta(x_t, t, C).
//
// Object rows and contact boxes share one input projection. Contact row i is
// modulated by (contact_i + layout + time) embeddings; every other row by
// (layout + time). Each block is attention + MLP with adaLN-Zero modulation,
// so with the modulation weights at zero every block is the identity map.
class Denoiser {
 public:
  Denoiser(DenoiserConfig config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }

  // contact_rows: L x row_width encoded contact boxes. points: P x 3 meters.
  ConditionEncoding encode_condition(const nn::Matrix& contact_rows, const Eigen::MatrixX3d& points) const;

  // Predicted noise, N x row_width. attention=false restricts every row to
  // attend only to itself.
  nn::Matrix predict(const nn::Matrix& x_t, double t, const ConditionEncoding& cond,
                     bool attention = true) const;

  // Forward + backward of mean((eps_hat - target)^2) for one sample, adding
  // weight * gradient into the parameter store. Returns the unweighted MSE.
  double accumulate_gradient(const nn::Matrix& x_t, double t, const nn::Matrix& contact_rows,
                             const Eigen::MatrixX3d& points, const nn::Matrix& target, float weight);

 private:
  struct Block {
    nn::Linear modulation;  // hidden -> 6 hidden, zero init
    nn::MultiHeadAttention attention;
    nn::Linear fc1;
    nn::Linear fc2;
  };
  struct Tape;
  struct ConditionTape;

  ConditionEncoding encode_condition(const nn::Matrix& contact_rows, const Eigen::MatrixX3d& points,
                                     ConditionTape* tape) const;
  nn::Matrix forward(const nn::Matrix& x_t, double t, const ConditionEncoding& cond, bool attention,
                     Tape* tape) const;
  // Returns gradients w.r.t. the contact and layout embeddings.
  void backward(const Tape& tape, const nn::Matrix& d_out, nn::Matrix& d_contact, nn::RowVector& d_layout);
  void backward_condition(const ConditionTape& tape, const nn::Matrix& d_contact, const nn::RowVector& d_layout);

  DenoiserConfig config_;
  nn::ParameterStore params_;
  nn::Linear in1_, in2_;
  nn::Linear time1_, time2_;
  nn::Linear point1_, point2_, point_out_;
  std::vector<Block> blocks_;
  nn::Linear final_modulation_;  // hidden -> 2 hidden, zero init
  nn::Linear out_;
};

}  // namespace scenediff
