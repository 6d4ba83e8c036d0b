#include "scenediff/denoiser.hpp"

#include "scenediff/errors.hpp"

#include <random>

namespace scenediff {

using nn::Matrix;
using nn::RowVector;

DenoiserConfig DenoiserConfig::full_scale(int num_categories) {
  DenoiserConfig c;
  c.num_categories = num_categories;
  c.hidden = 512;
  c.blocks = 4;
  c.heads = 8;
  c.point_hidden = 128;
  c.point_features = 256;
  return c;
}

void DenoiserConfig::validate() const {
  if (num_categories <= 0) throw ConfigError("denoiser needs at least one category");
  if (hidden <= 0 || blocks <= 0 || heads <= 0 || mlp_ratio <= 0) throw ConfigError("denoiser widths must be positive");
  if (hidden % heads != 0) throw ConfigError("hidden width must be divisible by the head count");
  if (hidden % 2 != 0) throw ConfigError("hidden width must be even for the timestep embedding");
  if (point_hidden <= 0 || point_features <= 0 || !(point_scale > 0)) throw ConfigError("point encoder widths must be positive");
}

struct Denoiser::ConditionTape {
  Matrix contact_in;
  Matrix contact_pre;
  Matrix points_in;
  Matrix p1_pre;
  Matrix p1_act;
  Matrix p2_pre;
  Matrix p2_act;
  std::vector<int> argmax;
  Matrix pooled;
};

struct Denoiser::Tape {
  struct BlockTape {
    Matrix h_in;
    Matrix mods;  // (L+1) x 6H
    nn::LayerNormCache ln1;
    Matrix a_mod;
    nn::AttentionCache attn;
    Matrix attn_out;
    Matrix h_mid;
    nn::LayerNormCache ln2;
    Matrix m_mod;
    Matrix f1_pre;
    Matrix f1_act;
    Matrix mlp_out;
  };

  int contact_count = 0;
  bool attention = true;
  Matrix x;
  Matrix in_pre;
  Matrix in_act;
  Matrix t_sin;
  Matrix t_pre;
  Matrix u;
  Matrix su;
  std::vector<BlockTape> blocks;
  Matrix h_final;
  nn::LayerNormCache ln_final;
  Matrix final_mods;
  Matrix z;
};

namespace {

// Row i of an N-row tensor reads modulation row min(i, L).
Matrix expand_rows(const Matrix& unique, Eigen::Index n, int contact_count) {
  Matrix out(n, unique.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = unique.row(std::min<Eigen::Index>(i, contact_count));
  return out;
}

Matrix collapse_rows(const Matrix& expanded, int contact_count) {
  Matrix out = Matrix::Zero(contact_count + 1, expanded.cols());
  for (Eigen::Index i = 0; i < expanded.rows(); ++i) out.row(std::min<Eigen::Index>(i, contact_count)) += expanded.row(i);
  return out;
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int h = config_.hidden;
  const int d = config_.row_width();
  in1_ = nn::Linear::create(params_, "input.fc1", d, h);
  in2_ = nn::Linear::create(params_, "input.fc2", h, h);
  time1_ = nn::Linear::create(params_, "time.fc1", h, h);
  time2_ = nn::Linear::create(params_, "time.fc2", h, h);
  point1_ = nn::Linear::create(params_, "layout.fc1", 3, config_.point_hidden);
  point2_ = nn::Linear::create(params_, "layout.fc2", config_.point_hidden, config_.point_features);
  point_out_ = nn::Linear::create(params_, "layout.out", config_.point_features, h);
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string name = "block" + std::to_string(b);
    Block blk;
    blk.modulation = nn::Linear::create(params_, name + ".modulation", h, 6 * h);
    blk.attention = nn::MultiHeadAttention::create(params_, name + ".attn", h, config_.heads);
    blk.fc1 = nn::Linear::create(params_, name + ".mlp.fc1", h, config_.mlp_ratio * h);
    blk.fc2 = nn::Linear::create(params_, name + ".mlp.fc2", config_.mlp_ratio * h, h);
    blocks_.push_back(blk);
  }
  final_modulation_ = nn::Linear::create(params_, "final.modulation", h, 2 * h);
  out_ = nn::Linear::create(params_, "final.out", h, d);

  std::mt19937_64 rng(seed);
  for (const auto* l : {&in1_, &in2_, &time1_, &time2_, &point1_, &point2_, &point_out_}) {
    nn::init_xavier(params_, *l, rng);
  }
  for (const auto& blk : blocks_) {
    nn::init_zero(params_, blk.modulation);
    nn::init_xavier(params_, blk.attention.qkv, rng);
    nn::init_xavier(params_, blk.attention.proj, rng);
    nn::init_xavier(params_, blk.fc1, rng);
    nn::init_xavier(params_, blk.fc2, rng);
  }
  nn::init_zero(params_, final_modulation_);
  nn::init_xavier(params_, out_, rng);
}

ConditionEncoding Denoiser::encode_condition(const Matrix& contact_rows, const Eigen::MatrixX3d& points) const {
  return encode_condition(contact_rows, points, nullptr);
}

ConditionEncoding Denoiser::encode_condition(const Matrix& contact_rows, const Eigen::MatrixX3d& points,
                                             ConditionTape* tape) const {
  if (contact_rows.rows() > 0 && contact_rows.cols() != config_.row_width()) {
    throw ContractError("contact rows have the wrong channel count");
  }
  if (points.rows() == 0) throw ContractError("layout point set is empty");
  ConditionEncoding enc;
  if (contact_rows.rows() > 0) {
    Matrix pre = in1_.forward(params_, contact_rows);
    enc.contact_embedding = in2_.forward(params_, nn::silu(pre));
    if (tape) {
      tape->contact_in = contact_rows;
      tape->contact_pre = std::move(pre);
    }
  } else {
    enc.contact_embedding = Matrix(0, config_.hidden);
  }

  Matrix pts = (points / config_.point_scale).cast<float>();
  Matrix p1_pre = point1_.forward(params_, pts);
  Matrix p1_act = nn::relu(p1_pre);
  Matrix p2_pre = point2_.forward(params_, p1_act);
  Matrix p2_act = nn::relu(p2_pre);
  Matrix pooled(1, p2_act.cols());
  std::vector<int> argmax(p2_act.cols(), 0);
  for (Eigen::Index c = 0; c < p2_act.cols(); ++c) {
    Eigen::Index best;
    pooled(0, c) = p2_act.col(c).maxCoeff(&best);
    argmax[c] = static_cast<int>(best);
  }
  enc.layout_embedding = point_out_.forward(params_, pooled).row(0);
  if (tape) {
    tape->points_in = std::move(pts);
    tape->p1_pre = std::move(p1_pre);
    tape->p1_act = std::move(p1_act);
    tape->p2_pre = std::move(p2_pre);
    tape->p2_act = std::move(p2_act);
    tape->argmax = std::move(argmax);
    tape->pooled = std::move(pooled);
  }
  return enc;
}

Matrix Denoiser::predict(const Matrix& x_t, double t, const ConditionEncoding& cond, bool attention) const {
  return forward(x_t, t, cond, attention, nullptr);
}

Matrix Denoiser::forward(const Matrix& x_t, double t, const ConditionEncoding& cond, bool attention,
                         Tape* tape) const {
  const Eigen::Index n = x_t.rows();
  const int h = config_.hidden;
  const int contacts = cond.contact_count();
  if (x_t.cols() != config_.row_width()) throw ContractError("scene tensor has the wrong channel count");
  if (contacts > n) throw ContractError("more contact boxes than object rows");
  if (cond.layout_embedding.cols() != h) throw ContractError("condition encoding has the wrong width");
  if (!x_t.allFinite()) throw ContractError("scene tensor has non-finite entries");

  Matrix in_pre = in1_.forward(params_, x_t);
  Matrix in_act = nn::silu(in_pre);
  Matrix hcur = in2_.forward(params_, in_act);

  Matrix t_sin = nn::timestep_sinusoid(t, h);
  Matrix t_pre = time1_.forward(params_, t_sin);
  const Matrix temb = time2_.forward(params_, nn::silu(t_pre));

  Matrix u(contacts + 1, h);
  for (int i = 0; i < contacts; ++i) u.row(i) = cond.contact_embedding.row(i);
  u.row(contacts).setZero();
  u.rowwise() += cond.layout_embedding + temb.row(0);
  Matrix su = nn::silu(u);

  if (tape) {
    tape->contact_count = contacts;
    tape->attention = attention;
    tape->x = x_t;
    tape->in_pre = std::move(in_pre);
    tape->in_act = std::move(in_act);
    tape->t_sin = std::move(t_sin);
    tape->t_pre = std::move(t_pre);
    tape->blocks.clear();
    tape->blocks.resize(blocks_.size());
  }

  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    Matrix mods = blk.modulation.forward(params_, su);
    const Matrix e = expand_rows(mods, n, contacts);
    const auto shift1 = e.middleCols(0, h), scale1 = e.middleCols(h, h), gate1 = e.middleCols(2 * h, h);
    const auto shift2 = e.middleCols(3 * h, h), scale2 = e.middleCols(4 * h, h), gate2 = e.middleCols(5 * h, h);

    nn::LayerNormCache ln1;
    const Matrix a = nn::layer_norm(hcur, tape ? &ln1 : nullptr);
    Matrix a_mod = a.array() * (1.0f + scale1.array()) + shift1.array();
    nn::AttentionCache ac;
    Matrix attn_out = blk.attention.forward(params_, a_mod, attention, tape ? &ac : nullptr);
    Matrix h_mid = hcur.array() + gate1.array() * attn_out.array();

    nn::LayerNormCache ln2;
    const Matrix m = nn::layer_norm(h_mid, tape ? &ln2 : nullptr);
    Matrix m_mod = m.array() * (1.0f + scale2.array()) + shift2.array();
    Matrix f1_pre = blk.fc1.forward(params_, m_mod);
    Matrix f1_act = nn::gelu(f1_pre);
    Matrix mlp_out = blk.fc2.forward(params_, f1_act);
    Matrix h_out = h_mid.array() + gate2.array() * mlp_out.array();

    if (tape) {
      auto& bt = tape->blocks[b];
      bt.h_in = std::move(hcur);
      bt.mods = std::move(mods);
      bt.ln1 = std::move(ln1);
      bt.a_mod = std::move(a_mod);
      bt.attn = std::move(ac);
      bt.attn_out = std::move(attn_out);
      bt.h_mid = std::move(h_mid);
      bt.ln2 = std::move(ln2);
      bt.m_mod = std::move(m_mod);
      bt.f1_pre = std::move(f1_pre);
      bt.f1_act = std::move(f1_act);
      bt.mlp_out = std::move(mlp_out);
    }
    hcur = std::move(h_out);
  }

  Matrix final_mods = final_modulation_.forward(params_, su);
  const Matrix fe = expand_rows(final_mods, n, contacts);
  nn::LayerNormCache lnf;
  const Matrix hn = nn::layer_norm(hcur, tape ? &lnf : nullptr);
  Matrix z = hn.array() * (1.0f + fe.middleCols(h, h).array()) + fe.middleCols(0, h).array();
  Matrix out = out_.forward(params_, z);
  if (tape) {
    tape->u = std::move(u);
    tape->su = std::move(su);
    tape->h_final = std::move(hcur);
    tape->ln_final = std::move(lnf);
    tape->final_mods = std::move(final_mods);
    tape->z = std::move(z);
  }
  return out;
}

void Denoiser::backward(const Tape& tape, const Matrix& d_out, Matrix& d_contact, RowVector& d_layout) {
  const int h = config_.hidden;
  const int contacts = tape.contact_count;
  const Eigen::Index n = d_out.rows();

  Matrix d_su = Matrix::Zero(contacts + 1, h);

  // Final adaLN + projection.
  const Matrix dz = out_.backward(params_, tape.z, d_out);
  const Matrix fe = expand_rows(tape.final_mods, n, contacts);
  const Matrix& hn = tape.ln_final.normalized;
  Matrix d_fe(n, 2 * h);
  d_fe.middleCols(0, h) = dz;
  d_fe.middleCols(h, h) = dz.array() * hn.array();
  Matrix d_hn = dz.array() * (1.0f + fe.middleCols(h, h).array());
  Matrix dh = nn::layer_norm_backward(tape.ln_final, d_hn);
  d_su += final_modulation_.backward(params_, tape.su, collapse_rows(d_fe, contacts));

  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const Block& blk = blocks_[bi];
    const auto& bt = tape.blocks[bi];
    const Matrix e = expand_rows(bt.mods, n, contacts);
    const auto scale1 = e.middleCols(h, h), gate1 = e.middleCols(2 * h, h);
    const auto scale2 = e.middleCols(4 * h, h), gate2 = e.middleCols(5 * h, h);
    Matrix d_e(n, 6 * h);

    // h_out = h_mid + gate2 * mlp
    d_e.middleCols(5 * h, h) = dh.array() * bt.mlp_out.array();
    const Matrix d_mlp = dh.array() * gate2.array();
    Matrix d_h_mid = dh;
    const Matrix d_f1_act = blk.fc2.backward(params_, bt.f1_act, d_mlp);
    const Matrix d_f1 = nn::gelu_backward(bt.f1_pre, d_f1_act);
    const Matrix d_m_mod = blk.fc1.backward(params_, bt.m_mod, d_f1);
    d_e.middleCols(3 * h, h) = d_m_mod;
    d_e.middleCols(4 * h, h) = d_m_mod.array() * bt.ln2.normalized.array();
    d_h_mid += nn::layer_norm_backward(bt.ln2, d_m_mod.array() * (1.0f + scale2.array()));

    // h_mid = h_in + gate1 * attn
    d_e.middleCols(2 * h, h) = d_h_mid.array() * bt.attn_out.array();
    const Matrix d_attn = d_h_mid.array() * gate1.array();
    const Matrix d_a_mod = blk.attention.backward(params_, bt.attn, d_attn, tape.attention);
    d_e.middleCols(0, h) = d_a_mod;
    d_e.middleCols(h, h) = d_a_mod.array() * bt.ln1.normalized.array();
    dh = d_h_mid + nn::layer_norm_backward(bt.ln1, d_a_mod.array() * (1.0f + scale1.array()));

    d_su += blk.modulation.backward(params_, tape.su, collapse_rows(d_e, contacts));
  }

  const Matrix d_in_act = in2_.backward(params_, tape.in_act, dh);
  in1_.backward(params_, tape.x, nn::silu_backward(tape.in_pre, d_in_act));

  // u = [contact_i | 0] + layout + time, shared across all rows.
  const Matrix d_u = nn::silu_backward(tape.u, d_su);
  const Matrix d_common = d_u.colwise().sum();
  d_layout = d_common.row(0);
  d_contact = d_u.topRows(contacts);
  const Matrix d_t_act = time2_.backward(params_, nn::silu(tape.t_pre), d_common);
  time1_.backward(params_, tape.t_sin, nn::silu_backward(tape.t_pre, d_t_act));
}

void Denoiser::backward_condition(const ConditionTape& tape, const Matrix& d_contact, const RowVector& d_layout) {
  if (d_contact.rows() > 0) {
    const Matrix d_act = in2_.backward(params_, nn::silu(tape.contact_pre), d_contact);
    in1_.backward(params_, tape.contact_in, nn::silu_backward(tape.contact_pre, d_act));
  }
  const Matrix d_pooled = point_out_.backward(params_, tape.pooled, d_layout);
  Matrix d_p2 = Matrix::Zero(tape.p2_act.rows(), tape.p2_act.cols());
  for (Eigen::Index c = 0; c < d_p2.cols(); ++c) d_p2(tape.argmax[c], c) = d_pooled(0, c);
  const Matrix d_p1_act = point2_.backward(params_, tape.p1_act, nn::relu_backward(tape.p2_pre, d_p2));
  point1_.backward(params_, tape.points_in, nn::relu_backward(tape.p1_pre, d_p1_act));
}

double Denoiser::accumulate_gradient(const Matrix& x_t, double t, const Matrix& contact_rows,
                                     const Eigen::MatrixX3d& points, const Matrix& target, float weight) {
  ConditionTape ctape;
  const ConditionEncoding enc = encode_condition(contact_rows, points, &ctape);
  Tape tape;
  const Matrix pred = forward(x_t, t, enc, true, &tape);
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ContractError("target shape mismatch");
  const Matrix diff = pred - target;
  const double count = static_cast<double>(diff.size());
  const double mse = static_cast<double>(diff.squaredNorm()) / count;
  const Matrix d_out = diff * static_cast<float>(2.0 * weight / count);
  Matrix d_contact;
  RowVector d_layout;
  backward(tape, d_out, d_contact, d_layout);
  backward_condition(ctape, d_contact, d_layout);
  return mse;
}

}  // namespace scenediff
