#include "scenediff/nn.hpp"

#include <cmath>

namespace scenediff::nn {

int ParameterStore::add(std::string name, int rows, int cols) {
  params_.push_back(Parameter{std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return static_cast<int>(params_.size()) - 1;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

long long ParameterStore::scalar_count() const {
  long long n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", in, out);
  l.bias = store.add(name + ".bias", 1, out);
  return l;
}

Matrix Linear::forward(const ParameterStore& store, const Matrix& x) const {
  Matrix y(x.rows(), out);
  y.noalias() = x * store.value(weight);
  y.rowwise() += store.value(bias).row(0);
  return y;
}

Matrix Linear::backward(ParameterStore& store, const Matrix& x, const Matrix& dy) const {
  store.grad(weight).noalias() += x.transpose() * dy;
  store.grad(bias) += dy.colwise().sum();
  Matrix dx(dy.rows(), in);
  dx.noalias() = dy * store.value(weight).transpose();
  return dx;
}

void init_xavier(ParameterStore& store, const Linear& layer, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(layer.in + layer.out));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Matrix& w = store.at(layer.weight).value;
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  store.at(layer.bias).value.setZero();
}

void init_zero(ParameterStore& store, const Linear& layer) {
  store.at(layer.weight).value.setZero();
  store.at(layer.bias).value.setZero();
}

Matrix silu(const Matrix& x) {
  return x.unaryExpr([](float v) { return v / (1.0f + std::exp(-v)); });
}

Matrix silu_backward(const Matrix& x, const Matrix& dy) {
  return dy.binaryExpr(x, [](float g, float v) {
    const float s = 1.0f / (1.0f + std::exp(-v));
    return g * (s * (1.0f + v * (1.0f - s)));
  });
}

namespace {
constexpr float kGeluA = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluB = 0.044715f;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](float v) {
    return 0.5f * v * (1.0f + std::tanh(kGeluA * (v + kGeluB * v * v * v)));
  });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  return dy.binaryExpr(x, [](float g, float v) {
    const float t = std::tanh(kGeluA * (v + kGeluB * v * v * v));
    const float d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * kGeluA * (1.0f + 3.0f * kGeluB * v * v);
    return g * d;
  });
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0f); }

Matrix relu_backward(const Matrix& x, const Matrix& dy) {
  return dy.binaryExpr(x, [](float g, float v) { return v > 0.0f ? g : 0.0f; });
}

Matrix layer_norm(const Matrix& x, LayerNormCache* cache) {
  constexpr float kEps = 1e-6f;
  const Eigen::Index n = x.rows();
  const float width = static_cast<float>(x.cols());
  Matrix y(n, x.cols());
  Eigen::VectorXf inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const float mean = x.row(i).sum() / width;
    const auto centered = (x.row(i).array() - mean);
    const float var = centered.square().sum() / width;
    inv_std[i] = 1.0f / std::sqrt(var + kEps);
    y.row(i) = centered * inv_std[i];
  }
  if (cache) {
    cache->normalized = y;
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& dy) {
  const Eigen::Index n = dy.rows();
  const float width = static_cast<float>(dy.cols());
  Matrix dx(n, dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto y = cache.normalized.row(i).array();
    const auto g = dy.row(i).array();
    const float mean_g = g.sum() / width;
    const float mean_gy = (g * y).sum() / width;
    dx.row(i) = cache.inv_std[i] * (g - mean_g - y * mean_gy);
  }
  return dx;
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, int width,
                                              int heads) {
  MultiHeadAttention a;
  a.width = width;
  a.heads = heads;
  a.qkv = Linear::create(store, name + ".qkv", width, 3 * width);
  a.proj = Linear::create(store, name + ".proj", width, width);
  return a;
}

Matrix MultiHeadAttention::forward(const ParameterStore& store, const Matrix& x, bool enabled,
                                   AttentionCache* cache) const {
  const Eigen::Index n = x.rows();
  const int dh = width / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Matrix qkv_out = qkv.forward(store, x);
  Matrix heads_out(n, width);
  std::vector<Matrix> probs;
  if (enabled) {
    probs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv_out.middleCols(h * dh, dh);
      const auto k = qkv_out.middleCols(width + h * dh, dh);
      const auto v = qkv_out.middleCols(2 * width + h * dh, dh);
      Matrix s(n, n);
      s.noalias() = q * k.transpose();
      s *= scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const float mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      heads_out.middleCols(h * dh, dh).noalias() = s * v;
      probs.push_back(std::move(s));
    }
  } else {
    heads_out = qkv_out.middleCols(2 * width, width);
  }
  Matrix y = proj.forward(store, heads_out);
  if (cache) {
    cache->input = x;
    cache->qkv = std::move(qkv_out);
    cache->heads_out = std::move(heads_out);
    cache->probs = std::move(probs);
  }
  return y;
}

Matrix MultiHeadAttention::backward(ParameterStore& store, const AttentionCache& cache, const Matrix& dy,
                                    bool enabled) const {
  const Eigen::Index n = dy.rows();
  const int dh = width / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Matrix d_heads = proj.backward(store, cache.heads_out, dy);
  Matrix d_qkv = Matrix::Zero(n, 3 * width);
  if (enabled) {
    for (int h = 0; h < heads; ++h) {
      const auto q = cache.qkv.middleCols(h * dh, dh);
      const auto k = cache.qkv.middleCols(width + h * dh, dh);
      const auto v = cache.qkv.middleCols(2 * width + h * dh, dh);
      const Matrix& p = cache.probs[h];
      const auto d_out = d_heads.middleCols(h * dh, dh);
      Matrix dp(n, n);
      dp.noalias() = d_out * v.transpose();
      d_qkv.middleCols(2 * width + h * dh, dh).noalias() = p.transpose() * d_out;
      Matrix ds(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const float dot = (dp.row(i).array() * p.row(i).array()).sum();
        ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
      }
      ds *= scale;
      d_qkv.middleCols(h * dh, dh).noalias() = ds * k;
      d_qkv.middleCols(width + h * dh, dh).noalias() = ds.transpose() * q;
    }
  } else {
    d_qkv.middleCols(2 * width, width) = d_heads;
  }
  return qkv.backward(store, cache.input, d_qkv);
}

RowVector timestep_sinusoid(double t, int width) {
  RowVector out(width);
  const int half = width / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1e4) * i / half);
    out[i] = static_cast<float>(std::cos(t * freq));
    out[half + i] = static_cast<float>(std::sin(t * freq));
  }
  if (width % 2) out[width - 1] = 0.0f;
  return out;
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
  for (const auto& p : store.all()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParameterStore& store) {
  ++steps_;
  const float b1 = config_.beta1, b2 = config_.beta2;
  const float c1 = 1.0f - static_cast<float>(std::pow(b1, static_cast<double>(steps_)));
  const float c2 = 1.0f - static_cast<float>(std::pow(b2, static_cast<double>(steps_)));
  const float lr = config_.learning_rate;
  const float eps = config_.epsilon;
  auto& params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i].grad.array();
    m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.square();
    params[i].value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace scenediff::nn
