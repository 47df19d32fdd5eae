// Copyright 2026 The Duala Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "duala/backbone.hpp"

#include <cmath>
#include <numbers>

namespace duala {
namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
Matrix<T> uniform(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  return m;
}

template <typename T>
Linear<T> linear_init(Rng& rng, int in, int out) {
  return {uniform<T>(rng, in, out, 1.0 / std::sqrt(double(in))), Matrix<T>::Zero(1, out)};
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename T>
Matrix<T> linear_forward(const Linear<T>& layer, const Matrix<T>& x) {
  Matrix<T> y = x * layer.weight;
  y.rowwise() += layer.bias.row(0);
  return y;
}

template <typename T>
void add_lora(Matrix<T>& y, const LowRankPair<T>& pair, T scale, const Matrix<T>& x, Matrix<T>& mid) {
  mid = x * pair.A.transpose();
  y.noalias() += scale * (mid * pair.B.transpose());
}

// Backward of y = x W + b (+ scale * x A^T B^T). Returns dx.
template <typename T>
Matrix<T> linear_backward(const Linear<T>& layer, const Matrix<T>& x, const Matrix<T>& dy,
                          Linear<T>* grad, const LowRankPair<T>* pair, const Matrix<T>* mid,
                          T scale, LowRankPair<T>* pair_grad) {
  if (grad) {
    grad->weight = x.transpose() * dy;
    grad->bias = dy.colwise().sum();
  }
  Matrix<T> dx = dy * layer.weight.transpose();
  if (pair) {
    const Matrix<T> d_mid = scale * (dy * pair->B);
    if (pair_grad) {
      pair_grad->B = scale * (dy.transpose() * (*mid));
      pair_grad->A = d_mid.transpose() * x;
    }
    dx.noalias() += d_mid * pair->A;
  }
  return dx;
}

template <typename T>
void check_finite(const Matrix<T>& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteError(std::string(what) + " is not finite");
}

}  // namespace

template <typename T>
BackboneParams<T> backbone_init(int latent_dim, const PackDims& dims, Rng& rng) {
  if (latent_dim < 1) throw InvalidArgument("latent dimension must be positive");
  BackboneParams<T> p;
  for (int b = 0; b < kBackboneBlocks; ++b)
    p.blocks.push_back({linear_init<T>(rng, latent_dim, latent_dim), linear_init<T>(rng, latent_dim, latent_dim)});
  p.head_tokens = linear_init<T>(rng, latent_dim, dims.tokens * dims.token_dim);
  p.head_retrieval = linear_init<T>(rng, latent_dim, dims.retrieval_dim);
  p.tokens = dims.tokens;
  p.token_dim = dims.token_dim;
  return p;
}

template <typename T>
LowRankAdapters<T> lora_init(const BackboneParams<T>& params, int rank, Rng& rng, T alpha) {
  if (rank < 1) throw InvalidArgument("low-rank adapter rank must be at least 1");
  LowRankAdapters<T> a;
  a.rank = rank;
  a.scale = (alpha == T(0) ? T(rank) : alpha) / T(rank);
  for (const auto& block : params.blocks) {
    std::array<LowRankPair<T>, 2> pairs;
    const Linear<T>* layers[2] = {&block.fc1, &block.fc2};
    for (int k = 0; k < 2; ++k) {
      const auto in = layers[k]->weight.rows();
      const auto out = layers[k]->weight.cols();
      pairs[k].A = uniform<T>(rng, rank, in, 1.0 / std::sqrt(double(in)));
      pairs[k].B = Matrix<T>::Zero(out, rank);
    }
    a.blocks.push_back(std::move(pairs));
  }
  return a;
}

template <typename T>
Matrix<T> effective_weight(const Linear<T>& layer, const LowRankPair<T>* pair, T scale) {
  Matrix<T> w = layer.weight;
  if (pair) w += scale * (pair->B * pair->A).transpose();
  return w;
}

template <typename T>
BackboneOutput<T> backbone_forward(const BackboneParams<T>& params, const LowRankAdapters<T>* lora,
                                   const Matrix<T>& latents, ForwardOptions options) {
  require_dims(latents.cols() == params.latent_dim(),
               "backbone expects latent dim " + std::to_string(params.latent_dim()) + ", got " +
                   std::to_string(latents.cols()));
  check_finite(latents, "backbone input");
  if (lora) require_dims(lora->blocks.size() == params.blocks.size(), "adapter block count mismatch");

  BackboneOutput<T> out;
  auto& cache = out.cache;
  cache.has_lora = lora != nullptr;
  cache.has_tokens = options.want_tokens;
  cache.params_id = &params;
  cache.params_version = params.version;
  cache.lora_id = lora;
  cache.lora_version = lora ? lora->version : 0;

  Matrix<T> x = latents;
  const auto h = static_cast<T>(x.cols());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& block = params.blocks[b];
    BlockCache<T> bc;
    bc.input = x;
    const auto mean = x.rowwise().mean();
    Matrix<T> centered = x.colwise() - mean;
    const auto var = centered.array().square().rowwise().sum() / h;
    bc.inv_std = (var + T(kLayerNormEps)).rsqrt().matrix();
    bc.normalized = centered.array().colwise() * bc.inv_std.array();

    bc.pre_activation = linear_forward(block.fc1, bc.normalized);
    if (lora) add_lora(bc.pre_activation, lora->blocks[b][0], lora->scale, bc.normalized, bc.lora_mid1);
    bc.activation = bc.pre_activation.unaryExpr([](T v) { return gelu(v); });
    Matrix<T> branch = linear_forward(block.fc2, bc.activation);
    if (lora) add_lora(branch, lora->blocks[b][1], lora->scale, bc.activation, bc.lora_mid2);
    x = bc.input + branch;
    cache.blocks.push_back(std::move(bc));
  }
  cache.trunk = x;

  if (options.want_tokens) out.tokens = linear_forward(params.head_tokens, x);
  cache.retrieval_raw = linear_forward(params.head_retrieval, x);
  cache.retrieval_norm = cache.retrieval_raw.rowwise().norm();
  if (!cache.retrieval_norm.allFinite()) throw NonFiniteError("backbone output is not finite");
  if (!(cache.retrieval_norm.array() > T(0)).all())
    throw DegenerateError("retrieval head produced a zero vector");
  out.retrieval = cache.retrieval_raw.array().colwise() / cache.retrieval_norm.array();
  cache.retrieval = out.retrieval;
  return out;
}

template <typename T>
BackboneGrads<T> backbone_backward(const BackboneParams<T>& params, const LowRankAdapters<T>* lora,
                                   const BackboneCache<T>& cache, const Matrix<T>& d_tokens,
                                   const Matrix<T>& d_retrieval, BackwardOptions options) {
  if (cache.params_id != &params || cache.params_version != params.version ||
      cache.lora_id != lora || cache.lora_version != (lora ? lora->version : 0) ||
      cache.blocks.size() != params.blocks.size())
    throw StateError("stale backbone cache: parameters changed since the forward pass");
  const auto n = cache.trunk.rows();
  require_dims(d_retrieval.rows() == n && d_retrieval.cols() == params.retrieval_dim(),
               "retrieval gradient shape mismatch");
  const bool use_tokens = d_tokens.size() != 0;
  if (use_tokens) {
    if (!cache.has_tokens) throw StateError("token gradient given but forward skipped the token head");
    require_dims(d_tokens.rows() == n && d_tokens.cols() == params.head_tokens.weight.cols(),
                 "token gradient shape mismatch");
  }

  BackboneGrads<T> g;
  g.has_params = options.base_params;
  g.has_lora = options.lora && lora != nullptr;
  if (g.has_params) {
    g.params.blocks.resize(params.blocks.size());
    g.params.tokens = params.tokens;
    g.params.token_dim = params.token_dim;
  }
  if (g.has_lora) {
    g.lora.rank = lora->rank;
    g.lora.scale = lora->scale;
    g.lora.blocks.resize(lora->blocks.size());
  }

  // Normalization: r = u / |u|.
  const auto& r = cache.retrieval;
  const Eigen::Matrix<T, Eigen::Dynamic, 1> dot = (r.array() * d_retrieval.array()).rowwise().sum();
  Matrix<T> d_raw = (d_retrieval - (r.array().colwise() * dot.array()).matrix()).array().colwise() /
                    cache.retrieval_norm.array();

  Matrix<T> dx = linear_backward<T>(params.head_retrieval, cache.trunk, d_raw,
                                    g.has_params ? &g.params.head_retrieval : nullptr, nullptr,
                                    nullptr, T(1), nullptr);
  if (use_tokens) {
    dx += linear_backward<T>(params.head_tokens, cache.trunk, d_tokens,
                             g.has_params ? &g.params.head_tokens : nullptr, nullptr, nullptr, T(1),
                             nullptr);
  } else if (g.has_params) {
    g.params.head_tokens.weight = Matrix<T>::Zero(params.head_tokens.weight.rows(), params.head_tokens.weight.cols());
    g.params.head_tokens.bias = Matrix<T>::Zero(1, params.head_tokens.bias.cols());
  }

  const T scale = lora ? lora->scale : T(1);
  for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
    const auto& block = params.blocks[bi];
    const auto& bc = cache.blocks[bi];
    const LowRankPair<T>* p1 = lora ? &lora->blocks[bi][0] : nullptr;
    const LowRankPair<T>* p2 = lora ? &lora->blocks[bi][1] : nullptr;
    LowRankPair<T>* g1 = g.has_lora ? &g.lora.blocks[bi][0] : nullptr;
    LowRankPair<T>* g2 = g.has_lora ? &g.lora.blocks[bi][1] : nullptr;

    Matrix<T> d_act = linear_backward<T>(block.fc2, bc.activation, dx,
                                         g.has_params ? &g.params.blocks[bi].fc2 : nullptr, p2,
                                         &bc.lora_mid2, scale, g2);
    Matrix<T> d_pre = d_act.array() * bc.pre_activation.unaryExpr([](T v) { return gelu_grad(v); }).array();
    Matrix<T> d_norm = linear_backward<T>(block.fc1, bc.normalized, d_pre,
                                          g.has_params ? &g.params.blocks[bi].fc1 : nullptr, p1,
                                          &bc.lora_mid1, scale, g1);
    // Layer norm without affine parameters.
    const auto mean_d = d_norm.rowwise().mean();
    const Eigen::Matrix<T, Eigen::Dynamic, 1> mean_dx =
        (d_norm.array() * bc.normalized.array()).rowwise().mean();
    Matrix<T> d_in = (d_norm.colwise() - mean_d) - (bc.normalized.array().colwise() * mean_dx.array()).matrix();
    d_in = d_in.array().colwise() * bc.inv_std.array();
    dx += d_in;
  }
  g.latents = std::move(dx);
  return g;
}

#define DUALA_INSTANTIATE(T)                                                                        \
  template BackboneParams<T> backbone_init(int, const PackDims&, Rng&);                            \
  template LowRankAdapters<T> lora_init(const BackboneParams<T>&, int, Rng&, T);                   \
  template Matrix<T> effective_weight(const Linear<T>&, const LowRankPair<T>*, T);                 \
  template BackboneOutput<T> backbone_forward(const BackboneParams<T>&, const LowRankAdapters<T>*, \
                                              const Matrix<T>&, ForwardOptions);                   \
  template BackboneGrads<T> backbone_backward(const BackboneParams<T>&, const LowRankAdapters<T>*, \
                                              const BackboneCache<T>&, const Matrix<T>&,           \
                                              const Matrix<T>&, BackwardOptions);
DUALA_INSTANTIATE(float)
DUALA_INSTANTIATE(double)
#undef DUALA_INSTANTIATE

}  // namespace duala
