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
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "duala/data_model.hpp"
#include "duala/tensor.hpp"

namespace duala {

/// y = x * weight + bias, weight stored in_features x out_features.
template <typename T>
struct Linear {
  Matrix<T> weight;
  Matrix<T> bias;  // 1 x out
};

/// x + fc2(gelu(fc1(layer_norm(x)))).
template <typename T>
struct ResidualBlock {
  Linear<T> fc1;
  Linear<T> fc2;
};

inline constexpr int kBackboneBlocks = 4;

/// Shared decoder from the h-dimensional latent space to a T x E token grid
/// and an L2-normalized retrieval embedding of length e.
template <typename T>
struct BackboneParams {
  std::vector<ResidualBlock<T>> blocks;
  Linear<T> head_tokens;     // h -> T*E
  Linear<T> head_retrieval;  // h -> e
  int tokens = 0;
  int token_dim = 0;
  // Bumped by touch() after any in-place update; forward caches record it.
  std::uint64_t version = 0;

  int latent_dim() const { return static_cast<int>(head_retrieval.weight.rows()); }
  int retrieval_dim() const { return static_cast<int>(head_retrieval.weight.cols()); }
  void touch() { ++version; }

  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const;
};

/// Trainable delta on a frozen linear layer. In the h_out x h_in
/// convention the effective weight is W + scale * B * A; since Linear stores
/// the transpose, the delta added to `weight` is scale * (B * A)^T.
template <typename T>
struct LowRankPair {
  Matrix<T> A;  // r x in
  Matrix<T> B;  // out x r
};

template <typename T>
struct LowRankAdapters {
  int rank = 0;
  T scale = T(1);
  std::vector<std::array<LowRankPair<T>, 2>> blocks;  // {fc1, fc2} per block
  std::uint64_t version = 0;

  void touch() { ++version; }

  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const;
};

template <typename T>
BackboneParams<T> backbone_init(int latent_dim, const PackDims& dims, Rng& rng);

/// B starts at zero so the adapted function equals the base one. alpha
/// defaults to the rank, giving scale 1.
template <typename T>
LowRankAdapters<T> lora_init(const BackboneParams<T>& params, int rank, Rng& rng, T alpha = T(0));

/// Dense effective weight of one adapted layer (in x out), for inspection.
template <typename T>
Matrix<T> effective_weight(const Linear<T>& layer, const LowRankPair<T>* pair, T scale);

template <typename T>
struct BlockCache {
  Matrix<T> input;       // n x h
  Matrix<T> normalized;  // layer-norm output
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  Matrix<T> pre_activation;
  Matrix<T> activation;
  Matrix<T> lora_mid1;  // normalized * A1^T, n x r
  Matrix<T> lora_mid2;  // activation * A2^T
};

template <typename T>
struct BackboneCache {
  std::vector<BlockCache<T>> blocks;
  Matrix<T> trunk;  // output of the last block, n x h
  Matrix<T> retrieval_raw;
  Eigen::Matrix<T, Eigen::Dynamic, 1> retrieval_norm;
  Matrix<T> retrieval;
  bool has_lora = false;
  bool has_tokens = false;
  const void* params_id = nullptr;
  std::uint64_t params_version = 0;
  const void* lora_id = nullptr;
  std::uint64_t lora_version = 0;
};

template <typename T>
struct BackboneOutput {
  Matrix<T> tokens;     // n x (T*E); token t occupies columns [t*E, (t+1)*E)
  Matrix<T> retrieval;  // n x e, unit-norm rows
  BackboneCache<T> cache;
};

struct ForwardOptions {
  bool want_tokens = true;
};

/// `lora` may be null.
template <typename T>
BackboneOutput<T> backbone_forward(const BackboneParams<T>& params, const LowRankAdapters<T>* lora,
                                   const Matrix<T>& latents, ForwardOptions options = {});

struct BackwardOptions {
  bool base_params = true;  // false: frozen base tensors receive no gradient
  bool lora = true;
};

template <typename T>
struct BackboneGrads {
  BackboneParams<T> params;     // empty tensors when base_params is false
  LowRankAdapters<T> lora;      // empty when no adapters or lora is false
  Matrix<T> latents;            // dL/dZ
  bool has_params = false;
  bool has_lora = false;
};

/// Reverse pass through a cache produced by backbone_forward with the same
/// params and adapters. Empty dTokens means zero. Throws StateError when the
/// params or adapters changed since the forward pass.
template <typename T>
BackboneGrads<T> backbone_backward(const BackboneParams<T>& params, const LowRankAdapters<T>* lora,
                                   const BackboneCache<T>& cache, const Matrix<T>& d_tokens,
                                   const Matrix<T>& d_retrieval, BackwardOptions options = {});

// ---------------------------------------------------------------------------

template <typename T>
template <typename F>
void BackboneParams<T>::for_each(F&& f) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "backbone.block" + std::to_string(i);
    f(p + ".fc1.weight", blocks[i].fc1.weight);
    f(p + ".fc1.bias", blocks[i].fc1.bias);
    f(p + ".fc2.weight", blocks[i].fc2.weight);
    f(p + ".fc2.bias", blocks[i].fc2.bias);
  }
  f(std::string("backbone.head_tokens.weight"), head_tokens.weight);
  f(std::string("backbone.head_tokens.bias"), head_tokens.bias);
  f(std::string("backbone.head_retrieval.weight"), head_retrieval.weight);
  f(std::string("backbone.head_retrieval.bias"), head_retrieval.bias);
}

template <typename T>
template <typename F>
void BackboneParams<T>::for_each(F&& f) const {
  const_cast<BackboneParams<T>*>(this)->for_each(
      [&](const std::string& name, Matrix<T>& m) { f(name, static_cast<const Matrix<T>&>(m)); });
}

template <typename T>
template <typename F>
void LowRankAdapters<T>::for_each(F&& f) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      const std::string p = "lora.block" + std::to_string(i) + (k == 0 ? ".fc1" : ".fc2");
      f(p + ".A", blocks[i][k].A);
      f(p + ".B", blocks[i][k].B);
    }
  }
}

template <typename T>
template <typename F>
void LowRankAdapters<T>::for_each(F&& f) const {
  const_cast<LowRankAdapters<T>*>(this)->for_each(
      [&](const std::string& name, Matrix<T>& m) { f(name, static_cast<const Matrix<T>&>(m)); });
}

}  // namespace duala
