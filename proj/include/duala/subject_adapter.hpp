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

#include "duala/tensor.hpp"

namespace duala {

/// Per-subject linear map from voxel space (d_s) into the shared latent
/// space (h). No intercept: callers center voxels with train-split means.
template <typename T>
struct RidgeAdapter {
  Matrix<T> weight;  // d_s x h
  int subject_id = 0;
  T ridge_lambda = T(1e-3);

  int voxel_dim() const { return static_cast<int>(weight.rows()); }
  int latent_dim() const { return static_cast<int>(weight.cols()); }
};

/// Closed-form ridge solution (X'X + lambda I)^-1 X'Y.
/// Throws SingularError when the regularized Gram matrix is numerically
/// singular (only reachable at lambda = 0).
template <typename T>
RidgeAdapter<T> ridge_fit_closed(const Matrix<T>& X, const Matrix<T>& Y, T lambda, int subject_id = 0);

/// Z = X * weight.
template <typename T>
Matrix<T> adapter_apply(const RidgeAdapter<T>& a, const Matrix<T>& X);

/// Gradient of a downstream loss w.r.t. the weight given dL/dZ, plus the
/// ridge penalty term lambda * weight.
template <typename T>
Matrix<T> adapter_backward(const RidgeAdapter<T>& a, const Matrix<T>& X, const Matrix<T>& dZ);

/// Scaled Gaussian initialization with gain 1/sqrt(d_s).
template <typename T>
RidgeAdapter<T> adapter_random_init(int voxel_dim, int latent_dim, T lambda, int subject_id, Rng& rng);

}  // namespace duala
