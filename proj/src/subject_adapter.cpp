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
#include "duala/subject_adapter.hpp"

#include <cmath>
#include <limits>

namespace duala {

template <typename T>
RidgeAdapter<T> ridge_fit_closed(const Matrix<T>& X, const Matrix<T>& Y, T lambda, int subject_id) {
  if (X.rows() < 1) throw InvalidArgument("ridge fit needs at least one sample");
  if (lambda < 0 || !std::isfinite(static_cast<double>(lambda)))
    throw InvalidArgument("ridge lambda must be a finite nonnegative number");
  require_dims(X.rows() == Y.rows(), "ridge fit: X and Y row counts differ");

  Matrix<T> gram = X.transpose() * X;
  gram.diagonal().array() += lambda;
  const Matrix<T> rhs = X.transpose() * Y;
  Eigen::LDLT<Matrix<T>> ldlt(gram);
  const T tiny = T(100) * std::numeric_limits<T>::epsilon();
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > tiny))
    throw SingularError("ridge normal equations are singular (lambda = " + std::to_string(lambda) + ")");

  RidgeAdapter<T> out;
  out.weight = ldlt.solve(rhs);
  out.subject_id = subject_id;
  out.ridge_lambda = lambda;
  if (!out.weight.allFinite()) throw NonFiniteError("ridge solution is not finite");
  return out;
}

template <typename T>
Matrix<T> adapter_apply(const RidgeAdapter<T>& a, const Matrix<T>& X) {
  require_dims(X.cols() == a.weight.rows(),
               "adapter expects " + std::to_string(a.weight.rows()) + " voxels, got " +
                   std::to_string(X.cols()));
  return X * a.weight;
}

template <typename T>
Matrix<T> adapter_backward(const RidgeAdapter<T>& a, const Matrix<T>& X, const Matrix<T>& dZ) {
  require_dims(X.cols() == a.weight.rows(), "adapter backward: voxel dimension mismatch");
  require_dims(dZ.rows() == X.rows() && dZ.cols() == a.weight.cols(),
               "adapter backward: upstream gradient shape mismatch");
  Matrix<T> grad = X.transpose() * dZ;
  if (a.ridge_lambda != T(0)) grad += a.ridge_lambda * a.weight;
  if (!grad.allFinite()) throw NonFiniteError("adapter gradient is not finite");
  return grad;
}

template <typename T>
RidgeAdapter<T> adapter_random_init(int voxel_dim, int latent_dim, T lambda, int subject_id, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(double(voxel_dim)));
  RidgeAdapter<T> a;
  a.weight.resize(voxel_dim, latent_dim);
  for (Eigen::Index i = 0; i < a.weight.size(); ++i) a.weight.data()[i] = static_cast<T>(n(rng));
  a.subject_id = subject_id;
  a.ridge_lambda = lambda;
  return a;
}

#define DUALA_INSTANTIATE(T)                                                                   \
  template RidgeAdapter<T> ridge_fit_closed(const Matrix<T>&, const Matrix<T>&, T, int);      \
  template Matrix<T> adapter_apply(const RidgeAdapter<T>&, const Matrix<T>&);                 \
  template Matrix<T> adapter_backward(const RidgeAdapter<T>&, const Matrix<T>&, const Matrix<T>&); \
  template RidgeAdapter<T> adapter_random_init(int, int, T, int, Rng&);
DUALA_INSTANTIATE(float)
DUALA_INSTANTIATE(double)
#undef DUALA_INSTANTIATE

}  // namespace duala
