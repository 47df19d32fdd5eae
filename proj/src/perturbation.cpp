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
#include "duala/perturbation.hpp"

#include <cmath>

namespace duala {

template <typename T>
CategoryStats<T> fit_category_stats(std::span<const LabeledLatents<T>> per_subject, int class_count) {
  if (per_subject.empty()) throw InvalidArgument("category statistics need at least one source subject");
  if (class_count < 1) throw InvalidArgument("class count must be positive");
  const auto h = per_subject.front().Z.cols();
  const auto K = static_cast<Eigen::Index>(per_subject.size());

  CategoryStats<T> st;
  st.mu = Matrix<T>::Zero(class_count, h);
  st.sigma_bar = Matrix<T>::Zero(class_count, h);
  st.present = BoolMatrix::Constant(class_count, K, false);
  std::vector<int> support(static_cast<std::size_t>(class_count), 0);

  for (Eigen::Index s = 0; s < K; ++s) {
    const auto& src = per_subject[static_cast<std::size_t>(s)];
    require_dims(src.Z.cols() == h, "source subjects disagree on latent dimension");
    require_dims(static_cast<Eigen::Index>(src.labels.size()) == src.Z.rows(), "label count mismatch");
    Matrix<T> mean = Matrix<T>::Zero(class_count, h);
    std::vector<int> count(static_cast<std::size_t>(class_count), 0);
    for (Eigen::Index i = 0; i < src.Z.rows(); ++i) {
      const int c = src.labels[i];
      if (c < 0 || c >= class_count) throw InvalidArgument("label outside [0, C)");
      mean.row(c) += src.Z.row(i);
      ++count[c];
    }
    Matrix<T> sigma = Matrix<T>::Zero(class_count, h);
    for (int c = 0; c < class_count; ++c)
      if (count[c]) mean.row(c) /= T(count[c]);
    for (Eigen::Index i = 0; i < src.Z.rows(); ++i) {
      const int c = src.labels[i];
      sigma.row(c) += (src.Z.row(i) - mean.row(c)).array().square().matrix();
    }
    for (int c = 0; c < class_count; ++c) {
      if (!count[c]) continue;
      if (count[c] > 1)
        sigma.row(c) = (sigma.row(c) / T(count[c] - 1)).cwiseSqrt();
      else
        sigma.row(c).setZero();
      st.present(c, s) = true;
      st.mu.row(c) += mean.row(c);
      st.sigma_bar.row(c) += sigma.row(c);
      ++support[c];
    }
    st.sigma_per_subject.push_back(std::move(sigma));
  }
  for (int c = 0; c < class_count; ++c) {
    if (!support[c]) continue;
    st.mu.row(c) /= T(support[c]);
    st.sigma_bar.row(c) /= T(support[c]);
  }
  return st;
}

namespace {

template <typename T>
PerturbedLatents<T> perturb_impl(const Matrix<T>& Z, const Labels& labels, const CategoryStats<T>& stats,
                                 double noise, Rng* rng) {
  require_dims(Z.cols() == stats.mu.cols(), "latent dimension differs from the category statistics");
  require_dims(static_cast<Eigen::Index>(labels.size()) == Z.rows(), "label count mismatch");
  PerturbedLatents<T> out;
  out.Z = Z;
  out.scale = Matrix<T>::Ones(Z.rows(), Z.cols());
  std::normal_distribution<double> eps(0.0, noise > 0 ? noise : 1.0);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const int c = labels[i];
    if (!stats.class_present(c)) {
      ++out.passthrough;
      continue;
    }
    out.scale.row(i) = stats.sigma_bar.row(c);
    if (noise > 0)
      for (Eigen::Index j = 0; j < Z.cols(); ++j) out.scale(i, j) *= static_cast<T>(1.0 + eps(*rng));
    // Written as z + (s - 1)(z - mu) so that z = mu and s = 1 are exact.
    const auto delta = (Z.row(i) - stats.mu.row(c)).eval();
    out.Z.row(i) = Z.row(i) + (out.scale.row(i).array() - T(1)).matrix().cwiseProduct(delta);
  }
  return out;
}

}  // namespace

template <typename T>
PerturbedLatents<T> perturb(const Matrix<T>& Z, const Labels& labels, const CategoryStats<T>& stats) {
  return perturb_impl(Z, labels, stats, 0.0, nullptr);
}

template <typename T>
PerturbedLatents<T> perturb_stochastic(const Matrix<T>& Z, const Labels& labels,
                                       const CategoryStats<T>& stats, double noise, Rng& rng) {
  if (!(noise >= 0)) throw InvalidArgument("perturbation noise must be nonnegative");
  return perturb_impl(Z, labels, stats, noise, &rng);
}

template <typename T>
Matrix<T> perturb_backward(const PerturbedLatents<T>& p, const Matrix<T>& d_perturbed) {
  require_dims(d_perturbed.rows() == p.scale.rows() && d_perturbed.cols() == p.scale.cols(),
               "perturbation gradient shape mismatch");
  return p.scale.cwiseProduct(d_perturbed);
}

#define DUALA_INSTANTIATE(T)                                                                              \
  template CategoryStats<T> fit_category_stats(std::span<const LabeledLatents<T>>, int);                 \
  template PerturbedLatents<T> perturb(const Matrix<T>&, const Labels&, const CategoryStats<T>&);        \
  template PerturbedLatents<T> perturb_stochastic(const Matrix<T>&, const Labels&, const CategoryStats<T>&, \
                                                  double, Rng&);                                          \
  template Matrix<T> perturb_backward(const PerturbedLatents<T>&, const Matrix<T>&);
DUALA_INSTANTIATE(float)
DUALA_INSTANTIATE(double)
#undef DUALA_INSTANTIATE

}  // namespace duala
