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
#include "duala/objectives.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace duala {
namespace {

template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
T degenerate_norm() {
  return T(16) * std::numeric_limits<T>::epsilon();
}

// Backward of y = x / |x| for one row.
template <typename T, typename RowY, typename RowDY>
RowVector<T> normalize_backward(const RowY& y, const RowDY& dy, T norm) {
  return (dy - y * y.dot(dy)) / norm;
}

template <typename T>
void check_labels(const Labels& labels, Eigen::Index rows, int class_count) {
  require_dims(static_cast<Eigen::Index>(labels.size()) == rows, "label count does not match row count");
  for (int y : labels)
    if (y < 0 || y >= class_count)
      throw InvalidArgument("label " + std::to_string(y) + " outside [0, " + std::to_string(class_count) + ")");
}

template <typename T>
T stochastic_tolerance(Eigen::Index n) {
  return std::max(T(1e-6), T(4) * T(n) * std::numeric_limits<T>::epsilon());
}

// Row-wise log-softmax.
template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits) {
  const ColVector<T> mx = logits.rowwise().maxCoeff();
  Matrix<T> shifted = logits.colwise() - mx;
  const ColVector<T> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

// Cross-entropy -1/n sum_ij t_ij log softmax(logits)_ij and its gradient.
template <typename T>
T cross_entropy_rows(const Matrix<T>& logits, const Matrix<T>& targets, Matrix<T>& d_logits) {
  const auto n = static_cast<T>(logits.rows());
  const Matrix<T> logp = log_softmax_rows(logits);
  const T value = -(targets.array() * logp.array()).sum() / n;
  const ColVector<T> mass = targets.rowwise().sum();
  d_logits = (logp.array().exp().colwise() * mass.array() - targets.array()) / n;
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------

TripletSet mine_triplets(const Labels& labels, TripletPolicy policy, Rng* rng) {
  TripletSet out;
  const int n = static_cast<int>(labels.size());
  if (policy == TripletPolicy::kAll) {
    for (int a = 0; a < n; ++a)
      for (int p = 0; p < n; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        for (int q = 0; q < n; ++q)
          if (labels[q] != labels[a]) out.push_back({a, p, q});
      }
    return out;
  }
  if (!rng) throw InvalidArgument("random triplet mining requires a generator");
  for (int a = 0; a < n; ++a) {
    std::vector<int> pos, neg;
    for (int j = 0; j < n; ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? pos : neg).push_back(j);
    }
    if (pos.empty() || neg.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_p(0, pos.size() - 1), pick_n(0, neg.size() - 1);
    const int p = pos[pick_p(*rng)];
    const int q = neg[pick_n(*rng)];
    out.push_back({a, p, q});
  }
  return out;
}

template <typename T>
LossOutput<T> semantic_alignment_loss(const Matrix<T>& Z, const TripletSet& triplets, T margin) {
  if (!(margin > T(0))) throw InvalidArgument("triplet margin must be positive");
  const auto n = Z.rows();
  for (const auto& t : triplets)
    if (t.anchor < 0 || t.anchor >= n || t.positive < 0 || t.positive >= n || t.negative < 0 || t.negative >= n)
      throw InvalidArgument("triplet index outside the batch");

  const ColVector<T> norms = Z.rowwise().norm();
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (const auto& t : triplets) used[t.anchor] = used[t.positive] = used[t.negative] = true;
  for (Eigen::Index i = 0; i < n; ++i)
    if (used[i] && !(norms(i) > T(0))) throw DegenerateError("zero-norm embedding in triplet loss");

  Matrix<T> unit = Z;
  for (Eigen::Index i = 0; i < n; ++i)
    if (used[i]) unit.row(i) /= norms(i);

  LossOutput<T> out;
  Matrix<T> d_unit = Matrix<T>::Zero(n, Z.cols());
  for (const auto& t : triplets) {
    const T s_ap = unit.row(t.anchor).dot(unit.row(t.positive));
    const T s_an = unit.row(t.anchor).dot(unit.row(t.negative));
    const T term = margin - s_ap + s_an;
    if (term <= T(0)) continue;
    out.value += term;
    d_unit.row(t.anchor) += unit.row(t.negative) - unit.row(t.positive);
    d_unit.row(t.positive) -= unit.row(t.anchor);
    d_unit.row(t.negative) += unit.row(t.anchor);
  }
  Matrix<T> dZ = Matrix<T>::Zero(n, Z.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    if (used[i]) dZ.row(i) = normalize_backward<T>(unit.row(i), d_unit.row(i), norms(i));
  out.gradients.push_back(std::move(dZ));
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Prototypes<T> class_prototypes(const Matrix<T>& Z, const Labels& labels, int class_count) {
  if (Z.rows() < 1) throw InvalidArgument("prototypes need at least one sample");
  check_labels<T>(labels, Z.rows(), class_count);
  Prototypes<T> out;
  out.P = Matrix<T>::Zero(class_count, Z.cols());
  out.counts.assign(static_cast<std::size_t>(class_count), 0);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const T norm = Z.row(i).norm();
    if (!(norm > T(0))) throw DegenerateError("zero-norm embedding while building prototypes");
    out.P.row(labels[i]) += Z.row(i) / norm;
    ++out.counts[labels[i]];
  }
  for (int c = 0; c < class_count; ++c) {
    if (!out.counts[c]) continue;
    RowVector<T> mean = out.P.row(c) / T(out.counts[c]);
    const T norm = mean.norm();
    if (!(norm > degenerate_norm<T>()))
      throw DegenerateError("prototype of class " + std::to_string(c) + " has a vanishing mean");
    out.P.row(c) = mean / norm;
  }
  return out;
}

template <typename T>
SimilarityMatrix<T> class_similarity_matrix(const Prototypes<T>& prototypes) {
  const auto C = prototypes.P.rows();
  Eigen::Array<bool, Eigen::Dynamic, 1> present(C);
  for (Eigen::Index c = 0; c < C; ++c) present(c) = prototypes.present(static_cast<int>(c));
  SimilarityMatrix<T> out;
  out.valid = BoolMatrix(C, C);
  for (Eigen::Index i = 0; i < C; ++i)
    for (Eigen::Index j = 0; j < C; ++j) out.valid(i, j) = present(i) && present(j);
  out.S = prototypes.P * prototypes.P.transpose();
  for (Eigen::Index i = 0; i < C; ++i)
    for (Eigen::Index j = 0; j < C; ++j)
      if (!out.valid(i, j)) out.S(i, j) = T(0);
  return out;
}

template <typename T>
ReferenceMatrix<T> reference_matrix(std::span<const SimilarityMatrix<T>> per_subject, OmegaPolicy policy) {
  if (per_subject.empty()) throw InvalidArgument("reference matrix needs at least one subject");
  const auto C = per_subject.front().S.rows();
  Matrix<T> sum = Matrix<T>::Zero(C, C);
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> count =
      Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(C, C);
  for (const auto& m : per_subject) {
    require_dims(m.S.rows() == C && m.S.cols() == C && m.valid.rows() == C && m.valid.cols() == C,
                 "similarity matrices disagree on class count");
    for (Eigen::Index i = 0; i < C; ++i)
      for (Eigen::Index j = 0; j < C; ++j)
        if (m.valid(i, j)) {
          sum(i, j) += m.S(i, j);
          ++count(i, j);
        }
  }
  ReferenceMatrix<T> out;
  out.S_ref = Matrix<T>::Zero(C, C);
  out.omega = BoolMatrix(C, C);
  const int k = static_cast<int>(per_subject.size());
  for (Eigen::Index i = 0; i < C; ++i)
    for (Eigen::Index j = 0; j < C; ++j) {
      if (count(i, j) > 0) out.S_ref(i, j) = sum(i, j) / T(count(i, j));
      out.omega(i, j) = policy == OmegaPolicy::kUnion ? count(i, j) > 0 : count(i, j) == k;
    }
  return out;
}

template <typename T>
LossOutput<T> relational_consistency_loss(const SimilarityMatrix<T>& s_new, const ReferenceMatrix<T>& ref) {
  const auto C = s_new.S.rows();
  require_dims(s_new.S.cols() == C && ref.S_ref.rows() == C && ref.S_ref.cols() == C &&
                   ref.omega.rows() == C && ref.omega.cols() == C,
               "similarity and reference matrices differ in class count");
  const BoolMatrix mask = ref.omega && s_new.valid;
  const auto count = mask.count();
  if (count == 0) throw DegenerateError("no class pair is shared with the reference matrix");

  LossOutput<T> out;
  Matrix<T> dS = Matrix<T>::Zero(C, C);
  for (Eigen::Index i = 0; i < C; ++i)
    for (Eigen::Index j = 0; j < C; ++j) {
      if (!mask(i, j)) continue;
      const T diff = s_new.S(i, j) - ref.S_ref(i, j);
      out.value += diff * diff;
      dS(i, j) = T(2) * diff / T(count);
    }
  out.value /= T(count);
  out.gradients.push_back(std::move(dS));
  return out;
}

template <typename T>
LossOutput<T> relational_consistency_from_embeddings(const Matrix<T>& R, const Labels& labels,
                                                     const ReferenceMatrix<T>& ref) {
  const int C = static_cast<int>(ref.S_ref.rows());
  const auto protos = class_prototypes(R, labels, C);
  const auto sim = class_similarity_matrix(protos);
  auto loss = relational_consistency_loss(sim, ref);
  const Matrix<T>& dS = loss.gradients[0];

  // S = P P^T on the valid block; dS is already zero elsewhere.
  const Matrix<T> dP = (dS + dS.transpose()) * protos.P;

  // Back through p_c = m_c / |m_c| with m_c the mean of unit rows.
  Matrix<T> d_mean = Matrix<T>::Zero(C, R.cols());
  Matrix<T> raw_mean = Matrix<T>::Zero(C, R.cols());
  const ColVector<T> norms = R.rowwise().norm();
  for (Eigen::Index i = 0; i < R.rows(); ++i) raw_mean.row(labels[i]) += R.row(i) / norms(i);
  for (int c = 0; c < C; ++c) {
    if (!protos.present(c)) continue;
    raw_mean.row(c) /= T(protos.counts[c]);
    d_mean.row(c) = normalize_backward<T>(protos.P.row(c), dP.row(c), raw_mean.row(c).norm());
  }
  Matrix<T> dR(R.rows(), R.cols());
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    const int c = labels[i];
    const RowVector<T> unit = R.row(i) / norms(i);
    dR.row(i) = normalize_backward<T>(unit, d_mean.row(c) / T(protos.counts[c]), norms(i));
  }
  loss.gradients[0] = std::move(dR);
  return loss;
}

// ---------------------------------------------------------------------------

template <typename T>
LossOutput<T> bidirectional_contrastive_loss(const Matrix<T>& brain, const Matrix<T>& image, T tau,
                                             const Matrix<T>& targets) {
  if (!(tau > T(0))) throw InvalidArgument("temperature must be positive");
  const auto n = brain.rows();
  require_dims(image.rows() == n && image.cols() == brain.cols(), "brain and image embeddings differ in shape");
  require_dims(targets.rows() == n && targets.cols() == n, "targets must be n x n");
  const T tol = stochastic_tolerance<T>(n);
  if ((targets.array() < T(0)).any() || ((targets.rowwise().sum().array() - T(1)).abs() > tol).any())
    throw InvalidArgument("contrastive targets are not row-stochastic");

  const Matrix<T> logits = brain * image.transpose() / tau;
  Matrix<T> d_fwd, d_bwd;
  const T forward = cross_entropy_rows<T>(logits, targets, d_fwd);
  const T backward = cross_entropy_rows<T>(logits.transpose(), targets.transpose(), d_bwd);
  const Matrix<T> d_logits = (d_fwd + d_bwd.transpose()) / T(2);

  LossOutput<T> out;
  out.value = (forward + backward) / T(2);
  out.gradients.push_back(d_logits * image / tau);
  out.gradients.push_back(d_logits.transpose() * brain / tau);
  return out;
}

template <typename T>
MixBatch<T> mixco_apply(const Matrix<T>& X, const std::vector<int>& partner, const std::vector<T>& lambda) {
  const auto n = X.rows();
  require_dims(static_cast<Eigen::Index>(partner.size()) == n && static_cast<Eigen::Index>(lambda.size()) == n,
               "mix partners and coefficients must match the batch");
  MixBatch<T> out;
  out.mixed.resize(n, X.cols());
  out.targets = Matrix<T>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int j = partner[i];
    if (j < 0 || j >= n) throw InvalidArgument("mix partner outside the batch");
    const T l = lambda[i];
    if (!(l >= T(0) && l <= T(1))) throw InvalidArgument("mix coefficient outside [0, 1]");
    out.mixed.row(i) = l * X.row(i) + (T(1) - l) * X.row(j);
    out.targets(i, i) += l;
    out.targets(i, j) += T(1) - l;
  }
  out.partner = partner;
  out.lambda = lambda;
  return out;
}

template <typename T>
MixBatch<T> mixco_targets(const Matrix<T>& X, Rng& rng, double beta) {
  const auto n = X.rows();
  if (n < 2) throw InvalidArgument("mixing needs at least two rows");
  if (!(beta > 0)) throw InvalidArgument("mix beta must be positive");
  std::vector<int> partner(static_cast<std::size_t>(n));
  std::iota(partner.begin(), partner.end(), 0);
  std::shuffle(partner.begin(), partner.end(), rng);
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<T> lambda(static_cast<std::size_t>(n));
  for (auto& l : lambda) {
    const double a = gamma(rng);
    const double b = gamma(rng);
    l = static_cast<T>(a + b > 0 ? a / (a + b) : 0.5);
  }
  return mixco_apply(X, partner, lambda);
}

template <typename T>
Matrix<T> softclip_targets(const Matrix<T>& image, T tau_soft) {
  if (!(tau_soft > T(0))) throw InvalidArgument("soft-target temperature must be positive");
  const Matrix<T> logp = log_softmax_rows<T>(image * image.transpose() / tau_soft);
  return logp.array().exp().matrix();
}

template <typename T>
CombinedLoss<T> combined_objective(const ObjectiveParts<T>& parts, const LossWeights& w) {
  CombinedLoss<T> out;
  const T a1 = static_cast<T>(w.alpha1), l1 = static_cast<T>(w.lambda1), l2 = static_cast<T>(w.lambda2);
  if (parts.contrastive) {
    out.value += a1 * parts.contrastive->value;
    out.d_brain = a1 * parts.contrastive->gradients.at(0);
  }
  if (parts.semantic) {
    out.value += l1 * parts.semantic->value;
    out.d_latents = l1 * parts.semantic->gradients.at(0);
  }
  if (parts.relational) {
    out.value += l2 * parts.relational->value;
    const Matrix<T>& g = parts.relational->gradients.at(0);
    if (out.d_brain.size() == 0) {
      out.d_brain = l2 * g;
    } else {
      require_dims(out.d_brain.rows() == g.rows() && out.d_brain.cols() == g.cols(),
                   "relational gradient does not match the retrieval embeddings");
      out.d_brain += l2 * g;
    }
  }
  return out;
}

#define DUALA_INSTANTIATE(T)                                                                          \
  template LossOutput<T> semantic_alignment_loss(const Matrix<T>&, const TripletSet&, T);            \
  template Prototypes<T> class_prototypes(const Matrix<T>&, const Labels&, int);                     \
  template SimilarityMatrix<T> class_similarity_matrix(const Prototypes<T>&);                        \
  template ReferenceMatrix<T> reference_matrix(std::span<const SimilarityMatrix<T>>, OmegaPolicy);   \
  template LossOutput<T> relational_consistency_loss(const SimilarityMatrix<T>&,                     \
                                                     const ReferenceMatrix<T>&);                     \
  template LossOutput<T> relational_consistency_from_embeddings(const Matrix<T>&, const Labels&,     \
                                                                const ReferenceMatrix<T>&);          \
  template LossOutput<T> bidirectional_contrastive_loss(const Matrix<T>&, const Matrix<T>&, T,       \
                                                        const Matrix<T>&);                           \
  template MixBatch<T> mixco_apply(const Matrix<T>&, const std::vector<int>&, const std::vector<T>&); \
  template MixBatch<T> mixco_targets(const Matrix<T>&, Rng&, double);                                \
  template Matrix<T> softclip_targets(const Matrix<T>&, T);                                          \
  template CombinedLoss<T> combined_objective(const ObjectiveParts<T>&, const LossWeights&);
DUALA_INSTANTIATE(float)
DUALA_INSTANTIATE(double)
#undef DUALA_INSTANTIATE

}  // namespace duala
