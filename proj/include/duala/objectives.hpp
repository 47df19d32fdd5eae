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

#include <span>
#include <vector>

#include "duala/tensor.hpp"

namespace duala {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Loss value plus one gradient per differentiable input, in argument order.
template <typename T>
struct LossOutput {
  T value = T(0);
  std::vector<Matrix<T>> gradients;
};

// ---------------------------------------------------------------------------
// Semantic alignment: cosine triplet hinge within one subject's batch.

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
  bool operator==(const Triplet&) const = default;
  auto operator<=>(const Triplet&) const = default;
};
using TripletSet = std::vector<Triplet>;

enum class TripletPolicy { kAll, kRandomPerAnchor };

/// kAll enumerates every (a, p, n) with y_a = y_p, a != p, y_n != y_a in
/// lexicographic order. kRandomPerAnchor draws one positive and one negative
/// per anchor that has both; `rng` is required for it.
TripletSet mine_triplets(const Labels& labels, TripletPolicy policy, Rng* rng = nullptr);

/// sum over triplets of max(0, m - cos(z_a, z_p) + cos(z_a, z_n)).
/// gradients[0] is dL/dZ, exact through the row normalization.
template <typename T>
LossOutput<T> semantic_alignment_loss(const Matrix<T>& Z, const TripletSet& triplets, T margin);

// ---------------------------------------------------------------------------
// Relational consistency: class prototypes and their similarity matrices.

template <typename T>
struct Prototypes {
  Matrix<T> P;              // C x h; rows of absent classes are zero
  std::vector<int> counts;  // samples per class
  bool present(int c) const { return counts[static_cast<std::size_t>(c)] > 0; }
};

/// Rows of Z are L2-normalized, averaged per class, and the mean is
/// normalized again. A class whose mean vanishes raises DegenerateError.
template <typename T>
Prototypes<T> class_prototypes(const Matrix<T>& Z, const Labels& labels, int class_count);

template <typename T>
struct SimilarityMatrix {
  Matrix<T> S;       // C x C, zero off the valid set
  BoolMatrix valid;  // outer product of class presence
};

template <typename T>
SimilarityMatrix<T> class_similarity_matrix(const Prototypes<T>& prototypes);

template <typename T>
struct ReferenceMatrix {
  Matrix<T> S_ref;
  BoolMatrix omega;
};

enum class OmegaPolicy { kUnion, kIntersection };

/// Entrywise mean over the subjects where an entry is valid. omega marks the
/// entries valid in at least one subject (kUnion) or in all (kIntersection).
template <typename T>
ReferenceMatrix<T> reference_matrix(std::span<const SimilarityMatrix<T>> per_subject,
                                    OmegaPolicy policy = OmegaPolicy::kUnion);

/// (1/|W|) sum over W of (S_new - S_ref)^2 with W = omega & S_new.valid.
/// gradients[0] is dL/dS_new. Throws DegenerateError when W is empty.
template <typename T>
LossOutput<T> relational_consistency_loss(const SimilarityMatrix<T>& s_new, const ReferenceMatrix<T>& ref);

/// Same loss taken from raw embeddings: prototypes, similarities, then the
/// discrepancy. gradients[0] is dL/dR.
template <typename T>
LossOutput<T> relational_consistency_from_embeddings(const Matrix<T>& R, const Labels& labels,
                                                     const ReferenceMatrix<T>& ref);

// ---------------------------------------------------------------------------
// Bidirectional contrastive retrieval.

/// logits = brain * image^T / tau. The value averages the row-wise cross
/// entropy of softmax(logits) against `targets` and of softmax(logits^T)
/// against targets^T. gradients = {dL/dbrain, dL/dimage}.
template <typename T>
LossOutput<T> bidirectional_contrastive_loss(const Matrix<T>& brain, const Matrix<T>& image, T tau,
                                             const Matrix<T>& targets);

template <typename T>
struct MixBatch {
  Matrix<T> mixed;
  Matrix<T> targets;
  std::vector<int> partner;
  std::vector<T> lambda;
};

/// Row i becomes lambda_i x_i + (1 - lambda_i) x_partner(i); the target row
/// puts lambda_i on i and the rest on the partner.
template <typename T>
MixBatch<T> mixco_apply(const Matrix<T>& X, const std::vector<int>& partner, const std::vector<T>& lambda);

/// Partners from a random permutation, lambda ~ Beta(beta, beta).
template <typename T>
MixBatch<T> mixco_targets(const Matrix<T>& X, Rng& rng, double beta);

/// Row-softmax of image * image^T / tau_soft.
template <typename T>
Matrix<T> softclip_targets(const Matrix<T>& image, T tau_soft);

// ---------------------------------------------------------------------------
// Combined objectives.

struct LossWeights {
  double alpha1 = 1.0;   // contrastive
  double lambda1 = 1.0;  // semantic alignment
  double lambda2 = 0.1;  // relational consistency
};

/// Parts computed on one batch; a null part was skipped for this step.
template <typename T>
struct ObjectiveParts {
  const LossOutput<T>* contrastive = nullptr;  // gradients {brain, image}
  const LossOutput<T>* semantic = nullptr;     // gradients {latents}
  const LossOutput<T>* relational = nullptr;   // gradients {brain}
};

template <typename T>
struct CombinedLoss {
  T value = T(0);
  Matrix<T> d_latents;  // lambda1 * dL_sa; empty when skipped
  Matrix<T> d_brain;    // alpha1 * dL_con + lambda2 * dL_rc; empty when both skipped
};

/// alpha1 * L_contrastive + lambda1 * L_sa + lambda2 * L_rc.
template <typename T>
CombinedLoss<T> combined_objective(const ObjectiveParts<T>& parts, const LossWeights& weights);

}  // namespace duala
