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

#include <cstdint>

#include "duala/tensor.hpp"

namespace duala {

struct RetrievalReport {
  double image_acc = 0;  // brain query -> paired image is top-1
  double brain_acc = 0;  // image query -> paired brain is top-1
  int pool_size = 0;
  int n_pools = 0;
  std::uint64_t seed = 0;
};

/// Worker count from DUALA_THREADS (default 1).
int resolve_threads();

/// Top-1 matching by cosine within random candidate pools. Pools are cut
/// from a sequence of permutations of the rows, so pools drawn from the same
/// permutation are disjoint. Ties go to the lowest pool position.
/// threads <= 0 uses resolve_threads(); results do not depend on it.
template <typename T>
RetrievalReport retrieval_accuracy(const Matrix<T>& brain, const Matrix<T>& image, int pool_size, int n_pools,
                                   std::uint64_t seed, int threads = 0);

struct StructureReport {
  double intra_mean = 0;  // mean cosine over same-class pairs
  double inter_mean = 0;  // mean cosine over cross-class pairs
  double ratio = 0;       // (intra - inter) / 2 + 0.5
  double silhouette = 0;  // cosine distance; 0 when every point coincides
};

/// Needs at least two classes with two or more samples. Singleton classes
/// contribute silhouette 0 for their sample.
template <typename T>
StructureReport class_structure_metrics(const Matrix<T>& Z, const Labels& labels);

template <typename T>
struct PcaResult {
  Matrix<T> coords;      // n x k
  Matrix<T> components;  // k x h, zero rows past the data rank
  std::vector<T> explained;  // variance fraction per component
};

/// Principal components of the centered rows. Each component's
/// largest-magnitude entry is made positive.
template <typename T>
PcaResult<T> pca_project(const Matrix<T>& Z, int k = 2);

}  // namespace duala
