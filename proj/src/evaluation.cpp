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
#include "duala/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

namespace duala {
namespace {

template <typename T>
Matrix<T> normalized_rows(const Matrix<T>& X, const char* what) {
  Matrix<T> out = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const T norm = X.row(i).norm();
    if (!(norm > T(0)) || !std::isfinite(norm)) throw DegenerateError(std::string(what) + " row with zero or non-finite norm");
    out.row(i) /= norm;
  }
  return out;
}

// Returns hits for (brain -> image, image -> brain) within one pool.
template <typename T>
std::pair<long long, long long> score_pool(const Matrix<T>& brain, const Matrix<T>& image, const std::vector<int>& pool) {
  const auto m = static_cast<Eigen::Index>(pool.size());
  Matrix<T> B(m, brain.cols()), I(m, image.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    B.row(i) = brain.row(pool[static_cast<std::size_t>(i)]);
    I.row(i) = image.row(pool[static_cast<std::size_t>(i)]);
  }
  const Matrix<T> S = B * I.transpose();
  long long img = 0, brn = 0;
  for (Eigen::Index q = 0; q < m; ++q) {
    Eigen::Index best_row = 0, best_col = 0;
    for (Eigen::Index c = 1; c < m; ++c) {
      if (S(q, c) > S(q, best_row)) best_row = c;
      if (S(c, q) > S(best_col, q)) best_col = c;
    }
    img += best_row == q;
    brn += best_col == q;
  }
  return {img, brn};
}

}  // namespace

int resolve_threads() {
  const char* env = std::getenv("DUALA_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw InvalidArgument("DUALA_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(v, 256));
}

template <typename T>
RetrievalReport retrieval_accuracy(const Matrix<T>& brain, const Matrix<T>& image, int pool_size, int n_pools,
                                   std::uint64_t seed, int threads) {
  require_dims(brain.rows() == image.rows() && brain.cols() == image.cols(),
               "brain and image embeddings must have the same shape");
  const auto n = static_cast<int>(brain.rows());
  if (pool_size < 2) throw InvalidArgument("pool_size must be at least 2");
  if (n < 2 || pool_size > n) throw InvalidArgument("pool_size exceeds the number of test items");
  if (n_pools < 1) throw InvalidArgument("n_pools must be positive");
  const Matrix<T> B = normalized_rows(brain, "brain");
  const Matrix<T> I = normalized_rows(image, "image");

  // All pools are drawn up front so the result is independent of threading.
  Rng rng = make_stream(seed, 0);
  const int per_perm = n / pool_size;
  std::vector<std::vector<int>> pools;
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int p = 0; p < n_pools; ++p) {
    const int chunk = p % per_perm;
    if (chunk == 0) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    pools.emplace_back(perm.begin() + chunk * pool_size, perm.begin() + (chunk + 1) * pool_size);
  }

  std::vector<std::pair<long long, long long>> hits(pools.size());
  const int workers = std::min<int>(threads > 0 ? threads : resolve_threads(), n_pools);
  if (workers <= 1) {
    for (std::size_t p = 0; p < pools.size(); ++p) hits[p] = score_pool(B, I, pools[p]);
  } else {
    std::vector<std::thread> pool_threads;
    for (int w = 0; w < workers; ++w) {
      pool_threads.emplace_back([&, w] {
        for (std::size_t p = static_cast<std::size_t>(w); p < pools.size(); p += static_cast<std::size_t>(workers))
          hits[p] = score_pool(B, I, pools[p]);
      });
    }
    for (auto& t : pool_threads) t.join();
  }
  long long img = 0, brn = 0;
  for (const auto& h : hits) {
    img += h.first;
    brn += h.second;
  }
  const double total = double(n_pools) * double(pool_size);
  return {double(img) / total, double(brn) / total, pool_size, n_pools, seed};
}

template <typename T>
StructureReport class_structure_metrics(const Matrix<T>& Z, const Labels& labels) {
  require_dims(static_cast<Eigen::Index>(labels.size()) == Z.rows(), "one label per row required");
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  int supported = 0;
  for (const auto& [c, k] : counts) supported += k >= 2;
  if (counts.size() < 2 || supported < 2)
    throw DegenerateError("structure metrics need two classes with at least two samples each");

  const Matrix<T> U = normalized_rows(Z, "embedding");
  const Matrix<double> S = (U * U.transpose()).template cast<double>();
  const auto n = U.rows();
  double intra = 0, inter = 0;
  long long n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) {
        intra += S(i, j);
        ++n_intra;
      } else {
        inter += S(i, j);
        ++n_inter;
      }
    }
  }
  StructureReport r;
  r.intra_mean = n_intra ? intra / double(n_intra) : 0.0;
  r.inter_mean = n_inter ? inter / double(n_inter) : 0.0;
  r.ratio = (r.intra_mean - r.inter_mean) / 2.0 + 0.5;

  std::vector<int> classes;
  std::map<int, int> slot;
  for (const auto& [c, k] : counts) {
    slot[c] = static_cast<int>(classes.size());
    classes.push_back(c);
  }
  double total = 0;
  std::vector<double> dist_sum(classes.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[static_cast<std::size_t>(slot[labels[j]])] += std::max(0.0, 1.0 - S(i, j));
    }
    const int own = slot[labels[i]];
    const int own_count = counts[labels[i]];
    if (own_count < 2) continue;
    const double a = dist_sum[static_cast<std::size_t>(own)] / double(own_count - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (static_cast<int>(c) == own) continue;
      b = std::min(b, dist_sum[c] / double(counts[classes[c]]));
    }
    const double denom = std::max(a, b);
    total += denom > 0 ? (b - a) / denom : 0.0;
  }
  r.silhouette = total / double(n);
  return r;
}

template <typename T>
PcaResult<T> pca_project(const Matrix<T>& Z, int k) {
  if (k < 1) throw InvalidArgument("k must be positive");
  if (Z.rows() <= k) throw InvalidArgument("PCA needs more rows than components");
  const auto h = Z.cols();
  const Matrix<double> X = Z.template cast<double>().rowwise() - Z.template cast<double>().colwise().mean();
  const Eigen::MatrixXd cov = (X.transpose() * X) / double(Z.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double trace = cov.trace();
  const double max_eig = h > 0 ? std::max(0.0, eig.eigenvalues()(h - 1)) : 0.0;
  const double tol = max_eig * double(h) * std::numeric_limits<double>::epsilon();

  PcaResult<T> out;
  out.components = Matrix<T>::Zero(k, h);
  out.explained.assign(static_cast<std::size_t>(k), T(0));
  for (int c = 0; c < k && c < h; ++c) {
    const double lambda = eig.eigenvalues()(h - 1 - c);
    if (!(lambda > tol) || max_eig == 0) continue;
    Eigen::VectorXd v = eig.eigenvectors().col(h - 1 - c);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < h; ++i)
      if (std::abs(v(i)) > std::abs(v(arg)) + 1e-12) arg = i;
    if (v(arg) < 0) v = -v;
    out.components.row(c) = v.transpose().template cast<T>();
    out.explained[static_cast<std::size_t>(c)] = static_cast<T>(trace > 0 ? lambda / trace : 0.0);
  }
  out.coords = (X * out.components.template cast<double>().transpose()).template cast<T>();
  return out;
}

#define DUALA_INSTANTIATE(T)                                                                           \
  template RetrievalReport retrieval_accuracy(const Matrix<T>&, const Matrix<T>&, int, int, std::uint64_t, int); \
  template StructureReport class_structure_metrics(const Matrix<T>&, const Labels&);                  \
  template PcaResult<T> pca_project(const Matrix<T>&, int);
DUALA_INSTANTIATE(float)
DUALA_INSTANTIATE(double)
#undef DUALA_INSTANTIATE

}  // namespace duala
