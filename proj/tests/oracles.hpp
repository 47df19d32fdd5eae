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
// Reference computations for tests. Each is written out in plain loops and
// shares no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "duala/tensor.hpp"

namespace oracle {

using duala::MatrixD;

inline MatrixD matmul(const MatrixD& a, const MatrixD& b) {
  MatrixD c(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline MatrixD transpose(const MatrixD& a) {
  MatrixD t(a.cols(), a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Gauss-Jordan with partial pivoting.
inline MatrixD inverse(MatrixD a) {
  const auto n = a.rows();
  MatrixD inv = MatrixD::Identity(n, n);
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (std::abs(a(pivot, col)) < 1e-300) throw std::runtime_error("singular");
    a.row(col).swap(a.row(pivot));
    inv.row(col).swap(inv.row(pivot));
    const double p = a(col, col);
    for (Eigen::Index j = 0; j < n; ++j) {
      a(col, j) /= p;
      inv(col, j) /= p;
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      for (Eigen::Index j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

inline MatrixD ridge(const MatrixD& X, const MatrixD& Y, double lambda) {
  MatrixD G = matmul(transpose(X), X);
  for (Eigen::Index i = 0; i < G.rows(); ++i) G(i, i) += lambda;
  return matmul(inverse(G), matmul(transpose(X), Y));
}

inline double dot(const MatrixD& a, Eigen::Index i, const MatrixD& b, Eigen::Index j) {
  double s = 0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
  return s;
}

inline double cosine(const MatrixD& a, Eigen::Index i, const MatrixD& b, Eigen::Index j) {
  return dot(a, i, b, j) / std::sqrt(dot(a, i, a, i) * dot(b, j, b, j));
}

inline std::vector<std::tuple<int, int, int>> triplets(const std::vector<int>& y) {
  std::vector<std::tuple<int, int, int>> out;
  const int n = static_cast<int>(y.size());
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        if (a != p && y[a] == y[p] && y[a] != y[q]) out.emplace_back(a, p, q);
  return out;
}

inline double triplet_loss(const MatrixD& Z, const std::vector<std::tuple<int, int, int>>& t, double m) {
  double s = 0;
  for (const auto& [a, p, q] : t) s += std::max(0.0, m - cosine(Z, a, Z, p) + cosine(Z, a, Z, q));
  return s;
}

// Two-pass class prototypes: normalize, average, renormalize.
inline MatrixD prototypes(const MatrixD& Z, const std::vector<int>& y, int C, std::vector<int>& counts) {
  MatrixD P = MatrixD::Zero(C, Z.cols());
  counts.assign(static_cast<std::size_t>(C), 0);
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double n = std::sqrt(dot(Z, i, Z, i));
    for (Eigen::Index k = 0; k < Z.cols(); ++k) P(y[i], k) += Z(i, k) / n;
    ++counts[static_cast<std::size_t>(y[i])];
  }
  for (int c = 0; c < C; ++c) {
    if (!counts[static_cast<std::size_t>(c)]) continue;
    const double n = std::sqrt(dot(P, c, P, c));
    for (Eigen::Index k = 0; k < Z.cols(); ++k) P(c, k) /= n;
  }
  return P;
}

// Softmax cross-entropy in both directions, computed entry by entry.
inline double contrastive(const MatrixD& b, const MatrixD& im, double tau, const MatrixD& t) {
  const auto n = b.rows();
  auto direction = [&](bool forward) {
    double total = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> logits(static_cast<std::size_t>(n));
      double mx = -1e300;
      for (Eigen::Index j = 0; j < n; ++j) {
        logits[j] = (forward ? dot(b, i, im, j) : dot(im, i, b, j)) / tau;
        mx = std::max(mx, logits[j]);
      }
      double z = 0;
      for (double l : logits) z += std::exp(l - mx);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double target = forward ? t(i, j) : t(j, i);
        total -= target * (logits[j] - mx - std::log(z));
      }
    }
    return total / double(n);
  };
  return 0.5 * (direction(true) + direction(false));
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// Unbiased standard deviation; 0 for a single sample.
inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

}  // namespace oracle
