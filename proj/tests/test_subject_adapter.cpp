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

#include <doctest.h>

#include "duala/grad_check.hpp"
#include "duala/subject_adapter.hpp"
#include "oracles.hpp"

using namespace duala;

namespace {

MatrixD gaussian(int r, int c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double ridge_objective(const MatrixD& X, const MatrixD& Y, const MatrixD& W, double lambda) {
  return (X * W - Y).squaredNorm() + lambda * W.squaredNorm();
}

}  // namespace

TEST_CASE("ridge: identity design returns the targets") {
  Rng rng = make_stream(1, 0);
  const MatrixD Y = gaussian(6, 3, rng);
  const auto a = ridge_fit_closed<double>(MatrixD::Identity(6, 6), Y, 0.0);
  CHECK((a.weight - Y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ridge: closed form matches the normal-equation oracle") {
  const double lambdas[] = {0.0, 0.1, 10.0};
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng = make_stream(100 + trial, 0);
    const int n = 20 + 3 * trial, d = 8, h = 4;
    const MatrixD X = gaussian(n, d, rng);
    const MatrixD Y = gaussian(n, h, rng);
    const double lambda = lambdas[trial % 3];
    const auto a = ridge_fit_closed<double>(X, Y, lambda, 7);
    CHECK(a.subject_id == 7);
    CHECK(a.ridge_lambda == lambda);
    CHECK((a.weight - oracle::ridge(X, Y, lambda)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("ridge: singular system at lambda 0 is reported") {
  Rng rng = make_stream(2, 0);
  MatrixD X = gaussian(10, 4, rng);
  X.col(3) = X.col(1);
  CHECK_THROWS_AS(ridge_fit_closed<double>(X, gaussian(10, 2, rng), 0.0), SingularError);
  CHECK_NOTHROW(ridge_fit_closed<double>(X, gaussian(10, 2, rng), 0.5));
  CHECK_THROWS_AS(ridge_fit_closed<double>(X, gaussian(10, 2, rng), -1.0), InvalidArgument);
  CHECK_THROWS_AS(ridge_fit_closed<double>(X, gaussian(9, 2, rng), 0.5), DimensionError);
}

TEST_CASE("ridge: weight norm shrinks monotonically with lambda") {
  Rng rng = make_stream(3, 0);
  const MatrixD X = gaussian(30, 6, rng), Y = gaussian(30, 3, rng);
  double prev = 1e300;
  for (double lambda : {0.1, 10.0, 1000.0}) {
    const double norm = ridge_fit_closed<double>(X, Y, lambda).weight.norm();
    CHECK(norm < prev);
    prev = norm;
  }
}

TEST_CASE("ridge: random perturbations never lower the objective") {
  Rng rng = make_stream(4, 0);
  const MatrixD X = gaussian(25, 6, rng), Y = gaussian(25, 3, rng);
  const double lambda = 0.1;
  const MatrixD W = ridge_fit_closed<double>(X, Y, lambda).weight;
  const double best = ridge_objective(X, Y, W, lambda);
  for (int k = 0; k < 50; ++k) {
    MatrixD dW = gaussian(6, 3, rng);
    dW *= 1e-3 / dW.norm();
    CHECK(ridge_objective(X, Y, W + dW, lambda) >= best);
  }
}

TEST_CASE("adapter: apply selects columns, maps zero to zero, matches matmul") {
  Rng rng = make_stream(5, 0);
  RidgeAdapter<double> a;
  a.weight = MatrixD::Zero(7, 3);
  a.weight.topRows(3) = MatrixD::Identity(3, 3);
  const MatrixD X = gaussian(5, 7, rng);
  CHECK(adapter_apply(a, X) == X.leftCols(3));
  CHECK(adapter_apply<double>(a, MatrixD::Zero(5, 7)).isZero(0));

  a.weight = gaussian(7, 3, rng);
  CHECK((adapter_apply(a, X) - oracle::matmul(X, a.weight)).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK_THROWS_AS(adapter_apply(a, gaussian(5, 6, rng)), DimensionError);
}

TEST_CASE("adapter: apply is linear") {
  Rng rng = make_stream(6, 0);
  RidgeAdapter<double> a;
  a.weight = gaussian(9, 4, rng);
  const MatrixD X1 = gaussian(6, 9, rng), X2 = gaussian(6, 9, rng);
  const double al = 0.7, be = -2.3;
  const MatrixD lhs = adapter_apply(a, MatrixD(al * X1 + be * X2));
  const MatrixD rhs = al * adapter_apply(a, X1) + be * adapter_apply(a, X2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("adapter: backward is the data term plus pure decay") {
  Rng rng = make_stream(7, 0);
  RidgeAdapter<double> a;
  a.weight = gaussian(5, 3, rng);
  const MatrixD X = gaussian(4, 5, rng);
  a.ridge_lambda = 0;
  CHECK(adapter_backward<double>(a, X, MatrixD::Zero(4, 3)).isZero(0));
  a.ridge_lambda = 0.25;
  CHECK((adapter_backward<double>(a, X, MatrixD::Zero(4, 3)) - 0.25 * a.weight).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(adapter_backward<double>(a, X, MatrixD::Zero(3, 3)), DimensionError);
}

TEST_CASE("adapter: backward matches finite differences") {
  Rng rng = make_stream(8, 0);
  const MatrixD X = gaussian(6, 5, rng);
  const double lambda = 0.3;
  const Objective fn = [&](const VectorD& theta) {
    RidgeAdapter<double> a;
    a.ridge_lambda = lambda;
    a.weight = Eigen::Map<const MatrixD>(theta.data(), 5, 3);
    const MatrixD Z = adapter_apply(a, X);
    const double value = 0.5 * Z.squaredNorm() + 0.5 * lambda * a.weight.squaredNorm();
    const MatrixD g = adapter_backward(a, X, Z);
    return std::make_pair(value, VectorD(Eigen::Map<const VectorD>(g.data(), g.size())));
  };
  const MatrixD W0 = gaussian(5, 3, rng);
  const auto r = grad_check(fn, Eigen::Map<const VectorD>(W0.data(), W0.size()));
  CHECK(r.max_rel_error <= 1e-4);
  CHECK(r.checked == 15);
}

TEST_CASE("adapter: random init has the requested shape") {
  Rng rng = make_stream(9, 0);
  const auto a = adapter_random_init<float>(12, 4, 1e-3f, 3, rng);
  CHECK(a.voxel_dim() == 12);
  CHECK(a.latent_dim() == 4);
  CHECK(a.subject_id == 3);
  CHECK(a.weight.allFinite());
  CHECK(!a.weight.isZero(0));
}
