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

#include <algorithm>
#include <set>

#include "duala/grad_check.hpp"
#include "duala/objectives.hpp"
#include "oracles.hpp"

using namespace duala;

namespace {

MatrixD gaussian(int r, int c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

MatrixD unit_rows(MatrixD m) {
  m.rowwise().normalize();
  return m;
}

VectorD flat(const MatrixD& m) { return Eigen::Map<const VectorD>(m.data(), m.size()); }

SimilarityMatrix<double> sim2(double off) {
  SimilarityMatrix<double> s;
  s.S.resize(2, 2);
  s.S << 1, off, off, 1;
  s.valid = BoolMatrix::Constant(2, 2, true);
  return s;
}

ReferenceMatrix<double> ref2(double off) {
  ReferenceMatrix<double> r;
  r.S_ref = sim2(off).S;
  r.omega = BoolMatrix::Constant(2, 2, true);
  return r;
}

}  // namespace

TEST_CASE("triplets: small enumeration, no negatives, brute force") {
  CHECK(mine_triplets({0, 0, 1}, TripletPolicy::kAll) == TripletSet{{0, 1, 2}, {1, 0, 2}});
  CHECK(mine_triplets({3, 3, 3, 3}, TripletPolicy::kAll).empty());
  CHECK(mine_triplets({0, 1, 2}, TripletPolicy::kAll).empty());

  Rng rng = make_stream(1, 0);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 5; ++trial) {
    Labels y(12);
    for (int& v : y) v = cls(rng);
    std::set<Triplet> mine;
    for (const auto& t : mine_triplets(y, TripletPolicy::kAll)) mine.insert(t);
    std::set<Triplet> brute;
    for (const auto& [a, p, q] : oracle::triplets(y)) brute.insert({a, p, q});
    CHECK(mine == brute);
  }
}

TEST_CASE("triplets: one draw per eligible anchor") {
  const Labels y = {0, 0, 1, 1, 1, 2};
  Rng rng = make_stream(2, 0);
  const auto t = mine_triplets(y, TripletPolicy::kRandomPerAnchor, &rng);
  REQUIRE(t.size() == 5);  // the class-2 sample has no positive
  for (std::size_t k = 0; k < t.size(); ++k) {
    CHECK(t[k].anchor == int(k));
    CHECK(t[k].positive != t[k].anchor);
    CHECK(y[t[k].positive] == y[t[k].anchor]);
    CHECK(y[t[k].negative] != y[t[k].anchor]);
  }
  Rng again = make_stream(2, 0);
  CHECK(mine_triplets(y, TripletPolicy::kRandomPerAnchor, &again) == t);
  CHECK_THROWS_AS(mine_triplets(y, TripletPolicy::kRandomPerAnchor, nullptr), InvalidArgument);
}

TEST_CASE("semantic alignment: hand cases") {
  MatrixD Z(3, 2);
  Z << 1, 0, 2, 0, 0, 1;  // s(a,p) = 1, s(a,n) = 0
  auto out = semantic_alignment_loss<double>(Z, {{0, 1, 2}}, 0.5);
  CHECK(out.value == 0.0);
  CHECK(out.gradients[0].isZero(0));

  MatrixD same(3, 2);
  same << 0.6, 0.8, 0.6, 0.8, 0.6, 0.8;
  CHECK(std::abs(semantic_alignment_loss<double>(same, {{0, 1, 2}}, 0.2).value - 0.2) < 1e-12);

  MatrixD zero = same;
  zero.row(2).setZero();
  CHECK_THROWS_AS(semantic_alignment_loss<double>(zero, {{0, 1, 2}}, 0.2), DegenerateError);
  CHECK_THROWS_AS(semantic_alignment_loss<double>(same, {{0, 1, 2}}, 0.0), InvalidArgument);
}

TEST_CASE("semantic alignment: brute force, bounds, scale invariance, gradient") {
  Rng rng = make_stream(3, 0);
  const Labels y = {0, 0, 0, 1, 1, 1};
  const auto trip = mine_triplets(y, TripletPolicy::kAll);
  std::vector<std::tuple<int, int, int>> raw;
  for (const auto& t : trip) raw.emplace_back(t.anchor, t.positive, t.negative);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixD Z = gaussian(6, 4, rng);
    const double m = 0.2;
    const auto out = semantic_alignment_loss<double>(Z, trip, m);
    CHECK(std::abs(out.value - oracle::triplet_loss(Z, raw, m)) < 1e-10);
    CHECK(out.value >= 0);
    CHECK(out.value <= double(trip.size()) * (m + 2));
    const MatrixD scaled = 3.7 * Z;
    CHECK(std::abs(semantic_alignment_loss<double>(scaled, trip, m).value - out.value) < 1e-6);

    const Objective fn = [&](const VectorD& th) {
      const MatrixD Zt = Eigen::Map<const MatrixD>(th.data(), 6, 4);
      const auto o = semantic_alignment_loss<double>(Zt, trip, m);
      return std::make_pair(o.value, flat(o.gradients[0]));
    };
    CHECK(grad_check(fn, flat(Z)).max_rel_error <= 1e-4);
  }
}

TEST_CASE("prototypes: single samples, antipodes, two-pass oracle") {
  MatrixD Z(2, 2);
  Z << 3, 4, 0, -2;
  const auto p = class_prototypes<double>(Z, {1, 0}, 3);
  CHECK((p.P.row(1) - Eigen::RowVector2d(0.6, 0.8)).norm() < 1e-15);
  CHECK((p.P.row(0) - Eigen::RowVector2d(0, -1)).norm() < 1e-15);
  CHECK(!p.present(2));
  CHECK(p.P.row(2).isZero(0));

  MatrixD anti(2, 2);
  anti << 1, 0, -1, 0;
  CHECK_THROWS_AS(class_prototypes<double>(anti, {0, 0}, 1), DegenerateError);

  Rng rng = make_stream(4, 0);
  const MatrixD R = gaussian(9, 5, rng);
  const Labels y = {0, 1, 2, 0, 1, 2, 0, 0, 1};
  std::vector<int> counts;
  const MatrixD P = oracle::prototypes(R, y, 4, counts);
  const auto got = class_prototypes<double>(R, y, 4);
  CHECK((got.P - P).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(got.counts == counts);
}

TEST_CASE("similarity matrix: orthonormal, identical, cosine loop") {
  Prototypes<double> p;
  p.P = MatrixD::Identity(3, 3);
  p.counts = {1, 2, 1};
  auto s = class_similarity_matrix(p);
  CHECK(s.S == MatrixD::Identity(3, 3));
  CHECK(s.valid.all());

  p.P = MatrixD::Zero(3, 2);
  p.P.col(0).setOnes();
  p.counts = {1, 0, 4};
  s = class_similarity_matrix(p);
  CHECK(s.S(0, 2) == 1.0);
  CHECK(s.S(2, 2) == 1.0);
  CHECK(!s.valid(1, 0));
  CHECK(s.S(1, 1) == 0.0);

  MatrixD hand(3, 3);
  hand << 1, 2, 2, 0, 1, 0, -1, 1, 3;
  p.P = unit_rows(hand);
  p.counts = {1, 1, 1};
  s = class_similarity_matrix(p);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::abs(s.S(i, j) - oracle::cosine(hand, i, hand, j)) <= 1e-6);
  CHECK((s.S - s.S.transpose()).isZero(0));
}

TEST_CASE("reference matrix: single subject, mean, masked-mean oracle") {
  const auto a = sim2(0.4), b = sim2(0.6);
  const SimilarityMatrix<double> one[] = {a};
  auto r = reference_matrix<double>(one);
  CHECK(r.S_ref == a.S);
  CHECK((r.omega == a.valid).all());
  const SimilarityMatrix<double> two[] = {a, b};
  r = reference_matrix<double>(two);
  CHECK(std::abs(r.S_ref(0, 1) - 0.5) < 1e-15);

  Rng rng = make_stream(5, 0);
  std::bernoulli_distribution coin(0.6);
  std::vector<SimilarityMatrix<double>> subjects(3);
  for (auto& s : subjects) {
    s.S = gaussian(4, 4, rng);
    s.valid = BoolMatrix(4, 4);
    for (Eigen::Index i = 0; i < 16; ++i) s.valid.data()[i] = coin(rng);
  }
  for (auto policy : {OmegaPolicy::kUnion, OmegaPolicy::kIntersection}) {
    r = reference_matrix<double>(subjects, policy);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double sum = 0;
        int n = 0;
        for (const auto& s : subjects)
          if (s.valid(i, j)) sum += s.S(i, j), ++n;
        CHECK(std::abs(r.S_ref(i, j) - (n ? sum / n : 0.0)) <= 1e-6);
        CHECK(r.omega(i, j) == (policy == OmegaPolicy::kUnion ? n > 0 : n == 3));
      }
  }
  SimilarityMatrix<double> wrong;
  wrong.S = MatrixD::Zero(3, 3);
  wrong.valid = BoolMatrix::Constant(3, 3, true);
  const SimilarityMatrix<double> mixed[] = {a, wrong};
  CHECK_THROWS_AS(reference_matrix<double>(mixed), DimensionError);
}

TEST_CASE("relational consistency: hand values") {
  CHECK(std::abs(relational_consistency_loss(sim2(0.3), ref2(0.5)).value - 0.02) < 1e-12);
  CHECK(relational_consistency_loss(sim2(0.5), ref2(0.5)).value == 0.0);
  auto empty = ref2(0.5);
  empty.omega.setConstant(false);
  CHECK_THROWS_AS(relational_consistency_loss(sim2(0.3), empty), DegenerateError);
}

TEST_CASE("relational consistency: class permutation invariance") {
  Rng rng = make_stream(6, 0);
  const int C = 4;
  SimilarityMatrix<double> s;
  s.S = gaussian(C, C, rng);
  s.valid = BoolMatrix::Constant(C, C, true);
  s.valid(1, 2) = false;
  ReferenceMatrix<double> r;
  r.S_ref = gaussian(C, C, rng);
  r.omega = BoolMatrix::Constant(C, C, true);
  r.omega(3, 0) = false;
  const int perm[] = {2, 0, 3, 1};
  SimilarityMatrix<double> ps = s;
  ReferenceMatrix<double> pr = r;
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) {
      ps.S(perm[i], perm[j]) = s.S(i, j);
      ps.valid(perm[i], perm[j]) = s.valid(i, j);
      pr.S_ref(perm[i], perm[j]) = r.S_ref(i, j);
      pr.omega(perm[i], perm[j]) = r.omega(i, j);
    }
  CHECK(std::abs(relational_consistency_loss(s, r).value - relational_consistency_loss(ps, pr).value) < 1e-14);
}

TEST_CASE("relational consistency: gradient through prototypes") {
  Rng rng = make_stream(7, 0);
  const Labels y = {0, 1, 2, 0, 1, 2, 0, 1};
  for (int trial = 0; trial < 3; ++trial) {
    ReferenceMatrix<double> ref;
    ref.S_ref = gaussian(4, 4, rng) * 0.3;
    ref.S_ref = (ref.S_ref + ref.S_ref.transpose()).eval();
    ref.omega = BoolMatrix::Constant(4, 4, true);
    const MatrixD R = gaussian(8, 5, rng);
    const Objective fn = [&](const VectorD& th) {
      const MatrixD Rt = Eigen::Map<const MatrixD>(th.data(), 8, 5);
      const auto o = relational_consistency_from_embeddings<double>(Rt, y, ref);
      return std::make_pair(o.value, flat(o.gradients[0]));
    };
    CHECK(grad_check(fn, flat(R)).max_rel_error <= 1e-4);
  }
}

TEST_CASE("contrastive: hand recompute, symmetry, perfect alignment") {
  Rng rng = make_stream(8, 0);
  const MatrixD b = unit_rows(gaussian(4, 4, rng)), im = unit_rows(gaussian(4, 4, rng));
  MatrixD t = MatrixD::Identity(4, 4);
  t.row(1) << 0.2, 0.8, 0, 0;
  const double tau = 0.3;
  const auto out = bidirectional_contrastive_loss<double>(b, im, tau, t);
  CHECK(std::abs(out.value - oracle::contrastive(b, im, tau, t)) <= 1e-10);

  const MatrixD I = MatrixD::Identity(4, 4);
  const double fwd = bidirectional_contrastive_loss<double>(b, im, tau, I).value;
  const double rev = bidirectional_contrastive_loss<double>(im, b, tau, I).value;
  CHECK(std::abs(fwd - rev) < 1e-12);

  const MatrixD ortho = MatrixD::Identity(5, 5);
  const auto perfect = bidirectional_contrastive_loss<double>(ortho, ortho, 0.01, MatrixD::Identity(5, 5));
  CHECK(perfect.value < 1e-3);
  const MatrixD logits = ortho * ortho.transpose();
  for (int i = 0; i < 5; ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    CHECK(arg == i);
  }

  CHECK_THROWS_AS(bidirectional_contrastive_loss<double>(b, im, tau, 2 * I), InvalidArgument);
  CHECK_THROWS_AS(bidirectional_contrastive_loss<double>(b, im, 0.0, I), InvalidArgument);
}

TEST_CASE("contrastive: moving brain off its image never helps, gradients check") {
  Rng rng = make_stream(9, 0);
  const MatrixD im = MatrixD::Identity(6, 6).topRows(4);
  const MatrixD I = MatrixD::Identity(4, 4);
  const double best = bidirectional_contrastive_loss<double>(im, im, 0.05, I).value;
  for (int k = 0; k < 20; ++k) {
    // Noise outside the image span lowers every positive logit and leaves
    // the negatives at zero.
    MatrixD noise = gaussian(4, 6, rng);
    noise.leftCols(4).setZero();
    const MatrixD b = unit_rows(im + 0.1 * unit_rows(noise));
    CHECK(bidirectional_contrastive_loss<double>(b, im, 0.05, I).value > best);
  }
  const MatrixD b = unit_rows(gaussian(5, 3, rng)), other = unit_rows(gaussian(5, 3, rng));
  const MatrixD t = softclip_targets<double>(other, 0.5);
  for (int which = 0; which < 2; ++which) {
    const Objective fn = [&](const VectorD& th) {
      const MatrixD x = Eigen::Map<const MatrixD>(th.data(), 5, 3);
      const auto o = which == 0 ? bidirectional_contrastive_loss<double>(x, other, 0.2, t)
                                : bidirectional_contrastive_loss<double>(b, x, 0.2, t);
      return std::make_pair(o.value, flat(o.gradients[which]));
    };
    CHECK(grad_check(fn, flat(which == 0 ? b : other)).max_rel_error <= 1e-4);
  }
}

TEST_CASE("mixco: forced coefficients and sampled rows") {
  Rng rng = make_stream(10, 0);
  const MatrixD X = gaussian(4, 3, rng);
  auto m = mixco_apply<double>(X, {1, 2, 3, 0}, {1.0, 1.0, 1.0, 1.0});
  CHECK(m.targets == MatrixD::Identity(4, 4));
  CHECK(m.mixed == X);

  m = mixco_apply<double>(X, {2, 2, 2, 2}, {0.5, 0.5, 0.5, 0.5});
  CHECK(m.targets(0, 0) == 0.5);
  CHECK(m.targets(0, 2) == 0.5);
  CHECK(m.targets(2, 2) == 1.0);
  CHECK((m.mixed.row(0) - 0.5 * (X.row(0) + X.row(2))).norm() < 1e-15);

  for (int draw = 0; draw < 1000; ++draw) {
    const auto s = mixco_targets<double>(X, rng, 0.15);
    CHECK((s.targets.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(mixco_apply<double>(X, {5, 0, 0, 0}, {0.5, 0.5, 0.5, 0.5}), InvalidArgument);
  CHECK_THROWS_AS(mixco_targets<double>(X.topRows(1), rng, 0.15), InvalidArgument);
}

TEST_CASE("softclip: limits and stochastic rows") {
  const MatrixD ortho = MatrixD::Identity(4, 4);
  CHECK((softclip_targets<double>(ortho, 1e-3) - MatrixD::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
  const MatrixD same = MatrixD::Ones(3, 2) / std::sqrt(2.0);
  CHECK((softclip_targets<double>(same, 0.1).array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  Rng rng = make_stream(11, 0);
  const MatrixD t = softclip_targets<double>(unit_rows(gaussian(7, 4, rng)), 0.1);
  CHECK((t.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("combined objective: reduction and linearity") {
  LossOutput<double> con{1.5, {MatrixD::Constant(2, 2, 1.0), MatrixD::Zero(2, 2)}};
  LossOutput<double> sa{0.4, {MatrixD::Constant(2, 3, 2.0)}};
  LossOutput<double> rc{0.7, {MatrixD::Constant(2, 2, -1.0)}};
  const ObjectiveParts<double> parts{&con, &sa, &rc};

  auto only = combined_objective(parts, {2.0, 0.0, 0.0});
  CHECK(only.value == 2.0 * 1.5);
  CHECK(only.d_brain == MatrixD::Constant(2, 2, 2.0));

  const auto base = combined_objective(parts, {1.0, 1.0, 0.1});
  CHECK(base.value == doctest::Approx(1.5 + 0.4 + 0.07).epsilon(1e-15));
  const auto doubled = combined_objective(parts, {1.0, 2.0, 0.1});
  CHECK(std::abs(doubled.value - (base.value + 0.4 * 1.0)) < 1e-15);
  CHECK(doubled.d_latents == 2.0 * base.d_latents);
  CHECK(base.d_brain == MatrixD::Constant(2, 2, 0.9));

  const auto skipped = combined_objective(ObjectiveParts<double>{&con, nullptr, nullptr}, {});
  CHECK(skipped.d_latents.size() == 0);
  CHECK(LossWeights{}.lambda1 == 1.0);
  CHECK(LossWeights{}.lambda2 == 0.1);
}
