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
#include "duala/gradient_suite.hpp"

#include <functional>
#include <memory>

#include "duala/backbone.hpp"
#include "duala/grad_check.hpp"
#include "duala/objectives.hpp"
#include "duala/perturbation.hpp"
#include "duala/subject_adapter.hpp"

namespace duala {
namespace {

template <typename T>
Matrix<T> gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(nd(rng));
  return m;
}

template <typename T>
Matrix<T> unit_rows(Matrix<T> m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

// Views a list of tensors as one flat parameter vector.
template <typename T>
struct Flat {
  std::vector<Matrix<T>*> parts;

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (auto* p : parts) n += p->size();
    return n;
  }
  VectorD get() const {
    VectorD v(size());
    Eigen::Index k = 0;
    for (auto* p : parts)
      for (Eigen::Index i = 0; i < p->size(); ++i) v(k++) = static_cast<double>(p->data()[i]);
    return v;
  }
  void set(const VectorD& v) {
    Eigen::Index k = 0;
    for (auto* p : parts)
      for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] = static_cast<T>(v(k++));
  }
  static VectorD pack(const std::vector<const Matrix<T>*>& grads) {
    Eigen::Index n = 0;
    for (auto* g : grads) n += g->size();
    VectorD v(n);
    Eigen::Index k = 0;
    for (auto* g : grads)
      for (Eigen::Index i = 0; i < g->size(); ++i) v(k++) = static_cast<double>(g->data()[i]);
    return v;
  }
};

Labels balanced_labels(int n, int classes, Rng& rng) {
  Labels y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = i % classes;
  std::shuffle(y.begin(), y.end(), rng);
  return y;
}

// Each check builds its inputs from the seed and returns the objective
// together with the starting point.
struct Case {
  Objective fn;
  VectorD theta;
};

template <typename T>
Case adapter_case(Rng& rng) {
  auto X = std::make_shared<Matrix<T>>(gaussian<T>(rng, 12, 7));
  RidgeAdapter<T> a;
  a.weight = gaussian<T>(rng, 7, 5);
  a.ridge_lambda = T(0.3);
  auto state = std::make_shared<RidgeAdapter<T>>(a);
  Case c;
  c.theta = Flat<T>{{&state->weight}}.get();
  c.fn = [X, state](const VectorD& th) {
    Flat<T>{{&state->weight}}.set(th);
    const Matrix<T> Z = adapter_apply(*state, *X);
    const double value = 0.5 * double(Z.squaredNorm()) + 0.5 * double(state->ridge_lambda) * double(state->weight.squaredNorm());
    const Matrix<T> g = adapter_backward(*state, *X, Z);
    return std::make_pair(value, Flat<T>::pack({&g}));
  };
  return c;
}

template <typename T>
Case semantic_case(Rng& rng) {
  const Labels y = balanced_labels(9, 3, rng);
  auto Z = std::make_shared<Matrix<T>>(gaussian<T>(rng, 9, 6));
  const TripletSet triplets = mine_triplets(y, TripletPolicy::kAll);
  Case c;
  c.theta = Flat<T>{{Z.get()}}.get();
  c.fn = [Z, triplets](const VectorD& th) {
    Flat<T>{{Z.get()}}.set(th);
    const auto out = semantic_alignment_loss<T>(*Z, triplets, T(0.6));
    return std::make_pair(double(out.value), Flat<T>::pack({&out.gradients[0]}));
  };
  return c;
}

template <typename T>
Case relational_case(Rng& rng) {
  const int C = 4;
  const Labels y = balanced_labels(12, C, rng);
  ReferenceMatrix<T> ref;
  Matrix<T> S = unit_rows(gaussian<T>(rng, C, 5));
  ref.S_ref = S * S.transpose();
  ref.omega = BoolMatrix::Constant(C, C, true);
  auto R = std::make_shared<Matrix<T>>(unit_rows(gaussian<T>(rng, 12, 5)));
  Case c;
  c.theta = Flat<T>{{R.get()}}.get();
  c.fn = [R, y, ref](const VectorD& th) {
    Flat<T>{{R.get()}}.set(th);
    const auto out = relational_consistency_from_embeddings<T>(*R, y, ref);
    return std::make_pair(double(out.value), Flat<T>::pack({&out.gradients[0]}));
  };
  return c;
}

template <typename T>
Case contrastive_case(Rng& rng) {
  auto brain = std::make_shared<Matrix<T>>(unit_rows(gaussian<T>(rng, 8, 5)));
  auto image = std::make_shared<Matrix<T>>(unit_rows(gaussian<T>(rng, 8, 5)));
  const Matrix<T> targets = softclip_targets<T>(*image, T(0.5));
  Case c;
  c.theta = Flat<T>{{brain.get(), image.get()}}.get();
  c.fn = [brain, image, targets](const VectorD& th) {
    Flat<T>{{brain.get(), image.get()}}.set(th);
    const auto out = bidirectional_contrastive_loss<T>(*brain, *image, T(0.3), targets);
    return std::make_pair(double(out.value), Flat<T>::pack({&out.gradients[0], &out.gradients[1]}));
  };
  return c;
}

// Probe loss <G_t, tokens> + <G_r, retrieval> through the backbone, with
// adapters that are already nonzero.
template <typename T>
struct BackboneFixture {
  BackboneParams<T> params;
  LowRankAdapters<T> lora;
  Matrix<T> Z, g_tokens, g_retrieval;
};

template <typename T>
std::shared_ptr<BackboneFixture<T>> backbone_fixture(Rng& rng) {
  auto f = std::make_shared<BackboneFixture<T>>();
  const PackDims dims{2, 3, 4};
  f->params = backbone_init<T>(6, dims, rng);
  for (auto& b : f->params.blocks) {
    b.fc1.bias = gaussian<T>(rng, 1, 6, 0.1);
    b.fc2.bias = gaussian<T>(rng, 1, 6, 0.1);
  }
  f->lora = lora_init<T>(f->params, 2, rng);
  for (auto& b : f->lora.blocks)
    for (auto& pair : b) pair.B = gaussian<T>(rng, pair.B.rows(), pair.B.cols(), 0.3);
  f->Z = gaussian<T>(rng, 4, 6);
  f->g_tokens = gaussian<T>(rng, 4, 6);
  f->g_retrieval = gaussian<T>(rng, 4, 4);
  return f;
}

template <typename T>
double probe_value(const BackboneFixture<T>& f, const BackboneOutput<T>& out) {
  return double((f.g_tokens.array() * out.tokens.array()).sum() + (f.g_retrieval.array() * out.retrieval.array()).sum());
}

enum class BackboneTarget { kLatents, kParams, kLora };

template <typename T>
Case backbone_case(Rng& rng, BackboneTarget target) {
  auto f = backbone_fixture<T>(rng);
  auto tensors = [f, target]() {
    Flat<T> flat;
    if (target == BackboneTarget::kLatents) flat.parts.push_back(&f->Z);
    if (target == BackboneTarget::kParams) f->params.for_each([&](const std::string&, Matrix<T>& m) { flat.parts.push_back(&m); });
    if (target == BackboneTarget::kLora) f->lora.for_each([&](const std::string&, Matrix<T>& m) { flat.parts.push_back(&m); });
    return flat;
  };
  Case c;
  c.theta = tensors().get();
  c.fn = [f, target, tensors](const VectorD& th) {
    tensors().set(th);
    f->params.touch();
    f->lora.touch();
    const auto out = backbone_forward<T>(f->params, &f->lora, f->Z);
    BackwardOptions opts;
    opts.base_params = target == BackboneTarget::kParams;
    opts.lora = target == BackboneTarget::kLora;
    auto g = backbone_backward<T>(f->params, &f->lora, out.cache, f->g_tokens, f->g_retrieval, opts);
    std::vector<const Matrix<T>*> grads;
    if (target == BackboneTarget::kLatents) grads.push_back(&g.latents);
    if (target == BackboneTarget::kParams) g.params.for_each([&](const std::string&, const Matrix<T>& m) { grads.push_back(&m); });
    if (target == BackboneTarget::kLora) g.lora.for_each([&](const std::string&, const Matrix<T>& m) { grads.push_back(&m); });
    return std::make_pair(probe_value(*f, out), Flat<T>::pack(grads));
  };
  return c;
}

template <typename T>
Case perturbation_case(Rng& rng) {
  const int C = 3;
  std::vector<LabeledLatents<T>> sources;
  for (int s = 0; s < 2; ++s) sources.push_back({gaussian<T>(rng, 9, 5), balanced_labels(9, C, rng)});
  const auto stats = fit_category_stats<T>(sources, C);
  const Labels y = balanced_labels(8, C, rng);
  auto Z = std::make_shared<Matrix<T>>(gaussian<T>(rng, 8, 5));
  const Matrix<T> G = gaussian<T>(rng, 8, 5);
  Case c;
  c.theta = Flat<T>{{Z.get()}}.get();
  c.fn = [Z, y, stats, G](const VectorD& th) {
    Flat<T>{{Z.get()}}.set(th);
    const auto p = perturb<T>(*Z, y, stats);
    const Matrix<T> g = perturb_backward(p, G);
    return std::make_pair(double((G.array() * p.Z.array()).sum()), Flat<T>::pack({&g}));
  };
  return c;
}

template <typename T>
Case combined_case(Rng& rng) {
  // Full objective composed the way a fine-tuning step composes it:
  // latents -> semantic term, latents -> backbone -> contrastive + relational.
  auto f = backbone_fixture<T>(rng);
  const int C = 2;
  const Labels y = balanced_labels(4, C, rng);
  const TripletSet triplets = mine_triplets(y, TripletPolicy::kAll);
  const Matrix<T> image = unit_rows(gaussian<T>(rng, 4, 4));
  const Matrix<T> targets = softclip_targets<T>(image, T(0.5));
  ReferenceMatrix<T> ref;
  ref.S_ref = Matrix<T>::Identity(C, C);
  ref.S_ref(0, 1) = ref.S_ref(1, 0) = T(0.2);
  ref.omega = BoolMatrix::Constant(C, C, true);
  LossWeights w{1.0, 0.7, 0.4};
  Case c;
  c.theta = Flat<T>{{&f->Z}}.get();
  c.fn = [f, y, triplets, image, targets, ref, w](const VectorD& th) {
    Flat<T>{{&f->Z}}.set(th);
    const auto sa = semantic_alignment_loss<T>(f->Z, triplets, T(0.6));
    const auto out = backbone_forward<T>(f->params, &f->lora, f->Z, {.want_tokens = false});
    const auto con = bidirectional_contrastive_loss<T>(out.retrieval, image, T(0.3), targets);
    const auto rc = relational_consistency_from_embeddings<T>(out.retrieval, y, ref);
    const auto total = combined_objective<T>({&con, &sa, &rc}, w);
    auto g = backbone_backward<T>(f->params, &f->lora, out.cache, Matrix<T>(), total.d_brain, {false, false});
    const Matrix<T> dZ = g.latents + total.d_latents;
    return std::make_pair(double(total.value), Flat<T>::pack({&dZ}));
  };
  return c;
}

struct Operation {
  const char* name;
  std::function<Case(Rng&)> make64;
  std::function<Case(Rng&)> make32;
};

template <typename F>
Operation op(const char* name, F&& make) {
  return {name, [make](Rng& r) { return make.template operator()<double>(r); },
          [make](Rng& r) { return make.template operator()<float>(r); }};
}

std::vector<Operation> operations() {
  return {
      op("adapter_backward", []<typename T>(Rng& r) { return adapter_case<T>(r); }),
      op("semantic_alignment_loss", []<typename T>(Rng& r) { return semantic_case<T>(r); }),
      op("relational_consistency_loss", []<typename T>(Rng& r) { return relational_case<T>(r); }),
      op("bidirectional_contrastive_loss", []<typename T>(Rng& r) { return contrastive_case<T>(r); }),
      op("backbone_backward.latents", []<typename T>(Rng& r) { return backbone_case<T>(r, BackboneTarget::kLatents); }),
      op("backbone_backward.params", []<typename T>(Rng& r) { return backbone_case<T>(r, BackboneTarget::kParams); }),
      op("backbone_backward.lora", []<typename T>(Rng& r) { return backbone_case<T>(r, BackboneTarget::kLora); }),
      op("perturb_backward", []<typename T>(Rng& r) { return perturbation_case<T>(r); }),
      op("combined_objective", []<typename T>(Rng& r) { return combined_case<T>(r); }),
  };
}

}  // namespace

std::vector<std::string> gradient_suite_operations() {
  std::vector<std::string> names;
  for (const auto& o : operations()) names.emplace_back(o.name);
  return names;
}

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options) {
  const double tol = options.tolerance > 0 ? options.tolerance : (options.f64 ? 1e-4 : 1e-3);
  GradCheckOptions gc;
  std::vector<GradSuiteEntry> out;
  for (const auto& o : operations()) {
    for (auto seed : options.seeds) {
      Rng rng = make_stream(seed, 7);
      Case c = o.make64(rng);
      if (!options.f64) {
        // Differences of a float objective drown in rounding, so the float
        // gradient is judged against differences of the double objective.
        Rng rng32 = make_stream(seed, 7);
        Case c32 = o.make32(rng32);
        Objective reference = c.fn;
        Objective single = c32.fn;
        c.fn = [reference, single](const VectorD& th) { return std::make_pair(reference(th).first, single(th).second); };
      }
      if (options.inject_fault == "all" || options.inject_fault == o.name) {
        Objective honest = c.fn;
        c.fn = [honest](const VectorD& th) {
          auto r = honest(th);
          r.second *= 1.01;
          r.second(0) += 1e-2;
          return r;
        };
      }
      const auto res = grad_check(c.fn, c.theta, gc);
      out.push_back({o.name, seed, res.max_rel_error, static_cast<long long>(res.checked), res.max_rel_error <= tol});
    }
  }
  return out;
}

}  // namespace duala
