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

#include "duala/objectives.hpp"
#include "duala/tensor.hpp"

namespace duala {

/// Per-class statistics of source-subject latents.
///   mu(c)                 mean over subjects of each subject's class mean
///   sigma_per_subject[s]  per-dimension sample std (n-1) of class c latents
///   sigma_bar(c)          mean of sigma over subjects where c is present
template <typename T>
struct CategoryStats {
  Matrix<T> mu;                              // C x h
  std::vector<Matrix<T>> sigma_per_subject;  // K entries, each C x h
  Matrix<T> sigma_bar;                       // C x h
  BoolMatrix present;                        // C x K

  int class_count() const { return static_cast<int>(mu.rows()); }
  int subject_count() const { return static_cast<int>(present.cols()); }
  bool class_present(int c) const {
    return c >= 0 && c < class_count() && present.row(c).any();
  }
};

template <typename T>
struct LabeledLatents {
  Matrix<T> Z;
  Labels labels;
};

/// A class with a single sample in a subject has sigma 0 there. Classes
/// absent from every subject are marked absent and pass through perturb().
template <typename T>
CategoryStats<T> fit_category_stats(std::span<const LabeledLatents<T>> per_subject, int class_count);

template <typename T>
struct PerturbedLatents {
  Matrix<T> Z;
  Matrix<T> scale;       // dZ_out/dZ_in, elementwise
  int passthrough = 0;   // rows whose class had no statistics
};

/// z~ = mu_c + sigma_bar_c (.) (z - mu_c), row by row.
template <typename T>
PerturbedLatents<T> perturb(const Matrix<T>& Z, const Labels& labels, const CategoryStats<T>& stats);

/// z~ = mu_c + (1 + eps) (.) sigma_bar_c (.) (z - mu_c), eps ~ N(0, noise^2)
/// per element. noise = 0 draws nothing and equals perturb() bitwise.
template <typename T>
PerturbedLatents<T> perturb_stochastic(const Matrix<T>& Z, const Labels& labels,
                                       const CategoryStats<T>& stats, double noise, Rng& rng);

/// Chain rule through either perturbation: dZ = scale (.) dZ~.
template <typename T>
Matrix<T> perturb_backward(const PerturbedLatents<T>& p, const Matrix<T>& d_perturbed);

}  // namespace duala
