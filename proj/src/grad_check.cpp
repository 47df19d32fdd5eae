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
#include "duala/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace duala {

GradCheckResult grad_check(const Objective& fn, const VectorD& theta, GradCheckOptions options) {
  const auto [value, analytic] = fn(theta);
  const auto [again, again_grad] = fn(theta);
  if (value != again || analytic != again_grad)
    throw StateError("objective is not deterministic: repeated evaluation differs");
  require_dims(analytic.size() == theta.size(), "gradient length does not match parameter length");

  const Eigen::Index n = theta.size();
  Eigen::Index stride = 1;
  if (options.max_coordinates > 0 && n > options.max_coordinates)
    stride = (n + options.max_coordinates - 1) / options.max_coordinates;

  GradCheckResult result;
  VectorD probe = theta;
  for (Eigen::Index i = 0; i < n; i += stride) {
    const double saved = probe(i);
    probe(i) = saved + options.eps;
    const double up = fn(probe).first;
    probe(i) = saved - options.eps;
    const double down = fn(probe).first;
    probe(i) = saved;
    const double numeric = (up - down) / (2 * options.eps);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), options.floor});
    const double rel = std::abs(analytic(i) - numeric) / denom;
    ++result.checked;
    // NaN compares false, so it always becomes the worst entry.
    if (result.worst_index < 0 || !(rel <= result.max_rel_error)) {
      result.max_rel_error = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
      result.worst_index = i;
      result.analytic = analytic(i);
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace duala
