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

#include <functional>
#include <utility>

#include "duala/tensor.hpp"

namespace duala {

using VectorD = Eigen::VectorXd;

/// Scalar objective returning its value and analytic gradient.
using Objective = std::function<std::pair<double, VectorD>(const VectorD&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Denominators never drop below this, so coordinates whose true
  // gradient is ~0 are judged on absolute error.
  double floor = 1e-6;
  // 0 checks every coordinate; otherwise an evenly strided subset.
  Eigen::Index max_coordinates = 0;
};

struct GradCheckResult {
  double max_rel_error = 0;
  Eigen::Index worst_index = -1;
  double analytic = 0;
  double numeric = 0;
  Eigen::Index checked = 0;
};

/// Compares the analytic gradient with central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps coordinate by coordinate.
/// Throws StateError if two evaluations at the same point disagree.
GradCheckResult grad_check(const Objective& fn, const VectorD& theta, GradCheckOptions options = {});

}  // namespace duala
