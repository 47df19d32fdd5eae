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
#include <string>
#include <vector>

namespace duala {

struct GradSuiteOptions {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  bool f64 = true;
  // 0 picks 1e-4 in 64-bit mode and 1e-3 in 32-bit mode.
  double tolerance = 0;
  // Operation whose analytic gradient is deliberately corrupted; "" for none,
  // "all" for every operation.
  std::string inject_fault;
};

struct GradSuiteEntry {
  std::string operation;
  std::uint64_t seed = 0;
  double max_rel_error = 0;
  long long checked = 0;
  bool pass = false;
};

/// Names of the operations the suite checks, in run order.
std::vector<std::string> gradient_suite_operations();

/// Finite-difference checks of every differentiable operation, one entry per
/// (operation, seed). Batches hold at most 16 rows.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options);

}  // namespace duala
