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

#include "duala/report.hpp"
#include "duala/trainer.hpp"

namespace duala {

/// Component switches of one ablation arm.
struct ArmSpec {
  std::string name;
  bool sdp = false;
  bool semantic = false;
  bool relational = false;
};

/// none, sdp, sa, sdp_sa, full.
std::vector<ArmSpec> ablation_arms();

/// Disabled components get weight 0 (or sdp = off). An enabled perturbation
/// keeps the configured variant, defaulting to the deterministic one.
TrainConfig apply_arm(TrainConfig config, const ArmSpec& arm);

struct EvalOptions {
  int pool_size = 100;  // clipped to the test-set size
  int n_pools = 30;
  std::uint64_t pool_seed = 0;
  int threads = 0;
};

/// Retrieval and structure metrics on one subject's test rows.
ReportRecord evaluate_subject(const Checkpoint& checkpoint, const DatasetPack& pack, const SubjectDataset& subject,
                              const EvalOptions& options, const std::string& arm, std::uint64_t seed);

/// "0..4" (inclusive range) or "0,3,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Median of the values, averaging the two middle ones for even counts.
double median(std::vector<double> values);

}  // namespace duala
