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

#include "duala/evaluation.hpp"

namespace duala {

/// One evaluated run: an ablation arm (or "eval") under one seed.
struct ReportRecord {
  std::string arm;
  std::uint64_t seed = 0;
  int subject = 0;
  RetrievalReport retrieval;
  StructureReport structure;
};

enum class ReportFormat { kCsv, kJsonLines };

ReportFormat parse_report_format(const std::string& name);

/// Field order: arm, seed, subject, image_acc, brain_acc, pool_size,
/// n_pools, pool_seed, intra_mean, inter_mean, ratio, silhouette.
/// Reals use 6 significant digits.
std::string format_report(const std::vector<ReportRecord>& records, ReportFormat format);
std::vector<ReportRecord> parse_report(const std::string& text, ReportFormat format);

void emit_report(const std::vector<ReportRecord>& records, const std::string& path, ReportFormat format);

/// stimulus_id,class_id,x,y rows for plotting.
std::string format_pca_csv(const std::vector<int>& stimulus_ids, const Labels& labels, const MatrixF& coords);

}  // namespace duala
