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

#include <string>
#include <vector>

#include "duala/checkpoint.hpp"
#include "duala/data_model.hpp"
#include "duala/train_config.hpp"

namespace duala {

enum class TargetKind { kMix, kSoft };

const char* target_kind_name(TargetKind kind);

/// One optimizer step. Terms that were not evaluated are recorded as 0.
struct TraceRow {
  int epoch = 0;
  long long step = 0;
  double loss_total = 0;
  double loss_contrastive = 0;
  double loss_sa = 0;
  double loss_rc = 0;
  double lr = 0;
  TargetKind target_kind = TargetKind::kMix;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  long long skipped_structure_steps = 0;  // batches with < 2 classes
  long long passthrough_rows = 0;         // perturbation rows without stats

  /// Mean of a column over the rows of one epoch.
  double epoch_mean(int epoch, double TraceRow::*column) const;
};

void write_trace_csv(const TrainTrace& trace, const std::string& path);

struct TrainResult {
  Checkpoint checkpoint;
  TrainTrace trace;
};

/// Joint training of per-subject adapters and the backbone on the
/// contrastive objective. Batches are drawn from one subject at a time,
/// cycling through subjects.
TrainResult pretrain(const DatasetPack& pack, const std::vector<int>& subjects, const TrainConfig& config);

/// Fills the reference similarity matrix and category statistics from the
/// source subjects' train rows.
void compute_reference(Checkpoint& checkpoint, const DatasetPack& pack);

/// Adapts to a new subject: a fresh adapter plus low-rank adapters are
/// trained while every pre-trained tensor stays frozen. Loss weights of 0
/// and sdp = off remove the corresponding term from the step entirely.
TrainResult finetune(const Checkpoint& base, const DatasetPack& pack, const SubjectDataset& subject,
                     const TrainConfig& config);

/// Embeddings of one subject's rows under a checkpoint.
struct Encoded {
  MatrixF latents;    // shared latent space
  MatrixF retrieval;  // brain embeddings, unit-norm
  MatrixF image;      // paired retrieval targets
  Labels labels;
  std::vector<int> stimulus_ids;
};

Encoded encode_subject(const Checkpoint& checkpoint, const DatasetPack& pack, const SubjectDataset& subject,
                       Split which);

/// Train-split voxel means.
RowVector<float> train_center(const SubjectDataset& subject);

}  // namespace duala
