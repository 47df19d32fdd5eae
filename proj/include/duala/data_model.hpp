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
#include <unordered_map>
#include <vector>

#include "duala/tensor.hpp"

namespace duala {

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

/// One visual stimulus, held through its embeddings: a T x E token grid and a
/// unit-norm retrieval vector of length e.
struct StimulusRecord {
  int stimulus_id = 0;
  int class_id = 0;
  MatrixF target_tokens;
  RowVector<float> target_retrieval;
};

/// One subject's voxel responses. Row i of `voxels` was recorded while
/// viewing `stimulus_ids[i]` and belongs to `split[i]`.
struct SubjectDataset {
  int subject_id = 0;
  MatrixF voxels;
  std::vector<int> stimulus_ids;
  std::vector<Split> split;

  int rows() const { return static_cast<int>(voxels.rows()); }
  int voxel_dim() const { return static_cast<int>(voxels.cols()); }
  std::vector<int> rows_with(Split which) const;
};

struct PackDims {
  int tokens = 16;          // T
  int token_dim = 64;       // E
  int retrieval_dim = 64;   // e

  bool operator==(const PackDims&) const = default;
};

class DatasetPack {
 public:
  DatasetPack() = default;
  DatasetPack(std::vector<StimulusRecord> stimuli, std::vector<SubjectDataset> subjects,
              int class_count, PackDims dims);

  const std::vector<StimulusRecord>& stimuli() const { return stimuli_; }
  const std::vector<SubjectDataset>& subjects() const { return subjects_; }
  int class_count() const { return class_count_; }
  const PackDims& dims() const { return dims_; }

  bool has_stimulus(int stimulus_id) const { return index_.count(stimulus_id) != 0; }
  const StimulusRecord& stimulus(int stimulus_id) const;
  const SubjectDataset& subject(int subject_id) const;
  bool has_subject(int subject_id) const;

  /// Class label per row of a subject.
  Labels labels_for(const SubjectDataset& ds, const std::vector<int>& rows) const;
  /// Retrieval targets (rows x e) for the given subject rows.
  MatrixF retrieval_targets(const SubjectDataset& ds, const std::vector<int>& rows) const;

 private:
  void validate() const;

  std::vector<StimulusRecord> stimuli_;
  std::vector<SubjectDataset> subjects_;
  int class_count_ = 0;
  PackDims dims_;
  std::unordered_map<int, std::size_t> index_;
};

/// Thrown by DatasetPack construction when a row references a stimulus that
/// is not in the table.
class DanglingStimulusError : public Error {
 public:
  using Error::Error;
};

struct SynthConfig {
  int K_source = 3;
  int d_min = 512;
  int d_max = 1024;
  int trials_per_subject = 1500;
  int test_trials = 200;
  int held_out = 1;
  int C = 10;
  int h_true = 32;
  double noise_std = 0.5;
  double subject_gain_std = 0.3;
  double instance_std = 0.5;
  double shared_fraction = 0.0;
  PackDims dims;
  std::uint64_t seed = 0;

  void validate() const;
  static SynthConfig from_file(const std::string& path);
  static SynthConfig from_text(const std::string& text);
  std::string to_text() const;
};

/// Ground-truth factors the generator used, for recoverability checks.
struct SyntheticTruth {
  MatrixD latents;                 // one row per stimulus-table entry
  std::vector<MatrixD> mixing;     // per subject, d_s x h_true
  std::vector<RowVector<double>> gains;
};

struct SyntheticPack {
  DatasetPack pack;
  SyntheticTruth truth;
};

/// Source subjects get ids 1..K_source, held-out subjects follow.
DatasetPack generate_synthetic(const SynthConfig& config);
SyntheticPack generate_synthetic_with_truth(const SynthConfig& config);

/// First `n_trials` train rows in stored order plus every test row.
SubjectDataset session_subset(const SubjectDataset& ds, int n_trials);

}  // namespace duala
