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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "duala/backbone.hpp"
#include "duala/objectives.hpp"
#include "duala/perturbation.hpp"
#include "duala/subject_adapter.hpp"
#include "duala/train_config.hpp"

namespace duala {

inline constexpr char kCheckpointMagic[] = "DUALACK1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct SubjectState {
  RidgeAdapter<float> adapter;
  RowVector<float> center;  // train-split voxel means
};

/// All trainable state of a run.
struct Checkpoint {
  TrainConfig config;
  std::vector<int> source_subjects;
  std::map<int, SubjectState> subjects;
  BackboneParams<float> backbone;
  std::optional<LowRankAdapters<float>> lora;
  std::optional<CategoryStats<float>> stats;
  std::optional<ReferenceMatrix<float>> reference;
  std::optional<int> finetuned_subject;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

/// Checkpoint <-> ordered named-tensor table.
std::vector<NamedTensor> checkpoint_tensors(const Checkpoint& ckpt);
Checkpoint checkpoint_from_tensors(const std::vector<NamedTensor>& tensors, const std::string& config_text);

/// Layout (little-endian): magic[8], u32 version, u32 tensor count, then per
/// tensor u16 name length, name, u8 rank, rank x u64 dims, f32 payload
/// (row-major); finally u32 length + config text.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

/// Raw table access, used by tooling that inspects tensor names.
std::vector<NamedTensor> read_tensor_table(std::string_view bytes, std::string* config_text = nullptr);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace duala
