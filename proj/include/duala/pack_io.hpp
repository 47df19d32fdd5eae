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

#include "duala/data_model.hpp"

namespace duala {

inline constexpr char kPackMagic[] = "DUALAPK1";
inline constexpr std::uint32_t kPackVersion = 1;

/// Layout (all little-endian):
///   magic[8] u32 version
///   u32 stimulus_count u32 subject_count u32 C u32 T u32 E u32 e
///   per stimulus: u32 id, u32 class, T*E f32 tokens, e f32 retrieval
///   per subject:  u32 id, u32 rows, u32 d, rows x u32 stimulus id,
///                 rows x u8 split, rows*d f32 voxels (row-major)
std::string encode_pack(const DatasetPack& pack);
DatasetPack decode_pack(std::string_view bytes);

void save_pack(const DatasetPack& pack, const std::string& path);
DatasetPack load_pack(const std::string& path);

}  // namespace duala
