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
#include "duala/pack_io.hpp"

#include <fstream>
#include <sstream>

#include "duala/binary_io.hpp"

namespace duala {

namespace binary {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace binary

std::string encode_pack(const DatasetPack& pack) {
  binary::Writer w;
  w.bytes(std::string_view(kPackMagic, 8));
  w.u32(kPackVersion);
  const auto& dims = pack.dims();
  w.u32(static_cast<std::uint32_t>(pack.stimuli().size()));
  w.u32(static_cast<std::uint32_t>(pack.subjects().size()));
  w.u32(static_cast<std::uint32_t>(pack.class_count()));
  w.u32(static_cast<std::uint32_t>(dims.tokens));
  w.u32(static_cast<std::uint32_t>(dims.token_dim));
  w.u32(static_cast<std::uint32_t>(dims.retrieval_dim));
  for (const auto& s : pack.stimuli()) {
    w.u32(static_cast<std::uint32_t>(s.stimulus_id));
    w.u32(static_cast<std::uint32_t>(s.class_id));
    w.f32s(s.target_tokens.data(), static_cast<std::size_t>(s.target_tokens.size()));
    w.f32s(s.target_retrieval.data(), static_cast<std::size_t>(s.target_retrieval.size()));
  }
  for (const auto& ds : pack.subjects()) {
    w.u32(static_cast<std::uint32_t>(ds.subject_id));
    w.u32(static_cast<std::uint32_t>(ds.rows()));
    w.u32(static_cast<std::uint32_t>(ds.voxel_dim()));
    for (int id : ds.stimulus_ids) w.u32(static_cast<std::uint32_t>(id));
    for (Split sp : ds.split) w.u8(static_cast<std::uint8_t>(sp));
    w.f32s(ds.voxels.data(), static_cast<std::size_t>(ds.voxels.size()));
  }
  return w.buffer();
}

DatasetPack decode_pack(std::string_view bytes) {
  binary::Reader r(bytes);
  if (bytes.size() < 8 || r.bytes(8) != std::string_view(kPackMagic, 8))
    throw FormatError(FormatErrorKind::kBadMagic, "bad magic: not a dataset pack");
  const auto version = r.u32();
  if (version != kPackVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      "pack version " + std::to_string(version) + " is not supported");
  const auto n_stim = r.u32();
  const auto n_subj = r.u32();
  const auto classes = static_cast<int>(r.u32());
  PackDims dims;
  dims.tokens = static_cast<int>(r.u32());
  dims.token_dim = static_cast<int>(r.u32());
  dims.retrieval_dim = static_cast<int>(r.u32());
  const std::size_t per_stim = 8 + 4 * (std::size_t(dims.tokens) * dims.token_dim + dims.retrieval_dim);
  if (per_stim != 0 && n_stim > r.remaining() / per_stim)
    throw FormatError(FormatErrorKind::kTruncated, "file is truncated");

  std::vector<StimulusRecord> stimuli(n_stim);
  for (auto& s : stimuli) {
    s.stimulus_id = static_cast<int>(r.u32());
    s.class_id = static_cast<int>(r.u32());
    s.target_tokens.resize(dims.tokens, dims.token_dim);
    r.f32s(s.target_tokens.data(), static_cast<std::size_t>(s.target_tokens.size()));
    s.target_retrieval.resize(dims.retrieval_dim);
    r.f32s(s.target_retrieval.data(), static_cast<std::size_t>(dims.retrieval_dim));
  }
  std::vector<SubjectDataset> subjects;
  for (std::uint32_t k = 0; k < n_subj; ++k) {
    SubjectDataset ds;
    ds.subject_id = static_cast<int>(r.u32());
    const auto rows = r.u32();
    const auto d = r.u32();
    if (rows > r.remaining() / 5) throw FormatError(FormatErrorKind::kTruncated, "file is truncated");
    ds.stimulus_ids.resize(rows);
    for (auto& id : ds.stimulus_ids) id = static_cast<int>(r.u32());
    ds.split.resize(rows);
    for (auto& sp : ds.split) {
      const auto raw = r.u8();
      if (raw > 1) throw FormatError(FormatErrorKind::kMalformed, "invalid split tag");
      sp = static_cast<Split>(raw);
    }
    if (d != 0 && rows > r.remaining() / 4 / d)
      throw FormatError(FormatErrorKind::kTruncated, "file is truncated");
    ds.voxels.resize(rows, d);
    r.f32s(ds.voxels.data(), static_cast<std::size_t>(ds.voxels.size()));
    subjects.push_back(std::move(ds));
  }
  if (!r.at_end()) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes after pack");

  try {
    return DatasetPack(std::move(stimuli), std::move(subjects), classes, dims);
  } catch (const DanglingStimulusError& e) {
    throw FormatError(FormatErrorKind::kDanglingStimulus, std::string("dangling stimulus: ") + e.what());
  } catch (const Error& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("invalid pack: ") + e.what());
  }
}

void save_pack(const DatasetPack& pack, const std::string& path) {
  binary::write_file(path, encode_pack(pack));
}

DatasetPack load_pack(const std::string& path) { return decode_pack(binary::read_file(path)); }

}  // namespace duala
