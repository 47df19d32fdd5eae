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
#include "duala/checkpoint.hpp"

#include <set>
#include <unordered_map>

#include "duala/binary_io.hpp"

namespace duala {
namespace {

NamedTensor from_matrix(std::string name, const MatrixF& m) {
  NamedTensor t{std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

NamedTensor from_values(std::string name, std::vector<float> values) {
  NamedTensor t{std::move(name), {static_cast<std::uint64_t>(values.size())}, std::move(values)};
  return t;
}

MatrixF bool_to_matrix(const BoolMatrix& b) { return b.cast<float>().matrix(); }

class TensorIndex {
 public:
  explicit TensorIndex(const std::vector<NamedTensor>& tensors) {
    for (const auto& t : tensors) index_.emplace(t.name, &t);
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const NamedTensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw FormatError(FormatErrorKind::kMissingTensor, "checkpoint lacks tensor '" + name + "'");
    return *it->second;
  }
  MatrixF matrix(const std::string& name) const {
    const auto& t = get(name);
    if (t.dims.size() != 2) throw FormatError(FormatErrorKind::kMalformed, "tensor '" + name + "' is not a matrix");
    MatrixF m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    std::copy(t.data.begin(), t.data.end(), m.data());
    return m;
  }
  std::vector<float> values(const std::string& name) const { return get(name).data; }
  const std::unordered_map<std::string, const NamedTensor*>& all() const { return index_; }

 private:
  std::unordered_map<std::string, const NamedTensor*> index_;
};

}  // namespace

std::vector<NamedTensor> checkpoint_tensors(const Checkpoint& ckpt) {
  std::vector<NamedTensor> out;
  std::vector<float> sources(ckpt.source_subjects.begin(), ckpt.source_subjects.end());
  out.push_back(from_values("meta.source_subjects", sources));
  out.push_back(from_values("meta.token_shape", {float(ckpt.backbone.tokens), float(ckpt.backbone.token_dim)}));
  if (ckpt.finetuned_subject) out.push_back(from_values("meta.finetuned_subject", {float(*ckpt.finetuned_subject)}));

  for (const auto& [id, st] : ckpt.subjects) {
    const std::string p = "adapter." + std::to_string(id);
    out.push_back(from_matrix(p + ".weight", st.adapter.weight));
    out.push_back(from_values(p + ".center", std::vector<float>(st.center.data(), st.center.data() + st.center.size())));
    out.push_back(from_values(p + ".lambda", {st.adapter.ridge_lambda}));
  }
  ckpt.backbone.for_each([&](const std::string& name, const MatrixF& m) { out.push_back(from_matrix(name, m)); });
  if (ckpt.lora) {
    out.push_back(from_values("lora.meta", {float(ckpt.lora->rank), ckpt.lora->scale}));
    ckpt.lora->for_each([&](const std::string& name, const MatrixF& m) { out.push_back(from_matrix(name, m)); });
  }
  if (ckpt.stats) {
    const auto& st = *ckpt.stats;
    out.push_back(from_matrix("stats.mu", st.mu));
    NamedTensor sigma{"stats.sigma",
                      {st.sigma_per_subject.size(), static_cast<std::uint64_t>(st.mu.rows()),
                       static_cast<std::uint64_t>(st.mu.cols())},
                      {}};
    for (const auto& s : st.sigma_per_subject) sigma.data.insert(sigma.data.end(), s.data(), s.data() + s.size());
    out.push_back(std::move(sigma));
    out.push_back(from_matrix("stats.sigma_bar", st.sigma_bar));
    out.push_back(from_matrix("stats.present", bool_to_matrix(st.present)));
  }
  if (ckpt.reference) {
    out.push_back(from_matrix("reference.S", ckpt.reference->S_ref));
    out.push_back(from_matrix("reference.omega", bool_to_matrix(ckpt.reference->omega)));
  }
  return out;
}

Checkpoint checkpoint_from_tensors(const std::vector<NamedTensor>& tensors, const std::string& config_text) {
  TensorIndex idx(tensors);
  Checkpoint ck;
  try {
    ck.config = TrainConfig::from_text(config_text);
  } catch (const Error& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("checkpoint config snapshot: ") + e.what());
  }
  for (float v : idx.values("meta.source_subjects")) ck.source_subjects.push_back(static_cast<int>(v));
  const auto shape = idx.values("meta.token_shape");
  if (shape.size() != 2) throw FormatError(FormatErrorKind::kMalformed, "bad token shape");
  if (idx.has("meta.finetuned_subject")) ck.finetuned_subject = static_cast<int>(idx.values("meta.finetuned_subject").at(0));

  std::set<int> ids;
  for (const auto& [name, t] : idx.all()) {
    if (name.rfind("adapter.", 0) == 0 && name.size() > 7 && name.ends_with(".weight"))
      ids.insert(std::stoi(name.substr(8, name.size() - 8 - 7)));
  }
  for (int id : ids) {
    const std::string p = "adapter." + std::to_string(id);
    SubjectState st;
    st.adapter.weight = idx.matrix(p + ".weight");
    st.adapter.subject_id = id;
    st.adapter.ridge_lambda = idx.values(p + ".lambda").at(0);
    const auto center = idx.values(p + ".center");
    st.center = Eigen::Map<const RowVector<float>>(center.data(), static_cast<Eigen::Index>(center.size()));
    ck.subjects.emplace(id, std::move(st));
  }

  ck.backbone.blocks.resize(kBackboneBlocks);
  ck.backbone.tokens = static_cast<int>(shape[0]);
  ck.backbone.token_dim = static_cast<int>(shape[1]);
  ck.backbone.for_each([&](const std::string& name, MatrixF& m) { m = idx.matrix(name); });

  if (idx.has("lora.meta")) {
    const auto meta = idx.values("lora.meta");
    LowRankAdapters<float> lora;
    lora.rank = static_cast<int>(meta.at(0));
    lora.scale = meta.at(1);
    lora.blocks.resize(kBackboneBlocks);
    lora.for_each([&](const std::string& name, MatrixF& m) { m = idx.matrix(name); });
    ck.lora = std::move(lora);
  }
  if (idx.has("stats.mu")) {
    CategoryStats<float> st;
    st.mu = idx.matrix("stats.mu");
    st.sigma_bar = idx.matrix("stats.sigma_bar");
    st.present = idx.matrix("stats.present").array() != 0.0f;
    const auto& sigma = idx.get("stats.sigma");
    if (sigma.dims.size() != 3) throw FormatError(FormatErrorKind::kMalformed, "stats.sigma must have rank 3");
    const auto per = static_cast<std::size_t>(sigma.dims[1] * sigma.dims[2]);
    for (std::uint64_t k = 0; k < sigma.dims[0]; ++k) {
      MatrixF m(static_cast<Eigen::Index>(sigma.dims[1]), static_cast<Eigen::Index>(sigma.dims[2]));
      std::copy(sigma.data.begin() + static_cast<std::ptrdiff_t>(k * per),
                sigma.data.begin() + static_cast<std::ptrdiff_t>((k + 1) * per), m.data());
      st.sigma_per_subject.push_back(std::move(m));
    }
    ck.stats = std::move(st);
  }
  if (idx.has("reference.S")) {
    ReferenceMatrix<float> ref;
    ref.S_ref = idx.matrix("reference.S");
    ref.omega = idx.matrix("reference.omega").array() != 0.0f;
    ck.reference = std::move(ref);
  }
  return ck;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const auto tensors = checkpoint_tensors(ckpt);
  binary::Writer w;
  w.bytes(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u64(d);
    w.f32s(t.data.data(), t.data.size());
  }
  const std::string config = ckpt.config.to_text();
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.bytes(config);
  return w.buffer();
}

std::vector<NamedTensor> read_tensor_table(std::string_view bytes, std::string* config_text) {
  binary::Reader r(bytes);
  if (bytes.size() < 8 || r.bytes(8) != std::string_view(kCheckpointMagic, 8))
    throw FormatError(FormatErrorKind::kBadMagic, "bad magic: not a checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch, "checkpoint version " + std::to_string(version) + " is not supported");
  const auto count = r.u32();
  std::vector<NamedTensor> tensors;
  std::set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto len = r.u16();
    t.name = std::string(r.bytes(len));
    if (!seen.insert(t.name).second)
      throw FormatError(FormatErrorKind::kDuplicateName, "duplicate tensor name '" + t.name + "'");
    const auto rank = r.u8();
    std::uint64_t elems = 1;
    for (int i = 0; i < rank; ++i) {
      const auto d = r.u64();
      if (d != 0 && elems > r.remaining() / d) throw FormatError(FormatErrorKind::kTruncated, "file is truncated");
      elems *= d;
      t.dims.push_back(d);
    }
    if (elems > r.remaining() / 4) throw FormatError(FormatErrorKind::kTruncated, "file is truncated");
    t.data.resize(static_cast<std::size_t>(elems));
    r.f32s(t.data.data(), t.data.size());
    tensors.push_back(std::move(t));
  }
  const auto config_len = r.u32();
  std::string config(r.bytes(config_len));
  if (!r.at_end()) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes after checkpoint");
  if (config_text) *config_text = std::move(config);
  return tensors;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  std::string config;
  const auto tensors = read_tensor_table(bytes, &config);
  return checkpoint_from_tensors(tensors, config);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  binary::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(binary::read_file(path)); }

}  // namespace duala
