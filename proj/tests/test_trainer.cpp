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

#include <doctest.h>

#include <cstring>
#include <limits>
#include <set>

#include "duala/checkpoint.hpp"
#include "duala/pipeline.hpp"
#include "duala/trainer.hpp"

using namespace duala;

namespace {

SynthConfig tiny_synth() {
  SynthConfig c;
  c.K_source = 2;
  c.held_out = 1;
  c.d_min = 30;
  c.d_max = 40;
  c.trials_per_subject = 60;
  c.test_trials = 24;
  c.C = 4;
  c.h_true = 6;
  c.dims = {2, 4, 6};
  c.seed = 5;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 3;
  t.latent_dim = 8;
  t.lora_rank = 2;
  t.peak_lr = 1e-3;
  return t;
}

const DatasetPack& pack() {
  static const DatasetPack p = generate_synthetic(tiny_synth());
  return p;
}

// Pre-trained on subjects 1 and 2, with reference statistics.
const Checkpoint& base() {
  static const Checkpoint ck = [] {
    auto r = pretrain(pack(), {1, 2}, tiny_train());
    compute_reference(r.checkpoint, pack());
    return r.checkpoint;
  }();
  return ck;
}

void put_u16(std::string& s, std::uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& s, std::uint64_t v) { s.append(reinterpret_cast<const char*>(&v), 8); }

// Independent writer for the documented table layout.
std::string write_table(const std::vector<NamedTensor>& tensors, const std::string& config, std::uint32_t version = 1) {
  std::string s(kCheckpointMagic, 8);
  put_u32(s, version);
  put_u32(s, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u16(s, static_cast<std::uint16_t>(t.name.size()));
    s += t.name;
    s.push_back(static_cast<char>(t.dims.size()));
    for (auto d : t.dims) put_u64(s, d);
    s.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  put_u32(s, static_cast<std::uint32_t>(config.size()));
  s += config;
  return s;
}

FormatErrorKind decode_error(std::string_view bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return FormatErrorKind::kMalformed;
}

bool same_backbone(const BackboneParams<float>& a, const BackboneParams<float>& b) {
  bool same = true;
  std::vector<const MatrixF*> rhs;
  b.for_each([&](const std::string&, const MatrixF& m) { rhs.push_back(&m); });
  std::size_t i = 0;
  a.for_each([&](const std::string&, const MatrixF& m) { same = same && m == *rhs[i++]; });
  return same;
}

}  // namespace

TEST_CASE("pretrain: one trace row per step, adapters per subject") {
  const auto cfg = tiny_train();
  const auto r = pretrain(pack(), {1, 2}, cfg);
  long long steps = 0;
  for (int id : {1, 2}) {
    const auto n = pack().subject(id).rows_with(Split::kTrain).size();
    steps += static_cast<long long>(n / cfg.batch_size);
  }
  CHECK(static_cast<long long>(r.trace.rows.size()) == steps * cfg.epochs);
  for (std::size_t i = 0; i < r.trace.rows.size(); ++i) {
    CHECK(r.trace.rows[i].step == static_cast<long long>(i));
    CHECK(std::isfinite(r.trace.rows[i].loss_total));
    CHECK(r.trace.rows[i].lr > 0);
  }
  CHECK(r.checkpoint.subjects.size() == 2);
  CHECK(r.checkpoint.source_subjects == std::vector<int>{1, 2});
  CHECK(!r.checkpoint.reference);
  CHECK(!r.checkpoint.lora);
  CHECK_THROWS_AS(pretrain(pack(), {}, cfg), InvalidArgument);
}

TEST_CASE("pretrain: target kinds follow the schedule") {
  auto cfg = tiny_train();
  cfg.epochs = 6;
  const auto r = pretrain(pack(), {1}, cfg);
  CHECK(cfg.soft_target_start_epoch() == 4);
  for (const auto& row : r.trace.rows)
    CHECK(row.target_kind == (row.epoch >= 4 ? TargetKind::kSoft : TargetKind::kMix));
  CHECK(std::string(target_kind_name(TargetKind::kSoft)) == "soft");
}

TEST_CASE("pretrain: deterministic per seed, non-finite loss aborts") {
  auto cfg = tiny_train();
  cfg.epochs = 1;
  const auto a = encode_checkpoint(pretrain(pack(), {1, 2}, cfg).checkpoint);
  const auto b = encode_checkpoint(pretrain(pack(), {1, 2}, cfg).checkpoint);
  CHECK(a == b);
  cfg.seed = 1;
  CHECK(encode_checkpoint(pretrain(pack(), {1, 2}, cfg).checkpoint) != a);

  cfg.peak_lr = 1e36;
  cfg.epochs = 3;
  CHECK_THROWS_AS(pretrain(pack(), {1, 2}, cfg), NonFiniteError);
}

TEST_CASE("reference: single source subject and module-level recomputation") {
  auto cfg = tiny_train();
  cfg.epochs = 1;
  auto ck = pretrain(pack(), {2}, cfg).checkpoint;
  compute_reference(ck, pack());
  const auto enc = encode_subject(ck, pack(), pack().subject(2), Split::kTrain);
  const auto sim = class_similarity_matrix(class_prototypes(enc.retrieval, enc.labels, pack().class_count()));
  REQUIRE(ck.reference);
  CHECK(ck.reference->S_ref == sim.S);
  CHECK((ck.reference->omega == sim.valid).all());
  const LabeledLatents<float> one{enc.latents, enc.labels};
  const auto stats = fit_category_stats<float>(std::span(&one, 1), pack().class_count());
  CHECK(ck.stats->mu == stats.mu);
  CHECK(ck.stats->sigma_bar == stats.sigma_bar);

  const auto before = encode_checkpoint(ck);
  compute_reference(ck, pack());
  CHECK(encode_checkpoint(ck) == before);
}

TEST_CASE("finetune: base tensors stay frozen, new state is added") {
  const auto& b = base();
  const auto r = finetune(b, pack(), pack().subject(3), tiny_train());
  const auto& ck = r.checkpoint;
  CHECK(same_backbone(ck.backbone, b.backbone));
  for (int id : {1, 2}) {
    CHECK(ck.subjects.at(id).adapter.weight == b.subjects.at(id).adapter.weight);
    CHECK(ck.subjects.at(id).center == b.subjects.at(id).center);
  }
  CHECK(ck.reference->S_ref == b.reference->S_ref);
  CHECK(ck.stats->mu == b.stats->mu);
  REQUIRE(ck.lora);
  CHECK(ck.finetuned_subject == 3);
  bool moved = false;
  ck.lora->for_each([&](const std::string& name, const MatrixF& m) {
    if (name.ends_with(".B")) moved = moved || !m.isZero(0);
  });
  CHECK(moved);
  CHECK(ck.subjects.count(3) == 1);
}

TEST_CASE("finetune: zero learning rate leaves the fresh state at initialization") {
  auto cfg = tiny_train();
  cfg.peak_lr = 0;
  const auto r = finetune(base(), pack(), pack().subject(3), cfg);
  Rng init = make_stream(cfg.seed, 1);
  const auto& ds = pack().subject(3);
  const auto adapter = adapter_random_init<float>(ds.voxel_dim(), cfg.latent_dim, float(cfg.ridge_lambda), 3, init);
  const auto lora = lora_init<float>(base().backbone, cfg.lora_rank, init);
  CHECK(r.checkpoint.subjects.at(3).adapter.weight == adapter.weight);
  std::vector<MatrixF> want;
  lora.for_each([&](const std::string&, const MatrixF& m) { want.push_back(m); });
  std::size_t i = 0;
  r.checkpoint.lora->for_each([&](const std::string&, const MatrixF& m) { CHECK(m == want[i++]); });
  CHECK(r.trace.rows.front().lr == 0.0);
}

TEST_CASE("finetune: determinism, seed sensitivity and errors") {
  const auto cfg = tiny_train();
  const auto& ds = pack().subject(3);
  const auto a = encode_checkpoint(finetune(base(), pack(), ds, cfg).checkpoint);
  CHECK(encode_checkpoint(finetune(base(), pack(), ds, cfg).checkpoint) == a);
  auto other = cfg;
  other.seed = 9;
  CHECK(encode_checkpoint(finetune(base(), pack(), ds, other).checkpoint) != a);

  Checkpoint bare = base();
  bare.reference.reset();
  CHECK_THROWS_AS(finetune(bare, pack(), ds, cfg), StateError);
  auto wrong = cfg;
  wrong.latent_dim = 9;
  CHECK_THROWS_AS(finetune(base(), pack(), ds, wrong), InvalidArgument);
}

TEST_CASE("finetune: the all-disabled arm is the plain contrastive path") {
  const auto cfg = tiny_train();
  const auto& ds = pack().subject(3);
  const auto none = apply_arm(cfg, ablation_arms().front());
  CHECK(none.lambda1 == 0);
  CHECK(none.lambda2 == 0);
  CHECK(none.sdp == SdpVariant::kOff);
  auto manual = cfg;
  manual.lambda1 = 0;
  manual.lambda2 = 0;
  manual.sdp = SdpVariant::kOff;
  const auto a = finetune(base(), pack(), ds, none);
  const auto b = finetune(base(), pack(), ds, manual);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  for (const auto& row : a.trace.rows) {
    CHECK(row.loss_sa == 0.0);
    CHECK(row.loss_rc == 0.0);
    CHECK(row.loss_total == row.loss_contrastive);
  }
  CHECK(a.trace.passthrough_rows == 0);

  const auto full = apply_arm(cfg, ablation_arms().back());
  CHECK(encode_checkpoint(finetune(base(), pack(), ds, full).checkpoint) ==
        encode_checkpoint(finetune(base(), pack(), ds, cfg).checkpoint));
}

TEST_CASE("encode: low-rank adapters only apply to the fine-tuned subject") {
  auto r = finetune(base(), pack(), pack().subject(3), tiny_train());
  const auto with = encode_subject(r.checkpoint, pack(), pack().subject(1), Split::kTest);
  const auto without = encode_subject(base(), pack(), pack().subject(1), Split::kTest);
  CHECK(with.retrieval == without.retrieval);
  const auto e3 = encode_subject(r.checkpoint, pack(), pack().subject(3), Split::kTest);
  CHECK((e3.retrieval.rowwise().norm().array() - 1.0f).abs().maxCoeff() < 1e-5f);
  CHECK(e3.labels.size() == pack().subject(3).rows_with(Split::kTest).size());
}

TEST_CASE("checkpoint: roundtrip is lossless and forward-identical") {
  const auto r = finetune(base(), pack(), pack().subject(3), tiny_train());
  const auto bytes = encode_checkpoint(r.checkpoint);
  const auto back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.config.to_text() == r.checkpoint.config.to_text());
  CHECK(back.finetuned_subject == 3);
  for (int id : {1, 3}) {
    const auto a = encode_subject(r.checkpoint, pack(), pack().subject(id), Split::kTest);
    const auto b = encode_subject(back, pack(), pack().subject(id), Split::kTest);
    CHECK(a.retrieval == b.retrieval);
    CHECK(a.latents == b.latents);
  }
  std::set<std::string> names;
  for (const auto& t : read_tensor_table(bytes)) names.insert(t.name);
  CHECK(names.count("reference.S"));
  CHECK(names.count("reference.omega"));
  CHECK(names.count("stats.sigma"));
  CHECK(names.count("lora.block0.fc1.A"));
}

TEST_CASE("checkpoint: corrupted inputs map to distinct errors") {
  const auto bytes = encode_checkpoint(base());
  std::string config;
  const auto table = read_tensor_table(bytes, &config);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK(decode_error(bad) == FormatErrorKind::kBadMagic);
  CHECK(decode_error(write_table(table, config, 2)) == FormatErrorKind::kVersionMismatch);
  CHECK(write_table(table, config) == bytes);

  for (std::size_t cut : {std::size_t(10), std::size_t(40), bytes.size() / 2, bytes.size() - 1})
    CHECK(decode_error(std::string_view(bytes).substr(0, cut)) == FormatErrorKind::kTruncated);
  // Inflate the first tensor's leading dimension.
  std::string lying = bytes;
  const std::size_t dim_at = 8 + 4 + 4 + 2 + table[0].name.size() + 1;
  const std::uint64_t huge = 1ull << 40;
  std::memcpy(&lying[dim_at], &huge, 8);
  CHECK(decode_error(lying) == FormatErrorKind::kTruncated);

  auto dup = table;
  dup.push_back(table[3]);
  CHECK(decode_error(write_table(dup, config)) == FormatErrorKind::kDuplicateName);
  auto missing = table;
  missing.erase(std::remove_if(missing.begin(), missing.end(),
                               [](const NamedTensor& t) { return t.name == "backbone.head_retrieval.bias"; }),
                missing.end());
  CHECK(decode_error(write_table(missing, config)) == FormatErrorKind::kMissingTensor);
  CHECK(decode_error(bytes + "x") == FormatErrorKind::kMalformed);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/ck.bin"), IoError);
  CHECK_THROWS_AS(save_checkpoint(base(), "/nonexistent/dir/ck.bin"), IoError);
}

TEST_CASE("pipeline: arms, seeds, median, evaluation record") {
  const auto arms = ablation_arms();
  REQUIRE(arms.size() == 5);
  const char* names[] = {"none", "sdp", "sa", "sdp_sa", "full"};
  for (int i = 0; i < 5; ++i) CHECK(arms[i].name == names[i]);
  auto stochastic = tiny_train();
  stochastic.sdp = SdpVariant::kStochastic;
  CHECK(apply_arm(stochastic, arms[1]).sdp == SdpVariant::kStochastic);
  auto off = tiny_train();
  off.sdp = SdpVariant::kOff;
  CHECK(apply_arm(off, arms[1]).sdp == SdpVariant::kDeterministic);
  CHECK(apply_arm(off, arms[2]).lambda1 == 1.0);
  CHECK(apply_arm(off, arms[2]).lambda2 == 0.0);

  CHECK(parse_seed_list("0..4") == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  CHECK(parse_seed_list("7,3") == std::vector<std::uint64_t>{7, 3});
  CHECK_THROWS_AS(parse_seed_list("4..1"), InvalidArgument);
  CHECK_THROWS_AS(parse_seed_list("a"), InvalidArgument);
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);

  EvalOptions opts;
  opts.n_pools = 5;
  const auto rec = evaluate_subject(base(), pack(), pack().subject(1), opts, "eval", 0);
  CHECK(rec.retrieval.pool_size == 24);  // clipped to the test rows
  CHECK(rec.retrieval.n_pools == 5);
  CHECK(rec.subject == 1);
  CHECK(rec.retrieval.image_acc > 1.0 / 24);
  CHECK(rec.structure.silhouette >= -1.0);
  CHECK(rec.structure.silhouette <= 1.0);
}
