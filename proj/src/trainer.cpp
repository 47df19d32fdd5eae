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
#include "duala/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "duala/binary_io.hpp"
#include "duala/optimizer.hpp"

namespace duala {
namespace {

// Generator streams derived from the config seed.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamShuffle = 2;
constexpr std::uint64_t kStreamMix = 3;
constexpr std::uint64_t kStreamAux = 4;

std::vector<std::vector<int>> make_batches(std::vector<int> rows, int batch_size, Rng& rng) {
  std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < rows.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(rows.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(i), rows.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A lone trailing row cannot form a contrastive pair.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

long long batch_count(std::size_t rows, int batch_size) {
  const auto b = static_cast<std::size_t>(batch_size);
  const auto n = (rows + b - 1) / b;
  return static_cast<long long>(n > 1 && rows % b == 1 ? n - 1 : n);
}

MatrixF gather_centered(const SubjectDataset& ds, const std::vector<int>& rows, const RowVector<float>& center) {
  MatrixF X(static_cast<Eigen::Index>(rows.size()), ds.voxels.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = ds.voxels.row(rows[i]) - center;
  return X;
}

// Inputs and contrastive targets for one batch under the target schedule.
struct BatchInputs {
  MatrixF X;
  MatrixF image;
  MatrixF targets;
  Labels labels;
};

BatchInputs prepare_batch(const DatasetPack& pack, const SubjectDataset& ds, const std::vector<int>& rows,
                          const RowVector<float>& center, TargetKind kind, const TrainConfig& cfg, Rng& mix_rng) {
  BatchInputs b;
  b.X = gather_centered(ds, rows, center);
  b.image = pack.retrieval_targets(ds, rows);
  b.labels = pack.labels_for(ds, rows);
  if (kind == TargetKind::kMix) {
    auto mixed = mixco_targets<float>(b.X, mix_rng, cfg.beta_mix);
    b.X = std::move(mixed.mixed);
    b.targets = std::move(mixed.targets);
    // A mixed row keeps the label of its dominant component.
    const Labels original = b.labels;
    for (std::size_t i = 0; i < original.size(); ++i)
      if (mixed.lambda[i] < 0.5f) b.labels[i] = original[static_cast<std::size_t>(mixed.partner[i])];
  } else {
    b.targets = softclip_targets<float>(b.image, static_cast<float>(cfg.tau_soft));
  }
  return b;
}

OneCycleSchedule schedule_for(const TrainConfig& cfg, long long total_steps) {
  OneCycleSchedule s;
  s.total_steps = total_steps;
  s.peak_lr = cfg.peak_lr;
  s.warmup_fraction = cfg.warmup_fraction;
  s.start_factor = cfg.start_factor;
  s.end_factor = cfg.end_factor;
  s.validate();
  return s;
}

AdamWConfig adamw_for(const TrainConfig& cfg) {
  AdamWConfig a;
  a.weight_decay = cfg.weight_decay;
  return a;
}

bool is_bias(const std::string& name) { return name.ends_with(".bias"); }

std::string adapter_name(int subject_id) { return "adapter." + std::to_string(subject_id) + ".weight"; }

int distinct_labels(const Labels& labels) { return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size()); }

void check_finite(double value, long long step) {
  if (!std::isfinite(value)) throw NonFiniteError("non-finite loss at step " + std::to_string(step));
}

template <typename F>
auto forward_at(long long step, F&& f) {
  try {
    return f();
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("non-finite forward pass at step " + std::to_string(step) + ": " + e.what());
  }
}

}  // namespace

const char* target_kind_name(TargetKind kind) { return kind == TargetKind::kMix ? "mix" : "soft"; }

double TrainTrace::epoch_mean(int epoch, double TraceRow::*column) const {
  double sum = 0;
  long long n = 0;
  for (const auto& r : rows) {
    if (r.epoch != epoch) continue;
    sum += r.*column;
    ++n;
  }
  if (n == 0) throw InvalidArgument("trace has no rows for epoch " + std::to_string(epoch));
  return sum / double(n);
}

void write_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::string out = "epoch,step,loss_total,loss_contrastive,loss_sa,loss_rc,lr,target_kind\n";
  char buf[256];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof buf, "%d,%lld,%.6g,%.6g,%.6g,%.6g,%.6g,%s\n", r.epoch, r.step, r.loss_total,
                  r.loss_contrastive, r.loss_sa, r.loss_rc, r.lr, target_kind_name(r.target_kind));
    out += buf;
  }
  binary::write_file(path, out);
}

RowVector<float> train_center(const SubjectDataset& subject) {
  const auto rows = subject.rows_with(Split::kTrain);
  if (rows.empty()) throw InvalidArgument("subject " + std::to_string(subject.subject_id) + " has no train rows");
  RowVector<double> sum = RowVector<double>::Zero(subject.voxels.cols());
  for (int r : rows) sum += subject.voxels.row(r).cast<double>();
  return (sum / double(rows.size())).cast<float>();
}

TrainResult pretrain(const DatasetPack& pack, const std::vector<int>& subjects, const TrainConfig& cfg) {
  cfg.validate();
  if (subjects.empty()) throw InvalidArgument("pretraining needs at least one source subject");
  std::set<int> unique(subjects.begin(), subjects.end());
  if (unique.size() != subjects.size()) throw InvalidArgument("source subject listed twice");

  Rng init_rng = make_stream(cfg.seed, kStreamInit);
  Rng shuffle_rng = make_stream(cfg.seed, kStreamShuffle);
  Rng mix_rng = make_stream(cfg.seed, kStreamMix);

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config = cfg;
  ck.source_subjects = subjects;
  std::vector<const SubjectDataset*> data;
  for (int id : subjects) {
    if (!pack.has_subject(id)) throw InvalidArgument("unknown subject id " + std::to_string(id));
    const auto& ds = pack.subject(id);
    data.push_back(&ds);
    SubjectState st;
    st.center = train_center(ds);
    st.adapter = adapter_random_init<float>(ds.voxel_dim(), cfg.latent_dim, static_cast<float>(cfg.ridge_lambda), id,
                                            init_rng);
    ck.subjects.emplace(id, std::move(st));
  }
  ck.backbone = backbone_init<float>(cfg.latent_dim, pack.dims(), init_rng);

  // Steps per epoch are fixed by the row counts, so the schedule is known upfront.
  long long per_epoch = 0;
  for (const auto* ds : data) {
    per_epoch += batch_count(ds->rows_with(Split::kTrain).size(), cfg.batch_size);
  }
  const auto schedule = schedule_for(cfg, per_epoch * cfg.epochs);
  AdamW<float> opt(adamw_for(cfg));
  const int soft_start = cfg.soft_target_start_epoch();
  const float tau = static_cast<float>(cfg.tau);

  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const TargetKind kind = epoch >= soft_start ? TargetKind::kSoft : TargetKind::kMix;
    std::vector<std::vector<std::vector<int>>> per_subject;
    std::size_t longest = 0;
    for (const auto* ds : data) {
      per_subject.push_back(make_batches(ds->rows_with(Split::kTrain), cfg.batch_size, shuffle_rng));
      longest = std::max(longest, per_subject.back().size());
    }
    for (std::size_t b = 0; b < longest; ++b) {
      for (std::size_t s = 0; s < data.size(); ++s) {
        if (b >= per_subject[s].size()) continue;
        const auto& ds = *data[s];
        auto& st = ck.subjects.at(ds.subject_id);
        if (per_subject[s][b].size() < 2) {
          throw InvalidArgument("subject " + std::to_string(ds.subject_id) + " has fewer than two train rows");
        }
        auto in = prepare_batch(pack, ds, per_subject[s][b], st.center, kind, cfg, mix_rng);

        const MatrixF Z = adapter_apply(st.adapter, in.X);
        auto out = forward_at(step, [&] { return backbone_forward<float>(ck.backbone, nullptr, Z, {.want_tokens = false}); });
        const auto con = bidirectional_contrastive_loss<float>(out.retrieval, in.image, tau, in.targets);
        ObjectiveParts<float> parts;
        parts.contrastive = &con;
        const auto total = combined_objective(parts, cfg.weights());
        check_finite(total.value, step);

        auto grads = backbone_backward<float>(ck.backbone, nullptr, out.cache, MatrixF(), total.d_brain,
                                              {.base_params = true, .lora = false});
        const MatrixF dW = adapter_backward(st.adapter, in.X, grads.latents);

        std::map<std::string, const MatrixF*> grad_by_name;
        grads.params.for_each([&](const std::string& name, const MatrixF& g) { grad_by_name[name] = &g; });
        std::vector<ParamRef<float>> refs;
        refs.push_back({adapter_name(ds.subject_id), &st.adapter.weight, &dW, false});
        ck.backbone.for_each([&](const std::string& name, MatrixF& m) {
          // No objective reaches the token head.
          if (name.starts_with("backbone.head_tokens")) return;
          refs.push_back({name, &m, grad_by_name.at(name), !is_bias(name)});
        });
        const double lr = schedule.lr_at(step);
        opt.step(refs, static_cast<float>(lr));
        ck.backbone.touch();

        TraceRow row;
        row.epoch = epoch;
        row.step = step;
        row.loss_total = total.value;
        row.loss_contrastive = con.value;
        row.lr = lr;
        row.target_kind = kind;
        result.trace.rows.push_back(row);
        ++step;
      }
    }
  }
  return result;
}

void compute_reference(Checkpoint& ck, const DatasetPack& pack) {
  if (ck.source_subjects.empty()) throw StateError("checkpoint lists no source subjects");
  const int C = pack.class_count();
  std::vector<LabeledLatents<float>> latents;
  std::vector<SimilarityMatrix<float>> sims;
  for (int id : ck.source_subjects) {
    const auto enc = encode_subject(ck, pack, pack.subject(id), Split::kTrain);
    sims.push_back(class_similarity_matrix(class_prototypes(enc.retrieval, enc.labels, C)));
    latents.push_back({enc.latents, enc.labels});
  }
  auto stats = fit_category_stats<float>(latents, C);
  if (!stats.present.any()) throw DegenerateError("no class has support in any source subject");
  ck.reference = reference_matrix<float>(sims, ck.config.omega_policy);
  ck.stats = std::move(stats);
}

TrainResult finetune(const Checkpoint& base, const DatasetPack& pack, const SubjectDataset& ds,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (!base.reference) throw StateError("checkpoint has no reference matrix; run compute_reference first");
  if (!base.stats) throw StateError("checkpoint has no category statistics");
  if (base.backbone.latent_dim() != cfg.latent_dim)
    throw InvalidArgument("latent_dim " + std::to_string(cfg.latent_dim) + " does not match the checkpoint (" +
                          std::to_string(base.backbone.latent_dim()) + ")");
  const auto train_rows = ds.rows_with(Split::kTrain);
  if (train_rows.size() < 2) throw InvalidArgument("fine-tuning needs at least two train rows");

  Rng init_rng = make_stream(cfg.seed, kStreamInit);
  Rng shuffle_rng = make_stream(cfg.seed, kStreamShuffle);
  Rng mix_rng = make_stream(cfg.seed, kStreamMix);
  Rng aux_rng = make_stream(cfg.seed, kStreamAux);

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck = base;
  ck.config = cfg;
  ck.finetuned_subject = ds.subject_id;
  SubjectState st;
  st.center = train_center(ds);
  st.adapter = adapter_random_init<float>(ds.voxel_dim(), cfg.latent_dim, static_cast<float>(cfg.ridge_lambda),
                                          ds.subject_id, init_rng);
  ck.lora = lora_init<float>(ck.backbone, cfg.lora_rank, init_rng);
  ck.subjects[ds.subject_id] = std::move(st);
  SubjectState& state = ck.subjects.at(ds.subject_id);
  LowRankAdapters<float>& lora = *ck.lora;
  const BackboneParams<float>& frozen = ck.backbone;
  const CategoryStats<float>& stats = *ck.stats;
  const ReferenceMatrix<float>& ref = *ck.reference;

  const bool use_sa = cfg.lambda1 > 0;
  const bool use_rc = cfg.lambda2 > 0;
  const bool use_sdp = cfg.sdp != SdpVariant::kOff;
  const float tau = static_cast<float>(cfg.tau);

  const auto schedule = schedule_for(cfg, batch_count(train_rows.size(), cfg.batch_size) * cfg.epochs);
  AdamW<float> opt(adamw_for(cfg));
  const int soft_start = cfg.soft_target_start_epoch();
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const TargetKind kind = epoch >= soft_start ? TargetKind::kSoft : TargetKind::kMix;
    for (const auto& rows : make_batches(train_rows, cfg.batch_size, shuffle_rng)) {
      auto in = prepare_batch(pack, ds, rows, state.center, kind, cfg, mix_rng);
      const MatrixF Z = adapter_apply(state.adapter, in.X);

      bool perturbed = false;
      PerturbedLatents<float> pert;
      if (use_sdp && (cfg.sdp_probability >= 1.0 || coin(aux_rng) < cfg.sdp_probability)) {
        pert = cfg.sdp == SdpVariant::kStochastic ? perturb_stochastic(Z, in.labels, stats, cfg.sdp_noise, aux_rng)
                                                  : perturb(Z, in.labels, stats);
        result.trace.passthrough_rows += pert.passthrough;
        perturbed = true;
      }
      const MatrixF& Zt = perturbed ? pert.Z : Z;

      const bool structured = distinct_labels(in.labels) >= 2;
      if ((use_sa || use_rc) && !structured) ++result.trace.skipped_structure_steps;

      LossOutput<float> sa, rc;
      bool have_sa = false, have_rc = false;
      if (use_sa && structured) {
        const auto triplets = mine_triplets(in.labels, cfg.triplet_policy, &aux_rng);
        if (!triplets.empty()) {
          sa = semantic_alignment_loss<float>(Zt, triplets, static_cast<float>(cfg.margin));
          have_sa = true;
        }
      }

      auto out = forward_at(step, [&] { return backbone_forward<float>(frozen, &lora, Zt, {.want_tokens = false}); });
      const auto con = bidirectional_contrastive_loss<float>(out.retrieval, in.image, tau, in.targets);
      if (use_rc && structured) {
        try {
          rc = relational_consistency_from_embeddings<float>(out.retrieval, in.labels, ref);
          have_rc = true;
        } catch (const DegenerateError&) {
          ++result.trace.skipped_structure_steps;
        }
      }

      ObjectiveParts<float> parts;
      parts.contrastive = &con;
      if (have_sa) parts.semantic = &sa;
      if (have_rc) parts.relational = &rc;
      const auto total = combined_objective(parts, cfg.weights());
      check_finite(total.value, step);

      auto grads = backbone_backward<float>(frozen, &lora, out.cache, MatrixF(), total.d_brain,
                                            {.base_params = false, .lora = true});
      MatrixF dZt = std::move(grads.latents);
      if (total.d_latents.size() != 0) dZt += total.d_latents;
      const MatrixF dZ = perturbed ? perturb_backward(pert, dZt) : dZt;
      const MatrixF dW = adapter_backward(state.adapter, in.X, dZ);

      std::map<std::string, const MatrixF*> grad_by_name;
      grads.lora.for_each([&](const std::string& name, const MatrixF& g) { grad_by_name[name] = &g; });
      std::vector<ParamRef<float>> refs;
      refs.push_back({adapter_name(ds.subject_id), &state.adapter.weight, &dW, false});
      lora.for_each([&](const std::string& name, MatrixF& m) { refs.push_back({name, &m, grad_by_name.at(name), true}); });
      const double lr = schedule.lr_at(step);
      opt.step(refs, static_cast<float>(lr));
      lora.touch();

      TraceRow row;
      row.epoch = epoch;
      row.step = step;
      row.loss_total = total.value;
      row.loss_contrastive = con.value;
      row.loss_sa = have_sa ? sa.value : 0.0;
      row.loss_rc = have_rc ? rc.value : 0.0;
      row.lr = lr;
      row.target_kind = kind;
      result.trace.rows.push_back(row);
      ++step;
    }
  }
  return result;
}

Encoded encode_subject(const Checkpoint& ck, const DatasetPack& pack, const SubjectDataset& ds, Split which) {
  auto it = ck.subjects.find(ds.subject_id);
  if (it == ck.subjects.end()) throw InvalidArgument("checkpoint has no adapter for subject " + std::to_string(ds.subject_id));
  const auto rows = ds.rows_with(which);
  if (rows.empty()) throw InvalidArgument("subject " + std::to_string(ds.subject_id) + " has no rows in that split");
  Encoded e;
  const MatrixF X = gather_centered(ds, rows, it->second.center);
  e.latents = adapter_apply(it->second.adapter, X);
  // Low-rank adapters belong to the subject they were trained for.
  const bool adapted = ck.lora && ck.finetuned_subject && *ck.finetuned_subject == ds.subject_id;
  e.retrieval = backbone_forward<float>(ck.backbone, adapted ? &*ck.lora : nullptr, e.latents, {.want_tokens = false})
                    .retrieval;
  e.image = pack.retrieval_targets(ds, rows);
  e.labels = pack.labels_for(ds, rows);
  for (int r : rows) e.stimulus_ids.push_back(ds.stimulus_ids[static_cast<std::size_t>(r)]);
  return e;
}

}  // namespace duala
