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
#include "duala/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "duala/config_file.hpp"

namespace duala {

std::vector<int> SubjectDataset::rows_with(Split which) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(split.size()); ++i)
    if (split[i] == which) out.push_back(i);
  return out;
}

DatasetPack::DatasetPack(std::vector<StimulusRecord> stimuli, std::vector<SubjectDataset> subjects,
                         int class_count, PackDims dims)
    : stimuli_(std::move(stimuli)),
      subjects_(std::move(subjects)),
      class_count_(class_count),
      dims_(dims) {
  for (std::size_t i = 0; i < stimuli_.size(); ++i) {
    if (!index_.emplace(stimuli_[i].stimulus_id, i).second)
      throw InvalidArgument("duplicate stimulus id " + std::to_string(stimuli_[i].stimulus_id));
  }
  validate();
}

void DatasetPack::validate() const {
  if (subjects_.empty()) throw InvalidArgument("pack has no subjects");
  if (class_count_ <= 0) throw InvalidArgument("class count must be positive");
  for (const auto& s : stimuli_) {
    if (s.class_id < 0 || s.class_id >= class_count_)
      throw InvalidArgument("class id " + std::to_string(s.class_id) + " outside [0, C)");
    require_dims(s.target_tokens.rows() == dims_.tokens && s.target_tokens.cols() == dims_.token_dim,
                 "stimulus token grid does not match pack dims");
    require_dims(s.target_retrieval.size() == dims_.retrieval_dim,
                 "stimulus retrieval embedding does not match pack dims");
  }
  std::unordered_set<int> subject_ids;
  for (const auto& ds : subjects_) {
    if (!subject_ids.insert(ds.subject_id).second)
      throw InvalidArgument("duplicate subject id " + std::to_string(ds.subject_id));
    if (ds.rows() <= 0 || ds.voxel_dim() <= 0)
      throw InvalidArgument("subject " + std::to_string(ds.subject_id) + " has no data");
    require_dims(static_cast<int>(ds.stimulus_ids.size()) == ds.rows() &&
                     static_cast<int>(ds.split.size()) == ds.rows(),
                 "subject row metadata length mismatch");
    std::unordered_set<int> train_ids;
    for (int i = 0; i < ds.rows(); ++i) {
      if (!has_stimulus(ds.stimulus_ids[i]))
        throw DanglingStimulusError("subject " + std::to_string(ds.subject_id) +
                                    " references unknown stimulus " +
                                    std::to_string(ds.stimulus_ids[i]));
      if (ds.split[i] == Split::kTrain) train_ids.insert(ds.stimulus_ids[i]);
    }
    for (int i = 0; i < ds.rows(); ++i) {
      if (ds.split[i] == Split::kTest && train_ids.count(ds.stimulus_ids[i]))
        throw InvalidArgument("subject " + std::to_string(ds.subject_id) +
                              " has stimulus " + std::to_string(ds.stimulus_ids[i]) +
                              " in both splits");
    }
  }
}

const StimulusRecord& DatasetPack::stimulus(int stimulus_id) const {
  auto it = index_.find(stimulus_id);
  if (it == index_.end()) throw DanglingStimulusError("unknown stimulus " + std::to_string(stimulus_id));
  return stimuli_[it->second];
}

bool DatasetPack::has_subject(int subject_id) const {
  return std::any_of(subjects_.begin(), subjects_.end(),
                     [&](const SubjectDataset& s) { return s.subject_id == subject_id; });
}

const SubjectDataset& DatasetPack::subject(int subject_id) const {
  for (const auto& s : subjects_)
    if (s.subject_id == subject_id) return s;
  throw InvalidArgument("unknown subject id " + std::to_string(subject_id));
}

Labels DatasetPack::labels_for(const SubjectDataset& ds, const std::vector<int>& rows) const {
  Labels out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(stimulus(ds.stimulus_ids[r]).class_id);
  return out;
}

MatrixF DatasetPack::retrieval_targets(const SubjectDataset& ds, const std::vector<int>& rows) const {
  MatrixF out(static_cast<Eigen::Index>(rows.size()), dims_.retrieval_dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = stimulus(ds.stimulus_ids[rows[i]]).target_retrieval;
  return out;
}

// ---------------------------------------------------------------------------
// SynthConfig

void SynthConfig::validate() const {
  if (K_source < 1) throw InvalidArgument("K_source must be positive");
  if (held_out < 0) throw InvalidArgument("held_out must be nonnegative");
  if (trials_per_subject < 1) throw InvalidArgument("trials_per_subject must be positive");
  if (test_trials < 0) throw InvalidArgument("test_trials must be nonnegative");
  if (C < 1) throw InvalidArgument("C must be positive");
  if (h_true < 1) throw InvalidArgument("h_true must be positive");
  if (d_min > d_max) throw InvalidArgument("d_range is empty");
  if (d_min < h_true)
    throw InvalidArgument("d_range lower bound " + std::to_string(d_min) +
                          " is below h_true " + std::to_string(h_true) +
                          " (mixing would not be invertible)");
  if (noise_std < 0 || subject_gain_std < 0 || instance_std < 0)
    throw InvalidArgument("standard deviations must be nonnegative");
  if (shared_fraction < 0 || shared_fraction > 1)
    throw InvalidArgument("shared_fraction must lie in [0, 1]");
  if (dims.tokens < 1 || dims.token_dim < 1 || dims.retrieval_dim < 1)
    throw InvalidArgument("embedding dims must be positive");
}

namespace {

const std::vector<std::string> kSynthKeys = {
    "K_source", "d_range", "trials_per_subject", "test_trials", "held_out", "C", "h_true",
    "noise_std", "subject_gain_std", "instance_std", "shared_fraction", "T", "E", "e", "seed"};

SynthConfig synth_from_kv(const KeyValueFile& kv) {
  kv.reject_unknown(kSynthKeys);
  SynthConfig c;
  c.K_source = static_cast<int>(kv.get_int("K_source", c.K_source));
  if (kv.contains("d_range")) {
    const auto& e = kv.entries().at("d_range");
    std::string v = e.value;
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream ss(v);
    if (!(ss >> c.d_min >> c.d_max) || !(ss >> std::ws).eof())
      throw ConfigParseError(e.line, "'d_range' expects two integers 'lo, hi'");
  }
  c.trials_per_subject = static_cast<int>(kv.get_int("trials_per_subject", c.trials_per_subject));
  c.test_trials = static_cast<int>(kv.get_int("test_trials", c.test_trials));
  c.held_out = static_cast<int>(kv.get_int("held_out", c.held_out));
  c.C = static_cast<int>(kv.get_int("C", c.C));
  c.h_true = static_cast<int>(kv.get_int("h_true", c.h_true));
  c.noise_std = kv.get_double("noise_std", c.noise_std);
  c.subject_gain_std = kv.get_double("subject_gain_std", c.subject_gain_std);
  c.instance_std = kv.get_double("instance_std", c.instance_std);
  c.shared_fraction = kv.get_double("shared_fraction", c.shared_fraction);
  c.dims.tokens = static_cast<int>(kv.get_int("T", c.dims.tokens));
  c.dims.token_dim = static_cast<int>(kv.get_int("E", c.dims.token_dim));
  c.dims.retrieval_dim = static_cast<int>(kv.get_int("e", c.dims.retrieval_dim));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

}  // namespace

SynthConfig SynthConfig::from_file(const std::string& path) { return synth_from_kv(KeyValueFile::read(path)); }
SynthConfig SynthConfig::from_text(const std::string& text) { return synth_from_kv(KeyValueFile::parse(text)); }

std::string SynthConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "K_source = " << K_source << "\n"
     << "d_range = " << d_min << ", " << d_max << "\n"
     << "trials_per_subject = " << trials_per_subject << "\n"
     << "test_trials = " << test_trials << "\n"
     << "held_out = " << held_out << "\n"
     << "C = " << C << "\n"
     << "h_true = " << h_true << "\n"
     << "noise_std = " << noise_std << "\n"
     << "subject_gain_std = " << subject_gain_std << "\n"
     << "instance_std = " << instance_std << "\n"
     << "shared_fraction = " << shared_fraction << "\n"
     << "T = " << dims.tokens << "\n"
     << "E = " << dims.token_dim << "\n"
     << "e = " << dims.retrieval_dim << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Generator

namespace {

MatrixD gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * n(rng);
  return m;
}

struct Stimulus {
  int class_id;
  RowVector<double> z;
};

}  // namespace

SyntheticPack generate_synthetic_with_truth(const SynthConfig& config) {
  config.validate();
  Rng rng = make_stream(config.seed, 0);
  const int h = config.h_true;
  const auto& dims = config.dims;

  const MatrixD class_factors = gaussian(rng, config.C, h, 1.0);
  std::vector<MatrixD> token_maps;
  for (int t = 0; t < dims.tokens; ++t)
    token_maps.push_back(gaussian(rng, dims.token_dim, h, 1.0 / std::sqrt(double(h))));
  MatrixD retrieval_map;
  if (dims.retrieval_dim != dims.token_dim)
    retrieval_map = gaussian(rng, dims.retrieval_dim, dims.token_dim, 1.0 / std::sqrt(double(dims.token_dim)));

  std::vector<Stimulus> stimuli;
  std::normal_distribution<double> unit(0.0, 1.0);
  // Classes cycle within each block so every block is balanced.
  auto make_block = [&](int count) {
    std::vector<int> ids;
    for (int k = 0; k < count; ++k) {
      Stimulus s{k % config.C, class_factors.row(k % config.C)};
      for (int j = 0; j < h; ++j) s.z(j) += config.instance_std * unit(rng);
      ids.push_back(static_cast<int>(stimuli.size()));
      stimuli.push_back(std::move(s));
    }
    return ids;
  };

  const int shared_train = static_cast<int>(std::lround(config.shared_fraction * config.trials_per_subject));
  const int shared_test = static_cast<int>(std::lround(config.shared_fraction * config.test_trials));
  const std::vector<int> shared_train_ids = make_block(shared_train);
  const std::vector<int> shared_test_ids = make_block(shared_test);

  const int n_subjects = config.K_source + config.held_out;
  std::vector<std::vector<int>> train_ids(n_subjects), test_ids(n_subjects);
  for (int s = 0; s < n_subjects; ++s) {
    train_ids[s] = shared_train_ids;
    auto priv = make_block(config.trials_per_subject - shared_train);
    train_ids[s].insert(train_ids[s].end(), priv.begin(), priv.end());
    test_ids[s] = shared_test_ids;
    priv = make_block(config.test_trials - shared_test);
    test_ids[s].insert(test_ids[s].end(), priv.begin(), priv.end());
    std::shuffle(train_ids[s].begin(), train_ids[s].end(), rng);
    std::shuffle(test_ids[s].begin(), test_ids[s].end(), rng);
  }

  SyntheticTruth truth;
  truth.latents.resize(static_cast<Eigen::Index>(stimuli.size()), h);
  std::vector<StimulusRecord> records;
  records.reserve(stimuli.size());
  for (std::size_t i = 0; i < stimuli.size(); ++i) {
    const auto& s = stimuli[i];
    truth.latents.row(static_cast<Eigen::Index>(i)) = s.z;
    StimulusRecord rec;
    rec.stimulus_id = static_cast<int>(i);
    rec.class_id = s.class_id;
    MatrixD tokens(dims.tokens, dims.token_dim);
    for (int t = 0; t < dims.tokens; ++t) {
      RowVector<double> tok = (token_maps[t] * s.z.transpose()).transpose();
      tokens.row(t) = tok / tok.norm();
    }
    RowVector<double> pooled = tokens.colwise().mean();
    if (retrieval_map.size() != 0) pooled = (retrieval_map * pooled.transpose()).transpose();
    rec.target_tokens = tokens.cast<float>();
    rec.target_retrieval = (pooled / pooled.norm()).cast<float>();
    records.push_back(std::move(rec));
  }

  std::uniform_int_distribution<int> dim_dist(config.d_min, config.d_max);
  std::vector<SubjectDataset> subjects;
  for (int s = 0; s < n_subjects; ++s) {
    const int d = dim_dist(rng);
    MatrixD mixing = gaussian(rng, d, h, 1.0 / std::sqrt(double(h)));
    RowVector<double> gains(h);
    for (int j = 0; j < h; ++j) gains(j) = 1.0 + config.subject_gain_std * unit(rng);

    SubjectDataset ds;
    ds.subject_id = s + 1;
    std::vector<int> rows = train_ids[s];
    rows.insert(rows.end(), test_ids[s].begin(), test_ids[s].end());
    const auto m = static_cast<Eigen::Index>(rows.size());
    MatrixD latent(m, h);
    for (Eigen::Index r = 0; r < m; ++r) latent.row(r) = stimuli[rows[r]].z.cwiseProduct(gains);
    MatrixD vox = latent * mixing.transpose();
    if (config.noise_std > 0) vox += gaussian(rng, m, d, config.noise_std);
    ds.voxels = vox.cast<float>();
    ds.stimulus_ids = rows;
    ds.split.assign(train_ids[s].size(), Split::kTrain);
    ds.split.resize(rows.size(), Split::kTest);
    subjects.push_back(std::move(ds));
    truth.mixing.push_back(std::move(mixing));
    truth.gains.push_back(std::move(gains));
  }

  return {DatasetPack(std::move(records), std::move(subjects), config.C, dims), std::move(truth)};
}

DatasetPack generate_synthetic(const SynthConfig& config) {
  return generate_synthetic_with_truth(config).pack;
}

SubjectDataset session_subset(const SubjectDataset& ds, int n_trials) {
  const auto train = ds.rows_with(Split::kTrain);
  if (n_trials < 0 || n_trials > static_cast<int>(train.size()))
    throw InvalidArgument("session of " + std::to_string(n_trials) + " trials requested but subject " +
                          std::to_string(ds.subject_id) + " has " + std::to_string(train.size()) +
                          " train rows");
  std::vector<int> keep(train.begin(), train.begin() + n_trials);
  for (int r : ds.rows_with(Split::kTest)) keep.push_back(r);
  std::sort(keep.begin(), keep.end());

  SubjectDataset out;
  out.subject_id = ds.subject_id;
  out.voxels.resize(static_cast<Eigen::Index>(keep.size()), ds.voxels.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.voxels.row(static_cast<Eigen::Index>(i)) = ds.voxels.row(keep[i]);
    out.stimulus_ids.push_back(ds.stimulus_ids[keep[i]]);
    out.split.push_back(ds.split[keep[i]]);
  }
  return out;
}

}  // namespace duala
