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
#include "duala/pipeline.hpp"

#include <algorithm>
#include <sstream>

namespace duala {

std::vector<ArmSpec> ablation_arms() {
  return {{"none", false, false, false},
          {"sdp", true, false, false},
          {"sa", false, true, false},
          {"sdp_sa", true, true, false},
          {"full", true, true, true}};
}

TrainConfig apply_arm(TrainConfig c, const ArmSpec& arm) {
  if (!arm.sdp) c.sdp = SdpVariant::kOff;
  else if (c.sdp == SdpVariant::kOff) c.sdp = SdpVariant::kDeterministic;
  if (!arm.semantic) c.lambda1 = 0;
  if (!arm.relational) c.lambda2 = 0;
  return c;
}

ReportRecord evaluate_subject(const Checkpoint& ck, const DatasetPack& pack, const SubjectDataset& subject,
                              const EvalOptions& options, const std::string& arm, std::uint64_t seed) {
  const auto enc = encode_subject(ck, pack, subject, Split::kTest);
  const int n = static_cast<int>(enc.retrieval.rows());
  if (n < 2) throw InvalidArgument("evaluation needs at least two test rows");
  ReportRecord r;
  r.arm = arm;
  r.seed = seed;
  r.subject = subject.subject_id;
  r.retrieval = retrieval_accuracy<float>(enc.retrieval, enc.image, std::min(options.pool_size, n), options.n_pools,
                                          options.pool_seed, options.threads);
  r.structure = class_structure_metrics<float>(enc.retrieval, enc.labels);
  return r;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto number = [&](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument("bad seed '" + s + "' in list '" + text + "'");
    return static_cast<std::uint64_t>(std::stoull(s));
  };
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto lo = number(text.substr(0, dots)), hi = number(text.substr(dots + 2));
    if (hi < lo || hi - lo > 100000) throw InvalidArgument("bad seed range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(number(item));
  if (out.empty()) throw InvalidArgument("empty seed list");
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty list");
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace duala
