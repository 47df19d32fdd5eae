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

#include "duala/objectives.hpp"

namespace duala {

enum class SdpVariant { kOff, kDeterministic, kStochastic };

struct TrainConfig {
  int epochs = 150;
  int batch_size = 10;
  double peak_lr = 3e-4;
  double warmup_fraction = 0.3;
  double start_factor = 25.0;
  double end_factor = 2.5e5;
  double weight_decay = 1e-2;

  int latent_dim = 256;
  int lora_rank = 8;
  double ridge_lambda = 1e-3;

  double margin = 0.2;
  double lambda1 = 1.0;  // semantic alignment
  double lambda2 = 0.1;  // relational consistency
  double alpha1 = 1.0;   // contrastive
  double tau = 0.05;
  double tau_soft = 0.1;
  double beta_mix = 0.15;
  // Final fraction of epochs that use soft targets instead of mixing.
  double softclip_fraction = 1.0 / 3.0;

  SdpVariant sdp = SdpVariant::kDeterministic;
  double sdp_noise = 0.1;
  double sdp_probability = 1.0;
  TripletPolicy triplet_policy = TripletPolicy::kAll;
  OmegaPolicy omega_policy = OmegaPolicy::kUnion;

  std::uint64_t seed = 0;

  void validate() const;
  LossWeights weights() const { return {alpha1, lambda1, lambda2}; }
  /// First epoch trained with soft targets.
  int soft_target_start_epoch() const;

  static TrainConfig from_file(const std::string& path);
  static TrainConfig from_text(const std::string& text);
  /// Round-trips through from_text exactly.
  std::string to_text() const;
};

}  // namespace duala
