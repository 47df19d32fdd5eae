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

#include <map>
#include <span>
#include <string>

#include "duala/tensor.hpp"

namespace duala {

/// One trainable tensor handed to the optimizer. Frozen tensors are simply
/// never listed, so they cannot move.
template <typename T>
struct ParamRef {
  std::string name;
  Matrix<T>* value = nullptr;
  const Matrix<T>* grad = nullptr;
  bool decay = true;  // decoupled weight decay applies
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adaptive moments with decoupled weight decay. The decay step
/// param *= (1 - lr * wd) is applied before, and separately from, the
/// moment-based update.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(std::span<const ParamRef<T>> params, T lr);

  /// Number of step() calls.
  long long steps() const { return step_; }
  /// Updates received by one tensor; bias correction uses this count.
  long long tensor_steps(const std::string& name) const { return moments_.at(name).t; }
  const AdamWConfig& config() const { return config_; }
  const Matrix<T>& first_moment(const std::string& name) const { return moments_.at(name).m; }
  const Matrix<T>& second_moment(const std::string& name) const { return moments_.at(name).v; }

 private:
  struct Moments {
    Matrix<T> m;
    Matrix<T> v;
    long long t = 0;
  };
  AdamWConfig config_;
  long long step_ = 0;
  std::map<std::string, Moments> moments_;
};

/// One-cycle schedule: cosine ramp from peak/start_factor up to peak at the
/// warmup step, then cosine decay to peak/end_factor at the last step.
struct OneCycleSchedule {
  long long total_steps = 1;
  double peak_lr = 3e-4;
  double warmup_fraction = 0.3;
  double start_factor = 25.0;
  double end_factor = 2.5e5;

  void validate() const;
  long long warmup_step() const;
  double lr_at(long long step) const;
};

}  // namespace duala
