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
#include "duala/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace duala {

template <typename T>
void AdamW<T>::step(std::span<const ParamRef<T>> params, T lr) {
  for (const auto& p : params) {
    if (!p.value || !p.grad) throw InvalidArgument("optimizer: null tensor for '" + p.name + "'");
    require_dims(p.value->rows() == p.grad->rows() && p.value->cols() == p.grad->cols(),
                 "optimizer: gradient shape mismatch for '" + p.name + "'");
    if (!p.grad->allFinite()) throw NonFiniteError("optimizer: non-finite gradient for '" + p.name + "'");
  }
  ++step_;
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.eps);
  const T wd = static_cast<T>(config_.weight_decay);

  for (const auto& p : params) {
    auto [it, fresh] = moments_.try_emplace(p.name);
    auto& mom = it->second;
    if (fresh) {
      mom.m = Matrix<T>::Zero(p.value->rows(), p.value->cols());
      mom.v = Matrix<T>::Zero(p.value->rows(), p.value->cols());
    }
    require_dims(mom.m.rows() == p.value->rows() && mom.m.cols() == p.value->cols(),
                 "optimizer: tensor '" + p.name + "' changed shape");
    ++mom.t;
    const T bias1 = T(1) - static_cast<T>(std::pow(config_.beta1, double(mom.t)));
    const T bias2 = T(1) - static_cast<T>(std::pow(config_.beta2, double(mom.t)));
    const auto& g = *p.grad;
    mom.m = b1 * mom.m + (T(1) - b1) * g;
    mom.v = b2 * mom.v + (T(1) - b2) * g.cwiseProduct(g);
    auto& w = *p.value;
    if (p.decay && wd != T(0)) w *= (T(1) - lr * wd);
    w.array() -= lr * (mom.m.array() / bias1) / ((mom.v.array() / bias2).sqrt() + eps);
  }
}

template class AdamW<float>;
template class AdamW<double>;

void OneCycleSchedule::validate() const {
  if (total_steps < 1) throw InvalidArgument("schedule needs at least one step");
  if (!(peak_lr >= 0)) throw InvalidArgument("peak learning rate must be nonnegative");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw InvalidArgument("warmup fraction must lie in [0, 1]");
  if (!(start_factor >= 1) || !(end_factor >= 1)) throw InvalidArgument("dampening factors must be >= 1");
}

long long OneCycleSchedule::warmup_step() const {
  if (total_steps < 2) return 0;
  const auto w = static_cast<long long>(std::llround(warmup_fraction * double(total_steps - 1)));
  return std::clamp(w, 1LL, total_steps - 1);
}

namespace {
double cosine(double from, double to, double t) {
  return to + (from - to) / 2.0 * (1.0 + std::cos(std::numbers::pi * t));
}
}  // namespace

double OneCycleSchedule::lr_at(long long step) const {
  if (step < 0 || step >= total_steps)
    throw InvalidArgument("step " + std::to_string(step) + " outside schedule of " +
                          std::to_string(total_steps) + " steps");
  if (total_steps == 1) return peak_lr;
  const long long warm = warmup_step();
  if (step <= warm) return cosine(peak_lr / start_factor, peak_lr, double(step) / double(warm));
  if (warm == total_steps - 1) return peak_lr;
  return cosine(peak_lr, peak_lr / end_factor, double(step - warm) / double(total_steps - 1 - warm));
}

}  // namespace duala
