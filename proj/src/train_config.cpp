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
#include "duala/train_config.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "duala/config_file.hpp"

namespace duala {
namespace {

const std::vector<std::string> kTrainKeys = {
    "epochs",     "batch_size", "peak_lr",      "warmup_fraction", "start_factor", "end_factor",
    "weight_decay", "latent_dim", "lora_rank",  "ridge_lambda",    "margin",       "lambda1",
    "lambda2",    "alpha1",     "tau",          "tau_soft",        "beta_mix",     "softclip_fraction",
    "sdp",        "sdp_noise",  "sdp_probability", "triplet_policy", "omega_policy", "seed"};

std::string sdp_name(SdpVariant v) {
  switch (v) {
    case SdpVariant::kOff: return "off";
    case SdpVariant::kDeterministic: return "deterministic";
    case SdpVariant::kStochastic: return "stochastic";
  }
  return "?";
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be positive");
  if (batch_size < 2) throw InvalidArgument("batch_size must be at least 2");
  if (!(peak_lr >= 0)) throw InvalidArgument("peak_lr must be nonnegative");
  if (latent_dim < 1) throw InvalidArgument("latent_dim must be positive");
  if (lora_rank < 1) throw InvalidArgument("lora_rank must be positive");
  if (!(ridge_lambda >= 0)) throw InvalidArgument("ridge_lambda must be nonnegative");
  if (!(weight_decay >= 0)) throw InvalidArgument("weight_decay must be nonnegative");
  if (!(margin > 0)) throw InvalidArgument("margin must be positive");
  if (!(lambda1 >= 0) || !(lambda2 >= 0) || !(alpha1 >= 0)) throw InvalidArgument("loss weights must be nonnegative");
  if (!(tau > 0) || !(tau_soft > 0)) throw InvalidArgument("temperatures must be positive");
  if (!(beta_mix > 0)) throw InvalidArgument("beta_mix must be positive");
  if (!(softclip_fraction >= 0 && softclip_fraction <= 1)) throw InvalidArgument("softclip_fraction must lie in [0, 1]");
  if (!(sdp_noise >= 0)) throw InvalidArgument("sdp_noise must be nonnegative");
  if (!(sdp_probability >= 0 && sdp_probability <= 1)) throw InvalidArgument("sdp_probability must lie in [0, 1]");
  if (!(warmup_fraction >= 0 && warmup_fraction <= 1)) throw InvalidArgument("warmup_fraction must lie in [0, 1]");
  if (!(start_factor >= 1) || !(end_factor >= 1)) throw InvalidArgument("dampening factors must be >= 1");
}

int TrainConfig::soft_target_start_epoch() const {
  return epochs - static_cast<int>(std::lround(softclip_fraction * epochs));
}

namespace {

TrainConfig train_from_kv(const KeyValueFile& kv) {
  kv.reject_unknown(kTrainKeys);
  TrainConfig c;
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.peak_lr = kv.get_double("peak_lr", c.peak_lr);
  c.warmup_fraction = kv.get_double("warmup_fraction", c.warmup_fraction);
  c.start_factor = kv.get_double("start_factor", c.start_factor);
  c.end_factor = kv.get_double("end_factor", c.end_factor);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.latent_dim = static_cast<int>(kv.get_int("latent_dim", c.latent_dim));
  c.lora_rank = static_cast<int>(kv.get_int("lora_rank", c.lora_rank));
  c.ridge_lambda = kv.get_double("ridge_lambda", c.ridge_lambda);
  c.margin = kv.get_double("margin", c.margin);
  c.lambda1 = kv.get_double("lambda1", c.lambda1);
  c.lambda2 = kv.get_double("lambda2", c.lambda2);
  c.alpha1 = kv.get_double("alpha1", c.alpha1);
  c.tau = kv.get_double("tau", c.tau);
  c.tau_soft = kv.get_double("tau_soft", c.tau_soft);
  c.beta_mix = kv.get_double("beta_mix", c.beta_mix);
  c.softclip_fraction = kv.get_double("softclip_fraction", c.softclip_fraction);
  c.sdp_noise = kv.get_double("sdp_noise", c.sdp_noise);
  c.sdp_probability = kv.get_double("sdp_probability", c.sdp_probability);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));

  if (kv.contains("sdp")) {
    const auto& e = kv.entries().at("sdp");
    if (e.value == "off") c.sdp = SdpVariant::kOff;
    else if (e.value == "deterministic") c.sdp = SdpVariant::kDeterministic;
    else if (e.value == "stochastic") c.sdp = SdpVariant::kStochastic;
    else throw ConfigParseError(e.line, "'sdp' must be off, deterministic or stochastic");
  }
  if (kv.contains("triplet_policy")) {
    const auto& e = kv.entries().at("triplet_policy");
    if (e.value == "all") c.triplet_policy = TripletPolicy::kAll;
    else if (e.value == "random_per_anchor") c.triplet_policy = TripletPolicy::kRandomPerAnchor;
    else throw ConfigParseError(e.line, "'triplet_policy' must be all or random_per_anchor");
  }
  if (kv.contains("omega_policy")) {
    const auto& e = kv.entries().at("omega_policy");
    if (e.value == "union") c.omega_policy = OmegaPolicy::kUnion;
    else if (e.value == "intersection") c.omega_policy = OmegaPolicy::kIntersection;
    else throw ConfigParseError(e.line, "'omega_policy' must be union or intersection");
  }
  c.validate();
  return c;
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) { return train_from_kv(KeyValueFile::read(path)); }
TrainConfig TrainConfig::from_text(const std::string& text) { return train_from_kv(KeyValueFile::parse(text)); }

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs = " << epochs << "\n"
     << "batch_size = " << batch_size << "\n"
     << "peak_lr = " << exact(peak_lr) << "\n"
     << "warmup_fraction = " << exact(warmup_fraction) << "\n"
     << "start_factor = " << exact(start_factor) << "\n"
     << "end_factor = " << exact(end_factor) << "\n"
     << "weight_decay = " << exact(weight_decay) << "\n"
     << "latent_dim = " << latent_dim << "\n"
     << "lora_rank = " << lora_rank << "\n"
     << "ridge_lambda = " << exact(ridge_lambda) << "\n"
     << "margin = " << exact(margin) << "\n"
     << "lambda1 = " << exact(lambda1) << "\n"
     << "lambda2 = " << exact(lambda2) << "\n"
     << "alpha1 = " << exact(alpha1) << "\n"
     << "tau = " << exact(tau) << "\n"
     << "tau_soft = " << exact(tau_soft) << "\n"
     << "beta_mix = " << exact(beta_mix) << "\n"
     << "softclip_fraction = " << exact(softclip_fraction) << "\n"
     << "sdp = " << sdp_name(sdp) << "\n"
     << "sdp_noise = " << exact(sdp_noise) << "\n"
     << "sdp_probability = " << exact(sdp_probability) << "\n"
     << "triplet_policy = " << (triplet_policy == TripletPolicy::kAll ? "all" : "random_per_anchor") << "\n"
     << "omega_policy = " << (omega_policy == OmegaPolicy::kUnion ? "union" : "intersection") << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

}  // namespace duala
