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
#include "duala/cli.hpp"

#include <cstdlib>
#include <iomanip>
#include <ostream>

#include <CLI11.hpp>

#include "duala/binary_io.hpp"
#include "duala/config_file.hpp"
#include "duala/gradient_suite.hpp"
#include "duala/pack_io.hpp"
#include "duala/pipeline.hpp"

namespace duala {
namespace {

TrainConfig load_train_config(const std::string& path) { return path.empty() ? TrainConfig{} : TrainConfig::from_file(path); }

void print_config(std::ostream& out, const std::string& title, const std::string& text, std::uint64_t seed) {
  out << "# " << title << "\n" << text << "# seed = " << seed << "\n";
}

std::vector<int> parse_subjects(const std::string& text, const DatasetPack& pack) {
  std::vector<int> ids;
  if (text.empty()) throw InvalidArgument("--subjects must list at least one subject id");
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument("bad subject id '" + item + "'");
    const int id = std::stoi(item);
    if (!pack.has_subject(id)) throw InvalidArgument("unknown subject id " + std::to_string(id));
    ids.push_back(id);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return ids;
}

const SubjectDataset& require_subject(const DatasetPack& pack, int id) {
  if (!pack.has_subject(id)) throw InvalidArgument("unknown subject id " + std::to_string(id));
  return pack.subject(id);
}

SubjectDataset session_for(const SubjectDataset& ds, int session_trials) {
  const auto train = static_cast<int>(ds.rows_with(Split::kTrain).size());
  if (session_trials <= 0) return ds;
  if (session_trials > train)
    throw InvalidArgument("--session-trials " + std::to_string(session_trials) + " exceeds the " +
                          std::to_string(train) + " train rows of subject " + std::to_string(ds.subject_id));
  return session_subset(ds, session_trials);
}

struct Flags {
  // gen
  std::string config, out;
  std::uint64_t seed = 0;
  // shared
  std::string pack, ckpt, subjects, trace, report, format = "csv", pca, seeds = "0..4", inject;
  int subject = 0;
  int session_trials = 750;
  bool no_sdp = false, no_sa = false, no_rc = false;
  EvalOptions eval;
};

int cmd_gen(const Flags& f, CLI::App& app, std::ostream& out) {
  SynthConfig cfg = SynthConfig::from_file(f.config);
  if (app.count("--seed")) cfg.seed = f.seed;
  cfg.validate();
  print_config(out, "synthetic config", cfg.to_text(), cfg.seed);
  const auto pack = generate_synthetic(cfg);
  save_pack(pack, f.out);
  out << "wrote " << pack.subjects().size() << " subjects, " << pack.stimuli().size() << " stimuli to " << f.out << "\n";
  return kExitOk;
}

int cmd_pretrain(const Flags& f, CLI::App& app, std::ostream& out) {
  const auto pack = load_pack(f.pack);
  TrainConfig cfg = load_train_config(f.config);
  if (app.count("--seed")) cfg.seed = f.seed;
  cfg.validate();
  const auto ids = parse_subjects(f.subjects, pack);
  print_config(out, "train config", cfg.to_text(), cfg.seed);
  auto result = pretrain(pack, ids, cfg);
  compute_reference(result.checkpoint, pack);
  save_checkpoint(result.checkpoint, f.out);
  const std::string trace = f.trace.empty() ? f.out + ".trace.csv" : f.trace;
  write_trace_csv(result.trace, trace);
  out << "steps " << result.trace.rows.size() << "; checkpoint " << f.out << "; trace " << trace << "\n";
  return kExitOk;
}

int cmd_finetune(const Flags& f, CLI::App& app, std::ostream& out) {
  const auto base = load_checkpoint(f.ckpt);
  const auto pack = load_pack(f.pack);
  TrainConfig cfg = load_train_config(f.config);
  if (app.count("--seed")) cfg.seed = f.seed;
  // The flags only switch components off; the config decides the rest.
  if (f.no_sdp) cfg.sdp = SdpVariant::kOff;
  if (f.no_sa) cfg.lambda1 = 0;
  if (f.no_rc) cfg.lambda2 = 0;
  cfg.validate();
  const auto ds = session_for(require_subject(pack, f.subject), f.session_trials);
  print_config(out, "train config", cfg.to_text(), cfg.seed);
  out << "# subject = " << f.subject << ", session trials = " << ds.rows_with(Split::kTrain).size() << "\n";
  auto result = finetune(base, pack, ds, cfg);
  save_checkpoint(result.checkpoint, f.out);
  const std::string trace = f.trace.empty() ? f.out + ".trace.csv" : f.trace;
  write_trace_csv(result.trace, trace);
  out << "steps " << result.trace.rows.size() << "; skipped structure steps " << result.trace.skipped_structure_steps
      << "; unperturbed rows " << result.trace.passthrough_rows << "; checkpoint " << f.out << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const auto format = parse_report_format(f.format);
  const auto ck = load_checkpoint(f.ckpt);
  const auto pack = load_pack(f.pack);
  const auto& ds = require_subject(pack, f.subject);
  print_config(out, "checkpoint config", ck.config.to_text(), ck.config.seed);
  out << "# pool_size = " << f.eval.pool_size << ", n_pools = " << f.eval.n_pools << ", pool_seed = " << f.eval.pool_seed
      << "\n";
  const auto record = evaluate_subject(ck, pack, ds, f.eval, "eval", ck.config.seed);
  emit_report({record}, f.report, format);
  if (!f.pca.empty()) {
    const auto enc = encode_subject(ck, pack, ds, Split::kTest);
    const auto pca = pca_project<float>(enc.retrieval, 2);
    binary::write_file(f.pca, format_pca_csv(enc.stimulus_ids, enc.labels, pca.coords));
  }
  out << "image_acc " << record.retrieval.image_acc << " brain_acc " << record.retrieval.brain_acc << " silhouette "
      << record.structure.silhouette << "\n";
  return kExitOk;
}

int cmd_ablate(const Flags& f, std::ostream& out) {
  const auto format = parse_report_format(f.format);
  const auto base = load_checkpoint(f.ckpt);
  const auto pack = load_pack(f.pack);
  const TrainConfig cfg = load_train_config(f.config);
  cfg.validate();
  const auto seeds = parse_seed_list(f.seeds);
  const auto ds = session_for(require_subject(pack, f.subject), f.session_trials);
  print_config(out, "train config", cfg.to_text(), cfg.seed);
  std::vector<ReportRecord> records;
  for (const auto& arm : ablation_arms()) {
    for (auto seed : seeds) {
      TrainConfig run = apply_arm(cfg, arm);
      run.seed = seed;
      const auto result = finetune(base, pack, ds, run);
      records.push_back(evaluate_subject(result.checkpoint, pack, ds, f.eval, arm.name, seed));
      const auto& r = records.back();
      out << arm.name << " seed " << seed << ": image_acc " << r.retrieval.image_acc << " brain_acc "
          << r.retrieval.brain_acc << " silhouette " << r.structure.silhouette << "\n";
    }
  }
  emit_report(records, f.report, format);
  return kExitOk;
}

bool f64_mode() {
  const char* env = std::getenv("DUALA_F64");
  if (!env || !*env) return true;
  const std::string v(env);
  if (v == "1") return true;
  if (v == "0") return false;
  throw InvalidArgument("DUALA_F64 must be 0 or 1");
}

int cmd_gradcheck(const Flags& f, std::ostream& out) {
  GradSuiteOptions opts;
  opts.seeds = parse_seed_list(f.seeds);
  opts.f64 = f64_mode();
  opts.inject_fault = f.inject;
  if (!opts.inject_fault.empty() && opts.inject_fault != "all") {
    const auto names = gradient_suite_operations();
    if (std::find(names.begin(), names.end(), opts.inject_fault) == names.end())
      throw InvalidArgument("unknown operation '" + opts.inject_fault + "'");
  }
  const double tol = opts.f64 ? 1e-4 : 1e-3;
  out << "# mode = " << (opts.f64 ? "f64" : "f32") << ", tolerance = " << tol << ", seeds = " << f.seeds << "\n";
  const auto entries = run_gradient_suite(opts);
  bool all_ok = true;
  for (const auto& name : gradient_suite_operations()) {
    double worst = 0;
    bool ok = true;
    for (const auto& e : entries) {
      if (e.operation != name) continue;
      worst = std::max(worst, e.max_rel_error);
      ok = ok && e.pass;
    }
    all_ok = all_ok && ok;
    out << (ok ? "PASS " : "FAIL ") << std::left << std::setw(32) << name << " max_rel_err " << std::scientific
        << std::setprecision(3) << worst << std::defaultfloat << "\n";
  }
  return all_ok ? kExitOk : kExitValidation;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-level alignment for cross-subject brain decoding", "duala"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic multi-subject pack");
  gen->add_option("--config", f.config, "SynthConfig key = value file")->required();
  gen->add_option("--out", f.out, "Output pack path")->required();
  gen->add_option("--seed", f.seed, "Override the config seed");

  auto* pre = app.add_subcommand("pretrain", "Pre-train adapters and backbone on source subjects");
  pre->add_option("--pack", f.pack)->required();
  pre->add_option("--subjects", f.subjects, "Comma-separated subject ids")->required();
  pre->add_option("--config", f.config, "TrainConfig key = value file");
  pre->add_option("--out", f.out, "Output checkpoint")->required();
  pre->add_option("--trace", f.trace, "Loss trace CSV (default <out>.trace.csv)");
  pre->add_option("--seed", f.seed, "Override the config seed");

  auto* fine = app.add_subcommand("finetune", "Adapt a pre-trained checkpoint to a new subject");
  fine->add_option("--ckpt", f.ckpt)->required();
  fine->add_option("--pack", f.pack)->required();
  fine->add_option("--subject", f.subject)->required();
  fine->add_option("--session-trials", f.session_trials, "Train rows used (0 = all)")->capture_default_str();
  fine->add_option("--config", f.config, "TrainConfig key = value file");
  fine->add_option("--out", f.out)->required();
  fine->add_option("--trace", f.trace, "Loss trace CSV (default <out>.trace.csv)");
  fine->add_option("--seed", f.seed, "Override the config seed");
  fine->add_flag("--no-sdp", f.no_sdp, "Disable the distribution perturbation");
  fine->add_flag("--no-sa", f.no_sa, "Disable the semantic alignment loss");
  fine->add_flag("--no-rc", f.no_rc, "Disable the relational consistency loss");

  auto add_eval_options = [&](CLI::App* sub) {
    sub->add_option("--report", f.report)->required();
    sub->add_option("--format", f.format, "csv or jsonl")->capture_default_str();
    sub->add_option("--pool-size", f.eval.pool_size)->capture_default_str();
    sub->add_option("--n-pools", f.eval.n_pools)->capture_default_str();
    sub->add_option("--pool-seed", f.eval.pool_seed)->capture_default_str();
  };
  auto* ev = app.add_subcommand("eval", "Retrieval and class-structure metrics on test rows");
  ev->add_option("--ckpt", f.ckpt)->required();
  ev->add_option("--pack", f.pack)->required();
  ev->add_option("--subject", f.subject)->required();
  ev->add_option("--emit-pca", f.pca, "Write 2-D PCA coordinates as CSV");
  add_eval_options(ev);

  auto* abl = app.add_subcommand("ablate", "Fine-tune and evaluate every ablation arm for each seed");
  abl->add_option("--ckpt", f.ckpt)->required();
  abl->add_option("--pack", f.pack)->required();
  abl->add_option("--subject", f.subject)->required();
  abl->add_option("--seeds", f.seeds, "Range a..b or comma list")->capture_default_str();
  abl->add_option("--session-trials", f.session_trials)->capture_default_str();
  abl->add_option("--config", f.config, "TrainConfig key = value file");
  add_eval_options(abl);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gc->add_option("--seeds", f.seeds)->capture_default_str();
  gc->add_option("--inject-fault", f.inject, "Corrupt one operation's gradient (or 'all')");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*gen) return cmd_gen(f, *gen, out);
    if (*pre) return cmd_pretrain(f, *pre, out);
    if (*fine) return cmd_finetune(f, *fine, out);
    if (*ev) return cmd_eval(f, out);
    if (*abl) return cmd_ablate(f, out);
    if (*gc) return cmd_gradcheck(f, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace duala
