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
#include "duala/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "duala/binary_io.hpp"

namespace duala {
namespace {

const char* const kHeader =
    "arm,seed,subject,image_acc,brain_acc,pool_size,n_pools,pool_seed,intra_mean,inter_mean,ratio,silhouette";

std::string g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double rounded(double v) { return std::strtod(g6(v).c_str(), nullptr); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "jsonl") return ReportFormat::kJsonLines;
  throw InvalidArgument("unknown report format '" + name + "' (expected csv or jsonl)");
}

std::string format_report(const std::vector<ReportRecord>& records, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = std::string(kHeader) + "\n";
    for (const auto& r : records) {
      if (r.arm.find_first_of(",\n\"") != std::string::npos) throw InvalidArgument("arm name must not contain , \" or newline");
      out += r.arm + "," + std::to_string(r.seed) + "," + std::to_string(r.subject) + "," +
             g6(r.retrieval.image_acc) + "," + g6(r.retrieval.brain_acc) + "," + std::to_string(r.retrieval.pool_size) +
             "," + std::to_string(r.retrieval.n_pools) + "," + std::to_string(r.retrieval.seed) + "," +
             g6(r.structure.intra_mean) + "," + g6(r.structure.inter_mean) + "," + g6(r.structure.ratio) + "," +
             g6(r.structure.silhouette) + "\n";
    }
    return out;
  }
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["arm"] = r.arm;
    j["seed"] = r.seed;
    j["subject"] = r.subject;
    j["image_acc"] = rounded(r.retrieval.image_acc);
    j["brain_acc"] = rounded(r.retrieval.brain_acc);
    j["pool_size"] = r.retrieval.pool_size;
    j["n_pools"] = r.retrieval.n_pools;
    j["pool_seed"] = r.retrieval.seed;
    j["intra_mean"] = rounded(r.structure.intra_mean);
    j["inter_mean"] = rounded(r.structure.inter_mean);
    j["ratio"] = rounded(r.structure.ratio);
    j["silhouette"] = rounded(r.structure.silhouette);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<ReportRecord> parse_report(const std::string& text, ReportFormat format) {
  std::vector<ReportRecord> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  try {
    if (format == ReportFormat::kCsv) {
      if (!std::getline(in, line) || line != kHeader) throw InvalidArgument("report header mismatch");
      ++line_no;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 12) throw InvalidArgument("expected 12 fields");
        ReportRecord r;
        r.arm = f[0];
        r.seed = std::stoull(f[1]);
        r.subject = std::stoi(f[2]);
        r.retrieval = {std::stod(f[3]), std::stod(f[4]), std::stoi(f[5]), std::stoi(f[6]), std::stoull(f[7])};
        r.structure = {std::stod(f[8]), std::stod(f[9]), std::stod(f[10]), std::stod(f[11])};
        out.push_back(std::move(r));
      }
      return out;
    }
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      ReportRecord r;
      r.arm = j.at("arm").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.subject = j.at("subject").get<int>();
      r.retrieval = {j.at("image_acc").get<double>(), j.at("brain_acc").get<double>(), j.at("pool_size").get<int>(),
                     j.at("n_pools").get<int>(), j.at("pool_seed").get<std::uint64_t>()};
      r.structure = {j.at("intra_mean").get<double>(), j.at("inter_mean").get<double>(), j.at("ratio").get<double>(),
                     j.at("silhouette").get<double>()};
      out.push_back(std::move(r));
    }
  } catch (const std::exception& e) {
    throw FormatError(FormatErrorKind::kMalformed, "report line " + std::to_string(line_no) + ": " + e.what());
  }
  return out;
}

void emit_report(const std::vector<ReportRecord>& records, const std::string& path, ReportFormat format) {
  binary::write_file(path, format_report(records, format));
}

std::string format_pca_csv(const std::vector<int>& stimulus_ids, const Labels& labels, const MatrixF& coords) {
  require_dims(stimulus_ids.size() == labels.size() && static_cast<Eigen::Index>(labels.size()) == coords.rows(),
               "PCA rows, labels and stimulus ids must align");
  std::string out = "stimulus_id,class_id,x,y\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double x = coords.cols() > 0 ? coords(r, 0) : 0.0;
    const double y = coords.cols() > 1 ? coords(r, 1) : 0.0;
    out += std::to_string(stimulus_ids[i]) + "," + std::to_string(labels[i]) + "," + g6(x) + "," + g6(y) + "\n";
  }
  return out;
}

}  // namespace duala
