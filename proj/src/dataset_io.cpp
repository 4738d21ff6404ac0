#include "dropcast/dataset_io.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "dropcast/error.hpp"

namespace dropcast::pipeline {

nlohmann::json sample_to_json(const WindowSample& s) {
  nlohmann::json seq = nlohmann::json::array();
  for (int t = 0; t < s.max_len; ++t) {
    auto row = s.seq_x.begin() + static_cast<std::ptrdiff_t>(t) * kPerCallFeatures;
    seq.push_back(std::vector<double>(row, row + kPerCallFeatures));
  }
  return nlohmann::json{{"beneficiary_id", s.beneficiary_id},
                        {"task", to_string(s.task)},
                        {"label", s.label},
                        {"draw", s.draw},
                        {"seq_len", s.seq_len},
                        {"static_x", s.static_x},
                        {"seq_x", std::move(seq)}};
}

WindowSample sample_from_json(const nlohmann::json& j, int max_len) {
  WindowSample s;
  s.beneficiary_id = j.at("beneficiary_id").get<std::string>();
  auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Error("unknown task in sample");
  s.task = *task;
  s.label = j.at("label").get<int>();
  if (s.label != 0 && s.label != 1) throw Error("sample label must be 0 or 1");
  s.draw = j.value("draw", 0);
  s.seq_len = j.at("seq_len").get<int>();
  s.max_len = max_len;
  s.static_x = j.at("static_x").get<std::vector<double>>();
  const auto& rows = j.at("seq_x");
  if (static_cast<int>(rows.size()) != max_len) throw Error("seq_x row count does not match max_len");
  if (s.seq_len < 0 || s.seq_len > max_len) throw Error("seq_len out of range");
  s.seq_x.reserve(static_cast<std::size_t>(max_len) * kPerCallFeatures);
  for (const auto& row : rows) {
    if (row.size() != kPerCallFeatures) throw Error("seq_x row has the wrong width");
    for (const auto& v : row) s.seq_x.push_back(v.get<double>());
  }
  return s;
}

void write_samples(std::ostream& out, const Dataset& ds, const nlohmann::json& meta) {
  nlohmann::json header{
      {"meta", meta},
      {"dataset",
       {{"task", to_string(ds.task)},
        {"max_len", ds.max_len},
        {"input_days", ds.input_days},
        {"static_width", ds.static_width},
        {"demographic_width", ds.demographic_width},
        {"per_call_features", kPerCallFeatures},
        {"schema", ds.schema},
        {"class_counts", {{"low_risk", ds.counts.low_risk}, {"high_risk", ds.counts.high_risk}}},
        {"exclusions", ds.exclusions},
        {"n_samples", ds.samples.size()}}}};
  out << header.dump() << '\n';
  for (const auto& s : ds.samples) out << sample_to_json(s).dump() << '\n';
}

Dataset read_samples(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("samples file is empty");
  auto header = nlohmann::json::parse(line);
  if (!header.contains("dataset")) throw Error("samples file lacks a dataset header line");
  const auto& d = header.at("dataset");
  Dataset ds;
  auto task = parse_task(d.at("task").get<std::string>());
  if (!task) throw Error("unknown task in samples header");
  ds.task = *task;
  ds.max_len = d.at("max_len").get<int>();
  ds.input_days = d.at("input_days").get<int>();
  ds.static_width = d.at("static_width").get<int>();
  ds.demographic_width = d.at("demographic_width").get<int>();
  if (d.contains("schema")) d.at("schema").get_to(ds.schema);
  if (d.contains("exclusions")) ds.exclusions = d.at("exclusions").get<std::map<std::string, int>>();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    WindowSample s;
    try {
      s = sample_from_json(nlohmann::json::parse(line), ds.max_len);
    } catch (const std::exception& e) {
      throw Error("samples line " + std::to_string(line_no) + ": " + e.what());
    }
    if (static_cast<int>(s.static_x.size()) != ds.static_width)
      throw Error("samples line " + std::to_string(line_no) + ": static_x width mismatch");
    (s.label ? ds.counts.high_risk : ds.counts.low_risk)++;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace dropcast::pipeline
