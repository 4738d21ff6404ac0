#pragma once

#include <iosfwd>

#include <json.hpp>

#include "dropcast/pipeline.hpp"

namespace dropcast::pipeline {

// samples.jsonl: the first line is {"meta": ..., "dataset": ...} carrying
// the producing command, seed and layout; every following line is one
// sample {beneficiary_id, task, label, draw, seq_len, static_x, seq_x}.
void write_samples(std::ostream& out, const Dataset& dataset, const nlohmann::json& meta);
Dataset read_samples(std::istream& in);

nlohmann::json sample_to_json(const WindowSample& s);
WindowSample sample_from_json(const nlohmann::json& j, int max_len);

}  // namespace dropcast::pipeline
