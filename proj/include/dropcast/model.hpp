#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dropcast/exec.hpp"
#include "dropcast/forest.hpp"
#include "dropcast/nn/network.hpp"
#include "dropcast/pipeline.hpp"

namespace dropcast {

enum class ModelKind { rf, condip, rendip };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view name);

// Everything needed to rebuild inputs for a model at serving time.
struct ModelLayout {
  Task task = Task::short_term;
  int input_days = 0;
  int max_len = 0;
  int static_width = 0;
  int demographic_width = 0;
  ProfileSchema schema;

  static ModelLayout of(const pipeline::Dataset& dataset);
};

void to_json(nlohmann::json& j, const ModelLayout& l);
void from_json(const nlohmann::json& j, ModelLayout& l);

inline constexpr int kModelFormatVersion = 1;

class Model {
 public:
  Model(ModelLayout layout, nn::Network network);
  Model(ModelLayout layout, forest::Forest forest);

  ModelKind kind() const;
  const ModelLayout& layout() const { return layout_; }
  const nn::Network* network() const { return std::get_if<nn::Network>(&impl_); }
  const forest::Forest* forest() const { return std::get_if<forest::Forest>(&impl_); }

  // Probability of high risk per sample; forests read the demographic block.
  std::vector<double> predict(std::span<const pipeline::WindowSample* const> samples, Exec exec = Exec::parallel) const;

  // Free-form provenance (command line, seed, training summary).
  nlohmann::json meta = nlohmann::json::object();

 private:
  ModelLayout layout_;
  std::variant<nn::Network, forest::Forest> impl_;
};

// Network models write <stem>.weights.bin next to the manifest: float32
// little-endian values in the named segment order the manifest lists.
void save_model(const Model& model, const std::filesystem::path& manifest_path);
Model load_model(const std::filesystem::path& manifest_path);

}  // namespace dropcast
