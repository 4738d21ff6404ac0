#include "dropcast/model.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "dropcast/error.hpp"

namespace dropcast {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::rf: return "rf";
    case ModelKind::condip: return "condip";
    case ModelKind::rendip: return "rendip";
  }
  return "rf";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  if (name == "rf") return ModelKind::rf;
  if (name == "condip") return ModelKind::condip;
  if (name == "rendip") return ModelKind::rendip;
  return std::nullopt;
}

ModelLayout ModelLayout::of(const pipeline::Dataset& d) {
  return ModelLayout{d.task, d.input_days, d.max_len, d.static_width, d.demographic_width, d.schema};
}

void to_json(nlohmann::json& j, const ModelLayout& l) {
  j = nlohmann::json{{"task", to_string(l.task)},
                     {"input_days", l.input_days},
                     {"max_len", l.max_len},
                     {"static_width", l.static_width},
                     {"demographic_width", l.demographic_width},
                     {"per_call_features", pipeline::kPerCallFeatures},
                     {"schema", l.schema}};
}

void from_json(const nlohmann::json& j, ModelLayout& l) {
  auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Error("model layout: unknown task");
  l.task = *task;
  l.input_days = j.at("input_days").get<int>();
  l.max_len = j.at("max_len").get<int>();
  l.static_width = j.at("static_width").get<int>();
  l.demographic_width = j.at("demographic_width").get<int>();
  l.schema = j.at("schema").get<ProfileSchema>();
  if (j.value("per_call_features", pipeline::kPerCallFeatures) != pipeline::kPerCallFeatures)
    throw Error("model layout: per-call feature count differs from this build");
  pipeline::StaticLayout check(l.schema);
  if (check.width() != l.static_width || check.demographic_width() != l.demographic_width)
    throw Error("model layout: static widths do not match the schema");
}

Model::Model(ModelLayout layout, nn::Network network) : layout_(std::move(layout)), impl_(std::move(network)) {
  const auto& c = std::get<nn::Network>(impl_).config();
  if (c.static_dim != layout_.static_width || c.max_len != layout_.max_len)
    throw Error("network config does not match the model layout");
}

Model::Model(ModelLayout layout, forest::Forest forest) : layout_(std::move(layout)), impl_(std::move(forest)) {
  if (std::get<forest::Forest>(impl_).n_features() != layout_.demographic_width)
    throw Error("forest width does not match the demographic block");
}

ModelKind Model::kind() const {
  if (const auto* n = network()) return n->config().arch == nn::Arch::condip ? ModelKind::condip : ModelKind::rendip;
  return ModelKind::rf;
}

std::vector<double> Model::predict(std::span<const pipeline::WindowSample* const> samples, Exec exec) const {
  for (const auto* s : samples)
    if (s->task != layout_.task)
      throw Error("sample task '" + std::string(to_string(s->task)) + "' does not match model task '" +
                  std::string(to_string(layout_.task)) + "'");
  if (const auto* n = network()) return n->predict(samples, exec);
  forest::Matrix x;
  x.rows = static_cast<int>(samples.size());
  x.cols = layout_.demographic_width;
  for (const auto* s : samples) {
    if (static_cast<int>(s->static_x.size()) != layout_.static_width)
      throw Error("sample static vector does not match the model layout");
    x.values.insert(x.values.end(), s->static_x.begin(), s->static_x.begin() + x.cols);
  }
  return forest()->predict_proba(x, exec);
}

namespace {

std::filesystem::path weights_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".weights.bin");
  return p;
}

template <class Named>
void append_segments(Named named, nlohmann::json& segments, std::string& blob) {
  for (const auto& [name, t] : named) {
    segments.push_back({{"name", name}, {"shape", t->shape()}, {"offset", blob.size()}, {"count", t->size()}});
    for (double v : t->values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int k = 0; k < 4; ++k) blob.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
    }
  }
}

void read_segment(const std::string& blob, const nlohmann::json& seg, nn::Tensor& t) {
  const auto shape = seg.at("shape").get<std::vector<int>>();
  if (shape != t.shape())
    throw Error("weight segment '" + seg.at("name").get<std::string>() + "' has a shape the config does not allow");
  const auto offset = seg.at("offset").get<std::size_t>();
  const auto count = seg.at("count").get<std::size_t>();
  if (count != t.size() || offset + 4 * count > blob.size())
    throw Error("weight segment '" + seg.at("name").get<std::string>() + "' is out of bounds");
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * i + k])) << (8 * k);
    t[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& manifest_path) {
  nlohmann::json j{{"format", "dropcast-model"},
                   {"version", kModelFormatVersion},
                   {"kind", to_string(model.kind())},
                   {"task", to_string(model.layout().task)},
                   {"layout", model.layout()},
                   {"meta", model.meta}};
  if (const auto* net = model.network()) {
    j["arch"] = to_string(net->config().arch);
    j["config"] = net->config();
    nlohmann::json segments = nlohmann::json::array();
    std::string blob;
    append_segments(net->params().named_tensors(), segments, blob);
    append_segments(net->running_stats().named_tensors(), segments, blob);
    const auto wpath = weights_path(manifest_path);
    j["weights"] = {{"file", wpath.filename().string()}, {"dtype", "float32-le"}, {"segments", segments}};
    write_file(wpath, blob);
  } else {
    j["forest"] = *model.forest();
  }
  write_file(manifest_path, j.dump(2) + "\n");
}

Model load_model(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open model manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("model manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "dropcast-model") throw Error("not a dropcast model manifest: " + manifest_path.string());
  if (j.value("version", 0) != kModelFormatVersion)
    throw Error("unsupported model format version " + j.value("version", nlohmann::json()).dump());
  try {
    auto layout = j.at("layout").get<ModelLayout>();
    auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error("unknown model kind");
    std::optional<Model> model;
    if (*kind == ModelKind::rf) {
      model.emplace(layout, forest::forest_from_json(j.at("forest")));
    } else {
      auto config = j.at("config").get<nn::NetConfig>();
      if ((config.arch == nn::Arch::condip) != (*kind == ModelKind::condip)) throw Error("model kind and arch disagree");
      nn::Network net(config, 0);
      const auto& w = j.at("weights");
      auto wpath = manifest_path.parent_path() / w.at("file").get<std::string>();
      std::ifstream win(wpath, std::ios::binary);
      if (!win) throw Error("cannot open weights " + wpath.string());
      std::string blob((std::istreambuf_iterator<char>(win)), std::istreambuf_iterator<char>());
      std::map<std::string, const nlohmann::json*> by_name;
      for (const auto& seg : w.at("segments")) by_name[seg.at("name").get<std::string>()] = &seg;
      auto fill = [&](auto named) {
        for (auto& [name, t] : named) {
          auto it = by_name.find(name);
          if (it == by_name.end()) throw Error("weights lack segment '" + name + "'");
          read_segment(blob, *it->second, *t);
          by_name.erase(it);
        }
      };
      fill(net.params().named_tensors());
      fill(net.running_stats().named_tensors());
      if (!by_name.empty()) throw Error("weights carry unexpected segment '" + by_name.begin()->first + "'");
      model.emplace(layout, std::move(net));
    }
    model->meta = j.value("meta", nlohmann::json::object());
    return std::move(*model);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed model manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace dropcast
