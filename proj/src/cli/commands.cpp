#include "dropcast/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dropcast/dataset_io.hpp"
#include "dropcast/error.hpp"
#include "dropcast/metrics.hpp"
#include "dropcast/model.hpp"
#include "dropcast/pilot.hpp"
#include "dropcast/pipeline.hpp"
#include "dropcast/scoring.hpp"
#include "dropcast/service/server.hpp"
#include "dropcast/synthgen.hpp"
#include "dropcast/train.hpp"

namespace dropcast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  std::string log_level = "info";
  std::string command_line;
};

json load_config(const Globals& g) {
  if (g.config_path.empty()) return json::object();
  std::ifstream in(g.config_path);
  if (!in) throw Error("cannot open config " + g.config_path);
  try {
    auto j = json::parse(in);
    if (!j.is_object()) throw Error("config " + g.config_path + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error("config " + g.config_path + " is not valid JSON: " + e.what());
  }
}

json section(const json& config, const char* name) {
  return config.contains(name) ? config.at(name) : json::object();
}

std::uint64_t resolve_seed(const Globals& g, const json& config) {
  if (g.seed) return *g.seed;
  if (config.contains("seed")) return config.at("seed").get<std::uint64_t>();
  return 1;
}

json make_meta(const Globals& g, std::uint64_t seed) {
  return json{{"tool", "dropcast"}, {"version", kVersion}, {"command", g.command_line}, {"seed", seed}};
}

void print_header(const std::string& command, std::uint64_t seed, const json& resolved) {
  std::cout << "# dropcast " << command << "\n# seed: " << seed << "\n# config: " << resolved.dump() << std::endl;
}

// --out names a file; an existing directory or a trailing '/' gets the
// default file name inside it.
fs::path output_file(const std::string& out, const char* default_name) {
  fs::path p = out.empty() ? fs::path(default_name) : fs::path(out);
  if (!out.empty() && (out.back() == '/' || fs::is_directory(p))) p /= default_name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

void write_json(const fs::path& p, const json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

std::vector<CallRecord> read_calls(const std::string& path) {
  auto in = open_in(path);
  auto parsed = parse_call_log(in);
  for (const auto& e : parsed.errors) spdlog::warn("{}:{}: {}", path, e.line, e.reason);
  return std::move(parsed.rows);
}

std::vector<ProfileCandidate> read_profiles(const std::string& path) {
  auto in = open_in(path);
  auto parsed = parse_beneficiaries(in);
  for (const auto& e : parsed.errors) spdlog::warn("{}:{}: {}", path, e.line, e.reason);
  return std::move(parsed.rows);
}

std::optional<Date> parse_date_opt(const std::string& text, const char* flag) {
  if (text.empty()) return std::nullopt;
  auto d = Date::parse(text);
  if (!d) throw Error(std::string(flag) + " must be YYYY-MM-DD, got '" + text + "'");
  return d;
}

// ---- synth

struct SynthArgs {
  std::optional<int> n;
  std::optional<int> weeks;
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  const auto config = load_config(g);
  auto pc = section(config, "population").get<synth::PopulationConfig>();
  pc.seed = g.seed ? *g.seed : (section(config, "population").contains("seed") ? pc.seed : resolve_seed(g, config));
  if (a.n) pc.n_beneficiaries = *a.n;
  if (a.weeks) pc.horizon_weeks = *a.weeks;
  synth::validate(pc);
  print_header("synth", pc.seed, json(pc));

  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  fs::create_directories(dir);
  auto pop = synth::generate(pc);
  {
    auto out = open_out(dir / "calls.csv");
    write_call_log(out, pop.calls);
  }
  {
    auto out = open_out(dir / "beneficiaries.csv");
    write_beneficiaries(out, pop.profiles);
  }
  {
    auto out = open_out(dir / "latent_traits.csv");
    synth::write_latent_traits(out, pop.traits);
  }
  write_json(dir / "synth_meta.json", json{{"meta", make_meta(g, pc.seed)}, {"config", pc}});
  spdlog::info("wrote {} beneficiaries and {} call rows to {}", pop.profiles.size(), pop.calls.size(), dir.string());
  return 0;
}

// ---- prepare

struct PrepareArgs {
  std::string calls;
  std::string beneficiaries;
  std::string task;
};

int cmd_prepare(const Globals& g, const PrepareArgs& a) {
  const auto config = load_config(g);
  auto task = parse_task(a.task);
  if (!task) throw Error("unknown task '" + a.task + "'");
  auto pc = section(config, "pipeline").get<pipeline::PipelineConfig>();
  const auto seed = resolve_seed(g, config);
  print_header("prepare", seed, json{{"task", to_string(*task)}, {"pipeline", pc}});

  const auto calls = dedup_best_outcome(read_calls(a.calls));
  const auto profiles = read_profiles(a.beneficiaries);
  auto ds = pipeline::build_dataset(calls, profiles, *task, pc, seed);
  auto path = output_file(g.out, "samples.jsonl");
  auto out = open_out(path);
  auto meta = make_meta(g, seed);
  meta["pipeline"] = pc;
  pipeline::write_samples(out, ds, meta);
  spdlog::info("wrote {} samples ({} low / {} high) to {}", ds.samples.size(), ds.counts.low_risk, ds.counts.high_risk,
               path.string());
  return 0;
}

// ---- train

struct TrainArgs {
  std::string data;
  std::string model;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> w_high;
};

pipeline::Dataset load_dataset(const std::string& path) {
  auto in = open_in(path);
  return pipeline::read_samples(in);
}

json split_json(std::uint64_t seed, const train::SplitRatios& r) {
  return {{"seed", seed}, {"train", r.train}, {"val", r.val}, {"test", r.test}};
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto config = load_config(g);
  auto kind = parse_model_kind(a.model);
  if (!kind) throw Error("unknown model '" + a.model + "'");
  const auto seed = resolve_seed(g, config);
  const auto ds = load_dataset(a.data);
  const train::SplitRatios ratios;
  const auto split = train::split_dataset(ds, ratios, seed);
  const auto layout = ModelLayout::of(ds);
  auto manifest = output_file(g.out, "model.json");
  auto meta = make_meta(g, seed);
  meta["split"] = split_json(seed, ratios);
  meta["data"] = a.data;

  if (*kind == ModelKind::rf) {
    auto fc = forest::ForestConfig::for_task(ds.task);
    const auto fsec = section(config, "forest");
    if (!fsec.empty()) {
      json merged = fc;
      merged.merge_patch(fsec);
      fc = merged.get<forest::ForestConfig>();
    }
    if (a.w_high) fc.class_weights.high = *a.w_high;
    fc.seed = seed;
    print_header("train", seed, json{{"model", "rf"}, {"forest", fc}});
    auto f = train::train_forest(ds, split, fc);
    meta["oob_accuracy"] = f.oob_accuracy();
    Model m(layout, std::move(f));
    m.meta = meta;
    save_model(m, manifest);
  } else {
    auto tc = train::TrainConfig::for_task(ds.task);
    const auto tsec = section(config, "train");
    if (!tsec.empty()) {
      json merged = tc;
      merged.merge_patch(tsec);
      tc = merged.get<train::TrainConfig>();
    }
    if (a.epochs) tc.epochs = *a.epochs;
    if (a.batch_size) tc.batch_size = *a.batch_size;
    if (a.w_high) tc.class_weights.high = *a.w_high;
    tc.seed = seed;
    tc.validate();
    const auto arch = *kind == ModelKind::condip ? nn::Arch::condip : nn::Arch::rendip;
    auto nc = nn::NetConfig::for_task(arch, ds.task, ds.static_width, ds.max_len);
    print_header("train", seed, json{{"model", a.model}, {"network", nc}, {"train", tc}});
    auto result = train::train_network(nc, ds, split, tc);
    meta["train"] = tc;
    meta["best_epoch"] = result.best_epoch;
    meta["epochs_run"] = result.history.size();
    Model m(layout, std::move(result.network));
    m.meta = meta;
    save_model(m, manifest);
    auto hist = open_out(manifest.parent_path() / "history.csv");
    train::write_history_csv(hist, result.history);
  }
  spdlog::info("wrote model manifest {}", manifest.string());
  return 0;
}

// ---- eval

struct EvalArgs {
  std::string model;
  std::string data;
  std::string split = "test";
  double threshold = 0.5;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const auto config = load_config(g);
  auto model = load_model(a.model);
  const auto ds = load_dataset(a.data);
  if (ds.task != model.layout().task) throw Error("dataset task does not match the model task");
  std::uint64_t split_seed = resolve_seed(g, config);
  if (!g.seed && model.meta.contains("split")) split_seed = model.meta["split"].at("seed").get<std::uint64_t>();
  print_header("eval", split_seed, json{{"model", a.model}, {"data", a.data}, {"split", a.split}, {"threshold", a.threshold}});

  std::vector<std::size_t> indices;
  if (a.split == "all") {
    for (std::size_t i = 0; i < ds.samples.size(); ++i) indices.push_back(i);
  } else {
    const auto split = train::split_dataset(ds, {}, split_seed);
    if (a.split == "test") indices = split.test;
    else if (a.split == "val") indices = split.val;
    else if (a.split == "train") indices = split.train;
    else throw Error("--split must be test, val, train or all");
  }
  const auto samples = train::epoch_samples(ds, indices, 0);
  if (samples.empty()) throw Error("no samples to evaluate");
  std::vector<int> labels;
  for (const auto* s : samples) labels.push_back(s->label);
  const auto report = metrics::evaluate(model.predict(samples), labels, a.threshold);

  auto path = output_file(g.out, "report.json");
  json j = report;
  j["meta"] = make_meta(g, split_seed);
  j["model"] = {{"manifest", a.model}, {"kind", to_string(model.kind())}, {"task", to_string(model.layout().task)}};
  j["split"] = a.split;
  write_json(path, j);
  auto roc = open_out(path.parent_path() / "roc.csv");
  metrics::write_roc_csv(roc, report.roc);
  std::cout << "accuracy " << report.accuracy << " precision " << report.precision << " recall " << report.recall
            << " f1 " << report.f1 << " auc " << report.auc << std::endl;
  return 0;
}

// ---- pilot

struct PilotArgs {
  std::string model;
  std::string calls;
  std::string beneficiaries;
  std::string cutoff;
  std::string registration_from;
  std::string registration_to;
  std::vector<int> mc;
  std::optional<int> min_attempts;
};

int cmd_pilot(const Globals& g, const PilotArgs& a) {
  const auto config = load_config(g);
  auto pc = section(config, "pilot").get<pilot::PilotConfig>();
  if (auto d = parse_date_opt(a.cutoff, "--cutoff")) pc.cutoff_date = d;
  if (auto d = parse_date_opt(a.registration_from, "--registration-from")) pc.registration_from = d;
  if (auto d = parse_date_opt(a.registration_to, "--registration-to")) pc.registration_to = d;
  if (!a.mc.empty()) pc.mc_thresholds = a.mc;
  if (a.min_attempts) pc.min_attempts_input = *a.min_attempts;
  pc.validate();
  const auto seed = resolve_seed(g, config);
  print_header("pilot", seed, json{{"model", a.model}, {"pilot", pc}});

  auto model = load_model(a.model);
  const auto calls = read_calls(a.calls);
  const auto profiles = read_profiles(a.beneficiaries);
  const auto report = pilot::run_pilot(model, calls, profiles, pc);
  auto j = pilot::report_json(report);
  j["meta"] = make_meta(g, seed);
  write_json(output_file(g.out, "pilot_report.json"), j);
  for (const auto& r : report.per_mc)
    std::cout << "MC " << r.mc << " n " << r.report.n << " accuracy " << r.report.accuracy << " f1 " << r.report.f1
              << std::endl;
  return 0;
}

// ---- score

struct ScoreArgs {
  std::string model;
  std::string calls;
  std::string beneficiaries;
  std::string as_of;
  std::vector<std::string> ids;
};

int cmd_score(const Globals& g, const ScoreArgs& a) {
  const auto config = load_config(g);
  auto as_of = parse_date_opt(a.as_of, "--as-of");
  if (!as_of) throw Error("--as-of is required");
  const auto seed = resolve_seed(g, config);
  print_header("score", seed, json{{"model", a.model}, {"as_of_date", as_of->iso()}, {"ids", a.ids}});

  auto model = load_model(a.model);
  const auto calls = read_calls(a.calls);
  const auto profiles = read_profiles(a.beneficiaries);
  const auto result = scoring::score_beneficiaries(model, calls, profiles, a.ids, *as_of);
  json scores = json::array(), skipped = json::array();
  for (const auto& s : result.scores) scores.push_back(scoring::to_json(s));
  for (const auto& s : result.skipped) skipped.push_back(scoring::to_json(s));
  const auto model_id = fs::path(a.model).stem().string();
  write_json(output_file(g.out, "scores.json"), json{{"meta", make_meta(g, seed)},
                                                     {"model_id", model_id},
                                                     {"as_of_date", as_of->iso()},
                                                     {"scores", scores},
                                                     {"skipped", skipped}});
  spdlog::info("scored {} beneficiaries, skipped {}", result.scores.size(), result.skipped.size());
  return 0;
}

// ---- serve

struct ServeArgs {
  std::optional<int> port;
  std::string host;
  std::string data_dir;
  std::string model_dir;
};

service::Server* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Globals& g, const ServeArgs& a) {
  auto sc = service::ServiceConfig::from_env();
  if (a.port) sc.port = *a.port;
  if (!a.host.empty()) sc.host = a.host;
  if (!a.data_dir.empty()) sc.data_dir = a.data_dir;
  if (!a.model_dir.empty()) sc.model_dir = a.model_dir;
  print_header("serve", resolve_seed(g, load_config(g)),
               json{{"host", sc.host}, {"port", sc.port}, {"data_dir", sc.data_dir.string()},
                    {"model_dir", sc.model_dir.string()}, {"auth", sc.token.has_value()}});
  service::Server server(sc);
  server.bind();
  g_server = &server;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  server.run();
  g_server = nullptr;
  return 0;
}

void configure_logging(const std::string& level) {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("dropcast");
    spdlog::set_default_logger(l);
    return l;
  }();
  auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") throw Error("unknown log level '" + level + "'");
  logger->set_level(lvl);
}

std::string join_args(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"dropcast: dropout-risk forecasting for call-based maternal-health programs"};
  app.require_subcommand(1);
  Globals g;
  g.command_line = join_args(argc, argv);
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed; every random stream derives from it");
  app.add_option("--config", g.config_path, "JSON config (sections: population, pipeline, train, forest, pilot)");
  app.add_option("--out", g.out, "Output file, or directory for synth");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic population");
  synth->add_option("--n", synth_args.n, "Number of beneficiaries");
  synth->add_option("--weeks", synth_args.weeks, "Horizon in weeks");

  PrepareArgs prep_args;
  auto* prepare = app.add_subcommand("prepare", "Build samples.jsonl for one task");
  prepare->add_option("--calls", prep_args.calls, "calls.csv")->required();
  prepare->add_option("--beneficiaries", prep_args.beneficiaries, "beneficiaries.csv")->required();
  prepare->add_option("--task", prep_args.task, "short | long-engagement | long-connection")
      ->required()
      ->check(CLI::IsMember({"short", "long-engagement", "long-connection"}));

  TrainArgs train_args;
  auto* trainc = app.add_subcommand("train", "Train rf, condip or rendip on a samples file");
  trainc->add_option("--data", train_args.data, "samples.jsonl")->required();
  trainc->add_option("--model", train_args.model, "rf | condip | rendip")
      ->required()
      ->check(CLI::IsMember({"rf", "condip", "rendip"}));
  trainc->add_option("--epochs", train_args.epochs, "Maximum epochs");
  trainc->add_option("--batch-size", train_args.batch_size, "Mini-batch size (>= 2)");
  trainc->add_option("--w-high", train_args.w_high, "High-risk class weight");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a model on a samples file");
  eval->add_option("--model", eval_args.model, "Model manifest")->required();
  eval->add_option("--data", eval_args.data, "samples.jsonl")->required();
  eval->add_option("--split", eval_args.split, "test | val | train | all")
      ->check(CLI::IsMember({"test", "val", "train", "all"}));
  eval->add_option("--threshold", eval_args.threshold, "Decision threshold");

  PilotArgs pilot_args;
  auto* pilotc = app.add_subcommand("pilot", "Replay the deployment-study protocol");
  pilotc->add_option("--model", pilot_args.model, "Long-term engagement model manifest")->required();
  pilotc->add_option("--calls", pilot_args.calls, "calls.csv")->required();
  pilotc->add_option("--beneficiaries", pilot_args.beneficiaries, "beneficiaries.csv")->required();
  pilotc->add_option("--cutoff", pilot_args.cutoff, "Drop records on or after this date");
  pilotc->add_option("--registration-from", pilot_args.registration_from, "First registration date (inclusive)");
  pilotc->add_option("--registration-to", pilot_args.registration_to, "Last registration date (inclusive)");
  pilotc->add_option("--mc", pilot_args.mc, "Minimum-connection thresholds")->delimiter(',');
  pilotc->add_option("--min-attempts", pilot_args.min_attempts, "Minimum attempts in the input window");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Score beneficiaries offline");
  score->add_option("--model", score_args.model, "Model manifest")->required();
  score->add_option("--calls", score_args.calls, "calls.csv")->required();
  score->add_option("--beneficiaries", score_args.beneficiaries, "beneficiaries.csv")->required();
  score->add_option("--as-of", score_args.as_of, "Scoring date; inputs end the day before")->required();
  score->add_option("--ids", score_args.ids, "Beneficiary ids (default: all)")->delimiter(',');

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the HTTP scoring service");
  serve->add_option("--port", serve_args.port, "Port (default SERVICE_PORT or 8080)");
  serve->add_option("--host", serve_args.host, "Bind address");
  serve->add_option("--data-dir", serve_args.data_dir, "Store directory (default DATA_DIR)");
  serve->add_option("--model-dir", serve_args.model_dir, "Model directory (default MODEL_DIR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_opt->count()) g.seed = seed;

  try {
    configure_logging(g.log_level);
    if (synth->parsed()) return cmd_synth(g, synth_args);
    if (prepare->parsed()) return cmd_prepare(g, prep_args);
    if (trainc->parsed()) return cmd_train(g, train_args);
    if (eval->parsed()) return cmd_eval(g, eval_args);
    if (pilotc->parsed()) return cmd_pilot(g, pilot_args);
    if (score->parsed()) return cmd_score(g, score_args);
    if (serve->parsed()) return cmd_serve(g, serve_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace dropcast::cli
