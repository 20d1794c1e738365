// Command-line front end: gen, train, eval, ablate, gradcheck, analyze.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "roirel/analysis.hpp"
#include "roirel/errors.hpp"
#include "roirel/grad_suite.hpp"
#include "roirel/json_config.hpp"
#include "roirel/training_eval.hpp"

namespace fs = std::filesystem;
using namespace roirel;

namespace {

// Stable exit-code contract. kCheckFailed is only returned by gradcheck.
enum Exit : int { kOk = 0, kConfig = 1, kIo = 2, kDivergence = 3, kCheckFailed = 4 };

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool quiet = false;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError(path + ": line " + std::to_string(line) + ": malformed JSON");
  }
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void refuse_overwrite(const fs::path& file, bool force) {
  if (fs::exists(file) && !force)
    throw IoError(file.string() + " already exists (use --force to overwrite)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

ExperimentConfig experiment_from(const Common& c) {
  nlohmann::json j = read_config(c.config);
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::function<void(const std::string&)> logger(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& s) { std::cerr << s << '\n'; };
}

std::string metrics_summary(const Metrics& m, const std::string& hash, std::uint64_t seed) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "config %s seed %llu\n", hash.c_str(), static_cast<unsigned long long>(seed));
  out << line;
  std::snprintf(line, sizeof line, "%-24s %10.4f  (%zu / %zu)\n", "accuracy", m.accuracy, m.correct, m.foreground);
  out << line;
  std::snprintf(line, sizeof line, "%-24s %10.4f\n", "mAP", m.ap.mean.value_or(0.0));
  out << line;
  std::snprintf(line, sizeof line, "%-24s %10.4f  (%zu / %zu)\n", "conflict rate", m.conflict.rate,
                m.conflict.conflicts, m.conflict.confident);
  out << line;
  std::snprintf(line, sizeof line, "%-24s %10zu\n", "scale outliers", m.outliers.total_outliers());
  out << line;
  for (const auto& c : m.chamfer) {
    const std::string label = "chamfer " + class_name(c.class_a) + "/" + class_name(c.class_b);
    if (c.mean) {
      std::snprintf(line, sizeof line, "%-24s %10.4f  (%zu scenes)\n", label.c_str(), *c.mean, c.qualifying);
    } else {
      std::snprintf(line, sizeof line, "%-24s %10s\n", label.c_str(), "no qualifying scenes");
    }
    out << line;
  }
  return out.str();
}

int cmd_gen(const Common& c) {
  ExperimentConfig cfg = experiment_from(c);
  const fs::path out(c.out);
  prepare_out(out);
  refuse_overwrite(out / "manifest.json", c.force);
  const auto scenes = make_scenes(cfg, Split::kEval);
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%05zu.json", k);
    write_text(out / name, scenes[k].to_json().dump() + "\n");
    files.push_back(name);
  }
  write_json(out / "manifest.json", {{"schema", "roirel-scene-set-v1"},
                                     {"config_hash", cfg.scene.hash()},
                                     {"experiment_hash", cfg.hash()},
                                     {"seed", cfg.seed},
                                     {"count", scenes.size()},
                                     {"scene_config", cfg.scene.to_json()},
                                     {"files", files}});
  if (!c.quiet) std::cerr << "wrote " << scenes.size() << " scenes to " << out.string() << '\n';
  return 0;
}

std::vector<Scene> load_scene_set(const fs::path& dir) {
  const nlohmann::json manifest = read_config((dir / "manifest.json").string());
  std::vector<Scene> scenes;
  if (!manifest.contains("files") || !manifest["files"].is_array())
    throw ConfigError((dir / "manifest.json").string() + ": missing file list");
  for (const auto& f : manifest["files"]) {
    const auto path = dir / f.get<std::string>();
    try {
      scenes.push_back(Scene::from_json(read_config(path.string())));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return scenes;
}

int cmd_train(const Common& c) {
  ExperimentConfig cfg = experiment_from(c);
  const fs::path out(c.out);
  prepare_out(out);
  refuse_overwrite(out / "result.json", c.force);
  TrainOptions opts;
  opts.checkpoint_path = out / "checkpoint.json";
  opts.diagnostics_dir = out;
  opts.log = logger(c);
  const TrainOutput run = train(cfg, opts);
  write_json(out / "result.json", run.result.to_json());
  write_json(out / "config.json", cfg.to_json());
  write_json(out / "detections.json", detections_to_json(run.eval.detections, cfg.hash()));
  write_json(out / "timing.json", {{"config_hash", cfg.hash()}, {"wall_clock_s", run.result.wall_clock_s}});
  const std::string summary = metrics_summary(run.result.metrics, cfg.hash(), cfg.seed);
  write_text(out / "summary.txt", summary);
  if (!c.quiet) std::cout << summary;
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& scenes_dir) {
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint PATH");
  const fs::path out(c.out);
  prepare_out(out);
  refuse_overwrite(out / "eval.json", c.force);
  std::vector<Scene> scenes;
  ExperimentConfig stored;
  if (!scenes_dir.empty()) {
    scenes = load_scene_set(scenes_dir);
  } else {
    // Scenes from the experiment stored with the checkpoint, or from
    // --config when given (which must then match it).
    const nlohmann::json manifest = read_config(checkpoint);
    if (!manifest.contains("metadata") || !manifest["metadata"].contains("experiment"))
      throw ConfigError(checkpoint + ": checkpoint carries no experiment config");
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig::from_json(manifest["metadata"]["experiment"])
                                            : experiment_from(c);
    if (c.seed) cfg.seed = *c.seed;
    scenes = make_scenes(cfg, Split::kEval);
  }
  const EvalOutput eval = evaluate_checkpoint(checkpoint, scenes, &stored);
  write_json(out / "eval.json", {{"schema", "roirel-eval-v1"},
                                 {"config_hash", stored.hash()},
                                 {"seed", stored.seed},
                                 {"scenes", scenes.size()},
                                 {"metrics", eval.metrics.to_json()}});
  write_json(out / "detections.json", detections_to_json(eval.detections, stored.hash()));
  const std::string summary = metrics_summary(eval.metrics, stored.hash(), stored.seed);
  write_text(out / "summary.txt", summary);
  if (!c.quiet) std::cout << summary;
  return 0;
}

int cmd_ablate(const Common& c) {
  const nlohmann::json j = read_config(c.config);
  StrictReader r(j, "");
  ExperimentConfig base;
  if (const auto* b = r.raw("base")) base = ExperimentConfig::from_json(*b);
  std::string preset;
  r.read("preset", preset);
  std::vector<Arm> arms;
  if (!preset.empty()) arms = arm_preset(preset);
  if (const auto* list = r.raw("arms")) {
    if (!list->is_array()) throw ConfigError("invalid value for config field 'arms'");
    for (const auto& a : *list) {
      if (!a.is_object() || !a.contains("name") || !a["name"].is_string())
        throw ConfigError("invalid value for config field 'arms'");
      arms.push_back({a["name"].get<std::string>(), a.value("overrides", nlohmann::json::object())});
    }
  }
  std::int64_t seed_count = 20;
  r.read("seed_count", seed_count);
  r.finish();
  if (arms.empty()) throw ConfigError("ablate needs 'preset' or 'arms'");
  require(seed_count >= 1, "seed_count", "must be >= 1");
  const std::uint64_t first = c.seed.value_or(base.seed);
  std::vector<std::uint64_t> seeds;
  for (std::int64_t k = 0; k < seed_count; ++k) seeds.push_back(first + static_cast<std::uint64_t>(k));

  const fs::path out(c.out);
  prepare_out(out);
  refuse_overwrite(out / "grid.json", c.force);
  GridOptions opts;
  opts.log = logger(c);
  const GridResult grid = run_ablation_grid(base, arms, seeds, opts);
  nlohmann::json gj = grid.to_json();
  gj["base_config_hash"] = base.hash();
  write_json(out / "grid.json", gj);
  const std::string table = grid.to_table();
  write_text(out / "table.txt", table);
  if (!c.quiet) std::cout << table;
  return 0;
}

int cmd_gradcheck(const Common& c, const std::string& inject) {
  GradSuiteOptions o = GradSuiteOptions::from_json(read_config(c.config));
  if (c.seed) o.seed = *c.seed;
  if (!inject.empty()) o.inject_bug = inject;
  o.validate();
  const GradSuiteReport report = run_gradient_suite(o);
  if (c.out != ".") {
    const fs::path out(c.out);
    prepare_out(out);
    refuse_overwrite(out / "gradcheck.json", c.force);
    nlohmann::json j = report.to_json();
    j["config_hash"] = config_hash(o.to_json());
    j["options"] = o.to_json();
    write_json(out / "gradcheck.json", j);
  }
  if (!c.quiet) std::cout << report.to_table();
  return report.passed ? kOk : kCheckFailed;
}

int cmd_analyze(const Common& c, const std::vector<std::string>& inputs, double confidence,
                double conflict_threshold, const std::vector<std::string>& pairs) {
  if (inputs.empty()) throw ConfigError("analyze needs at least one detections file");
  std::vector<SceneDetections> scenes;
  std::string hash;
  for (const auto& in : inputs) {
    std::string h;
    auto part = parse_detections_text(read_text(in), in, &h);
    if (!hash.empty() && h != hash) throw ConfigError(in + ": config hash differs from " + inputs.front());
    hash = h;
    scenes.insert(scenes.end(), part.begin(), part.end());
  }
  std::vector<std::pair<int, int>> class_pairs;
  for (const auto& p : pairs) {
    const auto slash = p.find(':');
    const int a = class_from_name(p.substr(0, slash));
    const int b = slash == std::string::npos ? -1 : class_from_name(p.substr(slash + 1));
    if (a < 0 || b < 0 || a >= kNumClasses || b >= kNumClasses)
      throw ConfigError("invalid --pair '" + p + "' (expected class:class)");
    class_pairs.emplace_back(a, b);
  }
  if (class_pairs.empty()) class_pairs = AnalysisConfig{}.chamfer_pairs;

  const OutlierReport outliers = scale_outliers(scenes, confidence);
  const ConflictReport conflict = conflict_rate(scenes, conflict_threshold);
  nlohmann::json chamfer = nlohmann::json::array();
  std::ostringstream table;
  table << outliers.to_table() << '\n';
  char line[160];
  for (const auto& [a, b] : class_pairs) {
    const ChamferReport r = category_chamfer(scenes, a, b);
    chamfer.push_back(r.to_json());
    const std::string label = class_name(a) + "/" + class_name(b);
    if (r.mean) {
      std::snprintf(line, sizeof line, "chamfer %-28s %10.4f  (%zu scenes, %zu skipped)\n", label.c_str(), *r.mean,
                    r.qualifying, r.skipped);
    } else {
      std::snprintf(line, sizeof line, "chamfer %-28s no qualifying scenes\n", label.c_str());
    }
    table << line;
  }
  std::snprintf(line, sizeof line, "conflict rate %.4f (%zu of %zu confident)\n", conflict.rate, conflict.conflicts,
                conflict.confident);
  table << line;

  const fs::path out(c.out);
  prepare_out(out);
  refuse_overwrite(out / "analysis.json", c.force);
  write_json(out / "analysis.json", {{"schema", "roirel-analysis-v1"},
                                     {"config_hash", hash},
                                     {"scenes", scenes.size()},
                                     {"outliers", outliers.to_json()},
                                     {"chamfer", chamfer},
                                     {"conflict", conflict.to_json()}});
  write_text(out / "outliers.csv", "# config_hash=" + hash + "\n" + outliers.to_csv());
  write_text(out / "analysis.txt", table.str());
  if (!c.quiet) std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relation-aware RoI detector on synthetic aerial scenes"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&common](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config, "JSON configuration file");
    if (config_required) opt->required();
    sub->add_option("--out", common.out, "Output directory (created if absent)");
    sub->add_option("--seed", common.seed, "Seed override");
    sub->add_flag("--force", common.force, "Overwrite existing results");
    sub->add_flag("--quiet", common.quiet, "Suppress progress output");
  };

  auto* gen = app.add_subcommand("gen", "Write evaluation scenes and a manifest");
  add_common(gen, false);
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate one configuration");
  add_common(train_cmd, false);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval, false);
  std::string checkpoint, scenes_dir;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint manifest (checkpoint.json)");
  eval->add_option("--scenes", scenes_dir, "Scene directory written by gen");
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid over matched seeds");
  add_common(ablate, true);
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every trainable group");
  add_common(grad, false);
  std::string inject;
  grad->add_option("--inject-bug", inject, "Test hook: corrupt one group's analytic gradient ('all' for every group)");
  auto* analyze = app.add_subcommand("analyze", "Outlier, chamfer and conflict reports from detection files");
  add_common(analyze, false);
  std::vector<std::string> inputs, pairs;
  double confidence = 0.9, conflict_threshold = 0.5;
  analyze->add_option("detections", inputs, "Detection files (roirel-detections-v1)")->required();
  analyze->add_option("--confidence", confidence, "Score threshold for outlier statistics");
  analyze->add_option("--conflict-threshold", conflict_threshold, "Score threshold for conflicts");
  analyze->add_option("--pair", pairs, "Chamfer class pair as a:b (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }

  try {
    if (*gen) return cmd_gen(common);
    if (*train_cmd) return cmd_train(common);
    if (*eval) return cmd_eval(common, checkpoint, scenes_dir);
    if (*ablate) return cmd_ablate(common);
    if (*grad) return cmd_gradcheck(common, inject);
    if (*analyze) return cmd_analyze(common, inputs, confidence, conflict_threshold, pairs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  }
  return 0;
}
