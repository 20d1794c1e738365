#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "roirel/analysis.hpp"
#include "roirel/training_eval.hpp"

using namespace roirel;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "roirel_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CliRun cli(const std::string& args) {
  const fs::path log = work_dir() / "last_output.txt";
  const std::string cmd = std::string(ROIREL_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = work_dir() / name;
  std::ofstream(p) << text;
  return p;
}

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.scene.feature_dim = 16;
  c.tokenizer.feature_dim = 16;
  c.tokenizer.width_dim = 4;
  c.tokenizer.height_dim = 4;
  c.tokenizer.model_dim = 36;
  c.encoder.model_dim = 36;
  c.encoder.layers = 2;
  c.encoder.ff_dim = 48;
  c.head.hidden_dim = 16;
  c.data.train_scenes = 4;
  c.data.eval_scenes = 5;
  c.data.epochs = 1;
  c.seed = 2;
  return c;
}

fs::path tiny_config(const std::string& name, const ExperimentConfig& c = tiny()) {
  return write_file(name, c.to_json().dump(2));
}

std::string out_dir(const std::string& name) {
  const fs::path p = work_dir() / name;
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST(Cli, GenWritesScenesAndManifest) {
  const auto cfg = tiny_config("gen.json");
  const std::string a = out_dir("gen_a"), b = out_dir("gen_b");
  ASSERT_EQ(cli("gen --quiet --config " + cfg.string() + " --out " + a).code, 0);
  ASSERT_EQ(cli("gen --quiet --config " + cfg.string() + " --out " + b).code, 0);
  const auto manifest = load(fs::path(a) / "manifest.json");
  EXPECT_EQ(manifest["count"], 5);
  ASSERT_EQ(manifest["files"].size(), 5u);
  EXPECT_EQ(manifest["config_hash"], tiny().scene.hash());
  for (const auto& f : manifest["files"]) {
    const auto name = f.get<std::string>();
    ASSERT_TRUE(fs::exists(fs::path(a) / name));
    EXPECT_EQ(slurp(fs::path(a) / name), slurp(fs::path(b) / name));
    EXPECT_EQ(load(fs::path(a) / name)["config_hash"], manifest["config_hash"]);
  }
  EXPECT_EQ(slurp(fs::path(a) / "manifest.json"), slurp(fs::path(b) / "manifest.json"));
  // Existing output is kept unless forced.
  EXPECT_EQ(cli("gen --quiet --config " + cfg.string() + " --out " + a).code, 2);
  EXPECT_EQ(cli("gen --quiet --force --config " + cfg.string() + " --out " + a).code, 0);
}

TEST(Cli, ManifestHashFollowsEveryConfigField) {
  const ExperimentConfig base = tiny();
  const nlohmann::json base_j = base.to_json();
  std::string base_hash;
  {
    const std::string o = out_dir("hash_base");
    ASSERT_EQ(cli("gen --quiet --config " + tiny_config("hash_base.json").string() + " --out " + o).code, 0);
    base_hash = load(fs::path(o) / "manifest.json")["config_hash"];
  }
  const std::vector<std::pair<std::string, nlohmann::json>> edits = {
      {"extent", 50.0}, {"ambiguity_rate", 0.25}, {"feature_noise", 0.11}, {"max_zones", 7}};
  for (const auto& [key, value] : edits) {
    ExperimentConfig c = base;
    nlohmann::json j = base_j;
    j["scene"][key] = value;
    const auto path = write_file("hash_" + key + ".json", j.dump());
    const std::string o = out_dir("hash_" + key);
    ASSERT_EQ(cli("gen --quiet --config " + path.string() + " --out " + o).code, 0) << key;
    EXPECT_NE(load(fs::path(o) / "manifest.json")["config_hash"], base_hash) << key;
  }
  nlohmann::json j = base_j;
  j["scene"]["noise"]["angle_sd"] = 0.07;
  const std::string o = out_dir("hash_noise");
  ASSERT_EQ(cli("gen --quiet --config " + write_file("hash_noise.json", j.dump()).string() + " --out " + o).code, 0);
  EXPECT_NE(load(fs::path(o) / "manifest.json")["config_hash"], base_hash);
}

TEST(Cli, UnwritableOutputIsAnIoError) {
  const auto blocker = write_file("blocker", "x");
  const CliRun r = cli("gen --quiet --config " + tiny_config("io.json").string() + " --out " + blocker.string() + "/sub");
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.output.empty());
}

TEST(Cli, ConfigErrorsNameTheField) {
  nlohmann::json j = tiny().to_json();
  j["ablation"]["use_adaptve"] = false;
  CliRun r = cli("train --quiet --config " + write_file("typo.json", j.dump()).string() + " --out " + out_dir("typo"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("ablation.use_adaptve"), std::string::npos) << r.output;
  r = cli("train --quiet --config " + write_file("broken.json", "{\n  \"seed\": 1,\n  oops\n}").string() + " --out " +
             out_dir("broken"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;
  r = cli("train --quiet --config " + (work_dir() / "missing.json").string() + " --out " + out_dir("missing"));
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, TrainZeroEpochsAndEvalRoundTrip) {
  ExperimentConfig c = tiny();
  c.data.epochs = 0;
  const auto cfg = tiny_config("zero.json", c);
  const std::string o = out_dir("zero");
  ASSERT_EQ(cli("train --quiet --config " + cfg.string() + " --out " + o).code, 0);
  const auto result = load(fs::path(o) / "result.json");
  EXPECT_EQ(result["steps"], 0);
  EXPECT_EQ(result["config_hash"], c.hash());
  for (const char* f : {"config.json", "detections.json", "timing.json", "summary.txt", "checkpoint.json"})
    EXPECT_TRUE(fs::exists(fs::path(o) / f)) << f;
  EXPECT_EQ(load(fs::path(o) / "detections.json")["config_hash"], c.hash());
  EXPECT_EQ(load(fs::path(o) / "timing.json")["config_hash"], c.hash());
  EXPECT_EQ(cli("train --quiet --config " + cfg.string() + " --out " + o).code, 2);

  EXPECT_EQ(cli("eval --quiet --out " + out_dir("eval_none")).code, 1);
  const std::string e = out_dir("eval");
  ASSERT_EQ(cli("eval --quiet --checkpoint " + o + "/checkpoint.json --out " + e).code, 0);
  const auto ev = load(fs::path(e) / "eval.json");
  EXPECT_EQ(ev["metrics"], result["metrics"]);
  EXPECT_EQ(ev["config_hash"], c.hash());

  // Scenes from gen give the same numbers.
  const std::string g = out_dir("eval_scenes_gen");
  ASSERT_EQ(cli("gen --quiet --config " + cfg.string() + " --out " + g).code, 0);
  const std::string e2 = out_dir("eval2");
  ASSERT_EQ(cli("eval --quiet --checkpoint " + o + "/checkpoint.json --scenes " + g + " --out " + e2).code, 0);
  EXPECT_EQ(load(fs::path(e2) / "eval.json")["metrics"], result["metrics"]);

  // Scenes from a different scene config are refused.
  ExperimentConfig other = c;
  other.scene.ambiguity_rate = 0.1;
  const std::string g2 = out_dir("eval_scenes_other");
  ASSERT_EQ(cli("gen --quiet --config " + tiny_config("other.json", other).string() + " --out " + g2).code, 0);
  EXPECT_EQ(cli("eval --quiet --checkpoint " + o + "/checkpoint.json --scenes " + g2 + " --out " + out_dir("e3")).code, 1);
}

TEST(Cli, TrainIsDeterministic) {
  const auto cfg = tiny_config("det.json");
  const std::string a = out_dir("det_a"), b = out_dir("det_b");
  ASSERT_EQ(cli("train --quiet --config " + cfg.string() + " --out " + a).code, 0);
  ASSERT_EQ(cli("train --quiet --config " + cfg.string() + " --out " + b).code, 0);
  for (const char* f : {"result.json", "config.json", "detections.json", "summary.txt", "checkpoint.json", "checkpoint.bin"})
    EXPECT_EQ(slurp(fs::path(a) / f), slurp(fs::path(b) / f)) << f;
  const std::string s = out_dir("det_seed");
  ASSERT_EQ(cli("train --quiet --seed 3 --config " + cfg.string() + " --out " + s).code, 0);
  EXPECT_NE(slurp(fs::path(a) / "result.json"), slurp(fs::path(s) / "result.json"));
  EXPECT_EQ(load(fs::path(s) / "result.json")["seed"], 3);
}

TEST(Cli, DivergenceExitsWithThree) {
  ExperimentConfig c = tiny();
  c.optimizer.lr = 1e300;
  const std::string o = out_dir("diverge");
  const CliRun r = cli("train --quiet --config " + tiny_config("diverge.json", c).string() + " --out " + o);
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_TRUE(fs::exists(fs::path(o) / "divergence.json"));
  EXPECT_FALSE(fs::exists(fs::path(o) / "result.json"));
}

TEST(Cli, AblateComponentPresetWritesFiveRows) {
  ExperimentConfig c = tiny();
  c.data.train_scenes = 2;
  c.data.eval_scenes = 2;
  const nlohmann::json grid = {{"base", c.to_json()}, {"preset", "components"}, {"seed_count", 1}};
  const std::string o = out_dir("ablate");
  ASSERT_EQ(cli("ablate --quiet --config " + write_file("ablate.json", grid.dump()).string() + " --out " + o).code, 0);
  const auto j = load(fs::path(o) / "grid.json");
  ASSERT_EQ(j["arms"].size(), 5u);
  EXPECT_EQ(j["base_config_hash"], c.hash());
  const std::string table = slurp(fs::path(o) / "table.txt");
  for (const char* arm : {"baseline", "T ", "T+P", "T+A", "T+P+A"}) EXPECT_NE(table.find(arm), std::string::npos) << arm;
  const nlohmann::json bad = {{"base", c.to_json()}, {"preset", "components"}, {"seed_cont", 1}};
  EXPECT_EQ(cli("ablate --quiet --config " + write_file("ablate_bad.json", bad.dump()).string() + " --out " +
                   out_dir("ablate_bad")).code,
            1);
}

TEST(Cli, GradcheckPassesAndCatchesInjectedBugs) {
  const std::string o = out_dir("grad");
  const CliRun ok = cli("gradcheck --out " + o);
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("no-grad by design"), std::string::npos);
  const auto j = load(fs::path(o) / "gradcheck.json");
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_TRUE(j.contains("config_hash"));
  for (const auto& g : j["groups"]) EXPECT_LT(g["worst_error"].get<double>(), 1e-4) << g["group"];
  for (const auto& s : j["stop_gradient"]) EXPECT_EQ(s["max_abs_grad"].get<double>(), 0.0) << s["group"];
  EXPECT_EQ(cli("gradcheck --quiet --inject-bug all").code, 4);
  EXPECT_EQ(cli("gradcheck --quiet --inject-bug encoder-layer1").code, 4);
  EXPECT_EQ(cli("gradcheck --quiet --config " + write_file("bigN.json", R"({"proposals": 9})").string()).code, 1);
}

TEST(Cli, AnalyzeGroundTruthAndCorruptedFixture) {
  SceneConfig sc;
  const PrototypeBank bank(sc.feature_dim, 0);
  std::vector<SceneDetections> scenes;
  for (std::uint64_t s = 0; s < 10; ++s) scenes.push_back(ground_truth_as_detections(make_scene(sc, bank, s)));
  const auto gt_file = write_file("gt_dets.json", detections_to_json(scenes, "h1").dump());
  const std::string o = out_dir("analyze_gt");
  ASSERT_EQ(cli("analyze --quiet " + gt_file.string() + " --out " + o).code, 0);
  const auto a = load(fs::path(o) / "analysis.json");
  EXPECT_EQ(a["config_hash"], "h1");
  EXPECT_EQ(a["conflict"]["conflicts"], 0);
  EXPECT_EQ(a["outliers"]["total_outliers"], 0);
  EXPECT_EQ(slurp(fs::path(o) / "outliers.csv").rfind("# config_hash=h1\n", 0), 0u);

  // Known corruption: three ships relabelled as planes inside harbor zones.
  int changed = 0;
  for (auto& s : scenes)
    for (auto& d : s.detections)
      if (d.label == kShip && changed < 3 && s.zones[static_cast<std::size_t>(zone_at(s.zones, d.box.center()))].type ==
                                                 ZoneType::kHarbor)
        d.label = kPlane, ++changed;
  ASSERT_EQ(changed, 3);
  // No helicopters, so the ship/helicopter pair has nothing to compare.
  for (auto& s : scenes)
    std::erase_if(s.detections, [](const ScoredBox& d) { return d.label == kHelicopter; });
  const auto bad_file = write_file("bad_dets.json", detections_to_json(scenes, "h1").dump());
  const std::string o2 = out_dir("analyze_bad");
  ASSERT_EQ(cli("analyze --quiet " + bad_file.string() + " --pair ship:helicopter --out " + o2).code, 0);
  const auto b = load(fs::path(o2) / "analysis.json");
  EXPECT_EQ(b["conflict"]["conflicts"], 3);
  std::size_t total = 0;
  for (const auto& s : scenes) total += s.detections.size();
  EXPECT_EQ(b["conflict"]["confident"], total);
  EXPECT_EQ(b["chamfer"][0]["note"], "no qualifying scenes");
  EXPECT_NE(slurp(fs::path(o2) / "analysis.txt").find("no qualifying scenes"), std::string::npos);

  // Two files from different configurations cannot be pooled.
  const auto other = write_file("other_dets.json", detections_to_json(scenes, "h2").dump());
  EXPECT_EQ(cli("analyze --quiet " + gt_file.string() + " " + other.string() + " --out " + out_dir("mix")).code, 1);
}

TEST(Cli, AnalyzeMalformedInput) {
  CliRun r = cli("analyze --quiet " + write_file("m1.json", "{\n\"schema\":\n}").string() + " --out " + out_dir("m1"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;
  r = cli("analyze --quiet " +
             write_file("m2.json", R"({"schema": "roirel-detections-v1", "config_hash": "x", "scenes": [{"seed": 0}]})")
                 .string() +
             " --out " + out_dir("m2"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("$.scenes[0].zones"), std::string::npos) << r.output;
  EXPECT_EQ(cli("analyze --quiet " + (work_dir() / "nope.json").string() + " --out " + out_dir("m3")).code, 2);
}
