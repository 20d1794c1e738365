#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "roirel/checkpoint.hpp"
#include "roirel/errors.hpp"
#include "roirel/training_eval.hpp"

using namespace roirel;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
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
  c.data.train_scenes = 6;
  c.data.eval_scenes = 3;
  c.data.epochs = 2;
  c.seed = 5;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("roirel_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<double> snapshot(const ParameterStore& store) {
  std::vector<double> out;
  for (const auto& p : store.all()) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
  return out;
}

}  // namespace

TEST(ExperimentConfig, DefaultsAndRoundTrip) {
  const ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.encoder.layers, 6u);
  EXPECT_EQ(c.adaptive.sigma, 4.0);
  EXPECT_EQ(c.optimizer.weight_decay, 0.05);
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
}

TEST(ExperimentConfig, HashIgnoresSeedOnly) {
  ExperimentConfig a = small_config(), b = small_config();
  b.seed = 99;
  EXPECT_EQ(a.hash(), b.hash());
  b.ablation.use_adaptive = false;
  EXPECT_NE(a.hash(), b.hash());
  ExperimentConfig c = small_config();
  c.scene.noise.angle_sd = 0.06;
  EXPECT_NE(a.hash(), c.hash());
}

TEST(ExperimentConfig, InconsistentSwitchesAreRejected) {
  ExperimentConfig c;
  c.ablation.use_transformer = false;
  EXPECT_THROW(c.validate(), ConfigError);
  c.ablation.use_relations = c.ablation.use_adaptive = false;
  EXPECT_NO_THROW(c.validate());
  c.ablation.use_prelim_supervision = false;
  EXPECT_THROW(c.validate(), ConfigError);
  ExperimentConfig d;
  d.ablation.use_adaptive = false;
  d.ablation.fixed_eps = true;
  EXPECT_THROW(d.validate(), ConfigError);
  ExperimentConfig e = small_config();
  e.encoder.model_dim = 40;
  EXPECT_THROW(e.validate(), ConfigError);
}

TEST(ExperimentConfig, UnknownFieldIsNamed) {
  nlohmann::json j = ExperimentConfig().to_json();
  j["ablation"]["use_adaptve"] = true;
  try {
    ExperimentConfig::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ablation.use_adaptve"), std::string::npos) << e.what();
  }
}

TEST(ExperimentConfig, LearningRateSchedule) {
  const ExperimentConfig c;
  EXPECT_DOUBLE_EQ(c.lr_at(0, 120), 1e-3);
  EXPECT_DOUBLE_EQ(c.lr_at(79, 120), 1e-3);
  EXPECT_DOUBLE_EQ(c.lr_at(80, 120), 1e-4);
  EXPECT_DOUBLE_EQ(c.lr_at(109, 120), 1e-4);
  EXPECT_DOUBLE_EQ(c.lr_at(110, 120), 1e-5);
  EXPECT_DOUBLE_EQ(c.lr_at(119, 120), 1e-5);
}

TEST(ExperimentConfig, AblationSwitchesReachTheAdaptiveOptions) {
  ExperimentConfig c;
  c.ablation.freeze_density = true;
  c.ablation.fixed_eps = true;
  c.ablation.overlap_mask = false;
  const AdaptiveOptions o = c.adaptive_options();
  EXPECT_TRUE(o.freeze_density);
  EXPECT_TRUE(o.fixed_eps);
  EXPECT_FALSE(o.overlap_mask);
}

TEST(Splits, SeedRangesAreDisjoint) {
  for (std::uint64_t master = 0; master < 20; ++master) {
    for (std::int64_t i = 0; i < 500; ++i) EXPECT_NE(scene_seed(master, Split::kTrain, i), scene_seed(master, Split::kEval, 0));
    EXPECT_NE(scene_seed(master, Split::kTrain, 0), scene_seed(master, Split::kEval, 0));
  }
  const ExperimentConfig c = small_config();
  const auto train = make_scenes(c, Split::kTrain), eval = make_scenes(c, Split::kEval);
  ASSERT_EQ(train.size(), 6u);
  ASSERT_EQ(eval.size(), 3u);
  for (const auto& t : train)
    for (const auto& e : eval) EXPECT_NE(t.seed, e.seed);
}

TEST(ModelForward, BaselineHasOnlyThePreliminaryHead) {
  ExperimentConfig c = small_config();
  c.ablation = {false, false, false, true, false, false, true};
  Model m(c);
  for (const auto& p : m.params().all()) EXPECT_EQ(p.name.rfind("prelim", 0), 0u) << p.name;
  const Scene s = make_scenes(c, Split::kTrain)[0];
  Graph g;
  Rng rng(0);
  const auto f = m.forward(g, s, Mode::kEval, rng);
  EXPECT_FALSE(f.final_out);
  EXPECT_FALSE(f.relations);
  EXPECT_EQ(f.decay.size(), 0u);
}

TEST(ModelForward, AdaptiveOffMatchesUnitDecay) {
  ExperimentConfig c = small_config();
  c.ablation.use_adaptive = false;
  Model m(c);
  const Scene s = make_scenes(c, Split::kTrain)[1];
  Graph g;
  Rng rng(0);
  const auto f = m.forward(g, s, Mode::kEval, rng);
  ASSERT_TRUE(f.final_out);
  EXPECT_FALSE(f.decay_input);

  // The same encoder run on one batch with an explicit all-ones decay.
  ParameterStore store;
  Rng init(1);
  const auto layers = create_encoder(store, c.encoder, init);
  Rng tok(2);
  Tensor x = Tensor::matrix(s.proposals.size(), c.encoder.model_dim);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = tok.normal();
  const RelationTensor rel = pairwise_relations(s.proposals, s.extent, c.relation);
  Tensor ones = Tensor::matrix(s.proposals.size(), s.proposals.size());
  ones.fill(1.0);
  auto run = [&](bool explicit_ones) {
    Graph h;
    Var r = h.constant(rel.values);
    std::vector<std::optional<Var>> biases;
    for (const auto& layer : layers)
      biases.emplace_back(aggregate_bias(r, h.param(*layer.relation.weight), h.param(*layer.relation.bias)));
    Rng unused(0);
    const std::optional<Var> decay = explicit_ones ? std::optional<Var>(h.constant(ones)) : std::nullopt;
    const Tensor out = encoder_forward(h, h.constant(x), biases, decay, c.encoder, layers, unused, Mode::kEval).value();
    return std::vector<double>(out.data().begin(), out.data().end());
  };
  EXPECT_EQ(run(false), run(true));
}

TEST(ModelForward, FrozenRelationsStayUntrainedWithoutP) {
  ExperimentConfig c = small_config();
  c.ablation.use_relations = false;
  Model m(c);
  for (const auto& p : m.params().all()) {
    if (p.name.find("relation") != std::string::npos) {
      EXPECT_FALSE(p.trainable) << p.name;
    }
  }
}

TEST(ModelForward, TokenPathwayFeedsPreliminaryHeadWithoutSupervision) {
  ExperimentConfig c = small_config();
  c.ablation.use_prelim_supervision = false;
  c.encoder.dropout = 0.0;
  Model m(c);
  const Scene s = make_scenes(c, Split::kTrain)[2];
  const auto t = assign_targets(s.proposals, s.gt_boxes(), s.gt_classes(), kNumClasses);
  Graph g;
  Rng rng(0);
  const auto f = m.forward(g, s, Mode::kTrain, rng);
  const auto gt = s.gt_boxes();
  const LossWeights w{0.0, 0.0, 1.0, 1.0};
  g.backward(detection_loss(f.prelim, f.final_out, t, s.proposals, f.prelim_boxes, gt, w).total);
  // Logits enter the tokens; deltas only move the (constant) boxes.
  EXPECT_GT(m.params().get("prelim.cls.weight").grad.max_abs(), 0.0);
  EXPECT_GT(m.params().get("prelim.hidden.weight").grad.max_abs(), 0.0);
  EXPECT_EQ(m.params().get("prelim.reg.weight").grad.max_abs(), 0.0);
  EXPECT_EQ(f.positional->grad().max_abs(), 0.0);
  EXPECT_EQ(f.relations->grad().max_abs(), 0.0);
  EXPECT_EQ(f.decay_input->grad().max_abs(), 0.0);
}

TEST(Train, ZeroEpochsLeavesParametersAndReportsInitialMetrics) {
  ExperimentConfig c = small_config();
  c.data.epochs = 0;
  Model fresh(c);
  Model trained(c);
  const TrainOutput out = train(c, {}, &trained);
  EXPECT_EQ(out.result.steps, 0);
  EXPECT_TRUE(out.result.loss_curve.empty());
  EXPECT_EQ(snapshot(trained.params()), snapshot(fresh.params()));
  const auto eval = make_scenes(c, Split::kEval);
  EXPECT_EQ(evaluate(fresh, eval).metrics.to_json(), out.result.metrics.to_json());
  EXPECT_GT(out.result.initial_loss, 0.0);
}

TEST(Train, DeterministicBitForBit) {
  const ExperimentConfig c = small_config();
  const TrainOutput a = train(c), b = train(c);
  EXPECT_EQ(a.result.to_json().dump(), b.result.to_json().dump());
  EXPECT_EQ(a.result.steps, 12);
  ASSERT_EQ(a.result.loss_curve.size(), 2u);
  for (double l : a.result.loss_curve) EXPECT_TRUE(std::isfinite(l));
  ExperimentConfig other = c;
  other.seed = 6;
  EXPECT_NE(train(other).result.to_json().dump(), a.result.to_json().dump());
}

TEST(Train, EvaluateAfterTrainAndCheckpointRoundTrip) {
  const ExperimentConfig c = small_config();
  const fs::path dir = scratch_dir("ckpt");
  TrainOptions opts;
  opts.checkpoint_path = dir / "checkpoint.json";
  Model model(c);
  const TrainOutput out = train(c, opts, &model);
  const auto eval = make_scenes(c, Split::kEval);
  EXPECT_EQ(evaluate(model, eval).metrics.to_json(), out.result.metrics.to_json());
  ExperimentConfig loaded;
  const EvalOutput again = evaluate_checkpoint(opts.checkpoint_path, eval, &loaded);
  EXPECT_EQ(again.metrics.to_json(), out.result.metrics.to_json());
  EXPECT_EQ(loaded.hash(), c.hash());
  EXPECT_EQ(loaded.seed, c.seed);
  EXPECT_EQ(out.result.checkpoint, "checkpoint.json");

  // A store of a different architecture refuses the file.
  ExperimentConfig bigger = c;
  bigger.encoder.layers = 3;
  Model wrong(bigger);
  EXPECT_THROW(load_checkpoint(opts.checkpoint_path, wrong.params()), std::exception);
  fs::remove_all(dir);
}

TEST(Evaluate, RejectsEmptyAndForeignScenes) {
  const ExperimentConfig c = small_config();
  const Model m(c);
  EXPECT_THROW(evaluate(m, std::vector<Scene>{}), ConfigError);
  ExperimentConfig other = c;
  other.scene.ambiguity_rate = 0.1;
  EXPECT_THROW(evaluate(m, make_scenes(other, Split::kEval)), ConfigError);
}

TEST(Evaluate, MetricsAreConsistent) {
  const ExperimentConfig c = small_config();
  const TrainOutput out = train(c);
  const Metrics& m = out.result.metrics;
  EXPECT_GT(m.foreground, 0u);
  EXPECT_LE(m.correct, m.foreground);
  EXPECT_DOUBLE_EQ(m.accuracy, static_cast<double>(m.correct) / m.foreground);
  EXPECT_GE(m.conflict.rate, 0.0);
  EXPECT_LE(m.conflict.rate, 1.0);
  EXPECT_EQ(m.chamfer.size(), 2u);
  ASSERT_EQ(out.eval.detections.size(), 3u);
  EXPECT_TRUE(std::isfinite(out.result.initial_loss));
  const auto j = out.result.to_json();
  EXPECT_EQ(j["config_hash"], c.hash());
  EXPECT_FALSE(j.contains("wall_clock_s"));
  EXPECT_TRUE(out.result.to_json(true).contains("wall_clock_s"));
}

TEST(Train, DivergenceAbortsWithStateDump) {
  const ExperimentConfig c = small_config();
  const fs::path dir = scratch_dir("diverge");
  TrainOptions opts;
  opts.diagnostics_dir = dir;
  opts.loss_scale = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(c, opts), DivergenceError);
  ASSERT_TRUE(fs::exists(dir / "divergence.json"));
  std::ifstream in(dir / "divergence.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["config_hash"], c.hash());
  EXPECT_EQ(j["step"], 0);
  fs::remove_all(dir);

  ExperimentConfig wild = c;
  wild.optimizer.lr = 1e300;
  EXPECT_THROW(train(wild), DivergenceError);
}

TEST(Train, DefaultConfigLossDecreases) {
  double start = 0, end = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentConfig c;
    c.seed = seed;
    c.data.train_scenes = 200;
    c.data.eval_scenes = 0;
    c.data.epochs = 1;
    const TrainOutput out = train(c);
    start += out.result.initial_loss;
    end += out.result.loss_curve.back();
  }
  EXPECT_LT(end, start);
}

TEST(Arms, PresetsAndPatches) {
  EXPECT_EQ(arm_preset("components").size(), 5u);
  EXPECT_EQ(arm_preset("design").size(), 4u);
  EXPECT_EQ(arm_preset("supervision").size(), 2u);
  EXPECT_THROW(arm_preset("tables"), ConfigError);
  const ExperimentConfig base = small_config();
  const auto arms = component_arms();
  const ExperimentConfig baseline = apply_arm(base, arms[0]);
  EXPECT_FALSE(baseline.ablation.use_transformer);
  EXPECT_EQ(apply_arm(base, arms[4]).hash(), base.hash());
  const auto design = design_choice_arms();
  EXPECT_TRUE(apply_arm(base, design[1]).ablation.fixed_eps);
  EXPECT_FALSE(apply_arm(base, design[2]).ablation.overlap_mask);
  EXPECT_TRUE(apply_arm(base, design[3]).ablation.freeze_density);
  EXPECT_THROW(apply_arm(base, {"bad", {{"ablation", {{"use_relation", true}}}}}), ConfigError);
}

TEST(Grid, SingleArmMatchesDirectTraining) {
  ExperimentConfig base = small_config();
  base.data.epochs = 1;
  const std::vector<Arm> arms = {{"full", nlohmann::json::object()}};
  const std::vector<std::uint64_t> seeds = {3, 4};
  const GridResult grid = run_ablation_grid(base, arms, seeds);
  ASSERT_EQ(grid.arms.size(), 1u);
  ASSERT_EQ(grid.arms[0].runs.size(), 2u);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    ExperimentConfig c = base;
    c.seed = seeds[k];
    EXPECT_EQ(grid.arms[0].runs[k].to_json().dump(), train(c).result.to_json().dump());
    EXPECT_EQ(grid.arms[0].runs[k].config_hash, base.hash());
  }
  const double a0 = grid.arms[0].runs[0].metrics.accuracy, a1 = grid.arms[0].runs[1].metrics.accuracy;
  EXPECT_DOUBLE_EQ(grid.arms[0].mean([](const RunResult& r) { return r.metrics.accuracy; }), (a0 + a1) / 2);
  EXPECT_NEAR(grid.arms[0].stddev([](const RunResult& r) { return r.metrics.accuracy; }), std::abs(a0 - a1) / 2,
              1e-12);
  EXPECT_NE(grid.to_table().find("full"), std::string::npos);
  EXPECT_EQ(grid.to_json()["arms"][0]["name"], "full");
}
