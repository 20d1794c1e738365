#include "roirel/training_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "roirel/checkpoint.hpp"
#include "roirel/errors.hpp"
#include "roirel/json_config.hpp"
#include "roirel/optim.hpp"
#include "roirel/rng.hpp"

namespace roirel {

namespace {

constexpr std::uint64_t kEvalSeedOffset = std::uint64_t{1} << 40;

std::string density_reading_name(DensityReading r) {
  return r == DensityReading::kNeighborArea ? "neighbor-area" : "own-area";
}

int class_field(const nlohmann::json& j, const std::string& field) {
  const int id = j.is_string() ? class_from_name(j.get<std::string>()) : -1;
  if (id < 0 || id >= kNumClasses) throw ConfigError("invalid value for config field '" + field + "'");
  return id;
}

struct SceneTargets {
  TargetAssignment assignment;
  std::vector<OrientedBox> gt;
};

SceneTargets targets_for(const Scene& scene) {
  SceneTargets t;
  t.gt = scene.gt_boxes();
  t.assignment = assign_targets(scene.proposals, t.gt, scene.gt_classes(), kNumClasses);
  return t;
}

LossWeights loss_weights(const ExperimentConfig& c) {
  LossWeights w;
  if (!c.ablation.use_prelim_supervision) w.prelim_cls = w.prelim_reg = 0.0;
  return w;
}

std::vector<OrientedBox> decode_all(std::span<const OrientedBox> references, const Tensor& deltas) {
  std::vector<OrientedBox> out;
  out.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) out.push_back(decode_box(references[i], delta_row(deltas, i)));
  return out;
}

nlohmann::json divergence_dump(const ParameterStore& store, std::int64_t step, std::int64_t epoch,
                               const Scene& scene, const LossBreakdown* loss) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : store.all()) {
    params.push_back({{"name", p.name},
                      {"value_max_abs", p.value.max_abs()},
                      {"grad_max_abs", p.grad.max_abs()},
                      {"finite", p.value.all_finite() && p.grad.all_finite()}});
  }
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(std::to_string(v)); };
  nlohmann::json out = {{"step", step},
                        {"epoch", epoch},
                        {"scene_seed", scene.seed},
                        {"proposals", scene.proposals.size()},
                        {"loss", nullptr},
                        {"parameters", params}};
  if (loss) {
    out["loss"] = {{"prelim_cls", num(loss->prelim_cls)},
                   {"prelim_reg", num(loss->prelim_reg)},
                   {"final_cls", num(loss->final_cls)},
                   {"final_reg", num(loss->final_reg)}};
  }
  return out;
}

bool params_finite(const ParameterStore& store) {
  for (const auto& p : store.all())
    if (!p.value.all_finite()) return false;
  return true;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

void ExperimentConfig::validate() const {
  scene.validate();
  tokenizer.validate();
  encoder.validate();
  adaptive.validate();
  require(relation_extent >= 0.0, "model.relations.extent", "must be >= 0");
  require(head.hidden_dim > 0, "model.head.hidden_dim", "must be > 0");
  require(head.num_classes == static_cast<std::size_t>(kNumClasses), "model.head.num_classes",
          "must match the class catalog");
  require(tokenizer.feature_dim == static_cast<std::size_t>(scene.feature_dim), "scene.feature_dim",
          "must match the tokenizer feature width");
  require(tokenizer.logit_dim == head.num_classes + 1, "model.head.num_classes", "must match token logits");
  require(tokenizer.model_dim == encoder.model_dim, "model.encoder.model_dim", "must match the token width");
  const auto& a = ablation;
  require(a.use_transformer || !(a.use_relations || a.use_adaptive), "ablation.use_transformer",
          "use_relations and use_adaptive need the transformer");
  require(a.use_adaptive || !(a.freeze_density || a.fixed_eps || !a.overlap_mask), "ablation.use_adaptive",
          "freeze_density, fixed_eps and overlap_mask only apply with use_adaptive");
  require(a.use_transformer || a.use_prelim_supervision, "ablation.use_prelim_supervision",
          "without the transformer nothing else is supervised");
  require(optimizer.lr > 0.0 && std::isfinite(optimizer.lr), "optimizer.lr", "must be > 0");
  require(optimizer.weight_decay >= 0.0, "optimizer.weight_decay", "must be >= 0");
  require(optimizer.drop_factor > 0.0 && optimizer.drop_factor <= 1.0, "optimizer.drop_factor",
          "must be in (0, 1]");
  for (double f : optimizer.drop_fractions)
    require(f > 0.0 && f < 1.0, "optimizer.drop_fractions", "each fraction must be in (0, 1)");
  require(data.train_scenes >= 0, "data.train_scenes", "must be >= 0");
  require(data.eval_scenes >= 0, "data.eval_scenes", "must be >= 0");
  require(data.epochs >= 0, "data.epochs", "must be >= 0");
  require(analysis.outlier_confidence >= 0.0 && analysis.outlier_confidence < 1.0,
          "analysis.outlier_confidence", "must be in [0, 1)");
  require(analysis.conflict_threshold >= 0.0 && analysis.conflict_threshold < 1.0,
          "analysis.conflict_threshold", "must be in [0, 1)");
}

nlohmann::json ExperimentConfig::to_json(bool include_seed) const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : analysis.chamfer_pairs) pairs.push_back({class_name(a), class_name(b)});
  nlohmann::json j = {
      {"scene", scene.to_json()},
      {"model",
       {{"tokenizer",
         {{"width_dim", tokenizer.width_dim}, {"height_dim", tokenizer.height_dim}, {"log_size", tokenizer.log_size}}},
        {"encoder",
         {{"layers", encoder.layers},
          {"heads", encoder.heads},
          {"model_dim", encoder.model_dim},
          {"ff_dim", encoder.ff_dim},
          {"dropout", encoder.dropout}}},
        {"head", {{"hidden_dim", head.hidden_dim}}},
        {"relations", {{"raw_area_ratio", relation.raw_area_ratio}, {"extent", relation_extent}}}}},
      {"adaptive",
       {{"sigma", adaptive.sigma},
        {"delta", adaptive.delta},
        {"global_scale", adaptive.global_scale},
        {"density_reading", density_reading_name(density_reading)}}},
      {"ablation",
       {{"use_transformer", ablation.use_transformer},
        {"use_relations", ablation.use_relations},
        {"use_adaptive", ablation.use_adaptive},
        {"use_prelim_supervision", ablation.use_prelim_supervision},
        {"freeze_density", ablation.freeze_density},
        {"fixed_eps", ablation.fixed_eps},
        {"overlap_mask", ablation.overlap_mask}}},
      {"optimizer",
       {{"lr", optimizer.lr},
        {"weight_decay", optimizer.weight_decay},
        {"drop_fractions", optimizer.drop_fractions},
        {"drop_factor", optimizer.drop_factor}}},
      {"data",
       {{"train_scenes", data.train_scenes}, {"eval_scenes", data.eval_scenes}, {"epochs", data.epochs}}},
      {"analysis",
       {{"outlier_confidence", analysis.outlier_confidence},
        {"conflict_threshold", analysis.conflict_threshold},
        {"chamfer_min_score", analysis.chamfer_min_score},
        {"chamfer_pairs", pairs}}}};
  if (include_seed) j["seed"] = seed;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  StrictReader r(j, "");
  r.read("seed", c.seed);
  if (const auto* s = r.raw("scene")) c.scene = SceneConfig::from_json(*s, "scene");
  {
    StrictReader m = r.child("model");
    StrictReader t = m.child("tokenizer");
    t.read("width_dim", c.tokenizer.width_dim);
    t.read("height_dim", c.tokenizer.height_dim);
    t.read("log_size", c.tokenizer.log_size);
    t.finish();
    StrictReader e = m.child("encoder");
    e.read("layers", c.encoder.layers);
    e.read("heads", c.encoder.heads);
    e.read("model_dim", c.encoder.model_dim);
    e.read("ff_dim", c.encoder.ff_dim);
    e.read("dropout", c.encoder.dropout);
    e.finish();
    StrictReader h = m.child("head");
    h.read("hidden_dim", c.head.hidden_dim);
    h.finish();
    StrictReader rel = m.child("relations");
    rel.read("raw_area_ratio", c.relation.raw_area_ratio);
    rel.read("extent", c.relation_extent);
    rel.finish();
    m.finish();
  }
  {
    StrictReader a = r.child("adaptive");
    a.read("sigma", c.adaptive.sigma);
    a.read("delta", c.adaptive.delta);
    a.read("global_scale", c.adaptive.global_scale);
    std::string reading = density_reading_name(c.density_reading);
    a.read("density_reading", reading);
    if (reading == "neighbor-area") {
      c.density_reading = DensityReading::kNeighborArea;
    } else if (reading == "own-area") {
      c.density_reading = DensityReading::kOwnArea;
    } else {
      throw ConfigError("invalid value for config field 'adaptive.density_reading'");
    }
    a.finish();
  }
  {
    StrictReader a = r.child("ablation");
    a.read("use_transformer", c.ablation.use_transformer);
    a.read("use_relations", c.ablation.use_relations);
    a.read("use_adaptive", c.ablation.use_adaptive);
    a.read("use_prelim_supervision", c.ablation.use_prelim_supervision);
    a.read("freeze_density", c.ablation.freeze_density);
    a.read("fixed_eps", c.ablation.fixed_eps);
    a.read("overlap_mask", c.ablation.overlap_mask);
    a.finish();
  }
  {
    StrictReader o = r.child("optimizer");
    o.read("lr", c.optimizer.lr);
    o.read("weight_decay", c.optimizer.weight_decay);
    o.read("drop_fractions", c.optimizer.drop_fractions);
    o.read("drop_factor", c.optimizer.drop_factor);
    o.finish();
  }
  {
    StrictReader d = r.child("data");
    d.read("train_scenes", c.data.train_scenes);
    d.read("eval_scenes", c.data.eval_scenes);
    d.read("epochs", c.data.epochs);
    d.finish();
  }
  {
    StrictReader a = r.child("analysis");
    a.read("outlier_confidence", c.analysis.outlier_confidence);
    a.read("conflict_threshold", c.analysis.conflict_threshold);
    a.read("chamfer_min_score", c.analysis.chamfer_min_score);
    if (const auto* pairs = a.raw("chamfer_pairs")) {
      const std::string field = a.field("chamfer_pairs");
      if (!pairs->is_array()) throw ConfigError("invalid value for config field '" + field + "'");
      c.analysis.chamfer_pairs.clear();
      for (const auto& p : *pairs) {
        if (!p.is_array() || p.size() != 2) throw ConfigError("invalid value for config field '" + field + "'");
        c.analysis.chamfer_pairs.emplace_back(class_field(p[0], field), class_field(p[1], field));
      }
    }
    a.finish();
  }
  r.finish();
  c.tokenizer.feature_dim = static_cast<std::size_t>(c.scene.feature_dim);
  c.tokenizer.logit_dim = c.head.num_classes + 1;
  c.tokenizer.model_dim = c.encoder.model_dim;
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const { return config_hash(to_json(false)); }

double ExperimentConfig::lr_at(std::int64_t step, std::int64_t total) const {
  double lr = optimizer.lr;
  for (double f : optimizer.drop_fractions)
    if (static_cast<double>(step) >= f * static_cast<double>(total)) lr *= optimizer.drop_factor;
  return lr;
}

AdaptiveOptions ExperimentConfig::adaptive_options() const {
  AdaptiveOptions o;
  o.density_reading = density_reading;
  o.freeze_density = ablation.freeze_density;
  o.fixed_eps = ablation.fixed_eps;
  o.overlap_mask = ablation.overlap_mask;
  return o;
}

std::uint64_t scene_seed(std::uint64_t master_seed, Split split, std::int64_t index) {
  const std::uint64_t base = splitmix64(master_seed);
  return base + (split == Split::kEval ? kEvalSeedOffset : 0) + static_cast<std::uint64_t>(index);
}

std::vector<Scene> make_scenes(const ExperimentConfig& config, Split split) {
  const PrototypeBank bank(static_cast<std::size_t>(config.scene.feature_dim), config.seed);
  const std::int64_t count = split == Split::kTrain ? config.data.train_scenes : config.data.eval_scenes;
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) out.push_back(make_scene(config.scene, bank, scene_seed(config.seed, split, k)));
  return out;
}

Model::Model(const ExperimentConfig& config) : config_(config) {
  config_.validate();
  const Rng init = Rng(config_.seed).split("init");
  Rng prelim_rng = init.split("prelim");
  prelim_ = HeadParams::create(store_, "prelim", config_.tokenizer.feature_dim, config_.head, prelim_rng);
  if (config_.ablation.use_transformer) {
    Rng tok_rng = init.split("tokenizer");
    tokenizer_ = TokenizerParams::create(store_, config_.tokenizer, tok_rng);
    Rng enc_rng = init.split("encoder");
    encoder_ = create_encoder(store_, config_.encoder, enc_rng);
    if (!config_.ablation.use_relations) {
      for (auto& layer : encoder_) layer.relation.weight->trainable = layer.relation.bias->trainable = false;
    }
    Rng final_rng = init.split("final");
    final_ = HeadParams::create(store_, "final", config_.encoder.model_dim, config_.head, final_rng);
  }
}

Model::Forward Model::forward(Graph& g, const Scene& scene, Mode mode, Rng& rng,
                              const std::vector<OrientedBox>* fixed_boxes) const {
  Forward out;
  Var feats = g.constant(scene.features);
  out.prelim = head_forward(g, feats, prelim_);
  out.prelim_boxes = fixed_boxes ? *fixed_boxes : decode_all(scene.proposals, out.prelim.deltas.value());
  if (!config_.ablation.use_transformer) return out;

  out.positional = g.leaf(positional_block(out.prelim_boxes, config_.tokenizer.model_dim, scene.extent));
  Var tokens = build_tokens(g, feats, out.prelim.logits, out.prelim_boxes, tokenizer_, config_.tokenizer,
                            *out.positional);
  std::vector<std::optional<Var>> biases;
  Tensor iou;
  if (config_.ablation.use_relations || config_.ablation.use_adaptive) {
    const double extent = config_.relation_extent > 0.0 ? config_.relation_extent : scene.extent;
    RelationTensor rel = pairwise_relations(out.prelim_boxes, extent, config_.relation);
    iou = rel.iou_matrix();
    if (config_.ablation.use_relations) {
      out.relations = g.leaf(std::move(rel.values));
      for (const auto& layer : encoder_)
        biases.emplace_back(
            aggregate_bias(*out.relations, g.param(*layer.relation.weight), g.param(*layer.relation.bias)));
    }
  }
  if (config_.ablation.use_adaptive) {
    out.decay = adaptive_weights(out.prelim_boxes, config_.adaptive, config_.adaptive_options(), iou).values;
    out.decay_input = g.leaf(out.decay);
  }
  Var encoded = encoder_forward(g, tokens, biases, out.decay_input, config_.encoder, encoder_, rng, mode);
  out.final_out = head_forward(g, encoded, final_);
  return out;
}

std::vector<ScoredBox> Model::detect(const Scene& scene, std::vector<int>* predicted) const {
  Graph g;
  Rng unused(0);
  const Forward f = forward(g, scene, Mode::kEval, unused);
  const HeadOutput& head = f.final_out ? *f.final_out : f.prelim;
  const std::vector<OrientedBox> refs = f.final_out ? f.prelim_boxes : scene.proposals;
  const Tensor& logits = head.logits.value();
  const auto boxes = decode_all(refs, head.deltas.value());
  std::vector<ScoredBox> out;
  out.reserve(boxes.size());
  if (predicted) predicted->clear();
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Detection d = make_detection(boxes[i], logits.row(i));
    out.push_back({d.box, d.label, d.score});
    if (predicted) predicted->push_back(d.label);
  }
  return out;
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json ch = nlohmann::json::array();
  for (const auto& c : chamfer) ch.push_back(c.to_json());
  return {{"accuracy", accuracy},
          {"foreground", foreground},
          {"correct", correct},
          {"ap", ap.to_json()},
          {"conflict", conflict.to_json()},
          {"outliers", outliers.to_json()},
          {"chamfer", ch}};
}

EvalOutput evaluate(const Model& model, std::span<const Scene> scenes) {
  if (scenes.empty()) throw ConfigError("evaluation needs at least one scene");
  const ExperimentConfig& cfg = model.config();
  const std::string expected = cfg.scene.hash();
  for (const auto& s : scenes) {
    if (s.config_hash != expected) {
      throw ConfigError("scene " + std::to_string(s.seed) + " was generated with config " + s.config_hash +
                        ", model expects " + expected);
    }
  }
  EvalOutput out;
  Metrics& m = out.metrics;
  for (const auto& scene : scenes) {
    std::vector<int> predicted;
    SceneDetections sd;
    sd.seed = scene.seed;
    sd.zones = scene.zones;
    sd.gt_boxes = scene.gt_boxes();
    sd.gt_classes = scene.gt_classes();
    sd.detections = model.detect(scene, &predicted);
    const auto assignment = assign_targets(scene.proposals, sd.gt_boxes, sd.gt_classes, kNumClasses);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (!assignment.is_foreground(i)) continue;
      ++m.foreground;
      if (predicted[i] == assignment.labels[i]) ++m.correct;
    }
    out.detections.push_back(std::move(sd));
  }
  m.accuracy = m.foreground ? static_cast<double>(m.correct) / static_cast<double>(m.foreground) : 0.0;
  m.ap = average_precision(out.detections);
  m.conflict = conflict_rate(out.detections, cfg.analysis.conflict_threshold);
  m.outliers = scale_outliers(out.detections, cfg.analysis.outlier_confidence);
  for (const auto& [a, b] : cfg.analysis.chamfer_pairs)
    m.chamfer.push_back(category_chamfer(out.detections, a, b, cfg.analysis.chamfer_min_score));
  return out;
}

nlohmann::json RunResult::to_json(bool include_timing) const {
  nlohmann::json j = {{"schema", "roirel-run-v1"},
                      {"config_hash", config_hash},
                      {"seed", seed},
                      {"steps", steps},
                      {"initial_loss", initial_loss},
                      {"loss_curve", loss_curve},
                      {"metrics", metrics.to_json()},
                      {"checkpoint", checkpoint}};
  if (include_timing) j["wall_clock_s"] = wall_clock_s;
  return j;
}

void save_model(const std::filesystem::path& manifest, const Model& model) {
  CheckpointInfo info;
  info.seed = model.config().seed;
  info.config_hash = model.config().hash();
  info.metadata = {{"experiment", model.config().to_json()}, {"scene_config_hash", model.config().scene.hash()}};
  save_checkpoint(manifest, model.params(), info);
}

TrainOutput train(const ExperimentConfig& config, const TrainOptions& options, Model* model_out) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  std::vector<Scene> own_train, own_eval;
  const std::vector<Scene>* train_scenes = options.train_scenes;
  const std::vector<Scene>* eval_scenes = options.eval_scenes;
  if (!train_scenes) {
    own_train = make_scenes(config, Split::kTrain);
    train_scenes = &own_train;
  }
  if (!eval_scenes) {
    own_eval = make_scenes(config, Split::kEval);
    eval_scenes = &own_eval;
  }

  std::optional<Model> local;
  Model& model = model_out ? *model_out : local.emplace(config);
  if (model_out && model.config().hash() != config.hash())
    throw std::invalid_argument("train: model was built for a different config");

  std::vector<SceneTargets> targets;
  targets.reserve(train_scenes->size());
  for (const auto& s : *train_scenes) targets.push_back(targets_for(s));
  const LossWeights weights = loss_weights(config);

  RunResult result;
  result.config_hash = config.hash();
  result.seed = config.seed;

  {
    double total = 0.0;
    Rng unused(0);
    for (std::size_t k = 0; k < train_scenes->size(); ++k) {
      Graph g;
      const auto f = model.forward(g, (*train_scenes)[k], Mode::kEval, unused);
      const auto& s = (*train_scenes)[k];
      total += detection_loss(f.prelim, f.final_out, targets[k].assignment, s.proposals, f.prelim_boxes,
                              targets[k].gt, weights)
                   .total.value()[0];
    }
    result.initial_loss = train_scenes->empty() ? 0.0 : total / static_cast<double>(train_scenes->size());
  }

  AdamW optimizer;
  Rng order_rng = Rng(config.seed).split("order");
  Rng dropout_rng = Rng(config.seed).split("dropout");
  const std::int64_t n_scenes = static_cast<std::int64_t>(train_scenes->size());
  const std::int64_t total_steps = config.data.epochs * n_scenes;
  std::int64_t step = 0;
  std::vector<std::size_t> order(train_scenes->size());
  for (std::int64_t epoch = 0; epoch < config.data.epochs && n_scenes > 0; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = order_rng.split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    double epoch_loss = 0.0;
    for (std::size_t k : order) {
      const Scene& scene = (*train_scenes)[k];
      auto diverge = [&](const std::string& what, const LossBreakdown* loss) {
        std::string where;
        if (!options.diagnostics_dir.empty()) {
          std::filesystem::create_directories(options.diagnostics_dir);
          const auto path = options.diagnostics_dir / "divergence.json";
          std::ofstream dump(path);
          nlohmann::json state = divergence_dump(model.params(), step, epoch, scene, loss);
          state["config_hash"] = result.config_hash;
          dump << state.dump(2) << '\n';
          where = "; state written to " + path.string();
        }
        throw DivergenceError(what + " at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                              ", scene " + std::to_string(scene.seed) + ")" + where);
      };
      Graph g;
      std::optional<Model::Forward> forward;
      try {
        forward = model.forward(g, scene, Mode::kTrain, dropout_rng);
      } catch (const std::invalid_argument&) {
        // Decoding rejects non-finite boxes, which only happens once the
        // head outputs have blown up.
        diverge("predicted boxes became non-finite", nullptr);
      }
      const auto& f = *forward;
      const LossBreakdown loss = detection_loss(f.prelim, f.final_out, targets[k].assignment, scene.proposals,
                                                f.prelim_boxes, targets[k].gt, weights);
      const double value = loss.total.value()[0] * options.loss_scale;
      if (!std::isfinite(value)) diverge("loss became non-finite", &loss);
      model.params().zero_grad();
      g.backward(loss.total, options.loss_scale);
      optimizer.step(model.params(), config.lr_at(step, total_steps), config.optimizer.weight_decay);
      if (!params_finite(model.params())) diverge("parameters became non-finite", &loss);
      epoch_loss += value;
      ++step;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n_scenes));
    char line[128];
    std::snprintf(line, sizeof line, "epoch %lld loss %.5f", static_cast<long long>(epoch),
                  result.loss_curve.back());
    log(line);
  }
  result.steps = step;

  if (!options.checkpoint_path.empty()) {
    save_model(options.checkpoint_path, model);
    result.checkpoint = options.checkpoint_path.filename().string();
  }

  TrainOutput out;
  if (!eval_scenes->empty()) {
    out.eval = evaluate(model, *eval_scenes);
    result.metrics = out.eval.metrics;
  }
  result.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.result = std::move(result);
  return out;
}

EvalOutput evaluate_checkpoint(const std::filesystem::path& manifest, std::span<const Scene> scenes,
                               ExperimentConfig* config_out) {
  const nlohmann::json m = read_json_file(manifest);
  if (!m.contains("metadata") || !m["metadata"].contains("experiment"))
    throw ConfigError(manifest.string() + ": checkpoint carries no experiment config");
  const ExperimentConfig cfg = ExperimentConfig::from_json(m["metadata"]["experiment"]);
  Model model(cfg);
  const CheckpointInfo info = load_checkpoint(manifest, model.params());
  if (info.config_hash != cfg.hash())
    throw ConfigError(manifest.string() + ": config hash does not match the stored experiment");
  if (config_out) *config_out = cfg;
  return evaluate(model, scenes);
}

std::vector<Arm> component_arms() {
  return {{"baseline", {{"ablation", {{"use_transformer", false}, {"use_relations", false}, {"use_adaptive", false}}}}},
          {"T", {{"ablation", {{"use_relations", false}, {"use_adaptive", false}}}}},
          {"T+P", {{"ablation", {{"use_adaptive", false}}}}},
          {"T+A", {{"ablation", {{"use_relations", false}}}}},
          {"T+P+A", nlohmann::json::object()}};
}

std::vector<Arm> design_choice_arms() {
  return {{"full", nlohmann::json::object()},
          {"-scale", {{"ablation", {{"fixed_eps", true}}}}},
          {"-overlap", {{"ablation", {{"overlap_mask", false}}}}},
          {"-density", {{"ablation", {{"freeze_density", true}}}}}};
}

std::vector<Arm> supervision_arms() {
  return {{"full", nlohmann::json::object()},
          {"no-prelim-supervision", {{"ablation", {{"use_prelim_supervision", false}}}}}};
}

std::vector<Arm> arm_preset(const std::string& name) {
  if (name == "components") return component_arms();
  if (name == "design") return design_choice_arms();
  if (name == "supervision") return supervision_arms();
  throw ConfigError("unknown arm preset '" + name + "'");
}

double ArmSummary::mean(const std::function<double(const RunResult&)>& metric) const {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += metric(r);
  return s / static_cast<double>(runs.size());
}

double ArmSummary::stddev(const std::function<double(const RunResult&)>& metric) const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(metric(r));
  return population_std(v);
}

const ArmSummary& GridResult::arm(const std::string& name) const {
  for (const auto& a : arms)
    if (a.name == name) return a;
  throw std::out_of_range("no arm named " + name);
}

namespace {

const std::vector<std::pair<std::string, std::function<double(const RunResult&)>>>& summary_metrics() {
  static const std::vector<std::pair<std::string, std::function<double(const RunResult&)>>> kMetrics = {
      {"accuracy", [](const RunResult& r) { return r.metrics.accuracy; }},
      {"map", [](const RunResult& r) { return r.metrics.ap.mean.value_or(0.0); }},
      {"conflict_rate", [](const RunResult& r) { return r.metrics.conflict.rate; }},
      {"outliers",
       [](const RunResult& r) { return static_cast<double>(r.metrics.outliers.total_outliers()); }},
  };
  return kMetrics;
}

}  // namespace

nlohmann::json GridResult::to_json() const {
  nlohmann::json arms_j = nlohmann::json::array();
  for (const auto& a : arms) {
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& [name, fn] : summary_metrics()) summary[name] = {{"mean", a.mean(fn)}, {"std", a.stddev(fn)}};
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : a.runs) runs.push_back(r.to_json());
    arms_j.push_back({{"name", a.name}, {"config_hash", a.config_hash}, {"summary", summary}, {"runs", runs}});
  }
  return {{"schema", "roirel-grid-v1"}, {"seeds", seeds}, {"arms", arms_j}};
}

std::string GridResult::to_table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %-16s %17s %17s %17s %15s\n", "arm", "config", "accuracy", "mAP",
                "conflict", "outliers");
  out << line;
  for (const auto& a : arms) {
    std::string cells;
    for (const auto& [name, fn] : summary_metrics()) {
      char cell[48];
      const int width = name == "outliers" ? 15 : 17;
      std::snprintf(cell, sizeof cell, " %*s", width,
                    (std::to_string(a.mean(fn)).substr(0, 7) + " +- " + std::to_string(a.stddev(fn)).substr(0, 6)).c_str());
      cells += cell;
    }
    std::snprintf(line, sizeof line, "%-22s %-16s%s\n", a.name.c_str(), a.config_hash.c_str(), cells.c_str());
    out << line;
  }
  return out.str();
}

ExperimentConfig apply_arm(const ExperimentConfig& base, const Arm& arm) {
  nlohmann::json j = base.to_json();
  j.merge_patch(arm.overrides);
  try {
    return ExperimentConfig::from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError("arm '" + arm.name + "': " + e.what());
  }
}

GridResult run_ablation_grid(const ExperimentConfig& base, std::span<const Arm> arms,
                             std::span<const std::uint64_t> seeds, const GridOptions& options) {
  GridResult grid;
  grid.seeds.assign(seeds.begin(), seeds.end());
  std::vector<ExperimentConfig> configs;
  for (const auto& arm : arms) {
    configs.push_back(apply_arm(base, arm));
    grid.arms.push_back({arm.name, configs.back().hash(), {}});
  }
  for (std::uint64_t seed : seeds) {
    // Scenes depend only on the scene config, counts and seed; arms that
    // agree on those share one set.
    std::string cached_key;
    std::vector<Scene> train_scenes, eval_scenes;
    for (std::size_t a = 0; a < arms.size(); ++a) {
      ExperimentConfig cfg = configs[a];
      cfg.seed = seed;
      const std::string key = cfg.scene.hash() + ":" + std::to_string(cfg.data.train_scenes) + ":" +
                              std::to_string(cfg.data.eval_scenes);
      if (key != cached_key) {
        train_scenes = make_scenes(cfg, Split::kTrain);
        eval_scenes = make_scenes(cfg, Split::kEval);
        cached_key = key;
      }
      TrainOptions opts;
      opts.train_scenes = &train_scenes;
      opts.eval_scenes = &eval_scenes;
      TrainOutput out = train(cfg, opts);
      if (options.log) {
        char line[160];
        std::snprintf(line, sizeof line, "seed %llu arm %s accuracy %.4f conflict %.4f (%.1fs)",
                      static_cast<unsigned long long>(seed), arms[a].name.c_str(), out.result.metrics.accuracy,
                      out.result.metrics.conflict.rate, out.result.wall_clock_s);
        options.log(line);
      }
      grid.arms[a].runs.push_back(std::move(out.result));
    }
  }
  return grid;
}

}  // namespace roirel
