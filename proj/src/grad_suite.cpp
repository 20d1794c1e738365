#include "roirel/grad_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "roirel/errors.hpp"
#include "roirel/gradcheck.hpp"
#include "roirel/json_config.hpp"
#include "roirel/training_eval.hpp"

namespace roirel {

namespace {

std::string group_of(const std::string& name) {
  if (name.rfind("prelim.", 0) == 0) return "prelim-head";
  if (name.rfind("final.", 0) == 0) return "final-head";
  if (name.rfind("tokenizer.", 0) == 0) return "tokenizer";
  if (name.find(".relation.") != std::string::npos) return "relation-projection";
  if (name.rfind("encoder.layer", 0) == 0) {
    const auto start = std::string("encoder.layer").size();
    return "encoder-layer" + name.substr(start, name.find('.', start) - start);
  }
  return "other";
}

Scene tiny_scene(const GradSuiteOptions& o, Rng& rng) {
  Scene s;
  s.extent = 10.0;
  GroundTruthObject a;
  a.box = OrientedBox(3.0, 3.0, 1.6, 0.8, 0.2);
  a.cls = kShip;
  a.appearance = kShip;
  GroundTruthObject b;
  b.box = OrientedBox(6.5, 5.0, 1.3, 1.1, -0.1);
  b.cls = kStorageTank;
  b.appearance = kStorageTank;
  s.ground_truth = {a, b};
  const std::vector<OrientedBox> candidates = {
      OrientedBox(3.1, 2.95, 1.5, 0.85, 0.25), OrientedBox(6.4, 5.1, 1.35, 1.0, -0.05),
      OrientedBox(2.9, 3.1, 1.7, 0.75, 0.15), OrientedBox(8.5, 8.0, 1.0, 0.7, 0.6)};
  s.proposals.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(o.proposals));
  s.features = Tensor::matrix(o.proposals, o.feature_dim);
  for (std::size_t i = 0; i < s.features.size(); ++i) s.features[i] = rng.normal();
  return s;
}

}  // namespace

void GradSuiteOptions::validate() const {
  require(proposals >= 1 && proposals <= 4, "proposals", "gradient checks use 1..4 proposals");
  require(model_dim <= 16, "model_dim", "gradient checks use D <= 16");
  require(h > 0.0 && tolerance > 0.0, "h", "step and tolerance must be > 0");
  require(bug_scale != 1.0 || inject_bug.empty(), "bug_scale", "an injected bug needs a scale other than 1");
}

GradSuiteOptions GradSuiteOptions::from_json(const nlohmann::json& j) {
  GradSuiteOptions o;
  StrictReader r(j, "");
  r.read("proposals", o.proposals);
  r.read("feature_dim", o.feature_dim);
  r.read("size_embed_dim", o.size_embed_dim);
  r.read("model_dim", o.model_dim);
  r.read("layers", o.layers);
  r.read("heads", o.heads);
  r.read("ff_dim", o.ff_dim);
  r.read("head_hidden", o.head_hidden);
  r.read("h", o.h);
  r.read("tolerance", o.tolerance);
  r.read("seed", o.seed);
  r.read("inject_bug", o.inject_bug);
  r.read("bug_scale", o.bug_scale);
  r.finish();
  o.validate();
  return o;
}

nlohmann::json GradSuiteOptions::to_json() const {
  return {{"proposals", proposals}, {"feature_dim", feature_dim}, {"size_embed_dim", size_embed_dim},
          {"model_dim", model_dim}, {"layers", layers},           {"heads", heads},
          {"ff_dim", ff_dim},       {"head_hidden", head_hidden}, {"h", h},
          {"tolerance", tolerance}, {"seed", seed},               {"inject_bug", inject_bug},
          {"bug_scale", bug_scale}};
}

nlohmann::json GradSuiteReport::to_json() const {
  nlohmann::json groups_j = nlohmann::json::array();
  for (const auto& g : groups) {
    groups_j.push_back({{"group", g.group},
                        {"tensors", g.tensors},
                        {"entries", g.entries},
                        {"worst_error", g.worst_error},
                        {"worst_tensor", g.worst_tensor},
                        {"passed", g.passed}});
  }
  nlohmann::json stop_j = nlohmann::json::array();
  for (const auto& s : stop_gradient) {
    stop_j.push_back({{"group", s.group},
                      {"status", "no-grad by design"},
                      {"max_abs_grad", s.max_abs_grad},
                      {"passed", s.passed}});
  }
  return {{"tolerance", tolerance}, {"passed", passed}, {"groups", groups_j}, {"stop_gradient", stop_j}};
}

std::string GradSuiteReport::to_table() const {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-22s %8s %12s  %s\n", "group", "entries", "worst err", "result");
  out << line;
  for (const auto& g : groups) {
    std::snprintf(line, sizeof line, "%-22s %8zu %12.3e  %s\n", g.group.c_str(), g.entries, g.worst_error,
                  g.passed ? "pass" : "FAIL");
    out << line;
  }
  for (const auto& s : stop_gradient) {
    std::snprintf(line, sizeof line, "%-22s %8s %12.3e  no-grad by design, %s\n", s.group.c_str(), "-",
                  s.max_abs_grad, s.passed ? "pass" : "FAIL");
    out << line;
  }
  out << (passed ? "all groups pass" : "gradient check FAILED") << " (tol " << tolerance << ")\n";
  return out.str();
}

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options) {
  options.validate();
  ExperimentConfig cfg;
  cfg.seed = options.seed;
  cfg.scene.feature_dim = static_cast<std::int64_t>(options.feature_dim);
  cfg.tokenizer.feature_dim = options.feature_dim;
  cfg.tokenizer.width_dim = cfg.tokenizer.height_dim = options.size_embed_dim;
  cfg.tokenizer.model_dim = cfg.encoder.model_dim = options.model_dim;
  cfg.encoder.layers = options.layers;
  cfg.encoder.heads = options.heads;
  cfg.encoder.ff_dim = options.ff_dim;
  cfg.head.hidden_dim = options.head_hidden;
  cfg.validate();

  Model model(cfg);
  // Move every parameter off its initial value so zero-initialized layers
  // are checked at a generic point.
  Rng rng = Rng(options.seed).split("gradcheck");
  for (auto& p : model.params().all())
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += rng.normal(0.0, 0.2);

  const Scene scene = tiny_scene(options, rng);
  const auto gt = scene.gt_boxes();
  const auto assignment = assign_targets(scene.proposals, gt, scene.gt_classes(), kNumClasses);
  const std::vector<OrientedBox> fixed = scene.proposals;

  Model::Forward last;
  auto build = [&](Graph& g) {
    Rng unused(0);
    last = model.forward(g, scene, Mode::kEval, unused, &fixed);
    return detection_loss(last.prelim, last.final_out, assignment, scene.proposals, last.prelim_boxes, gt, {})
        .total;
  };

  GradSuiteReport report;
  report.tolerance = options.tolerance;

  std::map<std::string, std::vector<Parameter*>> groups;
  std::vector<std::string> order;
  for (auto& p : model.params().all()) {
    if (!p.trainable) continue;
    const std::string g = group_of(p.name);
    if (!groups.count(g)) order.push_back(g);
    groups[g].push_back(&p);
  }
  for (const auto& name : order) {
    const auto& params = groups[name];
    const bool buggy = options.inject_bug == "all" || options.inject_bug == name;
    const auto r = finite_diff_check(build, params, options.h, options.tolerance, buggy ? options.bug_scale : 1.0);
    GradGroupResult gr;
    gr.group = name;
    gr.tensors = params.size();
    for (const auto& e : r.entries) {
      gr.entries += e.entries;
      if (e.max_error >= gr.worst_error) {
        gr.worst_error = e.max_error;
        gr.worst_tensor = e.name;
      }
    }
    gr.passed = r.passed;
    report.passed = report.passed && gr.passed;
    report.groups.push_back(gr);
  }

  // One more pass to read the gradients that reached the box-derived inputs.
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
    const std::pair<const char*, std::optional<Var>> inputs[] = {
        {"decay-matrix", last.decay_input},
        {"relation-inputs", last.relations},
        {"positional-encoding", last.positional}};
    for (const auto& [name, var] : inputs) {
      StopGradientResult s;
      s.group = name;
      if (!var) {
        s.passed = false;
      } else {
        s.max_abs_grad = var->grad().max_abs();
        s.passed = s.max_abs_grad == 0.0;
      }
      report.passed = report.passed && s.passed;
      report.stop_gradient.push_back(s);
    }
    model.params().zero_grad();
  }
  return report;
}

}  // namespace roirel
