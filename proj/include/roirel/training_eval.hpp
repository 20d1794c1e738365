#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "roirel/adaptive_weights.hpp"
#include "roirel/analysis.hpp"
#include "roirel/detection_heads.hpp"
#include "roirel/parameter.hpp"
#include "roirel/relation_bias.hpp"
#include "roirel/relation_encoder.hpp"
#include "roirel/roi_tokenizer.hpp"
#include "roirel/scene_sim.hpp"

namespace roirel {

struct AblationSwitches {
  bool use_transformer = true;
  bool use_relations = true;  // attention bias P
  bool use_adaptive = true;   // decay matrix A
  bool use_prelim_supervision = true;
  bool freeze_density = false;
  bool fixed_eps = false;
  bool overlap_mask = true;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 0.05;
  /// Fractions of the total step count at which lr is multiplied by drop_factor.
  std::vector<double> drop_fractions{2.0 / 3.0, 11.0 / 12.0};
  double drop_factor = 0.1;
};

struct DataConfig {
  std::int64_t train_scenes = 60;
  std::int64_t eval_scenes = 20;
  std::int64_t epochs = 4;
};

struct AnalysisConfig {
  double outlier_confidence = 0.9;
  double conflict_threshold = 0.5;
  double chamfer_min_score = 0.5;
  std::vector<std::pair<int, int>> chamfer_pairs{{kShip, kSmallVehicle}, {kShip, kHarbor}};
};

struct ExperimentConfig {
  SceneConfig scene;
  TokenizerConfig tokenizer;
  EncoderConfig encoder;
  HeadConfig head;
  AdaptiveParams adaptive;
  DensityReading density_reading = DensityReading::kNeighborArea;
  RelationOptions relation;
  /// Length dividing dx, dy and dist; 0 means the scene extent. The default
  /// keeps scene units, where a linear bias can express locality within the
  /// short training budget.
  double relation_extent = 1.0;
  AblationSwitches ablation;
  OptimizerConfig optimizer;
  DataConfig data;
  AnalysisConfig analysis;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json(bool include_seed = true) const;
  /// Strict: unknown keys are errors. Missing keys keep their defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// Hash of everything except the seed, so matched-seed runs of one arm
  /// share a hash.
  std::string hash() const;
  /// Learning rate for step `step` (0-based) of `total`.
  double lr_at(std::int64_t step, std::int64_t total) const;
  AdaptiveOptions adaptive_options() const;
};

enum class Split { kTrain, kEval };

/// Seed of scene `index` in a split; train and eval ranges never overlap.
std::uint64_t scene_seed(std::uint64_t master_seed, Split split, std::int64_t index);
std::vector<Scene> make_scenes(const ExperimentConfig& config, Split split);

/// Parameters and forward pass of the two-phase detector.
class Model {
 public:
  explicit Model(const ExperimentConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  struct Forward {
    HeadOutput prelim;
    std::optional<HeadOutput> final_out;
    std::vector<OrientedBox> prelim_boxes;  // decoded, constant downstream
    Tensor decay;                           // empty when A is off
    // Box-derived encoder inputs. They are leaves so their (zero) gradients
    // can be inspected.
    std::optional<Var> positional;
    std::optional<Var> relations;
    std::optional<Var> decay_input;
  };

  /// `fixed_boxes` replaces the decoded preliminary boxes, which gradient
  /// checks need to hold the box-derived inputs still.
  Forward forward(Graph& g, const Scene& scene, Mode mode, Rng& rng,
                  const std::vector<OrientedBox>* fixed_boxes = nullptr) const;
  /// Eval-mode detections, one per proposal.
  std::vector<ScoredBox> detect(const Scene& scene, std::vector<int>* predicted = nullptr) const;

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const ExperimentConfig& config() const { return config_; }

 private:
  ExperimentConfig config_;
  ParameterStore store_;
  HeadParams prelim_;
  TokenizerParams tokenizer_;
  std::vector<EncoderLayerParams> encoder_;
  HeadParams final_;
};

struct Metrics {
  std::size_t foreground = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  ApReport ap;
  ConflictReport conflict;
  OutlierReport outliers;
  std::vector<ChamferReport> chamfer;

  nlohmann::json to_json() const;
};

struct EvalOutput {
  Metrics metrics;
  std::vector<SceneDetections> detections;
};

/// Throws ConfigError for an empty scene list or scenes generated under a
/// different scene configuration.
EvalOutput evaluate(const Model& model, std::span<const Scene> scenes);

struct RunResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  Metrics metrics;
  std::vector<double> loss_curve;  // mean training loss per epoch
  double initial_loss = 0.0;       // mean loss over the train scenes before any step
  std::int64_t steps = 0;
  double wall_clock_s = 0.0;
  std::string checkpoint;

  /// Wall-clock time is left out unless asked for, so result files are
  /// reproducible byte for byte.
  nlohmann::json to_json(bool include_timing = false) const;
};

struct TrainOptions {
  /// Written after training when non-empty.
  std::filesystem::path checkpoint_path;
  /// Where a divergence dump goes; empty means the message only.
  std::filesystem::path diagnostics_dir;
  std::function<void(const std::string&)> log;
  /// Precomputed scene sets (must match make_scenes for the config).
  const std::vector<Scene>* train_scenes = nullptr;
  const std::vector<Scene>* eval_scenes = nullptr;
  /// Test hook: multiply the loss before backward (non-finite values force divergence).
  double loss_scale = 1.0;
};

struct TrainOutput {
  RunResult result;
  EvalOutput eval;
};

/// Throws DivergenceError when the loss turns non-finite.
TrainOutput train(const ExperimentConfig& config, const TrainOptions& options = {},
                  Model* model_out = nullptr);

/// Rebuilds the model from a checkpoint manifest and evaluates it.
EvalOutput evaluate_checkpoint(const std::filesystem::path& manifest, std::span<const Scene> scenes,
                               ExperimentConfig* config_out = nullptr);
void save_model(const std::filesystem::path& manifest, const Model& model);

struct Arm {
  std::string name;
  /// JSON merge patch applied to the base config.
  nlohmann::json overrides = nlohmann::json::object();
};

std::vector<Arm> component_arms();      // baseline, +T, +T+P, +T+A, +T+P+A
std::vector<Arm> design_choice_arms();  // full, -scale, -overlap, -density
std::vector<Arm> supervision_arms();    // full, no preliminary supervision
/// Preset by name: "components", "design", "supervision".
std::vector<Arm> arm_preset(const std::string& name);

struct ArmSummary {
  std::string name;
  std::string config_hash;
  std::vector<RunResult> runs;  // one per seed, in seed order

  double mean(const std::function<double(const RunResult&)>& metric) const;
  double stddev(const std::function<double(const RunResult&)>& metric) const;
};

struct GridResult {
  std::vector<std::uint64_t> seeds;
  std::vector<ArmSummary> arms;

  const ArmSummary& arm(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct GridOptions {
  std::function<void(const std::string&)> log;
};

ExperimentConfig apply_arm(const ExperimentConfig& base, const Arm& arm);

/// Every arm is trained on the same seeds; scenes are shared between arms.
GridResult run_ablation_grid(const ExperimentConfig& base, std::span<const Arm> arms,
                             std::span<const std::uint64_t> seeds, const GridOptions& options = {});

}  // namespace roirel
