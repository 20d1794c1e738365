#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "roirel/geometry.hpp"
#include "roirel/scene_sim.hpp"

namespace roirel {

/// One scored, labelled box. label == kNumClasses means background.
struct ScoredBox {
  OrientedBox box;
  int label = 0;
  double score = 0.0;

  bool is_background() const { return label >= kNumClasses; }
};

/// Everything the reports need about one scene.
struct SceneDetections {
  std::uint64_t seed = 0;
  std::vector<Zone> zones;
  std::vector<OrientedBox> gt_boxes;
  std::vector<int> gt_classes;
  std::vector<ScoredBox> detections;
};

/// Ground truth turned into unit-score detections.
SceneDetections ground_truth_as_detections(const Scene& scene);

struct ClassOutliers {
  int cls = 0;
  std::size_t total = 0;  // detections above the confidence threshold
  double mean_scale = 0.0;
  /// nullopt when fewer than two detections qualify.
  std::optional<double> std_scale;
  std::size_t outliers = 0;

  bool flagged() const { return !std_scale.has_value(); }
};

struct OutlierReport {
  double confidence_min = 0.9;
  std::vector<ClassOutliers> classes;  // one per foreground class, by id

  std::size_t total_outliers() const;
  nlohmann::json to_json() const;
  std::string to_table() const;
  /// class,total,mean_scale,std_scale,outliers
  std::string to_csv() const;
};

/// Pools detections over all scenes. Scale is sqrt(w*h); a detection is an
/// outlier when it is more than three (population) standard deviations from
/// its class mean.
OutlierReport scale_outliers(std::span<const SceneDetections> scenes, double confidence_min = 0.9);

struct ChamferReport {
  int class_a = 0;
  int class_b = 0;
  /// Per scene, nullopt where one of the classes has no detection.
  std::vector<std::optional<double>> per_scene;
  std::optional<double> mean;
  std::size_t qualifying = 0;
  std::size_t skipped = 0;

  nlohmann::json to_json() const;
};

/// Chamfer distance between the detection centers of two classes, per scene
/// and averaged over scenes where both appear. Detections at or below
/// `min_score` are ignored.
ChamferReport category_chamfer(std::span<const SceneDetections> scenes, int class_a, int class_b,
                               double min_score = 0.0);

struct ConflictReport {
  double threshold = 0.5;
  std::size_t confident = 0;
  std::size_t conflicts = 0;
  /// conflicts / confident, 0 when nothing is confident.
  double rate = 0.0;

  nlohmann::json to_json() const;
};

/// Whether `label` may appear at `p` under the scene's zone layout. Points
/// outside every zone accept any class.
bool label_allowed(const std::vector<Zone>& zones, Point2 p, int label);

/// Confident foreground detections whose label the zone at their center
/// does not allow.
ConflictReport conflict_rate(std::span<const SceneDetections> scenes, double threshold = 0.5);

enum class ApInterpolation { kAllPoints, kVoc07ElevenPoint };

struct ApReport {
  double iou_threshold = 0.5;
  ApInterpolation interpolation = ApInterpolation::kAllPoints;
  /// Per foreground class; nullopt when the class has no ground truth.
  std::vector<std::optional<double>> per_class;
  std::optional<double> mean;

  nlohmann::json to_json() const;
};

/// Area under a precision/recall curve given in detection order.
double integrate_pr(std::span<const double> precision, std::span<const double> recall,
                    ApInterpolation interpolation);

ApReport average_precision(std::span<const SceneDetections> scenes, double iou_threshold = 0.5,
                           ApInterpolation interpolation = ApInterpolation::kAllPoints);

/// Detection files (schema roirel-detections-v1). Parsing errors name the
/// line for syntax problems and the field path for content problems.
nlohmann::json detections_to_json(std::span<const SceneDetections> scenes, const std::string& config_hash);
std::vector<SceneDetections> detections_from_json(const nlohmann::json& j, std::string* config_hash = nullptr);
std::vector<SceneDetections> parse_detections_text(const std::string& text, const std::string& source,
                                                   std::string* config_hash = nullptr);

}  // namespace roirel
