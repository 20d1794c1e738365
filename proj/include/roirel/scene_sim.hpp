#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "roirel/detection_heads.hpp"
#include "roirel/geometry.hpp"
#include "roirel/rng.hpp"
#include "roirel/tensor.hpp"

namespace roirel {

/// Synthetic catalog. Indices are stable: they are the class ids used by
/// every head, file and report. Background is kNumClasses.
enum ClassId : int {
  kPlane = 0,
  kShip,
  kHarbor,
  kSmallVehicle,
  kLargeVehicle,
  kTennisCourt,
  kStorageTank,
  kHelicopter,
  kNumClasses
};

std::string class_name(int id);
/// Inverse of class_name; -1 when unknown.
int class_from_name(const std::string& name);

/// Layout zones. Each one fixes which classes are plausible inside it.
enum class ZoneType : int { kHarbor = 0, kParking, kAirfield, kSports, kTankFarm, kCount };

std::string zone_name(ZoneType z);
/// Classes a zone of this type may contain.
std::vector<int> zone_allowed_classes(ZoneType z);

struct SizePrior {
  double median_w = 1.0;  // long side
  double median_h = 1.0;
  double log_sd = 0.1;
};

struct ProposalNoise {
  std::int64_t min_per_object = 1;
  std::int64_t max_per_object = 3;
  double center_sd = 0.08;  // fraction of w (along x) and h (along y)
  double size_log_sd = 0.08;
  double angle_sd = 0.05;
  /// Background proposals as a fraction of object-derived proposals.
  double background_fraction = 0.2;
  /// Rejection bound on background IoU with any ground truth.
  double background_max_iou = 0.3;
};

struct SceneConfig {
  double extent = 48.0;
  std::array<SizePrior, kNumClasses> sizes{};
  std::int64_t min_zones = 4;
  std::int64_t max_zones = 6;
  double zone_separation = 12.0;
  double zone_margin = 5.0;
  double ambiguity_rate = 0.3;
  std::int64_t feature_dim = 64;
  double feature_noise = 0.1;
  ProposalNoise noise{};
  /// Classes each one may be mistaken for; an ambiguous object shows one of
  /// them, picked uniformly.
  std::array<std::vector<int>, kNumClasses> confusable{};

  SceneConfig();
  void validate() const;
  nlohmann::json to_json() const;
  static SceneConfig from_json(const nlohmann::json& j, const std::string& path = "scene");
  std::string hash() const;
};

struct Zone {
  ZoneType type = ZoneType::kHarbor;
  Point2 center;
  double radius = 0.0;
};

struct GroundTruthObject {
  OrientedBox box;
  int cls = 0;
  int zone = -1;
  /// Whether this object's appearance is drawn from a confusable class.
  bool ambiguous = false;
  /// Class whose prototype the object shows (cls unless ambiguous).
  int appearance = 0;
};

struct Scene {
  std::uint64_t seed = 0;
  std::string config_hash;
  double extent = 0.0;
  std::vector<Zone> zones;
  std::vector<GroundTruthObject> ground_truth;
  std::vector<OrientedBox> proposals;
  Tensor features;  // N x feature_dim

  std::vector<OrientedBox> gt_boxes() const;
  std::vector<int> gt_classes() const;
  nlohmann::json to_json() const;
  static Scene from_json(const nlohmann::json& j);
};

/// Unit-norm random prototypes, one per class plus background (last row).
class PrototypeBank {
 public:
  PrototypeBank(std::size_t feature_dim, std::uint64_t seed);
  std::span<const double> prototype(int cls) const { return prototypes_.row(static_cast<std::size_t>(cls)); }
  std::size_t dim() const { return prototypes_.cols(); }
  const Tensor& matrix() const { return prototypes_; }

 private:
  Tensor prototypes_;
};

/// Layout only: zones and ground truth. Deterministic in (config, seed).
Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Jittered copies of each ground-truth box plus background boxes,
/// shuffled so order says nothing about origin.
std::vector<OrientedBox> perturb_proposals(const Scene& scene, Rng& rng, const ProposalNoise& noise);

/// prototype(class) + noise per proposal. Foreground proposals take the
/// prototype of their object's appearance class (its confusable class when
/// the object is ambiguous); background proposals take the background one.
Tensor synthesize_features(const Scene& scene, std::span<const OrientedBox> proposals,
                           const TargetAssignment& assignment, const SceneConfig& config,
                           const PrototypeBank& bank, Rng& rng);

/// generate_scene + perturb_proposals + assignment + synthesize_features.
Scene make_scene(const SceneConfig& config, const PrototypeBank& bank, std::uint64_t seed);

/// Index of the zone whose disc contains `p` (nearest center on ties), or -1.
int zone_at(const std::vector<Zone>& zones, Point2 p);

}  // namespace roirel
