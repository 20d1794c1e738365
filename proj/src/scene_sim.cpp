#include "roirel/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "roirel/errors.hpp"
#include "roirel/json_config.hpp"

namespace roirel {

namespace {

constexpr double kPi = std::numbers::pi;

const std::array<const char*, kNumClasses> kClassNames = {
    "plane", "ship", "harbor", "small-vehicle", "large-vehicle",
    "tennis-court", "storage-tank", "helicopter"};

const std::array<const char*, static_cast<int>(ZoneType::kCount)> kZoneNames = {
    "harbor", "parking", "airfield", "sports", "tank-farm"};

struct Frame {
  Point2 origin;
  double theta;
  Point2 at(double along, double across) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {origin.x + along * c - across * s, origin.y + along * s + across * c};
  }
};

class LayoutBuilder {
 public:
  LayoutBuilder(const SceneConfig& config, Rng& rng, Scene& scene)
      : config_(config), rng_(rng), scene_(scene) {}

  OrientedBox sample_box(int cls, Point2 center, double alpha) {
    const SizePrior& s = config_.sizes[static_cast<std::size_t>(cls)];
    const double w = s.median_w * std::exp(rng_.normal(0.0, s.log_sd));
    const double h = s.median_h * std::exp(rng_.normal(0.0, s.log_sd));
    return {center.x, center.y, w, h, alpha};
  }

  /// Adds the object when it lies inside the scene and touches nothing.
  bool place(int cls, const OrientedBox& box, int zone) {
    for (const Point2& p : corners(box)) {
      if (p.x < 0.0 || p.y < 0.0 || p.x > config_.extent || p.y > config_.extent) return false;
    }
    for (const auto& other : scene_.ground_truth) {
      if (center_distance(other.box, box) > 0.5 * (std::hypot(other.box.w(), other.box.h()) +
                                                  std::hypot(box.w(), box.h())))
        continue;
      if (intersection_area(other.box, box) > 0.0) return false;
    }
    GroundTruthObject obj;
    obj.box = box;
    obj.cls = cls;
    obj.zone = zone;
    const auto& partners = config_.confusable[static_cast<std::size_t>(cls)];
    obj.ambiguous = !partners.empty() && rng_.bernoulli(config_.ambiguity_rate);
    obj.appearance = cls;
    if (obj.ambiguous) {
      obj.appearance = partners[static_cast<std::size_t>(
          rng_.uniform_int(0, static_cast<std::int64_t>(partners.size()) - 1))];
    }
    scene_.ground_truth.push_back(obj);
    return true;
  }

  void harbor(const Frame& f, int zone) {
    place(kHarbor, sample_box(kHarbor, f.origin, f.theta), zone);
    const double half_len = 0.5 * config_.sizes[kHarbor].median_w;
    const auto ships = rng_.uniform_int(3, 6);
    for (std::int64_t k = 0; k < ships; ++k) {
      const double side = rng_.bernoulli(0.5) ? 1.0 : -1.0;
      const double along = rng_.uniform(-half_len * 0.9, half_len * 0.9);
      OrientedBox probe = sample_box(kShip, f.origin, f.theta + kPi / 2 + rng_.normal(0.0, 0.1));
      const double across =
          side * (0.5 * config_.sizes[kHarbor].median_h + 0.5 * probe.w() + rng_.uniform(0.1, 0.5));
      const Point2 c = f.at(along, across);
      place(kShip, OrientedBox(c.x, c.y, probe.w(), probe.h(), probe.alpha()), zone);
    }
    const auto moored = rng_.uniform_int(0, 2);
    for (std::int64_t k = 0; k < moored; ++k) {
      const double ang = rng_.uniform(-kPi, kPi);
      const double r = rng_.uniform(2.5, 4.0);
      const Point2 c{f.origin.x + r * std::cos(ang), f.origin.y + r * std::sin(ang)};
      place(kShip, sample_box(kShip, c, rng_.uniform(-kPi / 2, kPi / 2)), zone);
    }
  }

  void parking(const Frame& f, int zone) {
    const auto rows = rng_.uniform_int(2, 3);
    const auto cols = rng_.uniform_int(3, 5);
    const double pitch_along = 0.85;
    const double pitch_across = 1.7;
    const double along0 = -0.5 * pitch_along * static_cast<double>(cols - 1);
    const double across0 = -0.5 * pitch_across * static_cast<double>(rows - 1);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < cols; ++c) {
        if (!rng_.bernoulli(0.8)) continue;
        const Point2 p = f.at(along0 + pitch_along * static_cast<double>(c) + rng_.normal(0.0, 0.04),
                              across0 + pitch_across * static_cast<double>(r) + rng_.normal(0.0, 0.05));
        place(kSmallVehicle, sample_box(kSmallVehicle, p, f.theta + kPi / 2 + rng_.normal(0.0, 0.05)),
              zone);
      }
    }
    const auto trucks = rng_.uniform_int(0, 2);
    const double truck_across = across0 + pitch_across * static_cast<double>(rows) + 0.2;
    for (std::int64_t k = 0; k < trucks; ++k) {
      const Point2 p = f.at(-1.3 + 2.6 * static_cast<double>(k), truck_across);
      place(kLargeVehicle, sample_box(kLargeVehicle, p, f.theta + rng_.normal(0.0, 0.05)), zone);
    }
  }

  void airfield(const Frame& f, int zone) {
    const auto planes = rng_.uniform_int(2, 4);
    const double pitch = 3.1;
    const double along0 = -0.5 * pitch * static_cast<double>(planes - 1);
    const double heading = f.theta + rng_.normal(0.0, 0.05);
    for (std::int64_t k = 0; k < planes; ++k) {
      const Point2 p = f.at(along0 + pitch * static_cast<double>(k), 0.0);
      place(kPlane, sample_box(kPlane, p, heading + rng_.normal(0.0, 0.03)), zone);
    }
    if (rng_.bernoulli(0.5)) {
      const Point2 p = f.at(rng_.uniform(-1.5, 1.5), 3.0);
      place(kHelicopter, sample_box(kHelicopter, p, rng_.uniform(-kPi / 2, kPi / 2)), zone);
    }
  }

  void sports(const Frame& f, int zone) {
    const auto courts = rng_.uniform_int(2, 3);
    const double pitch = 1.35;
    const double across0 = -0.5 * pitch * static_cast<double>(courts - 1);
    for (std::int64_t k = 0; k < courts; ++k) {
      const Point2 p = f.at(0.0, across0 + pitch * static_cast<double>(k));
      place(kTennisCourt, sample_box(kTennisCourt, p, f.theta + rng_.normal(0.0, 0.02)), zone);
    }
  }

  void tank_farm(const Frame& f, int zone) {
    const auto tanks = rng_.uniform_int(2, 4);
    for (std::int64_t k = 0; k < tanks; ++k) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const double ang = rng_.uniform(-kPi, kPi);
        const double r = rng_.uniform(0.0, 2.5);
        const Point2 p{f.origin.x + r * std::cos(ang), f.origin.y + r * std::sin(ang)};
        if (place(kStorageTank, sample_box(kStorageTank, p, rng_.uniform(-kPi / 2, kPi / 2)), zone))
          break;
      }
    }
  }

 private:
  const SceneConfig& config_;
  Rng& rng_;
  Scene& scene_;
};

nlohmann::json box_json(const OrientedBox& b) {
  return nlohmann::json::array({b.x(), b.y(), b.w(), b.h(), b.alpha()});
}

OrientedBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 5) throw ConfigError("box must be [x, y, w, h, alpha]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(),
          j[4].get<double>()};
}

}  // namespace

std::string class_name(int id) {
  if (id >= 0 && id < kNumClasses) return kClassNames[static_cast<std::size_t>(id)];
  if (id == kNumClasses) return "background";
  return "unknown";
}

int class_from_name(const std::string& name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (name == kClassNames[static_cast<std::size_t>(i)]) return i;
  if (name == "background") return kNumClasses;
  return -1;
}

std::string zone_name(ZoneType z) { return kZoneNames[static_cast<std::size_t>(z)]; }

std::vector<int> zone_allowed_classes(ZoneType z) {
  switch (z) {
    case ZoneType::kHarbor: return {kShip, kHarbor};
    case ZoneType::kParking: return {kSmallVehicle, kLargeVehicle};
    case ZoneType::kAirfield: return {kPlane, kHelicopter};
    case ZoneType::kSports: return {kTennisCourt};
    case ZoneType::kTankFarm: return {kStorageTank};
    case ZoneType::kCount: break;
  }
  return {};
}

SceneConfig::SceneConfig() {
  sizes[kPlane] = {2.6, 2.4, 0.08};
  sizes[kShip] = {1.4, 0.55, 0.12};
  sizes[kHarbor] = {5.0, 1.2, 0.1};
  sizes[kSmallVehicle] = {1.3, 0.6, 0.12};
  sizes[kLargeVehicle] = {2.2, 0.95, 0.1};
  sizes[kTennisCourt] = {2.3, 1.0, 0.08};
  sizes[kStorageTank] = {1.3, 1.3, 0.1};
  sizes[kHelicopter] = {1.8, 1.6, 0.08};
  confusable[kPlane] = {kShip};
  confusable[kShip] = {kPlane, kSmallVehicle};
  confusable[kSmallVehicle] = {kShip};
  confusable[kTennisCourt] = {kLargeVehicle};
  confusable[kLargeVehicle] = {kTennisCourt};
}

void SceneConfig::validate() const {
  require(extent > 0.0, "scene.extent", "must be > 0");
  require(ambiguity_rate >= 0.0 && ambiguity_rate < 1.0, "scene.ambiguity_rate", "must be in [0, 1)");
  require(feature_dim > 0, "scene.feature_dim", "must be > 0");
  require(feature_noise >= 0.0, "scene.feature_noise", "must be >= 0");
  require(min_zones >= 3 && min_zones <= max_zones, "scene.min_zones",
          "need 3 <= min_zones <= max_zones");
  require(zone_separation > 0.0, "scene.zone_separation", "must be > 0");
  require(zone_margin >= 0.0 && 2.0 * zone_margin < extent, "scene.zone_margin",
          "must leave room inside the extent");
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const SizePrior& s = sizes[c];
    require(s.median_w > 0.0 && s.median_h > 0.0 && s.log_sd >= 0.0,
            "scene.sizes." + class_name(static_cast<int>(c)), "size parameters must be positive");
    for (int conf : confusable[c]) {
      require(conf >= 0 && conf < kNumClasses && conf != static_cast<int>(c),
              "scene.confusable." + class_name(static_cast<int>(c)), "must name other classes");
    }
  }
  require(noise.min_per_object >= 1 && noise.min_per_object <= noise.max_per_object,
          "scene.noise.min_per_object", "need 1 <= min <= max");
  require(noise.center_sd >= 0.0 && noise.size_log_sd >= 0.0 && noise.angle_sd >= 0.0,
          "scene.noise", "noise scales must be >= 0");
  require(noise.background_fraction >= 0.0, "scene.noise.background_fraction", "must be >= 0");
  require(noise.background_max_iou > 0.0 && noise.background_max_iou <= 1.0,
          "scene.noise.background_max_iou", "must be in (0, 1]");
}

nlohmann::json SceneConfig::to_json() const {
  nlohmann::json sizes_j = nlohmann::json::object();
  nlohmann::json conf_j = nlohmann::json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const SizePrior& s = sizes[static_cast<std::size_t>(c)];
    sizes_j[class_name(c)] = {{"median_w", s.median_w}, {"median_h", s.median_h}, {"log_sd", s.log_sd}};
    nlohmann::json partners = nlohmann::json::array();
    for (int other : confusable[static_cast<std::size_t>(c)]) partners.push_back(class_name(other));
    conf_j[class_name(c)] = partners;
  }
  return {{"extent", extent},
          {"sizes", sizes_j},
          {"min_zones", min_zones},
          {"max_zones", max_zones},
          {"zone_separation", zone_separation},
          {"zone_margin", zone_margin},
          {"ambiguity_rate", ambiguity_rate},
          {"feature_dim", feature_dim},
          {"feature_noise", feature_noise},
          {"confusable", conf_j},
          {"noise",
           {{"min_per_object", noise.min_per_object},
            {"max_per_object", noise.max_per_object},
            {"center_sd", noise.center_sd},
            {"size_log_sd", noise.size_log_sd},
            {"angle_sd", noise.angle_sd},
            {"background_fraction", noise.background_fraction},
            {"background_max_iou", noise.background_max_iou}}}};
}

SceneConfig SceneConfig::from_json(const nlohmann::json& j, const std::string& path) {
  SceneConfig c;
  StrictReader r(j, path);
  r.read("extent", c.extent);
  r.read("min_zones", c.min_zones);
  r.read("max_zones", c.max_zones);
  r.read("zone_separation", c.zone_separation);
  r.read("zone_margin", c.zone_margin);
  r.read("ambiguity_rate", c.ambiguity_rate);
  r.read("feature_dim", c.feature_dim);
  r.read("feature_noise", c.feature_noise);
  {
    StrictReader s = r.child("sizes");
    for (int k = 0; k < kNumClasses; ++k) {
      StrictReader one = s.child(class_name(k));
      SizePrior& p = c.sizes[static_cast<std::size_t>(k)];
      one.read("median_w", p.median_w);
      one.read("median_h", p.median_h);
      one.read("log_sd", p.log_sd);
      one.finish();
    }
    s.finish();
  }
  if (const auto* conf = r.raw("confusable")) {
    if (!conf->is_object()) throw ConfigError("config section '" + r.field("confusable") + "' must be an object");
    for (auto it = conf->begin(); it != conf->end(); ++it) {
      const int from = class_from_name(it.key());
      if (from < 0 || from >= kNumClasses)
        throw ConfigError("unknown config field '" + r.field("confusable") + "." + it.key() + "'");
      const std::string field = r.field("confusable") + "." + it.key();
      if (!it->is_array()) throw ConfigError("invalid value for config field '" + field + "'");
      auto& partners = c.confusable[static_cast<std::size_t>(from)];
      partners.clear();
      for (const auto& name : *it) {
        const int to = name.is_string() ? class_from_name(name.get<std::string>()) : -1;
        if (to < 0 || to >= kNumClasses) throw ConfigError("invalid value for config field '" + field + "'");
        partners.push_back(to);
      }
    }
  }
  {
    StrictReader n = r.child("noise");
    n.read("min_per_object", c.noise.min_per_object);
    n.read("max_per_object", c.noise.max_per_object);
    n.read("center_sd", c.noise.center_sd);
    n.read("size_log_sd", c.noise.size_log_sd);
    n.read("angle_sd", c.noise.angle_sd);
    n.read("background_fraction", c.noise.background_fraction);
    n.read("background_max_iou", c.noise.background_max_iou);
    n.finish();
  }
  r.finish();
  c.validate();
  return c;
}

std::string SceneConfig::hash() const { return config_hash(to_json()); }

std::vector<OrientedBox> Scene::gt_boxes() const {
  std::vector<OrientedBox> out;
  out.reserve(ground_truth.size());
  for (const auto& o : ground_truth) out.push_back(o.box);
  return out;
}

std::vector<int> Scene::gt_classes() const {
  std::vector<int> out;
  out.reserve(ground_truth.size());
  for (const auto& o : ground_truth) out.push_back(o.cls);
  return out;
}

nlohmann::json Scene::to_json() const {
  nlohmann::json zones_j = nlohmann::json::array();
  for (const auto& z : zones) {
    zones_j.push_back({{"type", zone_name(z.type)},
                       {"center", {z.center.x, z.center.y}},
                       {"radius", z.radius}});
  }
  nlohmann::json gt_j = nlohmann::json::array();
  for (const auto& o : ground_truth) {
    gt_j.push_back({{"box", box_json(o.box)},
                    {"class", class_name(o.cls)},
                    {"zone", o.zone},
                    {"ambiguous", o.ambiguous},
                    {"appearance", class_name(o.appearance)}});
  }
  nlohmann::json props = nlohmann::json::array();
  for (const auto& b : proposals) props.push_back(box_json(b));
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t i = 0; i < features.rows() && features.size() > 0; ++i) {
    const auto row = features.row(i);
    feats.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"schema", "roirel-scene-v1"},
          {"seed", seed},
          {"config_hash", config_hash},
          {"extent", extent},
          {"zones", zones_j},
          {"ground_truth", gt_j},
          {"proposals", props},
          {"features", feats}};
}

Scene Scene::from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "roirel-scene-v1") throw ConfigError("not a roirel-scene-v1 document");
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.config_hash = j.at("config_hash").get<std::string>();
  s.extent = j.at("extent").get<double>();
  for (const auto& z : j.at("zones")) {
    Zone zone;
    const auto type = z.at("type").get<std::string>();
    bool found = false;
    for (int t = 0; t < static_cast<int>(ZoneType::kCount); ++t) {
      if (zone_name(static_cast<ZoneType>(t)) == type) {
        zone.type = static_cast<ZoneType>(t);
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown zone type '" + type + "'");
    zone.center = {z.at("center")[0].get<double>(), z.at("center")[1].get<double>()};
    zone.radius = z.at("radius").get<double>();
    s.zones.push_back(zone);
  }
  for (const auto& o : j.at("ground_truth")) {
    GroundTruthObject obj;
    obj.box = box_from_json(o.at("box"));
    obj.cls = class_from_name(o.at("class").get<std::string>());
    if (obj.cls < 0 || obj.cls >= kNumClasses) throw ConfigError("unknown class in ground truth");
    obj.zone = o.at("zone").get<int>();
    obj.ambiguous = o.at("ambiguous").get<bool>();
    obj.appearance = class_from_name(o.at("appearance").get<std::string>());
    if (obj.appearance < 0 || obj.appearance >= kNumClasses) throw ConfigError("unknown appearance class");
    s.ground_truth.push_back(obj);
  }
  for (const auto& b : j.at("proposals")) s.proposals.push_back(box_from_json(b));
  const auto& feats = j.at("features");
  if (!feats.empty()) {
    const std::size_t d = feats.at(0).size();
    s.features = Tensor::matrix(feats.size(), d);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      if (feats[i].size() != d) throw ConfigError("ragged feature rows");
      for (std::size_t c = 0; c < d; ++c) s.features.at(i, c) = feats[i][c].get<double>();
    }
  }
  if (s.features.size() > 0 && s.features.rows() != s.proposals.size()) {
    throw ConfigError("feature rows do not match proposal count");
  }
  return s;
}

PrototypeBank::PrototypeBank(std::size_t feature_dim, std::uint64_t seed) {
  Rng rng = Rng(seed).split("prototypes");
  prototypes_ = Tensor::matrix(kNumClasses + 1, feature_dim);
  for (std::size_t c = 0; c <= kNumClasses; ++c) {
    double norm = 0.0;
    for (std::size_t k = 0; k < feature_dim; ++k) {
      const double v = rng.normal();
      prototypes_.at(c, k) = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < feature_dim; ++k) prototypes_.at(c, k) /= norm;
  }
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  Scene scene;
  scene.seed = seed;
  scene.config_hash = config.hash();
  scene.extent = config.extent;
  Rng rng = Rng(seed).split("layout");

  std::vector<ZoneType> types{ZoneType::kHarbor, ZoneType::kParking, ZoneType::kAirfield};
  const auto count = rng.uniform_int(config.min_zones, config.max_zones);
  while (static_cast<std::int64_t>(types.size()) < count) {
    types.push_back(static_cast<ZoneType>(rng.uniform_int(0, static_cast<int>(ZoneType::kCount) - 1)));
  }

  std::vector<Point2> centers;
  for (std::size_t z = 0; z < types.size(); ++z) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const Point2 p{rng.uniform(config.zone_margin, config.extent - config.zone_margin),
                     rng.uniform(config.zone_margin, config.extent - config.zone_margin)};
      placed = std::all_of(centers.begin(), centers.end(), [&](const Point2& q) {
        return std::hypot(p.x - q.x, p.y - q.y) >= config.zone_separation;
      });
      if (placed) centers.push_back(p);
    }
    if (!placed) {
      types.resize(centers.size());
      break;
    }
  }

  LayoutBuilder builder(config, rng, scene);
  for (std::size_t z = 0; z < types.size(); ++z) {
    const Frame frame{centers[z], rng.uniform(-kPi / 2, kPi / 2)};
    const int zone = static_cast<int>(z);
    switch (types[z]) {
      case ZoneType::kHarbor: builder.harbor(frame, zone); break;
      case ZoneType::kParking: builder.parking(frame, zone); break;
      case ZoneType::kAirfield: builder.airfield(frame, zone); break;
      case ZoneType::kSports: builder.sports(frame, zone); break;
      case ZoneType::kTankFarm: builder.tank_farm(frame, zone); break;
      case ZoneType::kCount: break;
    }
    Zone info;
    info.type = types[z];
    info.center = centers[z];
    for (const auto& obj : scene.ground_truth) {
      if (obj.zone != zone) continue;
      info.radius = std::max(info.radius, std::hypot(obj.box.x() - info.center.x, obj.box.y() - info.center.y) +
                                              0.5 * std::hypot(obj.box.w(), obj.box.h()));
    }
    info.radius += 0.5;
    scene.zones.push_back(info);
  }
  return scene;
}

std::vector<OrientedBox> perturb_proposals(const Scene& scene, Rng& rng, const ProposalNoise& noise) {
  std::vector<OrientedBox> out;
  for (const auto& obj : scene.ground_truth) {
    const auto copies = rng.uniform_int(noise.min_per_object, noise.max_per_object);
    const OrientedBox& b = obj.box;
    for (std::int64_t k = 0; k < copies; ++k) {
      const double dx = rng.normal(0.0, noise.center_sd) * b.w();
      const double dy = rng.normal(0.0, noise.center_sd) * b.h();
      const double c = std::cos(b.alpha()), s = std::sin(b.alpha());
      out.emplace_back(b.x() + c * dx - s * dy, b.y() + s * dx + c * dy,
                       b.w() * std::exp(rng.normal(0.0, noise.size_log_sd)),
                       b.h() * std::exp(rng.normal(0.0, noise.size_log_sd)),
                       b.alpha() + rng.normal(0.0, noise.angle_sd));
    }
  }
  const auto object_count = out.size();
  const auto background =
      static_cast<std::size_t>(std::llround(noise.background_fraction * static_cast<double>(object_count)));
  const auto gt = scene.gt_boxes();
  for (std::size_t k = 0; k < background; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      // Unused draw; dropping it would change every generated scene set.
      rng.uniform_int(0, kNumClasses - 1);
      const double side = std::exp(rng.normal(0.0, 0.4));
      const double aspect = std::exp(rng.normal(0.0, 0.3));
      const OrientedBox cand(rng.uniform(0.0, scene.extent), rng.uniform(0.0, scene.extent),
                             side * std::sqrt(aspect), side / std::sqrt(aspect),
                             rng.uniform(-kPi / 2, kPi / 2));
      const bool clear = std::all_of(gt.begin(), gt.end(), [&](const OrientedBox& g) {
        return rotated_iou(cand, g) < noise.background_max_iou;
      });
      if (clear) {
        out.push_back(cand);
        break;
      }
    }
  }
  // Fisher-Yates with our own generator for cross-platform determinism.
  for (std::size_t i = out.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(out[i - 1], out[j]);
  }
  return out;
}

Tensor synthesize_features(const Scene& scene, std::span<const OrientedBox> proposals,
                           const TargetAssignment& assignment, const SceneConfig& config,
                           const PrototypeBank& bank, Rng& rng) {
  const std::size_t n = proposals.size();
  const std::size_t d = bank.dim();
  if (assignment.labels.size() != n) {
    throw std::invalid_argument("synthesize_features: assignment does not match proposals");
  }
  Tensor out = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    int proto = kNumClasses;
    if (assignment.gt_index[i] >= 0) {
      proto = scene.ground_truth[static_cast<std::size_t>(assignment.gt_index[i])].appearance;
    }
    const auto p = bank.prototype(proto);
    for (std::size_t k = 0; k < d; ++k) out.at(i, k) = p[k] + rng.normal(0.0, config.feature_noise);
  }
  return out;
}

Scene make_scene(const SceneConfig& config, const PrototypeBank& bank, std::uint64_t seed) {
  Scene scene = generate_scene(config, seed);
  const Rng root(seed);
  Rng proposal_rng = root.split("proposals");
  scene.proposals = perturb_proposals(scene, proposal_rng, config.noise);
  const auto assignment = assign_targets(scene.proposals, scene.gt_boxes(), scene.gt_classes(), kNumClasses);
  Rng feature_rng = root.split("features");
  scene.features = synthesize_features(scene, scene.proposals, assignment, config, bank, feature_rng);
  return scene;
}

int zone_at(const std::vector<Zone>& zones, Point2 p) {
  int best = -1;
  double best_d = 0.0;
  for (std::size_t z = 0; z < zones.size(); ++z) {
    const double d = std::hypot(p.x - zones[z].center.x, p.y - zones[z].center.y);
    if (d <= zones[z].radius && (best < 0 || d < best_d)) {
      best = static_cast<int>(z);
      best_d = d;
    }
  }
  return best;
}

}  // namespace roirel
