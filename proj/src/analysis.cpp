#include "roirel/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "roirel/errors.hpp"

namespace roirel {

namespace {

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json box_json(const OrientedBox& b) {
  return nlohmann::json::array({b.x(), b.y(), b.w(), b.h(), b.alpha()});
}

// Content checks for detection files. Each error names the offending path.
class FieldError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

const nlohmann::json& at(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw FieldError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw FieldError(path + "." + key + ": missing");
  return *it;
}

double number(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw FieldError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw FieldError(path + ": must be finite");
  return v;
}

OrientedBox parse_box(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 5) throw FieldError(path + ": expected [x, y, w, h, alpha]");
  double v[5];
  for (std::size_t k = 0; k < 5; ++k) v[k] = number(j[k], path + "[" + std::to_string(k) + "]");
  try {
    return {v[0], v[1], v[2], v[3], v[4]};
  } catch (const std::invalid_argument& e) {
    throw FieldError(path + ": " + e.what());
  }
}

int parse_label(const nlohmann::json& j, const std::string& path, bool allow_background) {
  if (!j.is_string()) throw FieldError(path + ": expected a class name");
  const int id = class_from_name(j.get<std::string>());
  if (id < 0 || (!allow_background && id >= kNumClasses)) {
    throw FieldError(path + ": unknown class '" + j.get<std::string>() + "'");
  }
  return id;
}

const nlohmann::json& array_at(const nlohmann::json& j, const std::string& key, const std::string& path) {
  const auto& a = at(j, key, path);
  if (!a.is_array()) throw FieldError(path + "." + key + ": expected an array");
  return a;
}

}  // namespace

SceneDetections ground_truth_as_detections(const Scene& scene) {
  SceneDetections s;
  s.seed = scene.seed;
  s.zones = scene.zones;
  s.gt_boxes = scene.gt_boxes();
  s.gt_classes = scene.gt_classes();
  for (const auto& o : scene.ground_truth) s.detections.push_back({o.box, o.cls, 1.0});
  return s;
}

std::size_t OutlierReport::total_outliers() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.outliers;
  return n;
}

nlohmann::json OutlierReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : classes) {
    rows.push_back({{"class", class_name(c.cls)},
                    {"total", c.total},
                    {"mean_scale", c.mean_scale},
                    {"std_scale", optional_json(c.std_scale)},
                    {"outliers", c.outliers},
                    {"flagged", c.flagged()}});
  }
  return {{"confidence_min", confidence_min}, {"total_outliers", total_outliers()}, {"classes", rows}};
}

std::string OutlierReport::to_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %7s %10s %10s %8s\n", "class", "total", "mean", "std", "outliers");
  out << line;
  for (const auto& c : classes) {
    const std::string sd = c.std_scale ? fmt(*c.std_scale) : "n/a";
    std::snprintf(line, sizeof line, "%-14s %7zu %10s %10s %8zu%s\n", class_name(c.cls).c_str(), c.total,
                  fmt(c.mean_scale).c_str(), sd.c_str(), c.outliers, c.flagged() ? "  (too few)" : "");
    out << line;
  }
  return out.str();
}

std::string OutlierReport::to_csv() const {
  std::ostringstream out;
  out << "class,total,mean_scale,std_scale,outliers\n";
  for (const auto& c : classes) {
    out << class_name(c.cls) << ',' << c.total << ',' << fmt(c.mean_scale, 6) << ','
        << (c.std_scale ? fmt(*c.std_scale, 6) : "") << ',' << c.outliers << '\n';
  }
  return out.str();
}

OutlierReport scale_outliers(std::span<const SceneDetections> scenes, double confidence_min) {
  OutlierReport report;
  report.confidence_min = confidence_min;
  std::vector<std::vector<double>> scales(kNumClasses);
  for (const auto& s : scenes) {
    for (const auto& d : s.detections) {
      if (d.is_background() || d.label < 0 || !(d.score > confidence_min)) continue;
      scales[static_cast<std::size_t>(d.label)].push_back(std::sqrt(d.box.w() * d.box.h()));
    }
  }
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& v = scales[static_cast<std::size_t>(c)];
    ClassOutliers row;
    row.cls = c;
    row.total = v.size();
    if (!v.empty()) row.mean_scale = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() >= 2) {
      double ss = 0.0;
      for (double x : v) ss += (x - row.mean_scale) * (x - row.mean_scale);
      const double sd = std::sqrt(ss / static_cast<double>(v.size()));
      row.std_scale = sd;
      for (double x : v)
        if (std::abs(x - row.mean_scale) > 3.0 * sd) ++row.outliers;
    }
    report.classes.push_back(row);
  }
  return report;
}

nlohmann::json ChamferReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : per_scene) per.push_back(optional_json(v));
  nlohmann::json j = {{"class_a", class_name(class_a)},
                      {"class_b", class_name(class_b)},
                      {"mean", optional_json(mean)},
                      {"qualifying_scenes", qualifying},
                      {"skipped_scenes", skipped},
                      {"per_scene", per}};
  if (!mean) j["note"] = "no qualifying scenes";
  return j;
}

ChamferReport category_chamfer(std::span<const SceneDetections> scenes, int class_a, int class_b,
                               double min_score) {
  ChamferReport r;
  r.class_a = class_a;
  r.class_b = class_b;
  double sum = 0.0;
  for (const auto& s : scenes) {
    std::vector<Point2> a, b;
    for (const auto& d : s.detections) {
      if (!(d.score > min_score)) continue;
      if (d.label == class_a) a.push_back(d.box.center());
      if (d.label == class_b) b.push_back(d.box.center());
    }
    const auto v = chamfer_distance(a, b);
    r.per_scene.push_back(v);
    if (v) {
      ++r.qualifying;
      sum += *v;
    } else {
      ++r.skipped;
    }
  }
  if (r.qualifying > 0) r.mean = sum / static_cast<double>(r.qualifying);
  return r;
}

nlohmann::json ConflictReport::to_json() const {
  return {{"threshold", threshold}, {"confident", confident}, {"conflicts", conflicts}, {"rate", rate}};
}

bool label_allowed(const std::vector<Zone>& zones, Point2 p, int label) {
  const int z = zone_at(zones, p);
  if (z < 0) return true;
  const auto allowed = zone_allowed_classes(zones[static_cast<std::size_t>(z)].type);
  return std::find(allowed.begin(), allowed.end(), label) != allowed.end();
}

ConflictReport conflict_rate(std::span<const SceneDetections> scenes, double threshold) {
  ConflictReport r;
  r.threshold = threshold;
  for (const auto& s : scenes) {
    for (const auto& d : s.detections) {
      if (d.is_background() || d.label < 0 || !(d.score > threshold)) continue;
      ++r.confident;
      if (!label_allowed(s.zones, d.box.center(), d.label)) ++r.conflicts;
    }
  }
  if (r.confident > 0) r.rate = static_cast<double>(r.conflicts) / static_cast<double>(r.confident);
  return r;
}

nlohmann::json ApReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (int c = 0; c < static_cast<int>(per_class.size()); ++c)
    per[class_name(c)] = optional_json(per_class[static_cast<std::size_t>(c)]);
  return {{"iou_threshold", iou_threshold},
          {"interpolation", interpolation == ApInterpolation::kAllPoints ? "all-points" : "voc07-11-point"},
          {"per_class", per},
          {"mean", optional_json(mean)}};
}

double integrate_pr(std::span<const double> precision, std::span<const double> recall,
                    ApInterpolation interpolation) {
  if (precision.size() != recall.size()) throw std::invalid_argument("integrate_pr: length mismatch");
  if (precision.empty()) return 0.0;
  if (interpolation == ApInterpolation::kVoc07ElevenPoint) {
    double ap = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double best = 0.0;
      for (std::size_t k = 0; k < recall.size(); ++k)
        if (recall[k] >= r - 1e-12) best = std::max(best, precision[k]);
      ap += best / 11.0;
    }
    return ap;
  }
  // Precision envelope, then sum of rectangles at each recall step.
  std::vector<double> env(precision.begin(), precision.end());
  for (std::size_t k = env.size() - 1; k > 0; --k) env[k - 1] = std::max(env[k - 1], env[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < env.size(); ++k) {
    ap += (recall[k] - prev_recall) * env[k];
    prev_recall = recall[k];
  }
  return ap;
}

ApReport average_precision(std::span<const SceneDetections> scenes, double iou_threshold,
                           ApInterpolation interpolation) {
  ApReport report;
  report.iou_threshold = iou_threshold;
  report.interpolation = interpolation;
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    struct Ref {
      double score;
      std::size_t scene;
      std::size_t det;
    };
    std::vector<Ref> dets;
    std::size_t gt_total = 0;
    std::vector<std::vector<bool>> matched(scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const auto& sc = scenes[s];
      matched[s].assign(sc.gt_boxes.size(), false);
      for (int g : sc.gt_classes) gt_total += g == c ? 1 : 0;
      for (std::size_t d = 0; d < sc.detections.size(); ++d)
        if (sc.detections[d].label == c) dets.push_back({sc.detections[d].score, s, d});
    }
    if (gt_total == 0) {
      report.per_class.push_back(std::nullopt);
      continue;
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });
    std::vector<double> precision, recall;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const auto& sc = scenes[dets[k].scene];
      const auto& box = sc.detections[dets[k].det].box;
      int best = -1;
      double best_iou = iou_threshold;
      for (std::size_t g = 0; g < sc.gt_boxes.size(); ++g) {
        if (sc.gt_classes[g] != c || matched[dets[k].scene][g]) continue;
        const double iou = rotated_iou(box, sc.gt_boxes[g]);
        if (iou >= best_iou && (best < 0 || iou > best_iou)) {
          best = static_cast<int>(g);
          best_iou = iou;
        }
      }
      if (best >= 0) {
        matched[dets[k].scene][static_cast<std::size_t>(best)] = true;
        ++tp;
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
      recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_total));
    }
    const double ap = integrate_pr(precision, recall, interpolation);
    report.per_class.push_back(ap);
    sum += ap;
    ++defined;
  }
  if (defined > 0) report.mean = sum / defined;
  return report;
}

nlohmann::json detections_to_json(std::span<const SceneDetections> scenes, const std::string& config_hash) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : scenes) {
    nlohmann::json zones = nlohmann::json::array();
    for (const auto& z : s.zones)
      zones.push_back({{"type", zone_name(z.type)}, {"center", {z.center.x, z.center.y}}, {"radius", z.radius}});
    nlohmann::json gt = nlohmann::json::array();
    for (std::size_t g = 0; g < s.gt_boxes.size(); ++g)
      gt.push_back({{"box", box_json(s.gt_boxes[g])}, {"class", class_name(s.gt_classes[g])}});
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : s.detections)
      dets.push_back({{"box", box_json(d.box)}, {"label", class_name(d.label)}, {"score", d.score}});
    arr.push_back({{"seed", s.seed}, {"zones", zones}, {"ground_truth", gt}, {"detections", dets}});
  }
  return {{"schema", "roirel-detections-v1"}, {"config_hash", config_hash}, {"scenes", arr}};
}

std::vector<SceneDetections> detections_from_json(const nlohmann::json& j, std::string* config_hash) {
  const std::string root = "$";
  const auto& schema = at(j, "schema", root);
  if (!schema.is_string() || schema.get<std::string>() != "roirel-detections-v1")
    throw FieldError("$.schema: expected \"roirel-detections-v1\"");
  if (config_hash) {
    const auto& h = at(j, "config_hash", root);
    if (!h.is_string()) throw FieldError("$.config_hash: expected a string");
    *config_hash = h.get<std::string>();
  }
  std::vector<SceneDetections> out;
  const auto& scenes = array_at(j, "scenes", root);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const std::string sp = "$.scenes[" + std::to_string(s) + "]";
    SceneDetections sd;
    const auto& seed = at(scenes[s], "seed", sp);
    if (!seed.is_number_unsigned()) throw FieldError(sp + ".seed: expected a non-negative integer");
    sd.seed = seed.get<std::uint64_t>();
    const auto& zones = array_at(scenes[s], "zones", sp);
    for (std::size_t z = 0; z < zones.size(); ++z) {
      const std::string zp = sp + ".zones[" + std::to_string(z) + "]";
      Zone zone;
      const auto& type = at(zones[z], "type", zp);
      bool found = false;
      for (int t = 0; t < static_cast<int>(ZoneType::kCount) && type.is_string(); ++t) {
        if (zone_name(static_cast<ZoneType>(t)) == type.get<std::string>()) {
          zone.type = static_cast<ZoneType>(t);
          found = true;
        }
      }
      if (!found) throw FieldError(zp + ".type: unknown zone type");
      const auto& center = at(zones[z], "center", zp);
      if (!center.is_array() || center.size() != 2) throw FieldError(zp + ".center: expected [x, y]");
      zone.center = {number(center[0], zp + ".center[0]"), number(center[1], zp + ".center[1]")};
      zone.radius = number(at(zones[z], "radius", zp), zp + ".radius");
      sd.zones.push_back(zone);
    }
    const auto& gt = array_at(scenes[s], "ground_truth", sp);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const std::string gp = sp + ".ground_truth[" + std::to_string(g) + "]";
      sd.gt_boxes.push_back(parse_box(at(gt[g], "box", gp), gp + ".box"));
      sd.gt_classes.push_back(parse_label(at(gt[g], "class", gp), gp + ".class", false));
    }
    const auto& dets = array_at(scenes[s], "detections", sp);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const std::string dp = sp + ".detections[" + std::to_string(d) + "]";
      ScoredBox b;
      b.box = parse_box(at(dets[d], "box", dp), dp + ".box");
      b.label = parse_label(at(dets[d], "label", dp), dp + ".label", true);
      b.score = number(at(dets[d], "score", dp), dp + ".score");
      if (b.score < 0.0 || b.score > 1.0) throw FieldError(dp + ".score: must be in [0, 1]");
      sd.detections.push_back(b);
    }
    out.push_back(std::move(sd));
  }
  return out;
}

std::vector<SceneDetections> parse_detections_text(const std::string& text, const std::string& source,
                                                   std::string* config_hash) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError(source + ": line " + std::to_string(line) + ": malformed JSON");
  }
  try {
    return detections_from_json(j, config_hash);
  } catch (const FieldError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

}  // namespace roirel
