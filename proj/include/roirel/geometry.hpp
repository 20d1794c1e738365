#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace roirel {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Wraps an angle into (-pi/2, pi/2].
double wrap_angle(double alpha);

/// Rotated rectangle (x, y, w, h, alpha). Construction validates and
/// normalizes the angle, so every live instance satisfies w > 0, h > 0,
/// finite fields and alpha in (-pi/2, pi/2].
class OrientedBox {
 public:
  OrientedBox() = default;
  OrientedBox(double x, double y, double w, double h, double alpha);

  double x() const { return x_; }
  double y() const { return y_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double alpha() const { return alpha_; }
  double area() const { return w_ * h_; }
  /// sqrt(w * h), the scale used by the scale-outlier statistic.
  double scale() const;
  Point2 center() const { return {x_, y_}; }

  OrientedBox translated(double dx, double dy) const;
  /// Rigid rotation of the whole box about `pivot`.
  OrientedBox rotated_about(Point2 pivot, double theta) const;

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double w_ = 1.0;
  double h_ = 1.0;
  double alpha_ = 0.0;
};

/// Counter-clockwise convex polygon.
class ConvexPolygon {
 public:
  ConvexPolygon() = default;
  /// Throws std::invalid_argument unless the vertices form a CCW convex
  /// polygon with at least 3 vertices.
  explicit ConvexPolygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const { return vertices_; }
  double area() const;

 private:
  std::vector<Point2> vertices_;
};

double signed_area(std::span<const Point2> ring);

std::array<Point2, 4> corners(const OrientedBox& box);
ConvexPolygon to_polygon(const OrientedBox& box);

/// Sutherland-Hodgman clip of `subject` against the convex `clip` ring.
/// Returns an empty ring when the intersection is empty or degenerate.
std::vector<Point2> clip_convex(std::span<const Point2> subject,
                                std::span<const Point2> clip);

double intersection_area(const OrientedBox& a, const OrientedBox& b);
double rotated_iou(const OrientedBox& a, const OrientedBox& b);

/// Monte-Carlo IoU estimate over the joint axis-aligned bounding region.
double mc_iou_oracle(const OrientedBox& a, const OrientedBox& b,
                     std::uint64_t samples, std::uint64_t seed);

bool contains(const OrientedBox& box, Point2 p);

double center_distance(const OrientedBox& a, const OrientedBox& b);

/// Symmetric chamfer distance on squared Euclidean distances:
/// 0.5 * (mean_i min_j |a_i - b_j|^2 + mean_j min_i |a_i - b_j|^2).
/// Empty input yields std::nullopt (undefined, never 0).
std::optional<double> chamfer_distance(std::span<const Point2> s1,
                                       std::span<const Point2> s2);

}  // namespace roirel
