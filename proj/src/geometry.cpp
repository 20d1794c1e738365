#include "roirel/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "roirel/rng.hpp"

namespace roirel {

namespace {

constexpr double kDegenerateArea = 1e-12;
constexpr double kConvexTol = 1e-9;

double cross(Point2 o, Point2 a, Point2 b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Point2 segment_line_intersection(Point2 p, Point2 q, Point2 a, Point2 b) {
  // Intersection of segment pq with the infinite line through ab.
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

double wrap_angle(double alpha) {
  if (!std::isfinite(alpha)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  constexpr double pi = std::numbers::pi;
  double a = std::fmod(alpha, pi);
  if (a <= -pi / 2) a += pi;
  if (a > pi / 2) a -= pi;
  return a;
}

OrientedBox::OrientedBox(double x, double y, double w, double h, double alpha)
    : x_(x), y_(y), w_(w), h_(h) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) ||
      !std::isfinite(h) || !std::isfinite(alpha)) {
    throw std::invalid_argument("OrientedBox: non-finite field");
  }
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("OrientedBox: width and height must be > 0 (got w=" +
                                std::to_string(w) + ", h=" + std::to_string(h) + ")");
  }
  alpha_ = wrap_angle(alpha);
}

double OrientedBox::scale() const { return std::sqrt(w_ * h_); }

OrientedBox OrientedBox::translated(double dx, double dy) const {
  return {x_ + dx, y_ + dy, w_, h_, alpha_};
}

OrientedBox OrientedBox::rotated_about(Point2 pivot, double theta) const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double rx = x_ - pivot.x;
  const double ry = y_ - pivot.y;
  return {pivot.x + c * rx - s * ry, pivot.y + s * rx + c * ry, w_, h_,
          alpha_ + theta};
}

double signed_area(std::span<const Point2> ring) {
  double twice = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& p = ring[i];
    const Point2& q = ring[(i + 1) % n];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * twice;
}

ConvexPolygon::ConvexPolygon(std::vector<Point2> vertices)
    : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) {
    throw std::invalid_argument("ConvexPolygon: needs at least 3 vertices");
  }
  if (signed_area(vertices_) < 0.0) {
    throw std::invalid_argument("ConvexPolygon: vertices must be counter-clockwise");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(vertices_[i], vertices_[(i + 1) % n], vertices_[(i + 2) % n]) <
        -kConvexTol) {
      throw std::invalid_argument("ConvexPolygon: not convex");
    }
  }
}

double ConvexPolygon::area() const { return signed_area(vertices_); }

std::array<Point2, 4> corners(const OrientedBox& box) {
  const double c = std::cos(box.alpha());
  const double s = std::sin(box.alpha());
  const double hw = 0.5 * box.w();
  const double hh = 0.5 * box.h();
  // Local corners in CCW order starting bottom-left.
  const std::array<Point2, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::array<Point2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {box.x() + c * local[i].x - s * local[i].y,
              box.y() + s * local[i].x + c * local[i].y};
  }
  return out;
}

ConvexPolygon to_polygon(const OrientedBox& box) {
  const auto c = corners(box);
  return ConvexPolygon(std::vector<Point2>(c.begin(), c.end()));
}

std::vector<Point2> clip_convex(std::span<const Point2> subject,
                                std::span<const Point2> clip) {
  std::vector<Point2> output(subject.begin(), subject.end());
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point2 a = clip[e];
    const Point2 b = clip[(e + 1) % m];
    std::vector<Point2> input;
    input.swap(output);
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 cur = input[i];
      const Point2 prev = input[(i + n - 1) % n];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(segment_line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(segment_line_intersection(prev, cur, a, b));
      }
    }
  }
  if (output.size() < 3 || signed_area(output) < kDegenerateArea) return {};
  return output;
}

double intersection_area(const OrientedBox& a, const OrientedBox& b) {
  const auto pa = corners(a);
  const auto pb = corners(b);
  const auto ring = clip_convex(pa, pb);
  if (ring.empty()) return 0.0;
  return std::max(0.0, signed_area(ring));
}

double rotated_iou(const OrientedBox& a, const OrientedBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool contains(const OrientedBox& box, Point2 p) {
  const double c = std::cos(box.alpha());
  const double s = std::sin(box.alpha());
  const double dx = p.x - box.x();
  const double dy = p.y - box.y();
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * box.w() && std::abs(v) <= 0.5 * box.h();
}

double mc_iou_oracle(const OrientedBox& a, const OrientedBox& b,
                     std::uint64_t samples, std::uint64_t seed) {
  if (samples == 0) throw std::invalid_argument("mc_iou_oracle: samples must be >= 1");
  double lo_x = std::numeric_limits<double>::infinity();
  double lo_y = lo_x;
  double hi_x = -lo_x;
  double hi_y = -lo_x;
  for (const auto* box : {&a, &b}) {
    for (const Point2& p : corners(*box)) {
      lo_x = std::min(lo_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_x = std::max(hi_x, p.x);
      hi_y = std::max(hi_y, p.y);
    }
  }
  Rng rng(seed);
  std::uint64_t in_a = 0;
  std::uint64_t in_b = 0;
  std::uint64_t in_both = 0;
  for (std::uint64_t i = 0; i < samples; ++i) {
    const Point2 p{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
    const bool ia = contains(a, p);
    const bool ib = contains(b, p);
    in_a += ia;
    in_b += ib;
    in_both += ia && ib;
  }
  const std::uint64_t uni = in_a + in_b - in_both;
  if (uni == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(uni);
}

double center_distance(const OrientedBox& a, const OrientedBox& b) {
  return std::hypot(a.x() - b.x(), a.y() - b.y());
}

std::optional<double> chamfer_distance(std::span<const Point2> s1,
                                       std::span<const Point2> s2) {
  if (s1.empty() || s2.empty()) return std::nullopt;
  auto directed = [](std::span<const Point2> from, std::span<const Point2> to) {
    double total = 0.0;
    for (const Point2& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Point2& q : to) {
        const double dx = p.x - q.x;
        const double dy = p.y - q.y;
        best = std::min(best, dx * dx + dy * dy);
      }
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return 0.5 * (directed(s1, s2) + directed(s2, s1));
}

}  // namespace roirel
