#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "roirel/geometry.hpp"
#include "roirel/rng.hpp"

using namespace roirel;

namespace {

constexpr double kPi = std::numbers::pi;

OrientedBox random_box(Rng& rng, double spread = 4.0) {
  return OrientedBox(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(0.3, 4.0),
                     rng.uniform(0.3, 4.0), rng.uniform(-kPi, kPi));
}

// Intersection polygon from vertices of each box inside the other plus
// pairwise edge crossings, ordered around their centroid.
double hull_intersection_area(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = corners(a);
  const auto cb = corners(b);
  auto inside = [](const std::array<Point2, 4>& q, Point2 p) {
    for (int k = 0; k < 4; ++k) {
      const Point2 u = q[k], v = q[(k + 1) % 4];
      if ((v.x - u.x) * (p.y - u.y) - (v.y - u.y) * (p.x - u.x) < -1e-12) return false;
    }
    return true;
  };
  std::vector<Point2> pts;
  for (auto p : ca)
    if (inside(cb, p)) pts.push_back(p);
  for (auto p : cb)
    if (inside(ca, p)) pts.push_back(p);
  for (int i = 0; i < 4; ++i) {
    const Point2 p1 = ca[i], p2 = ca[(i + 1) % 4];
    for (int j = 0; j < 4; ++j) {
      const Point2 q1 = cb[j], q2 = cb[(j + 1) % 4];
      const double d = (p2.x - p1.x) * (q2.y - q1.y) - (p2.y - p1.y) * (q2.x - q1.x);
      if (std::abs(d) < 1e-15) continue;
      const double t = ((q1.x - p1.x) * (q2.y - q1.y) - (q1.y - p1.y) * (q2.x - q1.x)) / d;
      const double s = ((q1.x - p1.x) * (p2.y - p1.y) - (q1.y - p1.y) * (p2.x - p1.x)) / d;
      if (t >= 0 && t <= 1 && s >= 0 && s <= 1) pts.push_back({p1.x + t * (p2.x - p1.x), p1.y + t * (p2.y - p1.y)});
    }
  }
  if (pts.size() < 3) return 0.0;
  double cx = 0, cy = 0;
  for (auto p : pts) cx += p.x, cy += p.y;
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  std::sort(pts.begin(), pts.end(), [&](Point2 p, Point2 q) {
    return std::atan2(p.y - cy, p.x - cx) < std::atan2(q.y - cy, q.x - cx);
  });
  double area = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const Point2 p = pts[k], q = pts[(k + 1) % pts.size()];
    area += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(area);
}

// Axis-aligned intervals.
double aabb_iou(double x1, double y1, double w1, double h1, double x2, double y2, double w2, double h2) {
  const double ix = std::max(0.0, std::min(x1 + w1 / 2, x2 + w2 / 2) - std::max(x1 - w1 / 2, x2 - w2 / 2));
  const double iy = std::max(0.0, std::min(y1 + h1 / 2, y2 + h2 / 2) - std::max(y1 - h1 / 2, y2 - h2 / 2));
  const double inter = ix * iy;
  return inter / (w1 * h1 + w2 * h2 - inter);
}

bool near_point(Point2 p, double x, double y, double tol = 1e-12) {
  return std::abs(p.x - x) < tol && std::abs(p.y - y) < tol;
}

}  // namespace

TEST(OrientedBox, RejectsInvalidFields) {
  EXPECT_THROW(OrientedBox(0, 0, 0, 1, 0), std::invalid_argument);
  EXPECT_THROW(OrientedBox(0, 0, 1, -1, 0), std::invalid_argument);
  EXPECT_THROW(OrientedBox(NAN, 0, 1, 1, 0), std::invalid_argument);
  EXPECT_THROW(OrientedBox(0, 0, 1, 1, INFINITY), std::invalid_argument);
}

TEST(OrientedBox, AngleIsWrappedIntoHalfOpenRange) {
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double a = rng.uniform(-20.0, 20.0);
    const double w = wrap_angle(a);
    EXPECT_GT(w, -kPi / 2);
    EXPECT_LE(w, kPi / 2);
    const double turns = (a - w) / kPi;
    EXPECT_NEAR(turns, std::round(turns), 1e-9);
  }
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi / 2), kPi / 2);
  EXPECT_DOUBLE_EQ(OrientedBox(0, 0, 1, 1, kPi).alpha(), 0.0);
}

TEST(ToPolygon, AxisAlignedCorners) {
  const auto p = to_polygon(OrientedBox(0, 0, 2, 2, 0)).vertices();
  ASSERT_EQ(p.size(), 4u);
  EXPECT_TRUE(near_point(p[0], -1, -1));
  EXPECT_TRUE(near_point(p[1], 1, -1));
  EXPECT_TRUE(near_point(p[2], 1, 1));
  EXPECT_TRUE(near_point(p[3], -1, 1));
}

TEST(ToPolygon, RotatedSquareCornersOnAxes) {
  const auto p = to_polygon(OrientedBox(0, 0, 2, 2, kPi / 4)).vertices();
  for (const auto& v : p) {
    EXPECT_NEAR(std::hypot(v.x, v.y), std::sqrt(2.0), 1e-12);
    EXPECT_TRUE(std::abs(v.x) < 1e-12 || std::abs(v.y) < 1e-12);
  }
}

TEST(ToPolygon, AreaPreservedUnderRotation) {
  EXPECT_NEAR(to_polygon(OrientedBox(3, 4, 2, 1, 0.3)).area(), 2.0, 1e-12);
}

TEST(ToPolygon, RandomBoxesAreCounterClockwiseWithAreaWH) {
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    const OrientedBox b = random_box(rng, 50.0);
    const auto poly = to_polygon(b);
    EXPECT_GT(signed_area(poly.vertices()), 0.0);
    EXPECT_NEAR(poly.area() / b.area(), 1.0, 1e-9);
  }
}

TEST(ConvexPolygon, RejectsClockwiseAndDegenerate) {
  EXPECT_THROW(ConvexPolygon({{0, 0}, {0, 1}, {1, 1}, {1, 0}}), std::invalid_argument);
  EXPECT_THROW(ConvexPolygon({{0, 0}, {1, 0}}), std::invalid_argument);
  EXPECT_THROW(ConvexPolygon({{0, 0}, {2, 0}, {1, 1}, {1, 0.2}}), std::invalid_argument);
  EXPECT_NO_THROW(ConvexPolygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
}

TEST(RotatedIou, IdenticalBoxes) {
  const OrientedBox b(1.5, -2, 3, 1.2, 0.7);
  EXPECT_NEAR(rotated_iou(b, b), 1.0, 1e-12);
}

TEST(RotatedIou, Disjoint) {
  EXPECT_EQ(rotated_iou(OrientedBox(0, 0, 2, 2, 0), OrientedBox(10, 0, 2, 2, 0)), 0.0);
}

TEST(RotatedIou, SquareAgainstItsFortyFiveDegreeCopy) {
  // Octagon: the axis square minus four corner triangles with legs 2 - sqrt2.
  const double leg = 2.0 - std::sqrt(2.0);
  const double inter = 4.0 - 4.0 * 0.5 * leg * leg;
  const double expected = inter / (8.0 - inter);
  EXPECT_NEAR(expected, 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(rotated_iou(OrientedBox(0, 0, 2, 2, 0), OrientedBox(0, 0, 2, 2, kPi / 4)), expected, 1e-6);
}

TEST(RotatedIou, HalfShiftedSquare) {
  EXPECT_NEAR(rotated_iou(OrientedBox(0, 0, 2, 2, 0), OrientedBox(1, 0, 2, 2, 0)), 1.0 / 3.0, 1e-12);
}

TEST(RotatedIou, MatchesIntervalOracleOnAxisAlignedPairs) {
  Rng rng(5);
  for (int k = 0; k < 500; ++k) {
    const double x1 = rng.uniform(-3, 3), y1 = rng.uniform(-3, 3), w1 = rng.uniform(0.5, 4), h1 = rng.uniform(0.5, 4);
    const double x2 = rng.uniform(-3, 3), y2 = rng.uniform(-3, 3), w2 = rng.uniform(0.5, 4), h2 = rng.uniform(0.5, 4);
    const double expected = aabb_iou(x1, y1, w1, h1, x2, y2, w2, h2);
    EXPECT_NEAR(rotated_iou(OrientedBox(x1, y1, w1, h1, 0), OrientedBox(x2, y2, w2, h2, 0)), expected, 1e-9);
  }
}

TEST(RotatedIou, IntersectionMatchesHullOracle) {
  Rng rng(17);
  for (int k = 0; k < 1000; ++k) {
    const OrientedBox a = random_box(rng, 2.0);
    const OrientedBox b = random_box(rng, 2.0);
    EXPECT_NEAR(intersection_area(a, b), hull_intersection_area(a, b), 1e-9);
  }
}

TEST(RotatedIou, SymmetricAndBounded) {
  Rng rng(19);
  for (int k = 0; k < 1000; ++k) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    const double ab = rotated_iou(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(ab, rotated_iou(b, a), 1e-12);
  }
}

TEST(RotatedIou, InvariantUnderJointRigidMotion) {
  Rng rng(23);
  for (int k = 0; k < 1000; ++k) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    const double tx = rng.uniform(-100, 100), ty = rng.uniform(-100, 100), th = rng.uniform(-kPi, kPi);
    const Point2 pivot{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const OrientedBox a2 = a.rotated_about(pivot, th).translated(tx, ty);
    const OrientedBox b2 = b.rotated_about(pivot, th).translated(tx, ty);
    EXPECT_NEAR(rotated_iou(a, b), rotated_iou(a2, b2), 1e-6);
  }
}

TEST(RotatedIou, TouchingEdgesCountAsNoOverlap) {
  EXPECT_EQ(rotated_iou(OrientedBox(0, 0, 2, 2, 0), OrientedBox(2, 0, 2, 2, 0)), 0.0);
  EXPECT_EQ(rotated_iou(OrientedBox(0, 0, 2, 2, 0), OrientedBox(2, 2, 2, 2, 0)), 0.0);
}

TEST(McIouOracle, IdenticalBoxesNearOne) {
  const OrientedBox b(0, 0, 3, 1, 0.4);
  for (std::uint64_t seed : {1u, 2u, 3u}) EXPECT_NEAR(mc_iou_oracle(b, b, 100000, seed), 1.0, 0.01);
}

TEST(McIouOracle, DisjointIsExactlyZero) {
  EXPECT_EQ(mc_iou_oracle(OrientedBox(0, 0, 2, 2, 0), OrientedBox(10, 0, 2, 2, 0.5), 100000, 4), 0.0);
}

TEST(McIouOracle, OctagonCase) {
  EXPECT_NEAR(mc_iou_oracle(OrientedBox(0, 0, 2, 2, 0), OrientedBox(0, 0, 2, 2, kPi / 4), 100000, 9), 0.7071, 0.01);
}

TEST(McIouOracle, AgreesWithClippingOnRandomPairs) {
  Rng rng(29);
  for (int k = 0; k < 60; ++k) {
    const OrientedBox a = random_box(rng, 1.5);
    const OrientedBox b = random_box(rng, 1.5);
    EXPECT_NEAR(rotated_iou(a, b), mc_iou_oracle(a, b, 100000, 100 + k), 0.01);
  }
}

TEST(CenterDistance, Basics) {
  EXPECT_EQ(center_distance(OrientedBox(1, 2, 1, 1, 0), OrientedBox(1, 2, 3, 1, 0.5)), 0.0);
  EXPECT_DOUBLE_EQ(center_distance(OrientedBox(0, 0, 1, 1, 0), OrientedBox(3, 4, 1, 1, 0)), 5.0);
  Rng rng(31);
  for (int k = 0; k < 200; ++k) {
    const OrientedBox a = random_box(rng), b = random_box(rng);
    const double tx = rng.uniform(-9, 9), ty = rng.uniform(-9, 9);
    EXPECT_NEAR(center_distance(a, b), center_distance(a.translated(tx, ty), b.translated(tx, ty)), 1e-12);
    EXPECT_EQ(center_distance(a, b), center_distance(b, a));
  }
}

TEST(Chamfer, EqualSetsGiveZero) {
  const std::vector<Point2> s = {{0, 0}, {1, 2}, {-3, 4}};
  EXPECT_EQ(chamfer_distance(s, s).value(), 0.0);
}

TEST(Chamfer, SingletonsGiveSquaredDistance) {
  const std::vector<Point2> a = {{1, 1}}, b = {{4, 5}};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b).value(), 25.0);
}

TEST(Chamfer, HandEnumeratedCase) {
  const std::vector<Point2> a = {{0, 0}, {1, 0}}, b = {{0, 1}};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b).value(), 1.25);
}

TEST(Chamfer, EmptyIsUndefined) {
  const std::vector<Point2> a = {{0, 0}}, none;
  EXPECT_FALSE(chamfer_distance(a, none).has_value());
  EXPECT_FALSE(chamfer_distance(none, a).has_value());
}

TEST(Chamfer, SymmetricAndMatchesDoubleLoop) {
  Rng rng(37);
  for (int k = 0; k < 100; ++k) {
    std::vector<Point2> a(1 + rng.uniform_int(0, 5)), b(1 + rng.uniform_int(0, 5));
    for (auto& p : a) p = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
    for (auto& p : b) p = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
    auto directed = [](const std::vector<Point2>& s, const std::vector<Point2>& t) {
      double total = 0;
      for (auto p : s) {
        double best = INFINITY;
        for (auto q : t) best = std::min(best, (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y));
        total += best;
      }
      return total / static_cast<double>(s.size());
    };
    const double expected = 0.5 * (directed(a, b) + directed(b, a));
    EXPECT_NEAR(chamfer_distance(a, b).value(), expected, 1e-12);
    EXPECT_EQ(chamfer_distance(a, b).value(), chamfer_distance(b, a).value());
  }
}
