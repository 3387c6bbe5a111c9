#pragma once

#include <vector>

#include "sgdm/mesh.hpp"

namespace sgdm {

using Polygon = std::vector<Point>;

/// Keeps the part of `poly` where a*x + b*y <= c (one Sutherland-Hodgman pass).
Polygon clip_halfplane(const Polygon& poly, double a, double b, double c);

/// Intersection of a polygon with a convex polygon given counter-clockwise.
Polygon clip_convex(const Polygon& subject, const Polygon& convex_ccw);

double polygon_area(const Polygon& poly);

/// Fan triangulation of a convex polygon; degenerate triangles are dropped.
std::vector<std::array<Point, 3>> fan_triangulate(const Polygon& poly, double min_area = 0.0);

/// Triangle as a counter-clockwise polygon.
Polygon triangle_ccw(const std::array<Point, 3>& t);

/// Parts of `subject` outside the axis-aligned box, as convex polygons.
std::vector<Polygon> subtract_box(const Polygon& subject, const BoundingBox& box);

}  // namespace sgdm
