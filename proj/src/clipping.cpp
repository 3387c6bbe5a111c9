#include "sgdm/clipping.hpp"

#include <cmath>

namespace sgdm {

Polygon clip_halfplane(const Polygon& poly, double a, double b, double c) {
    Polygon out;
    const std::size_t n = poly.size();
    if (n == 0) return out;
    out.reserve(n + 2);
    for (std::size_t i = 0; i < n; ++i) {
        const Point& p = poly[i];
        const Point& q = poly[(i + 1) % n];
        const double fp = a * p[0] + b * p[1] - c;
        const double fq = a * q[0] + b * q[1] - c;
        if (fp <= 0.0) out.push_back(p);
        if ((fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0)) {
            const double t = fp / (fp - fq);
            out.push_back({p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])});
        }
    }
    return out;
}

Polygon clip_convex(const Polygon& subject, const Polygon& convex_ccw) {
    Polygon out = subject;
    const std::size_t n = convex_ccw.size();
    for (std::size_t i = 0; i < n && !out.empty(); ++i) {
        const Point& p = convex_ccw[i];
        const Point& q = convex_ccw[(i + 1) % n];
        // Inside of a CCW edge p->q is to the left: cross(q-p, x-p) >= 0.
        const double a = q[1] - p[1];
        const double b = -(q[0] - p[0]);
        out = clip_halfplane(out, a, b, a * p[0] + b * p[1]);
    }
    return out;
}

double polygon_area(const Polygon& poly) {
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point& p = poly[i];
        const Point& q = poly[(i + 1) % poly.size()];
        s += p[0] * q[1] - q[0] * p[1];
    }
    return 0.5 * s;
}

std::vector<std::array<Point, 3>> fan_triangulate(const Polygon& poly, double min_area) {
    std::vector<std::array<Point, 3>> out;
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        const std::array<Point, 3> t{poly[0], poly[i], poly[i + 1]};
        const double area =
            0.5 * std::abs((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]));
        if (area > min_area) out.push_back(t);
    }
    return out;
}

Polygon triangle_ccw(const std::array<Point, 3>& t) {
    const double s = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
    if (s >= 0.0) return {t[0], t[1], t[2]};
    return {t[0], t[2], t[1]};
}

std::vector<Polygon> subtract_box(const Polygon& subject, const BoundingBox& box) {
    std::vector<Polygon> out;
    auto keep = [&](Polygon p) {
        if (p.size() >= 3 && std::abs(polygon_area(p)) > 0.0) out.push_back(std::move(p));
    };
    // The complement of the box split into four convex slabs.
    keep(clip_halfplane(subject, 1.0, 0.0, box.lo[0]));
    keep(clip_halfplane(subject, -1.0, 0.0, -box.hi[0]));
    Polygon mid = clip_halfplane(clip_halfplane(subject, -1.0, 0.0, -box.lo[0]), 1.0, 0.0, box.hi[0]);
    keep(clip_halfplane(mid, 0.0, 1.0, box.lo[1]));
    keep(clip_halfplane(mid, 0.0, -1.0, -box.hi[1]));
    return out;
}

}  // namespace sgdm
