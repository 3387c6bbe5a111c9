#pragma once

#include <vector>

#include "sgdm/mesh.hpp"

namespace sgdm {

/// Quadrature rule on a reference simplex: points in barycentric coordinates, weights summing to 1.
struct SimplexRule {
    std::vector<std::array<double, 3>> bary;
    std::vector<double> weights;
    int size() const { return static_cast<int>(weights.size()); }
};

/// n-point Gauss-Legendre rule on [0,1] (nodes ascending, weights summing to 1).
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// n-point Gauss-Legendre rule on the unit interval, in barycentric form. Exact to degree 2n-1.
SimplexRule interval_rule(int n);

/// Collapsed (Duffy) n x n Gauss product rule on the triangle. Exact to degree 2n-2.
SimplexRule triangle_rule(int n);

SimplexRule simplex_rule(int dim, int n);

/// Maps a barycentric point of the simplex with the given vertices to physical coordinates.
inline Point from_barycentric(int dim, const std::array<Point, 3>& v, const std::array<double, 3>& l) {
    if (dim == 1) return {l[0] * v[0][0] + l[1] * v[1][0], 0.0};
    return {l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0], l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1]};
}

double simplex_measure(int dim, const std::array<Point, 3>& v);

}  // namespace sgdm
