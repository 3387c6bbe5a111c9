#include "sgdm/quadrature.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace sgdm {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
    // Golub-Welsch on the Legendre Jacobi matrix.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        J(k, k - 1) = b;
        J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
        const double v0 = es.eigenvectors()(0, i);
        nodes[i] = 0.5 * (es.eigenvalues()(i) + 1.0);
        weights[i] = v0 * v0;  // sums to 1 on [0,1]
    }
}

SimplexRule interval_rule(int n) {
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    SimplexRule r;
    for (int i = 0; i < n; ++i) {
        r.bary.push_back({1.0 - x[i], x[i], 0.0});
        r.weights.push_back(w[i]);
    }
    return r;
}

SimplexRule triangle_rule(int n) {
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    SimplexRule r;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            // (s,t) in the unit square -> (s, t(1-s)) in the reference triangle.
            const double l1 = x[i];
            const double l2 = x[j] * (1.0 - x[i]);
            r.bary.push_back({1.0 - l1 - l2, l1, l2});
            r.weights.push_back(2.0 * w[i] * w[j] * (1.0 - x[i]));
        }
    }
    return r;
}

SimplexRule simplex_rule(int dim, int n) { return dim == 1 ? interval_rule(n) : triangle_rule(n); }

double simplex_measure(int dim, const std::array<Point, 3>& v) {
    if (dim == 1) return std::abs(v[1][0] - v[0][0]);
    return 0.5 * std::abs((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
}

}  // namespace sgdm
