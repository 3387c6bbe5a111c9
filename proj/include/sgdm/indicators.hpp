#pragma once

#include <cstdint>

#include "sgdm/gd.hpp"

namespace sgdm {

/// Controls for the quality indicators. Defaults are tuned for desk-scale meshes, 1.2 < p < 6.
struct IndicatorOptions {
    int max_iterations = 50;      // IRLS iterations
    double tolerance = 1e-9;      // relative change stopping test
    double damping = 0.5;         // weight relaxation: new = damping*old + (1-damping)*fresh
    int quad_points = 8;          // per direction, for integrals of smooth test fields
    int random_directions = 64;   // extra lower-bound probes for p != 2 maxima
    std::uint64_t seed = 0x5eed;  // for random_directions
    int dense_limit = 1500;       // p = 2 eigenproblems above this size use power iteration
};

struct IndicatorResult {
    double value = 0.0;        // best value found (exact for p = 2)
    double lower_bound = 0.0;  // ratio certified by an explicit vector
    bool converged = true;
    int iterations = 0;
};

struct BestInterpolant {
    Vec w;
    double s_value = 0.0;  // ||Pi w - phi||_{L^phat} + ||grad_D w - grad phi||_{L^p} at w
    bool converged = true;
    int iterations = 0;
};

/// Minimiser of the consistency objective for phi (value and gradient callables) and the attained value.
BestInterpolant interpolate_best(const GradientDiscretisation& gd, const ScalarField& phi, const VectorField& grad_phi,
                                 double p, double phat, const IndicatorOptions& opts = {});

/// Limit-conformity defect max |int grad_D v . phi + Pi_D v div phi| / ||grad_D v||_{L^p}.
IndicatorResult indicator_W(const GradientDiscretisation& gd, const VectorField& phi, const ScalarField& div_phi,
                            double p, const IndicatorOptions& opts = {});

/// Compactness indicator max ||Pi_D v(. + xi) - Pi_D v||_{L^p(R^d)} / ||grad_D v||_{L^p}, zero extension.
IndicatorResult indicator_T(const GradientDiscretisation& gd, const Point& xi, double p,
                            const IndicatorOptions& opts = {});

/// Discrete Poincare constant max ||Pi_D v||_{L^p} / ||grad_D v||_{L^p}.
IndicatorResult poincare_constant(const GradientDiscretisation& gd, double p, const IndicatorOptions& opts = {});

/// Linear functional c_i = int grad_D e_i . phi + Pi_D e_i div phi.
Vec conformity_functional(const GradientDiscretisation& gd, const VectorField& phi, const ScalarField& div_phi,
                          int quad_points);

/// int Pi_D e_i(x + xi) Pi_D e_j(x) dx over R^d, by clipping pieces against translated pieces.
SpMat translate_overlap(const GradientDiscretisation& gd, const Point& xi);

/// Largest eigenvalue of A x = lambda B x, B symmetric positive definite.
double max_generalized_eigenvalue(const SpMat& A, const SpMat& B, int dense_limit = 1500, Vec* eigvec = nullptr);

/// Grouped weighted L^p functional: (sum_g w_g |(A v)_g|^p)^(1/p), rows grouped in blocks of `group`.
struct LpOperator {
    SpMat A;
    Vec weights;  // one per group
    int group = 1;
    double norm(const Vec& v, double p) const;
    Vec group_magnitudes(const Vec& v) const;
    SpMat weighted_gram(const Vec& group_weights) const;
};

/// max over v != 0 of num(v)/den(v) in L^p. p = 2 exact; otherwise reweighted eigen iteration plus random probes.
IndicatorResult maximize_lp_ratio(const LpOperator& num, const LpOperator& den, double p,
                                  const IndicatorOptions& opts = {});

/// Gradient reconstruction as an LpOperator over cells.
LpOperator gradient_operator(const GradientDiscretisation& gd);

}  // namespace sgdm
