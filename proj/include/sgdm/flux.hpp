#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

namespace sgdm {

/// Small dense vector/matrix types for fluxes in R^d, d <= 2 (no heap allocation).
using FluxVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2, 1>;
using FluxMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;

enum class FluxKind { PLaplace, RegularizedPLaplace, LinearDiffusion, Custom };

std::string to_string(FluxKind kind);
FluxKind parse_flux_kind(const std::string& name);

/**
 * Leray-Lions flux a(x, y) with growth exponent p and structure constants:
 *   a(x,y).y >= c1 |y|^p,  |a(x,y)| <= c2 (1 + |y|^{p-1}),  (a(x,y)-a(x,z)).(y-z) >= 0.
 *
 * Built-in kinds:
 *   PLaplace             |y|^{p-2} y                      c1 = c2 = 1
 *   RegularizedPLaplace  (1+|y|)^{p-2} y, p >= 2          c1 = 1, c2 = 2^{p-2}
 *   LinearDiffusion      y, p = 2                         c1 = c2 = 1
 */
class FluxModel {
public:
    using Function = std::function<FluxVec(double, const FluxVec&)>;
    using Jacobian = std::function<FluxMat(double, const FluxVec&)>;

    static FluxModel p_laplace(double p, double newton_epsilon = -1.0);
    static FluxModel regularized_p_laplace(double p);
    static FluxModel linear_diffusion();
    /// User-supplied flux; jacobian in y is optional (central differences otherwise).
    static FluxModel custom(Function a, double p, double c1, double c2, Jacobian jacobian = {},
                            bool depends_on_value = true);
    /// Named custom fluxes usable from configuration files ("anti_monotone": a(y) = -y).
    static FluxModel named_custom(const std::string& name, double p);

    FluxKind kind() const { return kind_; }
    double p() const { return p_; }
    double c1() const { return c1_; }
    double c2() const { return c2_; }
    double newton_epsilon() const { return epsilon_; }
    /// Conjugate exponent p' = p/(p-1).
    double p_conjugate() const { return p_ / (p_ - 1.0); }
    /// max{2, p'}.
    double p_hat() const { return std::max(2.0, p_conjugate()); }
    /// Whether a depends on its first argument (the value of u).
    bool depends_on_value() const { return depends_on_value_; }

    FluxModel with_constants(double c1, double c2) const;

    /// a(x, y). Throws std::invalid_argument on NaN input.
    FluxVec eval(double x, const FluxVec& y) const;
    /// Derivative in y of the epsilon-smoothed flux (exact for non-p-Laplace kinds).
    FluxMat jacobian(double x, const FluxVec& y) const { return jacobian(x, y, epsilon_); }
    /// Same with an explicit smoothing parameter (used for continuation in epsilon).
    FluxMat jacobian(double x, const FluxVec& y, double epsilon) const;
    /// Secant weight w with a(x,y) = w y for radial fluxes; |a|/|y| otherwise.
    double secant_weight(double x, const FluxVec& y) const;

private:
    FluxModel() = default;

    FluxKind kind_ = FluxKind::LinearDiffusion;
    double p_ = 2.0;
    double c1_ = 1.0;
    double c2_ = 1.0;
    double epsilon_ = 0.0;
    bool depends_on_value_ = false;
    Function custom_;
    Jacobian custom_jacobian_;
};

FluxVec eval_flux(const FluxModel& model, double x, const FluxVec& y);
FluxMat eval_flux_jacobian(const FluxModel& model, double x, const FluxVec& y);

struct ProbeReport {
    long n_samples = 0;
    long coercivity_violations = 0;   // a.y >= c1 |y|^p
    long growth_violations = 0;       // |a| <= c2 (1 + |y|^{p-1})
    long monotonicity_violations = 0; // (a(y)-a(z)).(y-z) >= 0
    double tight_c1 = 0.0;            // min over samples of a.y / |y|^p
    double tight_c2 = 0.0;            // max over samples of |a| / (1 + |y|^{p-1})
    bool passed() const {
        return coercivity_violations == 0 && growth_violations == 0 && monotonicity_violations == 0;
    }
};

/// Uniform random probe of the three structure inequalities in dimension `dim`.
ProbeReport probe_assumptions(const FluxModel& model, long n_samples, double value_range, double grad_range,
                              std::uint64_t seed, int dim = 2);

}  // namespace sgdm
