#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sgdm/gd.hpp"

namespace sgdm {

/// Scalar multiplier f0 of the Nemytskii noise operator [f(v)k](x) = f0(v(x)) k(x).
class NemytskiiMap {
public:
    enum class Kind { Zero, Constant, Identity, Tanh, Table, Square, Custom };

    static NemytskiiMap zero();
    static NemytskiiMap constant(double c);
    static NemytskiiMap identity();
    static NemytskiiMap tanh();
    /// Piecewise-linear interpolation of (xs, ys), constant beyond the end points. xs strictly increasing.
    static NemytskiiMap table(std::vector<double> xs, std::vector<double> ys);
    /// f0(s) = s^2. Unbounded and of quadratic growth; kept for probe checks.
    static NemytskiiMap square();
    /// Arbitrary callable with a known sup (infinity if unbounded).
    static NemytskiiMap custom(std::function<double(double)> f, double sup_abs);
    static NemytskiiMap parse(const std::string& name, double constant = 1.0);

    double operator()(double s) const;
    Kind kind() const { return kind_; }
    std::string name() const;
    /// sup |f0|, infinity when unbounded.
    double sup_abs() const { return sup_; }
    bool is_zero() const { return kind_ == Kind::Zero; }

private:
    Kind kind_ = Kind::Zero;
    double c_ = 0.0;
    double sup_ = 0.0;
    std::vector<double> xs_, ys_;
    std::function<double(double)> fn_;
};

/**
 * Truncated Karhunen-Loeve Q-Wiener process W = sum_k q_k W_k e_k together with
 * the multiplier f0. The e_k are products of sines on a rectangle (orthonormal in
 * L^2 of the rectangle) unless explicit basis callables are supplied.
 *
 * Growth constants satisfy ||f(v)||^2_{L(K,L^2)} <= F1 ||v||^2 + F2, with K
 * identified with span{e_k} and the l^2 norm on the coefficients.
 */
class NoiseModel {
public:
    /// Sine basis on `box` (dimension `dim`), q_k = k^{-s}.
    static NoiseModel sine(int dim, const BoundingBox& box, int k_max, double s, NemytskiiMap f0);
    /// Explicit basis callables, for non-rectangular domains.
    static NoiseModel explicit_basis(std::vector<ScalarField> basis, Vec q, NemytskiiMap f0, double F1, double F2);

    NoiseModel with_q(Vec q) const;
    NoiseModel with_growth(double F1, double F2) const;
    NoiseModel with_f0(NemytskiiMap f0) const;

    int k_max() const { return static_cast<int>(q_.size()); }
    const Vec& q() const { return q_; }
    /// sum_k q_k^2, the trace entering E||Delta W||^2_K = dt * trace.
    double trace() const { return q_.squaredNorm(); }
    const NemytskiiMap& f0() const { return f0_; }
    double F1() const { return F1_; }
    double F2() const { return F2_; }
    /// sup_x sum_k e_k(x)^2 (a bound for the sine basis).
    double basis_sup_sq() const { return basis_sup_sq_; }

    /// e_k(x), k = 0 .. k_max-1.
    double basis(int k, const Point& x) const;

private:
    void default_growth();

    int dim_ = 1;
    BoundingBox box_{};
    std::vector<std::array<int, 2>> modes_;
    std::vector<ScalarField> explicit_;
    Vec q_;
    NemytskiiMap f0_;
    double F1_ = 0.0;
    double F2_ = 0.0;
    double basis_sup_sq_ = 0.0;
};

/// Counter-based 64-bit generator (SplitMix64 output function over a counter); a UniformRandomBitGenerator.
class CounterEngine {
public:
    using result_type = std::uint64_t;
    explicit CounterEngine(std::uint64_t key) : key_(key) {}
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

/// Identity of an independent random stream: one per (sample, time step).
struct RngStream {
    std::uint64_t master_seed = 0;
    std::uint64_t sample_index = 0;
    std::uint64_t time_index = 0;
    std::uint64_t key() const;
    CounterEngine engine() const { return CounterEngine(key()); }
};

struct NoiseIncrement {
    Vec coeffs;  // q_k * Delta W_k
    double dt = 0.0;
};

/// coeffs_k = q_k sqrt(dt) xi_k, xi_k iid N(0,1) drawn from the stream. Throws for dt <= 0.
NoiseIncrement sample_increment(const NoiseModel& noise, const RngStream& rng, double dt);

/// Noise basis sampled at the quadrature points of a GD.
class NoiseAssembler {
public:
    NoiseAssembler(GDPtr gd, const NoiseModel& noise);
    NoiseAssembler(GDPtr gd, const NoiseModel& noise, const Quadrature& quad);

    const GradientDiscretisation& gd() const { return *gd_; }
    const NoiseModel& noise() const { return noise_; }
    const Quadrature& quadrature() const { return *quad_; }
    /// n_points x k_max.
    const Eigen::MatrixXd& basis_values() const { return E_; }

    /// f0(Pi_D v(x_q)) at each quadrature point.
    Vec multiplier(const Vec& v) const;
    /// sum_k coeffs_k e_k(x_q).
    Vec field(const Vec& coeffs) const;
    /// f0(Pi_D v) * sum_k coeffs_k e_k at the quadrature points.
    Vec apply(const Vec& v, const NoiseIncrement& inc) const;
    /// Load vector int g Pi_D e_i for values g at the quadrature points.
    Vec load(const Vec& g) const;
    /// ||f(v)||^2_{L(K,L^2)}: largest eigenvalue of int f0(Pi v)^2 e_j e_l.
    double operator_norm_sq(const Vec& v) const;
    /// int g^2 over the quadrature.
    double l2_norm_sq(const Vec& g) const;

private:
    GDPtr gd_;
    NoiseModel noise_;
    std::shared_ptr<const Quadrature> quad_;
    Eigen::MatrixXd E_;
};

/// f0(Pi_D v) * sum_k coeffs_k e_k at the GD's quadrature points.
Vec apply_noise(const NoiseModel& noise, GDPtr gd, const Vec& v, const NoiseIncrement& inc);

struct GrowthReport {
    long trials = 0;
    long violations = 0;
    double max_excess = -std::numeric_limits<double>::infinity();  // max of lhs - rhs
    bool passed() const { return violations == 0; }
};

/**
 * Random check of ||f(v)k||^2 <= F1 ||Pi_D v||^2 + F2 for unit k in span{e_k}.
 * Trials cycle over the amplitudes (DOF entries ~ amplitude * N(0,1)).
 * Integrals use an 8-point-per-direction rule so that quadrature error stays below the slack.
 */
GrowthReport growth_check(const NoiseModel& noise, GDPtr gd, long trials, std::uint64_t seed,
                          const std::vector<double>& amplitudes = {1.0});

}  // namespace sgdm
