#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdm/flux.hpp"
#include "sgdm/gd.hpp"
#include "sgdm/noise.hpp"

namespace sgdm {

/// Space GD plus a uniform time grid t^n = n T / N.
struct SpaceTimeGD {
    GDPtr gd;
    double T = 1.0;
    int N = 1;
    double dt() const { return T / N; }
    void validate() const;
};

struct SolverConfig {
    double newton_tol = 1e-10;  // Euclidean norm of the assembled residual
    int max_newton = 30;
    int max_fixed_point = 200;
    double line_search_shrink = 0.5;
    void validate() const;
};

struct StepResult {
    Vec u;
    double residual = 0.0;
    int iterations = 0;
    bool used_fixed_point = false;
};

/// Raised when neither Newton nor the frozen-coefficient iteration reaches the tolerance.
class StepFailure : public std::runtime_error {
public:
    StepFailure(int step, Vec best, double residual, int iterations);
    int step() const { return step_; }
    const Vec& best_iterate() const { return best_; }
    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

private:
    int step_;
    Vec best_;
    double residual_;
    int iterations_;
};

/**
 * One implicit Euler step of the gradient scheme:
 *   M (u - u_n) + dt G^T F(u) = b(u_n, dW),
 * where F collects the cell integrals of a(Pi u, grad_D u) and b is the load of
 * f(Pi u_n) dW, evaluated at the previous iterate.
 */
class Stepper {
public:
    Stepper(SpaceTimeGD sgd, FluxModel flux, NoiseModel noise, SolverConfig cfg = {});

    const SpaceTimeGD& sgd() const { return sgd_; }
    const GradientDiscretisation& gd() const { return *sgd_.gd; }
    const FluxModel& flux() const { return flux_; }
    const NoiseModel& noise() const { return noise_; }
    const SolverConfig& config() const { return cfg_; }
    const NoiseAssembler& assembler() const { return assembler_; }

    /// f(Pi u_n) dW at the quadrature points.
    Vec noise_values(const Vec& u_n, const NoiseIncrement& inc) const;
    /// int f(Pi u_n) dW Pi e_i.
    Vec noise_load(const Vec& u_n, const NoiseIncrement& inc) const;

    /// Cell integrals of a(Pi u, grad_D u), stacked like gradient_matrix rows.
    Vec flux_integrals(const Vec& u) const;
    /// int a(Pi u, grad_D u) . grad_D u.
    double flux_pairing(const Vec& u) const;
    Vec residual(const Vec& u, const Vec& u_n, const Vec& load) const;

    StepResult solve_step(const Vec& u_n, const NoiseIncrement& inc, int step_index = 0) const;
    StepResult solve_with_load(const Vec& u_n, const Vec& load, int step_index = 0) const;

private:
    SpMat jacobian(const Vec& u, double eps) const;
    SpMat frozen_operator(const Vec& u) const;
    Vec solve_linear(const SpMat& A, const Vec& rhs) const;

    SpaceTimeGD sgd_;
    FluxModel flux_;
    NoiseModel noise_;
    SolverConfig cfg_;
    NoiseAssembler assembler_;
    Vec cell_measure_;
    bool symmetric_;
};

using StepperPtr = std::shared_ptr<const Stepper>;

/// Produces Delta W^{n+1} for n = 0 .. N-1. Called only after u^n is known.
using IncrementSource = std::function<NoiseIncrement(int n)>;

/// Independent stream per (master_seed, sample, n).
IncrementSource stream_increments(const NoiseModel& noise, std::uint64_t master_seed, std::uint64_t sample_index,
                                  double dt);
/// Sum of `factor` consecutive fine increments (fine step dt/factor): coarse levels share the fine noise path.
IncrementSource coupled_increments(const NoiseModel& noise, std::uint64_t master_seed, std::uint64_t sample_index,
                                   double dt, int factor);
IncrementSource zero_increments(const NoiseModel& noise, double dt);

struct Trajectory {
    StepperPtr stepper;
    std::uint64_t master_seed = 0;
    std::uint64_t sample_index = 0;
    std::vector<Vec> u;            // u^0 .. u^N
    std::vector<Vec> increments;   // coefficients of Delta W^1 .. Delta W^N
    std::vector<Vec> m_partial;    // M^0 = 0, M^n = sum_{i<n} f(Pi u^i) Delta W^{i+1}, at quadrature points
    std::vector<double> residuals;
    std::vector<int> newton_iters;
    int fixed_point_steps = 0;
    int N() const { return static_cast<int>(u.size()) - 1; }
};

struct TrajectoryOptions {
    bool store_martingale = true;
};

Trajectory run_trajectory(StepperPtr stepper, const Vec& u0, const IncrementSource& source,
                          const TrajectoryOptions& opts = {});
Trajectory run_trajectory(StepperPtr stepper, const ScalarField& u0, std::uint64_t master_seed,
                          std::uint64_t sample_index, const TrajectoryOptions& opts = {});
/// Noise-free run (all increments zero).
Trajectory run_deterministic(StepperPtr stepper, const ScalarField& u0);

/// Per-step violation of the identity obtained by testing the scheme with u^{n+1}.
std::vector<double> energy_identity_violations(const Trajectory& traj);
double energy_identity_residual(const Trajectory& traj);

/// LHS - RHS of the pathwise discrete energy inequality at every k (should be <= 0 up to round-off).
std::vector<double> energy_inequality_gaps(const Trajectory& traj);

}  // namespace sgdm
