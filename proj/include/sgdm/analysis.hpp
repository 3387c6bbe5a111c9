#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "sgdm/scheme.hpp"

namespace sgdm {

// ---------------------------------------------------------------- statistics

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean
    long n = 0;
};

MeanSE mean_se(const std::vector<double>& xs);

struct VarianceSE {
    double var = 0.0;  // unbiased sample variance
    double se = 0.0;   // from the empirical fourth central moment
};

VarianceSE variance_se(const std::vector<double>& xs);

/// Least-squares slope of log(y) against log(x). All entries must be positive.
double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

// ------------------------------------------------ piecewise constant paths

/// Path constant on each interval (n dt, (n+1) dt], stored by pairwise squared L^2 distances.
struct IntervalPath {
    double dt = 0.0;
    Eigen::MatrixXd dist2;
    int n_intervals() const { return static_cast<int>(dist2.rows()); }
    double T() const { return dt * n_intervals(); }
};

/// Values given by DOF vectors with L^2 Gram matrix M.
IntervalPath path_from_dofs(double dt, const std::vector<Vec>& values, const SpMat& M);
/// Values sampled at quadrature points with the given weights.
IntervalPath path_from_samples(double dt, const std::vector<Vec>& values, const Vec& weights);
/// t -> Pi_D u(t), taking Pi_D u^{n+1} on (t^n, t^{n+1}].
IntervalPath solution_path(const Trajectory& traj);
/// t -> M_D(t), the sum of the noise terms added up to the step ending after t.
IntervalPath martingale_path(const Trajectory& traj);

/// int_0^{T-rho} ||g(t+rho) - g(t)||^2 dt in closed form. rho in (0, T).
double continuous_translate(const IntervalPath& path, double rho);
/// int_0^T int_0^{T-rho} ||g(s+rho) - g(s)||^q ds drho / rho^{1+beta q}, exact. beta in (0,1/2), q >= 1, beta q < 1.
double fractional_norm(const IntervalPath& path, double beta, double q_exp);

// --------------------------------------------------------------- dual norm

struct DualNormOptions {
    int restarts = 10;          // extra random starting points
    int max_iterations = 200;   // fixed-point iterations per start
    double tolerance = 1e-13;   // relative change of the ratio
    int polish_iterations = 50; // gradient ascent steps after the fixed point
    std::uint64_t seed = 0xd0a1;
    int oracle_dof_limit = 20;  // dense sampling cross-check up to this many DOFs
    int oracle_samples = 4000;
};

struct DualNormResult {
    double value = 0.0;  // attained by an explicit test vector, hence a lower bound of the supremum
    double oracle_value = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();  // oracle_value - value when the oracle ran
    int iterations = 0;
};

/// sup { int Pi_D w Pi_D phi : ||Pi_D phi||_{L^2} + ||grad_D phi||_{L^p} <= 1 } for the DOF vector w.
DualNormResult dual_norm(const GradientDiscretisation& gd, const Vec& w, double p, const DualNormOptions& opts = {});
/// Same for v given at the GD quadrature points; throws std::invalid_argument if v is not in the range of Pi_D.
DualNormResult dual_norm_samples(const GradientDiscretisation& gd, const Vec& v, double p,
                                 const DualNormOptions& opts = {});
/// c . phi / (||Pi phi||_2 + ||grad phi||_p) with c = M w.
double dual_ratio(const GradientDiscretisation& gd, const Vec& c, const Vec& phi, double p);

// -------------------------------------------------------------- estimators

struct EstimatorConfig {
    bool energy = true;
    bool translates = true;
    bool dual = true;
    bool martingale = true;
    std::vector<int> ells{1, 2, 4, 8};
    std::vector<int> dual_rs{2};
    std::vector<int> moment_qs{1, 2, 3};
    double beta = 0.25;
    int martingale_r = 2;
    DualNormOptions dual_options{0, 200, 1e-13, 50, 0xd0a1, 0};  // no restarts, no oracle
    void validate(int N) const;
};

/// Per-path summaries; the ensemble keeps these instead of full trajectories.
struct PathFeatures {
    double max_l2_sq = 0.0;       // max_{1<=n<=N} ||Pi u^n||^2
    double grad_lp_p = 0.0;       // ||grad_D u||^p_{L^p(Theta_T)}
    double increment_sum = 0.0;   // sum_n ||Pi u^{n+1} - Pi u^n||^2
    std::vector<double> moments;  // per q: max_n ||Pi u^n||^{2^q} + ||grad_D u||^{p 2^{q-1}}
    std::vector<double> translates;          // per ell: dt sum_{n=1}^{N-ell} ||Pi u^{n+ell} - Pi u^n||^2
    std::vector<std::vector<double>> dual;   // [r][ell]: mean over n of |Pi u^{n+ell} - Pi u^n|^r_*
    double m_hbeta_sq = 0.0;
    double m_sup_r = 0.0;
    double m_increment_mean = 0.0;           // mean over n of <M^{n+1} - M^n, phi>
    std::vector<double> m_norm_sq;           // ||M^n||^2, n = 0..N
    double identity_residual = 0.0;
    double inequality_gap = -std::numeric_limits<double>::infinity();
    int fixed_point_steps = 0;
};

PathFeatures path_features(const Trajectory& traj, const EstimatorConfig& cfg);

struct DualEntry {
    int ell = 0;
    int r = 0;
    MeanSE value;
};

struct EstimatorReport {
    long n_samples = 0;
    double dt = 0.0;
    MeanSE energy_max_l2_sq;
    MeanSE grad_lp_p;
    MeanSE increment_sum;
    MeanSE apriori;  // sum of the three above, per path
    std::vector<std::pair<int, MeanSE>> higher_moments;
    std::vector<std::pair<int, MeanSE>> translate_table;
    std::vector<DualEntry> dual_increment_table;
    MeanSE martingale_hbeta_sq;
    MeanSE martingale_sup_r;
    MeanSE martingale_increment_mean;
    std::vector<MeanSE> martingale_norm_sq;  // per n
    double beta = 0.25;
    double alpha = 0.5;
    double max_identity_residual = 0.0;
    double max_inequality_gap = -std::numeric_limits<double>::infinity();
    long fixed_point_steps = 0;
    double translate_slope = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::pair<int, double>> dual_slopes;  // per r
};

/// Reduction in sample order; bit-identical for a given feature sequence.
EstimatorReport reduce_features(const std::vector<PathFeatures>& feats, const EstimatorConfig& cfg, double dt,
                                double p);

/// Simulates samples [0, n_samples) with streams of master_seed and reduces their features.
struct EnsembleSpec {
    StepperPtr stepper;
    Vec u0;
    std::uint64_t master_seed = 0;
    long n_samples = 1;
    int workers = 1;
    /// Time steps of the finest level when coupling; 0 uses independent per-level streams.
    int coupling_factor = 0;
};

std::vector<PathFeatures> ensemble_features(const EnsembleSpec& spec, const EstimatorConfig& cfg);
EstimatorReport run_estimators(const EnsembleSpec& spec, const EstimatorConfig& cfg);

EstimatorReport energy_estimators(const std::vector<Trajectory>& paths);
std::vector<std::pair<int, MeanSE>> time_translate_estimator(const std::vector<Trajectory>& paths,
                                                             const std::vector<int>& ells);
std::vector<DualEntry> dual_increment_estimator(const std::vector<Trajectory>& paths, const std::vector<int>& ells,
                                                int r, const DualNormOptions& opts = DualNormOptions{0, 200, 1e-13, 50, 0xd0a1, 0});
EstimatorReport martingale_stats(const std::vector<Trajectory>& paths, double beta, int r);

// ------------------------------------------------------------------ oracles

struct OUSequence {
    std::vector<double> mean;  // n = 0..N
    std::vector<double> var;
};

/// Exact law of the single-DOF linear scheme u^{n+1} = (m u^n + f0 q1 sqrt(dt) xi b) / (m + dt k).
OUSequence ou_oracle(double stiffness, double mass, double q1, double f0_const, double load_b, double dt, int N,
                     double mean0, double var0 = 0.0);

// -------------------------------------------------------------- convergence

struct ConvergenceRow {
    int level = 0;
    double h = 0.0;
    int N = 0;
    double error = std::numeric_limits<double>::quiet_NaN();  // vs exact solution, or coupled difference mean
    double error_se = 0.0;
    double order = std::numeric_limits<double>::quiet_NaN();
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    bool strictly_decreasing = false;
};

using SpaceTimeField = std::function<double(const Point&, double)>;

/// max_n ||Pi u^n - u(t^n)||_{L^2} per level, orders in h.
ConvergenceReport deterministic_convergence(const std::vector<StepperPtr>& levels, const ScalarField& u0,
                                            const SpaceTimeField& exact, int quad_points = 8);

/// ||Pi u_coarse - Pi u_fine||_{L^p(Theta_T)} for nested meshes and time grids.
double coupled_lp_difference(const Trajectory& coarse, const Trajectory& fine, double p, int quad_points = 6);

/// Mean coupled differences between successive levels; all levels share the finest-level noise path.
ConvergenceReport coupled_convergence(const std::vector<StepperPtr>& levels, const ScalarField& u0,
                                      std::uint64_t master_seed, long n_samples, int workers);

/// Checks that levels share T, flux and noise and are nested in space and time; throws otherwise.
void check_level_compatibility(const std::vector<StepperPtr>& levels);

}  // namespace sgdm
