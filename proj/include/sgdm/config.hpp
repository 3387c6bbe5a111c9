#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgdm/analysis.hpp"

namespace sgdm {

/// Invalid experiment configuration. what() starts with the offending key path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& message);
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct MeshSpec {
    std::string generator = "interval";  // interval | rectangle | file
    int n = 16;                          // cells per direction at level 0
    std::vector<double> box{0.0, 1.0};   // [a, b] or [x0, y0, x1, y1]
    std::string file;                    // level 0 mesh when generator = file; finer levels refine it
    bool operator==(const MeshSpec&) const = default;
};

struct TimeSpec {
    double T = 1.0;
    int N = 32;                     // steps at level 0
    int factor = 2;                 // N multiplies by this per level
    std::string rule = "factor";    // factor | h_squared (dt = dt_scale h^2, final time N dt nearest to T)
    double dt_scale = 1.0;
    bool operator==(const TimeSpec&) const = default;
};

struct FluxSpec {
    std::string kind = "PLaplace";  // PLaplace | RegularizedPLaplace | LinearDiffusion | Custom
    double p = 2.0;
    double epsilon = -1.0;          // Newton smoothing for p < 2; negative selects the default
    std::string custom;             // name for kind = Custom
    bool operator==(const FluxSpec&) const = default;
};

struct NoiseSpec {
    int k_max = 8;
    double s = 1.5;
    std::string f0 = "tanh";        // zero | constant | identity | tanh | square
    double f0_constant = 1.0;
    std::optional<double> F1;       // override the derived growth constants
    std::optional<double> F2;
    bool operator==(const NoiseSpec&) const = default;
};

struct InitialSpec {
    std::string kind = "sine";      // zero | sine | bump | file
    double amplitude = 1.0;
    std::string file;               // nodal values, one per DOF of level 0, whitespace separated
    bool operator==(const InitialSpec&) const = default;
};

struct EstimatorSpec {
    bool energy = true;
    bool translates = true;
    bool dual = true;
    bool martingale = true;
    std::vector<int> ells;          // empty: powers of two below N at level 0, at most 8
    std::vector<int> dual_rs{2};
    std::vector<int> moment_qs{1, 2, 3};
    double beta = 0.25;
    int martingale_r = 2;
    bool operator==(const EstimatorSpec&) const = default;
};

/// Pass thresholds of the run and convergence commands.
struct CheckSpec {
    double level_slack = 2.0;        // estimators bounded by slack * coarsest level
    double identity_tol = 1e-8;      // pathwise energy identity residual
    double translate_slope = 0.8;
    double dual_slope_factor = 0.8;  // slope >= factor * alpha * r
    double min_order = 1.8;          // exact-solution convergence order in h
    bool operator==(const CheckSpec&) const = default;
};

struct IndicatorSpec {
    double p = 2.0;
    std::vector<double> shifts{0.05, 0.1, 0.2};  // |xi| for the compactness indicator
    double t_slack = 1.5;
    double poincare_tol = 1e-3;
    double w_conforming_tol = 1e-10;
    double w_order = 0.8;
    bool operator==(const IndicatorSpec&) const = default;
};

struct ProbeSpec {
    long samples = 100000;
    double value_range = 10.0;
    double grad_range = 10.0;
    long growth_trials = 2000;
    std::vector<double> amplitudes{0.1, 1.0, 10.0};
    bool operator==(const ProbeSpec&) const = default;
};

/// Single-DOF linear check against the exact Gaussian recursion; uses the level-0 box and gd kind.
struct OracleSpec {
    long samples = 100000;
    int N = 16;
    double T = 1.0;
    double f0_constant = 1.0;
    double u0 = 1.0;                // initial DOF value
    double n_se = 3.0;
    bool operator==(const OracleSpec&) const = default;
};

struct ExperimentConfig {
    MeshSpec mesh;
    std::string gd = "P1Conforming";
    int levels = 1;
    TimeSpec time;
    FluxSpec flux;
    NoiseSpec noise;
    InitialSpec u0;
    long n_samples = 100;
    std::uint64_t master_seed = 1;
    SolverConfig solver;
    EstimatorSpec estimators;
    CheckSpec checks;
    IndicatorSpec indicators;
    ProbeSpec probe;
    OracleSpec oracle;
    std::string convergence = "auto";  // auto | exact | coupled
    int dump_trajectories = 0;         // first samples of the finest level written in full
    std::string output = "out";

    bool operator==(const ExperimentConfig& o) const;
    void validate() const;  // throws ConfigError
};

/// Unknown keys and type mismatches are reported with their key path.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);
/// FNV-1a of the canonical (sorted-key, compact) JSON dump.
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Builders for the objects an experiment runs on.
std::shared_ptr<const Mesh> build_level_mesh(const ExperimentConfig& cfg, int level);
struct LevelTime {
    double T = 0.0;
    int N = 0;
};
LevelTime level_time(const ExperimentConfig& cfg, int level, double h);
FluxModel build_flux(const ExperimentConfig& cfg);
NoiseModel build_noise(const ExperimentConfig& cfg, const Mesh& mesh);
StepperPtr build_stepper(const ExperimentConfig& cfg, int level);
std::vector<StepperPtr> build_levels(const ExperimentConfig& cfg);
/// Initial DOF vector on the given level.
Vec build_u0(const ExperimentConfig& cfg, const GradientDiscretisation& gd);
/// Pointwise u0; file data is reconstructed from the level-0 discretisation.
ScalarField initial_field(const ExperimentConfig& cfg);
/// Empty lag lists are filled with the powers of two below N0 (the level-0 step count), at most 8.
EstimatorConfig build_estimator_config(const ExperimentConfig& cfg, int N0);

}  // namespace sgdm
