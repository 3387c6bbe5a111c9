#include "sgdm/scheme.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <limits>

namespace sgdm {

void SpaceTimeGD::validate() const {
    if (!gd) throw std::invalid_argument("space-time GD needs a space discretisation");
    if (!(T > 0.0)) throw std::invalid_argument("final time T must be > 0");
    if (N < 1) throw std::invalid_argument("number of time steps N must be >= 1");
}

void SolverConfig::validate() const {
    if (!(newton_tol > 0.0)) throw std::invalid_argument("newton_tol must be > 0");
    if (max_newton < 0 || max_fixed_point < 0) throw std::invalid_argument("iteration limits must be >= 0");
    if (!(line_search_shrink > 0.0 && line_search_shrink < 1.0)) {
        throw std::invalid_argument("line_search_shrink must lie in (0, 1)");
    }
}

StepFailure::StepFailure(int step, Vec best, double residual, int iterations)
    : std::runtime_error("nonlinear solve failed at step " + std::to_string(step) + " (residual " +
                         std::to_string(residual) + " after " + std::to_string(iterations) + " iterations)"),
      step_(step),
      best_(std::move(best)),
      residual_(residual),
      iterations_(iterations) {}

Stepper::Stepper(SpaceTimeGD sgd, FluxModel flux, NoiseModel noise, SolverConfig cfg)
    : sgd_(std::move(sgd)),
      flux_(std::move(flux)),
      noise_(std::move(noise)),
      cfg_(cfg),
      assembler_((sgd_.validate(), sgd_.gd), noise_),
      symmetric_(flux_.kind() != FluxKind::Custom) {
    cfg_.validate();
    const Mesh& m = sgd_.gd->mesh();
    cell_measure_.resize(m.n_cells());
    for (int c = 0; c < m.n_cells(); ++c) cell_measure_[c] = m.cell_measure(c);
}

Vec Stepper::noise_values(const Vec& u_n, const NoiseIncrement& inc) const { return assembler_.apply(u_n, inc); }

Vec Stepper::noise_load(const Vec& u_n, const NoiseIncrement& inc) const {
    return assembler_.load(noise_values(u_n, inc));
}

namespace {

template <class Fn>
void for_each_cell_point(const Quadrature& quad, const Vec& pu, Fn&& fn) {
    for (int q = 0; q < quad.size(); ++q) fn(quad.cell[q], quad.weights[q], pu[q]);
}

}  // namespace

Vec Stepper::flux_integrals(const Vec& u) const {
    const int dim = gd().dim();
    const Vec g = gd().gradient_matrix() * u;
    const int nc = static_cast<int>(cell_measure_.size());
    Vec out = Vec::Zero(g.size());
    FluxVec y(dim);
    if (!flux_.depends_on_value()) {
        for (int c = 0; c < nc; ++c) {
            for (int d = 0; d < dim; ++d) y[d] = g[c * dim + d];
            const FluxVec a = flux_.eval(0.0, y);
            for (int d = 0; d < dim; ++d) out[c * dim + d] = cell_measure_[c] * a[d];
        }
        return out;
    }
    const Quadrature& quad = gd().quadrature();
    const Vec pu = quad.values * u;
    for_each_cell_point(quad, pu, [&](int c, double w, double val) {
        for (int d = 0; d < dim; ++d) y[d] = g[c * dim + d];
        const FluxVec a = flux_.eval(val, y);
        for (int d = 0; d < dim; ++d) out[c * dim + d] += w * a[d];
    });
    return out;
}

double Stepper::flux_pairing(const Vec& u) const {
    return flux_integrals(u).dot(gd().gradient_matrix() * u);
}

Vec Stepper::residual(const Vec& u, const Vec& u_n, const Vec& load) const {
    return gd().mass_matrix() * (u - u_n) + sgd_.dt() * (gd().gradient_matrix().transpose() * flux_integrals(u)) -
           load;
}

SpMat Stepper::jacobian(const Vec& u, double eps) const {
    const int dim = gd().dim();
    const Vec g = gd().gradient_matrix() * u;
    const int nc = static_cast<int>(cell_measure_.size());
    std::vector<FluxMat> blocks(static_cast<std::size_t>(nc), FluxMat::Zero(dim, dim));
    FluxVec y(dim);
    if (!flux_.depends_on_value()) {
        for (int c = 0; c < nc; ++c) {
            for (int d = 0; d < dim; ++d) y[d] = g[c * dim + d];
            blocks[c] = cell_measure_[c] * flux_.jacobian(0.0, y, eps);
        }
    } else {
        // Derivative in the gradient argument only; the value dependence is left to the line search.
        const Quadrature& quad = gd().quadrature();
        const Vec pu = quad.values * u;
        for_each_cell_point(quad, pu, [&](int c, double w, double val) {
            for (int d = 0; d < dim; ++d) y[d] = g[c * dim + d];
            blocks[c] += w * flux_.jacobian(val, y, eps);
        });
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nc * dim * dim));
    for (int c = 0; c < nc; ++c) {
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) trip.emplace_back(c * dim + i, c * dim + j, blocks[c](i, j));
        }
    }
    SpMat B(nc * dim, nc * dim);
    B.setFromTriplets(trip.begin(), trip.end());
    const SpMat& G = gd().gradient_matrix();
    return SpMat(gd().mass_matrix() + sgd_.dt() * SpMat(G.transpose() * B * G));
}

SpMat Stepper::frozen_operator(const Vec& u) const {
    const int dim = gd().dim();
    const Vec g = gd().gradient_matrix() * u;
    const int nc = static_cast<int>(cell_measure_.size());
    Vec w(nc * dim);
    FluxVec y(dim);
    for (int c = 0; c < nc; ++c) {
        for (int d = 0; d < dim; ++d) y[d] = g[c * dim + d];
        const double s = cell_measure_[c] * flux_.secant_weight(0.0, y);
        for (int d = 0; d < dim; ++d) w[c * dim + d] = s;
    }
    const SpMat& G = gd().gradient_matrix();
    return SpMat(gd().mass_matrix() + sgd_.dt() * SpMat(G.transpose() * w.asDiagonal() * G));
}

Vec Stepper::solve_linear(const SpMat& A, const Vec& rhs) const {
    if (symmetric_) {
        Eigen::SimplicialLDLT<SpMat> ldlt(A);
        if (ldlt.info() == Eigen::Success) {
            Vec x = ldlt.solve(rhs);
            if (ldlt.info() == Eigen::Success && x.allFinite()) return x;
        }
    }
    Eigen::SparseLU<SpMat> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) return Vec::Constant(rhs.size(), std::numeric_limits<double>::quiet_NaN());
    return lu.solve(rhs);
}

StepResult Stepper::solve_step(const Vec& u_n, const NoiseIncrement& inc, int step_index) const {
    return solve_with_load(u_n, noise_load(u_n, inc), step_index);
}

StepResult Stepper::solve_with_load(const Vec& u_n, const Vec& load, int step_index) const {
    if (u_n.size() != gd().n_dofs()) throw std::invalid_argument("solve_step: u_n has the wrong size");
    const double tol = cfg_.newton_tol;
    StepResult res;
    Vec u = u_n;
    Vec r = residual(u, u_n, load);
    double rn = r.norm();
    Vec best = u;
    double best_rn = rn;
    int iters = 0;

    // Damped Newton with Armijo backtracking on the residual norm. For p < 2 a heavily
    // damped step shrinks the smoothing epsilon, since tiny gradients need a steeper Jacobian.
    double eps = flux_.newton_epsilon();
    const bool continuation = flux_.kind() == FluxKind::PLaplace && flux_.p() < 2.0;
    for (int it = 0; it < cfg_.max_newton && rn > tol; ++it) {
        const Vec du = solve_linear(jacobian(u, eps), -r);
        ++iters;
        if (!du.allFinite()) break;
        double t = 1.0;
        bool accepted = false;
        while (t > 1e-8) {
            const Vec trial = u + t * du;
            const Vec rt = residual(trial, u_n, load);
            const double tn = rt.norm();
            if (std::isfinite(tn) && tn <= (1.0 - 1e-4 * t) * rn) {
                u = trial;
                r = rt;
                rn = tn;
                accepted = true;
                break;
            }
            t *= cfg_.line_search_shrink;
        }
        if (rn < best_rn) {
            best = u;
            best_rn = rn;
        }
        if (continuation && eps > 1e-15 && t < 0.25) {
            eps *= 1e-3;
            if (!accepted) continue;
        }
        if (!accepted) break;
    }

    if (best_rn > tol) {
        // Frozen-coefficient (Kacanov) iteration from the best Newton iterate.
        res.used_fixed_point = true;
        u = best;
        r = residual(u, u_n, load);
        rn = r.norm();
        for (int it = 0; it < cfg_.max_fixed_point && rn > tol; ++it) {
            const Vec du = solve_linear(frozen_operator(u), -r);
            ++iters;
            if (!du.allFinite()) break;
            u += du;
            r = residual(u, u_n, load);
            rn = r.norm();
            if (!std::isfinite(rn)) break;
            if (rn < best_rn) {
                best = u;
                best_rn = rn;
            }
        }
    }
    if (!(best_rn <= tol)) throw StepFailure(step_index, best, best_rn, iters);
    res.u = std::move(best);
    res.residual = best_rn;
    res.iterations = iters;
    return res;
}

IncrementSource stream_increments(const NoiseModel& noise, std::uint64_t master_seed, std::uint64_t sample_index,
                                  double dt) {
    return [noise, master_seed, sample_index, dt](int n) {
        return sample_increment(noise, RngStream{master_seed, sample_index, static_cast<std::uint64_t>(n)}, dt);
    };
}

IncrementSource coupled_increments(const NoiseModel& noise, std::uint64_t master_seed, std::uint64_t sample_index,
                                   double dt, int factor) {
    if (factor < 1) throw std::invalid_argument("coupling factor must be >= 1");
    const double fine_dt = dt / factor;
    return [noise, master_seed, sample_index, fine_dt, factor, dt](int n) {
        NoiseIncrement inc;
        inc.dt = dt;
        inc.coeffs = Vec::Zero(noise.k_max());
        for (int j = 0; j < factor; ++j) {
            const auto idx = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(factor) + j;
            inc.coeffs += sample_increment(noise, RngStream{master_seed, sample_index, idx}, fine_dt).coeffs;
        }
        return inc;
    };
}

IncrementSource zero_increments(const NoiseModel& noise, double dt) {
    const int k = noise.k_max();
    return [k, dt](int) { return NoiseIncrement{Vec::Zero(k), dt}; };
}

Trajectory run_trajectory(StepperPtr stepper, const Vec& u0, const IncrementSource& source,
                          const TrajectoryOptions& opts) {
    const int N = stepper->sgd().N;
    const GradientDiscretisation& gd = stepper->gd();
    if (u0.size() != gd.n_dofs()) throw std::invalid_argument("initial vector has the wrong size");
    Trajectory tr;
    tr.stepper = stepper;
    tr.u.reserve(static_cast<std::size_t>(N) + 1);
    tr.u.push_back(u0);
    if (opts.store_martingale) tr.m_partial.push_back(Vec::Zero(gd.quadrature().size()));
    for (int n = 0; n < N; ++n) {
        // Delta W^{n+1} is drawn only now that u^n is fixed.
        const NoiseIncrement inc = source(n);
        const Vec g = stepper->noise_values(tr.u[n], inc);
        const StepResult st = stepper->solve_with_load(tr.u[n], stepper->assembler().load(g), n);
        tr.increments.push_back(inc.coeffs);
        tr.residuals.push_back(st.residual);
        tr.newton_iters.push_back(st.iterations);
        if (st.used_fixed_point) ++tr.fixed_point_steps;
        if (opts.store_martingale) tr.m_partial.push_back(tr.m_partial.back() + g);
        tr.u.push_back(st.u);
    }
    return tr;
}

Trajectory run_trajectory(StepperPtr stepper, const ScalarField& u0, std::uint64_t master_seed,
                          std::uint64_t sample_index, const TrajectoryOptions& opts) {
    const Vec v0 = stepper->gd().interpolate_initial(u0);
    Trajectory tr =
        run_trajectory(stepper, v0, stream_increments(stepper->noise(), master_seed, sample_index, stepper->sgd().dt()),
                       opts);
    tr.master_seed = master_seed;
    tr.sample_index = sample_index;
    return tr;
}

Trajectory run_deterministic(StepperPtr stepper, const ScalarField& u0) {
    const Vec v0 = stepper->gd().interpolate_initial(u0);
    return run_trajectory(stepper, v0, zero_increments(stepper->noise(), stepper->sgd().dt()));
}

namespace {

NoiseIncrement increment_of(const Trajectory& traj, int n) {
    return NoiseIncrement{traj.increments[static_cast<std::size_t>(n)], traj.stepper->sgd().dt()};
}

}  // namespace

std::vector<double> energy_identity_violations(const Trajectory& traj) {
    const Stepper& st = *traj.stepper;
    const SpMat& M = st.gd().mass_matrix();
    const double dt = st.sgd().dt();
    std::vector<double> out;
    for (int n = 0; n < traj.N(); ++n) {
        const Vec& a = traj.u[n + 1];
        const Vec& b = traj.u[n];
        const Vec d = a - b;
        const double lhs = 0.5 * a.dot(M * a) + 0.5 * d.dot(M * d) + dt * st.flux_pairing(a);
        const double rhs = 0.5 * b.dot(M * b) + st.noise_load(b, increment_of(traj, n)).dot(a);
        out.push_back(std::abs(lhs - rhs));
    }
    return out;
}

double energy_identity_residual(const Trajectory& traj) {
    double m = 0.0;
    for (double v : energy_identity_violations(traj)) m = std::max(m, v);
    return m;
}

std::vector<double> energy_inequality_gaps(const Trajectory& traj) {
    const Stepper& st = *traj.stepper;
    const GradientDiscretisation& gd = st.gd();
    const SpMat& M = gd.mass_matrix();
    const double dt = st.sgd().dt();
    const double p = st.flux().p();
    const double c1 = st.flux().c1();
    double lhs_sum = 0.0;
    double rhs = 0.5 * traj.u[0].dot(M * traj.u[0]);
    std::vector<double> gaps;
    for (int n = 0; n < traj.N(); ++n) {
        const Vec& a = traj.u[n + 1];
        const Vec& b = traj.u[n];
        const Vec d = a - b;
        lhs_sum += 0.25 * d.dot(M * d) + c1 * dt * std::pow(gd.grad_lp_norm(a, p), p);
        const NoiseIncrement inc = increment_of(traj, n);
        rhs += st.assembler().operator_norm_sq(b) * inc.coeffs.squaredNorm() + st.noise_load(b, inc).dot(b);
        gaps.push_back(0.5 * a.dot(M * a) + lhs_sum - rhs);
    }
    return gaps;
}

}  // namespace sgdm
