#include "sgdm/analysis.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "sgdm/parallel.hpp"

namespace sgdm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

MeanSE mean_se(const std::vector<double>& xs) {
    MeanSE r;
    r.n = static_cast<long>(xs.size());
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / r.n;
    if (r.n < 2) return r;
    double v = 0.0;
    for (double x : xs) v += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(v / (r.n - 1) / r.n);
    return r;
}

VarianceSE variance_se(const std::vector<double>& xs) {
    const long n = static_cast<long>(xs.size());
    if (n < 2) throw std::invalid_argument("variance_se needs at least two samples");
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d2 = (x - m) * (x - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    VarianceSE r;
    r.var = m2 / (n - 1);
    m2 /= n;
    m4 /= n;
    r.se = std::sqrt(std::max(0.0, (m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n));
    return r;
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("loglog_slope needs >= 2 matching points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw std::invalid_argument("loglog_slope needs positive data");
        const double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ------------------------------------------------------------------- paths

IntervalPath path_from_dofs(double dt, const std::vector<Vec>& values, const SpMat& M) {
    const int n = static_cast<int>(values.size());
    IntervalPath p;
    p.dt = dt;
    p.dist2 = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const Vec d = values[i] - values[j];
            p.dist2(i, j) = p.dist2(j, i) = std::max(0.0, d.dot(M * d));
        }
    }
    return p;
}

IntervalPath path_from_samples(double dt, const std::vector<Vec>& values, const Vec& weights) {
    const int n = static_cast<int>(values.size());
    IntervalPath p;
    p.dt = dt;
    p.dist2 = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            p.dist2(i, j) = p.dist2(j, i) = weights.dot((values[i] - values[j]).cwiseAbs2());
        }
    }
    return p;
}

IntervalPath solution_path(const Trajectory& traj) {
    const std::vector<Vec> vals(traj.u.begin() + 1, traj.u.end());
    return path_from_dofs(traj.stepper->sgd().dt(), vals, traj.stepper->gd().mass_matrix());
}

IntervalPath martingale_path(const Trajectory& traj) {
    if (traj.m_partial.size() != traj.u.size()) throw std::invalid_argument("trajectory carries no martingale sums");
    const std::vector<Vec> vals(traj.m_partial.begin() + 1, traj.m_partial.end());
    return path_from_samples(traj.stepper->sgd().dt(), vals, traj.stepper->assembler().quadrature().weights);
}

double continuous_translate(const IntervalPath& path, double rho) {
    const int N = path.n_intervals();
    const double dt = path.dt;
    if (!(rho > 0.0 && rho < path.T())) throw std::invalid_argument("continuous_translate: rho must lie in (0, T)");
    int l = static_cast<int>(std::floor(rho / dt));
    double e = rho - l * dt;
    if (l >= N) {
        l = N - 1;
        e = dt;
    }
    // A point of interval i lands in interval i+l for a length dt-e and in i+l+1 for a length e.
    double s = 0.0;
    for (int i = 0; i + l < N; ++i) s += (dt - e) * path.dist2(i, i + l);
    for (int i = 0; i + l + 1 < N; ++i) s += e * path.dist2(i, i + l + 1);
    return s;
}

double fractional_norm(const IntervalPath& path, double beta, double q_exp) {
    if (!(beta > 0.0 && beta < 0.5)) throw std::invalid_argument("fractional_norm: beta must lie in (0, 1/2)");
    if (!(q_exp >= 1.0)) throw std::invalid_argument("fractional_norm: exponent q must be >= 1");
    if (!(beta * q_exp < 1.0)) throw std::invalid_argument("fractional_norm: beta*q must be < 1 for a finite norm");
    const int N = path.n_intervals();
    const double dt = path.dt;
    // Phi(rho) = int ||g(s+rho)-g(s)||^q ds is piecewise linear with nodes Phi(k dt) = dt S_k.
    std::vector<double> phi(static_cast<std::size_t>(N) + 1, 0.0);
    for (int k = 1; k < N; ++k) {
        double s = 0.0;
        for (int i = 0; i + k < N; ++i) s += std::pow(path.dist2(i, i + k), 0.5 * q_exp);
        phi[k] = dt * s;
    }
    const double a = -1.0 - beta * q_exp;
    double total = 0.0;
    for (int k = 0; k < N; ++k) {
        if (phi[k] == 0.0 && phi[k + 1] == 0.0) continue;
        const double x0 = k * dt, x1 = (k + 1) * dt;
        const double a1 = (phi[k + 1] - phi[k]) / dt;
        const double a0 = phi[k] - a1 * x0;
        double seg = a1 * (std::pow(x1, a + 2.0) - (x0 > 0.0 ? std::pow(x0, a + 2.0) : 0.0)) / (a + 2.0);
        if (a0 != 0.0) seg += a0 * (std::pow(x1, a + 1.0) - std::pow(x0, a + 1.0)) / (a + 1.0);
        total += seg;
    }
    return total;
}

// --------------------------------------------------------------- dual norm

namespace {

struct DualProblem {
    const GradientDiscretisation& gd;
    const Vec& c;
    double p;
    Vec cell_measure;

    DualProblem(const GradientDiscretisation& g, const Vec& cc, double pp) : gd(g), c(cc), p(pp) {
        cell_measure.resize(g.mesh().n_cells());
        for (int k = 0; k < g.mesh().n_cells(); ++k) cell_measure[k] = g.mesh().cell_measure(k);
    }

    // l2 = ||Pi phi||_2, gp = ||grad phi||_p, gmag = |grad phi| per cell.
    void norms(const Vec& phi, double& l2, double& gp, Vec& gmag, Vec& g) const {
        l2 = std::sqrt(std::max(0.0, phi.dot(gd.mass_matrix() * phi)));
        g = gd.gradient_matrix() * phi;
        const int d = gd.dim();
        gmag.resize(cell_measure.size());
        double s = 0.0;
        for (Eigen::Index k = 0; k < cell_measure.size(); ++k) {
            gmag[k] = g.segment(k * d, d).norm();
            s += cell_measure[k] * std::pow(gmag[k], p);
        }
        gp = std::pow(s, 1.0 / p);
    }

    double ratio(const Vec& phi) const {
        double l2, gp;
        Vec gm, g;
        norms(phi, l2, gp, gm, g);
        const double den = l2 + gp;
        return den > 0.0 ? c.dot(phi) / den : 0.0;
    }

    // Weighted cell factors |K| |g|^{p-2} / ||g||_p^{p-1} (the derivative of ||grad phi||_p is G^T diag(.) G phi).
    Vec grad_weights(const Vec& gmag, double gp) const {
        const int d = gd.dim();
        Vec w(cell_measure.size() * d);
        const double gmax = gmag.size() ? gmag.maxCoeff() : 0.0;
        const double floor = std::max(gmax * 1e-12, 1e-300);
        for (Eigen::Index k = 0; k < cell_measure.size(); ++k) {
            const double m = p < 2.0 ? std::max(gmag[k], floor) : gmag[k];
            const double v = cell_measure[k] * std::pow(m, p - 2.0) / std::pow(gp, p - 1.0);
            for (int j = 0; j < d; ++j) w[k * d + j] = v;
        }
        return w;
    }

    Vec ratio_gradient(const Vec& phi, double& r) const {
        double l2, gp;
        Vec gm, g;
        norms(phi, l2, gp, gm, g);
        const double den = l2 + gp;
        const double num = c.dot(phi);
        r = num / den;
        const Vec dden = gd.mass_matrix() * phi / l2 +
                         gd.gradient_matrix().transpose() * grad_weights(gm, gp).cwiseProduct(g);
        return (c * den - num * dden) / (den * den);
    }

    // Majorize-minimize fixed point phi <- (M/||Pi phi|| + G^T W G)^{-1} c.
    Vec fixed_point(Vec phi, int max_it, double tol, double& best_r, int& iters) const {
        phi /= phi.norm();
        Vec best = phi;
        best_r = ratio(phi);
        double prev = best_r;
        const SpMat& G = gd.gradient_matrix();
        for (int it = 0; it < max_it; ++it) {
            double l2, gp;
            Vec gm, g;
            norms(phi, l2, gp, gm, g);
            if (!(l2 > 0.0) || !(gp > 0.0)) break;
            const SpMat A = SpMat(gd.mass_matrix() / l2) + SpMat(G.transpose() * grad_weights(gm, gp).asDiagonal() * G);
            Eigen::SimplicialLDLT<SpMat> solver(A);
            if (solver.info() != Eigen::Success) break;
            Vec next = solver.solve(c);
            if (!next.allFinite()) break;
            ++iters;
            next /= next.norm();
            double r = ratio(next);
            // The update is a majorize-minimize step only for p <= 2; otherwise damp towards phi.
            for (int k = 0; k < 30 && r < prev; ++k) {
                next = 0.5 * (next + phi);
                next /= next.norm();
                r = ratio(next);
            }
            if (r < prev) break;
            phi = next;
            if (r > best_r) {
                best_r = r;
                best = phi;
            }
            if (std::abs(r - prev) <= tol * std::abs(r)) break;
            prev = r;
        }
        return best;
    }

    Vec polish(Vec phi, int max_it, double& r) const {
        r = ratio(phi);
        double step = 0.1;
        for (int it = 0; it < max_it; ++it) {
            double r0;
            const Vec gr = ratio_gradient(phi, r0);
            const double gn = gr.norm();
            if (!(gn > 0.0) || !std::isfinite(gn)) break;
            bool moved = false;
            for (int k = 0; k < 40; ++k) {
                const Vec trial = phi + (step * phi.norm() / gn) * gr;
                const double rt = ratio(trial);
                if (rt > r) {
                    phi = trial / trial.norm();
                    r = rt;
                    step *= 2.0;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
        return phi;
    }
};

}  // namespace

double dual_ratio(const GradientDiscretisation& gd, const Vec& c, const Vec& phi, double p) {
    return DualProblem(gd, c, p).ratio(phi);
}

DualNormResult dual_norm(const GradientDiscretisation& gd, const Vec& w, double p, const DualNormOptions& opts) {
    if (!(p > 1.0)) throw std::invalid_argument("dual_norm: p must be > 1");
    if (w.size() != gd.n_dofs()) throw std::invalid_argument("dual_norm: vector has the wrong size");
    DualNormResult res;
    const Vec c = gd.mass_matrix() * w;
    if (c.norm() == 0.0) {
        res.value = 0.0;
        if (gd.n_dofs() <= opts.oracle_dof_limit) res.oracle_value = res.gap = 0.0;
        return res;
    }
    const DualProblem prob(gd, c, p);

    auto run_from = [&](const Vec& start) {
        double r;
        int it = 0;
        Vec phi = prob.fixed_point(start, opts.max_iterations, opts.tolerance, r, it);
        res.iterations += it;
        phi = prob.polish(phi, opts.polish_iterations, r);
        res.value = std::max(res.value, r);
    };

    // Deterministic start on the p = 2 stationarity curve, then random restarts.
    Eigen::SimplicialLDLT<SpMat> mk(SpMat(gd.mass_matrix() + gd.stiffness_matrix()));
    run_from(mk.solve(c));
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal;
    for (int k = 0; k < opts.restarts; ++k) {
        Vec s(gd.n_dofs());
        for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = normal(rng);
        if (c.dot(s) < 0.0) s = -s;
        run_from(s);
    }

    if (gd.n_dofs() <= opts.oracle_dof_limit) {
        // Dense random sampling of directions followed by a long local polish.
        double best = 0.0;
        Vec best_phi = Vec::Zero(gd.n_dofs());
        for (int k = 0; k < opts.oracle_samples; ++k) {
            Vec s(gd.n_dofs());
            for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = normal(rng);
            const double r = std::abs(prob.ratio(s));
            if (r > best) {
                best = r;
                best_phi = prob.ratio(s) < 0.0 ? Vec(-s) : s;
            }
        }
        double r;
        prob.polish(best_phi, 2000, r);
        res.oracle_value = std::max(best, r);
        res.gap = res.oracle_value - res.value;
        res.value = std::max(res.value, res.oracle_value);
    }
    return res;
}

DualNormResult dual_norm_samples(const GradientDiscretisation& gd, const Vec& v, double p,
                                 const DualNormOptions& opts) {
    const Quadrature& q = gd.quadrature();
    if (v.size() != q.size()) throw std::invalid_argument("dual_norm: expected one value per quadrature point");
    const Vec b = q.values.transpose() * q.weights.cwiseProduct(v);
    Eigen::SimplicialLDLT<SpMat> solver(gd.mass_matrix());
    const Vec w = solver.solve(b);
    const double err = std::sqrt(q.weights.dot((q.values * w - v).cwiseAbs2()));
    const double scale = std::sqrt(q.weights.dot(v.cwiseAbs2()));
    if (err > 1e-8 * std::max(scale, 1e-300)) {
        throw std::invalid_argument("dual_norm: function is not in the range of the reconstruction operator");
    }
    return dual_norm(gd, w, p, opts);
}

// -------------------------------------------------------------- estimators

namespace {

bool is_power_of_two(int r) { return r >= 1 && (r & (r - 1)) == 0; }

Vec test_function_samples(const NoiseAssembler& as) {
    const Quadrature& q = as.quadrature();
    const GradientDiscretisation& gd = as.gd();
    const BoundingBox& box = gd.mesh().bounding_box();
    Vec phi(q.size());
    for (int i = 0; i < q.size(); ++i) {
        double v = 1.0;
        for (int d = 0; d < gd.dim(); ++d) v *= std::sin(kPi * (q.points[i][d] - box.lo[d]) / (box.hi[d] - box.lo[d]));
        phi[i] = v;
    }
    return phi;
}

}  // namespace

void EstimatorConfig::validate(int N) const {
    for (int l : ells) {
        if (l < 1 || l > N - 1) {
            throw std::invalid_argument("translate lag " + std::to_string(l) + " outside 1.." + std::to_string(N - 1));
        }
    }
    for (int r : dual_rs) {
        if (!is_power_of_two(r)) throw std::invalid_argument("dual exponent r must be a power of two, got " + std::to_string(r));
    }
    if (!is_power_of_two(martingale_r)) throw std::invalid_argument("martingale exponent r must be a power of two");
    for (int q : moment_qs) {
        if (q < 1) throw std::invalid_argument("moment exponents q must be >= 1");
    }
    if (!(beta > 0.0 && beta < 0.5)) throw std::invalid_argument("beta must lie in (0, 1/2)");
}

PathFeatures path_features(const Trajectory& traj, const EstimatorConfig& cfg) {
    const Stepper& st = *traj.stepper;
    const GradientDiscretisation& gd = st.gd();
    const SpMat& M = gd.mass_matrix();
    const int N = traj.N();
    const double dt = st.sgd().dt();
    const double p = st.flux().p();
    PathFeatures f;
    f.fixed_point_steps = traj.fixed_point_steps;

    if (cfg.energy) {
        for (int n = 1; n <= N; ++n) {
            f.max_l2_sq = std::max(f.max_l2_sq, traj.u[n].dot(M * traj.u[n]));
            f.grad_lp_p += dt * std::pow(gd.grad_lp_norm(traj.u[n], p), p);
            const Vec d = traj.u[n] - traj.u[n - 1];
            f.increment_sum += d.dot(M * d);
        }
        for (int q : cfg.moment_qs) {
            const double e = std::ldexp(1.0, q - 1);
            f.moments.push_back(std::pow(f.max_l2_sq, e) + std::pow(f.grad_lp_p, e));
        }
        f.identity_residual = energy_identity_residual(traj);
        for (double g : energy_inequality_gaps(traj)) f.inequality_gap = std::max(f.inequality_gap, g);
    }

    if (cfg.translates) {
        for (int l : cfg.ells) {
            double s = 0.0;
            for (int n = 1; n + l <= N; ++n) {
                const Vec d = traj.u[n + l] - traj.u[n];
                s += d.dot(M * d);
            }
            f.translates.push_back(dt * s);
        }
    }

    if (cfg.dual && !cfg.dual_rs.empty()) {
        std::vector<std::vector<double>> norms;
        for (int l : cfg.ells) {
            std::vector<double> row;
            for (int n = 0; n + l <= N; ++n) {
                row.push_back(dual_norm(gd, traj.u[n + l] - traj.u[n], p, cfg.dual_options).value);
            }
            norms.push_back(std::move(row));
        }
        for (int r : cfg.dual_rs) {
            std::vector<double> per_ell;
            for (const auto& row : norms) {
                double s = 0.0;
                for (double v : row) s += std::pow(v, r);
                per_ell.push_back(row.empty() ? 0.0 : s / static_cast<double>(row.size()));
            }
            f.dual.push_back(std::move(per_ell));
        }
    }

    if (cfg.martingale && traj.m_partial.size() == traj.u.size()) {
        const Vec& w = st.assembler().quadrature().weights;
        f.m_hbeta_sq = fractional_norm(martingale_path(traj), cfg.beta, 2.0);
        for (const Vec& m : traj.m_partial) {
            const double sq = w.dot(m.cwiseAbs2());
            f.m_norm_sq.push_back(sq);
            f.m_sup_r = std::max(f.m_sup_r, std::pow(std::sqrt(sq), cfg.martingale_r));
        }
        const Vec phi = test_function_samples(st.assembler()).cwiseProduct(w);
        double s = 0.0;
        for (int n = 0; n < N; ++n) s += phi.dot(traj.m_partial[n + 1] - traj.m_partial[n]);
        f.m_increment_mean = s / N;
    }
    return f;
}

EstimatorReport reduce_features(const std::vector<PathFeatures>& feats, const EstimatorConfig& cfg, double dt,
                                double p) {
    if (feats.empty()) throw std::invalid_argument("estimators need at least one path");
    EstimatorReport rep;
    rep.n_samples = static_cast<long>(feats.size());
    rep.dt = dt;
    rep.beta = cfg.beta;
    rep.alpha = std::min(0.5, 1.0 / p);
    auto collect = [&](auto&& get) {
        std::vector<double> xs;
        xs.reserve(feats.size());
        for (const auto& f : feats) xs.push_back(get(f));
        return mean_se(xs);
    };
    for (const auto& f : feats) {
        rep.max_identity_residual = std::max(rep.max_identity_residual, f.identity_residual);
        rep.max_inequality_gap = std::max(rep.max_inequality_gap, f.inequality_gap);
        rep.fixed_point_steps += f.fixed_point_steps;
    }
    if (cfg.energy) {
        rep.energy_max_l2_sq = collect([](const PathFeatures& f) { return f.max_l2_sq; });
        rep.grad_lp_p = collect([](const PathFeatures& f) { return f.grad_lp_p; });
        rep.increment_sum = collect([](const PathFeatures& f) { return f.increment_sum; });
        rep.apriori = collect([](const PathFeatures& f) { return f.max_l2_sq + f.grad_lp_p + f.increment_sum; });
        for (std::size_t i = 0; i < cfg.moment_qs.size(); ++i) {
            rep.higher_moments.emplace_back(cfg.moment_qs[i], collect([i](const PathFeatures& f) { return f.moments[i]; }));
        }
    }
    if (cfg.translates) {
        std::vector<double> ts, vs;
        bool positive = true;
        for (std::size_t i = 0; i < cfg.ells.size(); ++i) {
            const MeanSE m = collect([i](const PathFeatures& f) { return f.translates[i]; });
            rep.translate_table.emplace_back(cfg.ells[i], m);
            ts.push_back(cfg.ells[i] * dt);
            vs.push_back(m.mean);
            positive = positive && m.mean > 0.0;
        }
        if (positive && ts.size() >= 2) rep.translate_slope = loglog_slope(ts, vs);
    }
    if (cfg.dual && !cfg.dual_rs.empty()) {
        for (std::size_t ri = 0; ri < cfg.dual_rs.size(); ++ri) {
            std::vector<double> ts, vs;
            bool positive = true;
            for (std::size_t li = 0; li < cfg.ells.size(); ++li) {
                const MeanSE m = collect([ri, li](const PathFeatures& f) { return f.dual[ri][li]; });
                rep.dual_increment_table.push_back({cfg.ells[li], cfg.dual_rs[ri], m});
                ts.push_back(cfg.ells[li] * dt);
                vs.push_back(m.mean);
                positive = positive && m.mean > 0.0;
            }
            const double slope = positive && ts.size() >= 2 ? loglog_slope(ts, vs) : std::numeric_limits<double>::quiet_NaN();
            rep.dual_slopes.emplace_back(cfg.dual_rs[ri], slope);
        }
    }
    if (cfg.martingale && !feats.front().m_norm_sq.empty()) {
        rep.martingale_hbeta_sq = collect([](const PathFeatures& f) { return f.m_hbeta_sq; });
        rep.martingale_sup_r = collect([](const PathFeatures& f) { return f.m_sup_r; });
        rep.martingale_increment_mean = collect([](const PathFeatures& f) { return f.m_increment_mean; });
        for (std::size_t n = 0; n < feats.front().m_norm_sq.size(); ++n) {
            rep.martingale_norm_sq.push_back(collect([n](const PathFeatures& f) { return f.m_norm_sq[n]; }));
        }
    }
    return rep;
}

std::vector<PathFeatures> ensemble_features(const EnsembleSpec& spec, const EstimatorConfig& cfg) {
    if (!spec.stepper) throw std::invalid_argument("ensemble needs a stepper");
    if (spec.n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    cfg.validate(spec.stepper->sgd().N);
    const double dt = spec.stepper->sgd().dt();
    const NoiseModel& noise = spec.stepper->noise();
    TrajectoryOptions topts;
    topts.store_martingale = cfg.martingale;
    return parallel_map<PathFeatures>(spec.n_samples, spec.workers, [&](long i) {
        const auto idx = static_cast<std::uint64_t>(i);
        const IncrementSource src = spec.coupling_factor > 0
                                        ? coupled_increments(noise, spec.master_seed, idx, dt, spec.coupling_factor)
                                        : stream_increments(noise, spec.master_seed, idx, dt);
        Trajectory tr = run_trajectory(spec.stepper, spec.u0, src, topts);
        tr.master_seed = spec.master_seed;
        tr.sample_index = idx;
        return path_features(tr, cfg);
    });
}

EstimatorReport run_estimators(const EnsembleSpec& spec, const EstimatorConfig& cfg) {
    return reduce_features(ensemble_features(spec, cfg), cfg, spec.stepper->sgd().dt(), spec.stepper->flux().p());
}

namespace {

EstimatorReport reduce_paths(const std::vector<Trajectory>& paths, const EstimatorConfig& cfg) {
    if (paths.empty()) throw std::invalid_argument("estimators need at least one path");
    const Stepper& st = *paths.front().stepper;
    cfg.validate(paths.front().N());
    std::vector<PathFeatures> feats;
    for (const auto& tr : paths) feats.push_back(path_features(tr, cfg));
    return reduce_features(feats, cfg, st.sgd().dt(), st.flux().p());
}

EstimatorConfig only(bool energy, bool translates, bool dual, bool martingale) {
    EstimatorConfig c;
    c.energy = energy;
    c.translates = translates;
    c.dual = dual;
    c.martingale = martingale;
    c.ells.clear();
    return c;
}

}  // namespace

EstimatorReport energy_estimators(const std::vector<Trajectory>& paths) {
    return reduce_paths(paths, only(true, false, false, false));
}

std::vector<std::pair<int, MeanSE>> time_translate_estimator(const std::vector<Trajectory>& paths,
                                                             const std::vector<int>& ells) {
    EstimatorConfig c = only(false, true, false, false);
    c.ells = ells;
    return reduce_paths(paths, c).translate_table;
}

std::vector<DualEntry> dual_increment_estimator(const std::vector<Trajectory>& paths, const std::vector<int>& ells,
                                                int r, const DualNormOptions& opts) {
    EstimatorConfig c = only(false, false, true, false);
    c.ells = ells;
    c.dual_rs = {r};
    c.dual_options = opts;
    return reduce_paths(paths, c).dual_increment_table;
}

EstimatorReport martingale_stats(const std::vector<Trajectory>& paths, double beta, int r) {
    EstimatorConfig c = only(false, false, false, true);
    c.beta = beta;
    c.martingale_r = r;
    return reduce_paths(paths, c);
}

// ------------------------------------------------------------------ oracles

OUSequence ou_oracle(double stiffness, double mass, double q1, double f0_const, double load_b, double dt, int N,
                     double mean0, double var0) {
    if (!(mass > 0.0) || !(dt > 0.0) || N < 0 || stiffness < 0.0) throw std::invalid_argument("ou_oracle: bad parameters");
    OUSequence s;
    s.mean.push_back(mean0);
    s.var.push_back(var0);
    const double den = mass + dt * stiffness;
    const double sig = f0_const * q1 * load_b;
    for (int n = 0; n < N; ++n) {
        s.mean.push_back(s.mean.back() * mass / den);
        s.var.push_back((s.var.back() * mass * mass + sig * sig * dt) / (den * den));
    }
    return s;
}

// -------------------------------------------------------------- convergence

ConvergenceReport deterministic_convergence(const std::vector<StepperPtr>& levels, const ScalarField& u0,
                                            const SpaceTimeField& exact, int quad_points) {
    if (levels.empty()) throw std::invalid_argument("convergence study needs at least one level");
    ConvergenceReport rep;
    for (std::size_t m = 0; m < levels.size(); ++m) {
        const Trajectory tr = run_deterministic(levels[m], u0);
        const GradientDiscretisation& gd = levels[m]->gd();
        const Quadrature q = gd.make_quadrature(quad_points);
        const double dt = levels[m]->sgd().dt();
        double err = 0.0;
        for (int n = 0; n <= tr.N(); ++n) {
            const Vec pu = q.values * tr.u[n];
            double e = 0.0;
            for (int i = 0; i < q.size(); ++i) {
                const double d = pu[i] - exact(q.points[i], n * dt);
                e += q.weights[i] * d * d;
            }
            err = std::max(err, std::sqrt(e));
        }
        ConvergenceRow row;
        row.level = static_cast<int>(m);
        row.h = gd.mesh().max_diameter();
        row.N = levels[m]->sgd().N;
        row.error = err;
        if (m > 0) row.order = std::log(rep.rows.back().error / err) / std::log(rep.rows.back().h / row.h);
        rep.rows.push_back(row);
    }
    rep.strictly_decreasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        rep.strictly_decreasing = rep.strictly_decreasing && rep.rows[i].error < rep.rows[i - 1].error;
    }
    return rep;
}

namespace {

// Coarse reconstruction sampled at fine quadrature points.
SpMat coarse_values_at(const GradientDiscretisation& coarse, const GradientDiscretisation& fine, const Quadrature& q) {
    const Mesh& cm = coarse.mesh();
    const Mesh& fm = fine.mesh();
    const bool same = &cm == &fm || cm.same_structure(fm);
    const bool parented = !same && static_cast<int>(fm.parent().size()) == fm.n_cells();
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < q.size(); ++i) {
        const Point& x = q.points[i];
        int cc = same ? q.cell[i] : (parented ? fm.parent()[q.cell[i]] : cm.locate(x, 1e-9));
        if (cc < 0 || cc >= cm.n_cells()) throw std::invalid_argument("levels are not nested: fine point outside coarse mesh");
        const Piece& pc = coarse.pieces()[coarse.piece_containing(cc, x)];
        for (int k = 0; k <= coarse.dim(); ++k) {
            if (pc.dofs[k] < 0) continue;
            const auto& b = pc.basis[k];
            trip.emplace_back(i, pc.dofs[k], b[0] + b[1] * x[0] + b[2] * x[1]);
        }
    }
    SpMat C(q.size(), coarse.n_dofs());
    C.setFromTriplets(trip.begin(), trip.end());
    return C;
}

}  // namespace

double coupled_lp_difference(const Trajectory& coarse, const Trajectory& fine, double p, int quad_points) {
    const int Nc = coarse.N(), Nf = fine.N();
    if (Nc < 1 || Nf % Nc != 0) throw std::invalid_argument("time grids are not nested");
    const int r = Nf / Nc;
    const GradientDiscretisation& fg = fine.stepper->gd();
    const Quadrature q = fg.make_quadrature(quad_points);
    const SpMat C = coarse_values_at(coarse.stepper->gd(), fg, q);
    const double dtf = fine.stepper->sgd().dt();
    double s = 0.0;
    for (int j = 0; j < Nf; ++j) {
        const Vec d = q.values * fine.u[j + 1] - C * coarse.u[j / r + 1];
        s += dtf * q.weights.dot(d.cwiseAbs().array().pow(p).matrix());
    }
    return std::pow(s, 1.0 / p);
}

void check_level_compatibility(const std::vector<StepperPtr>& levels) {
    if (levels.empty()) throw std::invalid_argument("convergence study needs at least one level");
    const Stepper& a = *levels.front();
    for (std::size_t m = 1; m < levels.size(); ++m) {
        const Stepper& b = *levels[m];
        const Stepper& prev = *levels[m - 1];
        if (std::abs(a.sgd().T - b.sgd().T) > 1e-12 * a.sgd().T) throw std::invalid_argument("levels differ in T");
        if (a.flux().kind() != b.flux().kind() || a.flux().p() != b.flux().p()) {
            throw std::invalid_argument("levels differ in flux");
        }
        if (a.noise().k_max() != b.noise().k_max() || a.noise().q() != b.noise().q() ||
            a.noise().f0().kind() != b.noise().f0().kind()) {
            throw std::invalid_argument("levels differ in noise");
        }
        if (b.sgd().N % prev.sgd().N != 0) throw std::invalid_argument("time steps are not nested between levels");
        if (a.gd().dim() != b.gd().dim()) throw std::invalid_argument("levels differ in dimension");
    }
}

ConvergenceReport coupled_convergence(const std::vector<StepperPtr>& levels, const ScalarField& u0,
                                      std::uint64_t master_seed, long n_samples, int workers) {
    check_level_compatibility(levels);
    if (levels.size() < 2) throw std::invalid_argument("coupled study needs at least two levels");
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    const int Nf = levels.back()->sgd().N;
    const double p = levels.front()->flux().p();
    std::vector<Vec> starts;
    for (const auto& st : levels) starts.push_back(st->gd().interpolate_initial(u0));
    TrajectoryOptions topts;
    topts.store_martingale = false;
    const auto diffs = parallel_map<std::vector<double>>(n_samples, workers, [&](long i) {
        std::vector<Trajectory> trs;
        for (std::size_t m = 0; m < levels.size(); ++m) {
            const auto& st = levels[m];
            const int factor = Nf / st->sgd().N;
            trs.push_back(run_trajectory(
                st, starts[m],
                coupled_increments(st->noise(), master_seed, static_cast<std::uint64_t>(i), st->sgd().dt(), factor),
                topts));
        }
        std::vector<double> d;
        for (std::size_t m = 0; m + 1 < trs.size(); ++m) d.push_back(coupled_lp_difference(trs[m], trs[m + 1], p));
        return d;
    });
    ConvergenceReport rep;
    for (std::size_t m = 0; m + 1 < levels.size(); ++m) {
        std::vector<double> xs;
        for (const auto& d : diffs) xs.push_back(d[m]);
        const MeanSE ms = mean_se(xs);
        ConvergenceRow row;
        row.level = static_cast<int>(m);
        row.h = levels[m]->gd().mesh().max_diameter();
        row.N = levels[m]->sgd().N;
        row.error = ms.mean;
        row.error_se = ms.se;
        if (m > 0) row.order = std::log(rep.rows.back().error / row.error) / std::log(rep.rows.back().h / row.h);
        rep.rows.push_back(row);
    }
    rep.strictly_decreasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        rep.strictly_decreasing = rep.strictly_decreasing && rep.rows[i].error < rep.rows[i - 1].error;
    }
    return rep;
}

}  // namespace sgdm
