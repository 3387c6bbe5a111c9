#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <random>

#include "sgdm/analysis.hpp"

using namespace sgdm;

namespace {

constexpr double kPi = 3.14159265358979323846;
const BoundingBox kUnit{{0, 0}, {1, 1}};
const ScalarField kSine = [](const Point& x) { return std::sin(kPi * x[0]); };

GDPtr interval_gd(int n) {
    return build_gd(std::make_shared<const Mesh>(build_uniform_interval(n, 0.0, 1.0)), GDKind::P1Conforming);
}

StepperPtr make_stepper(int cells, double T, int N, FluxModel flux, NemytskiiMap f0) {
    return std::make_shared<const Stepper>(SpaceTimeGD{interval_gd(cells), T, N}, std::move(flux),
                                           NoiseModel::sine(1, kUnit, 4, 1.5, std::move(f0)));
}

IntervalPath scalar_path(double dt, const std::vector<double>& g) {
    std::vector<Vec> vals;
    for (double x : g) vals.push_back(Vec::Constant(1, x));
    return path_from_samples(dt, vals, Vec::Ones(1));
}

}  // namespace

TEST_CASE("mean and variance standard errors") {
    const MeanSE m = mean_se({1, 2, 3, 4});
    CHECK(m.mean == 2.5);
    CHECK(m.n == 4);
    CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(mean_se({7.0}).se == 0.0);
    const VarianceSE v = variance_se({2, 2, 2, 2});
    CHECK(v.var == 0.0);
    CHECK(v.se == 0.0);
    CHECK(variance_se({1, 2, 3, 4}).var == doctest::Approx(5.0 / 3.0));
    CHECK_THROWS(variance_se({1.0}));
    CHECK(loglog_slope({1, 2, 4}, {3, 12, 48}) == doctest::Approx(2.0));
    CHECK_THROWS(loglog_slope({1, 2}, {1, -1}));
}

TEST_CASE("continuous translate against a fine-grid brute force") {
    // dt and rho are multiples of the 1e-4 grid, so the integrand is constant on every grid cell.
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N;
    const double dt = 0.1;
    std::vector<double> g(10);
    for (double& x : g) x = N(rng);
    const IntervalPath path = scalar_path(dt, g);
    auto value = [&](double t) { return g[static_cast<std::size_t>(std::floor(t / dt))]; };
    for (double rho : {0.0237, 0.15, 0.5, 0.9001}) {
        const int cells = 10000 - static_cast<int>(std::lround(rho * 1e4));
        double brute = 0.0;
        for (int i = 0; i < cells; ++i) {
            const double t = (i + 0.5) * 1e-4;
            brute += 1e-4 * std::pow(value(t + rho) - value(t), 2);
        }
        CHECK(std::abs(continuous_translate(path, rho) - brute) < 1e-8);
    }
    SUBCASE("rho <= dt reduces to rho times the jump sum") {
        const double rho = 0.04;
        double jumps = 0.0;
        for (std::size_t n = 0; n + 1 < g.size(); ++n) jumps += std::pow(g[n + 1] - g[n], 2);
        CHECK(continuous_translate(path, rho) == doctest::Approx(rho * jumps).epsilon(1e-12));
    }
    CHECK_THROWS(continuous_translate(path, 0.0));
    CHECK_THROWS(continuous_translate(path, 1.0));
}

TEST_CASE("fractional norm of a single jump") {
    const double beta = 0.25, q = 2.0;
    const IntervalPath path = scalar_path(0.5, {0.0, 1.0});
    // Inner integral over s in (0, 1 - rho) of |g(s+rho) - g(s)|^q. The integrand is 1 exactly for
    // s = 1/2 - sigma with max(0, rho - 1/2) < sigma <= min(rho, 1/2); sigma avoids cancellation as rho -> 0.
    auto inner = [](double rho) {
        const double lo = std::max(0.0, rho - 0.5), hi = std::min(rho, 0.5);
        if (hi <= lo) return 0.0;
        return boost::math::quadrature::gauss_kronrod<double, 15>::integrate([](double) { return 1.0; }, lo, hi);
    };
    boost::math::quadrature::tanh_sinh<double> ts;
    auto outer = [&](double rho) { return inner(rho) / rho * std::pow(rho, -beta * q); };
    const double oracle = ts.integrate(outer, 0.0, 0.5) + ts.integrate(outer, 0.5, 1.0);
    CHECK(std::abs(fractional_norm(path, beta, q) - oracle) < 1e-6 * oracle);

    // Homogeneity of degree q.
    const IntervalPath scaled = scalar_path(0.5, {0.0, 3.0});
    CHECK(fractional_norm(scaled, beta, q) == doctest::Approx(9.0 * fractional_norm(path, beta, q)).epsilon(1e-12));
    CHECK_THROWS(fractional_norm(path, 0.5, 1.0));
    CHECK_THROWS(fractional_norm(path, 0.25, 4.0));
}

TEST_CASE("fractional norm vanishes exactly on constant paths") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N;
    for (int t = 0; t < 100; ++t) {
        const double c = N(rng);
        CHECK(fractional_norm(scalar_path(0.1, std::vector<double>(8, c)), 0.25, 2.0) == 0.0);
        std::vector<double> g(8);
        for (double& x : g) x = N(rng);
        CHECK(fractional_norm(scalar_path(0.1, g), 0.25, 2.0) > 0.0);
    }
}

TEST_CASE("dual norm") {
    SUBCASE("zero vector") {
        const auto gd = interval_gd(6);
        CHECK(dual_norm(*gd, Vec::Zero(gd->n_dofs()), 3.0).value == 0.0);
    }
    SUBCASE("single DOF closed form") {
        // c = M w = 1/3, ||Pi e||_2 = 1/sqrt(3), ||grad e||_p = 2 for every p.
        const auto gd = interval_gd(2);
        for (double p : {1.5, 2.0, 3.0}) {
            CHECK(dual_norm(*gd, Vec::Ones(1), p).value ==
                  doctest::Approx((1.0 / 3.0) / (1.0 / std::sqrt(3.0) + 2.0)).epsilon(1e-12));
        }
    }
    SUBCASE("p = 2 against the t-curve and the dense oracle") {
        // ||phi||_M + ||phi||_K = min_t sqrt(phi' (M/t + K/(1-t)) phi), so the dual norm is
        // max_t sqrt(c' (M/t + K/(1-t))^{-1} c).
        const auto gd = interval_gd(6);
        REQUIRE(gd->n_dofs() == 5);
        const Eigen::MatrixXd M(gd->mass_matrix()), K(gd->stiffness_matrix());
        std::mt19937_64 rng(8);
        std::normal_distribution<double> N;
        Vec w(5);
        for (int i = 0; i < 5; ++i) w[i] = N(rng);
        const Vec c = M * w;
        auto curve = [&](double t) {
            const Eigen::MatrixXd A = M / t + K / (1 - t);
            return std::sqrt(c.dot(A.ldlt().solve(c)));
        };
        double best_t = 0.5, best = 0.0;
        for (int i = 1; i < 1000; ++i) {
            const double t = i / 1000.0;
            if (curve(t) > best) {
                best = curve(t);
                best_t = t;
            }
        }
        double a = std::max(1e-9, best_t - 1e-3), b = std::min(1 - 1e-9, best_t + 1e-3);
        const double gr = (std::sqrt(5.0) - 1) / 2;
        for (int it = 0; it < 200; ++it) {
            const double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
            if (curve(x1) > curve(x2)) b = x2;
            else a = x1;
        }
        const double oracle = curve(0.5 * (a + b));

        DualNormOptions opts;
        opts.oracle_dof_limit = 20;
        const DualNormResult r = dual_norm(*gd, w, 2.0, opts);
        CHECK(std::abs(r.value - oracle) < 1e-6 * oracle);
        REQUIRE(std::isfinite(r.oracle_value));
        CHECK(std::abs(r.oracle_value - r.value) < 1e-6 * oracle);
        // Estimator settings (no restarts, no oracle) reach the same value.
        CHECK(std::abs(dual_norm(*gd, w, 2.0, DualNormOptions{0, 200, 1e-13, 50, 0xd0a1, 0}).value - oracle) <
              1e-6 * oracle);
    }
    SUBCASE("bounded by the L2 norm") {
        std::mt19937_64 rng(10);
        std::normal_distribution<double> N;
        const auto gd = interval_gd(12);
        for (int t = 0; t < 20; ++t) {
            Vec w(gd->n_dofs());
            for (int i = 0; i < w.size(); ++i) w[i] = N(rng);
            CHECK(dual_norm(*gd, w, 3.0).value <= gd->lp_norm(w, 2.0) + 1e-12);
        }
    }
    SUBCASE("sample input outside the range is rejected") {
        const auto gd = interval_gd(4);
        CHECK_THROWS_AS(dual_norm_samples(*gd, Vec::Ones(gd->quadrature().size()), 2.0), std::invalid_argument);
        const Vec w = Vec::Ones(gd->n_dofs());
        CHECK(dual_norm_samples(*gd, gd->function_at_quadrature(w), 2.0).value ==
              doctest::Approx(dual_norm(*gd, w, 2.0).value).epsilon(1e-10));
    }
}

TEST_CASE("exponent validation") {
    const auto st = make_stepper(4, 0.5, 8, FluxModel::p_laplace(3.0), NemytskiiMap::tanh());
    const std::vector<Trajectory> paths{run_trajectory(st, kSine, 1, 0)};
    CHECK_THROWS_AS(dual_increment_estimator(paths, {1, 2}, 3), std::invalid_argument);
    CHECK_THROWS_AS(time_translate_estimator(paths, {8}), std::invalid_argument);
    CHECK_THROWS_AS(martingale_stats(paths, 0.6, 2), std::invalid_argument);
    EstimatorConfig c;
    c.dual_rs = {3};
    CHECK_THROWS(c.validate(16));
}

TEST_CASE("OU oracle") {
    const double k = 4.0, m = 1.0 / 3.0, q1 = 1.0, f0 = 2.0, b = 0.5, dt = 0.05;
    const OUSequence s = ou_oracle(k, m, q1, f0, b, dt, 400, 1.0);
    const double a = m / (m + dt * k), s2 = f0 * f0 * q1 * q1 * b * b * dt / std::pow(m + dt * k, 2);
    for (int n : {1, 5, 20}) {
        CHECK(s.mean[n] == doctest::Approx(std::pow(a, n)).epsilon(1e-12));
        CHECK(s.var[n] == doctest::Approx(s2 * (1 - std::pow(a, 2 * n)) / (1 - a * a)).epsilon(1e-12));
    }
    CHECK(s.mean.back() < 1e-12);
    CHECK(s.var.back() == doctest::Approx(s2 / (1 - a * a)).epsilon(1e-10));
    const OUSequence quiet = ou_oracle(k, m, q1, 0.0, b, dt, 10, 1.0);
    for (double v : quiet.var) CHECK(v == 0.0);
    CHECK_THROWS(ou_oracle(k, 0.0, q1, f0, b, dt, 10, 1.0));
}

TEST_CASE("estimators on trivial paths") {
    const auto st = make_stepper(8, 0.5, 8, FluxModel::p_laplace(3.0), NemytskiiMap::zero());
    std::vector<Trajectory> paths;
    for (int s = 0; s < 3; ++s) paths.push_back(run_trajectory(st, [](const Point&) { return 0.0; }, 1, s));
    const EstimatorReport e = energy_estimators(paths);
    CHECK(e.n_samples == 3);
    CHECK(e.apriori.mean == 0.0);
    CHECK(e.grad_lp_p.mean == 0.0);
    for (const auto& [ell, v] : time_translate_estimator(paths, {1, 2, 4})) CHECK(v.mean == 0.0);
    for (const auto& d : dual_increment_estimator(paths, {1, 2}, 2)) CHECK(d.value.mean == 0.0);
    const EstimatorReport m = martingale_stats(paths, 0.25, 2);
    CHECK(m.martingale_hbeta_sq.mean == 0.0);
    CHECK(m.martingale_sup_r.mean == 0.0);
    CHECK_THROWS(energy_estimators({}));
}

TEST_CASE("translate estimator on a deterministic heat path") {
    // Sum of squared lag-ell differences, computed directly from the states.
    const auto st = make_stepper(8, 0.5, 8, FluxModel::linear_diffusion(), NemytskiiMap::zero());
    const Trajectory t = run_deterministic(st, kSine);
    const auto table = time_translate_estimator({t}, {1, 3});
    const GradientDiscretisation& gd = st->gd();
    for (const auto& [ell, v] : table) {
        double s = 0.0;
        for (int n = 1; n + ell <= t.N(); ++n) s += st->sgd().dt() * std::pow(gd.lp_norm(t.u[n + ell] - t.u[n], 2.0), 2);
        CHECK(v.mean == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("coupled difference of identical levels is zero") {
    const auto st = make_stepper(8, 0.5, 8, FluxModel::p_laplace(3.0), NemytskiiMap::tanh());
    const Trajectory t = run_trajectory(st, kSine, 3, 0);
    CHECK(coupled_lp_difference(t, t, 3.0) < 1e-14);

    const auto other_T = make_stepper(16, 1.0, 16, FluxModel::p_laplace(3.0), NemytskiiMap::tanh());
    CHECK_THROWS(check_level_compatibility({st, other_T}));
    const auto other_flux = make_stepper(16, 0.5, 16, FluxModel::p_laplace(2.5), NemytskiiMap::tanh());
    CHECK_THROWS(check_level_compatibility({st, other_flux}));
    const auto fine = make_stepper(16, 0.5, 16, FluxModel::p_laplace(3.0), NemytskiiMap::tanh());
    CHECK_NOTHROW(check_level_compatibility({st, fine}));
}

TEST_CASE("ensemble results do not depend on the worker count") {
    const auto st = make_stepper(8, 0.5, 8, FluxModel::p_laplace(3.0), NemytskiiMap::tanh());
    EnsembleSpec spec{st, st->gd().interpolate_initial(kSine), 17, 12, 1, 0};
    EstimatorConfig cfg;
    cfg.ells = {1, 2};
    const EstimatorReport a = run_estimators(spec, cfg);
    spec.workers = 3;
    const EstimatorReport b = run_estimators(spec, cfg);
    CHECK(a.apriori.mean == b.apriori.mean);
    CHECK(a.apriori.se == b.apriori.se);
    CHECK(a.martingale_hbeta_sq.mean == b.martingale_hbeta_sq.mean);
    REQUIRE(a.dual_increment_table.size() == b.dual_increment_table.size());
    for (std::size_t i = 0; i < a.dual_increment_table.size(); ++i)
        CHECK(a.dual_increment_table[i].value.mean == b.dual_increment_table[i].value.mean);
}
