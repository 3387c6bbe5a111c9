#include <doctest.h>

#include <cmath>
#include <random>

#include "sgdm/flux.hpp"

using namespace sgdm;

namespace {

FluxVec vec2(double a, double b) {
    FluxVec v(2);
    v << a, b;
    return v;
}

FluxMat central_difference(const FluxModel& m, const FluxVec& y) {
    const double h = 1e-6;
    FluxMat J(y.size(), y.size());
    for (int j = 0; j < y.size(); ++j) {
        FluxVec yp = y, ym = y;
        yp[j] += h;
        ym[j] -= h;
        J.col(j) = (m.eval(0.0, yp) - m.eval(0.0, ym)) / (2 * h);
    }
    return J;
}

}  // namespace

TEST_CASE("closed-form flux values") {
    const FluxVec y = vec2(3, 4);
    CHECK((FluxModel::p_laplace(3.0).eval(0.0, y) - vec2(15, 20)).norm() < 1e-12);
    CHECK((FluxModel::p_laplace(2.0).eval(0.0, y) - y).norm() == 0.0);
    CHECK((FluxModel::regularized_p_laplace(3.0).eval(0.0, y) - vec2(18, 24)).norm() < 1e-12);
    CHECK((FluxModel::linear_diffusion().eval(0.7, y) - y).norm() == 0.0);
    // |y| = 5, p = 1.5: 5^{-1/2} y.
    CHECK((FluxModel::p_laplace(1.5).eval(0.0, y) - y / std::sqrt(5.0)).norm() < 1e-12);
    CHECK(FluxModel::p_laplace(1.5).eval(0.0, vec2(0, 0)).norm() == 0.0);
    CHECK(FluxModel::regularized_p_laplace(3.0).c2() == doctest::Approx(2.0));
    CHECK(FluxModel::p_laplace(3.0).p_hat() == 2.0);
    CHECK(FluxModel::p_laplace(1.5).p_hat() == doctest::Approx(3.0));
}

TEST_CASE("invalid flux parameters") {
    CHECK_THROWS_AS(FluxModel::p_laplace(1.0), std::invalid_argument);
    CHECK_THROWS_AS(FluxModel::p_laplace(NAN), std::invalid_argument);
    CHECK_THROWS_AS(FluxModel::regularized_p_laplace(1.5), std::invalid_argument);
    CHECK_THROWS_AS(FluxModel::named_custom("nope", 2.0), std::invalid_argument);
    CHECK_THROWS_AS(FluxModel::p_laplace(3.0).eval(0.0, vec2(NAN, 0)), std::invalid_argument);
    CHECK_THROWS_AS(parse_flux_kind("Laplace"), std::invalid_argument);
    CHECK(parse_flux_kind("PLaplace") == FluxKind::PLaplace);
}

TEST_CASE("Jacobian against central differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    const std::vector<FluxModel> models{FluxModel::p_laplace(3.0), FluxModel::p_laplace(4.5),
                                        FluxModel::p_laplace(1.5, 0.0), FluxModel::regularized_p_laplace(2.5),
                                        FluxModel::linear_diffusion()};
    for (const auto& m : models) {
        for (int t = 0; t < 50; ++t) {
            const FluxVec y = vec2(U(rng), U(rng));
            if (y.norm() < 0.1) continue;
            const FluxMat J = m.jacobian(0.0, y, 0.0);
            const FluxMat F = central_difference(m, y);
            CHECK((J - F).norm() <= 1e-6 * std::max(1.0, F.norm()));
            CHECK((J - J.transpose()).norm() <= 1e-12 * std::max(1.0, J.norm()));
        }
    }
}

TEST_CASE("custom flux without a Jacobian uses differences") {
    const FluxModel m = FluxModel::custom([](double, const FluxVec& y) -> FluxVec { return 2.0 * y + y.cwiseProduct(y); },
                                          2.0, 1.0, 3.0);
    const FluxVec y = vec2(0.5, -1.0);
    FluxMat expect(2, 2);
    expect << 2 + 2 * 0.5, 0, 0, 2 - 2 * 1.0;
    CHECK((m.jacobian(0.0, y) - expect).norm() < 1e-6);
}

TEST_CASE("continuity in the gradient argument") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-5.0, 5.0);
    for (const auto& m : {FluxModel::p_laplace(3.0), FluxModel::p_laplace(1.5), FluxModel::regularized_p_laplace(4.0)}) {
        for (int t = 0; t < 200; ++t) {
            const FluxVec y = vec2(U(rng), U(rng));
            const FluxVec d = vec2(U(rng), U(rng)) * 1e-9;
            CHECK((m.eval(0.0, y + d) - m.eval(0.0, y)).norm() < 1e-6);
        }
    }
}

TEST_CASE("structure probes of the built-in fluxes") {
    for (const auto& m : {FluxModel::p_laplace(1.5), FluxModel::p_laplace(2.0), FluxModel::p_laplace(3.0),
                          FluxModel::regularized_p_laplace(2.5), FluxModel::regularized_p_laplace(3.0),
                          FluxModel::linear_diffusion()}) {
        for (int dim : {1, 2}) {
            const ProbeReport r = probe_assumptions(m, 20000, 10.0, 10.0, 42, dim);
            CHECK(r.passed());
            CHECK(r.tight_c1 >= m.c1() - 1e-9);
            CHECK(r.tight_c2 <= m.c2() + 1e-9);
        }
    }
    // Pure p-Laplace attains c1 = 1 on every sample.
    CHECK(probe_assumptions(FluxModel::p_laplace(3.0), 1000, 1.0, 1.0, 1).tight_c1 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("planted violations are detected") {
    const ProbeReport anti = probe_assumptions(FluxModel::named_custom("anti_monotone", 2.0), 1000, 1.0, 1.0, 3);
    CHECK(anti.monotonicity_violations > 0);
    CHECK(anti.coercivity_violations > 0);
    CHECK_FALSE(anti.passed());

    const ProbeReport c1 = probe_assumptions(FluxModel::p_laplace(3.0).with_constants(1.5, 1.0), 1000, 1.0, 1.0, 3);
    CHECK(c1.coercivity_violations > 0);
    const ProbeReport c2 = probe_assumptions(FluxModel::p_laplace(3.0).with_constants(1.0, 0.5), 1000, 1.0, 5.0, 3);
    CHECK(c2.growth_violations > 0);

    CHECK_THROWS(probe_assumptions(FluxModel::linear_diffusion(), 0, 1.0, 1.0, 1));
    CHECK_THROWS(probe_assumptions(FluxModel::linear_diffusion(), 10, 1.0, 1.0, 1, 3));
}
