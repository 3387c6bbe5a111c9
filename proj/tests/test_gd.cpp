#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <random>

#include "sgdm/clipping.hpp"
#include "sgdm/gd.hpp"
#include "sgdm/quadrature.hpp"

using namespace sgdm;

namespace {

constexpr double kPi = 3.14159265358979323846;

GDPtr interval_gd(int n, GDKind kind, double a = 0.0, double b = 1.0) {
    return build_gd(std::make_shared<const Mesh>(build_uniform_interval(n, a, b)), kind);
}

GDPtr square_gd(int n, GDKind kind) {
    return build_gd(std::make_shared<const Mesh>(build_uniform_triangulation(n, n, {{0, 0}, {1, 1}})), kind);
}

Vec random_vec(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> N;
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = N(rng);
    return v;
}

// L^2 error of Pi_D I_D u0 against u0 on an interval mesh, by adaptive Gauss-Kronrod per cell.
double interpolation_error(const GradientDiscretisation& gd, const ScalarField& u0) {
    const Vec v = gd.interpolate_initial(u0);
    double s = 0.0;
    const Mesh& m = gd.mesh();
    for (int c = 0; c < m.n_cells(); ++c) {
        const double a = m.vertex(m.cell(c)[0])[0], b = m.vertex(m.cell(c)[1])[0];
        auto f = [&](double x) {
            const double d = gd.evaluate_in_cell(v, c, {x, 0.0}) - u0({x, 0.0});
            return d * d;
        };
        s += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, std::min(a, b), std::max(a, b), 10, 1e-14);
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("quadrature exactness") {
    std::vector<double> x, w;
    gauss_legendre(4, x, w);
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], 7);
    CHECK(s == doctest::Approx(1.0 / 8).epsilon(1e-14));

    // Reference triangle (0,0),(1,0),(0,1): int x^a y^b = a! b! / (a+b+2)!.
    const SimplexRule r = triangle_rule(4);
    const std::array<Point, 3> tri{Point{0, 0}, Point{1, 0}, Point{0, 1}};
    for (int a = 0; a <= 3; ++a) {
        for (int b = 0; a + b <= 6; ++b) {
            double q = 0.0;
            for (int i = 0; i < r.size(); ++i) {
                const Point p = from_barycentric(2, tri, r.bary[i]);
                q += 0.5 * r.weights[i] * std::pow(p[0], a) * std::pow(p[1], b);
            }
            const double exact = std::tgamma(a + 1) * std::tgamma(b + 1) / std::tgamma(a + b + 3);
            CHECK(q == doctest::Approx(exact).epsilon(1e-13));
        }
    }
}

TEST_CASE("DOF counts") {
    CHECK(interval_gd(2, GDKind::P1Conforming)->n_dofs() == 1);
    const auto mesh = std::make_shared<const Mesh>(build_uniform_triangulation(2, 2, {{0, 0}, {1, 1}}));
    int interior = 0;
    for (int v = 0; v < mesh->n_vertices(); ++v) interior += mesh->is_boundary_vertex(v) ? 0 : 1;
    CHECK(build_gd(mesh, GDKind::P1Conforming)->n_dofs() == interior);
    CHECK(build_gd(mesh, GDKind::P1MassLumped)->n_dofs() == interior);
    // Interior edges: 3 per cell counted twice, minus boundary edges.
    const int interior_edges = (3 * mesh->n_cells() - static_cast<int>(mesh->boundary_edges().size())) / 2;
    CHECK(build_gd(mesh, GDKind::CrouzeixRaviart)->n_dofs() == interior_edges);
}

TEST_CASE("zero vector reconstructs to zero") {
    for (GDKind k : {GDKind::P1Conforming, GDKind::P1MassLumped, GDKind::CrouzeixRaviart}) {
        const auto gd = square_gd(3, k);
        const Vec z = Vec::Zero(gd->n_dofs());
        CHECK(gd->function_at_quadrature(z).cwiseAbs().maxCoeff() == 0.0);
        CHECK((gd->gradient_matrix() * z).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("P1 reconstruction is the nodal interpolant") {
    const auto gd = interval_gd(5, GDKind::P1Conforming);
    std::mt19937_64 rng(3);
    const Vec v = random_vec(gd->n_dofs(), rng);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    // Nodal values with zero ends; DOF i sits at vertex i+1 of the uniform mesh.
    std::vector<double> nodal{0.0};
    for (int i = 0; i < v.size(); ++i) nodal.push_back(v[i]);
    nodal.push_back(0.0);
    for (int t = 0; t < 50; ++t) {
        const double x = U(rng);
        const int c = std::min(4, static_cast<int>(x * 5));
        const double s = x * 5 - c;
        const double expect = (1 - s) * nodal[c] + s * nodal[c + 1];
        CHECK(gd->reconstruct_function(v, {x, 0}) == doctest::Approx(expect).epsilon(1e-13));
    }
    CHECK_THROWS_AS(gd->reconstruct_function(v, {1.5, 0}), std::out_of_range);
}

TEST_CASE("mass-lumped reconstruction is constant on dual cells") {
    const auto gd = interval_gd(4, GDKind::P1MassLumped);
    Vec v(3);
    v << 1.0, -2.0, 5.0;
    // Vertex i at i/4, dual cell (i/4 - 1/8, i/4 + 1/8).
    for (int i = 1; i <= 3; ++i) {
        for (double off : {-0.1, -0.02, 0.03, 0.12}) {
            CHECK(gd->reconstruct_function(v, {i / 4.0 + off, 0}) == doctest::Approx(v[i - 1]));
        }
    }
    CHECK(gd->reconstruct_function(v, {0.05, 0}) == 0.0);
    CHECK(gd->reconstruct_function(v, {0.95, 0}) == 0.0);
}

TEST_CASE("reconstruction is linear") {
    std::mt19937_64 rng(11);
    for (GDKind k : {GDKind::P1Conforming, GDKind::P1MassLumped, GDKind::CrouzeixRaviart}) {
        const auto gd = square_gd(3, k);
        const Vec v = random_vec(gd->n_dofs(), rng), w = random_vec(gd->n_dofs(), rng);
        const double a = 1.7;
        const Vec lhs = gd->function_at_quadrature(a * v + w);
        const Vec rhs = a * gd->function_at_quadrature(v) + gd->function_at_quadrature(w);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("hat gradient and norms") {
    const auto gd = interval_gd(2, GDKind::P1Conforming);
    const Vec e = Vec::Ones(1);
    const auto g = gd->reconstruct_gradient(e);
    REQUIRE(g.size() == 2);
    CHECK(g[0][0] == doctest::Approx(2.0));
    CHECK(g[1][0] == doctest::Approx(-2.0));
    // int_0^1 hat^p = 1/(p+1); |hat'| = 2 everywhere.
    for (double p : {1.0, 2.0, 3.0}) {
        CHECK(std::pow(gd->lp_norm(e, p), p) == doctest::Approx(1.0 / (p + 1)).epsilon(1e-12));
        CHECK(gd->grad_lp_norm(e, p) == doctest::Approx(2.0).epsilon(1e-12));
    }
    // Non-integer powers of a linear function are only approximated by the 4-point rule.
    CHECK(std::pow(gd->lp_norm(e, 1.5), 1.5) == doctest::Approx(0.4).epsilon(1e-3));
    CHECK(gd->grad_lp_norm(e, 1.5) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS(gd->lp_norm(e, 0.5));
    CHECK_THROWS(gd->reconstruct_gradient(Vec::Ones(2)));
}

TEST_CASE("Dirichlet values vanish") {
    std::mt19937_64 rng(5);
    const auto p1 = square_gd(3, GDKind::P1Conforming);
    const Vec v = random_vec(p1->n_dofs(), rng);
    const Mesh& m = p1->mesh();
    for (int b : m.boundary_vertices()) CHECK(std::abs(p1->reconstruct_function(v, m.vertex(b))) < 1e-14);

    const auto cr = square_gd(3, GDKind::CrouzeixRaviart);
    const Vec w = random_vec(cr->n_dofs(), rng);
    const Mesh& mc = cr->mesh();
    for (const auto& e : mc.boundary_edges()) {
        const Point a = mc.vertex(e[0]), b = mc.vertex(e[1]);
        const Point mid{0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
        CHECK(std::abs(cr->reconstruct_function(w, mid)) < 1e-13);
    }
}

TEST_CASE("gradient norm is a norm") {
    std::mt19937_64 rng(17);
    for (GDKind k : {GDKind::P1Conforming, GDKind::P1MassLumped, GDKind::CrouzeixRaviart}) {
        const auto gd = square_gd(2, k);
        for (int t = 0; t < 1000; ++t) CHECK(gd->grad_lp_norm(random_vec(gd->n_dofs(), rng), 2.0) > 0.0);
    }
}

TEST_CASE("inner product symmetry") {
    std::mt19937_64 rng(19);
    const auto gd = square_gd(3, GDKind::CrouzeixRaviart);
    const Vec v = random_vec(gd->n_dofs(), rng), w = random_vec(gd->n_dofs(), rng);
    CHECK(gd->l2_inner(v, w) == gd->l2_inner(w, v));
    CHECK(gd->l2_inner(v, v) == doctest::Approx(std::pow(gd->lp_norm(v, 2.0), 2)).epsilon(1e-12));
}

TEST_CASE("interpolation") {
    const auto gd = interval_gd(4, GDKind::P1Conforming);
    CHECK(gd->interpolate_initial([](const Point&) { return 0.0; }).cwiseAbs().maxCoeff() == 0.0);
    // Hat at the middle vertex x = 1/2.
    const Vec hat = gd->interpolate_initial([](const Point& x) { return std::max(0.0, 1.0 - 4.0 * std::abs(x[0] - 0.5)); });
    CHECK(hat[0] == 0.0);
    CHECK(hat[1] == 1.0);
    CHECK(hat[2] == 0.0);

    const ScalarField s = [](const Point& x) { return std::sin(kPi * x[0]); };
    double prev = 0.0;
    for (int m = 3; m <= 6; ++m) {
        const double e = interpolation_error(*interval_gd(1 << m, GDKind::P1Conforming), s);
        if (m > 3) {
            CHECK(e < prev);
            CHECK(prev / e == doctest::Approx(4.0).epsilon(0.05));
        }
        prev = e;
    }
}

TEST_CASE("Crouzeix-Raviart in 1D coincides with P1") {
    const auto a = interval_gd(6, GDKind::P1Conforming), b = interval_gd(6, GDKind::CrouzeixRaviart);
    REQUIRE(a->n_dofs() == b->n_dofs());
    CHECK((Eigen::MatrixXd(a->mass_matrix()) - Eigen::MatrixXd(b->mass_matrix())).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((Eigen::MatrixXd(a->stiffness_matrix()) - Eigen::MatrixXd(b->stiffness_matrix())).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("polygon clipping") {
    const Polygon sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    CHECK(polygon_area(clip_halfplane(sq, 1, 0, 0.25)) == doctest::Approx(0.25));
    const Polygon shifted{{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}, {0.5, 1.5}};
    CHECK(polygon_area(clip_convex(shifted, sq)) == doctest::Approx(0.25));
    const auto outside = subtract_box(shifted, {{0, 0}, {1, 1}});
    double area = 0.0;
    for (const auto& p : outside) area += polygon_area(p);
    CHECK(area == doctest::Approx(0.75));
}
