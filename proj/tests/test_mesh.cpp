#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sgdm/mesh.hpp"

using namespace sgdm;

namespace {

bool on_rectangle_edge(const Point& x, const BoundingBox& b) {
    const double tol = 1e-12;
    return std::abs(x[0] - b.lo[0]) < tol || std::abs(x[0] - b.hi[0]) < tol || std::abs(x[1] - b.lo[1]) < tol ||
           std::abs(x[1] - b.hi[1]) < tol;
}

}  // namespace

TEST_CASE("smallest interval mesh") {
    const Mesh m = build_uniform_interval(1, 0.0, 1.0);
    CHECK(m.dim() == 1);
    CHECK(m.n_vertices() == 2);
    CHECK(m.n_cells() == 1);
    CHECK(m.is_boundary_vertex(0));
    CHECK(m.is_boundary_vertex(1));
}

TEST_CASE("uniform interval partition") {
    const Mesh m = build_uniform_interval(4, 0.0, 1.0);
    REQUIRE(m.n_vertices() == 5);
    for (int i = 0; i < 5; ++i) CHECK(m.vertex(i)[0] == doctest::Approx(i / 4.0).epsilon(1e-15));
    for (int c = 0; c < 4; ++c) CHECK(m.cell_measure(c) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(std::abs(build_uniform_interval(8, 0.0, 2.0).total_measure() - 2.0) < 1e-12);
}

TEST_CASE("interval generator rejects bad input") {
    CHECK_THROWS(build_uniform_interval(0, 0.0, 1.0));
    CHECK_THROWS(build_uniform_interval(4, 1.0, 1.0));
    CHECK_THROWS(build_uniform_interval(4, 2.0, 1.0));
}

TEST_CASE("criss-cross triangulations") {
    const Mesh one = build_uniform_triangulation(1, 1, {{0, 0}, {1, 1}});
    REQUIRE(one.n_cells() == 2);
    CHECK(one.cell_measure(0) == doctest::Approx(0.5));
    CHECK(one.cell_measure(1) == doctest::Approx(0.5));

    const Mesh four = build_uniform_triangulation(2, 2, {{0, 0}, {1, 1}});
    CHECK(four.n_cells() == 8);
    CHECK(std::abs(four.total_measure() - 1.0) < 1e-12);

    const BoundingBox box{{0, 0}, {2, 1}};
    const Mesh wide = build_uniform_triangulation(4, 2, box);
    CHECK(wide.n_cells() == 16);
    for (int v : wide.boundary_vertices()) CHECK(on_rectangle_edge(wide.vertex(v), box));
    // Every vertex on the boundary is flagged.
    for (int v = 0; v < wide.n_vertices(); ++v) CHECK(wide.is_boundary_vertex(v) == on_rectangle_edge(wide.vertex(v), box));
    CHECK_THROWS(build_uniform_triangulation(2, 2, {{0, 0}, {0, 1}}));
    CHECK_THROWS(build_uniform_triangulation(0, 2, {{0, 0}, {1, 1}}));
}

TEST_CASE("refinement") {
    const Mesh m = build_uniform_interval(4, 0.0, 1.0);
    const Mesh r = refine(m);
    CHECK(r.n_cells() == 8);
    CHECK(r.max_cell_measure() == doctest::Approx(m.max_cell_measure() / 2));

    const Mesh sq = build_uniform_triangulation(1, 1, {{0, 0}, {1, 1}});
    CHECK(refine(sq).n_cells() == 8);

    for (const Mesh& base : {m, sq, build_uniform_triangulation(3, 2, {{-1, 0}, {1, 3}})}) {
        Mesh cur = base;
        for (int k = 1; k <= 3; ++k) {
            cur = refine(cur);
            CHECK(std::abs(cur.max_diameter() - base.max_diameter() / std::pow(2.0, k)) < 1e-12);
            CHECK(std::abs(cur.total_measure() - base.total_measure()) < 1e-12 * base.total_measure());
        }
        // Refined boundary vertices still lie on the boundary of the generating box.
        if (cur.dim() == 2) {
            for (int v = 0; v < cur.n_vertices(); ++v) {
                CHECK(cur.is_boundary_vertex(v) == on_rectangle_edge(cur.vertex(v), cur.bounding_box()));
            }
        }
    }
}

TEST_CASE("save and load round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "sgdm_test_mesh";
    std::filesystem::create_directories(dir);
    const std::vector<Mesh> meshes{build_uniform_interval(5, -1.0, 2.0), build_uniform_triangulation(3, 2, {{0, 0}, {2, 1}}),
                                   refine(build_uniform_triangulation(1, 1, {{0, 0}, {1, 1}}))};
    int i = 0;
    for (const Mesh& m : meshes) {
        const auto path = dir / ("m" + std::to_string(i++) + ".mesh");
        save_mesh(m, path);
        CHECK(load_mesh(path).same_structure(m));
    }
}

TEST_CASE("malformed mesh text") {
    SUBCASE("truncated file names the missing section") {
        try {
            parse_mesh_text("dim 1\nvertices 3\n0\n0.5\n");
            FAIL("expected a parse error");
        } catch (const MeshParseError& e) {
            CHECK(std::string(e.what()).find("vertices") != std::string::npos);
            CHECK(e.line() == 5);
        }
        CHECK_THROWS_AS(parse_mesh_text("dim 1\nvertices 2\n0\n1\n"), MeshParseError);
    }
    SUBCASE("bad token reports its line") {
        try {
            parse_mesh_text("dim 1\nvertices 2\n0\nabc\ncells 1\n0 1\nboundary_vertices 2\n0\n1\nend\n");
            FAIL("expected a parse error");
        } catch (const MeshParseError& e) {
            CHECK(e.line() == 4);
        }
    }
    SUBCASE("cell index out of range is a validation error") {
        CHECK_THROWS_AS(parse_mesh_text("dim 1\nvertices 2\n0\n1\ncells 1\n0 7\nboundary_vertices 2\n0\n1\nend\n"),
                        MeshValidationError);
    }
    SUBCASE("missing boundary flag is a validation error") {
        CHECK_THROWS_AS(parse_mesh_text("dim 1\nvertices 2\n0\n1\ncells 1\n0 1\nboundary_vertices 1\n0\nend\n"),
                        MeshValidationError);
    }
}

TEST_CASE("point location") {
    const Mesh m = build_uniform_triangulation(2, 2, {{0, 0}, {1, 1}});
    for (double x : {0.1, 0.4, 0.77}) {
        for (double y : {0.05, 0.5, 0.9}) {
            const int c = m.locate({x, y});
            REQUIRE(c >= 0);
            const auto b = m.barycentric(c, {x, y});
            for (int k = 0; k < 3; ++k) CHECK(b[k] >= -1e-12);
        }
    }
    CHECK(m.locate({1.5, 0.5}) < 0);
}
