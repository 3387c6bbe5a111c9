#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdm {

/// Coordinates in R^d, d in {1,2}. One-dimensional meshes leave the second entry at 0.
using Point = std::array<double, 2>;

/// Error raised when a mesh file cannot be parsed; carries the offending line.
class MeshParseError : public std::runtime_error {
public:
    MeshParseError(int line, const std::string& what)
        : std::runtime_error("mesh file line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Error raised when mesh data violates a structural invariant.
class MeshValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BoundingBox {
    Point lo{0.0, 0.0};
    Point hi{0.0, 0.0};
};

/**
 * Simplicial partition of an interval (dim 1) or a polygonal domain (dim 2).
 *
 * Cells are stored with positive orientation. A mesh is immutable once built;
 * every constructor path goes through validate().
 */
class Mesh {
public:
    Mesh(int dim, std::vector<Point> vertices, std::vector<std::array<int, 3>> cells,
         std::vector<int> boundary_vertices, std::vector<std::array<int, 2>> boundary_edges = {},
         std::vector<int> parent = {});

    int dim() const { return dim_; }
    int n_vertices() const { return static_cast<int>(vertices_.size()); }
    int n_cells() const { return static_cast<int>(cells_.size()); }
    /// Vertices per cell (dim + 1).
    int cell_size() const { return dim_ + 1; }

    const std::vector<Point>& vertices() const { return vertices_; }
    const Point& vertex(int i) const { return vertices_[i]; }
    /// Cell vertex indices; only the first dim+1 entries are meaningful.
    const std::array<int, 3>& cell(int c) const { return cells_[c]; }
    const std::vector<std::array<int, 3>>& cells() const { return cells_; }

    const std::vector<int>& boundary_vertices() const { return boundary_vertices_; }
    bool is_boundary_vertex(int i) const { return on_boundary_[i] != 0; }
    const std::vector<std::array<int, 2>>& boundary_edges() const { return boundary_edges_; }

    /// Coarse-mesh cell each cell was created from by refine(); empty otherwise.
    const std::vector<int>& parent() const { return parent_; }

    const BoundingBox& bounding_box() const { return bbox_; }

    double cell_measure(int c) const { return measure_[c]; }
    double total_measure() const;
    double cell_diameter(int c) const;
    double max_diameter() const;
    double max_cell_measure() const;

    /// Barycentric coordinates of x with respect to cell c (dim+1 entries).
    std::array<double, 3> barycentric(int c, const Point& x) const;
    /// Index of a cell containing x (within tol in barycentric coordinates), or -1.
    int locate(const Point& x, double tol = 1e-12) const;

    /// Structural equality (geometry, connectivity, boundary tags). Ignores parent links.
    bool same_structure(const Mesh& other, double tol = 0.0) const;

private:
    void validate();

    int dim_;
    std::vector<Point> vertices_;
    std::vector<std::array<int, 3>> cells_;
    std::vector<int> boundary_vertices_;
    std::vector<std::array<int, 2>> boundary_edges_;
    std::vector<int> parent_;
    std::vector<char> on_boundary_;
    std::vector<double> measure_;
    BoundingBox bbox_;
};

Mesh build_uniform_interval(int n_cells, double a, double b);

/// nx*ny grid cells on the rectangle, each split along its (lo,lo)-(hi,hi) diagonal.
Mesh build_uniform_triangulation(int nx, int ny, const BoundingBox& rect);

/// Uniform refinement: intervals bisected, triangles split into four congruent children.
Mesh refine(const Mesh& m);

void save_mesh(const Mesh& m, const std::filesystem::path& path);
Mesh load_mesh(const std::filesystem::path& path);

/// Text form used by save_mesh/load_mesh.
std::string write_mesh_text(const Mesh& m);
Mesh parse_mesh_text(const std::string& text);

}  // namespace sgdm
