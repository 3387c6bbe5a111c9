#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sgdm/mesh.hpp"

namespace sgdm {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

enum class GDKind { P1Conforming, P1MassLumped, CrouzeixRaviart };

std::string to_string(GDKind kind);
GDKind parse_gd_kind(const std::string& name);

using ScalarField = std::function<double(const Point&)>;
using VectorField = std::function<Point(const Point&)>;

/// Simplex on which the function reconstruction is affine in every basis function.
struct Piece {
    int cell = -1;
    std::array<Point, 3> vertices{};
    /// Global DOF per local slot, -1 for unused or Dirichlet-eliminated slots.
    std::array<int, 3> dofs{-1, -1, -1};
    /// Basis function of each slot as c0 + c1*x + c2*y.
    std::array<std::array<double, 3>, 3> basis{};
    double measure = 0.0;
};

/// Quadrature over all pieces with the reconstruction operator sampled at the points.
struct Quadrature {
    std::vector<Point> points;
    Vec weights;  // physical weights (include the piece measure)
    std::vector<int> piece;
    std::vector<int> cell;
    SpMat values;  // n_points x n_dofs, row q holds the basis values at points[q]
    int size() const { return static_cast<int>(points.size()); }
};

/**
 * Gradient discretisation for homogeneous Dirichlet conditions: the discrete
 * space (interior DOFs only), the function reconstruction, and the piecewise
 * constant gradient reconstruction.
 *
 * - P1Conforming: nodal hat functions.
 * - P1MassLumped: same DOFs and gradient; functions are constant on the
 *   barycentric dual cell of each node.
 * - CrouzeixRaviart: edge-midpoint DOFs with broken-linear functions and
 *   broken gradients. In 1D it coincides with P1Conforming.
 *
 * Immutable after build; all queries are const and thread-safe.
 */
class GradientDiscretisation {
public:
    /// Default quadrature: points per direction on each simplex.
    static constexpr int kDefaultQuadPoints = 4;

    GradientDiscretisation(std::shared_ptr<const Mesh> mesh, GDKind kind, int quad_points = kDefaultQuadPoints);

    GDKind kind() const { return kind_; }
    const Mesh& mesh() const { return *mesh_; }
    std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
    int dim() const { return mesh_->dim(); }
    int n_dofs() const { return n_dofs_; }

    /// Location of each DOF (vertex or edge midpoint); used by the interpolator.
    const std::vector<Point>& dof_points() const { return dof_points_; }
    const std::vector<Piece>& pieces() const { return pieces_; }
    const std::vector<int>& cell_pieces(int c) const { return cell_pieces_[c]; }
    const std::array<int, 3>& cell_dofs(int c) const { return cell_dofs_[c]; }
    /// Constant gradient of each local slot on cell c.
    const std::array<Point, 3>& cell_gradients(int c) const { return cell_grads_[c]; }

    const Quadrature& quadrature() const { return quad_; }
    Quadrature make_quadrature(int points_per_direction) const;

    /// (dim * n_cells) x n_dofs; rows c*dim .. c*dim+dim-1 give the gradient on cell c.
    const SpMat& gradient_matrix() const { return grad_; }
    /// Gram matrix of the function reconstruction in L^2.
    const SpMat& mass_matrix() const { return mass_; }
    /// Gram matrix of the gradient reconstruction in L^2.
    const SpMat& stiffness_matrix() const { return stiff_; }

    Vec function_at_quadrature(const Vec& v) const;
    /// Pi_D v at x; throws std::out_of_range if x is outside the domain.
    double reconstruct_function(const Vec& v, const Point& x) const;
    double evaluate_in_cell(const Vec& v, int cell, const Point& x) const;
    std::vector<Point> reconstruct_gradient(const Vec& v) const;

    Vec interpolate_initial(const ScalarField& u0) const;

    /// ||Pi_D v||_{L^p}, p >= 1.
    double lp_norm(const Vec& v, double p) const;
    /// ||grad_D v||_{L^p}, Euclidean norm pointwise.
    double grad_lp_norm(const Vec& v, double p) const;
    double l2_inner(const Vec& v, const Vec& w) const;

    /// Index of the piece of cell c containing x (closest if on a shared face).
    int piece_containing(int cell, const Point& x) const;

private:
    void build_p1();
    void build_crouzeix_raviart();
    void finish();
    void check_size(const Vec& v) const;

    std::shared_ptr<const Mesh> mesh_;
    GDKind kind_;
    int quad_points_;
    int n_dofs_ = 0;
    std::vector<Point> dof_points_;
    std::vector<Piece> pieces_;
    std::vector<std::vector<int>> cell_pieces_;
    std::vector<std::array<int, 3>> cell_dofs_;
    std::vector<std::array<Point, 3>> cell_grads_;
    Quadrature quad_;
    SpMat grad_;
    SpMat mass_;
    SpMat stiff_;
};

using GDPtr = std::shared_ptr<const GradientDiscretisation>;

GDPtr build_gd(std::shared_ptr<const Mesh> mesh, GDKind kind);

/// Barycentric coordinates of x in the simplex with vertices v.
std::array<double, 3> simplex_barycentric(int dim, const std::array<Point, 3>& v, const Point& x);

}  // namespace sgdm
