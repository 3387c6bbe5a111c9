#include "sgdm/gd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "sgdm/quadrature.hpp"

namespace sgdm {

std::string to_string(GDKind kind) {
    switch (kind) {
        case GDKind::P1Conforming: return "P1Conforming";
        case GDKind::P1MassLumped: return "P1MassLumped";
        case GDKind::CrouzeixRaviart: return "CrouzeixRaviart";
    }
    return "unknown";
}

GDKind parse_gd_kind(const std::string& name) {
    if (name == "P1Conforming") return GDKind::P1Conforming;
    if (name == "P1MassLumped") return GDKind::P1MassLumped;
    if (name == "CrouzeixRaviart") return GDKind::CrouzeixRaviart;
    throw std::invalid_argument("unknown gradient discretisation kind '" + name + "'");
}

namespace {

// Coefficients (c0, c1, c2) of the barycentric functions of a simplex: lambda_k(x) = c0 + c1 x + c2 y.
std::array<std::array<double, 3>, 3> affine_barycentric(int dim, const std::array<Point, 3>& v) {
    std::array<std::array<double, 3>, 3> out{};
    if (dim == 1) {
        const double len = v[1][0] - v[0][0];
        out[0] = {v[1][0] / len, -1.0 / len, 0.0};
        out[1] = {-v[0][0] / len, 1.0 / len, 0.0};
        return out;
    }
    Eigen::Matrix3d A;
    for (int i = 0; i < 3; ++i) A.row(i) << 1.0, v[i][0], v[i][1];
    const Eigen::Matrix3d C = A.inverse();
    for (int k = 0; k < 3; ++k) out[k] = {C(0, k), C(1, k), C(2, k)};
    return out;
}

std::array<Point, 3> cell_vertices(const Mesh& m, int c) {
    std::array<Point, 3> v{};
    for (int k = 0; k < m.cell_size(); ++k) v[k] = m.vertex(m.cell(c)[k]);
    return v;
}

Point midpoint(const Point& a, const Point& b) { return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])}; }

}  // namespace

std::array<double, 3> simplex_barycentric(int dim, const std::array<Point, 3>& v, const Point& x) {
    const auto c = affine_barycentric(dim, v);
    std::array<double, 3> l{0.0, 0.0, 0.0};
    for (int k = 0; k <= dim; ++k) l[k] = c[k][0] + c[k][1] * x[0] + c[k][2] * x[1];
    return l;
}

GradientDiscretisation::GradientDiscretisation(std::shared_ptr<const Mesh> mesh, GDKind kind, int quad_points)
    : mesh_(std::move(mesh)), kind_(kind), quad_points_(quad_points) {
    if (!mesh_) throw std::invalid_argument("build_gd: null mesh");
    if (quad_points_ < 1) throw std::invalid_argument("build_gd: quadrature needs at least one point");
    if (kind_ == GDKind::CrouzeixRaviart && mesh_->dim() == 2) {
        build_crouzeix_raviart();
    } else {
        build_p1();
    }
    if (n_dofs_ == 0) throw std::invalid_argument("build_gd: mesh has no interior degrees of freedom");
    finish();
}

void GradientDiscretisation::build_p1() {
    const Mesh& m = *mesh_;
    const int dim = m.dim();
    std::vector<int> vertex_dof(m.n_vertices(), -1);
    for (int i = 0; i < m.n_vertices(); ++i) {
        if (!m.is_boundary_vertex(i)) {
            vertex_dof[i] = n_dofs_++;
            dof_points_.push_back(m.vertex(i));
        }
    }
    cell_pieces_.resize(m.n_cells());
    cell_dofs_.resize(m.n_cells());
    cell_grads_.resize(m.n_cells());
    for (int c = 0; c < m.n_cells(); ++c) {
        const auto v = cell_vertices(m, c);
        const auto lam = affine_barycentric(dim, v);
        std::array<int, 3> dofs{-1, -1, -1};
        for (int k = 0; k <= dim; ++k) {
            dofs[k] = vertex_dof[m.cell(c)[k]];
            cell_grads_[c][k] = {lam[k][1], lam[k][2]};
        }
        cell_dofs_[c] = dofs;

        if (kind_ != GDKind::P1MassLumped) {
            Piece pc;
            pc.cell = c;
            pc.vertices = v;
            pc.dofs = dofs;
            pc.basis = lam;
            pc.measure = m.cell_measure(c);
            cell_pieces_[c].push_back(static_cast<int>(pieces_.size()));
            pieces_.push_back(pc);
            continue;
        }
        // Mass lumping: the region of the cell where lambda_k is largest carries the constant 1 of vertex k.
        auto add_piece = [&](std::array<Point, 3> pv, int dof) {
            Piece pc;
            pc.cell = c;
            pc.vertices = pv;
            pc.dofs = {dof, -1, -1};
            pc.basis[0] = {1.0, 0.0, 0.0};
            pc.measure = simplex_measure(dim, pv);
            cell_pieces_[c].push_back(static_cast<int>(pieces_.size()));
            pieces_.push_back(pc);
        };
        if (dim == 1) {
            const Point mid = midpoint(v[0], v[1]);
            add_piece({v[0], mid, Point{}}, dofs[0]);
            add_piece({mid, v[1], Point{}}, dofs[1]);
        } else {
            const Point g{(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0};
            for (int k = 0; k < 3; ++k) {
                const Point mj = midpoint(v[k], v[(k + 1) % 3]);
                const Point ml = midpoint(v[k], v[(k + 2) % 3]);
                add_piece({v[k], mj, g}, dofs[k]);
                add_piece({v[k], g, ml}, dofs[k]);
            }
        }
    }
}

void GradientDiscretisation::build_crouzeix_raviart() {
    const Mesh& m = *mesh_;
    std::set<std::array<int, 2>> boundary(m.boundary_edges().begin(), m.boundary_edges().end());
    std::map<std::array<int, 2>, int> edge_dof;
    cell_pieces_.resize(m.n_cells());
    cell_dofs_.resize(m.n_cells());
    cell_grads_.resize(m.n_cells());
    for (int c = 0; c < m.n_cells(); ++c) {
        const auto& cv = m.cell(c);
        const auto v = cell_vertices(m, c);
        const auto lam = affine_barycentric(2, v);
        Piece pc;
        pc.cell = c;
        pc.vertices = v;
        pc.measure = m.cell_measure(c);
        for (int k = 0; k < 3; ++k) {
            // Slot k is the edge opposite vertex k; its basis is 1 - 2 lambda_k.
            int a = cv[(k + 1) % 3];
            int b = cv[(k + 2) % 3];
            const std::array<int, 2> e = a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
            int dof = -1;
            if (!boundary.count(e)) {
                auto it = edge_dof.find(e);
                if (it == edge_dof.end()) {
                    it = edge_dof.emplace(e, n_dofs_++).first;
                    dof_points_.push_back(midpoint(m.vertex(e[0]), m.vertex(e[1])));
                }
                dof = it->second;
            }
            pc.dofs[k] = dof;
            pc.basis[k] = {1.0 - 2.0 * lam[k][0], -2.0 * lam[k][1], -2.0 * lam[k][2]};
            cell_grads_[c][k] = {-2.0 * lam[k][1], -2.0 * lam[k][2]};
        }
        cell_dofs_[c] = pc.dofs;
        cell_pieces_[c].push_back(static_cast<int>(pieces_.size()));
        pieces_.push_back(pc);
    }
}

Quadrature GradientDiscretisation::make_quadrature(int points_per_direction) const {
    const int dim = mesh_->dim();
    const SimplexRule rule = simplex_rule(dim, points_per_direction);
    Quadrature q;
    const std::size_t n = pieces_.size() * rule.size();
    q.points.reserve(n);
    q.piece.reserve(n);
    q.cell.reserve(n);
    q.weights.resize(static_cast<Eigen::Index>(n));
    std::vector<Eigen::Triplet<double>> trip;
    int row = 0;
    for (std::size_t pi = 0; pi < pieces_.size(); ++pi) {
        const Piece& pc = pieces_[pi];
        for (int r = 0; r < rule.size(); ++r) {
            const Point x = from_barycentric(dim, pc.vertices, rule.bary[r]);
            q.points.push_back(x);
            q.piece.push_back(static_cast<int>(pi));
            q.cell.push_back(pc.cell);
            q.weights[row] = pc.measure * rule.weights[r];
            for (int k = 0; k <= dim; ++k) {
                if (pc.dofs[k] < 0) continue;
                const auto& b = pc.basis[k];
                trip.emplace_back(row, pc.dofs[k], b[0] + b[1] * x[0] + b[2] * x[1]);
            }
            ++row;
        }
    }
    q.values.resize(row, n_dofs_);
    q.values.setFromTriplets(trip.begin(), trip.end());
    return q;
}

void GradientDiscretisation::finish() {
    const Mesh& m = *mesh_;
    const int dim = m.dim();
    quad_ = make_quadrature(quad_points_);

    std::vector<Eigen::Triplet<double>> trip;
    for (int c = 0; c < m.n_cells(); ++c) {
        for (int k = 0; k <= dim; ++k) {
            const int dof = cell_dofs_[c][k];
            if (dof < 0) continue;
            for (int d = 0; d < dim; ++d) trip.emplace_back(c * dim + d, dof, cell_grads_[c][k][d]);
        }
    }
    grad_.resize(m.n_cells() * dim, n_dofs_);
    grad_.setFromTriplets(trip.begin(), trip.end());

    mass_ = SpMat(quad_.values.transpose() * quad_.weights.asDiagonal() * quad_.values);
    Vec cw(m.n_cells() * dim);
    for (int c = 0; c < m.n_cells(); ++c) {
        for (int d = 0; d < dim; ++d) cw[c * dim + d] = m.cell_measure(c);
    }
    stiff_ = SpMat(grad_.transpose() * cw.asDiagonal() * grad_);
    mass_.prune(0.0);
    stiff_.prune(0.0);
}

void GradientDiscretisation::check_size(const Vec& v) const {
    if (v.size() != n_dofs_) {
        throw std::invalid_argument("discrete vector has size " + std::to_string(v.size()) + ", expected " +
                                    std::to_string(n_dofs_));
    }
}

Vec GradientDiscretisation::function_at_quadrature(const Vec& v) const {
    check_size(v);
    return quad_.values * v;
}

int GradientDiscretisation::piece_containing(int cell, const Point& x) const {
    const auto& list = cell_pieces_[cell];
    if (list.size() == 1) return list.front();
    int best = list.front();
    double best_score = -std::numeric_limits<double>::infinity();
    for (int pi : list) {
        const auto l = simplex_barycentric(dim(), pieces_[pi].vertices, x);
        double score = l[0];
        for (int k = 1; k <= dim(); ++k) score = std::min(score, l[k]);
        if (score > best_score) {
            best_score = score;
            best = pi;
        }
    }
    return best;
}

double GradientDiscretisation::evaluate_in_cell(const Vec& v, int cell, const Point& x) const {
    check_size(v);
    const Piece& pc = pieces_[piece_containing(cell, x)];
    double s = 0.0;
    for (int k = 0; k <= dim(); ++k) {
        if (pc.dofs[k] < 0) continue;
        const auto& b = pc.basis[k];
        s += v[pc.dofs[k]] * (b[0] + b[1] * x[0] + b[2] * x[1]);
    }
    return s;
}

double GradientDiscretisation::reconstruct_function(const Vec& v, const Point& x) const {
    const int c = mesh_->locate(x, 1e-12);
    if (c < 0) throw std::out_of_range("reconstruct_function: point outside the domain");
    return evaluate_in_cell(v, c, x);
}

std::vector<Point> GradientDiscretisation::reconstruct_gradient(const Vec& v) const {
    check_size(v);
    const Vec g = grad_ * v;
    std::vector<Point> out(mesh_->n_cells(), Point{0.0, 0.0});
    for (int c = 0; c < mesh_->n_cells(); ++c) {
        for (int d = 0; d < dim(); ++d) out[c][d] = g[c * dim() + d];
    }
    return out;
}

Vec GradientDiscretisation::interpolate_initial(const ScalarField& u0) const {
    Vec v(n_dofs_);
    for (int i = 0; i < n_dofs_; ++i) v[i] = u0(dof_points_[i]);
    return v;
}

double GradientDiscretisation::lp_norm(const Vec& v, double p) const {
    if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
    const Vec f = function_at_quadrature(v);
    double s = 0.0;
    for (Eigen::Index q = 0; q < f.size(); ++q) s += quad_.weights[q] * std::pow(std::abs(f[q]), p);
    return std::pow(s, 1.0 / p);
}

double GradientDiscretisation::grad_lp_norm(const Vec& v, double p) const {
    if (!(p >= 1.0)) throw std::invalid_argument("grad_lp_norm: p must be >= 1");
    check_size(v);
    const Vec g = grad_ * v;
    const int d = dim();
    double s = 0.0;
    for (int c = 0; c < mesh_->n_cells(); ++c) {
        const double n = g.segment(c * d, d).norm();
        s += mesh_->cell_measure(c) * std::pow(n, p);
    }
    return std::pow(s, 1.0 / p);
}

double GradientDiscretisation::l2_inner(const Vec& v, const Vec& w) const {
    check_size(v);
    check_size(w);
    const Vec fv = quad_.values * v;
    const Vec fw = quad_.values * w;
    return (fv.array() * fw.array() * quad_.weights.array()).sum();
}

GDPtr build_gd(std::shared_ptr<const Mesh> mesh, GDKind kind) {
    return std::make_shared<const GradientDiscretisation>(std::move(mesh), kind);
}

}  // namespace sgdm
