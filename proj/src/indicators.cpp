#include "sgdm/indicators.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "sgdm/clipping.hpp"
#include "sgdm/quadrature.hpp"

namespace sgdm {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void require_p(double p) {
    if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("indicator exponent p must lie in (1, inf)");
}

// Gradient reconstruction sampled at every quadrature point: rows q*dim + d.
SpMat gradient_at_points(const GradientDiscretisation& gd, const Quadrature& q) {
    const int dim = gd.dim();
    Triplets trip;
    for (int r = 0; r < q.size(); ++r) {
        const int c = q.cell[r];
        for (int k = 0; k <= dim; ++k) {
            const int dof = gd.cell_dofs(c)[k];
            if (dof < 0) continue;
            for (int d = 0; d < dim; ++d) trip.emplace_back(r * dim + d, dof, gd.cell_gradients(c)[k][d]);
        }
    }
    SpMat G(q.size() * dim, gd.n_dofs());
    G.setFromTriplets(trip.begin(), trip.end());
    return G;
}

Vec floored_power(const Vec& mag, double exponent) {
    const double top = mag.size() ? mag.maxCoeff() : 0.0;
    const double floor = std::max(top * 1e-12, 1e-300);
    Vec out(mag.size());
    for (Eigen::Index i = 0; i < mag.size(); ++i) out[i] = std::pow(std::max(mag[i], floor), exponent);
    return out;
}

Vec expand_groups(const Vec& gw, int group) {
    Vec out(gw.size() * group);
    for (Eigen::Index g = 0; g < gw.size(); ++g) out.segment(g * group, group).setConstant(gw[g]);
    return out;
}

double piece_basis_value(const Piece& pc, int slot, const Point& x) {
    const auto& b = pc.basis[slot];
    return b[0] + b[1] * x[0] + b[2] * x[1];
}

// Quadrature nodes on a convex region (interval or polygon) appended to `pts`/`wts`.
void region_quadrature(int dim, const Polygon& region, const SimplexRule& rule, std::vector<Point>& pts,
                       std::vector<double>& wts) {
    if (dim == 1) {
        const double a = region[0][0];
        const double b = region[1][0];
        if (!(b > a)) return;
        const std::array<Point, 3> seg{Point{a, 0.0}, Point{b, 0.0}, Point{}};
        for (int r = 0; r < rule.size(); ++r) {
            pts.push_back(from_barycentric(1, seg, rule.bary[r]));
            wts.push_back((b - a) * rule.weights[r]);
        }
        return;
    }
    for (const auto& t : fan_triangulate(region)) {
        const double area = simplex_measure(2, t);
        for (int r = 0; r < rule.size(); ++r) {
            pts.push_back(from_barycentric(2, t, rule.bary[r]));
            wts.push_back(area * rule.weights[r]);
        }
    }
}

Polygon piece_region(int dim, const Piece& pc, const Point& shift) {
    if (dim == 1) {
        double a = pc.vertices[0][0] + shift[0];
        double b = pc.vertices[1][0] + shift[0];
        if (a > b) std::swap(a, b);
        return {Point{a, 0.0}, Point{b, 0.0}};
    }
    std::array<Point, 3> t = pc.vertices;
    for (auto& v : t) v = {v[0] + shift[0], v[1] + shift[1]};
    return triangle_ccw(t);
}

Polygon intersect(int dim, const Polygon& a, const Polygon& b) {
    if (dim == 1) {
        const double lo = std::max(a[0][0], b[0][0]);
        const double hi = std::min(a[1][0], b[1][0]);
        if (!(hi > lo)) return {};
        return {Point{lo, 0.0}, Point{hi, 0.0}};
    }
    Polygon p = clip_convex(a, b);
    if (p.size() < 3 || std::abs(polygon_area(p)) <= 0.0) return {};
    return p;
}

std::vector<Polygon> outside_box(int dim, const Polygon& region, const BoundingBox& box) {
    if (dim == 1) {
        std::vector<Polygon> out;
        if (region[0][0] < box.lo[0]) out.push_back({region[0], Point{std::min(region[1][0], box.lo[0]), 0.0}});
        if (region[1][0] > box.hi[0]) out.push_back({Point{std::max(region[0][0], box.hi[0]), 0.0}, region[1]});
        return out;
    }
    return subtract_box(region, box);
}

struct BoxBounds {
    Point lo, hi;
};

BoxBounds bounds_of(const Polygon& poly) {
    BoxBounds b{poly[0], poly[0]};
    for (const auto& p : poly) {
        for (int k = 0; k < 2; ++k) {
            b.lo[k] = std::min(b.lo[k], p[k]);
            b.hi[k] = std::max(b.hi[k], p[k]);
        }
    }
    return b;
}

bool boxes_overlap(const BoxBounds& a, const BoxBounds& b, int dim) {
    for (int k = 0; k < dim; ++k) {
        if (a.hi[k] <= b.lo[k] || b.hi[k] <= a.lo[k]) return false;
    }
    return true;
}

// Visits every non-empty region Q ∩ (P - xi) with the piece indices.
template <class Fn>
void for_each_overlap(const GradientDiscretisation& gd, const Point& xi, Fn&& fn) {
    const int dim = gd.dim();
    const auto& pieces = gd.pieces();
    const Point neg{-xi[0], -xi[1]};
    std::vector<Polygon> plain(pieces.size());
    std::vector<BoxBounds> plain_box(pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        plain[i] = piece_region(dim, pieces[i], Point{0.0, 0.0});
        plain_box[i] = bounds_of(plain[i]);
    }
    for (std::size_t pi = 0; pi < pieces.size(); ++pi) {
        const Polygon shifted = piece_region(dim, pieces[pi], neg);
        const BoxBounds sb = bounds_of(shifted);
        for (std::size_t qi = 0; qi < pieces.size(); ++qi) {
            if (!boxes_overlap(sb, plain_box[qi], dim)) continue;
            Polygon region = intersect(dim, plain[qi], shifted);
            if (!region.empty()) fn(static_cast<int>(pi), static_cast<int>(qi), region);
        }
    }
}

bool domain_is_box(const Mesh& m) {
    const auto& b = m.bounding_box();
    double box = b.hi[0] - b.lo[0];
    if (m.dim() == 2) box *= b.hi[1] - b.lo[1];
    return std::abs(m.total_measure() - box) <= 1e-12 * box;
}

// Pointwise translate difference Pi v(x + xi) - Pi v(x) on R^d, as an operator sampled at quadrature nodes.
LpOperator translate_difference_operator(const GradientDiscretisation& gd, const Point& xi, int quad_points) {
    const int dim = gd.dim();
    if (!domain_is_box(gd.mesh())) {
        throw std::invalid_argument("indicator_T with p != 2 requires an interval or rectangular domain");
    }
    const SimplexRule rule = simplex_rule(dim, quad_points);
    const auto& pieces = gd.pieces();
    const BoundingBox& box = gd.mesh().bounding_box();
    Triplets trip;
    std::vector<double> weights;
    int row = 0;
    auto emit = [&](const Polygon& region, const Piece* shifted_piece, const Piece* plain_piece) {
        std::vector<Point> pts;
        std::vector<double> wts;
        region_quadrature(dim, region, rule, pts, wts);
        for (std::size_t r = 0; r < pts.size(); ++r) {
            const Point& x = pts[r];
            if (shifted_piece) {
                const Point y{x[0] + xi[0], x[1] + xi[1]};
                for (int k = 0; k <= dim; ++k) {
                    if (shifted_piece->dofs[k] >= 0)
                        trip.emplace_back(row, shifted_piece->dofs[k], piece_basis_value(*shifted_piece, k, y));
                }
            }
            if (plain_piece) {
                for (int k = 0; k <= dim; ++k) {
                    if (plain_piece->dofs[k] >= 0)
                        trip.emplace_back(row, plain_piece->dofs[k], -piece_basis_value(*plain_piece, k, x));
                }
            }
            weights.push_back(wts[r]);
            ++row;
        }
    };
    for_each_overlap(gd, xi, [&](int pi, int qi, const Polygon& region) { emit(region, &pieces[pi], &pieces[qi]); });
    BoundingBox shifted_box = box;
    for (int k = 0; k < 2; ++k) {
        shifted_box.lo[k] -= xi[k];
        shifted_box.hi[k] -= xi[k];
    }
    for (const Piece& pc : pieces) {
        // Where x + xi leaves the domain only -Pi v(x) remains; where x leaves it only Pi v(x + xi).
        for (const auto& reg : outside_box(dim, piece_region(dim, pc, Point{0.0, 0.0}), shifted_box))
            emit(reg, nullptr, &pc);
        for (const auto& reg : outside_box(dim, piece_region(dim, pc, Point{-xi[0], -xi[1]}), box))
            emit(reg, &pc, nullptr);
    }
    LpOperator op;
    op.A.resize(row, gd.n_dofs());
    op.A.setFromTriplets(trip.begin(), trip.end());
    op.weights = Eigen::Map<Vec>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    op.group = 1;
    return op;
}

}  // namespace

double LpOperator::norm(const Vec& v, double p) const {
    const Vec m = group_magnitudes(v);
    double s = 0.0;
    for (Eigen::Index g = 0; g < m.size(); ++g) s += weights[g] * std::pow(m[g], p);
    return std::pow(s, 1.0 / p);
}

Vec LpOperator::group_magnitudes(const Vec& v) const {
    const Vec r = A * v;
    Vec m(weights.size());
    for (Eigen::Index g = 0; g < m.size(); ++g) m[g] = r.segment(g * group, group).norm();
    return m;
}

SpMat LpOperator::weighted_gram(const Vec& group_weights) const {
    const Vec w = expand_groups(group_weights, group);
    return SpMat(A.transpose() * w.asDiagonal() * A);
}

LpOperator gradient_operator(const GradientDiscretisation& gd) {
    LpOperator op;
    op.A = gd.gradient_matrix();
    op.group = gd.dim();
    op.weights.resize(gd.mesh().n_cells());
    for (int c = 0; c < gd.mesh().n_cells(); ++c) op.weights[c] = gd.mesh().cell_measure(c);
    return op;
}

double max_generalized_eigenvalue(const SpMat& A, const SpMat& B, int dense_limit, Vec* eigvec) {
    const Eigen::Index n = A.rows();
    if (n <= dense_limit) {
        const Eigen::MatrixXd Ad = Eigen::MatrixXd(A);
        const Eigen::MatrixXd Bd = Eigen::MatrixXd(B);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(0.5 * (Ad + Ad.transpose()),
                                                                      0.5 * (Bd + Bd.transpose()));
        if (ges.info() != Eigen::Success) throw std::runtime_error("generalized eigensolver failed");
        if (eigvec) *eigvec = ges.eigenvectors().col(n - 1);
        return ges.eigenvalues()(n - 1);
    }
    Eigen::SimplicialLDLT<SpMat> chol(B);
    if (chol.info() != Eigen::Success) throw std::runtime_error("factorisation of the denominator Gram failed");
    Vec x = Vec::Ones(n);
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
        Vec y = chol.solve(A * x);
        const double ny = std::sqrt(y.dot(B * y));
        if (ny == 0.0) break;
        y /= ny;
        const double next = y.dot(A * y);
        x = y;
        if (it > 5 && std::abs(next - lambda) <= 1e-14 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    if (eigvec) *eigvec = x;
    return lambda;
}

IndicatorResult maximize_lp_ratio(const LpOperator& num, const LpOperator& den, double p,
                                  const IndicatorOptions& opts) {
    require_p(p);
    const Eigen::Index n = num.A.cols();
    IndicatorResult res;
    Vec v;
    const double lambda2 =
        max_generalized_eigenvalue(num.weighted_gram(num.weights), den.weighted_gram(den.weights), opts.dense_limit, &v);
    if (p == 2.0) {
        res.value = res.lower_bound = std::sqrt(std::max(lambda2, 0.0));
        return res;
    }
    auto ratio = [&](const Vec& x) {
        const double d = den.norm(x, p);
        return d > 0.0 ? num.norm(x, p) / d : 0.0;
    };
    double best = ratio(v);
    Vec nw = num.weights.cwiseProduct(floored_power(num.group_magnitudes(v), p - 2.0));
    Vec dw = den.weights.cwiseProduct(floored_power(den.group_magnitudes(v), p - 2.0));
    double prev = best;
    res.converged = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
        Vec next;
        max_generalized_eigenvalue(num.weighted_gram(nw), den.weighted_gram(dw), opts.dense_limit, &next);
        if (next.dot(v) < 0.0) next = -next;
        v = next;
        const double r = ratio(v);
        best = std::max(best, r);
        res.iterations = it + 1;
        if (std::abs(r - prev) <= opts.tolerance * std::max(r, 1e-300)) {
            res.converged = true;
            break;
        }
        prev = r;
        nw = opts.damping * nw + (1.0 - opts.damping) * num.weights.cwiseProduct(floored_power(num.group_magnitudes(v), p - 2.0));
        dw = opts.damping * dw + (1.0 - opts.damping) * den.weights.cwiseProduct(floored_power(den.group_magnitudes(v), p - 2.0));
    }
    res.value = best;
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal;
    for (int k = 0; k < opts.random_directions; ++k) {
        Vec x(n);
        for (Eigen::Index i = 0; i < n; ++i) x[i] = normal(rng);
        best = std::max(best, ratio(x));
    }
    res.value = best;
    res.lower_bound = best;
    return res;
}

BestInterpolant interpolate_best(const GradientDiscretisation& gd, const ScalarField& phi, const VectorField& grad_phi,
                                 double p, double phat, const IndicatorOptions& opts) {
    require_p(p);
    if (!(phat >= 1.0)) throw std::invalid_argument("interpolate_best: phat must be >= 1");
    const int dim = gd.dim();
    const Quadrature q = gd.make_quadrature(opts.quad_points);
    const SpMat G = gradient_at_points(gd, q);
    Vec f(q.size()), g(q.size() * dim);
    for (int r = 0; r < q.size(); ++r) {
        f[r] = phi(q.points[r]);
        const Point gr = grad_phi(q.points[r]);
        for (int d = 0; d < dim; ++d) g[r * dim + d] = gr[d];
    }
    const Vec wg = expand_groups(q.weights, dim);

    auto objective = [&](const Vec& w) {
        const Vec rf = q.values * w - f;
        const Vec rg = G * w - g;
        double sf = 0.0, sg = 0.0;
        for (int r = 0; r < q.size(); ++r) {
            sf += q.weights[r] * std::pow(std::abs(rf[r]), phat);
            sg += q.weights[r] * std::pow(rg.segment(r * dim, dim).norm(), p);
        }
        return std::pow(sf, 1.0 / phat) + std::pow(sg, 1.0 / p);
    };
    auto weighted_solve = [&](const Vec& af, const Vec& ag) {
        const Vec agx = expand_groups(ag, dim);
        const SpMat A = SpMat(q.values.transpose() * (q.weights.cwiseProduct(af)).asDiagonal() * q.values) +
                        SpMat(G.transpose() * (wg.cwiseProduct(agx)).asDiagonal() * G);
        const Vec b = q.values.transpose() * (q.weights.cwiseProduct(af).cwiseProduct(f)) +
                      G.transpose() * (wg.cwiseProduct(agx).cwiseProduct(g));
        Eigen::SimplicialLDLT<SpMat> solver(A);
        if (solver.info() != Eigen::Success) throw std::runtime_error("interpolate_best: singular normal equations");
        return Vec(solver.solve(b));
    };

    BestInterpolant out;
    Vec w = weighted_solve(Vec::Ones(q.size()), Vec::Ones(q.size()));
    out.w = w;
    out.s_value = objective(w);
    if (p == 2.0 && phat == 2.0) return out;

    auto residual_weights = [&](const Vec& x, Vec& af, Vec& ag) {
        const Vec rf = q.values * x - f;
        const Vec rg = G * x - g;
        Vec mf(q.size()), mg(q.size());
        for (int r = 0; r < q.size(); ++r) {
            mf[r] = std::abs(rf[r]);
            mg[r] = rg.segment(r * dim, dim).norm();
        }
        af = floored_power(mf, phat - 2.0);
        ag = floored_power(mg, p - 2.0);
    };
    Vec af, ag;
    residual_weights(w, af, ag);
    out.converged = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
        const Vec next = weighted_solve(af, ag);
        const double change = (next - w).norm() / std::max(w.norm(), 1e-300);
        w = next;
        out.iterations = it + 1;
        const double s = objective(w);
        if (s < out.s_value) {
            out.s_value = s;
            out.w = w;
        }
        if (change <= opts.tolerance) {
            out.converged = true;
            break;
        }
        Vec af_new, ag_new;
        residual_weights(w, af_new, ag_new);
        af = opts.damping * af + (1.0 - opts.damping) * af_new;
        ag = opts.damping * ag + (1.0 - opts.damping) * ag_new;
    }
    return out;
}

Vec conformity_functional(const GradientDiscretisation& gd, const VectorField& phi, const ScalarField& div_phi,
                          int quad_points) {
    const int dim = gd.dim();
    const Quadrature q = gd.make_quadrature(quad_points);
    // Integral of phi over each cell, paired with the constant cell gradients.
    std::vector<Point> cell_phi(gd.mesh().n_cells(), Point{0.0, 0.0});
    Vec dv(q.size());
    for (int r = 0; r < q.size(); ++r) {
        const Point f = phi(q.points[r]);
        for (int d = 0; d < dim; ++d) cell_phi[q.cell[r]][d] += q.weights[r] * f[d];
        dv[r] = q.weights[r] * div_phi(q.points[r]);
    }
    Vec c = q.values.transpose() * dv;
    for (int cell = 0; cell < gd.mesh().n_cells(); ++cell) {
        for (int k = 0; k <= dim; ++k) {
            const int dof = gd.cell_dofs(cell)[k];
            if (dof < 0) continue;
            for (int d = 0; d < dim; ++d) c[dof] += gd.cell_gradients(cell)[k][d] * cell_phi[cell][d];
        }
    }
    return c;
}

IndicatorResult indicator_W(const GradientDiscretisation& gd, const VectorField& phi, const ScalarField& div_phi,
                            double p, const IndicatorOptions& opts) {
    require_p(p);
    if (gd.n_dofs() == 0) throw std::invalid_argument("indicator_W: zero-dimensional discrete space");
    const Vec c = conformity_functional(gd, phi, div_phi, opts.quad_points);
    IndicatorResult res;
    if (c.norm() == 0.0) return res;
    const LpOperator grad = gradient_operator(gd);
    auto solve_with = [&](const Vec& cell_weights) {
        Eigen::SimplicialLDLT<SpMat> solver(grad.weighted_gram(cell_weights));
        if (solver.info() != Eigen::Success) throw std::runtime_error("indicator_W: singular gradient Gram matrix");
        return Vec(solver.solve(c));
    };
    Vec v = solve_with(grad.weights);
    if (p == 2.0) {
        res.value = res.lower_bound = std::sqrt(std::max(c.dot(v), 0.0));
        return res;
    }
    auto ratio = [&](const Vec& x) { return std::abs(c.dot(x)) / grad.norm(x, p); };
    double best = ratio(v);
    Vec cw = grad.weights.cwiseProduct(floored_power(grad.group_magnitudes(v), p - 2.0));
    res.converged = false;
    double prev = best;
    for (int it = 0; it < opts.max_iterations; ++it) {
        v = solve_with(cw);
        const double r = ratio(v);
        best = std::max(best, r);
        res.iterations = it + 1;
        if (std::abs(r - prev) <= opts.tolerance * r) {
            res.converged = true;
            break;
        }
        prev = r;
        cw = opts.damping * cw +
             (1.0 - opts.damping) * grad.weights.cwiseProduct(floored_power(grad.group_magnitudes(v), p - 2.0));
    }
    res.value = ratio(v);
    res.lower_bound = best;
    return res;
}

SpMat translate_overlap(const GradientDiscretisation& gd, const Point& xi) {
    const int dim = gd.dim();
    const SimplexRule rule = simplex_rule(dim, 3);
    const auto& pieces = gd.pieces();
    Triplets trip;
    for_each_overlap(gd, xi, [&](int pi, int qi, const Polygon& region) {
        const Piece& P = pieces[pi];
        const Piece& Q = pieces[qi];
        std::vector<Point> pts;
        std::vector<double> wts;
        region_quadrature(dim, region, rule, pts, wts);
        for (int a = 0; a <= dim; ++a) {
            if (P.dofs[a] < 0) continue;
            for (int b = 0; b <= dim; ++b) {
                if (Q.dofs[b] < 0) continue;
                double s = 0.0;
                for (std::size_t r = 0; r < pts.size(); ++r) {
                    const Point y{pts[r][0] + xi[0], pts[r][1] + xi[1]};
                    s += wts[r] * piece_basis_value(P, a, y) * piece_basis_value(Q, b, pts[r]);
                }
                trip.emplace_back(P.dofs[a], Q.dofs[b], s);
            }
        }
    });
    SpMat S(gd.n_dofs(), gd.n_dofs());
    S.setFromTriplets(trip.begin(), trip.end());
    return S;
}

IndicatorResult indicator_T(const GradientDiscretisation& gd, const Point& xi, double p,
                            const IndicatorOptions& opts) {
    require_p(p);
    IndicatorResult res;
    if (xi[0] == 0.0 && xi[1] == 0.0) return res;
    if (p == 2.0) {
        const SpMat S = translate_overlap(gd, xi);
        const SpMat A = 2.0 * gd.mass_matrix() - S - SpMat(S.transpose());
        const double lambda = max_generalized_eigenvalue(A, gd.stiffness_matrix(), opts.dense_limit);
        res.value = res.lower_bound = std::sqrt(std::max(lambda, 0.0));
        return res;
    }
    return maximize_lp_ratio(translate_difference_operator(gd, xi, opts.quad_points), gradient_operator(gd), p, opts);
}

IndicatorResult poincare_constant(const GradientDiscretisation& gd, double p, const IndicatorOptions& opts) {
    require_p(p);
    if (p == 2.0) {
        const double lambda = max_generalized_eigenvalue(gd.mass_matrix(), gd.stiffness_matrix(), opts.dense_limit);
        IndicatorResult res;
        res.value = res.lower_bound = std::sqrt(lambda);
        return res;
    }
    LpOperator num;
    num.A = gd.quadrature().values;
    num.weights = gd.quadrature().weights;
    return maximize_lp_ratio(num, gradient_operator(gd), p, opts);
}

}  // namespace sgdm
