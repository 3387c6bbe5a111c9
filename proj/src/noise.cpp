#include "sgdm/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgdm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

NemytskiiMap NemytskiiMap::zero() { return NemytskiiMap(); }

NemytskiiMap NemytskiiMap::constant(double c) {
    if (!std::isfinite(c)) throw std::invalid_argument("f0 constant must be finite");
    NemytskiiMap m;
    m.kind_ = Kind::Constant;
    m.c_ = c;
    m.sup_ = std::abs(c);
    return m;
}

NemytskiiMap NemytskiiMap::identity() {
    NemytskiiMap m;
    m.kind_ = Kind::Identity;
    m.sup_ = std::numeric_limits<double>::infinity();
    return m;
}

NemytskiiMap NemytskiiMap::tanh() {
    NemytskiiMap m;
    m.kind_ = Kind::Tanh;
    m.sup_ = 1.0;
    return m;
}

NemytskiiMap NemytskiiMap::table(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.empty()) throw std::invalid_argument("f0 table needs matching non-empty xs/ys");
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (!(xs[i] > xs[i - 1])) throw std::invalid_argument("f0 table abscissae must be strictly increasing");
    }
    NemytskiiMap m;
    m.kind_ = Kind::Table;
    for (double y : ys) {
        if (!std::isfinite(y)) throw std::invalid_argument("f0 table values must be finite");
        m.sup_ = std::max(m.sup_, std::abs(y));
    }
    m.xs_ = std::move(xs);
    m.ys_ = std::move(ys);
    return m;
}

NemytskiiMap NemytskiiMap::square() {
    NemytskiiMap m;
    m.kind_ = Kind::Square;
    m.sup_ = std::numeric_limits<double>::infinity();
    return m;
}

NemytskiiMap NemytskiiMap::custom(std::function<double(double)> f, double sup_abs) {
    if (!f) throw std::invalid_argument("custom f0 needs a callable");
    NemytskiiMap m;
    m.kind_ = Kind::Custom;
    m.fn_ = std::move(f);
    m.sup_ = sup_abs;
    return m;
}

NemytskiiMap NemytskiiMap::parse(const std::string& name, double constant) {
    if (name == "zero") return zero();
    if (name == "constant") return NemytskiiMap::constant(constant);
    if (name == "identity") return identity();
    if (name == "tanh") return tanh();
    if (name == "square") return square();
    throw std::invalid_argument("unknown f0 '" + name + "' (expected zero, constant, identity, tanh, square or table)");
}

double NemytskiiMap::operator()(double s) const {
    switch (kind_) {
        case Kind::Zero: return 0.0;
        case Kind::Constant: return c_;
        case Kind::Identity: return s;
        case Kind::Tanh: return std::tanh(s);
        case Kind::Square: return s * s;
        case Kind::Custom: return fn_(s);
        case Kind::Table: {
            if (s <= xs_.front()) return ys_.front();
            if (s >= xs_.back()) return ys_.back();
            const auto it = std::upper_bound(xs_.begin(), xs_.end(), s);
            const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
            const double t = (s - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
            return (1.0 - t) * ys_[i - 1] + t * ys_[i];
        }
    }
    return 0.0;
}

std::string NemytskiiMap::name() const {
    switch (kind_) {
        case Kind::Zero: return "zero";
        case Kind::Constant: return "constant";
        case Kind::Identity: return "identity";
        case Kind::Tanh: return "tanh";
        case Kind::Table: return "table";
        case Kind::Square: return "square";
        case Kind::Custom: return "custom";
    }
    return "unknown";
}

NoiseModel NoiseModel::sine(int dim, const BoundingBox& box, int k_max, double s, NemytskiiMap f0) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("noise dimension must be 1 or 2");
    if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
    if (!(s > 0.5)) throw std::invalid_argument("spectrum exponent s must exceed 1/2");
    NoiseModel n;
    n.dim_ = dim;
    n.box_ = box;
    if (dim == 1) {
        for (int k = 1; k <= k_max; ++k) n.modes_.push_back({k, 0});
    } else {
        std::vector<std::array<int, 2>> all;
        for (int a = 1; a <= k_max; ++a) {
            for (int b = 1; b <= k_max; ++b) all.push_back({a, b});
        }
        std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
            const int nx = x[0] * x[0] + x[1] * x[1];
            const int ny = y[0] * y[0] + y[1] * y[1];
            return nx != ny ? nx < ny : x < y;
        });
        n.modes_.assign(all.begin(), all.begin() + k_max);
    }
    n.q_.resize(k_max);
    for (int k = 0; k < k_max; ++k) n.q_[k] = std::pow(static_cast<double>(k + 1), -s);
    const double lx = box.hi[0] - box.lo[0];
    const double ly = box.hi[1] - box.lo[1];
    if (!(lx > 0.0) || (dim == 2 && !(ly > 0.0))) throw std::invalid_argument("noise box must have positive size");
    n.basis_sup_sq_ = dim == 1 ? k_max * 2.0 / lx : k_max * 4.0 / (lx * ly);
    n.f0_ = std::move(f0);
    n.default_growth();
    return n;
}

NoiseModel NoiseModel::explicit_basis(std::vector<ScalarField> basis, Vec q, NemytskiiMap f0, double F1, double F2) {
    if (basis.empty() || static_cast<Eigen::Index>(basis.size()) != q.size()) {
        throw std::invalid_argument("explicit noise basis and q must have the same non-zero length");
    }
    NoiseModel n;
    n.explicit_ = std::move(basis);
    n.q_ = std::move(q);
    n.f0_ = std::move(f0);
    n.basis_sup_sq_ = std::numeric_limits<double>::infinity();
    n.F1_ = F1;
    n.F2_ = F2;
    return n;
}

void NoiseModel::default_growth() {
    using K = NemytskiiMap::Kind;
    F1_ = 0.0;
    F2_ = 0.0;
    switch (f0_.kind()) {
        case K::Zero: break;
        case K::Identity:
        case K::Square:
            // |v k|^2 <= sup_x sum e_k^2 * |v|^2 for unit k; square has no valid constants and keeps these.
            F1_ = basis_sup_sq_;
            break;
        default:
            if (std::isfinite(f0_.sup_abs())) {
                F2_ = f0_.sup_abs() * f0_.sup_abs();
            } else {
                F1_ = F2_ = std::numeric_limits<double>::infinity();
            }
    }
}

NoiseModel NoiseModel::with_q(Vec q) const {
    if (q.size() != q_.size()) throw std::invalid_argument("q must have k_max entries");
    for (Eigen::Index k = 0; k < q.size(); ++k) {
        if (!(q[k] >= 0.0) || !std::isfinite(q[k])) throw std::invalid_argument("q entries must be finite and >= 0");
    }
    NoiseModel n = *this;
    n.q_ = std::move(q);
    return n;
}

NoiseModel NoiseModel::with_growth(double F1, double F2) const {
    if (!(F1 >= 0.0) || !(F2 >= 0.0)) throw std::invalid_argument("F1, F2 must be >= 0");
    NoiseModel n = *this;
    n.F1_ = F1;
    n.F2_ = F2;
    return n;
}

NoiseModel NoiseModel::with_f0(NemytskiiMap f0) const {
    NoiseModel n = *this;
    n.f0_ = std::move(f0);
    if (n.explicit_.empty()) n.default_growth();
    return n;
}

double NoiseModel::basis(int k, const Point& x) const {
    if (!explicit_.empty()) return explicit_[static_cast<std::size_t>(k)](x);
    const auto& m = modes_[static_cast<std::size_t>(k)];
    const double lx = box_.hi[0] - box_.lo[0];
    double v = std::sqrt(2.0 / lx) * std::sin(m[0] * kPi * (x[0] - box_.lo[0]) / lx);
    if (dim_ == 2) {
        const double ly = box_.hi[1] - box_.lo[1];
        v *= std::sqrt(2.0 / ly) * std::sin(m[1] * kPi * (x[1] - box_.lo[1]) / ly);
    }
    return v;
}

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

CounterEngine::result_type CounterEngine::operator()() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

std::uint64_t RngStream::key() const {
    std::uint64_t k = mix64(master_seed + 0x9E3779B97F4A7C15ULL);
    k = mix64(k ^ (sample_index + 0xD1B54A32D192ED03ULL));
    k = mix64(k ^ (time_index + 0x8CB92BA72F3D8DD7ULL));
    return k;
}

NoiseIncrement sample_increment(const NoiseModel& noise, const RngStream& rng, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("sample_increment: dt must be > 0");
    CounterEngine eng = rng.engine();
    std::normal_distribution<double> normal;
    NoiseIncrement inc;
    inc.dt = dt;
    inc.coeffs.resize(noise.k_max());
    const double sd = std::sqrt(dt);
    for (int k = 0; k < noise.k_max(); ++k) inc.coeffs[k] = noise.q()[k] * sd * normal(eng);
    return inc;
}

NoiseAssembler::NoiseAssembler(GDPtr gd, const NoiseModel& noise)
    : NoiseAssembler(gd, noise, gd->quadrature()) {}

NoiseAssembler::NoiseAssembler(GDPtr gd, const NoiseModel& noise, const Quadrature& quad)
    : gd_(std::move(gd)), noise_(noise), quad_(std::make_shared<const Quadrature>(quad)) {
    const int nq = quad_->size();
    E_.resize(nq, noise_.k_max());
    for (int q = 0; q < nq; ++q) {
        for (int k = 0; k < noise_.k_max(); ++k) E_(q, k) = noise_.basis(k, quad_->points[q]);
    }
}

Vec NoiseAssembler::multiplier(const Vec& v) const {
    if (v.size() != gd_->n_dofs()) throw std::invalid_argument("noise: DOF vector has wrong size");
    const Vec pv = quad_->values * v;
    Vec out(pv.size());
    for (Eigen::Index q = 0; q < pv.size(); ++q) out[q] = noise_.f0()(pv[q]);
    return out;
}

Vec NoiseAssembler::field(const Vec& coeffs) const {
    if (coeffs.size() != noise_.k_max()) throw std::invalid_argument("noise: increment has wrong size");
    return E_ * coeffs;
}

Vec NoiseAssembler::apply(const Vec& v, const NoiseIncrement& inc) const {
    if (noise_.f0().is_zero()) {
        if (v.size() != gd_->n_dofs()) throw std::invalid_argument("noise: DOF vector has wrong size");
        return Vec::Zero(quad_->size());
    }
    return multiplier(v).cwiseProduct(field(inc.coeffs));
}

Vec NoiseAssembler::load(const Vec& g) const { return quad_->values.transpose() * quad_->weights.cwiseProduct(g); }

double NoiseAssembler::l2_norm_sq(const Vec& g) const { return quad_->weights.dot(g.cwiseAbs2()); }

double NoiseAssembler::operator_norm_sq(const Vec& v) const {
    if (noise_.f0().is_zero()) return 0.0;
    const Vec w = quad_->weights.cwiseProduct(multiplier(v).cwiseAbs2());
    const Eigen::MatrixXd G = E_.transpose() * w.asDiagonal() * E_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    return std::max(0.0, es.eigenvalues().maxCoeff());
}

Vec apply_noise(const NoiseModel& noise, GDPtr gd, const Vec& v, const NoiseIncrement& inc) {
    return NoiseAssembler(std::move(gd), noise).apply(v, inc);
}

GrowthReport growth_check(const NoiseModel& noise, GDPtr gd, long trials, std::uint64_t seed,
                          const std::vector<double>& amplitudes) {
    if (trials < 1) throw std::invalid_argument("growth_check: trials must be >= 1");
    if (amplitudes.empty()) throw std::invalid_argument("growth_check: need at least one amplitude");
    const Quadrature fine = gd->make_quadrature(8);
    const NoiseAssembler as(gd, noise, fine);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    GrowthReport rep;
    rep.trials = trials;
    Vec v(gd->n_dofs()), k(noise.k_max());
    for (long t = 0; t < trials; ++t) {
        const double amp = amplitudes[static_cast<std::size_t>(t) % amplitudes.size()];
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = amp * normal(rng);
        for (Eigen::Index i = 0; i < k.size(); ++i) k[i] = normal(rng);
        const double kn = k.norm();
        if (kn == 0.0) continue;
        k /= kn;
        const double lhs = as.l2_norm_sq(as.multiplier(v).cwiseProduct(as.field(k)));
        const double rhs = noise.F1() * as.l2_norm_sq(fine.values * v) + noise.F2();
        rep.max_excess = std::max(rep.max_excess, lhs - rhs);
        if (lhs > rhs + 1e-10) ++rep.violations;
    }
    return rep;
}

}  // namespace sgdm
