#include "sgdm/flux.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sgdm {

std::string to_string(FluxKind kind) {
    switch (kind) {
        case FluxKind::PLaplace: return "PLaplace";
        case FluxKind::RegularizedPLaplace: return "RegularizedPLaplace";
        case FluxKind::LinearDiffusion: return "LinearDiffusion";
        case FluxKind::Custom: return "Custom";
    }
    return "unknown";
}

FluxKind parse_flux_kind(const std::string& name) {
    if (name == "PLaplace") return FluxKind::PLaplace;
    if (name == "RegularizedPLaplace") return FluxKind::RegularizedPLaplace;
    if (name == "LinearDiffusion") return FluxKind::LinearDiffusion;
    if (name == "Custom") return FluxKind::Custom;
    throw std::invalid_argument("unknown flux kind '" + name + "'");
}

namespace {

void check_exponent(double p) {
    if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("flux exponent p must lie in (1, inf)");
}

}  // namespace

FluxModel FluxModel::p_laplace(double p, double newton_epsilon) {
    check_exponent(p);
    FluxModel m;
    m.kind_ = FluxKind::PLaplace;
    m.p_ = p;
    m.epsilon_ = newton_epsilon >= 0.0 ? newton_epsilon : (p < 2.0 ? 1e-6 : 0.0);
    return m;
}

FluxModel FluxModel::regularized_p_laplace(double p) {
    check_exponent(p);
    if (p < 2.0) {
        // (1+|y|)^{p-2}|y|^2 < c1 |y|^p near y = 0 for every c1 > 0 when p < 2.
        throw std::invalid_argument("RegularizedPLaplace is coercive with exponent p only for p >= 2");
    }
    FluxModel m;
    m.kind_ = FluxKind::RegularizedPLaplace;
    m.p_ = p;
    m.c2_ = std::pow(2.0, p - 2.0);
    return m;
}

FluxModel FluxModel::linear_diffusion() {
    FluxModel m;
    m.kind_ = FluxKind::LinearDiffusion;
    m.p_ = 2.0;
    return m;
}

FluxModel FluxModel::custom(Function a, double p, double c1, double c2, Jacobian jacobian, bool depends_on_value) {
    check_exponent(p);
    if (!a) throw std::invalid_argument("custom flux needs a callable");
    FluxModel m;
    m.kind_ = FluxKind::Custom;
    m.p_ = p;
    m.c1_ = c1;
    m.c2_ = c2;
    m.custom_ = std::move(a);
    m.custom_jacobian_ = std::move(jacobian);
    m.depends_on_value_ = depends_on_value;
    return m;
}

FluxModel FluxModel::named_custom(const std::string& name, double p) {
    if (name == "anti_monotone") {
        return custom([](double, const FluxVec& y) -> FluxVec { return -y; }, p, 1.0, 1.0,
                      [](double, const FluxVec& y) -> FluxMat { return -FluxMat::Identity(y.size(), y.size()); },
                      false);
    }
    throw std::invalid_argument("unknown named custom flux '" + name + "'");
}

FluxModel FluxModel::with_constants(double c1, double c2) const {
    FluxModel m = *this;
    m.c1_ = c1;
    m.c2_ = c2;
    return m;
}

FluxVec FluxModel::eval(double x, const FluxVec& y) const {
    if (std::isnan(x) || y.hasNaN()) throw std::invalid_argument("eval_flux: NaN input");
    switch (kind_) {
        case FluxKind::LinearDiffusion: return y;
        case FluxKind::PLaplace: {
            const double n = y.norm();
            if (n == 0.0) return FluxVec::Zero(y.size());
            return std::pow(n, p_ - 2.0) * y;
        }
        case FluxKind::RegularizedPLaplace: return std::pow(1.0 + y.norm(), p_ - 2.0) * y;
        case FluxKind::Custom: return custom_(x, y);
    }
    return y;
}

FluxMat FluxModel::jacobian(double x, const FluxVec& y, double epsilon) const {
    const Eigen::Index d = y.size();
    const FluxMat I = FluxMat::Identity(d, d);
    switch (kind_) {
        case FluxKind::LinearDiffusion: return I;
        case FluxKind::PLaplace: {
            if (p_ == 2.0) return I;
            const double s = epsilon * epsilon + y.squaredNorm();
            if (s == 0.0) {
                // p > 2: the smoothed flux is flat at the origin; p < 2 without smoothing is singular.
                return p_ > 2.0 ? FluxMat::Zero(d, d) : FluxMat(I * 1e300);
            }
            return std::pow(s, 0.5 * (p_ - 2.0)) * I + (p_ - 2.0) * std::pow(s, 0.5 * (p_ - 4.0)) * (y * y.transpose());
        }
        case FluxKind::RegularizedPLaplace: {
            const double n = y.norm();
            if (n == 0.0) return I;
            return std::pow(1.0 + n, p_ - 2.0) * I + (p_ - 2.0) * std::pow(1.0 + n, p_ - 3.0) / n * (y * y.transpose());
        }
        case FluxKind::Custom: {
            if (custom_jacobian_) return custom_jacobian_(x, y);
            FluxMat J(d, d);
            for (Eigen::Index k = 0; k < d; ++k) {
                const double h = 1e-7 * std::max(1.0, std::abs(y[k]));
                FluxVec yp = y, ym = y;
                yp[k] += h;
                ym[k] -= h;
                J.col(k) = (custom_(x, yp) - custom_(x, ym)) / (2.0 * h);
            }
            return J;
        }
    }
    return I;
}

double FluxModel::secant_weight(double x, const FluxVec& y) const {
    switch (kind_) {
        case FluxKind::LinearDiffusion: return 1.0;
        case FluxKind::PLaplace: {
            const double s = std::max(epsilon_ * epsilon_ + y.squaredNorm(), 1e-300);
            return std::pow(s, 0.5 * (p_ - 2.0));
        }
        case FluxKind::RegularizedPLaplace: return std::pow(1.0 + y.norm(), p_ - 2.0);
        case FluxKind::Custom: {
            const double n = y.norm();
            if (n == 0.0) return 1.0;
            return std::max(eval(x, y).norm() / n, 1e-12);
        }
    }
    return 1.0;
}

FluxVec eval_flux(const FluxModel& model, double x, const FluxVec& y) { return model.eval(x, y); }
FluxMat eval_flux_jacobian(const FluxModel& model, double x, const FluxVec& y) { return model.jacobian(x, y); }

ProbeReport probe_assumptions(const FluxModel& model, long n_samples, double value_range, double grad_range,
                              std::uint64_t seed, int dim) {
    if (n_samples < 1) throw std::invalid_argument("probe_assumptions: n_samples must be >= 1");
    if (dim < 1 || dim > 2) throw std::invalid_argument("probe_assumptions: dim must be 1 or 2");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> value(-value_range, value_range);
    std::uniform_real_distribution<double> grad(-grad_range, grad_range);
    const double p = model.p();
    constexpr double slack = 1e-12;

    ProbeReport rep;
    rep.n_samples = n_samples;
    rep.tight_c1 = std::numeric_limits<double>::infinity();
    rep.tight_c2 = 0.0;
    FluxVec y(dim), z(dim);
    for (long s = 0; s < n_samples; ++s) {
        const double x = value(rng);
        for (int k = 0; k < dim; ++k) y[k] = grad(rng);
        for (int k = 0; k < dim; ++k) z[k] = grad(rng);
        const FluxVec ay = model.eval(x, y);
        const FluxVec az = model.eval(x, z);
        const double ny = y.norm();
        const double coer = ay.dot(y);
        const double coer_rhs = model.c1() * std::pow(ny, p);
        if (coer - coer_rhs < -slack * std::max(1.0, coer_rhs)) ++rep.coercivity_violations;
        if (ny > 0.0) rep.tight_c1 = std::min(rep.tight_c1, coer / std::pow(ny, p));
        const double growth_rhs = model.c2() * (1.0 + std::pow(ny, p - 1.0));
        if (ay.norm() - growth_rhs > slack * std::max(1.0, growth_rhs)) ++rep.growth_violations;
        rep.tight_c2 = std::max(rep.tight_c2, ay.norm() / (1.0 + std::pow(ny, p - 1.0)));
        const double mono = (ay - az).dot(y - z);
        if (mono < -slack * std::max(1.0, (ay - az).norm() * (y - z).norm())) ++rep.monotonicity_violations;
    }
    return rep;
}

}  // namespace sgdm
