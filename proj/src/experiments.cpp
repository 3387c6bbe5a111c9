#include "sgdm/experiments.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sgdm/analysis.hpp"
#include "sgdm/indicators.hpp"
#include "sgdm/parallel.hpp"

#ifndef SGDM_VERSION
#define SGDM_VERSION "0.0.0"
#endif

namespace sgdm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) { row_strings(header); }

    Csv& operator<<(double x) { return put(format_double(x)); }
    Csv& operator<<(int x) { return put(std::to_string(x)); }
    Csv& operator<<(long x) { return put(std::to_string(x)); }
    Csv& operator<<(const std::string& s) { return put(s); }
    Csv& operator<<(const char* s) { return put(s); }
    void end() {
        out_ << '\n';
        fresh_ = true;
    }
    void write(const fs::path& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f << out_.str();
    }

private:
    Csv& put(const std::string& s) {
        if (!fresh_) out_ << ',';
        out_ << s;
        fresh_ = false;
        return *this;
    }
    void row_strings(const std::vector<std::string>& xs) {
        for (const auto& x : xs) put(x);
        end();
    }
    std::ostringstream out_;
    bool fresh_ = true;
};

struct Output {
    fs::path dir;
    CommandResult result;

    Output(const ExperimentConfig& cfg, const std::string& command) : dir(cfg.output) {
        fs::create_directories(dir);
        result.command = command;
    }
    void save(const std::string& name, const Csv& csv) {
        csv.write(dir / name);
        result.files.push_back(name);
    }
    void check(const std::string& name, bool ok, double value, double threshold, const std::string& detail = "") {
        result.checks.push_back({name, ok, value, threshold, detail});
    }
    CommandResult finish(const ExperimentConfig& cfg) {
        json checks = json::array();
        for (const auto& c : result.checks) {
            checks.push_back(
                {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold}, {"detail", c.detail}});
        }
        json summary = {{"command", result.command}, {"passed", result.passed()}, {"checks", checks}};
        write_json("summary.json", summary);
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016" PRIx64, config_hash(cfg));
        json manifest = {{"version", SGDM_VERSION},
                         {"command", result.command},
                         {"config_hash", hash},
                         {"master_seed", cfg.master_seed},
                         {"config", config_to_json(cfg)}};
        write_json("manifest.json", manifest);
        return result;
    }
    void write_json(const std::string& name, const json& j) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
        f << j.dump(2) << '\n';
        result.files.push_back(name);
    }
};

void progress(const RunOptions& opts, const std::string& msg) {
    if (!opts.quiet) std::cerr << msg << '\n';
}

// Bounded across levels: finite everywhere and at most slack times the coarsest value.
void check_bounded(Output& out, const std::string& name, const std::vector<double>& vals, double slack) {
    bool finite = true;
    double worst = 0.0;
    for (double v : vals) finite = finite && std::isfinite(v);
    const double base = vals.empty() ? 0.0 : vals.front();
    for (double v : vals) worst = std::max(worst, base > 0.0 ? v / base : (v == 0.0 ? 0.0 : INFINITY));
    out.check(name, finite && worst <= slack, worst, slack, "max ratio to the coarsest level");
}

struct SampleOutcome {
    bool ok = false;
    PathFeatures features;
    double max_residual = 0.0;
    int newton_total = 0;
    int failed_step = -1;
    std::string error;
};

// Box side lengths, empty for meshes read from file.
std::vector<double> box_lengths(const ExperimentConfig& cfg) {
    if (cfg.mesh.generator == "file") return {};
    const std::size_t d = cfg.mesh.box.size() / 2;
    std::vector<double> L;
    for (std::size_t i = 0; i < d; ++i) L.push_back(cfg.mesh.box[i + d] - cfg.mesh.box[i]);
    return L;
}

double dirichlet_eigenvalue(const std::vector<double>& L) {
    double s = 0.0;
    for (double l : L) s += 1.0 / (l * l);
    return kPi * kPi * s;
}

}  // namespace

bool CommandResult::passed() const {
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return true;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

const char* library_version() { return SGDM_VERSION; }

// ----------------------------------------------------------------------- run

CommandResult cmd_run(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    Output out(cfg, "run");
    const auto levels = build_levels(cfg);
    const EstimatorConfig ecfg = build_estimator_config(cfg, levels.front()->sgd().N);
    const ScalarField u0f = initial_field(cfg);
    const double p = levels.front()->flux().p();

    Csv samples({"level", "sample", "status", "failed_step", "max_residual", "newton_iterations", "fixed_point_steps",
                 "max_l2_sq", "grad_lp_p", "increment_sum", "identity_residual"});
    Csv report({"level", "h", "N", "dt", "n_dofs", "n_samples", "n_failed", "apriori_mean", "apriori_se",
                "max_l2_sq_mean", "max_l2_sq_se", "grad_lp_p_mean", "grad_lp_p_se", "increment_sum_mean",
                "increment_sum_se", "translate_slope", "dual_slope", "martingale_hbeta_sq_mean",
                "martingale_hbeta_sq_se", "max_identity_residual", "max_inequality_gap"});
    Csv table({"level", "estimator", "arg", "mean", "se", "n"});

    std::vector<EstimatorReport> reports;
    long failures = 0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const StepperPtr& st = levels[l];
        ecfg.validate(st->sgd().N);
        const Vec u0 = st->gd().interpolate_initial(u0f);
        TrajectoryOptions topts;
        topts.store_martingale = ecfg.martingale;
        progress(opts, "run: level " + std::to_string(l) + ", " + std::to_string(cfg.n_samples) + " samples");
        const auto outcomes = parallel_map<SampleOutcome>(cfg.n_samples, opts.workers, [&](long i) {
            SampleOutcome o;
            try {
                const Trajectory tr = run_trajectory(
                    st, u0, stream_increments(st->noise(), cfg.master_seed, static_cast<std::uint64_t>(i), st->sgd().dt()),
                    topts);
                o.features = path_features(tr, ecfg);
                for (double r : tr.residuals) o.max_residual = std::max(o.max_residual, r);
                for (int it : tr.newton_iters) o.newton_total += it;
                o.ok = true;
            } catch (const StepFailure& e) {
                o.failed_step = e.step();
                o.max_residual = e.residual();
                o.error = e.what();
            }
            return o;
        });
        std::vector<PathFeatures> feats;
        long failed = 0;
        for (long i = 0; i < cfg.n_samples; ++i) {
            const auto& o = outcomes[static_cast<std::size_t>(i)];
            samples << static_cast<int>(l) << i << (o.ok ? "ok" : "failed") << o.failed_step << o.max_residual
                    << o.newton_total << o.features.fixed_point_steps << o.features.max_l2_sq << o.features.grad_lp_p
                    << o.features.increment_sum << o.features.identity_residual;
            samples.end();
            if (o.ok) {
                feats.push_back(o.features);
            } else {
                ++failed;
                progress(opts, "run: level " + std::to_string(l) + " sample " + std::to_string(i) + ": " + o.error);
            }
        }
        failures += failed;
        EstimatorReport rep;
        if (!feats.empty()) rep = reduce_features(feats, ecfg, st->sgd().dt(), p);
        reports.push_back(rep);

        const double dual_slope = rep.dual_slopes.empty() ? NAN : rep.dual_slopes.front().second;
        report << static_cast<int>(l) << st->gd().mesh().max_diameter() << st->sgd().N << st->sgd().dt()
               << st->gd().n_dofs() << rep.n_samples << failed << rep.apriori.mean << rep.apriori.se
               << rep.energy_max_l2_sq.mean << rep.energy_max_l2_sq.se << rep.grad_lp_p.mean << rep.grad_lp_p.se
               << rep.increment_sum.mean << rep.increment_sum.se << rep.translate_slope << dual_slope
               << rep.martingale_hbeta_sq.mean << rep.martingale_hbeta_sq.se << rep.max_identity_residual
               << rep.max_inequality_gap;
        report.end();

        auto row = [&](const std::string& name, double arg, const MeanSE& m) {
            table << static_cast<int>(l) << name << arg << m.mean << m.se << m.n;
            table.end();
        };
        if (ecfg.energy) {
            row("max_l2_sq", 0, rep.energy_max_l2_sq);
            row("grad_lp_p", 0, rep.grad_lp_p);
            row("increment_sum", 0, rep.increment_sum);
            row("apriori", 0, rep.apriori);
            for (const auto& [q, m] : rep.higher_moments) row("moment", q, m);
        }
        for (const auto& [ell, m] : rep.translate_table) row("translate", ell, m);
        for (const auto& d : rep.dual_increment_table) row("dual_r" + std::to_string(d.r), d.ell, d.value);
        if (ecfg.martingale) {
            row("martingale_hbeta_sq", ecfg.beta, rep.martingale_hbeta_sq);
            row("martingale_sup_r", ecfg.martingale_r, rep.martingale_sup_r);
            row("martingale_increment_mean", 0, rep.martingale_increment_mean);
            for (std::size_t n = 0; n < rep.martingale_norm_sq.size(); ++n) {
                row("martingale_norm_sq", static_cast<double>(n), rep.martingale_norm_sq[n]);
            }
        }
    }
    out.save("samples.csv", samples);
    out.save("report.csv", report);
    out.save("estimators.csv", table);

    out.check("solver", failures == 0, static_cast<double>(failures), 0.0, "failed samples");
    if (failures > 0) return out.finish(cfg);

    const auto collect = [&](auto get) {
        std::vector<double> v;
        for (const auto& r : reports) v.push_back(get(r));
        return v;
    };
    if (ecfg.energy) {
        double worst_id = 0.0, worst_gap = -INFINITY;
        for (const auto& r : reports) {
            worst_id = std::max(worst_id, r.max_identity_residual);
            worst_gap = std::max(worst_gap, r.max_inequality_gap);
        }
        out.check("energy_identity", worst_id <= cfg.checks.identity_tol, worst_id, cfg.checks.identity_tol,
                  "max pathwise residual");
        out.check("energy_inequality", worst_gap <= cfg.checks.identity_tol, worst_gap, cfg.checks.identity_tol,
                  "max of lhs - rhs");
        check_bounded(out, "apriori_bounded", collect([](const EstimatorReport& r) { return r.apriori.mean; }),
                      cfg.checks.level_slack);
        for (std::size_t k = 0; k < ecfg.moment_qs.size(); ++k) {
            check_bounded(out, "moment_q" + std::to_string(ecfg.moment_qs[k]) + "_bounded",
                          collect([k](const EstimatorReport& r) { return r.higher_moments[k].second.mean; }),
                          cfg.checks.level_slack);
        }
    }
    if (ecfg.translates && ecfg.ells.size() >= 2) {
        double worst = INFINITY;
        for (const auto& r : reports) worst = std::min(worst, r.translate_slope);
        out.check("translate_slope", worst >= cfg.checks.translate_slope, worst, cfg.checks.translate_slope,
                  "min over levels of the log-log slope");
    }
    if (ecfg.dual && ecfg.ells.size() >= 2) {
        const double alpha = std::min(0.5, 1.0 / p);
        for (std::size_t k = 0; k < ecfg.dual_rs.size(); ++k) {
            const int r = ecfg.dual_rs[k];
            const double need = cfg.checks.dual_slope_factor * alpha * r;
            double worst = INFINITY;
            for (const auto& rep : reports) worst = std::min(worst, rep.dual_slopes[k].second);
            out.check("dual_slope_r" + std::to_string(r), worst >= need, worst, need,
                      "min over levels of the log-log slope");
        }
    }
    if (ecfg.martingale) {
        check_bounded(out, "martingale_hbeta_bounded",
                      collect([](const EstimatorReport& r) { return r.martingale_hbeta_sq.mean; }),
                      cfg.checks.level_slack);
    }
    // Statistical tests need a standard error.
    if (ecfg.martingale && cfg.n_samples >= 2) {
        double worst = 0.0;
        for (const auto& r : reports) {
            const auto& m = r.martingale_increment_mean;
            worst = std::max(worst, m.se > 0.0 ? std::abs(m.mean) / m.se : (m.mean == 0.0 ? 0.0 : INFINITY));
        }
        out.check("martingale_increment_mean", worst <= 3.0, worst, 3.0, "max |mean| / SE");
        const NemytskiiMap& f0 = levels.front()->noise().f0();
        if (f0.kind() == NemytskiiMap::Kind::Constant || f0.kind() == NemytskiiMap::Kind::Zero) {
            // Additive noise: E||M^n||^2 = n dt f0^2 sum_k q_k^2 int e_k^2 (the integral over the same rule).
            double worst_z = 0.0;
            for (std::size_t l = 0; l < levels.size(); ++l) {
                const auto& as = levels[l]->assembler();
                const Vec& q = levels[l]->noise().q();
                double s = 0.0;
                for (int k = 0; k < q.size(); ++k) s += q[k] * q[k] * as.l2_norm_sq(as.basis_values().col(k));
                const double c = f0(0.0);
                const double dt = levels[l]->sgd().dt();
                const auto& ms = reports[l].martingale_norm_sq;
                for (std::size_t n = 1; n < ms.size(); ++n) {
                    const double exact = static_cast<double>(n) * dt * c * c * s;
                    const double d = std::abs(ms[n].mean - exact);
                    worst_z = std::max(worst_z, ms[n].se > 0.0 ? d / ms[n].se : (d == 0.0 ? 0.0 : INFINITY));
                }
            }
            out.check("martingale_isometry", worst_z <= 3.0, worst_z, 3.0, "max |mean - exact| / SE over n");
        }
    }

    if (cfg.dump_trajectories > 0) {
        const StepperPtr& st = levels.back();
        const Vec u0 = st->gd().interpolate_initial(u0f);
        const long count = std::min<long>(cfg.dump_trajectories, cfg.n_samples);
        Csv traj({"sample", "step", "dof_index", "value"});
        json per_sample = json::array();
        for (long i = 0; i < count; ++i) {
            const Trajectory tr = run_trajectory(
                st, u0, stream_increments(st->noise(), cfg.master_seed, static_cast<std::uint64_t>(i), st->sgd().dt()),
                TrajectoryOptions{false});
            for (int n = 0; n <= tr.N(); ++n) {
                for (int k = 0; k < tr.u[n].size(); ++k) {
                    traj << i << n << k << tr.u[n][k];
                    traj.end();
                }
            }
            per_sample.push_back({{"sample", i},
                                  {"stream", {{"master_seed", cfg.master_seed}, {"sample_index", i}}},
                                  {"residuals", tr.residuals},
                                  {"newton_iterations", tr.newton_iters}});
        }
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016" PRIx64, config_hash(cfg));
        out.save("trajectories.csv", traj);
        out.write_json("trajectories.json", {{"level", cfg.levels - 1},
                                             {"gd", cfg.gd},
                                             {"n_dofs", st->gd().n_dofs()},
                                             {"N", st->sgd().N},
                                             {"T", st->sgd().T},
                                             {"dt", st->sgd().dt()},
                                             {"config_hash", hash},
                                             {"columns", {"sample", "step", "dof_index", "value"}},
                                             {"samples", per_sample}});
    }
    return out.finish(cfg);
}

// ---------------------------------------------------------------- indicators

CommandResult cmd_indicators(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    Output out(cfg, "indicators");
    const double p = cfg.indicators.p;
    const double phat = std::max(2.0, p / (p - 1.0));
    IndicatorOptions iopts;

    Csv table({"level", "h", "n_dofs", "indicator", "arg", "value"});
    std::vector<std::vector<double>> S, W, T;
    std::vector<double> hs, cps;
    for (int l = 0; l < cfg.levels; ++l) {
        auto mesh = build_level_mesh(cfg, l);
        auto gd = build_gd(mesh, parse_gd_kind(cfg.gd));
        const int d = mesh->dim();
        const BoundingBox box = mesh->bounding_box();
        const double Lx = box.hi[0] - box.lo[0];
        const double Ly = d == 2 ? box.hi[1] - box.lo[1] : 1.0;
        auto X = [&](const Point& x) { return (x[0] - box.lo[0]) / Lx; };
        auto Y = [&](const Point& x) { return d == 2 ? (x[1] - box.lo[1]) / Ly : 0.0; };
        progress(opts, "indicators: level " + std::to_string(l) + ", " + std::to_string(gd->n_dofs()) + " dofs");

        // Battery of smooth functions vanishing on the boundary, with gradients.
        std::vector<std::pair<ScalarField, VectorField>> battery;
        for (int k = 1; k <= 2; ++k) {
            if (d == 1) {
                battery.push_back({[=](const Point& x) { return std::sin(k * kPi * X(x)); },
                                   [=](const Point& x) { return Point{k * kPi / Lx * std::cos(k * kPi * X(x)), 0.0}; }});
            } else {
                battery.push_back({[=](const Point& x) { return std::sin(k * kPi * X(x)) * std::sin(kPi * Y(x)); },
                                   [=](const Point& x) {
                                       return Point{k * kPi / Lx * std::cos(k * kPi * X(x)) * std::sin(kPi * Y(x)),
                                                    kPi / Ly * std::sin(k * kPi * X(x)) * std::cos(kPi * Y(x))};
                                   }});
            }
        }
        std::vector<std::pair<VectorField, ScalarField>> fields;
        if (d == 1) {
            fields.push_back({[=](const Point& x) { return Point{std::cos(kPi * X(x)) + X(x), 0.0}; },
                              [=](const Point& x) { return (1.0 - kPi * std::sin(kPi * X(x))) / Lx; }});
            fields.push_back({[=](const Point& x) { return Point{std::exp(X(x)), 0.0}; },
                              [=](const Point& x) { return std::exp(X(x)) / Lx; }});
        } else {
            fields.push_back({[=](const Point& x) { return Point{std::sin(kPi * Y(x)), std::sin(kPi * X(x))}; },
                              [](const Point&) { return 0.0; }});
            fields.push_back({[=](const Point& x) { return Point{X(x) * Y(x), std::cos(kPi * X(x))}; },
                              [=](const Point& x) { return Y(x) / Lx; }});
        }

        const double h = mesh->max_diameter();
        hs.push_back(h);
        S.emplace_back();
        W.emplace_back();
        T.emplace_back();
        for (std::size_t i = 0; i < battery.size(); ++i) {
            const double s = interpolate_best(*gd, battery[i].first, battery[i].second, p, phat, iopts).s_value;
            S.back().push_back(s);
            table << l << h << gd->n_dofs() << "S_D" << static_cast<int>(i) << s;
            table.end();
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const double w = indicator_W(*gd, fields[i].first, fields[i].second, p, iopts).value;
            W.back().push_back(w);
            table << l << h << gd->n_dofs() << "W_D" << static_cast<int>(i) << w;
            table.end();
        }
        for (double r : cfg.indicators.shifts) {
            const Point xi = d == 1 ? Point{r, 0.0} : Point{r / std::sqrt(2.0), r / std::sqrt(2.0)};
            const double t = indicator_T(*gd, xi, p, iopts).value;
            T.back().push_back(t);
            table << l << h << gd->n_dofs() << "T_D" << r << t;
            table.end();
        }
        const double cp = poincare_constant(*gd, p, iopts).value;
        cps.push_back(cp);
        table << l << h << gd->n_dofs() << "C_p" << p << cp;
        table.end();
    }
    out.save("indicators.csv", table);

    const int L = cfg.levels;
    for (std::size_t i = 0; i < S.front().size(); ++i) {
        bool dec = true;
        for (int l = 1; l < L; ++l) dec = dec && S[l][i] < S[l - 1][i];
        out.check("S_decreasing_" + std::to_string(i), dec, S.back()[i], S.front()[i], "finest vs coarsest value");
    }
    double wmax = 0.0, wmin = INFINITY;
    for (const auto& row : W) {
        for (double w : row) {
            wmax = std::max(wmax, w);
            wmin = std::min(wmin, w);
        }
    }
    if (parse_gd_kind(cfg.gd) == GDKind::P1Conforming || wmin <= cfg.indicators.w_conforming_tol) {
        out.check("W_conforming", wmax <= cfg.indicators.w_conforming_tol, wmax, cfg.indicators.w_conforming_tol,
                  "max over levels and fields");
    } else if (L >= 2) {
        for (std::size_t i = 0; i < W.front().size(); ++i) {
            std::vector<double> ws;
            for (int l = 0; l < L; ++l) ws.push_back(W[l][i]);
            const double order = loglog_slope(hs, ws);
            out.check("W_order_" + std::to_string(i), order >= cfg.indicators.w_order, order, cfg.indicators.w_order,
                      "log-log slope in h");
        }
    }
    if (!cfg.indicators.shifts.empty()) {
        double C = 0.0;
        for (std::size_t i = 0; i < cfg.indicators.shifts.size(); ++i) {
            C = std::max(C, T.front()[i] / cfg.indicators.shifts[i]);
        }
        C *= cfg.indicators.t_slack;
        double worst = 0.0;
        for (int l = 0; l < L; ++l) {
            for (std::size_t i = 0; i < cfg.indicators.shifts.size(); ++i) {
                worst = std::max(worst, T[l][i] / cfg.indicators.shifts[i]);
            }
        }
        out.check("T_uniform", worst <= C, worst, C, "max T_D(xi)/|xi| vs slack times the coarsest fit");
    }
    const auto lengths = box_lengths(cfg);
    if (p == 2.0 && !lengths.empty()) {
        const double limit = 1.0 / std::sqrt(dirichlet_eigenvalue(lengths));
        out.check("poincare_limit", std::abs(cps.back() - limit) <= cfg.indicators.poincare_tol,
                  std::abs(cps.back() - limit), cfg.indicators.poincare_tol, "finest level vs continuum constant");
        if (parse_gd_kind(cfg.gd) == GDKind::P1Conforming) {
            bool inc = true;
            for (int l = 1; l < L; ++l) inc = inc && cps[l] >= cps[l - 1];
            double over = -INFINITY;
            for (double c : cps) over = std::max(over, c - limit);
            out.check("poincare_increasing", inc, cps.back(), cps.front(), "finest vs coarsest value");
            out.check("poincare_below_limit", over <= 1e-6, over, 1e-6, "max excess over the continuum constant");
        }
    }
    return out.finish(cfg);
}

// --------------------------------------------------------------------- probe

CommandResult cmd_probe(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    Output out(cfg, "probe");
    auto mesh = build_level_mesh(cfg, 0);
    auto gd = build_gd(mesh, parse_gd_kind(cfg.gd));
    const FluxModel flux = build_flux(cfg);
    const NoiseModel noise = build_noise(cfg, *mesh);
    progress(opts, "probe: " + std::to_string(cfg.probe.samples) + " flux samples");
    const ProbeReport fr = probe_assumptions(flux, cfg.probe.samples, cfg.probe.value_range, cfg.probe.grad_range,
                                             cfg.master_seed, mesh->dim());
    const GrowthReport gr = growth_check(noise, gd, cfg.probe.growth_trials, cfg.master_seed, cfg.probe.amplitudes);

    Csv table({"target", "name", "samples", "coercivity_violations", "growth_violations", "monotonicity_violations",
               "tight_c1", "tight_c2", "max_excess"});
    table << "flux" << to_string(flux.kind()) << fr.n_samples << fr.coercivity_violations << fr.growth_violations
          << fr.monotonicity_violations << fr.tight_c1 << fr.tight_c2 << NAN;
    table.end();
    table << "noise" << noise.f0().name() << gr.trials << 0L << gr.violations << 0L << NAN << NAN << gr.max_excess;
    table.end();
    out.save("probe.csv", table);

    out.check("flux_coercivity", fr.coercivity_violations == 0, static_cast<double>(fr.coercivity_violations), 0.0);
    out.check("flux_growth", fr.growth_violations == 0, static_cast<double>(fr.growth_violations), 0.0);
    out.check("flux_monotonicity", fr.monotonicity_violations == 0, static_cast<double>(fr.monotonicity_violations),
              0.0);
    out.check("noise_growth", gr.violations == 0, static_cast<double>(gr.violations), 0.0);
    return out.finish(cfg);
}

// -------------------------------------------------------------------- oracle

CommandResult cmd_oracle(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    if (cfg.mesh.generator != "interval") throw ConfigError("mesh.generator", "the oracle needs an interval mesh");
    Output out(cfg, "oracle");
    const auto& oc = cfg.oracle;
    auto mesh = std::make_shared<const Mesh>(build_uniform_interval(2, cfg.mesh.box[0], cfg.mesh.box[1]));
    auto gd = build_gd(mesh, parse_gd_kind(cfg.gd));
    if (gd->n_dofs() != 1) throw ConfigError("gd", "the oracle needs a single-DOF discretisation");
    const NoiseModel noise = NoiseModel::sine(1, mesh->bounding_box(), 1, cfg.noise.s, NemytskiiMap::constant(oc.f0_constant));
    auto st = std::make_shared<const Stepper>(SpaceTimeGD{gd, oc.T, oc.N}, FluxModel::linear_diffusion(), noise,
                                              cfg.solver);
    const double m = gd->mass_matrix().coeff(0, 0);
    const double k = gd->stiffness_matrix().coeff(0, 0);
    const double b = st->assembler().load(st->assembler().basis_values().col(0))[0];
    const OUSequence exact = ou_oracle(k, m, noise.q()[0], oc.f0_constant, b, st->sgd().dt(), oc.N, oc.u0);

    progress(opts, "oracle: " + std::to_string(oc.samples) + " samples");
    Vec u0(1);
    u0[0] = oc.u0;
    const auto paths = parallel_map<std::vector<double>>(oc.samples, opts.workers, [&](long i) {
        const Trajectory tr = run_trajectory(
            st, u0, stream_increments(noise, cfg.master_seed, static_cast<std::uint64_t>(i), st->sgd().dt()),
            TrajectoryOptions{false});
        std::vector<double> v;
        for (const auto& u : tr.u) v.push_back(u[0]);
        return v;
    });
    Csv table({"n", "mean", "mean_se", "mean_exact", "var", "var_se", "var_exact"});
    double worst_mean = 0.0, worst_var = 0.0;
    auto z = [](double d, double se) { return se > 0.0 ? d / se : (d <= 1e-14 ? 0.0 : INFINITY); };
    for (int n = 0; n <= oc.N; ++n) {
        std::vector<double> xs;
        xs.reserve(paths.size());
        for (const auto& pth : paths) xs.push_back(pth[static_cast<std::size_t>(n)]);
        const MeanSE ms = mean_se(xs);
        const VarianceSE vs = variance_se(xs);
        table << n << ms.mean << ms.se << exact.mean[n] << vs.var << vs.se << exact.var[n];
        table.end();
        worst_mean = std::max(worst_mean, z(std::abs(ms.mean - exact.mean[n]), ms.se));
        worst_var = std::max(worst_var, z(std::abs(vs.var - exact.var[n]), vs.se));
    }
    out.save("oracle.csv", table);
    out.check("ou_mean", worst_mean <= oc.n_se, worst_mean, oc.n_se, "max |mean - exact| / SE over n");
    out.check("ou_variance", worst_var <= oc.n_se, worst_var, oc.n_se, "max |var - exact| / SE over n");
    return out.finish(cfg);
}

// --------------------------------------------------------------- convergence

CommandResult cmd_convergence(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const auto lengths = box_lengths(cfg);
    const FluxModel flux = build_flux(cfg);
    const bool linear = flux.kind() == FluxKind::LinearDiffusion || (flux.kind() == FluxKind::PLaplace && flux.p() == 2.0);
    const bool exact_ok = linear && cfg.noise.f0 == "zero" && cfg.u0.kind == "sine" && !lengths.empty();
    std::string mode = cfg.convergence;
    if (mode == "auto") mode = exact_ok ? "exact" : "coupled";
    if (mode == "exact" && !exact_ok) {
        throw ConfigError("convergence", "exact mode needs a linear flux, f0 = zero, a sine u0 and a generated mesh");
    }
    if (mode == "coupled" && cfg.levels < 2) throw ConfigError("levels", "a coupled study needs at least 2 levels");
    Output out(cfg, "convergence");
    const auto levels = build_levels(cfg);
    const ScalarField u0 = initial_field(cfg);
    progress(opts, "convergence: " + mode + " study over " + std::to_string(cfg.levels) + " levels");

    ConvergenceReport rep;
    if (mode == "exact") {
        const double lam = dirichlet_eigenvalue(lengths);
        rep = deterministic_convergence(levels, u0, [&](const Point& x, double t) { return std::exp(-lam * t) * u0(x); });
    } else {
        rep = coupled_convergence(levels, u0, cfg.master_seed, cfg.n_samples, opts.workers);
    }
    Csv table({"mode", "level", "h", "N", "T", "error", "error_se", "order"});
    for (const auto& r : rep.rows) {
        table << mode << r.level << r.h << r.N << levels[static_cast<std::size_t>(r.level)]->sgd().T << r.error
              << r.error_se << r.order;
        table.end();
    }
    out.save("convergence.csv", table);
    out.check("strictly_decreasing", rep.strictly_decreasing, rep.rows.back().error, rep.rows.front().error,
              "finest vs coarsest error");
    if (mode == "exact" && rep.rows.size() >= 2) {
        double worst = INFINITY;
        for (const auto& r : rep.rows) {
            if (std::isfinite(r.order)) worst = std::min(worst, r.order);
        }
        out.check("order", worst >= cfg.checks.min_order, worst, cfg.checks.min_order, "min successive order in h");
    }
    return out.finish(cfg);
}

CommandResult run_command(const std::string& name, const ExperimentConfig& cfg, const RunOptions& opts) {
    if (name == "run") return cmd_run(cfg, opts);
    if (name == "indicators") return cmd_indicators(cfg, opts);
    if (name == "probe") return cmd_probe(cfg, opts);
    if (name == "oracle") return cmd_oracle(cfg, opts);
    if (name == "convergence") return cmd_convergence(cfg, opts);
    throw std::invalid_argument("unknown command '" + name + "'");
}

}  // namespace sgdm
