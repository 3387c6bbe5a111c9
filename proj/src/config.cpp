#include "sgdm/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace sgdm {

using nlohmann::json;

ConfigError::ConfigError(const std::string& key, const std::string& message)
    : std::runtime_error(key + ": " + message), key_(key) {}

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads known keys of one JSON object; leftover keys are errors.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        read(*it, join(path_, key), out);
    }

    Reader child(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        static const json empty = json::object();
        return Reader(it == j_.end() ? empty : *it, join(path_, key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
        }
    }

private:
    static void read(const json& v, const std::string& key, int& out) {
        if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
        const auto x = v.get<long long>();
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
            throw ConfigError(key, "integer out of range");
        }
        out = static_cast<int>(x);
    }
    static void read(const json& v, const std::string& key, long& out) {
        if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
        out = v.get<long>();
    }
    static void read(const json& v, const std::string& key, std::uint64_t& out) {
        if (!v.is_number_unsigned()) throw ConfigError(key, "expected a nonnegative integer");
        out = v.get<std::uint64_t>();
    }
    static void read(const json& v, const std::string& key, double& out) {
        if (!v.is_number()) throw ConfigError(key, "expected a number");
        out = v.get<double>();
    }
    static void read(const json& v, const std::string& key, bool& out) {
        if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
        out = v.get<bool>();
    }
    static void read(const json& v, const std::string& key, std::string& out) {
        if (!v.is_string()) throw ConfigError(key, "expected a string");
        out = v.get<std::string>();
    }
    static void read(const json& v, const std::string& key, std::optional<double>& out) {
        if (v.is_null()) {
            out.reset();
            return;
        }
        double x = 0.0;
        read(v, key, x);
        out = x;
    }
    template <class T>
    static void read(const json& v, const std::string& key, std::vector<T>& out) {
        if (!v.is_array()) throw ConfigError(key, "expected an array");
        out.assign(v.size(), T{});
        for (std::size_t i = 0; i < v.size(); ++i) read(v[i], key + "[" + std::to_string(i) + "]", out[i]);
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

bool is_power_of_two(int r) { return r >= 1 && (r & (r - 1)) == 0; }

void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError(key, message);
}

std::vector<double> read_numbers(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<double> xs;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) throw std::runtime_error(path + ": not a number: '" + tok + "'");
        xs.push_back(x);
    }
    return xs;
}

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    const auto solver_eq = solver.newton_tol == o.solver.newton_tol && solver.max_newton == o.solver.max_newton &&
                           solver.max_fixed_point == o.solver.max_fixed_point &&
                           solver.line_search_shrink == o.solver.line_search_shrink;
    return mesh == o.mesh && gd == o.gd && levels == o.levels && time == o.time && flux == o.flux &&
           noise == o.noise && u0 == o.u0 && n_samples == o.n_samples && master_seed == o.master_seed && solver_eq &&
           estimators == o.estimators && checks == o.checks && indicators == o.indicators && probe == o.probe &&
           oracle == o.oracle && convergence == o.convergence && dump_trajectories == o.dump_trajectories &&
           output == o.output;
}

void ExperimentConfig::validate() const {
    require(mesh.generator == "interval" || mesh.generator == "rectangle" || mesh.generator == "file",
            "mesh.generator", "expected interval, rectangle or file");
    if (mesh.generator == "file") {
        require(!mesh.file.empty(), "mesh.file", "required when mesh.generator is file");
        require(std::filesystem::exists(mesh.file), "mesh.file", "no such file '" + mesh.file + "'");
    } else {
        require(mesh.n >= 1, "mesh.n", "must be >= 1");
        const std::size_t want = mesh.generator == "interval" ? 2 : 4;
        require(mesh.box.size() == want, "mesh.box", "expected " + std::to_string(want) + " numbers");
        const std::size_t d = want / 2;
        for (std::size_t i = 0; i < d; ++i) {
            require(mesh.box[i] < mesh.box[i + d], "mesh.box", "lower corner must lie below the upper corner");
        }
    }
    try {
        parse_gd_kind(gd);
    } catch (const std::exception& e) {
        throw ConfigError("gd", e.what());
    }
    require(levels >= 1, "levels", "must be >= 1");
    require(time.T > 0.0, "time.T", "must be > 0");
    require(time.N >= 1, "time.N", "must be >= 1");
    require(time.factor >= 1, "time.factor", "must be >= 1");
    require(time.rule == "factor" || time.rule == "h_squared", "time.rule", "expected factor or h_squared");
    require(time.dt_scale > 0.0, "time.dt_scale", "must be > 0");
    require(flux.p > 1.0 && std::isfinite(flux.p), "flux.p", "must lie in (1, inf)");
    try {
        build_flux(*this);
    } catch (const std::exception& e) {
        throw ConfigError(flux.kind == "Custom" ? "flux.custom" : "flux", e.what());
    }
    require(noise.k_max >= 1, "noise.k_max", "must be >= 1");
    require(noise.s > 0.5, "noise.s", "must be > 1/2");
    try {
        NemytskiiMap::parse(noise.f0, noise.f0_constant);
    } catch (const std::exception& e) {
        throw ConfigError("noise.f0", e.what());
    }
    if (noise.F1) require(*noise.F1 >= 0.0, "noise.F1", "must be >= 0");
    if (noise.F2) require(*noise.F2 >= 0.0, "noise.F2", "must be >= 0");
    require(u0.kind == "zero" || u0.kind == "sine" || u0.kind == "bump" || u0.kind == "file", "u0.kind",
            "expected zero, sine, bump or file");
    if (u0.kind == "file") {
        require(!u0.file.empty(), "u0.file", "required when u0.kind is file");
        require(std::filesystem::exists(u0.file), "u0.file", "no such file '" + u0.file + "'");
    }
    require(n_samples >= 1, "n_samples", "must be >= 1");
    try {
        solver.validate();
    } catch (const std::exception& e) {
        throw ConfigError("solver", e.what());
    }
    const auto& es = estimators;
    for (std::size_t i = 0; i < es.ells.size(); ++i) {
        const bool in_range = es.ells[i] >= 1 && (time.rule != "factor" || es.ells[i] <= time.N - 1);
        require(in_range, "estimators.ells[" + std::to_string(i) + "]", "must lie in 1..time.N-1");
    }
    for (std::size_t i = 0; i < es.dual_rs.size(); ++i) {
        require(is_power_of_two(es.dual_rs[i]), "estimators.dual_rs[" + std::to_string(i) + "]",
                "must be a power of two");
    }
    for (std::size_t i = 0; i < es.moment_qs.size(); ++i) {
        require(es.moment_qs[i] >= 1, "estimators.moment_qs[" + std::to_string(i) + "]", "must be >= 1");
    }
    require(es.beta > 0.0 && es.beta < 0.5, "estimators.beta", "must lie in (0, 1/2)");
    require(is_power_of_two(es.martingale_r), "estimators.martingale_r", "must be a power of two");
    require(checks.level_slack >= 1.0, "checks.level_slack", "must be >= 1");
    require(checks.identity_tol > 0.0, "checks.identity_tol", "must be > 0");
    require(indicators.p > 1.0, "indicators.p", "must be > 1");
    for (std::size_t i = 0; i < indicators.shifts.size(); ++i) {
        require(indicators.shifts[i] > 0.0, "indicators.shifts[" + std::to_string(i) + "]", "must be > 0");
    }
    require(indicators.t_slack >= 1.0, "indicators.t_slack", "must be >= 1");
    require(probe.samples >= 1, "probe.samples", "must be >= 1");
    require(probe.growth_trials >= 1, "probe.growth_trials", "must be >= 1");
    require(!probe.amplitudes.empty(), "probe.amplitudes", "must not be empty");
    require(probe.value_range > 0.0 && probe.grad_range > 0.0, "probe", "ranges must be > 0");
    require(oracle.samples >= 2, "oracle.samples", "must be >= 2");
    require(oracle.N >= 1, "oracle.N", "must be >= 1");
    require(oracle.T > 0.0, "oracle.T", "must be > 0");
    require(oracle.n_se > 0.0, "oracle.n_se", "must be > 0");
    require(convergence == "auto" || convergence == "exact" || convergence == "coupled", "convergence",
            "expected auto, exact or coupled");
    require(dump_trajectories >= 0, "dump_trajectories", "must be >= 0");
    require(!output.empty(), "output", "must not be empty");
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Reader r(j, "");
    {
        Reader m = r.child("mesh");
        m.get("generator", c.mesh.generator);
        m.get("n", c.mesh.n);
        m.get("box", c.mesh.box);
        m.get("file", c.mesh.file);
        m.finish();
    }
    r.get("gd", c.gd);
    r.get("levels", c.levels);
    {
        Reader t = r.child("time");
        t.get("T", c.time.T);
        t.get("N", c.time.N);
        t.get("factor", c.time.factor);
        t.get("rule", c.time.rule);
        t.get("dt_scale", c.time.dt_scale);
        t.finish();
    }
    {
        Reader f = r.child("flux");
        f.get("kind", c.flux.kind);
        f.get("p", c.flux.p);
        f.get("epsilon", c.flux.epsilon);
        f.get("custom", c.flux.custom);
        f.finish();
    }
    {
        Reader n = r.child("noise");
        n.get("k_max", c.noise.k_max);
        n.get("s", c.noise.s);
        n.get("f0", c.noise.f0);
        n.get("f0_constant", c.noise.f0_constant);
        n.get("F1", c.noise.F1);
        n.get("F2", c.noise.F2);
        n.finish();
    }
    {
        Reader u = r.child("u0");
        u.get("kind", c.u0.kind);
        u.get("amplitude", c.u0.amplitude);
        u.get("file", c.u0.file);
        u.finish();
    }
    r.get("n_samples", c.n_samples);
    r.get("master_seed", c.master_seed);
    {
        Reader s = r.child("solver");
        s.get("newton_tol", c.solver.newton_tol);
        s.get("max_newton", c.solver.max_newton);
        s.get("max_fixed_point", c.solver.max_fixed_point);
        s.get("line_search_shrink", c.solver.line_search_shrink);
        s.finish();
    }
    {
        Reader e = r.child("estimators");
        e.get("energy", c.estimators.energy);
        e.get("translates", c.estimators.translates);
        e.get("dual", c.estimators.dual);
        e.get("martingale", c.estimators.martingale);
        e.get("ells", c.estimators.ells);
        e.get("dual_rs", c.estimators.dual_rs);
        e.get("moment_qs", c.estimators.moment_qs);
        e.get("beta", c.estimators.beta);
        e.get("martingale_r", c.estimators.martingale_r);
        e.finish();
    }
    {
        Reader k = r.child("checks");
        k.get("level_slack", c.checks.level_slack);
        k.get("identity_tol", c.checks.identity_tol);
        k.get("translate_slope", c.checks.translate_slope);
        k.get("dual_slope_factor", c.checks.dual_slope_factor);
        k.get("min_order", c.checks.min_order);
        k.finish();
    }
    {
        Reader i = r.child("indicators");
        i.get("p", c.indicators.p);
        i.get("shifts", c.indicators.shifts);
        i.get("t_slack", c.indicators.t_slack);
        i.get("poincare_tol", c.indicators.poincare_tol);
        i.get("w_conforming_tol", c.indicators.w_conforming_tol);
        i.get("w_order", c.indicators.w_order);
        i.finish();
    }
    {
        Reader p = r.child("probe");
        p.get("samples", c.probe.samples);
        p.get("value_range", c.probe.value_range);
        p.get("grad_range", c.probe.grad_range);
        p.get("growth_trials", c.probe.growth_trials);
        p.get("amplitudes", c.probe.amplitudes);
        p.finish();
    }
    {
        Reader o = r.child("oracle");
        o.get("samples", c.oracle.samples);
        o.get("N", c.oracle.N);
        o.get("T", c.oracle.T);
        o.get("f0_constant", c.oracle.f0_constant);
        o.get("u0", c.oracle.u0);
        o.get("n_se", c.oracle.n_se);
        o.finish();
    }
    r.get("convergence", c.convergence);
    r.get("dump_trajectories", c.dump_trajectories);
    r.get("output", c.output);
    r.finish();
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["mesh"] = {{"generator", c.mesh.generator}, {"n", c.mesh.n}, {"box", c.mesh.box}, {"file", c.mesh.file}};
    j["gd"] = c.gd;
    j["levels"] = c.levels;
    j["time"] = {{"T", c.time.T},
                 {"N", c.time.N},
                 {"factor", c.time.factor},
                 {"rule", c.time.rule},
                 {"dt_scale", c.time.dt_scale}};
    j["flux"] = {{"kind", c.flux.kind}, {"p", c.flux.p}, {"epsilon", c.flux.epsilon}, {"custom", c.flux.custom}};
    j["noise"] = {{"k_max", c.noise.k_max},
                  {"s", c.noise.s},
                  {"f0", c.noise.f0},
                  {"f0_constant", c.noise.f0_constant},
                  {"F1", c.noise.F1 ? json(*c.noise.F1) : json(nullptr)},
                  {"F2", c.noise.F2 ? json(*c.noise.F2) : json(nullptr)}};
    j["u0"] = {{"kind", c.u0.kind}, {"amplitude", c.u0.amplitude}, {"file", c.u0.file}};
    j["n_samples"] = c.n_samples;
    j["master_seed"] = c.master_seed;
    j["solver"] = {{"newton_tol", c.solver.newton_tol},
                   {"max_newton", c.solver.max_newton},
                   {"max_fixed_point", c.solver.max_fixed_point},
                   {"line_search_shrink", c.solver.line_search_shrink}};
    const auto& e = c.estimators;
    j["estimators"] = {{"energy", e.energy},         {"translates", e.translates}, {"dual", e.dual},
                       {"martingale", e.martingale}, {"ells", e.ells},             {"dual_rs", e.dual_rs},
                       {"moment_qs", e.moment_qs},   {"beta", e.beta},             {"martingale_r", e.martingale_r}};
    j["checks"] = {{"level_slack", c.checks.level_slack},
                   {"identity_tol", c.checks.identity_tol},
                   {"translate_slope", c.checks.translate_slope},
                   {"dual_slope_factor", c.checks.dual_slope_factor},
                   {"min_order", c.checks.min_order}};
    j["indicators"] = {{"p", c.indicators.p},
                       {"shifts", c.indicators.shifts},
                       {"t_slack", c.indicators.t_slack},
                       {"poincare_tol", c.indicators.poincare_tol},
                       {"w_conforming_tol", c.indicators.w_conforming_tol},
                       {"w_order", c.indicators.w_order}};
    j["probe"] = {{"samples", c.probe.samples},
                  {"value_range", c.probe.value_range},
                  {"grad_range", c.probe.grad_range},
                  {"growth_trials", c.probe.growth_trials},
                  {"amplitudes", c.probe.amplitudes}};
    j["oracle"] = {{"samples", c.oracle.samples}, {"N", c.oracle.N},   {"T", c.oracle.T},
                   {"f0_constant", c.oracle.f0_constant}, {"u0", c.oracle.u0}, {"n_se", c.oracle.n_se}};
    j["convergence"] = c.convergence;
    j["dump_trajectories"] = c.dump_trajectories;
    j["output"] = c.output;
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string s = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::shared_ptr<const Mesh> build_level_mesh(const ExperimentConfig& cfg, int level) {
    if (cfg.mesh.generator == "file") {
        Mesh m = load_mesh(cfg.mesh.file);
        for (int l = 0; l < level; ++l) m = refine(m);
        return std::make_shared<const Mesh>(std::move(m));
    }
    const int n = cfg.mesh.n << level;
    const auto& b = cfg.mesh.box;
    if (cfg.mesh.generator == "interval") return std::make_shared<const Mesh>(build_uniform_interval(n, b[0], b[1]));
    BoundingBox box;
    box.lo = {b[0], b[1]};
    box.hi = {b[2], b[3]};
    Mesh m = build_uniform_triangulation(n, n, box);
    return std::make_shared<const Mesh>(std::move(m));
}

LevelTime level_time(const ExperimentConfig& cfg, int level, double h) {
    if (cfg.time.rule == "h_squared") {
        const double dt = cfg.time.dt_scale * h * h;
        const int N = std::max(1, static_cast<int>(std::lround(cfg.time.T / dt)));
        return {N * dt, N};
    }
    long n = cfg.time.N;
    for (int l = 0; l < level; ++l) n *= cfg.time.factor;
    if (n > std::numeric_limits<int>::max()) throw ConfigError("time.N", "too many steps on the finest level");
    return {cfg.time.T, static_cast<int>(n)};
}

FluxModel build_flux(const ExperimentConfig& cfg) {
    const auto& f = cfg.flux;
    switch (parse_flux_kind(f.kind)) {
        case FluxKind::PLaplace:
            return FluxModel::p_laplace(f.p, f.epsilon);
        case FluxKind::RegularizedPLaplace:
            return FluxModel::regularized_p_laplace(f.p);
        case FluxKind::LinearDiffusion:
            return FluxModel::linear_diffusion();
        case FluxKind::Custom:
            return FluxModel::named_custom(f.custom, f.p);
    }
    throw std::invalid_argument("unknown flux kind");
}

NoiseModel build_noise(const ExperimentConfig& cfg, const Mesh& mesh) {
    NoiseModel nm = NoiseModel::sine(mesh.dim(), mesh.bounding_box(), cfg.noise.k_max, cfg.noise.s,
                                     NemytskiiMap::parse(cfg.noise.f0, cfg.noise.f0_constant));
    if (cfg.noise.F1 || cfg.noise.F2) nm = nm.with_growth(cfg.noise.F1.value_or(nm.F1()), cfg.noise.F2.value_or(nm.F2()));
    return nm;
}

StepperPtr build_stepper(const ExperimentConfig& cfg, int level) {
    auto mesh = build_level_mesh(cfg, level);
    auto gd = build_gd(mesh, parse_gd_kind(cfg.gd));
    const LevelTime lt = level_time(cfg, level, mesh->max_diameter());
    return std::make_shared<const Stepper>(SpaceTimeGD{gd, lt.T, lt.N}, build_flux(cfg), build_noise(cfg, *mesh),
                                           cfg.solver);
}

std::vector<StepperPtr> build_levels(const ExperimentConfig& cfg) {
    std::vector<StepperPtr> out;
    for (int l = 0; l < cfg.levels; ++l) out.push_back(build_stepper(cfg, l));
    return out;
}

ScalarField initial_field(const ExperimentConfig& cfg) {
    const double a = cfg.u0.amplitude;
    if (cfg.u0.kind == "zero") return [](const Point&) { return 0.0; };
    auto mesh = build_level_mesh(cfg, 0);
    const BoundingBox box = mesh->bounding_box();
    const int dim = mesh->dim();
    if (cfg.u0.kind == "sine") {
        return [a, box, dim](const Point& x) {
            double v = a;
            for (int i = 0; i < dim; ++i) v *= std::sin(kPi * (x[i] - box.lo[i]) / (box.hi[i] - box.lo[i]));
            return v;
        };
    }
    if (cfg.u0.kind == "bump") {
        // Smooth bump centred in the box, radius a quarter of the shortest side.
        return [a, box, dim](const Point& x) {
            double rad = std::numeric_limits<double>::infinity();
            double r2 = 0.0;
            for (int i = 0; i < dim; ++i) rad = std::min(rad, 0.25 * (box.hi[i] - box.lo[i]));
            for (int i = 0; i < dim; ++i) {
                const double d = (x[i] - 0.5 * (box.lo[i] + box.hi[i])) / rad;
                r2 += d * d;
            }
            return r2 < 1.0 ? a * std::exp(1.0 - 1.0 / (1.0 - r2)) : 0.0;
        };
    }
    auto gd = build_gd(mesh, parse_gd_kind(cfg.gd));
    const std::vector<double> xs = read_numbers(cfg.u0.file);
    if (static_cast<int>(xs.size()) != gd->n_dofs()) {
        throw ConfigError("u0.file", "expected " + std::to_string(gd->n_dofs()) + " values for the level-0 mesh, got " +
                                         std::to_string(xs.size()));
    }
    Vec v(gd->n_dofs());
    for (int i = 0; i < gd->n_dofs(); ++i) v[i] = a * xs[static_cast<std::size_t>(i)];
    return [gd, v](const Point& x) { return gd->reconstruct_function(v, x); };
}

Vec build_u0(const ExperimentConfig& cfg, const GradientDiscretisation& gd) {
    return gd.interpolate_initial(initial_field(cfg));
}

EstimatorConfig build_estimator_config(const ExperimentConfig& cfg, int N0) {
    EstimatorConfig e;
    const auto& s = cfg.estimators;
    e.energy = s.energy;
    e.translates = s.translates;
    e.dual = s.dual;
    e.martingale = s.martingale;
    e.ells = s.ells;
    if (e.ells.empty()) {
        for (int l = 1; l <= 8 && l <= N0 - 1; l *= 2) e.ells.push_back(l);
    }
    if (!e.translates && !e.dual) e.ells.clear();
    if (e.ells.empty()) e.translates = e.dual = false;
    e.dual_rs = s.dual_rs;
    e.moment_qs = s.moment_qs;
    e.beta = s.beta;
    e.martingale_r = s.martingale_r;
    return e;
}

}  // namespace sgdm
