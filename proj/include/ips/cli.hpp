#pragma once

// Experiment runner: a JSON config in, CSV files plus a manifest out.

#include <charconv>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "ips/ips.hpp"

namespace ips::cli {

using json = nlohmann::json;

// Raised for invalid configurations (exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum Exit { ok = 0, violation = 1, config_error = 2 };

struct Output {
    std::string name;     // file name inside the output directory
    std::string content;  // CSV text (with trailing manifest comment) or JSON
};

struct RunResult {
    int exit_code = Exit::ok;
    std::vector<Output> outputs;
    json report;  // summary; on failure carries the error or counterexample
};

// ---------------------------------------------------------------------------
// Config access that remembers which keys were read, so leftovers can be rejected.

class Params {
public:
    explicit Params(const json& j) : j_(j) {
        if (!j_.is_object()) throw ConfigError("config must be a JSON object");
    }

    bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

    template <class T>
    T get(const std::string& k, const T& fallback) {
        used_.insert(k);
        if (!has(k)) return fallback;
        return as<T>(k);
    }

    template <class T>
    T need(const std::string& k) {
        used_.insert(k);
        if (!has(k)) throw ConfigError("missing required key '" + k + "'");
        return as<T>(k);
    }

    const json& raw(const std::string& k) {
        used_.insert(k);
        return j_.at(k);
    }

    void mark(const std::string& k) { used_.insert(k); }

    void reject_unknown() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k) && !v.is_null()) throw ConfigError("unknown key '" + k + "'");
    }

private:
    template <class T>
    T as(const std::string& k) const {
        const auto& v = j_.at(k);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("key '" + k + "' must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("key '" + k + "' must be an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.get<long long>() < 0) throw ConfigError("key '" + k + "' must be nonnegative");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("key '" + k + "' must be a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("key '" + k + "' must be a string");
        }
        return v.get<T>();
    }

    const json& j_;
    std::set<std::string> used_;
};

// "a:b:step" (inclusive), a single number, or a JSON array of numbers.
inline std::vector<double> parse_grid(const json& v, const std::string& key) {
    std::vector<double> out;
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) {
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError("key '" + key + "' must hold numbers");
            out.push_back(e.get<double>());
        }
        if (out.empty()) throw ConfigError("key '" + key + "' is empty");
        return out;
    }
    if (!v.is_string()) throw ConfigError("key '" + key + "' must be a number, array or 'from:to:step'");
    const auto s = v.get<std::string>();
    std::vector<double> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ':')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + item + "' in '" + key + "'");
        }
    }
    if (parts.size() == 1) return parts;
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
        throw ConfigError("key '" + key + "' must look like from:to:step with step > 0");
    const auto count = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    // Round to 12 significant digits so 0:6:0.05 yields 3.05, not 3.0500000000000003.
    for (std::size_t k = 0; k <= count; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.12g", parts[0] + parts[2] * static_cast<double>(k));
        out.push_back(std::strtod(buf, nullptr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lattices and models from config

inline models::LatticePtr make_lattice(Params& p, const std::string& default_kind = "torus") {
    const auto kind = p.get<std::string>("lattice", default_kind);
    const int d = p.get<int>("d", 1);
    const int side = p.get<int>("L", 101);
    const int range = p.get<int>("range", 1);
    const auto norm_s = p.get<std::string>("norm", "l1");
    if (norm_s != "l1" && norm_s != "sup") throw ConfigError("norm must be 'l1' or 'sup'");
    const Norm norm = norm_s == "sup" ? Norm::sup : Norm::l1;
    if (d < 1 || side < 1) throw ConfigError("d and L must be positive");
    try {
        if (kind == "torus") {
            if (d == 1 && range == 1) return models::share(Lattice::ring(side));
            return models::share(Lattice::torus(d, side, range, norm));
        }
        if (kind == "ring") return models::share(Lattice::ring(side));
        if (kind == "frozen-box") {
            const int b = p.get<int>("boundary", 1);
            return models::share(Lattice::frozen_box(d, side, b, range, norm));
        }
        if (kind == "complete") {
            const auto conv = p.get<std::string>("convention", "include-self");
            if (conv != "include-self" && conv != "exclude-self")
                throw ConfigError("convention must be include-self or exclude-self");
            return models::share(Lattice::complete(
                side, conv == "include-self" ? Neighborhood::include_self : Neighborhood::exclude_self));
        }
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("unknown lattice '" + kind + "'");
}

inline ModelSpec make_model(const std::string& name, models::LatticePtr lat, Params& p) {
    try {
        if (name == "contact") return models::contact(lat, p.get<double>("lambda", 2.0), p.get<double>("delta", 1.0));
        if (name == "voter") return models::voter(lat);
        if (name == "biased_voter") return models::biased_voter(lat, p.get<double>("s", 0.5));
        if (name == "contact_voter")
            return models::contact_voter(lat, p.get<double>("lambda", 1.0), p.get<double>("gamma", 1.0));
        if (name == "ising") return models::ising_glauber(lat, p.get<double>("beta", 1.0));
        if (name == "potts") return models::potts_glauber(lat, p.get<int>("q", 3), p.get<double>("beta", 1.0));
        if (name == "neuhauser_pacala") return models::neuhauser_pacala(lat, p.get<double>("alpha", 0.5));
        if (name == "threshold_voter") return models::threshold_voter(lat);
        if (name == "coalescing_rw") return models::coalescing_rw(lat);
        if (name == "annihilating_rw") return models::annihilating_rw(lat);
        if (name == "exclusion") return models::exclusion(lat);
        if (name == "annihilating_branching")
            return models::annihilating_branching(lat, p.get<double>("lambda", 1.0), p.get<double>("delta", 1.0));
        if (name == "coop_death") return models::coop_death(lat, p.get<double>("b", 5.0));
        if (name == "coop_rw") return models::coop_rw(lat, p.get<double>("b", 5.0));
        if (name == "babp") return models::babp(lat, p.get<double>("lambda", 1.0));
        if (name == "contact_double_death") return models::contact_double_death(lat, p.get<double>("lambda", 2.0));
        if (name == "coop_branching_1d") return models::coop_branching_1d(lat, p.get<double>("lambda", 2.0));
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    } catch (const Unsupported& e) {
        throw ConfigError(e.what());
    }
    throw ConfigError("unknown model '" + name + "'");
}

// ---------------------------------------------------------------------------
// Subcommands. Each reads its keys, rejects leftovers, then runs.

struct Context {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string manifest_name;
    RunResult* result = nullptr;

    void emit(const std::string& name, io::Csv& csv) {
        csv.finish(manifest_name);
        result->outputs.push_back({name, csv.str()});
    }
};

inline void cmd_simulate(Params& p, Context& c) {
    const auto name = p.need<std::string>("model");
    const auto lat = make_lattice(p, "torus");
    const auto model = make_model(name, lat, p);
    const bool frozen_ising = name == "ising" && lat->kind() == LatticeKind::frozen_box;
    const auto observable =
        p.get<std::string>("observable", name == "contact" ? "survival" : frozen_ising ? "magnetization" : "density");
    const double T = p.get<double>("T", 10.0);
    const auto replicas = p.get<std::size_t>("replicas", 100);
    const auto samples = p.get<std::size_t>("samples", 10);
    const auto init = p.get<std::string>("init", "ones");
    const double dens = p.get<double>("p", 0.5);
    p.reject_unknown();
    if (!(T > 0.0) || replicas == 0 || samples == 0) throw ConfigError("T, replicas and samples must be positive");

    if (observable == "survival") {
        if (name != "contact") throw ConfigError("survival is defined for the contact model");
        const auto row = estimators::survival_estimate(lat, model.param("lambda"), T, replicas, c.seed, c.threads);
        io::Csv csv({"lambda", "box", "T", "replicas", "survived", "theta_hat", "ci_lo", "ci_hi", "truncated_frac"});
        csv.row(row.lambda, row.box, row.horizon, row.replicas, row.survived, row.theta, row.ci.lo, row.ci.hi,
                row.truncated_frac);
        c.emit("simulate.csv", csv);
        c.result->report = {{"theta_hat", row.theta}, {"truncated_frac", row.truncated_frac}};
        return;
    }
    if (observable == "magnetization") {
        if (!frozen_ising) throw ConfigError("magnetization needs the ising model on a frozen-box lattice");
        if (lat->dim() != 2) throw ConfigError("magnetization runs in two dimensions");
        const auto row = estimators::magnetization_frozen_boundary(model.param("beta"), lat->sides()[0], T, replicas,
                                                                   c.seed, c.threads);
        io::Csv csv({"beta", "L", "m_hat", "ci_lo", "ci_hi", "onsager_value"});
        csv.row(row.beta, row.side, row.m_hat, row.ci.lo, row.ci.hi, row.onsager);
        c.emit("simulate.csv", csv);
        c.result->report = {{"m_hat", row.m_hat}, {"onsager", row.onsager}};
        return;
    }
    std::vector<double> times;
    for (std::size_t k = 1; k <= samples; ++k) times.push_back(T * static_cast<double>(k) / static_cast<double>(samples));
    if (observable == "clusters") {
        const auto st = estimators::clustering_stats(model, dens, times, replicas, c.seed, c.threads);
        io::Csv csv({"t", "disagreement", "ci_lo", "ci_hi", "agreement01", "mean_cluster"});
        for (const auto& r : st.rows)
            csv.row(r.t, r.disagreement, r.disagreement_ci.lo, r.disagreement_ci.hi, r.agreement01, r.mean_cluster);
        c.emit("simulate.csv", csv);
        return;
    }
    if (observable != "density") throw ConfigError("unknown observable '" + observable + "'");
    estimators::Start from;
    if (init == "ones")
        from = estimators::Start::ones;
    else if (init == "zeros")
        from = estimators::Start::zeros;
    else if (init == "product")
        from = estimators::Start::product;
    else
        throw ConfigError("init must be ones, zeros or product");
    if (model.alphabet == Alphabet::potts) throw ConfigError("density is defined for two-state models");
    const auto rows = estimators::invariant_density(model, from, times, replicas, c.seed, c.threads, dens);
    io::Csv csv({"t", "mean", "ci_lo", "ci_hi"});
    for (const auto& r : rows) csv.row(r.t, r.mean, r.ci.lo, r.ci.hi);
    c.emit("simulate.csv", csv);
}

inline void cmd_theta_curve(Params& p, Context& c) {
    const auto grid = parse_grid(p.need<json>("lambdas"), "lambdas");
    const auto lat = make_lattice(p, "torus");
    const double T = p.get<double>("T", 200.0);
    const auto replicas = p.get<std::size_t>("replicas", 1000);
    std::optional<json> lc;
    if (p.has("lambda_c")) lc = p.raw("lambda_c");
    p.reject_unknown();
    if (!std::is_sorted(grid.begin(), grid.end())) throw ConfigError("lambdas must be sorted");
    if (grid.size() > 32) throw ConfigError("at most 32 rates per curve so the coupling is exact");
    if (!(T > 0.0) || replicas == 0) throw ConfigError("T and replicas must be positive");
    const auto rows = estimators::theta_curve(lat, grid, T, replicas, c.seed, c.threads);
    io::Csv csv({"lambda", "theta_hat", "ci_lo", "ci_hi", "truncated_frac", "T", "box", "replicas"});
    for (const auto& r : rows) csv.row(r.lambda, r.theta, r.ci.lo, r.ci.hi, r.truncated_frac, r.horizon, r.box, r.replicas);
    c.emit("theta_curve.csv", csv);
    if (lc) {
        Params q(*lc);
        const double lo = q.get<double>("lo", 1.4), hi = q.get<double>("hi", 1.9);
        const double tol = q.get<double>("tol", 0.05), thr = q.get<double>("threshold", 0.1);
        q.reject_unknown();
        try {
            const auto b = estimators::lambda_c_estimate(lat, lo, hi, tol, thr, T, replicas, c.seed, c.threads);
            io::Csv out({"threshold", "lo", "hi", "wide_lo", "wide_hi", "T", "replicas"});
            out.row(b.threshold, b.lo, b.hi, b.wide_lo, b.wide_hi, T, replicas);
            c.emit("lambda_c.csv", out);
            c.result->report["lambda_c"] = {b.wide_lo, b.wide_hi};
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }
}

inline meanfield::DriftSpec make_drift(const std::string& family, Params& p) {
    using namespace meanfield;
    if (family == "ising") return ising(p.get<double>("beta", 3.0));
    if (family == "contact") return contact(p.get<double>("lambda", 2.0));
    if (family == "voter") return voter();
    if (family == "coop_death") return coop_death(p.get<double>("b", 5.0));
    if (family == "coop_rw") return coop_rw(p.get<double>("b", 5.0));
    if (family == "biased_voter_death") return biased_voter_death(p.get<double>("s", 1.0), p.get<double>("death", 0.5));
    if (family == "np_two_alpha") return np_two_alpha(p.get<double>("alpha01", 0.5), p.get<double>("alpha10", 0.5));
    throw ConfigError("unknown mean-field family '" + family + "'");
}

inline void set_parameter(meanfield::DriftSpec& s, const std::string& which, double v) {
    if (which == "beta") s.beta = v;
    else if (which == "lambda") s.lambda = v;
    else if (which == "b") s.b = v;
    else if (which == "s") s.s = v;
    else if (which == "death") s.d = v;
    else if (which == "alpha01") s.alpha01 = v;
    else if (which == "alpha10") s.alpha10 = v;
    else throw ConfigError("unknown bifurcation parameter '" + which + "'");
}

inline void cmd_meanfield(Params& p, Context& c) {
    const auto family = p.need<std::string>("family");
    auto spec = make_drift(family, p);
    std::optional<std::vector<double>> bif;
    if (p.has("bifurcation")) bif = parse_grid(p.raw("bifurcation"), "bifurcation");
    static const std::map<std::string, std::string> default_param = {
        {"ising", "beta"}, {"contact", "lambda"}, {"voter", "beta"}, {"coop_death", "b"},
        {"coop_rw", "b"}, {"biased_voter_death", "s"}, {"np_two_alpha", "alpha01"}};
    const auto which = p.get<std::string>("parameter", default_param.at(family));
    const double x0 = p.get<double>("x0", 0.1);
    const double T = p.get<double>("T", 10.0);
    const double step = p.get<double>("step", 1e-3);
    std::vector<std::size_t> ns;
    if (p.has("N")) {
        for (double v : parse_grid(p.raw("N"), "N")) {
            if (v < 2 || v != std::floor(v)) throw ConfigError("N must hold integers >= 2");
            ns.push_back(static_cast<std::size_t>(v));
        }
    }
    const auto replicas = p.get<std::size_t>("replicas", 100);
    const double eps = p.get<double>("eps", 0.1);
    p.reject_unknown();
    if (!(step > 0.0) || !(T > 0.0)) throw ConfigError("T and step must be positive");

    if (bif) {
        io::Csv csv({"parameter", "fixed_point", "stability"});
        for (double v : *bif) {
            set_parameter(spec, which, v);
            for (const auto& fp : meanfield::fixed_points(spec).points) csv.row(v, fp.x, meanfield::stability_name(fp.stability));
        }
        c.emit("bifurcation.csv", csv);
        return;
    }
    try {
        const auto curve = meanfield::integrate_ode(spec, x0, T, step);
        io::Csv traj({"t", "x"});
        const std::size_t stride = std::max<std::size_t>(1, curve.t.size() / 1000);
        for (std::size_t k = 0; k < curve.t.size(); k += stride) traj.row(curve.t[k], curve.x[k]);
        c.emit("ode.csv", traj);
        io::Csv fps({"fixed_point", "stability", "slope"});
        for (const auto& fp : meanfield::fixed_points(spec).points)
            fps.row(fp.x, meanfield::stability_name(fp.stability), fp.slope);
        c.emit("fixed_points.csv", fps);
        if (!ns.empty()) {
            const auto rows = meanfield::to_ode_check(spec, ns, x0, T, eps, replicas, c.seed, c.threads, step);
            io::Csv chk({"N", "replicas", "within", "probability", "ci_lo", "ci_hi", "eps"});
            for (const auto& r : rows) chk.row(r.n, r.replicas, r.within, r.probability, r.ci.lo, r.ci.hi, eps);
            c.emit("to_ode.csv", chk);
        }
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

inline void cmd_duality_check(Params& p, Context& c) {
    const auto pair = p.need<std::string>("pair");
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw ConfigError("pair must look like model:mode");
    const auto model_name = pair.substr(0, colon);
    const auto mode_s = pair.substr(colon + 1);
    const int sites = p.get<int>("sites", 20);
    const double T = p.get<double>("T", 5.0);
    const auto seeds = p.get<std::size_t>("seeds", 1000);

    if (mode_s == "generator") {
        if (model_name != "contact_voter") throw ConfigError("generator check is available for contact_voter");
        const double lambda = p.get<double>("lambda", 1.0), gamma = p.get<double>("gamma", 1.0);
        const double q = p.get<double>("q", gamma / (gamma + lambda));
        p.mark("lattice");
        p.reject_unknown();
        if (sites < 1 || sites > 12) throw ConfigError("generator check needs 1..12 sites");
        const auto m = models::contact_voter(models::share(Lattice::complete(sites, Neighborhood::exclude_self)), lambda, gamma);
        const auto g = generator_matrix<double>(m);
        const double res = generator_duality_residual(g, g, q);
        io::Csv csv({"pair", "lambda", "gamma", "q", "sites", "residual"});
        csv.row(pair, lambda, gamma, q, sites, res);
        c.emit("duality.csv", csv);
        c.result->report = {{"residual", res}};
        return;
    }
    DualMode mode;
    double expected_q;
    if (mode_s == "self" || mode_s == "additive" || mode_s == "rw") {
        mode = DualMode::additive;
        expected_q = 0.0;
    } else if (mode_s == "cancellative") {
        mode = DualMode::cancellative;
        expected_q = -1.0;
    } else {
        throw ConfigError("unknown duality mode '" + mode_s + "'");
    }
    const double q = p.get<double>("q", expected_q);
    if (q != expected_q)
        throw ConfigError("pathwise checks use q = 0 (additive) or q = -1 (cancellative)");
    if (sites < 3) throw ConfigError("duality checks need at least 3 sites");
    // Model parameters are read from the same config.
    const auto m = make_model(model_name, models::share(Lattice::ring(sites)), p);
    p.mark("lattice");
    p.reject_unknown();
    PathwiseOptions opt;
    opt.horizon = T;
    opt.seeds = seeds;
    opt.master_seed = c.seed;
    opt.threads = c.threads;
    PathwiseReport rep;
    try {
        rep = pathwise_duality_assert(m, mode, opt);
    } catch (const Unsupported& e) {
        throw ConfigError(e.what());
    }
    io::Csv csv({"pair", "q", "sites", "T", "runs", "checks", "pass"});
    csv.row(pair, q, sites, T, rep.runs, rep.checks, rep.passed);
    c.emit("duality.csv", csv);
    c.result->report = {{"pass", rep.passed}, {"runs", rep.runs}};
    if (!rep.passed) {
        c.result->exit_code = Exit::violation;
        c.result->report["failing_seed"] = *rep.failing_seed;
        c.result->report["failing_s"] = rep.failing_s;
        c.result->outputs.push_back({"counterexample_events.csv", rep.counterexample});
    }
}

inline void cmd_percolation(Params& p, Context& c) {
    const auto d = p.get<std::size_t>("d", 2);
    const auto ps = parse_grid(p.need<json>("p"), "p");
    const auto n = p.get<std::size_t>("n", 100);
    const auto replicas = p.get<std::size_t>("replicas", 1000);
    const auto m = p.get<std::size_t>("peierls_m", 0);
    p.reject_unknown();
    if (d < 1 || n < 1 || replicas < 1) throw ConfigError("d, n and replicas must be positive");
    io::Csv csv({"p", "n", "replicas", "survived_fraction", "ci_low", "ci_high"});
    for (double pv : ps) {
        if (!(pv >= 0.0 && pv <= 1.0)) throw ConfigError("p must lie in [0,1]");
        const auto e = percolation::percolation_theta(d, pv, n, replicas, c.seed, c.threads);
        csv.row(e.p, e.n, e.replicas, e.theta, e.ci.lo, e.ci.hi);
    }
    c.emit("percolation.csv", csv);
    if (m > 0) {
        io::Csv pe({"p", "m", "bound_closed_form", "bound_direct", "certificate_m"});
        for (double pv : ps) {
            const auto cert = percolation::peierls_certificate(pv);
            pe.row(pv, m, percolation::peierls_bound(pv, m), percolation::peierls_direct(pv, m).value,
                   cert ? static_cast<long long>(*cert) : -1LL);
        }
        c.emit("peierls.csv", pe);
    }
}

inline void cmd_kdep(Params& p, Context& c) {
    const auto field = p.get<std::string>("field", "phi");
    const auto count = p.get<std::size_t>("indices", 100000);
    const bool dump = p.get<bool>("dump", false);
    percolation::WindowField f;
    percolation::ContactCells cells;
    double pmin = 0.0;
    if (field == "phi") {
        pmin = p.get<double>("p", 0.9);
        if (!(pmin > 0.0 && pmin <= 1.0)) throw ConfigError("p must lie in (0,1]");
        f = percolation::product_pair_field(pmin);
    } else if (field == "contact") {
        cells = {p.get<double>("lambda", 200.0), p.get<double>("T", 0.05), p.get<std::size_t>("cells", 16)};
        if (!(cells.lambda > 0.0 && cells.T > 0.0 && cells.cells >= 1)) throw ConfigError("bad contact cell parameters");
        f = percolation::contact_cell_field(cells);
        pmin = f.min_marginal();
    } else {
        throw ConfigError("field must be phi or contact");
    }
    const auto K = p.get<std::size_t>("K", f.dependence());
    p.reject_unknown();
    if (count < 2) throw ConfigError("indices must be at least 2");

    Rng rng(c.seed);
    percolation::WindowSample sample;
    std::size_t lower_bound_violations = 0;
    if (field == "contact") {
        auto s = percolation::sample_contact_cells(cells, count, rng);
        for (std::size_t n = 0; n < count; ++n) lower_bound_violations += s.cells.chi[n] > s.good[n] ? 1 : 0;
        sample = std::move(s.cells);
    } else {
        sample = percolation::sample_window_field(f, count, rng);
    }
    percolation::KdepResult res;
    try {
        res = percolation::kdep_couple(f, sample, K, pmin, rng);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    const auto chi = percolation::iid_pair_test(res.chi_tilde, res.params.p_tilde);
    io::Csv csv({"field", "K", "p", "r", "p_tilde", "indices", "min_conditional", "order_violations",
                 "conditional_violations", "cell_violations", "pair_chi2", "pair_p_value"});
    csv.row(field, K, pmin, res.params.r, res.params.p_tilde, count, res.min_conditional, res.order_violations,
            res.conditional_violations, lower_bound_violations, chi.statistic, chi.p_value);
    c.emit("kdep.csv", csv);
    if (dump) {
        io::Csv d({"n", "chi", "chi_prime", "chi_tilde", "conditional"});
        for (std::size_t n = 0; n < count; ++n)
            d.row(n, static_cast<int>(res.chi[n]), static_cast<int>(res.chi_prime[n]),
                  static_cast<int>(res.chi_tilde[n]), res.conditional[n]);
        c.emit("kdep_fields.csv", d);
    }
    c.result->report = {{"p_tilde", res.params.p_tilde}, {"min_conditional", res.min_conditional},
                        {"order_violations", res.order_violations},
                        {"conditional_violations", res.conditional_violations}, {"pair_p_value", chi.p_value}};
    if (res.order_violations || res.conditional_violations || lower_bound_violations) {
        c.result->exit_code = Exit::violation;
        for (std::size_t n = 0; n < count; ++n)
            if (res.conditional[n] < res.params.p_tilde ||
                !(res.chi_tilde[n] <= res.chi_prime[n] && res.chi_prime[n] <= res.chi[n])) {
                c.result->report["counterexample_index"] = n;
                break;
            }
    }
}

inline void cmd_compare(Params& p, Context& c) {
    const double lambda = p.get<double>("lambda", 10.0);
    const double T = p.get<double>("T", 0.1);
    const auto side = p.get<std::size_t>("side", 30);
    const auto ring = p.get<std::size_t>("ring", 2 * side + 1);
    const bool verify = p.get<bool>("verify", true);
    p.reject_unknown();
    percolation::ComparisonResult res;
    try {
        res = percolation::contact_to_percolation(lambda, T, side, ring, c.seed, verify);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    io::Csv bonds({"i1", "i2", "direction", "open", "arrow_time", "path_verified"});
    for (const auto& b : res.log)
        bonds.row(res.field.coord(b.site, 0), res.field.coord(b.site, 1), b.direction, b.open, b.arrow_time,
                  b.path_verified);
    c.emit("bonds.csv", bonds);
    const double freq = res.bonds ? static_cast<double>(res.open) / static_cast<double>(res.bonds) : 0.0;
    const auto ci = stats::wilson(res.open, res.bonds);
    io::Csv sum({"lambda", "T", "side", "ring", "bonds", "open", "open_fraction", "ci_lo", "ci_hi", "p_bound",
                 "verified", "violations"});
    sum.row(lambda, T, side, ring, res.bonds, res.open, freq, ci.lo, ci.hi, res.expected_p, res.verified,
            res.violations);
    c.emit("compare.csv", sum);
    c.result->report = {{"open_fraction", freq}, {"p_bound", res.expected_p}, {"violations", res.violations}};
    if (res.violations) {
        c.result->exit_code = Exit::violation;
        for (const auto& b : res.log)
            if (b.open && !b.path_verified && verify) {
                c.result->report["counterexample"] = {{"i1", res.field.coord(b.site, 0)},
                                                      {"i2", res.field.coord(b.site, 1)},
                                                      {"direction", b.direction},
                                                      {"arrow_time", b.arrow_time}};
                break;
            }
    }
}

// Translation table from `from` to `to` by rewriting each map and looking it up.
inline std::vector<std::optional<std::uint32_t>> translate_maps(const ModelSpec& from, const ModelSpec& to,
                                                                const std::function<std::optional<LocalMap>(const LocalMap&)>& rewrite) {
    std::map<std::string, std::uint32_t> where;
    for (std::size_t k = 0; k < to.instances.size(); ++k) where.emplace(to.instances[k].map.str(), static_cast<std::uint32_t>(k));
    std::vector<std::optional<std::uint32_t>> out(from.instances.size());
    for (std::size_t a = 0; a < from.instances.size(); ++a) {
        const auto m = rewrite(from.instances[a].map);
        if (!m) continue;
        auto it = where.find(m->str());
        if (it != where.end()) out[a] = it->second;
    }
    return out;
}

inline void cmd_couple(Params& p, Context& c) {
    const auto kind = p.need<std::string>("kind");
    const int L = p.get<int>("L", 51);
    const double T = p.get<double>("T", 10.0);
    const auto replicas = p.get<std::size_t>("replicas", 100);
    const double dens = p.get<double>("p", 0.5);
    double lambda1 = 0.0, lambda2 = 0.0;
    if (kind == "lambda") {
        lambda1 = p.get<double>("lambda1", 1.5);
        lambda2 = p.get<double>("lambda2", 2.0);
    } else if (kind == "double-death" || kind == "dim-embed") {
        lambda1 = p.get<double>("lambda", 2.0);
    } else if (kind != "ann-coal") {
        throw ConfigError("kind must be lambda, ann-coal, double-death or dim-embed");
    }
    p.reject_unknown();
    if (L < 3 || !(T > 0.0) || replicas == 0) throw ConfigError("need L >= 3, T > 0 and replicas > 0");
    if (kind == "lambda" && !(lambda1 <= lambda2)) throw ConfigError("lambda coupling needs lambda1 <= lambda2");

    const auto ring = models::share(Lattice::ring(L));
    ModelSpec first, second;
    std::vector<std::optional<std::uint32_t>> translate;
    OrderCheck order;
    std::function<Configuration(Rng&)> make_y;
    auto leq = [](const Configuration& x, const Configuration& y) {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] > y[i]) return false;
        return true;
    };
    try {
        if (kind == "lambda") {
            first = models::contact(ring, lambda1);
            second = models::contact(ring, lambda2);
            translate = translate_by_embedding(first, second, [](Site s) { return s; });
            order = leq;
        } else if (kind == "ann-coal") {
            first = models::annihilating_rw(ring);
            second = models::coalescing_rw(ring);
            translate = translate_maps(first, second, [](const LocalMap& m) -> std::optional<LocalMap> {
                return maps::rw(m.s[0], m.s[1]);
            });
            order = leq;
        } else if (kind == "double-death") {
            // X is cooperative branching, Y the double-death contact process; Y <= X(i) X(i+1).
            first = models::coop_branching_1d(ring, lambda1);
            second = models::contact_double_death(ring, lambda1);
            const auto& lat = *ring;
            translate = translate_maps(first, second, [&lat](const LocalMap& m) -> std::optional<LocalMap> {
                if (m.kind == MapKind::death) return maps::death2(lat.shift(m.s[0], 0, -1), m.s[0]);
                const bool up = m.s[1] == lat.shift(m.s[0], 0, 1);
                if (up) return maps::bra(m.s[0], m.s[1]);
                return maps::bra(m.s[1], m.s[2]);
            });
            order = [&lat](const Configuration& x, const Configuration& y) {
                for (Site i = 0; i < lat.size(); ++i)
                    if (y[i] > (x[i] & x[lat.shift(i, 0, 1)])) return false;
                return true;
            };
        } else {
            // Ring embedded as the row {(0, i)} of an L x L torus.
            const auto torus = models::share(Lattice::torus(2, L));
            first = models::contact(ring, lambda1);
            second = models::contact(torus, lambda1);
            const auto& t = *torus;
            auto embed = [&t](Site s) {
                const std::array<int, 2> cc{0, static_cast<int>(s)};
                return t.index(cc);
            };
            translate = translate_by_embedding(first, second, embed);
            order = [embed](const Configuration& x, const Configuration& y) {
                for (Site i = 0; i < x.size(); ++i)
                    if (x[i] > y[embed(i)]) return false;
                return true;
            };
        }
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    for (std::size_t a = 0; a < translate.size(); ++a)
        if (!translate[a]) throw ConfigError("map " + first.instances[a].map.str() + " has no counterpart");
    const auto plan = plan_coupling(Coupling{&first, &second, translate});

    std::vector<CoupledResult> runs(replicas);
    std::vector<Configuration> starts(replicas);
    parallel_for(replicas, c.threads, [&](std::size_t k) {
        Rng rng = Rng::stream(c.seed, 2 * k);
        auto x = Configuration::product(first.lat().size(), dens, rng);
        Configuration y;
        if (kind == "double-death") {
            y = Configuration::zeros(second.lat().size());
            for (Site i = 0; i < y.size(); ++i) y.state[i] = x[i] & x[first.lat().shift(i, 0, 1)];
        } else if (kind == "dim-embed") {
            y = Configuration::zeros(second.lat().size());
            for (Site i = 0; i < x.size(); ++i) {
                const std::array<int, 2> cc{0, static_cast<int>(i)};
                y.state[second.lat().index(cc)] = x[i];
            }
        } else {
            y = x;
        }
        starts[k] = x;
        runs[k] = coupled_evolve(plan, std::move(x), std::move(y), T, stream_seed(c.seed, 2 * k + 1), order);
    });
    io::Csv csv({"replica", "events", "checks", "order_held", "violation_time", "x_count", "y_count"});
    std::size_t held = 0;
    std::optional<std::size_t> bad;
    for (std::size_t k = 0; k < replicas; ++k) {
        const auto& r = runs[k];
        csv.row(k, r.events, r.checks, r.order_held, r.violation_time, r.x.count(1), r.y.count(1));
        held += r.order_held ? 1 : 0;
        if (!r.order_held && !bad) bad = k;
    }
    c.emit("couple.csv", csv);
    c.result->report = {{"kind", kind}, {"replicas", replicas}, {"order_held", held}};
    if (bad) {
        c.result->exit_code = Exit::violation;
        c.result->report["counterexample"] = {{"replica", *bad},
                                              {"seed", stream_seed(c.seed, 2 * *bad + 1)},
                                              {"violation_time", runs[*bad].violation_time}};
    }
}

// ---------------------------------------------------------------------------
// Entry point

inline std::uint64_t effective_seed(const json& config) {
    if (const char* env = std::getenv("IPS_SEED"); env && *env) {
        const std::string_view text(env);
        std::uint64_t v = 0;
        const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || end != text.data() + text.size()) throw ConfigError("IPS_SEED must be a nonnegative integer");
        return v;
    }
    if (config.contains("seed")) {
        const auto& s = config.at("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) throw ConfigError("seed must be a nonnegative integer");
        return s.get<std::uint64_t>();
    }
    return 1;
}

// Runs one experiment in memory. Nothing touches the disk here.
inline RunResult execute(const json& config) {
    RunResult result;
    try {
        Params p(config);
        const auto command = p.need<std::string>("command");
        p.mark("seed");
        p.mark("out");
        const auto threads = p.get<int>("threads", 1);
        if (threads < 1) throw ConfigError("threads must be positive");
        Context c;
        c.seed = effective_seed(config);
        c.threads = static_cast<unsigned>(threads);
        c.manifest_name = "manifest.json";
        c.result = &result;
        if (command == "simulate") cmd_simulate(p, c);
        else if (command == "theta-curve") cmd_theta_curve(p, c);
        else if (command == "meanfield") cmd_meanfield(p, c);
        else if (command == "duality-check") cmd_duality_check(p, c);
        else if (command == "percolation") cmd_percolation(p, c);
        else if (command == "kdep") cmd_kdep(p, c);
        else if (command == "compare") cmd_compare(p, c);
        else if (command == "couple") cmd_couple(p, c);
        else throw ConfigError("unknown command '" + command + "'");
        result.report["seed"] = c.seed;
    } catch (const ConfigError& e) {
        result = {};
        result.exit_code = Exit::config_error;
        result.report = {{"error", "config"}, {"message", e.what()}};
    } catch (const json::exception& e) {
        result = {};
        result.exit_code = Exit::config_error;
        result.report = {{"error", "config"}, {"message", e.what()}};
    } catch (const InvalidArgument& e) {
        result = {};
        result.exit_code = Exit::config_error;
        result.report = {{"error", "config"}, {"message", e.what()}};
    } catch (const Unsupported& e) {
        result = {};
        result.exit_code = Exit::config_error;
        result.report = {{"error", "config"}, {"message", e.what()}};
    } catch (const InvariantViolation& e) {
        result.exit_code = Exit::violation;
        result.report["error"] = "invariant";
        result.report["message"] = e.what();
    }
    return result;
}

// Runs and writes the outputs plus manifest.json into config["out"].
inline RunResult run(const json& config) {
    const auto start = std::chrono::steady_clock::now();
    auto result = execute(config);
    if (result.exit_code == Exit::config_error) return result;
    std::filesystem::path out = config.value("out", std::string("out"));
    json manifest;
    manifest["config"] = config;
    manifest["config_hash"] = io::hex64(io::fnv1a(config.dump()));
    manifest["seed"] = result.report.value("seed", effective_seed(config));
    manifest["version"] = ips::version;
    manifest["exit_code"] = result.exit_code;
    manifest["report"] = result.report;
    json files = json::array();
    for (const auto& o : result.outputs) {
        io::atomic_write(out / o.name, o.content);
        files.push_back(o.name);
    }
    manifest["outputs"] = files;
    manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    io::atomic_write(out / "manifest.json", manifest.dump(2) + "\n");
    return result;
}

}  // namespace ips::cli
