// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (no arguments runs all of them)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ips/cli.hpp"
#include "ips/ips.hpp"

using namespace ips;
using models::share;
using cli::json;

namespace {

// Every criterion derives its randomness from this one value.
constexpr std::uint64_t master_seed = 20240601;

std::uint64_t seed_for(int criterion) { return stream_seed(master_seed, static_cast<std::uint64_t>(criterion)); }

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) pass = false;
        detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [x]");
    }
};

std::string num(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

// Largest root of tanh(beta x / 2) = x by bisection.
double bisect_upper(double beta) {
    double a = 1e-9, b = 1.0;
    for (int k = 0; k < 200; ++k) {
        const double m = 0.5 * (a + b);
        (std::tanh(beta * m / 2.0) > m ? a : b) = m;
    }
    return 0.5 * (a + b);
}

cli::RunResult execute_quiet(json config) {
    unsetenv("IPS_SEED");
    return cli::execute(config);
}

// ---------------------------------------------------------------------------

void pathwise_additive(Verdict& v) {
    PathwiseOptions opt;
    opt.horizon = 5.0;
    opt.seeds = 1000;
    opt.master_seed = seed_for(1);
    const auto rep = pathwise_duality_assert(models::contact(share(Lattice::ring(20)), 2.0),
                                                      DualMode::additive, opt);
    v.check(rep.passed && rep.runs == 1000, "indicator identity in " + std::to_string(rep.passed ? rep.runs : 0) + "/1000 runs");
}

void pathwise_cancellative(Verdict& v) {
    PathwiseOptions opt;
    opt.horizon = 5.0;
    opt.seeds = 1000;
    opt.master_seed = seed_for(2);
    const auto rep = pathwise_duality_assert(models::annihilating_branching(share(Lattice::ring(20)), 1.0, 1.0),
                                                      DualMode::cancellative, opt);
    v.check(rep.passed && rep.runs == 1000, "parity identity in " + std::to_string(rep.passed ? rep.runs : 0) + "/1000 runs");
}

void generator_q_duality(Verdict& v) {
    const auto lat = share(Lattice::complete(4, Neighborhood::exclude_self));
    for (const auto& [lambda, gamma] : std::vector<std::pair<double, double>>{{1, 1}, {2, 0.5}, {0.5, 3}}) {
        const auto g = generator_matrix(models::contact_voter(lat, lambda, gamma));
        const double q = gamma / (gamma + lambda);
        const double at = generator_duality_residual(g, g, q);
        const double off = generator_duality_residual(g, g, q + 0.05);
        v.check(at < 1e-12 && off > 1e-3,
                "(" + num(lambda) + "," + num(gamma) + ") residual " + num(at, 2) + " vs " + num(off, 3) + " off q");
    }
}

void dual_map_table(Verdict& v) {
    const Site i = 3, j = 7;
    v.check(dual_map(maps::vot(i, j), DualMode::additive) == maps::rw(j, i), "vot -> rw reversed");
    v.check(dual_map(maps::bra(i, j), DualMode::additive) == maps::bra(j, i), "bra -> bra reversed");
    v.check(dual_map(maps::death(i), DualMode::additive) == maps::death(i), "death -> death");
    v.check(dual_map(maps::excl(i, j), DualMode::additive) == maps::excl(i, j), "excl -> excl");
}

void meanfield_ising(Verdict& v) {
    const auto spec = meanfield::ising(3.0);
    const auto rows = meanfield::to_ode_check(spec, {10000}, 0.1, 10.0, 0.1, 100, seed_for(5));
    v.check(rows[0].within >= 95, std::to_string(rows[0].within) + "/100 replicas within 0.1");
    const double root = bisect_upper(3.0);
    const double end = meanfield::integrate_ode(spec, 0.1, 40.0).x.back();
    v.check(std::abs(root - 0.8586) <= 1e-4, "bisection root " + num(root, 6));
    v.check(std::abs(end - root) <= 1e-4, "ODE at t=40 " + num(end, 6));
}

void meanfield_contact(Verdict& v) {
    const auto fp = meanfield::fixed_points(meanfield::contact(2.0));
    const bool shape = fp.points.size() == 2;
    v.check(shape && std::abs(fp.points[0].x) <= 1e-10 && fp.points[0].stability == meanfield::Stability::unstable,
            "0 unstable");
    v.check(shape && std::abs(fp.points[1].x - 0.5) <= 1e-10 && fp.points[1].stability == meanfield::Stability::stable,
            "1-1/lambda stable");
    const auto deltas = meanfield::log_spaced(1e-4, 0.2, 12);
    const double ci = meanfield::fit_exponent([](double b) { return meanfield::ising_x_upp(b); }, 2.0, deltas);
    const double cc = meanfield::fit_exponent([](double l) { return meanfield::contact_x_upp(l); }, 1.0, deltas);
    v.check(std::abs(ci - 0.5) <= 0.05, "Ising exponent " + num(ci));
    v.check(std::abs(cc - 1.0) <= 0.05, "contact exponent " + num(cc));
}

void survival_curve(Verdict& v) {
    // Box wide enough that no replica reaches its edge by T at these rates.
    const auto lat = share(Lattice::ring(801));
    const double T = 200.0;
    const std::size_t replicas = 2000;
    const auto rows = estimators::theta_curve(lat, {1.0, 2.0}, T, replicas, seed_for(7));
    v.check(rows[0].theta <= 0.02, "theta(1.0) " + num(rows[0].theta));
    v.check(rows[1].theta >= 0.50 && rows[1].theta <= 0.72, "theta(2.0) " + num(rows[1].theta));
    v.check(rows[0].truncated_frac < 0.01 && rows[1].truncated_frac < 0.01,
            "truncation " + num(rows[1].truncated_frac));
    // The search starts well outside the acceptance window.
    const auto b = estimators::lambda_c_estimate(lat, 1.0, 2.6, 0.05, 0.1, T, replicas, seed_for(7));
    v.check(b.wide_lo >= 1.4 && b.wide_hi <= 1.9, "lambda_c in [" + num(b.wide_lo) + "," + num(b.wide_hi) + "]");
}

void onsager(Verdict& v) {
    const auto hot = estimators::magnetization_frozen_boundary(0.4, 64, 400.0, 40, seed_for(8));
    const auto cold = estimators::magnetization_frozen_boundary(1.2, 64, 400.0, 40, stream_seed(seed_for(8), 1));
    v.check(std::abs(cold.m_hat - 0.97361) <= 0.05, "m(1.2) " + num(cold.m_hat));
    v.check(hot.m_hat <= 0.15, "m(0.4) " + num(hot.m_hat, 3));
}

void voter_clustering(Verdict& v) {
    const auto one = estimators::clustering_stats(models::voter(share(Lattice::ring(1000))), 0.5, {500.0}, 200, seed_for(9));
    const auto three =
        estimators::clustering_stats(models::voter(share(Lattice::torus(3, 20))), 0.5, {250.0}, 20, stream_seed(seed_for(9), 1));
    v.check(one.rows[0].agreement01 >= 0.9, "1D agreement " + num(one.rows[0].agreement01));
    v.check(three.rows[0].disagreement >= 0.05, "3D disagreement " + num(three.rows[0].disagreement));
}

void exponential_bound(Verdict& v) {
    const auto m = models::contact(share(Lattice::ring(101)), 0.3);
    const auto rows = estimators::relevance_size(m, 50, {1.0, 2.0, 5.0}, 2000, seed_for(10));
    for (const auto& r : rows)
        v.check(r.size.mean <= std::exp(-0.4 * r.t) + 3.0 * r.size.se, "t=" + num(r.t) + " mean " + num(r.size.mean));
    Rng rng(stream_seed(seed_for(10), 1));
    std::size_t bad = 0;
    const std::vector<Site> a = {50};
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto st = sample_events(m, 5.0, stream_seed(seed_for(10), 100 + s));
        bad += estimators::relevance_forward_check(m, st, a, 5.0, 20, rng);
    }
    v.check(bad == 0, "forward check mismatches " + std::to_string(bad) + " over 100 seeds");
}

void monotone_couplings(Verdict& v) {
    for (const std::string kind : {"lambda", "ann-coal", "double-death", "dim-embed"}) {
        const auto r = execute_quiet({{"command", "couple"}, {"kind", kind}, {"replicas", 500}, {"seed", seed_for(11)}});
        const auto held = r.report.value("order_held", std::size_t{0});
        v.check(r.exit_code == cli::Exit::ok && held == 500, kind + " " + std::to_string(held) + "/500");
    }
}

void oriented_percolation(Verdict& v) {
    const auto lo = percolation::percolation_theta(2, 0.45, 100, 1000, seed_for(12));
    const auto hi = percolation::percolation_theta(2, 0.92, 100, 1000, stream_seed(seed_for(12), 1));
    v.check(lo.theta <= 0.01, "theta(0.45) " + num(lo.theta));
    v.check(hi.theta >= 0.5, "theta(0.92) " + num(hi.theta));
    bool series = true;
    for (double p : {0.80, 0.85, 0.88, 0.8885})
        series = series && !percolation::peierls_direct(p, 1).converged;
    for (double p : {0.8895, 0.9, 0.95, 0.99})
        series = series && percolation::peierls_direct(p, 1).converged;
    v.check(series, "Peierls series diverges at or below 8/9 and converges above");
}

void k_dependence(Verdict& v) {
    const std::vector<json> fields = {{{"field", "phi"}, {"p", 0.9}},
                                      {{"field", "contact"}, {"lambda", 200.0}, {"T", 0.05}, {"cells", 16}}};
    for (auto f : fields) {
        f["command"] = "kdep";
        f["indices"] = 100000;
        f["seed"] = seed_for(13);
        const auto r = execute_quiet(f);
        const auto& rep = r.report;
        const bool ok = r.exit_code == cli::Exit::ok && rep["order_violations"] == 0 && rep["conditional_violations"] == 0 &&
                        rep["min_conditional"].get<double>() >= rep["p_tilde"].get<double>() &&
                        rep["pair_p_value"].get<double>() > 0.01;
        v.check(ok, f["field"].get<std::string>() + " p_tilde " + num(rep.value("p_tilde", 0.0)) + " chi2 p " +
                        num(rep.value("pair_p_value", 0.0), 3));
    }
}

void contact_comparison(Verdict& v) {
    const double lambda = 10.0, T = 0.3;
    double bonds = 0.0, open = 0.0;
    for (std::uint64_t s = 0; bonds < 1e5; ++s) {
        const auto res = percolation::contact_to_percolation(lambda, T, 60, 121, stream_seed(seed_for(14), s), false);
        bonds += static_cast<double>(res.bonds);
        open += static_cast<double>(res.open);
    }
    const double p = percolation::comparison_probability(lambda, T);
    v.check(std::abs(open / bonds - p) <= 0.01, "frequency " + num(open / bonds) + " vs " + num(p));
    std::size_t violations = 0, unverified = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto res = percolation::contact_to_percolation(lambda, T, 8, 17, stream_seed(seed_for(14), 1000 + s), true);
        violations += res.violations;
        unverified += res.open - res.verified;
    }
    v.check(violations == 0 && unverified == 0, "open bonds without a verified path " + std::to_string(violations + unverified));
}

void determinism(Verdict& v) {
    const std::vector<json> configs = {
        {{"command", "simulate"}, {"model", "contact"}, {"lambda", 2.0}, {"d", 1}, {"L", 401}, {"T", 50.0}, {"replicas", 200}},
        {{"command", "simulate"}, {"model", "ising"}, {"beta", 0.6}, {"d", 2}, {"L", 12}, {"T", 5.0}, {"replicas", 16},
         {"lattice", "frozen-box"}, {"observable", "magnetization"}},
        {{"command", "theta-curve"}, {"lambdas", "1.4:2:0.2"}, {"d", 1}, {"L", 201}, {"T", 30.0}, {"replicas", 100}},
        {{"command", "meanfield"}, {"family", "ising"}, {"beta", 3.0}, {"x0", 0.1}, {"T", 5.0}, {"N", 1000}, {"replicas", 20}},
        {{"command", "duality-check"}, {"pair", "contact:self"}, {"q", 0}, {"sites", 20}, {"T", 5.0}, {"seeds", 100}},
        {{"command", "percolation"}, {"p", "0.6:0.8:0.1"}, {"n", 40}, {"replicas", 100}},
        {{"command", "kdep"}, {"field", "phi"}, {"p", 0.9}, {"indices", 5000}, {"dump", true}},
        {{"command", "compare"}, {"lambda", 10.0}, {"T", 0.3}, {"side", 10}},
        {{"command", "couple"}, {"kind", "lambda"}, {"L", 31}, {"T", 5.0}, {"replicas", 40}},
    };
    for (const auto& base : configs) {
        std::vector<std::vector<cli::Output>> outs;
        bool ran = true;
        for (int t : {1, 4, 8}) {
            auto c = base;
            c["threads"] = t;
            c["seed"] = seed_for(15);
            const auto r = execute_quiet(c);
            if (r.exit_code != cli::Exit::ok || r.outputs.empty()) {
                ran = false;
                v.check(false, r.report.dump());
            }
            outs.push_back(r.outputs);
        }
        bool same = ran;
        for (std::size_t k = 1; same && k < outs.size(); ++k) {
            same = outs[k].size() == outs[0].size();
            for (std::size_t f = 0; same && f < outs[0].size(); ++f)
                same = outs[k][f].name == outs[0][f].name && outs[k][f].content == outs[0][f].content;
        }
        std::string label = base["command"].get<std::string>();
        if (base.contains("model")) label += ":" + base["model"].get<std::string>();
        v.check(same, label);
    }
}

struct Criterion {
    int id;
    const char* title;
    std::function<void(Verdict&)> body;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "pathwise additive duality", pathwise_additive},
        {2, "pathwise cancellative duality", pathwise_cancellative},
        {3, "generator q-duality", generator_q_duality},
        {4, "dual-map table", dual_map_table},
        {5, "mean-field Ising", meanfield_ising},
        {6, "mean-field fixed points and exponents", meanfield_contact},
        {7, "survival curve", survival_curve},
        {8, "Onsager magnetization", onsager},
        {9, "voter clustering", voter_clustering},
        {10, "exponential bound", exponential_bound},
        {11, "monotone couplings", monotone_couplings},
        {12, "oriented percolation", oriented_percolation},
        {13, "k-dependence", k_dependence},
        {14, "contact to percolation comparison", contact_comparison},
        {15, "determinism across threads", determinism},
    };
    std::set<int> wanted;
    for (int k = 1; k < argc; ++k) wanted.insert(std::atoi(argv[k]));

    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.body(v);
        } catch (const std::exception& e) {
            v.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += v.pass ? 0 : 1;
        std::printf("%s %2d %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", c.id, c.title, secs, v.detail.str().c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
