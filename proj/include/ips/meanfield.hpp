#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ips/error.hpp"
#include "ips/parallel.hpp"
#include "ips/rng.hpp"
#include "ips/stats.hpp"

namespace ips::meanfield {

enum class Family { ising, contact, voter, coop_death, coop_rw, biased_voter_death, np_two_alpha };

inline const char* family_name(Family f) {
    static const char* names[] = {"ising", "contact", "voter", "coop_death", "coop_rw", "biased_voter_death",
                                  "np_two_alpha"};
    return names[static_cast<int>(f)];
}

inline std::optional<Family> family_from_name(const std::string& s) {
    for (int k = 0; k <= static_cast<int>(Family::np_two_alpha); ++k)
        if (s == family_name(static_cast<Family>(k))) return static_cast<Family>(k);
    return std::nullopt;
}

struct JumpRates {
    double up = 0.0;
    double down = 0.0;
};

// Drift b and quadratic variation a of the density of a complete-graph model.
struct DriftSpec {
    Family family = Family::contact;
    double beta = 0.0, lambda = 0.0, b = 0.0, s = 0.0, d = 0.0, alpha01 = 0.0, alpha10 = 0.0;

    double lo() const { return family == Family::ising ? -1.0 : 0.0; }
    double hi() const { return 1.0; }

    // Spacing of the reduced chain's grid for N sites.
    double step(std::size_t n) const { return (family == Family::ising ? 2.0 : 1.0) / static_cast<double>(n); }

    void check_domain(double x) const {
        if (!(x >= lo() - 1e-12 && x <= hi() + 1e-12)) throw InvalidArgument("density outside the model's interval");
    }

    double drift(double x) const {
        check_domain(x);
        switch (family) {
            case Family::ising: return std::tanh(beta * x / 2.0) - x;
            case Family::contact: return lambda * x * (1.0 - x) - x;
            case Family::voter: return 0.0;
            case Family::coop_death: return b * x * x * (1.0 - x) - x;
            case Family::coop_rw: return b * x * x * (1.0 - x) - x * x;
            case Family::biased_voter_death: return s * x * (1.0 - x) - d * x;
            case Family::np_two_alpha: return x * (1.0 - x) * ((1.0 - alpha10) * (1.0 - x) - (1.0 - alpha01) * x);
        }
        return 0.0;
    }

    // Exact jump rates of the reduced chain at density x on N sites.
    JumpRates rates(std::size_t n, double x) const {
        check_domain(x);
        const double nn = static_cast<double>(n);
        switch (family) {
            case Family::ising: {
                const double ep = std::exp(beta * x / 2.0), em = std::exp(-beta * x / 2.0);
                return {nn * (1.0 - x) / 2.0 * ep / (em + ep), nn * (1.0 + x) / 2.0 * em / (em + ep)};
            }
            case Family::contact: return {lambda * nn * x * (1.0 - x), nn * x};
            case Family::voter: return {nn * x * (1.0 - x), nn * x * (1.0 - x)};
            case Family::coop_death: return {nn * (1.0 - x) * b * x * x, nn * x};
            case Family::coop_rw: return {nn * (1.0 - x) * b * x * x, nn * x * (x - 1.0 / nn)};
            case Family::biased_voter_death:
                return {x * (1.0 - x) + s * nn * x * (1.0 - x), x * (1.0 - x) + d * nn * x};
            case Family::np_two_alpha:
                return {nn * (1.0 - x) * x * (1.0 - x + alpha01 * x), nn * x * (1.0 - x) * (x + alpha10 * (1.0 - x))};
        }
        return {};
    }

    double qvar(std::size_t n, double x) const {
        check_domain(x);
        const double nn = static_cast<double>(n);
        switch (family) {
            case Family::ising: return 2.0 / nn * (1.0 - x * std::tanh(beta * x / 2.0));
            case Family::contact: return (lambda * x * (1.0 - x) + x) / nn;
            case Family::voter: return 2.0 * x * (1.0 - x) / nn;
            case Family::coop_death: return (b * x * x * (1.0 - x) + x) / nn;
            case Family::coop_rw: return (b * x * x * (1.0 - x) + x * (x - 1.0 / nn)) / nn;
            default: {
                const auto r = rates(n, x);
                const double h = step(n);
                return (r.up + r.down) * h * h;
            }
        }
    }
};

inline DriftSpec ising(double beta) { return {Family::ising, beta}; }
inline DriftSpec contact(double lambda) {
    DriftSpec s{Family::contact};
    s.lambda = lambda;
    return s;
}
inline DriftSpec voter() { return {Family::voter}; }
inline DriftSpec coop_death(double b) {
    DriftSpec s{Family::coop_death};
    s.b = b;
    return s;
}
inline DriftSpec coop_rw(double b) {
    DriftSpec s{Family::coop_rw};
    s.b = b;
    return s;
}
inline DriftSpec biased_voter_death(double bias, double death) {
    DriftSpec s{Family::biased_voter_death};
    s.s = bias;
    s.d = death;
    return s;
}
inline DriftSpec np_two_alpha(double a01, double a10) {
    DriftSpec s{Family::np_two_alpha};
    s.alpha01 = a01;
    s.alpha10 = a10;
    return s;
}

// ---------------------------------------------------------------------------
// ODE

struct Curve {
    std::vector<double> t, x;

    // Linear interpolation; exact at grid points.
    double at(double time) const {
        if (time <= t.front()) return x.front();
        if (time >= t.back()) return x.back();
        const double h = t[1] - t[0];
        const auto k = std::min(static_cast<std::size_t>(time / h), t.size() - 2);
        const double w = (time - t[k]) / h;
        return x[k] + w * (x[k + 1] - x[k]);
    }
};

// Classical fourth-order Runge-Kutta with a fixed step.
inline Curve integrate_ode(const DriftSpec& spec, double x0, double horizon, double step = 1e-3) {
    if (!(step > 0.0)) throw InvalidArgument("ODE step must be positive");
    spec.check_domain(x0);
    const auto steps = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
    const double h = steps == 0 ? step : horizon / static_cast<double>(steps);
    auto f = [&](double x) { return spec.drift(std::clamp(x, spec.lo(), spec.hi())); };
    Curve c;
    c.t.reserve(steps + 1);
    c.x.reserve(steps + 1);
    c.t.push_back(0.0);
    c.x.push_back(x0);
    double x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double k1 = f(x), k2 = f(x + h / 2 * k1), k3 = f(x + h / 2 * k2), k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (x < spec.lo() - 1e-9 || x > spec.hi() + 1e-9) throw InvariantViolation("ODE left its invariant interval");
        x = std::clamp(x, spec.lo(), spec.hi());
        c.t.push_back(static_cast<double>(k + 1) * h);
        c.x.push_back(x);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Fixed points

enum class Stability { stable, unstable, semistable };

inline const char* stability_name(Stability s) {
    static const char* names[] = {"stable", "unstable", "semistable"};
    return names[static_cast<int>(s)];
}

struct FixedPoint {
    double x = 0.0;
    Stability stability = Stability::stable;
    double slope = 0.0;
    bool marginal = false;  // slope vanishes; stability decided by the drift's sign nearby
};

struct FixedPointSet {
    std::vector<FixedPoint> points;
    bool degenerate = false;  // drift vanishes identically
};

inline FixedPointSet fixed_points(const DriftSpec& spec, double grid = 1e-3, double tol = 1e-12) {
    const double lo = spec.lo(), hi = spec.hi();
    const auto n = static_cast<std::size_t>(std::llround((hi - lo) / grid));
    std::vector<double> xs(n + 1), fs(n + 1);
    bool all_zero = true;
    for (std::size_t k = 0; k <= n; ++k) {
        xs[k] = k == n ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n);
        fs[k] = spec.drift(xs[k]);
        if (fs[k] != 0.0) all_zero = false;
    }
    FixedPointSet out;
    if (all_zero) {
        out.degenerate = true;
        return out;
    }
    std::vector<double> roots;
    for (std::size_t k = 0; k <= n; ++k) {
        if (fs[k] == 0.0) {
            roots.push_back(xs[k]);
            continue;
        }
        if (k < n && fs[k + 1] != 0.0 && (fs[k] < 0.0) != (fs[k + 1] < 0.0)) {
            double a = xs[k], b = xs[k + 1], fa = fs[k];
            while (b - a > tol) {
                const double m = 0.5 * (a + b);
                const double fm = spec.drift(m);
                if (fm == 0.0) {
                    a = b = m;
                    break;
                }
                if ((fm < 0.0) == (fa < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
    }
    for (double r : roots) {
        FixedPoint fp{r};
        const double h = 1e-6;
        const double a = std::max(lo, r - h), b = std::min(hi, r + h);
        fp.slope = (spec.drift(b) - spec.drift(a)) / (b - a);
        if (std::abs(fp.slope) > 1e-7) {
            fp.stability = fp.slope < 0.0 ? Stability::stable : Stability::unstable;
        } else {
            fp.marginal = true;
            const double left = r - 1e-3 >= lo ? spec.drift(r - 1e-3) : 0.0;
            const double right = r + 1e-3 <= hi ? spec.drift(r + 1e-3) : 0.0;
            if (left >= 0.0 && right <= 0.0)
                fp.stability = Stability::stable;
            else if (left <= 0.0 && right >= 0.0)
                fp.stability = Stability::unstable;
            else
                fp.stability = Stability::semistable;
        }
        out.points.push_back(fp);
    }
    return out;
}

// Largest zero of tanh(beta x / 2) = x in [0, 1]; zero when beta <= 2.
inline double ising_x_upp(double beta) {
    if (beta <= 2.0) return 0.0;
    double a = 1e-300, b = 1.0;
    auto g = [&](double x) { return std::tanh(beta * x / 2.0) - x; };
    // g > 0 just above 0 and g(1) < 0.
    for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
        const double m = 0.5 * (a + b);
        (g(m) > 0.0 ? a : b) = m;
    }
    return 0.5 * (a + b);
}

inline double contact_x_upp(double lambda) { return std::max(0.0, 1.0 - 1.0 / lambda); }

// Slope of log f(crit + delta) against log delta at the given deltas.
template <class F>
double fit_exponent(F&& f, double crit, const std::vector<double>& deltas) {
    std::vector<double> lx, ly;
    for (double d : deltas) {
        lx.push_back(std::log(d));
        ly.push_back(std::log(f(crit + d)));
    }
    return stats::fit_line(lx, ly).slope;
}

// `count` log-spaced offsets in [lo, hi].
inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
    std::vector<double> out;
    for (std::size_t k = 0; k < count; ++k)
        out.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(count - 1)));
    return out;
}

// ---------------------------------------------------------------------------
// Reduced chain

struct ChainPath {
    std::vector<double> t;  // jump times (t[0] = 0)
    std::vector<double> x;  // density after each jump
};

// Simulates the reduced chain on (0, T]; `speed` multiplies all rates.
inline ChainPath simulate_chain(const DriftSpec& spec, std::size_t n, double x0, double horizon, Rng& rng,
                                double speed = 1.0) {
    require(n >= 2, "reduced chain needs N >= 2");
    const double h = spec.step(n);
    const double kf = (x0 - spec.lo()) / h;
    require(std::abs(kf - std::round(kf)) < 1e-9, "initial density must lie on the chain's grid");
    auto k = static_cast<long long>(std::llround(kf));
    const auto kmax = static_cast<long long>(std::llround((spec.hi() - spec.lo()) / h));
    ChainPath p;
    double t = 0.0;
    p.t.push_back(0.0);
    p.x.push_back(x0);
    for (;;) {
        const double x = spec.lo() + h * static_cast<double>(k);
        auto r = spec.rates(n, x);
        if (k >= kmax) r.up = 0.0;
        if (k <= 0) r.down = 0.0;
        r.up = std::max(0.0, r.up) * speed;
        r.down = std::max(0.0, r.down) * speed;
        const double total = r.up + r.down;
        if (total <= 0.0) break;
        t += rng.exponential(total);
        if (t > horizon) break;
        k += rng.uniform() * total < r.up ? 1 : -1;
        p.t.push_back(t);
        p.x.push_back(spec.lo() + h * static_cast<double>(k));
    }
    return p;
}

inline double chain_value_at(const ChainPath& p, double time) {
    const auto it = std::upper_bound(p.t.begin(), p.t.end(), time);
    return p.x[static_cast<std::size_t>(it - p.t.begin()) - 1];
}

// sup over [0, T] of |X_t - y_t|; y is monotone between jumps so the supremum is attained
// at jump times (from either side) or at T.
inline double sup_deviation(const ChainPath& p, const Curve& y, double horizon) {
    double worst = 0.0;
    for (std::size_t k = 0; k < p.t.size(); ++k) {
        const double end = k + 1 < p.t.size() ? p.t[k + 1] : horizon;
        worst = std::max({worst, std::abs(p.x[k] - y.at(p.t[k])), std::abs(p.x[k] - y.at(end))});
    }
    return worst;
}

struct ToOdeRow {
    std::size_t n = 0;
    std::size_t replicas = 0;
    std::size_t within = 0;  // replicas whose sup deviation is <= eps
    double probability = 0.0;
    stats::Interval ci;
};

inline std::vector<ToOdeRow> to_ode_check(const DriftSpec& spec, const std::vector<std::size_t>& ns, double x0,
                                          double horizon, double eps, std::size_t replicas, std::uint64_t seed,
                                          unsigned threads = 1, double step = 1e-3) {
    const auto y = integrate_ode(spec, x0, horizon, step);
    std::vector<ToOdeRow> rows;
    for (std::size_t idx = 0; idx < ns.size(); ++idx) {
        std::vector<std::uint8_t> ok(replicas, 0);
        parallel_for(replicas, threads, [&](std::size_t k) {
            Rng rng = Rng::stream(stream_seed(seed, ns[idx]), k);
            const auto p = simulate_chain(spec, ns[idx], x0, horizon, rng);
            ok[k] = sup_deviation(p, y, horizon) <= eps ? 1 : 0;
        });
        ToOdeRow row;
        row.n = ns[idx];
        row.replicas = replicas;
        for (auto v : ok) row.within += v;
        row.probability = static_cast<double>(row.within) / static_cast<double>(replicas);
        row.ci = stats::wilson(row.within, replicas);
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Wright-Fisher diffusion dX = sqrt(2X(1-X)) dB, absorbed at {0, 1}

inline Curve wright_fisher(double x0, double horizon, double step, Rng& rng, bool keep_path = true) {
    if (!(step > 0.0)) throw InvalidArgument("step must be positive");
    require(x0 >= 0.0 && x0 <= 1.0, "x0 must lie in [0,1]");
    const auto steps = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
    const double h = steps == 0 ? step : horizon / static_cast<double>(steps);
    Curve c;
    double x = x0;
    if (keep_path) {
        c.t.push_back(0.0);
        c.x.push_back(x);
    }
    for (std::size_t k = 0; k < steps; ++k) {
        if (x > 0.0 && x < 1.0) {
            x += std::sqrt(2.0 * x * (1.0 - x) * h) * rng.normal();
            x = std::clamp(x, 0.0, 1.0);
        }
        if (keep_path) {
            c.t.push_back(static_cast<double>(k + 1) * h);
            c.x.push_back(x);
        }
    }
    if (!keep_path) {
        c.t.push_back(horizon);
        c.x.push_back(x);
    }
    return c;
}

struct WfComparison {
    stats::KsResult ks;
    std::vector<double> chain, diffusion;
};

// Sped-up voter chain (rates multiplied by N) against Euler-Maruyama Wright-Fisher samples.
inline WfComparison wf_compare(std::size_t n, double horizon, std::size_t samples, std::uint64_t seed,
                               double x0 = 0.5, double step = 1e-3, unsigned threads = 1) {
    WfComparison out;
    out.chain.resize(samples);
    out.diffusion.resize(samples);
    const auto spec = voter();
    parallel_for(samples, threads, [&](std::size_t k) {
        Rng rc = Rng::stream(seed, 2 * k);
        Rng rd = Rng::stream(seed, 2 * k + 1);
        out.chain[k] = chain_value_at(simulate_chain(spec, n, x0, horizon, rc, static_cast<double>(n)), horizon);
        out.diffusion[k] = wright_fisher(x0, horizon, step, rd, false).x.back();
    });
    out.ks = stats::ks_two_sample(out.chain, out.diffusion);
    return out;
}

// Times at which the mean-field Ising chain changes the sign of its magnetization.
inline std::vector<double> sign_flip_epochs(std::size_t n, double beta, double horizon, std::uint64_t seed) {
    Rng rng(seed);
    const auto spec = ising(beta);
    const double x0 = ising_x_upp(beta);
    const double h = spec.step(n);
    const double start = spec.lo() + h * std::round((x0 - spec.lo()) / h);
    const auto p = simulate_chain(spec, n, start, horizon, rng);
    std::vector<double> flips;
    int sign = start >= 0.0 ? 1 : -1;
    for (std::size_t k = 1; k < p.t.size(); ++k) {
        if (p.x[k] > 0.0 && sign < 0) {
            sign = 1;
            flips.push_back(p.t[k]);
        } else if (p.x[k] < 0.0 && sign > 0) {
            sign = -1;
            flips.push_back(p.t[k]);
        }
    }
    return flips;
}

struct BifurcationRow {
    double parameter = 0.0;
    double fixed_point = 0.0;
    Stability stability = Stability::stable;
};

// Fixed points across a parameter sweep; `make` builds the drift for a parameter value.
template <class Make>
std::vector<BifurcationRow> bifurcation(Make&& make, double from, double to, double by) {
    require(by > 0.0 && to >= from, "bad bifurcation range");
    std::vector<BifurcationRow> rows;
    const auto count = static_cast<std::size_t>(std::floor((to - from) / by + 1e-9));
    for (std::size_t k = 0; k <= count; ++k) {
        const double p = from + by * static_cast<double>(k);
        for (const auto& fp : fixed_points(make(p)).points) rows.push_back({p, fp.x, fp.stability});
    }
    return rows;
}

}  // namespace ips::meanfield
