#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "ips/error.hpp"
#include "ips/graphical.hpp"
#include "ips/maps.hpp"
#include "ips/models.hpp"
#include "ips/parallel.hpp"
#include "ips/stats.hpp"

namespace ips {

enum class DualMode { additive, cancellative };

namespace detail {

inline std::vector<std::uint32_t> rows_on(const LocalMap& m, const std::vector<Site>& sup) {
    std::vector<std::uint32_t> rows;
    for (std::size_t a = 0; a < sup.size(); ++a) rows.push_back(detail::eval_local(m, sup, 1U << a));
    return rows;
}

inline std::vector<std::uint32_t> transpose(const std::vector<std::uint32_t>& rows) {
    std::vector<std::uint32_t> t(rows.size(), 0);
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < rows.size(); ++b)
            if ((rows[a] >> b) & 1U) t[b] |= 1U << a;
    return t;
}

}  // namespace detail

// Checks the defining relation of a dual pair over all (x, y) on the joint support.
inline bool verify_dual(const LocalMap& m, const LocalMap& dual, DualMode mode) {
    auto sup = support(m);
    for (Site s : support(dual)) sup.push_back(s);
    std::sort(sup.begin(), sup.end());
    sup.erase(std::unique(sup.begin(), sup.end()), sup.end());
    detail::check_enumerable(sup);
    if (sup.size() > 10) throw Unsupported("joint support too large for pairwise exhaustion");
    const std::uint32_t total = 1U << sup.size();
    for (std::uint32_t x = 0; x < total; ++x) {
        const auto mx = detail::eval_local(m, sup, x);
        for (std::uint32_t y = 0; y < total; ++y) {
            const auto my = detail::eval_local(dual, sup, y);
            if (mode == DualMode::additive) {
                if (((mx & y) == 0) != ((x & my) == 0)) return false;
            } else if ((std::popcount(mx & y) & 1) != (std::popcount(x & my) & 1)) {
                return false;
            }
        }
    }
    return true;
}

// Dual map: reverse every arrow and keep the blocks. Returns a catalog map when one
// matches, otherwise a linear map given by the transposed arrow matrix.
inline LocalMap dual_map(const LocalMap& m, DualMode mode) {
    const auto c = classify(m);
    if (mode == DualMode::additive ? !c.additive : !c.cancellative)
        throw Unsupported(std::string("map is not ") + (mode == DualMode::additive ? "additive: " : "cancellative: ") +
                          m.str());
    const auto sup = support(m);
    const auto target = detail::transpose(detail::rows_on(m, sup));

    std::vector<LocalMap> candidates;
    for (Site a : sup) candidates.push_back(maps::death(a));
    for (Site a : sup)
        for (Site b : sup) {
            if (a == b) continue;
            for (MapKind k : {MapKind::vot, MapKind::bra, MapKind::rw, MapKind::excl, MapKind::death2, MapKind::ann,
                              MapKind::bran})
                candidates.push_back(maps::pair(k, a, b));
        }
    for (const auto& cand : candidates) {
        const auto cc = classify(cand);
        if (mode == DualMode::additive ? !cc.additive : !cc.cancellative) continue;
        if (detail::rows_on(cand, sup) == target) return cand;
    }
    return maps::linear(mode == DualMode::cancellative, sup, target);
}

// Same rates, each instance replaced by its dual (index-aligned with the original).
inline ModelSpec dual_model(const ModelSpec& m, DualMode mode) {
    if (m.potts) throw Unsupported("dual models need a map-family model");
    ModelSpec d;
    d.name = m.name + "_dual";
    d.lattice = m.lattice;
    d.alphabet = m.alphabet;
    d.params = m.params;
    for (const auto& inst : m.instances) d.instances.push_back({dual_map(inst.map, mode), inst.rate});
    return d;
}

// psi_q(x, y) = q^{<x,y>} with 0^0 = 1.
struct DualityFunction {
    double q = 0.0;
    double operator()(const Configuration& x, const Configuration& y) const {
        std::size_t overlap = 0;
        for (std::size_t i = 0; i < x.size(); ++i) overlap += static_cast<std::size_t>(x[i] != 0 && y[i] != 0);
        return overlap == 0 ? 1.0 : std::pow(q, static_cast<double>(overlap));
    }
};

// ---------------------------------------------------------------------------
// Generators on the full state space (sites encoded as bits; spin +1 <-> bit 1)

template <class Scalar>
struct Generator {
    std::size_t sites = 0;
    std::vector<std::vector<std::pair<std::uint32_t, Scalar>>> rows;  // off-diagonal entries, then diagonal

    std::size_t dim() const { return rows.size(); }

    Scalar at(std::uint32_t x, std::uint32_t y) const {
        Scalar v{0};
        for (const auto& [c, r] : rows[x])
            if (c == y) v += r;
        return v;
    }

    std::vector<std::vector<Scalar>> dense() const {
        std::vector<std::vector<Scalar>> d(dim(), std::vector<Scalar>(dim(), Scalar{0}));
        for (std::size_t x = 0; x < dim(); ++x)
            for (const auto& [c, r] : rows[x]) d[x][c] += r;
        return d;
    }
};

using Rational = boost::rational<long long>;

template <class Scalar>
Scalar scalar_from(double v) {
    if constexpr (std::is_same_v<Scalar, Rational>) {
        for (long long den = 1; den <= 1000000; ++den) {
            const double num = v * static_cast<double>(den);
            if (std::abs(num - std::round(num)) < 1e-9 * std::max(1.0, std::abs(num)))
                return Rational(static_cast<long long>(std::llround(num)), den);
        }
        throw Unsupported("rate has no small rational form");
    } else {
        return static_cast<Scalar>(v);
    }
}

template <class Scalar = double>
Generator<Scalar> generator_matrix(const ModelSpec& m) {
    if (m.potts) throw Unsupported("generator matrices need a map-family model");
    const std::size_t n = m.lat().size();
    if (n > 12) throw Unsupported("state space too large for a generator matrix (more than 4096 states)");
    const bool spin = m.alphabet == Alphabet::spin;
    Generator<Scalar> g;
    g.sites = n;
    const std::uint32_t dim = 1U << n;
    g.rows.resize(dim);
    std::vector<Scalar> rates;
    for (const auto& inst : m.instances) rates.push_back(scalar_from<Scalar>(inst.rate));
    for (std::uint32_t x = 0; x < dim; ++x) {
        Scalar diag{0};
        std::vector<std::pair<std::uint32_t, Scalar>> row;
        for (std::size_t k = 0; k < m.instances.size(); ++k) {
            std::uint32_t y = x;
            apply_map(
                m.instances[k].map,
                [&](Site s) {
                    const int b = static_cast<int>((x >> s) & 1U);
                    return spin ? 2 * b - 1 : b;
                },
                [&](Site s, int v) {
                    if (m.lat().pinned(s)) return;
                    const bool one = spin ? v > 0 : v != 0;
                    y = one ? (y | (1U << s)) : (y & ~(1U << s));
                });
            if (y == x) continue;
            auto it = std::find_if(row.begin(), row.end(), [&](const auto& e) { return e.first == y; });
            if (it == row.end())
                row.emplace_back(y, rates[k]);
            else
                it->second += rates[k];
            diag -= rates[k];
        }
        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        row.emplace_back(x, diag);
        g.rows[x] = std::move(row);
    }
    return g;
}

// max over (x, y) of | sum_x' G(x,x') psi(x',y) - sum_y' psi(x,y') G'(y,y') |, with
// psi(x, y) = q^{popcount(x & y)}.
template <class Scalar>
Scalar generator_duality_residual(const Generator<Scalar>& g, const Generator<Scalar>& gd, Scalar q) {
    if (g.dim() != gd.dim()) throw InvalidArgument("generator dimensions differ");
    std::vector<Scalar> pw(g.sites + 1, Scalar{1});
    for (std::size_t k = 1; k <= g.sites; ++k) pw[k] = pw[k - 1] * q;
    auto psi = [&](std::uint32_t x, std::uint32_t y) { return pw[static_cast<std::size_t>(std::popcount(x & y))]; };
    Scalar worst{0};
    for (std::uint32_t x = 0; x < g.dim(); ++x)
        for (std::uint32_t y = 0; y < g.dim(); ++y) {
            Scalar lhs{0}, rhs{0};
            for (const auto& [c, r] : g.rows[x]) lhs += r * psi(c, y);
            for (const auto& [c, r] : gd.rows[y]) rhs += r * psi(x, c);
            Scalar d = lhs - rhs;
            if (d < Scalar{0}) d = -d;
            if (worst < d) worst = d;
        }
    return worst;
}

// ---------------------------------------------------------------------------
// Pathwise duality

struct PathwiseReport {
    bool passed = true;
    std::size_t runs = 0;
    std::size_t checks = 0;
    std::optional<std::uint64_t> failing_seed;
    double failing_s = -1.0;
    std::string counterexample;  // event CSV of the failing run
};

struct PathwiseOptions {
    double horizon = 5.0;
    std::size_t seeds = 1000;
    std::uint64_t master_seed = 1;
    double x0_density = 0.5;
    double y0_density = 0.2;
    std::size_t grid = 10;  // dual sample times s = k T / grid
    unsigned threads = 1;
};

// For each seed and each s on the grid checks, with psi = disjointness (additive) or
// parity (cancellative): psi(X_{T-s}, Y_s) == psi(X_T, Y_0).
inline PathwiseReport pathwise_duality_assert(const ModelSpec& m, DualMode mode, const PathwiseOptions& opt) {
    const ModelSpec dual = dual_model(m, mode);
    const InstanceSampler sampler(m);
    const double T = opt.horizon;
    std::vector<double> grid, forward;
    for (std::size_t k = 0; k <= opt.grid; ++k) grid.push_back(T * static_cast<double>(k) / static_cast<double>(opt.grid));
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) forward.push_back(T - *it);
    auto psi = [&](const Configuration& x, const Configuration& y) {
        int overlap = 0;
        for (std::size_t i = 0; i < x.size(); ++i) overlap += (x[i] & y[i]);
        return mode == DualMode::additive ? (overlap == 0 ? 1 : 0) : (overlap & 1);
    };
    std::vector<int> bad(opt.seeds, -1);
    parallel_for(opt.seeds, opt.threads, [&](std::size_t k) {
        const auto seed = stream_seed(opt.master_seed, k);
        Rng rng(seed ^ 0x5bd1e995ULL);
        const auto x0 = Configuration::product(m.lat().size(), opt.x0_density, rng);
        const auto y0 = Configuration::product(m.lat().size(), opt.y0_density, rng);
        const auto st = sample_events(m, sampler, T, seed);
        const auto fx = evolve(m, st, x0, forward);  // X at T - s, increasing in time
        const auto dy = dual_evolve(dual, st, y0, T, grid);
        const int ref = psi(fx.states.back(), y0);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto& x = fx.states[grid.size() - 1 - g];
            if (psi(x, dy.states[g]) != ref) {
                bad[k] = static_cast<int>(g);
                return;
            }
        }
    });
    PathwiseReport rep;
    rep.runs = opt.seeds;
    rep.checks = opt.seeds * grid.size();
    for (std::size_t k = 0; k < opt.seeds; ++k)
        if (bad[k] >= 0) {
            rep.passed = false;
            rep.failing_seed = stream_seed(opt.master_seed, k);
            rep.failing_s = grid[static_cast<std::size_t>(bad[k])];
            std::ostringstream dump;
            write_events_csv(dump, m, sample_events(m, sampler, T, *rep.failing_seed));
            rep.counterexample = dump.str();
            break;
        }
    return rep;
}

// ---------------------------------------------------------------------------
// Contact-voter extinction identity

struct CovoIdentity {
    double q = 0.0;
    stats::MeanEstimate lhs;        // E^{1}[q^{<X_T, y>}]
    double rhs = 0.0;               // fraction of runs from y extinct by T
    stats::Interval rhs_ci;
    stats::MeanEstimate rhs_dual;   // E^{y}[q^{|Y_T|}], equal to lhs at every T
};

inline CovoIdentity covo_extinction_identity(double lambda, double gamma, std::span<const Site> y,
                                             models::LatticePtr lat, double horizon, std::size_t replicas,
                                             std::uint64_t seed, unsigned threads = 1) {
    require(lambda + gamma > 0.0, "lambda + gamma must be positive");
    const auto model = models::contact_voter(lat, lambda, gamma);
    const InstanceSampler sampler(model);
    const double q = gamma / (gamma + lambda);
    const std::size_t n = lat->size();
    std::vector<double> lhs(replicas), dual(replicas), extinct(replicas);
    auto qpow = [&](std::size_t k) { return k == 0 ? 1.0 : std::pow(q, static_cast<double>(k)); };
    parallel_for(replicas, threads, [&](std::size_t k) {
        {
            auto x = Configuration::ones(n);
            EventGenerator gen(sampler, stream_seed(seed, 2 * k), 0.0, horizon, false);
            Event e;
            while (gen.next(e)) apply_event(model, e, x);
            std::size_t overlap = 0;
            for (Site s : y) overlap += static_cast<std::size_t>(x[s]);
            lhs[k] = qpow(overlap);
        }
        {
            auto x = Configuration::indicator(n, y);
            std::size_t alive = x.count(1);
            EventGenerator gen(sampler, stream_seed(seed, 2 * k + 1), 0.0, horizon, false);
            Event e;
            while (alive > 0 && gen.next(e)) {
                const auto& mp = model.instances[e.instance].map;
                const Site w = mp.kind == MapKind::death ? mp.s[0] : mp.s[1];
                const auto before = static_cast<std::size_t>(x[w]);
                apply_event(model, e, x);
                alive = alive - before + static_cast<std::size_t>(x[w]);
            }
            extinct[k] = alive == 0 ? 1.0 : 0.0;
            dual[k] = qpow(alive);
        }
    });
    CovoIdentity out;
    out.q = q;
    out.lhs = stats::mean_se(lhs);
    out.rhs_dual = stats::mean_se(dual);
    std::size_t ext = 0;
    for (double v : extinct) ext += static_cast<std::size_t>(v);
    out.rhs = static_cast<double>(ext) / static_cast<double>(replicas);
    out.rhs_ci = stats::wilson(ext, replicas);
    return out;
}

}  // namespace ips
