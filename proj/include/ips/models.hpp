#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ips/error.hpp"
#include "ips/lattice.hpp"
#include "ips/maps.hpp"

namespace ips {

struct MapInstance {
    LocalMap map;
    double rate = 0.0;
};

// Direct-rate Potts/Glauber form: at rate 1 per dynamic site the site resamples its
// value from p(sigma) proportional to exp(beta * #{neighbours with value sigma}).
struct PottsRates {
    int q = 2;
    double beta = 0.0;
};

struct ModelSpec {
    std::string name;
    std::shared_ptr<const Lattice> lattice;
    Alphabet alphabet = Alphabet::binary;
    int q = 2;
    std::vector<MapInstance> instances;
    std::map<std::string, double> params;
    std::optional<PottsRates> potts;

    const Lattice& lat() const { return *lattice; }

    double total_rate() const {
        if (potts) return static_cast<double>(lattice->dynamic_count());
        double r = 0.0;
        for (const auto& inst : instances) r += inst.rate;
        return r;
    }

    double param(const std::string& key) const {
        auto it = params.find(key);
        if (it == params.end()) throw InvalidArgument("model parameter missing: " + key);
        return it->second;
    }

    // Adds an instance unless its rate is zero or every site it writes is pinned.
    void add(LocalMap m, double rate) {
        require(std::isfinite(rate) && rate >= 0.0, "rates must be finite and nonnegative");
        if (rate == 0.0) return;
        if (lattice->has_pinned()) {
            const auto dom = domain(m);
            if (std::all_of(dom.begin(), dom.end(), [&](Site s) { return lattice->pinned(s); })) return;
        }
        instances.push_back({std::move(m), rate});
    }

    Configuration filled(std::int8_t value) const {
        auto x = Configuration::filled(lattice->size(), value, alphabet, q);
        pin_boundary(*lattice, x);
        return x;
    }
};

namespace models {

using LatticePtr = std::shared_ptr<const Lattice>;

inline LatticePtr share(Lattice l) { return std::make_shared<const Lattice>(std::move(l)); }

namespace detail {

inline ModelSpec base(std::string name, LatticePtr lat, Alphabet a = Alphabet::binary) {
    ModelSpec m;
    m.name = std::move(name);
    m.lattice = std::move(lat);
    m.alphabet = a;
    return m;
}

// Calls f(i, j) for every ordered edge i -> j with i != j, in ascending (i, j) order.
template <class F>
void for_each_ordered_edge(const Lattice& lat, F&& f) {
    for (Site i = 0; i < lat.size(); ++i)
        for (Site j : lat.neighbors(i))
            if (j != i) f(i, j);
}

inline double nbhd_size(const Lattice& lat, Site i) { return static_cast<double>(lat.neighbors(i).size()); }

inline void require_nonneg(std::initializer_list<double> xs) {
    for (double x : xs) require(std::isfinite(x) && x >= 0.0, "model parameters must be nonnegative");
}

}  // namespace detail

inline ModelSpec contact(LatticePtr lat, double lambda, double delta = 1.0) {
    detail::require_nonneg({lambda, delta});
    auto m = detail::base("contact", lat);
    m.params = {{"lambda", lambda}, {"delta", delta}};
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::bra(i, j), lambda); });
    for (Site i = 0; i < lat->size(); ++i) m.add(maps::death(i), delta);
    return m;
}

// Contact process on a range-R ring or torus given by `lat` (all neighbours infect at rate lambda).
inline ModelSpec contact_range(LatticePtr lat, double lambda, double delta = 1.0) {
    auto m = contact(std::move(lat), lambda, delta);
    m.name = "contact_range";
    return m;
}

inline ModelSpec biased_voter(LatticePtr lat, double s) {
    detail::require_nonneg({s});
    auto m = detail::base(s == 0.0 ? "voter" : "biased_voter", lat);
    m.params = {{"s", s}};
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::vot(i, j), 1.0 / detail::nbhd_size(*lat, j)); });
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::bra(i, j), s / detail::nbhd_size(*lat, j)); });
    return m;
}

inline ModelSpec voter(LatticePtr lat) { return biased_voter(std::move(lat), 0.0); }

inline ModelSpec contact_voter(LatticePtr lat, double lambda, double gamma) {
    detail::require_nonneg({lambda, gamma});
    auto m = detail::base("contact_voter", lat);
    m.params = {{"lambda", lambda}, {"gamma", gamma}, {"delta", 1.0}};
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::bra(i, j), lambda); });
    for (Site i = 0; i < lat->size(); ++i) m.add(maps::death(i), 1.0);
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::vot(i, j), gamma); });
    return m;
}

// Rates of the threshold-map representation of Glauber dynamics; index k <-> level L = -N + 2k.
struct GlauberRates {
    std::vector<double> plus, minus;
};

inline GlauberRates ising_rates(int n, double beta) {
    GlauberRates r;
    auto th = [&](int level) { return std::tanh(beta * level / 2.0); };
    for (int level = -n; level <= n; level += 2) {
        r.plus.push_back(level == -n ? 1.0 + th(-n) : th(level) - th(level - 2));
        r.minus.push_back(level == n ? 1.0 - th(n) : th(level + 2) - th(level));
    }
    return r;
}

inline ModelSpec ising_glauber(LatticePtr lat, double beta) {
    detail::require_nonneg({beta});
    auto m = detail::base("ising_glauber", lat, Alphabet::spin);
    m.params = {{"beta", beta}};
    std::optional<std::size_t> n;
    for (Site i = 0; i < lat->size(); ++i) {
        if (lat->pinned(i)) continue;
        const auto nb = lat->neighbors(i);
        if (n && *n != nb.size()) throw InvalidArgument("ising_glauber needs a regular lattice");
        n = nb.size();
    }
    if (!n) return m;
    const int deg = static_cast<int>(*n);
    const auto r = ising_rates(deg, beta);
    for (Site i = 0; i < lat->size(); ++i) {
        if (lat->pinned(i)) continue;
        const auto nb = lat->neighbors(i);
        for (int k = 0; k <= deg; ++k) {
            const int level = -deg + 2 * k;
            m.add(maps::glauber_plus(i, level, nb), r.plus[static_cast<std::size_t>(k)]);
            m.add(maps::glauber_minus(i, level, nb), r.minus[static_cast<std::size_t>(k)]);
        }
    }
    return m;
}

inline ModelSpec potts_glauber(LatticePtr lat, int q, double beta) {
    require(q >= 2 && q <= 127, "potts needs 2 <= q <= 127");
    detail::require_nonneg({beta});
    auto m = detail::base("potts_glauber", lat, Alphabet::potts);
    m.q = q;
    m.params = {{"q", q}, {"beta", beta}};
    m.potts = PottsRates{q, beta};
    return m;
}

// Probability that a Potts update at site i picks each value (index sigma-1).
inline std::vector<double> potts_weights(const ModelSpec& m, const Configuration& x, Site i) {
    const auto& pr = *m.potts;
    std::vector<double> counts(static_cast<std::size_t>(pr.q), 0.0);
    for (Site j : m.lat().neighbors(i)) counts[static_cast<std::size_t>(x[j] - 1)] += 1.0;
    const double top = *std::max_element(counts.begin(), counts.end());
    double z = 0.0;
    for (auto& c : counts) z += (c = std::exp(pr.beta * (c - top)));
    for (auto& c : counts) c /= z;
    return counts;
}

// vot_{ji} at alpha/|N| plus rebel_{kji} over unordered neighbour pairs {j,k} at (1-alpha)/|N|^2.
inline ModelSpec neuhauser_pacala(LatticePtr lat, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
    auto m = detail::base("neuhauser_pacala", lat);
    m.params = {{"alpha", alpha}};
    for (Site i = 0; i < lat->size(); ++i) {
        const auto nb = lat->neighbors(i);
        const double n = static_cast<double>(nb.size());
        for (Site j : nb)
            if (j != i) m.add(maps::vot(j, i), alpha / n);
        for (std::size_t a = 0; a < nb.size(); ++a)
            for (std::size_t b = a + 1; b < nb.size(); ++b) {
                if (nb[a] == i || nb[b] == i) continue;
                m.add(maps::rebel(nb[b], nb[a], i), (1.0 - alpha) / (n * n));
            }
    }
    return m;
}

// m_{Delta,i} over every nonempty even subset Delta of N_i U {i}, each at rate 2^{1-|N_i|}.
inline ModelSpec threshold_voter(LatticePtr lat) {
    auto m = detail::base("threshold_voter", lat);
    for (Site i = 0; i < lat->size(); ++i) {
        std::vector<Site> pool(lat->neighbors(i).begin(), lat->neighbors(i).end());
        if (std::find(pool.begin(), pool.end(), i) == pool.end()) pool.push_back(i);
        std::sort(pool.begin(), pool.end());
        require(pool.size() <= 20, "threshold voter neighbourhood too large");
        const double rate = std::ldexp(1.0, 1 - static_cast<int>(lat->neighbors(i).size()));
        for (std::uint32_t mask = 1; mask < (1U << pool.size()); ++mask) {
            if (std::popcount(mask) % 2 != 0) continue;
            std::vector<Site> subset;
            for (std::size_t a = 0; a < pool.size(); ++a)
                if ((mask >> a) & 1U) subset.push_back(pool[a]);
            m.add(maps::threshold(i, subset), rate);
        }
    }
    return m;
}

inline ModelSpec coalescing_rw(LatticePtr lat) {
    auto m = detail::base("coalescing_rw", lat);
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::rw(i, j), 1.0 / detail::nbhd_size(*lat, i)); });
    return m;
}

inline ModelSpec annihilating_rw(LatticePtr lat) {
    auto m = detail::base("annihilating_rw", lat);
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::ann(i, j), 1.0 / detail::nbhd_size(*lat, i)); });
    return m;
}

inline ModelSpec exclusion(LatticePtr lat) {
    auto m = detail::base("exclusion", lat);
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::excl(i, j), 1.0 / detail::nbhd_size(*lat, i)); });
    return m;
}

// Annihilating branching (bran at lambda per ordered edge) with deaths at delta.
inline ModelSpec annihilating_branching(LatticePtr lat, double lambda, double delta = 1.0) {
    detail::require_nonneg({lambda, delta});
    auto m = detail::base("annihilating_branching", lat);
    m.params = {{"lambda", lambda}, {"delta", delta}};
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::bran(i, j), lambda); });
    for (Site i = 0; i < lat->size(); ++i) m.add(maps::death(i), delta);
    return m;
}

namespace detail {
inline void add_coop(ModelSpec& m, const Lattice& lat, double b) {
    for (Site k = 0; k < lat.size(); ++k) {
        const auto nb = lat.neighbors(k);
        const double n = static_cast<double>(nb.size());
        for (Site i : nb)
            for (Site j : nb)
                if (i != k && j != k) m.add(maps::coop(i, j, k), b / (n * n));
    }
}
}  // namespace detail

inline ModelSpec coop_death(LatticePtr lat, double b) {
    detail::require_nonneg({b});
    auto m = detail::base("coop_death", lat);
    m.params = {{"b", b}};
    detail::add_coop(m, *lat, b);
    for (Site i = 0; i < lat->size(); ++i) m.add(maps::death(i), 1.0);
    return m;
}

inline ModelSpec coop_rw(LatticePtr lat, double b) {
    detail::require_nonneg({b});
    auto m = detail::base("coop_rw", lat);
    m.params = {{"b", b}};
    detail::add_coop(m, *lat, b);
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::rw(i, j), 1.0 / detail::nbhd_size(*lat, i)); });
    return m;
}

// lambda * sum bra_{ij} + sum kill_{ij} over ordered nearest-neighbour edges.
inline ModelSpec babp(LatticePtr lat, double lambda) {
    detail::require_nonneg({lambda});
    auto m = detail::base("babp", lat);
    m.params = {{"lambda", lambda}};
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::bra(i, j), lambda); });
    detail::for_each_ordered_edge(*lat, [&](Site i, Site j) { m.add(maps::kill(i, j), 1.0); });
    return m;
}

namespace detail {
inline void require_ring(const Lattice& lat) {
    require(lat.kind() == LatticeKind::ring || (lat.kind() == LatticeKind::torus && lat.dim() == 1),
            "one-dimensional ring required");
}
inline Site wrap(const Lattice& lat, Site i, int delta) { return lat.shift(i, 0, delta); }
}  // namespace detail

// Contact process with double deaths on a ring: lambda bra_{i,i+-1} + death_{i,i+1}.
inline ModelSpec contact_double_death(LatticePtr lat, double lambda) {
    detail::require_nonneg({lambda});
    detail::require_ring(*lat);
    auto m = detail::base("contact_double_death", lat);
    m.params = {{"lambda", lambda}};
    for (Site i = 0; i < lat->size(); ++i)
        for (int sigma : {-1, 1}) m.add(maps::bra(i, detail::wrap(*lat, i, sigma)), lambda);
    for (Site i = 0; i < lat->size(); ++i) m.add(maps::death2(i, detail::wrap(*lat, i, 1)), 1.0);
    return m;
}

// One-dimensional cooperative branching: lambda coop_{i,i+s,i+2s} + death_i.
inline ModelSpec coop_branching_1d(LatticePtr lat, double lambda) {
    detail::require_nonneg({lambda});
    detail::require_ring(*lat);
    auto m = detail::base("coop_branching_1d", lat);
    m.params = {{"lambda", lambda}};
    for (Site i = 0; i < lat->size(); ++i)
        for (int sigma : {-1, 1})
            m.add(maps::coop(i, detail::wrap(*lat, i, sigma), detail::wrap(*lat, i, 2 * sigma)), lambda);
    for (Site i = 0; i < lat->size(); ++i) m.add(maps::death(i), 1.0);
    return m;
}

struct SummabilityConstants {
    double k0 = 0.0;  // total rate of maps writing a site
    double k = 0.0;   // growth rate of relevance sets
    double k1 = 0.0;  // total rate weighted by relevance-set size
};

// Suprema over sites of the per-site sums; equal to the single-site value on a torus.
inline SummabilityConstants summability_constants(const ModelSpec& m) {
    if (m.potts) throw Unsupported("summability constants need a map-family model");
    const std::size_t n = m.lat().size();
    std::vector<double> k0(n, 0.0), k(n, 0.0), k1(n, 0.0);
    for (const auto& inst : m.instances)
        for (Site i : domain(inst.map)) {
            const double rel = static_cast<double>(relevance(inst.map, i).size());
            k0[i] += inst.rate;
            k[i] += inst.rate * (rel - 1.0);
            k1[i] += inst.rate * rel;
        }
    SummabilityConstants c{-HUGE_VAL, -HUGE_VAL, -HUGE_VAL};
    for (Site i = 0; i < n; ++i) {
        if (m.lat().pinned(i)) continue;
        c.k0 = std::max(c.k0, k0[i]);
        c.k = std::max(c.k, k[i]);
        c.k1 = std::max(c.k1, k1[i]);
    }
    return c;
}

// Total rate of instances writing site i at configuration x that would set it to `value`.
inline double flip_rate(const ModelSpec& m, const Configuration& x, Site i, int value) {
    if (m.potts) {
        if (x[i] == value) return 0.0;
        return potts_weights(m, x, i)[static_cast<std::size_t>(value - 1)];
    }
    double rate = 0.0;
    for (const auto& inst : m.instances) {
        const auto dom = domain(inst.map);
        if (std::find(dom.begin(), dom.end(), i) == dom.end()) continue;
        int out = x[i];
        apply_map(
            inst.map, [&](Site s) { return static_cast<int>(x[s]); },
            [&](Site s, int v) {
                if (s == i) out = v;
            });
        if (out != x[i] && out == value) rate += inst.rate;
    }
    return rate;
}

}  // namespace models
}  // namespace ips
