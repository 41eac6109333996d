#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ips/error.hpp"
#include "ips/lattice.hpp"

namespace ips {

enum class MapKind : std::uint8_t {
    vot,
    bra,
    death,
    death2,
    rw,
    ann,
    excl,
    coop,
    kill,
    bran,
    rebel,
    glauber_plus,
    glauber_minus,
    threshold,
    linear_or,   // additive map given by its arrow matrix
    linear_xor,  // cancellative map given by its arrow matrix
};

inline const char* kind_name(MapKind k) {
    static const char* names[] = {"vot",  "bra",  "death", "death2", "rw",           "ann",
                                  "excl", "coop", "kill",  "bran",   "rebel",        "glauber_plus",
                                  "glauber_minus", "threshold", "linear_or", "linear_xor"};
    return names[static_cast<int>(k)];
}

// A local map instance. Site roles follow the catalog: (i, j) for pair maps, (i, j, k)
// for coop/rebel, i alone for death/glauber/threshold. `sites` carries the
// neighbourhood (glauber), the parity subset (threshold) or the support (linear maps),
// and `image[a]` is the bitmask over `sites` of m(1_{sites[a]}) for linear maps.
struct LocalMap {
    MapKind kind = MapKind::death;
    std::array<Site, 3> s{};
    int level = 0;
    std::vector<Site> sites;
    std::vector<std::uint32_t> image;

    bool operator==(const LocalMap&) const = default;

    std::string str() const {
        std::string out = kind_name(kind);
        out += "(";
        auto add = [&](std::string t) { out += (out.back() == '(' ? "" : ",") + t; };
        switch (arity()) {
            case 1: add(std::to_string(s[0])); break;
            case 2: add(std::to_string(s[0])); add(std::to_string(s[1])); break;
            case 3: for (int a = 0; a < 3; ++a) add(std::to_string(s[static_cast<std::size_t>(a)])); break;
            default: break;
        }
        if (kind == MapKind::glauber_plus || kind == MapKind::glauber_minus) add("L=" + std::to_string(level));
        if (!sites.empty() && kind != MapKind::glauber_plus && kind != MapKind::glauber_minus) {
            std::string set = "{";
            for (std::size_t a = 0; a < sites.size(); ++a) set += (a ? " " : "") + std::to_string(sites[a]);
            add(set + "}");
        }
        return out + ")";
    }

    int arity() const {
        switch (kind) {
            case MapKind::death:
            case MapKind::glauber_plus:
            case MapKind::glauber_minus:
            case MapKind::threshold: return 1;
            case MapKind::coop:
            case MapKind::rebel: return 3;
            case MapKind::linear_or:
            case MapKind::linear_xor: return 0;
            default: return 2;
        }
    }
};

namespace maps {

inline LocalMap pair(MapKind k, Site i, Site j) {
    require(i != j, std::string(kind_name(k)) + ": sites must differ");
    LocalMap m;
    m.kind = k;
    m.s = {i, j, 0};
    return m;
}
inline LocalMap vot(Site i, Site j) { return pair(MapKind::vot, i, j); }
inline LocalMap bra(Site i, Site j) { return pair(MapKind::bra, i, j); }
inline LocalMap death2(Site i, Site j) { return pair(MapKind::death2, i, j); }
inline LocalMap rw(Site i, Site j) { return pair(MapKind::rw, i, j); }
inline LocalMap ann(Site i, Site j) { return pair(MapKind::ann, i, j); }
inline LocalMap excl(Site i, Site j) { return pair(MapKind::excl, i, j); }
inline LocalMap kill(Site i, Site j) { return pair(MapKind::kill, i, j); }
inline LocalMap bran(Site i, Site j) { return pair(MapKind::bran, i, j); }

inline LocalMap death(Site i) {
    LocalMap m;
    m.kind = MapKind::death;
    m.s = {i, 0, 0};
    return m;
}

inline LocalMap triple(MapKind k, Site i, Site j, Site l) {
    require(i != l && j != l, std::string(kind_name(k)) + ": target must differ from sources");
    LocalMap m;
    m.kind = k;
    m.s = {i, j, l};
    return m;
}
// coop allows i == j (a single parent then suffices).
inline LocalMap coop(Site i, Site j, Site k) { return triple(MapKind::coop, i, j, k); }
inline LocalMap rebel(Site i, Site j, Site k) {
    require(i != j, "rebel: sources must differ");
    return triple(MapKind::rebel, i, j, k);
}

inline LocalMap glauber(bool plus, Site i, int level, std::span<const Site> nbrs) {
    const int n = static_cast<int>(nbrs.size());
    require(level >= -n && level <= n && (level + n) % 2 == 0, "glauber level must lie in {-N,-N+2,...,N}");
    require(std::find(nbrs.begin(), nbrs.end(), i) == nbrs.end(), "glauber neighbourhood must exclude the site");
    LocalMap m;
    m.kind = plus ? MapKind::glauber_plus : MapKind::glauber_minus;
    m.s = {i, 0, 0};
    m.level = level;
    m.sites.assign(nbrs.begin(), nbrs.end());
    return m;
}
inline LocalMap glauber_plus(Site i, int level, std::span<const Site> nbrs) { return glauber(true, i, level, nbrs); }
inline LocalMap glauber_minus(Site i, int level, std::span<const Site> nbrs) { return glauber(false, i, level, nbrs); }

inline LocalMap threshold(Site i, std::vector<Site> subset) {
    std::sort(subset.begin(), subset.end());
    require(std::adjacent_find(subset.begin(), subset.end()) == subset.end(), "threshold subset has duplicates");
    require(subset.size() % 2 == 0, "threshold subset must have even size");
    LocalMap m;
    m.kind = MapKind::threshold;
    m.s = {i, 0, 0};
    m.sites = std::move(subset);
    return m;
}

// Linear map over `support`: new value at support[b] is the OR (or XOR) of x(support[a])
// over all a whose image has bit b set.
inline LocalMap linear(bool xor_mode, std::vector<Site> support, std::vector<std::uint32_t> image) {
    require(support.size() == image.size() && support.size() <= 32, "linear map: bad support");
    LocalMap m;
    m.kind = xor_mode ? MapKind::linear_xor : MapKind::linear_or;
    m.sites = std::move(support);
    m.image = std::move(image);
    return m;
}

}  // namespace maps

// Sites the map may write.
inline std::vector<Site> domain(const LocalMap& m) {
    switch (m.kind) {
        case MapKind::vot:
        case MapKind::bra:
        case MapKind::kill:
        case MapKind::bran: return {m.s[1]};
        case MapKind::death:
        case MapKind::glauber_plus:
        case MapKind::glauber_minus:
        case MapKind::threshold: return {m.s[0]};
        case MapKind::death2:
        case MapKind::rw:
        case MapKind::ann:
        case MapKind::excl: return {std::min(m.s[0], m.s[1]), std::max(m.s[0], m.s[1])};
        case MapKind::coop:
        case MapKind::rebel: return {m.s[2]};
        case MapKind::linear_or:
        case MapKind::linear_xor: {
            std::vector<Site> d;
            for (std::size_t b = 0; b < m.sites.size(); ++b) {
                std::uint32_t column = 0;
                for (std::size_t a = 0; a < m.sites.size(); ++a)
                    if ((m.image[a] >> b) & 1U) column |= 1U << a;
                if (column != (1U << b)) d.push_back(m.sites[b]);
            }
            std::sort(d.begin(), d.end());
            return d;
        }
    }
    return {};
}

// Every site the map reads or writes, ascending.
inline std::vector<Site> support(const LocalMap& m) {
    std::vector<Site> out;
    switch (m.kind) {
        case MapKind::death: out = {m.s[0]}; break;
        case MapKind::coop:
        case MapKind::rebel: out = {m.s[0], m.s[1], m.s[2]}; break;
        case MapKind::glauber_plus:
        case MapKind::glauber_minus:
        case MapKind::threshold:
            out = m.sites;
            out.push_back(m.s[0]);
            break;
        case MapKind::linear_or:
        case MapKind::linear_xor: out = m.sites; break;
        default: out = {m.s[0], m.s[1]}; break;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline bool alphabet_compatible(const LocalMap& m, Alphabet a) {
    if (m.kind == MapKind::glauber_plus || m.kind == MapKind::glauber_minus) return a == Alphabet::spin;
    return a == Alphabet::binary;
}

// Applies m reading through get(site) and writing through set(site, value). All reads
// happen before any write.
template <class Get, class Set>
inline void apply_map(const LocalMap& m, Get&& get, Set&& set) {
    const Site i = m.s[0], j = m.s[1], k = m.s[2];
    switch (m.kind) {
        case MapKind::vot: set(j, get(i)); return;
        case MapKind::bra: set(j, get(i) | get(j)); return;
        case MapKind::death: set(i, 0); return;
        case MapKind::death2:
            set(i, 0);
            set(j, 0);
            return;
        case MapKind::rw: {
            const int a = get(i), b = get(j);
            set(i, 0);
            set(j, a | b);
            return;
        }
        case MapKind::ann: {
            const int a = get(i), b = get(j);
            set(i, 0);
            set(j, a ^ b);
            return;
        }
        case MapKind::excl: {
            const int a = get(i), b = get(j);
            set(i, b);
            set(j, a);
            return;
        }
        case MapKind::coop:
            if (get(i) && get(j)) set(k, 1);
            return;
        case MapKind::kill:
            if (get(i) && get(j)) set(j, 0);
            return;
        case MapKind::bran: set(j, get(i) ^ get(j)); return;
        case MapKind::rebel: set(k, get(i) ^ get(j) ^ get(k)); return;
        case MapKind::glauber_plus:
        case MapKind::glauber_minus: {
            int field = 0;
            for (Site n : m.sites) field += get(n);
            if (m.kind == MapKind::glauber_plus ? field >= m.level : field <= m.level)
                set(i, m.kind == MapKind::glauber_plus ? 1 : -1);
            return;
        }
        case MapKind::threshold: {
            int v = get(i);
            for (Site n : m.sites) v ^= get(n);
            set(i, v);
            return;
        }
        case MapKind::linear_or:
        case MapKind::linear_xor: {
            const std::size_t n = m.sites.size();
            std::uint32_t ones = 0;
            for (std::size_t a = 0; a < n; ++a)
                if (get(m.sites[a])) ones |= 1U << a;
            std::uint32_t out = 0;
            for (std::size_t a = 0; a < n; ++a)
                if ((ones >> a) & 1U) out = m.kind == MapKind::linear_or ? (out | m.image[a]) : (out ^ m.image[a]);
            for (std::size_t b = 0; b < n; ++b) set(m.sites[b], static_cast<int>((out >> b) & 1U));
            return;
        }
    }
}

// Applies m to a copy of x. Pinned sites of `lattice` (if given) are never written.
inline Configuration apply(const LocalMap& m, Configuration x, const Lattice* lattice = nullptr) {
    if (!alphabet_compatible(m, x.alphabet)) throw InvalidArgument(std::string("alphabet mismatch for ") + m.str());
    for (Site s : support(m))
        if (s >= x.size()) throw InvalidArgument("map site outside configuration");
    auto& st = x.state;
    const std::vector<std::uint8_t>* pin = (lattice && lattice->has_pinned()) ? &lattice->pinned_mask() : nullptr;
    apply_map(
        m, [&](Site s) { return static_cast<int>(st[s]); },
        [&](Site s, int v) {
            if (!pin || !(*pin)[s]) st[s] = static_cast<std::int8_t>(v);
        });
    return x;
}

// ---------------------------------------------------------------------------
// Brute force over the support

namespace detail {

// Evaluates m on the local configuration encoded by `bits` over `sup` (bit a <-> sup[a]);
// returns the output bits. Spin maps use bit 1 <-> +1, bit 0 <-> -1.
inline std::uint32_t eval_local(const LocalMap& m, const std::vector<Site>& sup, std::uint32_t bits) {
    const bool spin = m.kind == MapKind::glauber_plus || m.kind == MapKind::glauber_minus;
    auto pos = [&](Site s) {
        return static_cast<std::size_t>(std::lower_bound(sup.begin(), sup.end(), s) - sup.begin());
    };
    std::uint32_t out = bits;
    apply_map(
        m,
        [&](Site s) {
            const int b = static_cast<int>((bits >> pos(s)) & 1U);
            return spin ? 2 * b - 1 : b;
        },
        [&](Site s, int v) {
            const std::uint32_t mask = 1U << pos(s);
            const bool one = spin ? v > 0 : v != 0;
            out = one ? (out | mask) : (out & ~mask);
        });
    return out;
}

inline void check_enumerable(const std::vector<Site>& sup) {
    if (sup.size() > 20) throw Unsupported("map support too large for exhaustive enumeration");
}

}  // namespace detail

inline std::vector<Site> relevance_bruteforce(const LocalMap& m, Site i) {
    const auto dom = domain(m);
    if (std::find(dom.begin(), dom.end(), i) == dom.end()) return {i};
    const auto sup = support(m);
    detail::check_enumerable(sup);
    const auto ipos = static_cast<std::size_t>(std::lower_bound(sup.begin(), sup.end(), i) - sup.begin());
    std::vector<Site> rel;
    const std::uint32_t total = 1U << sup.size();
    for (std::size_t a = 0; a < sup.size(); ++a) {
        for (std::uint32_t x = 0; x < total; ++x) {
            if ((x >> a) & 1U) continue;
            const auto y0 = detail::eval_local(m, sup, x);
            const auto y1 = detail::eval_local(m, sup, x | (1U << a));
            if (((y0 ^ y1) >> ipos) & 1U) {
                rel.push_back(sup[a]);
                break;
            }
        }
    }
    return rel;
}

// Closed-form relevance sets for catalog maps; linear maps fall back to brute force.
inline std::vector<Site> relevance(const LocalMap& m, Site i) {
    const auto dom = domain(m);
    if (std::find(dom.begin(), dom.end(), i) == dom.end()) return {i};
    auto sorted = [](std::vector<Site> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    const Site a = m.s[0], b = m.s[1], c = m.s[2];
    switch (m.kind) {
        case MapKind::vot: return {a};
        case MapKind::bra:
        case MapKind::kill:
        case MapKind::bran: return sorted({a, b});
        case MapKind::death:
        case MapKind::death2: return {};
        case MapKind::rw:
        case MapKind::ann: return i == a ? std::vector<Site>{} : sorted({a, b});
        case MapKind::excl: return {i == a ? b : a};
        case MapKind::coop: {
            auto v = sorted({a, b, c});
            v.erase(std::unique(v.begin(), v.end()), v.end());
            return v;
        }
        case MapKind::rebel: return sorted({a, b, c});
        case MapKind::glauber_plus:
        case MapKind::glauber_minus: {
            const int n = static_cast<int>(m.sites.size());
            if ((m.kind == MapKind::glauber_plus && m.level == -n) || (m.kind == MapKind::glauber_minus && m.level == n))
                return {};
            auto v = m.sites;
            v.push_back(a);
            return sorted(v);
        }
        case MapKind::threshold: {
            if (std::binary_search(m.sites.begin(), m.sites.end(), a)) {
                std::vector<Site> v;
                for (Site s : m.sites)
                    if (s != a) v.push_back(s);
                return v;
            }
            auto v = m.sites;
            v.push_back(a);
            return sorted(v);
        }
        case MapKind::linear_or:
        case MapKind::linear_xor: return relevance_bruteforce(m, i);
    }
    return {};
}

struct MapClass {
    bool monotone = false;
    bool additive = false;
    bool cancellative = false;
    bool operator==(const MapClass&) const = default;
};

// Structural flags by exhaustion over the support. Additivity is checked through the
// equivalent finite criterion m(x) = OR_{a in x} m(1_a) with m(0) = 0 (XOR for
// cancellativity); monotonicity through all covering pairs x < x + e_a.
inline MapClass classify(const LocalMap& m) {
    const auto sup = support(m);
    detail::check_enumerable(sup);
    const std::uint32_t total = 1U << sup.size();
    std::vector<std::uint32_t> img(total);
    for (std::uint32_t x = 0; x < total; ++x) img[x] = detail::eval_local(m, sup, x);

    MapClass c{true, img[0] == 0, img[0] == 0};
    for (std::uint32_t x = 0; x < total; ++x) {
        std::uint32_t orv = 0, xorv = 0;
        for (std::size_t a = 0; a < sup.size(); ++a)
            if ((x >> a) & 1U) {
                orv |= img[1U << a];
                xorv ^= img[1U << a];
                const std::uint32_t lower = x & ~(1U << a);
                if ((img[lower] & ~img[x]) != 0) c.monotone = false;
            }
        if (img[x] != orv) c.additive = false;
        if (img[x] != xorv) c.cancellative = false;
    }
    return c;
}

// Arrow matrix of a binary map over its support: row a is m(1_{sup[a]}) as a bitmask.
// Meaningful for additive or cancellative maps (arrows i->j for off-diagonal bits,
// a block at i when the diagonal bit is 0).
struct ArrowMatrix {
    std::vector<Site> support;
    std::vector<std::uint32_t> rows;
};

inline ArrowMatrix arrow_matrix(const LocalMap& m) {
    ArrowMatrix am;
    am.support = support(m);
    detail::check_enumerable(am.support);
    for (std::size_t a = 0; a < am.support.size(); ++a) am.rows.push_back(detail::eval_local(m, am.support, 1U << a));
    return am;
}

}  // namespace ips
