#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ips/error.hpp"
#include "ips/graphical.hpp"
#include "ips/lattice.hpp"
#include "ips/models.hpp"
#include "ips/parallel.hpp"
#include "ips/rng.hpp"
#include "ips/stats.hpp"

namespace ips::percolation {

// ---------------------------------------------------------------------------
// Oriented bond fields on the box {0..side-1}^d. The bond (i, i + e_a) is stored at
// i * d + a; it exists when coordinate a of i is below side - 1.

class BondField {
public:
    BondField() = default;
    BondField(std::size_t d, std::size_t side) : d_(d), side_(side) {
        require(d >= 1 && side >= 1, "bond field needs d >= 1 and side >= 1");
        double total = std::pow(static_cast<double>(side), static_cast<double>(d));
        require(total < 4e9, "box too large");
        sites_ = static_cast<std::size_t>(std::llround(total));
        stride_.assign(d, 1);
        for (std::size_t a = d; a-- > 1;) stride_[a - 1] = stride_[a] * side;
        open_.assign(sites_ * d, 0);
    }

    std::size_t dim() const { return d_; }
    std::size_t side() const { return side_; }
    std::size_t sites() const { return sites_; }
    double p = 0.0;
    std::uint64_t seed = 0;

    std::size_t coord(std::size_t site, std::size_t axis) const { return site / stride_[axis] % side_; }
    std::vector<std::size_t> coords(std::size_t site) const {
        std::vector<std::size_t> c(d_);
        for (std::size_t a = 0; a < d_; ++a) c[a] = coord(site, a);
        return c;
    }
    std::size_t index(std::span<const std::size_t> c) const {
        std::size_t s = 0;
        for (std::size_t a = 0; a < d_; ++a) s += c[a] * stride_[a];
        return s;
    }
    std::size_t level(std::size_t site) const {
        std::size_t l = 0;
        for (std::size_t a = 0; a < d_; ++a) l += coord(site, a);
        return l;
    }
    std::size_t max_level() const { return d_ * (side_ - 1); }

    bool exists(std::size_t site, std::size_t axis) const { return coord(site, axis) + 1 < side_; }
    std::size_t step(std::size_t site, std::size_t axis) const { return site + stride_[axis]; }
    bool open(std::size_t site, std::size_t axis) const { return open_[site * d_ + axis] != 0; }
    void set(std::size_t site, std::size_t axis, bool v) {
        require(exists(site, axis), "bond leaves the box");
        open_[site * d_ + axis] = v ? 1 : 0;
    }

    std::size_t bond_count() const {
        std::size_t n = 0;
        for (std::size_t s = 0; s < sites_; ++s)
            for (std::size_t a = 0; a < d_; ++a) n += exists(s, a) ? 1 : 0;
        return n;
    }
    std::size_t open_count() const {
        std::size_t n = 0;
        for (auto v : open_) n += v;
        return n;
    }

private:
    std::size_t d_ = 0, side_ = 0, sites_ = 0;
    std::vector<std::size_t> stride_;
    std::vector<std::uint8_t> open_;
};

// Each bond carries a uniform u and is open iff u < p, so fields with the same seed are
// coupled monotonically in p.
inline BondField sample_bond_field(std::size_t d, std::size_t side, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p must lie in [0,1]");
    BondField f(d, side);
    f.p = p;
    f.seed = seed;
    Rng rng(seed);
    for (std::size_t s = 0; s < f.sites(); ++s)
        for (std::size_t a = 0; a < d; ++a)
            if (f.exists(s, a)) f.set(s, a, rng.uniform() < p);
    return f;
}

// Sites reachable from `origin` along open upward bonds (breadth first), sorted.
inline std::vector<std::size_t> reachable(const BondField& f, std::size_t origin = 0) {
    require(origin < f.sites(), "origin outside the box");
    std::vector<std::uint8_t> seen(f.sites(), 0);
    std::vector<std::size_t> queue{origin};
    seen[origin] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const auto s = queue[head];
        for (std::size_t a = 0; a < f.dim(); ++a)
            if (f.exists(s, a) && f.open(s, a) && !seen[f.step(s, a)]) {
                seen[f.step(s, a)] = 1;
                queue.push_back(f.step(s, a));
            }
    }
    std::sort(queue.begin(), queue.end());
    return queue;
}

// Whether the cluster of the origin reaches l1-height n; breadth first, level by level.
inline bool survives_to_level(const BondField& f, std::size_t n) {
    require(n <= f.max_level(), "box does not contain the requested level");
    if (n == 0) return true;
    std::vector<std::uint8_t> mark(f.sites(), 0);
    std::vector<std::size_t> front{0}, next;
    for (std::size_t l = 0; l < n; ++l) {
        next.clear();
        for (auto s : front)
            for (std::size_t a = 0; a < f.dim(); ++a)
                if (f.exists(s, a) && f.open(s, a)) {
                    const auto t = f.step(s, a);
                    if (!mark[t]) {
                        mark[t] = 1;
                        next.push_back(t);
                    }
                }
        if (next.empty()) return false;
        std::swap(front, next);
    }
    return true;
}

// Independent criterion: depth-first search for a single open path from the origin to
// height n.
inline bool open_path_exists(const BondField& f, std::size_t n) {
    require(n <= f.max_level(), "box does not contain the requested level");
    std::vector<std::uint8_t> dead(f.sites(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};  // site, next axis to try
    while (!stack.empty()) {
        auto& [s, a] = stack.back();
        if (f.level(s) == n) return true;
        if (a == f.dim()) {
            dead[s] = 1;
            stack.pop_back();
            continue;
        }
        const auto axis = a++;
        if (f.exists(s, axis) && f.open(s, axis) && !dead[f.step(s, axis)]) stack.emplace_back(f.step(s, axis), 0);
    }
    return false;
}

// Number of open upward paths of length n from the origin (dynamic programming by level).
inline double count_open_paths(const BondField& f, std::size_t n) {
    require(n <= f.max_level(), "box does not contain the requested level");
    std::vector<double> count(f.sites(), 0.0);
    count[0] = 1.0;
    // Sites are visited in index order, which refines the level order for upward steps.
    double total = 0.0;
    for (std::size_t s = 0; s < f.sites(); ++s) {
        if (count[s] == 0.0) continue;
        const auto l = f.level(s);
        if (l == n) {
            total += count[s];
            continue;
        }
        for (std::size_t a = 0; a < f.dim(); ++a)
            if (f.exists(s, a) && f.open(s, a)) count[f.step(s, a)] += count[s];
    }
    return total;
}

// Enumerates all d^n direction words and counts those tracing an open path.
inline std::uint64_t count_open_paths_exhaustive(const BondField& f, std::size_t n) {
    require(n <= f.side() - 1, "exhaustive enumeration needs every word to stay in the box");
    const auto d = f.dim();
    const double words = std::pow(static_cast<double>(d), static_cast<double>(n));
    require(words <= 1e8, "too many words to enumerate");
    std::uint64_t hits = 0;
    std::vector<std::size_t> word(n, 0);
    for (std::uint64_t w = 0; w < static_cast<std::uint64_t>(words); ++w) {
        std::uint64_t v = w;
        std::size_t s = 0;
        bool ok = true;
        for (std::size_t k = 0; k < n && ok; ++k) {
            const auto a = static_cast<std::size_t>(v % d);
            v /= d;
            ok = f.exists(s, a) && f.open(s, a);
            s = ok ? f.step(s, a) : s;
        }
        hits += ok ? 1 : 0;
    }
    return hits;
}

struct ThetaEstimate {
    double p = 0.0;
    std::size_t n = 0;
    std::size_t replicas = 0;
    std::size_t survived = 0;
    double theta = 0.0;
    stats::Interval ci;
};

// Fraction of fields on {0..n}^d whose origin cluster reaches height n. Replica k uses the
// bond uniforms of stream k, so estimates are coupled across p.
inline ThetaEstimate percolation_theta(std::size_t d, double p, std::size_t n, std::size_t replicas,
                                       std::uint64_t seed, unsigned threads = 1) {
    require(n >= 1 && replicas >= 1, "n and replicas must be positive");
    std::vector<std::uint8_t> ok(replicas, 0);
    parallel_for(replicas, threads, [&](std::size_t k) {
        const auto f = sample_bond_field(d, n + 1, p, stream_seed(seed, k));
        ok[k] = survives_to_level(f, n) ? 1 : 0;
    });
    ThetaEstimate e;
    e.p = p;
    e.n = n;
    e.replicas = replicas;
    for (auto v : ok) e.survived += v;
    e.theta = static_cast<double>(e.survived) / static_cast<double>(replicas);
    e.ci = stats::wilson(e.survived, replicas);
    return e;
}

inline void write_bond_field_csv(std::ostream& out, const BondField& f) {
    out << "i1,i2,direction,open\n";
    require(f.dim() == 2, "bond dump is two-dimensional");
    for (std::size_t s = 0; s < f.sites(); ++s)
        for (std::size_t a = 0; a < 2; ++a)
            if (f.exists(s, a))
                out << f.coord(s, 0) << "," << f.coord(s, 1) << "," << a + 1 << "," << (f.open(s, a) ? 1 : 0) << "\n";
}

// ---------------------------------------------------------------------------
// Peierls contour series sum_{n >= 2m} n 3^n (1-p)^{n/2}

inline double peierls_ratio(double p) { return 3.0 * std::sqrt(1.0 - p); }

// Closed form sum_{n>=N} n r^n = r^N (N - (N-1) r) / (1-r)^2; +inf when p <= 8/9.
inline double peierls_bound(double p, std::size_t m) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p must lie in [0,1]");
    require(m >= 1, "m must be positive");
    if (9.0 * p <= 8.0) return std::numeric_limits<double>::infinity();
    const double r = peierls_ratio(p);
    if (r == 0.0) return 0.0;
    const double big_n = 2.0 * static_cast<double>(m);
    return std::pow(r, big_n) * (big_n - (big_n - 1.0) * r) / ((1.0 - r) * (1.0 - r));
}

struct SeriesSum {
    double value = 0.0;
    bool converged = false;
    std::size_t terms = 0;
};

// Term-by-term summation; reports divergence (value +inf) when the terms fail to become
// negligible within max_terms.
inline SeriesSum peierls_direct(double p, std::size_t m, std::size_t max_terms = 10'000'000) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p must lie in [0,1]");
    const double r = peierls_ratio(p);
    SeriesSum s;
    double sum = 0.0, comp = 0.0;
    double logr = std::log(r);
    for (std::size_t n = 2 * m; s.terms < max_terms; ++n, ++s.terms) {
        const double term = r == 0.0 ? 0.0 : static_cast<double>(n) * std::exp(static_cast<double>(n) * logr);
        // Kahan summation keeps the direct sum within rounding of the closed form.
        const double y = term - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        const bool decreasing = r * static_cast<double>(n + 1) < static_cast<double>(n);
        if (decreasing && term <= 1e-18 * sum) {
            s.converged = true;
            break;
        }
        if (r == 0.0) {
            s.converged = true;
            break;
        }
        if (!std::isfinite(sum)) break;
    }
    s.value = s.converged ? sum : std::numeric_limits<double>::infinity();
    return s;
}

// Smallest m whose bound falls below one, if any up to m_max.
inline std::optional<std::size_t> peierls_certificate(double p, std::size_t m_max = 1000) {
    for (std::size_t m = 1; m <= m_max; ++m)
        if (peierls_bound(p, m) < 1.0) return m;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Dependent Bernoulli fields in window form: chi_n = g_n(v_{sn}, ..., v_{sn+w-1}) with
// s = stride, w = width and independent categorical variables v_k.

struct WindowField {
    std::string name;
    std::size_t width = 1, stride = 1;
    std::vector<std::vector<double>> laws;          // v_k ~ laws[k % laws.size()]
    std::vector<std::vector<std::uint8_t>> tables;  // chi_n = tables[n % tables.size()][window], row-major

    const std::vector<double>& law(std::size_t k) const { return laws[k % laws.size()]; }
    const std::vector<std::uint8_t>& table(std::size_t n) const { return tables[n % tables.size()]; }

    std::vector<std::size_t> window_sizes(std::size_t n) const {
        std::vector<std::size_t> a(width);
        for (std::size_t j = 0; j < width; ++j) a[j] = law(n * stride + j).size();
        return a;
    }

    void validate() const {
        require(width >= 1 && stride >= 1 && stride <= width, "window field needs 1 <= stride <= width");
        require(!laws.empty() && !tables.empty(), "window field needs laws and tables");
        for (const auto& l : laws) {
            double s = 0.0;
            for (double v : l) {
                require(v >= 0.0, "negative probability");
                s += v;
            }
            require(std::abs(s - 1.0) < 1e-12, "law does not sum to one");
        }
        const std::size_t period = std::lcm(tables.size(), laws.size());
        for (std::size_t n = 0; n < period; ++n) {
            std::size_t size = 1;
            for (auto a : window_sizes(n)) size *= a;
            require(size == table(n).size(), "table size does not match window alphabets");
            require(size <= 1'000'000, "window too large for exact conditionals");
        }
    }

    // Windows sharing a variable with window n, n included.
    std::size_t dependence() const {
        const std::size_t overlap = width - stride;
        return 1 + 2 * ((overlap + stride - 1) / stride);
    }

    // Exact P[chi_n = 1].
    double marginal(std::size_t n) const {
        const auto sizes = window_sizes(n);
        const auto& t = table(n);
        double total = 0.0;
        for (std::size_t idx = 0; idx < t.size(); ++idx) {
            if (!t[idx]) continue;
            double w = 1.0;
            std::size_t rest = idx;
            for (std::size_t j = width; j-- > 0;) {
                w *= law(n * stride + j)[rest % sizes[j]];
                rest /= sizes[j];
            }
            total += w;
        }
        return total;
    }

    double min_marginal() const {
        double m = 1.0;
        const std::size_t period = std::lcm(tables.size(), laws.size());
        for (std::size_t n = 0; n < period; ++n) m = std::min(m, marginal(n));
        return m;
    }
};

struct WindowSample {
    std::vector<int> vars;
    std::vector<std::uint8_t> chi;
};

inline std::vector<std::uint8_t> evaluate_window_field(const WindowField& f, std::span<const int> vars,
                                                       std::size_t count) {
    require(vars.size() >= (count == 0 ? 0 : (count - 1) * f.stride + f.width), "too few underlying variables");
    std::vector<std::uint8_t> chi(count);
    for (std::size_t n = 0; n < count; ++n) {
        const auto sizes = f.window_sizes(n);
        std::size_t idx = 0;
        for (std::size_t j = 0; j < f.width; ++j) idx = idx * sizes[j] + static_cast<std::size_t>(vars[n * f.stride + j]);
        chi[n] = f.table(n)[idx];
    }
    return chi;
}

inline std::size_t variables_needed(const WindowField& f, std::size_t count) {
    return count == 0 ? 0 : (count - 1) * f.stride + f.width;
}

inline WindowSample sample_window_field(const WindowField& f, std::size_t count, Rng& rng) {
    WindowSample s;
    s.vars.resize(variables_needed(f, count));
    for (std::size_t k = 0; k < s.vars.size(); ++k) {
        const auto& l = f.law(k);
        double u = rng.uniform(), acc = 0.0;
        int v = static_cast<int>(l.size()) - 1;
        for (std::size_t a = 0; a < l.size(); ++a) {
            acc += l[a];
            if (u < acc) {
                v = static_cast<int>(a);
                break;
            }
        }
        s.vars[k] = v;
    }
    s.chi = evaluate_window_field(f, s.vars, count);
    return s;
}

// chi_n = phi_n phi_{n+1} with P[phi = 1] = sqrt(p).
inline WindowField product_pair_field(double p) {
    require(p > 0.0 && p <= 1.0, "p must lie in (0,1]");
    WindowField f;
    f.name = "phi_pair";
    f.width = 2;
    f.stride = 1;
    const double q = std::sqrt(p);
    f.laws = {{1.0 - q, q}};
    f.tables = {{0, 0, 0, 1}};
    return f;
}

// Discretized good-event field of the contact comparison. Along one time slab of length
// T the bonds are enumerated G-(c), G+(c), G-(c+2), G+(c+2), ... and the underlying
// variables are L(c-1), A-(c), D(c), A+(c), L(c+1), ... where D is the cell of the first
// recovery at a bond's source, L encodes the cell of the last recovery at its target
// (0 = none, k+1 = cell k) and A is the cell of the first infection arrow (M = none).
// The cell event {A = a, D > a, L - 1 < a} implies the continuous good event, so this
// field lies below it.
struct ContactCells {
    double lambda = 0.0, T = 0.0;
    std::size_t cells = 0;
};

namespace detail {

inline std::vector<double> first_cell_law(double rate, double T, std::size_t m) {
    std::vector<double> law(m + 1);
    const double h = T / static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) law[k] = std::exp(-rate * h * static_cast<double>(k)) * -std::expm1(-rate * h);
    law[m] = std::exp(-rate * T);
    return law;
}

inline std::vector<double> last_cell_law(double rate, double T, std::size_t m) {
    std::vector<double> law(m + 1);
    const double h = T / static_cast<double>(m);
    law[0] = std::exp(-rate * T);
    for (std::size_t k = 0; k < m; ++k)
        law[k + 1] = -std::expm1(-rate * h) * std::exp(-rate * h * static_cast<double>(m - 1 - k));
    return law;
}

inline void normalize(std::vector<double>& law) {
    double s = 0.0;
    for (double v : law) s += v;
    for (double& v : law) v /= s;
}

}  // namespace detail

inline WindowField contact_cell_field(const ContactCells& c) {
    require(c.lambda > 0.0 && c.T > 0.0 && c.cells >= 1, "contact cell field needs positive parameters");
    const std::size_t m = c.cells;
    WindowField f;
    f.name = "contact_cells";
    f.width = 3;
    f.stride = 2;
    auto lastd = detail::last_cell_law(1.0, c.T, m);
    auto firstd = detail::first_cell_law(1.0, c.T, m);
    auto arrow = detail::first_cell_law(c.lambda, c.T, m);
    for (auto* l : {&lastd, &firstd, &arrow}) detail::normalize(*l);
    f.laws = {lastd, arrow, firstd, arrow};
    const std::size_t a = m + 1;
    std::vector<std::uint8_t> minus(a * a * a), plus(a * a * a);
    for (std::size_t v0 = 0; v0 < a; ++v0)
        for (std::size_t v1 = 0; v1 < a; ++v1)
            for (std::size_t v2 = 0; v2 < a; ++v2) {
                const std::size_t idx = (v0 * a + v1) * a + v2;
                // minus: (L, A, D); plus: (D, A, L)
                minus[idx] = (v1 < m && v2 > v1 && v0 <= v1) ? 1 : 0;
                plus[idx] = (v1 < m && v0 > v1 && v2 <= v1) ? 1 : 0;
            }
    f.tables = {minus, plus};
    return f;
}

// Exact probability of the discretized good event.
inline double contact_cell_probability(const ContactCells& c) {
    return -std::expm1(-c.lambda * c.T) * std::exp(-c.T * (1.0 + 1.0 / static_cast<double>(c.cells)));
}

struct ContactCellSample {
    WindowSample cells;
    std::vector<std::uint8_t> good;  // continuous good events
};

// Draws the recovery and infection Poisson processes of a slab chain and records both the
// cell variables and the exact continuous good events.
inline ContactCellSample sample_contact_cells(const ContactCells& c, std::size_t count, Rng& rng) {
    const auto f = contact_cell_field(c);
    const std::size_t m = c.cells;
    const double h = c.T / static_cast<double>(m);
    ContactCellSample out;
    const auto nv = variables_needed(f, count);
    out.cells.vars.resize(nv);
    std::vector<double> times(nv);
    auto cell_of = [&](double t) { return std::min(m - 1, static_cast<std::size_t>(t / h)); };
    for (std::size_t k = 0; k < nv; ++k) {
        const double rate = k % 2 == 1 ? c.lambda : 1.0;
        double first = std::numeric_limits<double>::infinity(), last = -std::numeric_limits<double>::infinity();
        for (double t = rng.exponential(rate); t <= c.T; t += rng.exponential(rate)) {
            if (first == std::numeric_limits<double>::infinity()) first = t;
            last = t;
        }
        if (k % 4 == 0) {
            times[k] = last;
            out.cells.vars[k] = last < 0.0 ? 0 : static_cast<int>(cell_of(last)) + 1;
        } else {
            times[k] = first;
            out.cells.vars[k] = first > c.T ? static_cast<int>(m) : static_cast<int>(cell_of(first));
        }
    }
    out.cells.chi = evaluate_window_field(f, out.cells.vars, count);
    out.good.resize(count);
    for (std::size_t n = 0; n < count; ++n) {
        const double v0 = times[2 * n], a = times[2 * n + 1], v2 = times[2 * n + 2];
        const double d = n % 2 == 0 ? v2 : v0;
        const double l = n % 2 == 0 ? v0 : v2;
        out.good[n] = (a <= c.T && d > a && l <= a) ? 1 : 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coupling of a K-dependent field to i.i.d. Bernoulli(p~) variables from below.

struct KdepParams {
    double p = 0.0;
    std::size_t K = 1;
    double r = 0.0;
    double p_tilde = 0.0;
};

inline KdepParams kdep_params(double p, std::size_t K) {
    require(p > 0.0 && p <= 1.0 && K >= 1, "need p in (0,1] and K >= 1");
    KdepParams k{p, K};
    k.r = 1.0 - std::pow(1.0 - p, 1.0 / static_cast<double>(K));
    k.p_tilde = k.r * k.r;
    return k;
}

struct KdepResult {
    KdepParams params;
    std::vector<std::uint8_t> chi, chi_prime, chi_tilde;
    std::vector<double> conditional;  // p'_n = P[chi'_n = 1 | chi'_0..chi'_{n-1}]
    double min_conditional = 1.0;
    std::size_t order_violations = 0;        // indices where chi~ <= chi' <= chi fails
    std::size_t conditional_violations = 0;  // indices where p'_n < p~
};

// The thinned field chi' = psi chi is filtered exactly over the window variables; U_n is
// then drawn from its conditional law given chi'_n, which makes the U_n i.i.d. uniform,
// and chi~_n = 1{U_n < p~}.
inline KdepResult kdep_couple(const WindowField& f, const WindowSample& sample, std::size_t K, double p, Rng& rng) {
    f.validate();
    const auto kp = kdep_params(p, K);
    require(K >= f.dependence(), "K is smaller than the field's dependence range");
    require(f.min_marginal() >= p - 1e-15, "field marginals fall below p");
    if (kp.p_tilde < 0.25) throw InvalidArgument("p~ < 1/4: the coupling theorem does not apply");
    const std::size_t count = sample.chi.size();
    require(sample.vars.size() >= variables_needed(f, count), "sample is missing underlying variables");

    KdepResult res;
    res.params = kp;
    res.chi = sample.chi;
    res.chi_prime.resize(count);
    res.chi_tilde.resize(count);
    res.conditional.resize(count);
    const std::size_t overlap = f.width - f.stride;

    std::vector<double> post(1, 1.0);  // law of the overlap variables given the history
    std::vector<double> next;
    if (count > 0) {
        for (std::size_t j = 0; j < overlap; ++j) {
            next.clear();
            for (double w : post)
                for (double l : f.law(j)) next.push_back(w * l);
            post.swap(next);
        }
    }
    for (std::size_t n = 0; n < count; ++n) {
        const auto sizes = f.window_sizes(n);
        std::size_t fresh = 1, tail = 1;
        for (std::size_t j = overlap; j < f.width; ++j) fresh *= sizes[j];
        for (std::size_t j = f.stride; j < f.width; ++j) tail *= sizes[j];
        // Product law of the fresh variables.
        std::vector<double> fresh_law(fresh);
        for (std::size_t idx = 0; idx < fresh; ++idx) {
            double w = 1.0;
            std::size_t rest = idx;
            for (std::size_t j = f.width; j-- > overlap;) {
                w *= f.law(n * f.stride + j)[rest % sizes[j]];
                rest /= sizes[j];
            }
            fresh_law[idx] = w;
        }
        const auto& g = f.table(n);
        double p1 = 0.0;
        for (std::size_t idx = 0; idx < g.size(); ++idx)
            if (g[idx]) p1 += post[idx / fresh] * fresh_law[idx % fresh];
        const double pn = kp.r * p1;
        res.conditional[n] = pn;
        res.min_conditional = std::min(res.min_conditional, pn);
        if (pn < kp.p_tilde) ++res.conditional_violations;

        const bool psi = rng.uniform() < kp.r;
        const std::uint8_t cp = (psi && res.chi[n]) ? 1 : 0;
        res.chi_prime[n] = cp;
        const double u = cp ? rng.uniform(0.0, pn) : rng.uniform(pn, 1.0);
        res.chi_tilde[n] = u < kp.p_tilde ? 1 : 0;
        if (!(res.chi_tilde[n] <= res.chi_prime[n] && res.chi_prime[n] <= res.chi[n])) ++res.order_violations;

        // Condition on chi'_n and carry the shared variables forward.
        next.assign(tail, 0.0);
        double z = 0.0;
        for (std::size_t idx = 0; idx < g.size(); ++idx) {
            const double lik = cp ? (g[idx] ? 1.0 : 0.0) : (g[idx] ? 1.0 - kp.r : 1.0);
            if (lik == 0.0) continue;
            const double w = post[idx / fresh] * fresh_law[idx % fresh] * lik;
            next[idx % tail] += w;
            z += w;
        }
        require(z > 0.0, "conditioning on an impossible history");
        for (double& v : next) v /= z;
        post.swap(next);
        if (overlap == 0) post.assign(1, 1.0);
    }
    return res;
}

// Pearson chi-square of non-overlapping pairs (chi_{2k}, chi_{2k+1}) against i.i.d.
// Bernoulli(p) pairs; sensitive to both the marginal and nearest-neighbour dependence.
inline stats::ChiSquare iid_pair_test(std::span<const std::uint8_t> bits, double p) {
    std::array<double, 4> obs{};
    for (std::size_t k = 0; k + 1 < bits.size(); k += 2) obs[static_cast<std::size_t>(bits[k] * 2 + bits[k + 1])] += 1.0;
    const std::array<double, 4> probs{(1 - p) * (1 - p), (1 - p) * p, p * (1 - p), p * p};
    return stats::chi_square_gof(obs, probs);
}

// ---------------------------------------------------------------------------
// Contact process to oriented percolation. Block site i = (i1, i2) sits at space-time
// point (i1 - i2, T (i1 + i2)); the bond (i, i + e1) points to space +1, (i, i + e2) to -1.

struct BondLog {
    std::size_t site = 0;
    std::size_t direction = 0;  // 0: towards +1, 1: towards -1
    bool open = false;
    double arrow_time = std::numeric_limits<double>::quiet_NaN();
    bool path_verified = false;
};

struct ComparisonResult {
    BondField field;
    std::vector<BondLog> log;
    std::size_t bonds = 0, open = 0, verified = 0, violations = 0;
    double expected_p = 0.0;
    double lambda = 0.0, T = 0.0;
    std::size_t ring = 0;
};

inline double comparison_probability(double lambda, double T) { return -std::expm1(-lambda * T) * std::exp(-T); }

// Builds the block field from a sampled contact representation on a ring of `ring` sites
// covering [0, 2 (side - 1) T]. With verify = true every open bond is re-checked by an
// infection sweep through the slab's events.
inline ComparisonResult contact_to_percolation(double lambda, double T, std::size_t side, std::size_t ring,
                                               std::uint64_t seed, bool verify = true) {
    require(lambda > 0.0 && T > 0.0, "lambda and T must be positive");
    require(side >= 2, "box side must be at least 2");
    if (ring < 2 * side + 1) throw InvalidArgument("ring too small for the requested percolation box");
    const auto model = models::contact(models::share(Lattice::ring(static_cast<int>(ring))), lambda, 1.0);
    const std::size_t slabs = 2 * (side - 1);
    const auto stream = sample_events(model, T * static_cast<double>(slabs), seed);

    ComparisonResult res;
    res.field = BondField(2, side);
    res.field.p = comparison_probability(lambda, T);
    res.field.seed = seed;
    res.expected_p = res.field.p;
    res.lambda = lambda;
    res.T = T;
    res.ring = ring;

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> first_death, last_death, arrow_up, arrow_down;
    std::size_t cursor = 0;
    const auto& ev = stream.events;
    const auto pos = [&](long long x) { return static_cast<Site>((x % static_cast<long long>(ring) + ring) % ring); };

    for (std::size_t l = 0; l < slabs; ++l) {
        const double t0 = T * static_cast<double>(l), t1 = T * static_cast<double>(l + 1);
        const std::size_t begin = cursor;
        while (cursor < ev.size() && ev[cursor].time <= t1) ++cursor;
        first_death.assign(ring, inf);
        last_death.assign(ring, -inf);
        arrow_up.assign(ring, inf);
        arrow_down.assign(ring, inf);
        for (std::size_t k = begin; k < cursor; ++k) {
            const auto& mp = model.instances[ev[k].instance].map;
            const double t = ev[k].time - t0;
            if (mp.kind == MapKind::death) {
                const Site x = mp.s[0];
                first_death[x] = std::min(first_death[x], t);
                last_death[x] = std::max(last_death[x], t);
            } else {
                const Site from = mp.s[0], to = mp.s[1];
                auto& slot = to == pos(static_cast<long long>(from) + 1) ? arrow_up[from] : arrow_down[from];
                slot = std::min(slot, t);
            }
        }
        for (std::size_t i1 = 0; i1 < side; ++i1) {
            if (l < i1 || l - i1 >= side) continue;
            const std::size_t i2 = l - i1;
            const std::array<std::size_t, 2> c{i1, i2};
            const auto s = res.field.index(c);
            const long long x = static_cast<long long>(i1) - static_cast<long long>(i2);
            for (std::size_t dir = 0; dir < 2; ++dir) {
                if (!res.field.exists(s, dir)) continue;
                const Site src = pos(x), dst = pos(dir == 0 ? x + 1 : x - 1);
                const double a = dir == 0 ? arrow_up[src] : arrow_down[src];
                const bool good = a <= T && first_death[src] > a && last_death[dst] <= a;
                res.field.set(s, dir, good);
                BondLog entry{s, dir, good, a <= T ? t0 + a : std::numeric_limits<double>::quiet_NaN(), false};
                ++res.bonds;
                if (good) {
                    ++res.open;
                    if (verify) {
                        auto cfg = Configuration::zeros(ring);
                        cfg.state[src] = 1;
                        for (std::size_t k = begin; k < cursor; ++k) apply_event(model, ev[k], cfg);
                        entry.path_verified = cfg.state[dst] == 1;
                        if (entry.path_verified)
                            ++res.verified;
                        else
                            ++res.violations;
                    }
                }
                res.log.push_back(entry);
            }
        }
    }
    return res;
}

// 2x2 contingency table of (bond (s, dir_a), bond (s + offset, dir_b)) over all sites s
// where both bonds exist; offset is a signed block-grid displacement.
inline std::array<double, 4> bond_pair_table(const BondField& f, std::array<long long, 2> offset, std::size_t dir_a,
                                             std::size_t dir_b) {
    require(f.dim() == 2, "pair table is two-dimensional");
    std::array<double, 4> t{};
    const auto side = static_cast<long long>(f.side());
    for (std::size_t s = 0; s < f.sites(); ++s) {
        const long long j1 = static_cast<long long>(f.coord(s, 0)) + offset[0];
        const long long j2 = static_cast<long long>(f.coord(s, 1)) + offset[1];
        if (j1 < 0 || j2 < 0 || j1 >= side || j2 >= side) continue;
        const std::array<std::size_t, 2> c{static_cast<std::size_t>(j1), static_cast<std::size_t>(j2)};
        const auto u = f.index(c);
        if (!f.exists(s, dir_a) || !f.exists(u, dir_b)) continue;
        t[static_cast<std::size_t>(f.open(s, dir_a) * 2 + f.open(u, dir_b))] += 1.0;
    }
    return t;
}

}  // namespace ips::percolation
