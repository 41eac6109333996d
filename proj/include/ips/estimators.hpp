#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
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

namespace ips::estimators {

// ---------------------------------------------------------------------------
// Contact processes at several infection rates driven by one marked representation.
// Arrows run at rate lambda_max and carry a uniform mark v; the process with rate lambda
// uses the arrow iff v < lambda / lambda_max. Recovery marks are shared. The processes are
// therefore ordered pointwise in lambda. Only sites infected in some process generate
// events, which is exact by memorylessness.

struct MarkedRun {
    std::uint32_t alive = 0;    // bit k: process k nonempty at the horizon
    std::uint32_t touched = 0;  // bit k: process k reached the box boundary
    std::vector<std::size_t> size;  // |X_T| per process
    std::size_t events = 0;
};

class MarkedContact {
public:
    MarkedContact(std::shared_ptr<const Lattice> lat, std::vector<double> lambdas)
        : lat_(std::move(lat)), lambdas_(std::move(lambdas)) {
        require(lat_ && lat_->regular(), "marked contact needs a regular lattice");
        require(!lambdas_.empty() && lambdas_.size() <= 32, "between 1 and 32 infection rates");
        require(std::is_sorted(lambdas_.begin(), lambdas_.end()), "infection rates must be sorted");
        require(lambdas_.front() >= 0.0, "infection rates must be nonnegative");
        lmax_ = lambdas_.back();
        deg_ = lat_->degree();
        full_ = lambdas_.size() == 32 ? 0xffffffffU : ((1U << lambdas_.size()) - 1U);
        boundary_.assign(lat_->size(), 0);
        for (Site i = 0; i < lat_->size(); ++i) {
            const auto c = lat_->coords(i);
            for (std::size_t a = 0; a < c.size(); ++a)
                if (c[a] == 0 || c[a] == lat_->sides()[a] - 1) boundary_[i] = 1;
        }
        std::vector<int> mid(static_cast<std::size_t>(lat_->dim()));
        for (std::size_t a = 0; a < mid.size(); ++a) mid[a] = lat_->sides()[a] / 2;
        origin_ = lat_->index(mid);
    }

    Site origin() const { return origin_; }
    const std::vector<double>& lambdas() const { return lambdas_; }

    // Processes k with lambda_k > v * lambda_max.
    std::uint32_t accept(double v) const {
        std::uint32_t m = 0;
        for (std::size_t k = 0; k < lambdas_.size(); ++k)
            if (lambdas_[k] > v * lmax_) m |= 1U << k;
        return m;
    }

    MarkedRun run(std::span<const Site> initial, double horizon, std::uint64_t seed) const {
        const std::size_t n = lat_->size();
        std::vector<std::uint32_t> mask(n, 0);
        std::vector<std::int64_t> pos(n, -1);
        std::vector<Site> active;
        MarkedRun res;
        auto activate = [&](Site s) {
            if (pos[s] < 0) {
                pos[s] = static_cast<std::int64_t>(active.size());
                active.push_back(s);
            }
        };
        for (Site s : initial) {
            mask[s] = full_;
            activate(s);
            if (boundary_[s]) res.touched |= full_;
        }
        Rng rng(seed);
        const double per_site = 1.0 + lmax_ * static_cast<double>(deg_);
        double t = 0.0;
        const auto nbr_base = [&](Site s) { return lat_->neighbors(s); };
        while (!active.empty()) {
            t += rng.exponential(per_site * static_cast<double>(active.size()));
            if (t > horizon) break;
            ++res.events;
            const Site i = active[rng.below(active.size())];
            const double u = rng.uniform() * per_site;
            if (u < 1.0) {
                mask[i] = 0;
                const auto p = static_cast<std::size_t>(pos[i]);
                active[p] = active.back();
                pos[active[p]] = static_cast<std::int64_t>(p);
                active.pop_back();
                pos[i] = -1;
                continue;
            }
            const auto nb = nbr_base(i);
            const Site j = nb[rng.below(nb.size())];
            const std::uint32_t fresh = mask[i] & accept(rng.uniform()) & ~mask[j];
            if (!fresh) continue;
            mask[j] |= fresh;
            activate(j);
            if (boundary_[j]) res.touched |= fresh;
        }
        res.size.assign(lambdas_.size(), 0);
        for (Site s : active) {
            res.alive |= mask[s];
            for (std::size_t k = 0; k < lambdas_.size(); ++k) res.size[k] += (mask[s] >> k) & 1U;
        }
        return res;
    }

private:
    std::shared_ptr<const Lattice> lat_;
    std::vector<double> lambdas_;
    double lmax_ = 0.0;
    std::size_t deg_ = 0;
    std::uint32_t full_ = 0;
    std::vector<std::uint8_t> boundary_;
    Site origin_ = 0;
};

struct SurvivalRow {
    double lambda = 0.0;
    std::size_t box = 0;
    double horizon = 0.0;
    std::size_t replicas = 0;
    std::size_t survived = 0;
    std::size_t truncated = 0;
    double theta = 0.0;
    stats::Interval ci;
    double truncated_frac = 0.0;
};

// Survival proxy P[X_T != 0] from a single infected site at the centre of `lat`, for every
// rate of a sorted grid, with common random numbers. Replica k uses stream k of `seed`.
inline std::vector<SurvivalRow> theta_curve(std::shared_ptr<const Lattice> lat, const std::vector<double>& lambdas,
                                            double horizon, std::size_t replicas, std::uint64_t seed,
                                            unsigned threads = 1) {
    require(replicas >= 1, "replicas must be positive");
    std::vector<double> grid = lambdas;
    require(std::is_sorted(grid.begin(), grid.end()), "rate grid must be sorted");
    std::vector<SurvivalRow> rows(grid.size());
    // Chunks of at most 32 rates share a run; the chunk's top rate drives the arrows.
    for (std::size_t from = 0; from < grid.size(); from += 32) {
        const std::size_t to = std::min(grid.size(), from + 32);
        std::vector<double> chunk(grid.begin() + static_cast<std::ptrdiff_t>(from), grid.begin() + static_cast<std::ptrdiff_t>(to));
        MarkedContact engine(lat, chunk);
        std::vector<MarkedRun> runs(replicas);
        const Site o = engine.origin();
        parallel_for(replicas, threads, [&](std::size_t k) {
            runs[k] = engine.run(std::span<const Site>(&o, 1), horizon, stream_seed(seed, k));
        });
        for (std::size_t k = from; k < to; ++k) {
            auto& row = rows[k];
            row.lambda = grid[k];
            row.box = lat->size();
            row.horizon = horizon;
            row.replicas = replicas;
            const auto bit = 1U << (k - from);
            for (const auto& r : runs) {
                row.survived += (r.alive & bit) ? 1 : 0;
                row.truncated += (r.touched & bit) ? 1 : 0;
            }
            row.theta = static_cast<double>(row.survived) / static_cast<double>(replicas);
            row.ci = stats::wilson(row.survived, replicas);
            row.truncated_frac = static_cast<double>(row.truncated) / static_cast<double>(replicas);
        }
    }
    // Exact monotonicity holds within a chunk; across chunks it is not guaranteed.
    return rows;
}

inline SurvivalRow survival_estimate(std::shared_ptr<const Lattice> lat, double lambda, double horizon,
                                     std::size_t replicas, std::uint64_t seed, unsigned threads = 1) {
    return theta_curve(std::move(lat), {lambda}, horizon, replicas, seed, threads).front();
}

struct CriticalBracket {
    double lo = 0.0, hi = 0.0;          // bisection bracket
    double wide_lo = 0.0, wide_hi = 0.0;  // widened by the confidence band around the threshold
    double threshold = 0.0;
    std::vector<SurvivalRow> evaluations;
};

// Bisection for the rate at which the survival proxy crosses `threshold`. Every evaluation
// shares the replicas' marked representation (arrows at the bracket's upper rate), so the
// proxy is exactly nondecreasing along the search. The final bracket is widened to the grid
// points whose 95% interval still contains the threshold.
inline CriticalBracket lambda_c_estimate(std::shared_ptr<const Lattice> lat, double lo, double hi, double tol,
                                         double threshold, double horizon, std::size_t replicas, std::uint64_t seed,
                                         unsigned threads = 1) {
    require(lo < hi && tol > 0.0, "bad bisection bracket");
    CriticalBracket out;
    out.threshold = threshold;
    // Evaluate a rate through a two-rate run whose top rate is `hi`, keeping the marks fixed.
    auto eval = [&](double lambda) {
        auto rows = theta_curve(lat, {lambda, hi}, horizon, replicas, seed, threads);
        out.evaluations.push_back(rows.front());
        return rows.front();
    };
    double a = lo, b = hi;
    const auto fa = eval(a), fb = eval(b);
    require(fa.theta <= threshold && fb.theta > threshold, "threshold not crossed inside the initial bracket");
    while (b - a > tol) {
        const double m = 0.5 * (a + b);
        (eval(m).theta > threshold ? b : a) = m;
    }
    out.lo = a;
    out.hi = b;
    out.wide_lo = a;
    out.wide_hi = b;
    const double step = b - a;
    for (double x = a - step; x >= lo; x -= step) {
        const auto r = eval(x);
        if (!r.ci.contains(threshold)) break;
        out.wide_lo = x;
    }
    for (double x = b + step; x <= hi; x += step) {
        const auto r = eval(x);
        if (!r.ci.contains(threshold)) break;
        out.wide_hi = x;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Densities along the graphical representation

enum class Start { ones, zeros, product };

struct DensityRow {
    double t = 0.0;
    double mean = 0.0;
    stats::Interval ci;
};

inline Configuration start_configuration(const ModelSpec& m, Start from, double p, Rng& rng) {
    Configuration x;
    const auto n = m.lat().size();
    const bool spin = m.alphabet == Alphabet::spin;
    switch (from) {
        case Start::ones: x = Configuration::filled(n, 1, m.alphabet); break;
        case Start::zeros: x = Configuration::filled(n, spin ? -1 : 0, m.alphabet); break;
        case Start::product: x = Configuration::product(n, p, rng, m.alphabet); break;
    }
    pin_boundary(m.lat(), x);
    return x;
}

inline double occupation(const Configuration& x) {
    double s = 0.0;
    for (auto v : x.state) s += v == 1 ? 1.0 : 0.0;
    return s / static_cast<double>(x.size());
}

// Mean occupation fraction at each time over independent replicas.
inline std::vector<DensityRow> invariant_density(const ModelSpec& m, Start from, const std::vector<double>& times,
                                                 std::size_t replicas, std::uint64_t seed, unsigned threads = 1,
                                                 double p = 0.5) {
    require(!times.empty() && std::is_sorted(times.begin(), times.end()), "times must be sorted");
    InstanceSampler sampler(m);
    std::vector<std::vector<double>> dens(times.size(), std::vector<double>(replicas));
    parallel_for(replicas, threads, [&](std::size_t k) {
        Rng rng = Rng::stream(seed, 2 * k);
        auto x = start_configuration(m, from, p, rng);
        const auto st = sample_events(m, sampler, times.back(), stream_seed(seed, 2 * k + 1));
        const auto tr = evolve(m, st, x, times);
        for (std::size_t a = 0; a < times.size(); ++a) dens[a][k] = occupation(tr.states[a]);
    });
    std::vector<DensityRow> rows;
    for (std::size_t a = 0; a < times.size(); ++a) {
        const auto e = stats::mean_se(dens[a]);
        rows.push_back({times[a], e.mean, e.ci()});
    }
    return rows;
}

// On one stream, the system started from ones at time s and the system started from ones at
// time 0 are compared at time s + t. For a monotone model the later start dominates.
inline bool nested_ones_check(const ModelSpec& m, double s, double t, std::uint64_t seed) {
    const auto st = sample_events(m, s + t, seed);
    const auto one = Configuration::filled(m.lat().size(), 1, m.alphabet);
    const auto early = evolve_window(m, st, one, 0.0, s + t);
    const auto late = evolve_window(m, st, one, s, s + t);
    for (std::size_t i = 0; i < early.size(); ++i)
        if (early[i] > late[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Magnetization with a frozen +1 boundary

inline double onsager_magnetization(double beta) {
    const double bc = std::log(1.0 + std::sqrt(2.0));
    if (beta <= bc) return 0.0;
    return std::pow(1.0 - std::pow(std::sinh(beta), -4.0), 0.125);
}

struct MagnetizationRow {
    double beta = 0.0;
    std::size_t side = 0;
    double m_hat = 0.0;
    stats::Interval ci;
    double onsager = 0.0;
    std::size_t replicas = 0;
};

// Time average of the centre spin over [T/2, T], averaged over replicas started from all +1.
inline MagnetizationRow magnetization_frozen_boundary(double beta, int side, double horizon, std::size_t replicas,
                                                      std::uint64_t seed, unsigned threads = 1) {
    auto lat = models::share(Lattice::frozen_box(2, side, +1));
    const auto m = models::ising_glauber(lat, beta);
    InstanceSampler sampler(m);
    EventApplier apply(m);
    const std::array<int, 2> mid{side / 2, side / 2};
    const Site centre = lat->index(mid);
    std::vector<double> avg(replicas);
    parallel_for(replicas, threads, [&](std::size_t k) {
        auto x = Configuration::filled(lat->size(), 1, Alphabet::spin);
        EventGenerator gen(sampler, stream_seed(seed, k), 0.0, horizon, false);
        const double burn = horizon / 2.0;
        double last = burn, acc = 0.0;
        Event e;
        while (gen.next(e)) {
            if (e.time > burn) {
                acc += x[centre] * (e.time - last);
                last = e.time;
            }
            apply(e, x);
        }
        acc += x[centre] * (horizon - last);
        avg[k] = acc / (horizon - burn);
    });
    const auto e = stats::mean_se(avg);
    return {beta, static_cast<std::size_t>(side), e.mean, e.ci(), onsager_magnetization(beta), replicas};
}

// ---------------------------------------------------------------------------
// Clustering

// Fraction of lattice edges {i, j} (each counted once) with unequal states.
inline double disagreement(const Lattice& lat, const Configuration& x) {
    double edges = 0.0, diff = 0.0;
    for (Site i = 0; i < lat.size(); ++i)
        for (Site j : lat.neighbors(i))
            if (j > i) {
                edges += 1.0;
                diff += x[i] != x[j] ? 1.0 : 0.0;
            }
    return edges > 0.0 ? diff / edges : 0.0;
}

// Sizes of the connected same-state clusters.
inline std::vector<std::size_t> cluster_sizes(const Lattice& lat, const Configuration& x) {
    std::vector<std::uint8_t> seen(lat.size(), 0);
    std::vector<std::size_t> sizes;
    std::vector<Site> stack;
    for (Site s = 0; s < lat.size(); ++s) {
        if (seen[s]) continue;
        std::size_t c = 0;
        stack.assign(1, s);
        seen[s] = 1;
        while (!stack.empty()) {
            const Site i = stack.back();
            stack.pop_back();
            ++c;
            for (Site j : lat.neighbors(i))
                if (!seen[j] && x[j] == x[i]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
        }
        sizes.push_back(c);
    }
    return sizes;
}

struct ClusterRow {
    double t = 0.0;
    double disagreement = 0.0;
    stats::Interval disagreement_ci;
    double agreement01 = 0.0;  // fraction of replicas with x(0) = x(1)
    stats::Interval agreement_ci;
    double mean_cluster = 0.0;
};

struct ClusterStats {
    std::vector<ClusterRow> rows;
    std::map<std::size_t, std::size_t> histogram;  // cluster size -> count, at the last time
};

inline ClusterStats clustering_stats(const ModelSpec& m, double p, const std::vector<double>& times,
                                     std::size_t replicas, std::uint64_t seed, unsigned threads = 1) {
    require(m.alphabet != Alphabet::potts || m.q == 2, "clustering needs a two-state model");
    require(!times.empty() && std::is_sorted(times.begin(), times.end()), "times must be sorted");
    const auto& lat = m.lat();
    const Site neighbour = lat.neighbors(0).front() == 0 && lat.neighbors(0).size() > 1 ? lat.neighbors(0)[1]
                                                                                         : lat.neighbors(0).front();
    InstanceSampler sampler(m);
    std::vector<std::vector<double>> dis(times.size(), std::vector<double>(replicas));
    std::vector<std::vector<std::uint8_t>> agree(times.size(), std::vector<std::uint8_t>(replicas));
    std::vector<std::vector<double>> mean_cluster(times.size(), std::vector<double>(replicas));
    std::vector<std::vector<std::size_t>> last_sizes(replicas);
    parallel_for(replicas, threads, [&](std::size_t k) {
        Rng rng = Rng::stream(seed, 2 * k);
        auto x = start_configuration(m, Start::product, p, rng);
        const auto st = sample_events(m, sampler, times.back(), stream_seed(seed, 2 * k + 1));
        const auto tr = evolve(m, st, x, times);
        for (std::size_t a = 0; a < times.size(); ++a) {
            dis[a][k] = disagreement(lat, tr.states[a]);
            agree[a][k] = tr.states[a][0] == tr.states[a][neighbour] ? 1 : 0;
            const auto sizes = cluster_sizes(lat, tr.states[a]);
            mean_cluster[a][k] = static_cast<double>(lat.size()) / static_cast<double>(sizes.size());
            if (a + 1 == times.size()) last_sizes[k] = sizes;
        }
    });
    ClusterStats out;
    for (std::size_t a = 0; a < times.size(); ++a) {
        ClusterRow row;
        row.t = times[a];
        const auto e = stats::mean_se(dis[a]);
        row.disagreement = e.mean;
        row.disagreement_ci = e.ci();
        std::size_t hits = 0;
        for (auto v : agree[a]) hits += v;
        row.agreement01 = static_cast<double>(hits) / static_cast<double>(replicas);
        row.agreement_ci = stats::wilson(hits, replicas);
        row.mean_cluster = stats::mean_se(mean_cluster[a]).mean;
        out.rows.push_back(row);
    }
    for (const auto& sizes : last_sizes)
        for (auto s : sizes) ++out.histogram[s];
    return out;
}

// ---------------------------------------------------------------------------
// Convergence from product laws to the upper invariant law

struct HomogeneousTest {
    bool pass = false;
    bool degenerate = false;
    double min_p_value = 1.0;  // Bonferroni-adjusted over the three statistics
    std::array<stats::KsResult, 3> tests{};  // density, pair at distance 1, pair at distance 2
};

struct PairStats {
    double density = 0.0, pair1 = 0.0, pair2 = 0.0;
};

inline PairStats ring_pair_stats(const Configuration& x) {
    const std::size_t n = x.size();
    PairStats s;
    for (std::size_t i = 0; i < n; ++i) {
        s.density += x[i];
        s.pair1 += x[i] * x[(i + 1) % n];
        s.pair2 += x[i] * x[(i + 2) % n];
    }
    const double nn = static_cast<double>(n);
    return {s.density / nn, s.pair1 / nn, s.pair2 / nn};
}

inline HomogeneousTest homogeneous_convergence_test(double lambda, double p, double horizon, int ring,
                                                    std::size_t replicas, std::uint64_t seed, unsigned threads = 1,
                                                    double level = 0.01) {
    const auto m = models::contact(models::share(Lattice::ring(ring)), lambda, 1.0);
    InstanceSampler sampler(m);
    std::array<std::vector<double>, 3> a, b;
    for (auto& v : a) v.resize(replicas);
    for (auto& v : b) v.resize(replicas);
    parallel_for(2 * replicas, threads, [&](std::size_t job) {
        const std::size_t k = job / 2;
        const bool product = job % 2 == 0;
        const std::uint64_t base = 4 * k + (product ? 0 : 2);
        Rng rng = Rng::stream(seed, base);
        auto x = product ? Configuration::product(m.lat().size(), p, rng) : Configuration::ones(m.lat().size());
        const auto st = sample_events(m, sampler, horizon, stream_seed(seed, base + 1));
        const auto s = ring_pair_stats(evolve_to(m, st, x, horizon));
        auto& dst = product ? a : b;
        dst[0][k] = s.density;
        dst[1][k] = s.pair1;
        dst[2][k] = s.pair2;
    });
    HomogeneousTest out;
    const bool all_zero = std::all_of(a[0].begin(), a[0].end(), [](double v) { return v == 0.0; }) &&
                          std::all_of(b[0].begin(), b[0].end(), [](double v) { return v == 0.0; });
    if (all_zero) {
        out.degenerate = true;
        out.pass = true;
        return out;
    }
    for (std::size_t s = 0; s < 3; ++s) {
        out.tests[s] = stats::ks_two_sample(a[s], b[s]);
        out.min_p_value = std::min(out.min_p_value, std::min(1.0, 3.0 * out.tests[s].p_value));
    }
    out.pass = out.min_p_value >= level;
    return out;
}

// ---------------------------------------------------------------------------
// Extinction versus unbounded growth: |X_T| over replicas from a single infected site.

struct GrowthHistogram {
    std::vector<std::size_t> sizes;      // |X_T| per replica
    std::size_t extinct = 0;
    std::map<std::size_t, std::size_t> bins;  // lower bin edge -> count (width `bin`)
    // Among survivors, fraction with |X_T| > threshold.
    double survivor_fraction_above(std::size_t threshold) const {
        std::size_t alive = 0, above = 0;
        for (auto s : sizes)
            if (s > 0) {
                ++alive;
                above += s > threshold ? 1 : 0;
            }
        return alive == 0 ? 0.0 : static_cast<double>(above) / static_cast<double>(alive);
    }
};

inline GrowthHistogram extinction_growth_histogram(std::shared_ptr<const Lattice> lat, double lambda, double horizon,
                                                   std::size_t replicas, std::uint64_t seed, std::size_t bin = 10,
                                                   unsigned threads = 1) {
    MarkedContact engine(lat, {lambda});
    const Site o = engine.origin();
    GrowthHistogram h;
    h.sizes.resize(replicas);
    parallel_for(replicas, threads, [&](std::size_t k) {
        h.sizes[k] = engine.run(std::span<const Site>(&o, 1), horizon, stream_seed(seed, k)).size[0];
    });
    for (auto s : h.sizes) {
        h.extinct += s == 0 ? 1 : 0;
        ++h.bins[s / bin * bin];
    }
    return h;
}

// ---------------------------------------------------------------------------
// Relevance sets

struct RelevanceEstimate {
    double t = 0.0;
    stats::MeanEstimate size;
};

// Mean |zeta| of the set of sites at time 0 that can influence `site` at time t.
inline std::vector<RelevanceEstimate> relevance_size(const ModelSpec& m, Site site, const std::vector<double>& times,
                                                     std::size_t replicas, std::uint64_t seed, unsigned threads = 1) {
    std::vector<RelevanceEstimate> out;
    InstanceSampler sampler(m);
    for (std::size_t a = 0; a < times.size(); ++a) {
        std::vector<double> sizes(replicas);
        parallel_for(replicas, threads, [&](std::size_t k) {
            const auto st = sample_events(m, sampler, times[a], stream_seed(stream_seed(seed, a), k));
            sizes[k] = static_cast<double>(relevance_set(m, st, std::span<const Site>(&site, 1), times[a], 0.0).size());
        });
        out.push_back({times[a], stats::mean_se(sizes)});
    }
    return out;
}

// Re-randomizes the state outside the relevance set and checks that the sites in `a` end up
// identical at time t. Returns the number of trials where they did not.
inline std::size_t relevance_forward_check(const ModelSpec& m, const EventStream& st, std::span<const Site> a,
                                           double t, std::size_t trials, Rng& rng) {
    const auto zeta = relevance_set(m, st, a, t, st.start);
    std::vector<std::uint8_t> in(m.lat().size(), 0);
    for (Site s : zeta) in[s] = 1;
    auto base = Configuration::product(m.lat().size(), 0.5, rng, m.alphabet);
    pin_boundary(m.lat(), base);
    const auto ref = evolve_window(m, st, base, st.start, t);
    std::size_t bad = 0;
    for (std::size_t k = 0; k < trials; ++k) {
        auto x = Configuration::product(m.lat().size(), 0.5, rng, m.alphabet);
        for (Site s = 0; s < x.size(); ++s)
            if (in[s]) x[s] = base[s];
        pin_boundary(m.lat(), x);
        const auto y = evolve_window(m, st, x, st.start, t);
        for (Site s : a)
            if (y[s] != ref[s]) {
                ++bad;
                break;
            }
    }
    return bad;
}

}  // namespace ips::estimators
