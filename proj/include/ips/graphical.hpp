#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ips/error.hpp"
#include "ips/lattice.hpp"
#include "ips/maps.hpp"
#include "ips/models.hpp"
#include "ips/rng.hpp"

namespace ips {

struct Event {
    double time = 0.0;
    std::uint32_t instance = 0;  // index into the model's instances (dynamic-site index for Potts)
    double mark = 0.0;           // uniform in [0,1); used by Potts updates and marked thinning
    bool operator==(const Event&) const = default;
};

struct EventStream {
    double start = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    std::string model_name;
    std::vector<Event> events;

    // Events with start' < time <= horizon'.
    EventStream restrict(double s, double u) const {
        EventStream out{s, u, seed, model_name, {}};
        auto lo = std::upper_bound(events.begin(), events.end(), s, [](double t, const Event& e) { return t < e.time; });
        auto hi = std::upper_bound(events.begin(), events.end(), u, [](double t, const Event& e) { return t < e.time; });
        out.events.assign(lo, hi);
        return out;
    }
};

// Walker alias table for O(1) categorical draws.
class AliasTable {
public:
    AliasTable() = default;
    explicit AliasTable(std::span<const double> weights) {
        const std::size_t n = weights.size();
        require(n > 0, "alias table needs at least one weight");
        prob_.assign(n, 0.0);
        alias_.assign(n, 0);
        double total = 0.0;
        for (double w : weights) total += w;
        require(total > 0.0, "alias table needs positive total weight");
        std::vector<double> scaled(n);
        std::vector<std::uint32_t> small, large;
        for (std::size_t k = 0; k < n; ++k) {
            scaled[k] = weights[k] * static_cast<double>(n) / total;
            (scaled[k] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(k));
        }
        while (!small.empty() && !large.empty()) {
            const auto s = small.back();
            small.pop_back();
            const auto l = large.back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (auto k : large) prob_[k] = 1.0;
        for (auto k : small) prob_[k] = 1.0;
    }

    std::uint32_t sample(Rng& rng) const {
        const auto k = static_cast<std::uint32_t>(rng.below(prob_.size()));
        return rng.uniform() < prob_[k] ? k : alias_[k];
    }

    std::size_t size() const { return prob_.size(); }

private:
    std::vector<double> prob_;
    std::vector<std::uint32_t> alias_;
};

// Draws the Poisson point set of a model as a global exponential clock plus a
// categorical instance choice. Built once per model and shared across replicas.
class InstanceSampler {
public:
    explicit InstanceSampler(const ModelSpec& m) {
        if (m.potts) {
            for (Site i = 0; i < m.lat().size(); ++i)
                if (!m.lat().pinned(i)) potts_sites_.push_back(i);
            total_ = static_cast<double>(potts_sites_.size());
            return;
        }
        std::vector<double> w;
        w.reserve(m.instances.size());
        for (const auto& inst : m.instances) w.push_back(inst.rate);
        total_ = 0.0;
        for (double r : w) total_ += r;
        if (total_ > 0.0) alias_ = AliasTable(w);
    }

    double total_rate() const { return total_; }

    std::uint32_t draw(Rng& rng) const {
        if (!potts_sites_.empty()) return static_cast<std::uint32_t>(rng.below(potts_sites_.size()));
        return alias_.sample(rng);
    }

    const std::vector<Site>& potts_sites() const { return potts_sites_; }

private:
    double total_ = 0.0;
    AliasTable alias_;
    std::vector<Site> potts_sites_;
};

// Lazily generated stream of events on (start, horizon].
class EventGenerator {
public:
    EventGenerator(const InstanceSampler& sampler, std::uint64_t seed, double start, double horizon, bool marks)
        : sampler_(&sampler), rng_(seed), time_(start), horizon_(horizon), marks_(marks) {}

    bool next(Event& e) {
        if (sampler_->total_rate() <= 0.0) return false;
        time_ += rng_.exponential(sampler_->total_rate());
        if (time_ > horizon_) return false;
        e.time = time_;
        e.instance = sampler_->draw(rng_);
        e.mark = marks_ ? rng_.uniform() : 0.0;
        return true;
    }

private:
    const InstanceSampler* sampler_;
    Rng rng_;
    double time_;
    double horizon_;
    bool marks_;
};

inline bool needs_marks(const ModelSpec& m) { return m.potts.has_value(); }

inline EventStream sample_events(const ModelSpec& m, const InstanceSampler& sampler, double horizon, std::uint64_t seed,
                                 double start = 0.0, bool marks = false) {
    require(horizon >= start, "horizon must not precede the start time");
    EventStream s{start, horizon, seed, m.name, {}};
    EventGenerator gen(sampler, seed, start, horizon, marks || needs_marks(m));
    Event e;
    while (gen.next(e)) s.events.push_back(e);
    return s;
}

inline EventStream sample_events(const ModelSpec& m, double horizon, std::uint64_t seed, double start = 0.0,
                                 bool marks = false) {
    InstanceSampler sampler(m);
    return sample_events(m, sampler, horizon, seed, start, marks);
}

// Reference generator: independent Poisson clocks per instance, merged. Used to
// regression-test the global-clock sampler on small models.
inline EventStream sample_events_per_instance(const ModelSpec& m, double horizon, std::uint64_t seed) {
    if (m.potts) throw Unsupported("per-instance generation needs a map-family model");
    EventStream s{0.0, horizon, seed, m.name, {}};
    for (std::uint32_t k = 0; k < m.instances.size(); ++k) {
        Rng rng(stream_seed(seed, k));
        for (double t = rng.exponential(m.instances[k].rate); t <= horizon; t += rng.exponential(m.instances[k].rate))
            s.events.push_back({t, k, 0.0});
    }
    std::sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
    return s;
}

inline void check_alphabet(const ModelSpec& m, const Configuration& x) {
    if (x.alphabet != m.alphabet || x.size() != m.lat().size() || (m.alphabet == Alphabet::potts && x.q != m.q))
        throw InvalidArgument("configuration does not match the model's alphabet or lattice");
}

// Applies one event in place. Pinned sites are read but never written.
inline void apply_event(const ModelSpec& m, const Event& e, Configuration& x) {
    auto& st = x.state;
    if (m.potts) {
        const Site i = [&] {
            std::uint32_t seen = 0;
            for (Site s = 0; s < m.lat().size(); ++s)
                if (!m.lat().pinned(s) && seen++ == e.instance) return s;
            throw InvalidArgument("potts event outside lattice");
        }();
        const auto w = models::potts_weights(m, x, i);
        double acc = 0.0;
        std::size_t pick = w.size() - 1;
        for (std::size_t k = 0; k < w.size(); ++k) {
            acc += w[k];
            if (e.mark < acc) {
                pick = k;
                break;
            }
        }
        st[i] = static_cast<std::int8_t>(pick + 1);
        return;
    }
    const auto& mp = m.instances[e.instance].map;
    const bool pins = m.lat().has_pinned();
    apply_map(
        mp, [&](Site s) { return static_cast<int>(st[s]); },
        [&](Site s, int v) {
            if (!pins || !m.lat().pinned(s)) st[s] = static_cast<std::int8_t>(v);
        });
}

// Faster Potts path: maps event instance to its site through a precomputed table.
class EventApplier {
public:
    explicit EventApplier(const ModelSpec& m) : model_(&m) {
        if (m.potts)
            for (Site i = 0; i < m.lat().size(); ++i)
                if (!m.lat().pinned(i)) potts_sites_.push_back(i);
    }

    void operator()(const Event& e, Configuration& x) const {
        if (!model_->potts) {
            apply_event(*model_, e, x);
            return;
        }
        const Site i = potts_sites_[e.instance];
        const auto w = models::potts_weights(*model_, x, i);
        double acc = 0.0;
        std::size_t pick = w.size() - 1;
        for (std::size_t k = 0; k < w.size(); ++k) {
            acc += w[k];
            if (e.mark < acc) {
                pick = k;
                break;
            }
        }
        x.state[i] = static_cast<std::int8_t>(pick + 1);
    }

private:
    const ModelSpec* model_;
    std::vector<Site> potts_sites_;
};

struct Trajectory {
    Configuration initial;
    std::vector<double> times;
    std::vector<Configuration> states;
};

// Composition of all event maps with time <= t, in time order, for each sample time.
inline Trajectory evolve(const ModelSpec& m, const EventStream& s, Configuration x0, std::span<const double> times) {
    check_alphabet(m, x0);
    for (std::size_t k = 0; k < times.size(); ++k) {
        require(times[k] >= s.start && times[k] <= s.horizon, "sample time outside the stream window");
        require(k == 0 || times[k] >= times[k - 1], "sample times must be sorted");
    }
    EventApplier apply(m);
    Trajectory tr{x0, {times.begin(), times.end()}, {}};
    std::size_t next = 0;
    for (double t : times) {
        while (next < s.events.size() && s.events[next].time <= t) apply(s.events[next++], x0);
        tr.states.push_back(x0);
    }
    return tr;
}

// Applies the events with s < time <= u to x.
inline Configuration evolve_window(const ModelSpec& m, const EventStream& st, Configuration x, double s, double u) {
    check_alphabet(m, x);
    EventApplier apply(m);
    for (const auto& e : st.events)
        if (e.time > s && e.time <= u) apply(e, x);
    return x;
}

inline Configuration evolve_to(const ModelSpec& m, const EventStream& st, Configuration x, double t) {
    return evolve_window(m, st, std::move(x), st.start, t);
}

// Backward sweep defining the set of sites at time s that can influence A at time u.
inline std::vector<Site> relevance_set(const ModelSpec& m, const EventStream& st, std::span<const Site> a, double u,
                                       double s) {
    require(s <= u, "relevance_set needs s <= u");
    if (m.potts) throw Unsupported("relevance sets need a map-family model");
    const std::size_t n = m.lat().size();
    std::vector<std::uint8_t> in(n, 0);
    for (Site i : a) in[i] = 1;
    std::vector<Site> add;
    for (auto it = st.events.rbegin(); it != st.events.rend(); ++it) {
        if (it->time > u) continue;
        if (it->time <= s) break;
        const auto& mp = m.instances[it->instance].map;
        const auto dom = domain(mp);
        add.clear();
        bool hit = false;
        for (Site i : dom)
            if (in[i]) {
                hit = true;
                for (Site r : relevance(mp, i)) add.push_back(r);
            }
        if (!hit) continue;
        for (Site i : dom) in[i] = 0;
        for (Site r : add) in[r] = 1;
    }
    std::vector<Site> out;
    for (Site i = 0; i < n; ++i)
        if (in[i]) out.push_back(i);
    return out;
}

// Arrow/block encoding of each instance of an additive (or cancellative) model.
struct ArrowEncoding {
    std::vector<std::vector<std::pair<Site, Site>>> arrows;  // i -> j, i != j
    std::vector<std::vector<Site>> blocks;
    std::vector<std::vector<Site>> supports;
};

inline ArrowEncoding encode_arrows(const ModelSpec& m, bool cancellative = false) {
    if (m.potts) throw Unsupported("arrow encoding needs a map-family model");
    ArrowEncoding enc;
    std::vector<LocalMap> seen;
    for (const auto& inst : m.instances) {
        const auto c = classify(inst.map);
        if (cancellative ? !c.cancellative : !c.additive)
            throw Unsupported(std::string("map is not ") + (cancellative ? "cancellative: " : "additive: ") +
                              inst.map.str());
        const auto am = arrow_matrix(inst.map);
        std::vector<std::pair<Site, Site>> arrows;
        std::vector<Site> blocks;
        for (std::size_t a = 0; a < am.support.size(); ++a) {
            for (std::size_t b = 0; b < am.support.size(); ++b)
                if (a != b && ((am.rows[a] >> b) & 1U)) arrows.emplace_back(am.support[a], am.support[b]);
            if (!((am.rows[a] >> a) & 1U)) blocks.push_back(am.support[a]);
        }
        enc.arrows.push_back(std::move(arrows));
        enc.blocks.push_back(std::move(blocks));
        enc.supports.push_back(am.support);
    }
    return enc;
}

// Sites (j, t) reachable by open paths from sources x {0} in the arrow/block picture.
// With cancellative=true, reach holds the parity of the number of open paths.
inline std::vector<Site> open_path_reach(const ModelSpec& m, const EventStream& st, std::span<const Site> sources,
                                         double t, bool cancellative = false) {
    const auto enc = encode_arrows(m, cancellative);
    std::vector<std::uint8_t> reach(m.lat().size(), 0);
    for (Site s : sources) reach[s] = 1;
    std::vector<std::pair<Site, std::uint8_t>> before;
    for (const auto& e : st.events) {
        if (e.time > t) break;
        if (e.time <= st.start) continue;
        const auto k = e.instance;
        before.clear();
        for (Site s : enc.supports[k]) before.emplace_back(s, reach[s]);
        auto old = [&](Site s) {
            for (const auto& [site, v] : before)
                if (site == s) return v;
            return std::uint8_t{0};
        };
        for (Site b : enc.blocks[k]) reach[b] = 0;
        for (const auto& [i, j] : enc.arrows[k])
            if (old(i)) reach[j] = cancellative ? static_cast<std::uint8_t>(reach[j] ^ 1U) : std::uint8_t{1};
    }
    std::vector<Site> out;
    for (Site i = 0; i < reach.size(); ++i)
        if (reach[i]) out.push_back(i);
    return out;
}

// Runs the dual flow backwards through the same events: Y_s applies the dual instances of
// events in (t-s, t] in decreasing time order. `dual` must list the dual of instance k at
// index k. Returns the configurations at the requested dual times s.
inline Trajectory dual_evolve(const ModelSpec& dual, const EventStream& st, Configuration y0, double t,
                              std::span<const double> dual_times) {
    check_alphabet(dual, y0);
    require(t <= st.horizon && t >= st.start, "dual start outside the stream window");
    Trajectory tr{y0, {dual_times.begin(), dual_times.end()}, {}};
    auto it = std::upper_bound(st.events.begin(), st.events.end(), t, [](double v, const Event& e) { return v < e.time; });
    std::size_t idx = static_cast<std::size_t>(it - st.events.begin());
    for (double s : dual_times) {
        require(s >= 0.0 && s <= t - st.start, "dual time outside window");
        while (idx > 0 && st.events[idx - 1].time > t - s) {
            apply_event(dual, st.events[idx - 1], y0);
            --idx;
        }
        tr.states.push_back(y0);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Couplings driven by shared randomness

// The first model's events drive the second model through `translate`; the second
// model additionally receives independent "extra" events carrying whatever rate the
// shared events do not supply.
struct Coupling {
    const ModelSpec* first = nullptr;
    const ModelSpec* second = nullptr;
    std::vector<std::optional<std::uint32_t>> translate;  // per first-model instance
};

struct CouplingPlan {
    Coupling coupling;
    ModelSpec extras;  // instances of `second` with leftover rates
    std::vector<std::uint32_t> extra_to_second;
};

inline CouplingPlan plan_coupling(const Coupling& c) {
    require(c.first && c.second, "coupling needs two models");
    require(c.translate.size() == c.first->instances.size(), "translation table size mismatch");
    if (c.first->potts || c.second->potts) throw Unsupported("couplings need map-family models");
    std::vector<double> left(c.second->instances.size());
    for (std::size_t k = 0; k < left.size(); ++k) left[k] = c.second->instances[k].rate;
    for (std::size_t a = 0; a < c.translate.size(); ++a)
        if (c.translate[a]) {
            require(*c.translate[a] < left.size(), "translation target out of range");
            require(c.first->instances[a].map.kind != MapKind::linear_or, "unsupported translation");
            left[*c.translate[a]] -= c.first->instances[a].rate;
        }
    CouplingPlan plan{c, {}, {}};
    plan.extras.name = c.second->name + "_extra";
    plan.extras.lattice = c.second->lattice;
    plan.extras.alphabet = c.second->alphabet;
    for (std::size_t k = 0; k < left.size(); ++k) {
        const double scale = std::max(1.0, c.second->instances[k].rate);
        if (left[k] < -1e-12 * scale)
            throw InvalidArgument("inconsistent sharing rule: negative extra rate for " + c.second->instances[k].map.str());
        if (left[k] > 1e-12 * scale) {
            plan.extras.instances.push_back({c.second->instances[k].map, left[k]});
            plan.extra_to_second.push_back(static_cast<std::uint32_t>(k));
        }
    }
    return plan;
}

struct CoupledResult {
    Configuration x, y;
    std::size_t events = 0;
    std::size_t checks = 0;
    bool order_held = true;
    double violation_time = -1.0;
};

using OrderCheck = std::function<bool(const Configuration&, const Configuration&)>;

// Evolves both systems on (0, T] and evaluates `order` after every event.
inline CoupledResult coupled_evolve(const CouplingPlan& plan, Configuration x0, Configuration y0, double horizon,
                                    std::uint64_t seed, const OrderCheck& order) {
    const auto& a = *plan.coupling.first;
    const auto& b = *plan.coupling.second;
    check_alphabet(a, x0);
    check_alphabet(b, y0);
    InstanceSampler sa(a);
    InstanceSampler sx(plan.extras);
    Rng rng(seed);
    const double ra = sa.total_rate(), rx = sx.total_rate(), total = ra + rx;
    CoupledResult res{std::move(x0), std::move(y0)};
    res.order_held = order(res.x, res.y);
    ++res.checks;
    if (!res.order_held) {
        res.violation_time = 0.0;
        return res;
    }
    double t = 0.0;
    while (total > 0.0) {
        t += rng.exponential(total);
        if (t > horizon) break;
        Event e{t, 0, 0.0};
        if (rng.uniform() * total < ra) {
            e.instance = sa.draw(rng);
            apply_event(a, e, res.x);
            if (const auto& tr = plan.coupling.translate[e.instance]) {
                Event f{t, *tr, 0.0};
                apply_event(b, f, res.y);
            }
        } else {
            const auto k = sx.draw(rng);
            Event f{t, plan.extra_to_second[k], 0.0};
            apply_event(b, f, res.y);
        }
        ++res.events;
        ++res.checks;
        if (!order(res.x, res.y)) {
            res.order_held = false;
            res.violation_time = t;
            return res;
        }
    }
    return res;
}

// Translation by exact map equality after relabelling sites through `embed`.
inline std::vector<std::optional<std::uint32_t>> translate_by_embedding(const ModelSpec& from, const ModelSpec& to,
                                                                        const std::function<Site(Site)>& embed) {
    std::vector<std::optional<std::uint32_t>> out(from.instances.size());
    for (std::size_t a = 0; a < from.instances.size(); ++a) {
        auto m = from.instances[a].map;
        for (auto& s : m.s) s = embed(s);
        for (auto& s : m.sites) s = embed(s);
        for (std::size_t k = 0; k < to.instances.size(); ++k)
            if (to.instances[k].map == m) {
                out[a] = static_cast<std::uint32_t>(k);
                break;
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Event CSV dump: time, map_kind, i, j, k, level

inline void write_events_csv(std::ostream& out, const ModelSpec& m, const EventStream& st) {
    out << "time,map_kind,i,j,k,level\n";
    out.precision(17);
    for (const auto& e : st.events) {
        out << e.time << ",";
        if (m.potts) {
            out << "potts," << e.instance << ",,," << e.mark << "\n";
            continue;
        }
        const auto& mp = m.instances[e.instance].map;
        out << kind_name(mp.kind) << "," << mp.s[0] << "," << mp.s[1] << "," << mp.s[2] << "," << mp.level << "\n";
    }
}

}  // namespace ips
