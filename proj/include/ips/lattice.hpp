#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ips/error.hpp"
#include "ips/rng.hpp"

namespace ips {

using Site = std::uint32_t;

enum class LatticeKind { torus, ring, frozen_box, complete };
enum class Neighborhood { exclude_self, include_self };
enum class Norm { l1, sup };

struct LatticeSpec {
    LatticeKind kind = LatticeKind::torus;
    int dim = 1;
    std::vector<int> sides;  // per axis; a complete graph uses {N}
    int range = 1;
    Norm norm = Norm::l1;
    Neighborhood convention = Neighborhood::exclude_self;
    std::optional<int> boundary_value;  // frozen box only
};

class Lattice {
public:
    explicit Lattice(LatticeSpec spec) : spec_(std::move(spec)) { build(); }

    static Lattice torus(int d, int side, int range = 1, Norm norm = Norm::l1) {
        return Lattice({LatticeKind::torus, d, std::vector<int>(static_cast<std::size_t>(d), side), range, norm,
                        Neighborhood::exclude_self, std::nullopt});
    }
    static Lattice ring(int n) {
        return Lattice({LatticeKind::ring, 1, {n}, 1, Norm::l1, Neighborhood::exclude_self, std::nullopt});
    }
    static Lattice complete(int n, Neighborhood convention = Neighborhood::include_self) {
        return Lattice({LatticeKind::complete, 1, {n}, 1, Norm::l1, convention, std::nullopt});
    }
    static Lattice frozen_box(int d, int side, int boundary_value, int range = 1, Norm norm = Norm::l1) {
        return Lattice({LatticeKind::frozen_box, d, std::vector<int>(static_cast<std::size_t>(d), side), range, norm,
                        Neighborhood::exclude_self, boundary_value});
    }

    const LatticeSpec& spec() const { return spec_; }
    LatticeKind kind() const { return spec_.kind; }
    int dim() const { return spec_.dim; }
    const std::vector<int>& sides() const { return spec_.sides; }
    std::size_t size() const { return n_; }

    std::span<const Site> neighbors(Site i) const {
        if (implicit_complete_) return {all_sites_.data(), all_sites_.size()};
        return {flat_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }

    bool regular() const { return regular_; }
    std::size_t degree() const {
        if (!regular_) throw InvalidArgument("lattice is not regular");
        return n_ == 0 ? 0 : neighbors(0).size();
    }

    bool pinned(Site i) const { return !pinned_.empty() && pinned_[i] != 0; }
    bool has_pinned() const { return !pinned_.empty(); }
    const std::vector<std::uint8_t>& pinned_mask() const { return pinned_; }
    std::optional<int> boundary_value() const { return spec_.boundary_value; }
    std::size_t dynamic_count() const {
        return pinned_.empty() ? n_ : n_ - static_cast<std::size_t>(std::count(pinned_.begin(), pinned_.end(), 1));
    }

    std::vector<int> coords(Site i) const {
        std::vector<int> c(static_cast<std::size_t>(spec_.dim));
        std::size_t rest = i;
        for (int a = spec_.dim - 1; a >= 0; --a) {
            const auto side = static_cast<std::size_t>(spec_.sides[static_cast<std::size_t>(a)]);
            c[static_cast<std::size_t>(a)] = static_cast<int>(rest % side);
            rest /= side;
        }
        return c;
    }

    Site index(std::span<const int> c) const {
        std::size_t idx = 0;
        for (int a = 0; a < spec_.dim; ++a) {
            const int side = spec_.sides[static_cast<std::size_t>(a)];
            const int x = c[static_cast<std::size_t>(a)];
            if (x < 0 || x >= side) throw InvalidArgument("coordinate outside lattice");
            idx = idx * static_cast<std::size_t>(side) + static_cast<std::size_t>(x);
        }
        return static_cast<Site>(idx);
    }

    // Site reached from i by moving `delta` along `axis`; wraps on torus/ring.
    Site shift(Site i, int axis, int delta) const {
        auto c = coords(i);
        const int side = spec_.sides[static_cast<std::size_t>(axis)];
        int& x = c[static_cast<std::size_t>(axis)];
        x += delta;
        if (spec_.kind == LatticeKind::torus || spec_.kind == LatticeKind::ring) {
            x = ((x % side) + side) % side;
        } else if (x < 0 || x >= side) {
            throw InvalidArgument("shift leaves the box");
        }
        return index(c);
    }

    bool periodic() const { return spec_.kind == LatticeKind::torus || spec_.kind == LatticeKind::ring; }

    std::string describe() const {
        static const char* names[] = {"torus", "ring", "frozen-box", "complete"};
        std::string s = names[static_cast<int>(spec_.kind)];
        s += " d=" + std::to_string(spec_.dim) + " sides=";
        for (std::size_t a = 0; a < spec_.sides.size(); ++a) s += (a ? "x" : "") + std::to_string(spec_.sides[a]);
        s += " R=" + std::to_string(spec_.range);
        return s;
    }

private:
    void build() {
        auto& s = spec_;
        require(s.dim >= 1, "lattice dimension must be positive");
        require(s.range >= 1, "interaction range must be >= 1");
        if (s.kind == LatticeKind::ring) {
            require(s.dim == 1 && s.sides.size() == 1, "ring is one-dimensional");
            require(s.range == 1, "ring has nearest-neighbour range");
        }
        if (s.kind == LatticeKind::complete) {
            require(s.sides.size() == 1 && s.sides[0] >= 1, "complete graph needs N >= 1");
            s.dim = 1;
            build_complete();
            return;
        }
        require(s.sides.size() == static_cast<std::size_t>(s.dim), "one side length per axis required");
        require(s.convention == Neighborhood::exclude_self, "include-self is reserved for complete graphs");
        const bool periodic_kind = periodic();
        for (int side : s.sides) {
            if (periodic_kind)
                require(side >= 2 * s.range + 1, "torus side must be at least 2R+1");
            else
                require(side >= 3, "frozen box side must be at least 3");
        }
        if (s.kind == LatticeKind::frozen_box)
            require(s.boundary_value.has_value(), "frozen box needs a boundary value");

        n_ = 1;
        for (int side : s.sides) n_ *= static_cast<std::size_t>(side);

        std::vector<std::vector<int>> offs;
        std::vector<int> o(static_cast<std::size_t>(s.dim), -s.range);
        for (;;) {
            int l1 = 0, sup = 0;
            for (int v : o) {
                l1 += std::abs(v);
                sup = std::max(sup, std::abs(v));
            }
            const int r = s.norm == Norm::l1 ? l1 : sup;
            if (r > 0 && r <= s.range) offs.push_back(o);
            int a = s.dim - 1;
            while (a >= 0 && ++o[static_cast<std::size_t>(a)] > s.range) o[static_cast<std::size_t>(a--)] = -s.range;
            if (a < 0) break;
        }

        offsets_.assign(n_ + 1, 0);
        std::vector<Site> nb;
        if (s.kind == LatticeKind::frozen_box) pinned_.assign(n_, 0);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto c = coords(static_cast<Site>(i));
            nb.clear();
            for (const auto& off : offs) {
                std::vector<int> cc(c);
                bool inside = true;
                for (std::size_t a = 0; a < cc.size(); ++a) {
                    cc[a] += off[a];
                    if (periodic_kind)
                        cc[a] = ((cc[a] % s.sides[a]) + s.sides[a]) % s.sides[a];
                    else if (cc[a] < 0 || cc[a] >= s.sides[a])
                        inside = false;
                }
                if (inside) nb.push_back(index(cc));
            }
            std::sort(nb.begin(), nb.end());
            flat_.insert(flat_.end(), nb.begin(), nb.end());
            offsets_[i + 1] = flat_.size();
            if (s.kind == LatticeKind::frozen_box) {
                for (std::size_t a = 0; a < c.size(); ++a)
                    if (c[a] == 0 || c[a] == s.sides[a] - 1) pinned_[i] = 1;
            }
        }
        regular_ = true;
        for (std::size_t i = 1; i < n_; ++i)
            if (offsets_[i + 1] - offsets_[i] != offsets_[1] - offsets_[0]) regular_ = false;
    }

    void build_complete() {
        n_ = static_cast<std::size_t>(spec_.sides[0]);
        all_sites_.resize(n_);
        std::iota(all_sites_.begin(), all_sites_.end(), Site{0});
        regular_ = true;
        if (spec_.convention == Neighborhood::include_self) {
            implicit_complete_ = true;
            return;
        }
        require(n_ <= 8192, "exclude-self complete graph limited to 8192 sites");
        offsets_.assign(n_ + 1, 0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j)
                if (j != i) flat_.push_back(static_cast<Site>(j));
            offsets_[i + 1] = flat_.size();
        }
    }

    LatticeSpec spec_;
    std::size_t n_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<Site> flat_;
    std::vector<Site> all_sites_;
    std::vector<std::uint8_t> pinned_;
    bool implicit_complete_ = false;
    bool regular_ = false;
};

// ---------------------------------------------------------------------------
// Configurations

enum class Alphabet { binary, spin, potts };

struct Configuration {
    Alphabet alphabet = Alphabet::binary;
    int q = 2;  // alphabet size; states are {0,1}, {-1,+1} or {1..q}
    std::vector<std::int8_t> state;

    std::size_t size() const { return state.size(); }
    std::int8_t operator[](std::size_t i) const { return state[i]; }
    std::int8_t& operator[](std::size_t i) { return state[i]; }
    bool operator==(const Configuration&) const = default;

    std::size_t count(std::int8_t value) const {
        return static_cast<std::size_t>(std::count(state.begin(), state.end(), value));
    }

    bool valid() const {
        return std::all_of(state.begin(), state.end(), [&](std::int8_t v) { return in_alphabet(v); });
    }

    bool in_alphabet(int v) const {
        switch (alphabet) {
            case Alphabet::binary: return v == 0 || v == 1;
            case Alphabet::spin: return v == -1 || v == 1;
            case Alphabet::potts: return v >= 1 && v <= q;
        }
        return false;
    }

    static Configuration filled(std::size_t n, std::int8_t value, Alphabet a = Alphabet::binary, int q = 2) {
        Configuration c{a, a == Alphabet::potts ? q : 2, std::vector<std::int8_t>(n, value)};
        if (!c.in_alphabet(value)) throw InvalidArgument("fill value outside alphabet");
        return c;
    }
    static Configuration zeros(std::size_t n) { return filled(n, 0); }
    static Configuration ones(std::size_t n) { return filled(n, 1); }

    // Independent sites: binary/spin take the "high" value with probability p.
    static Configuration product(std::size_t n, double p, Rng& rng, Alphabet a = Alphabet::binary) {
        Configuration c{a, 2, std::vector<std::int8_t>(n)};
        const std::int8_t lo = a == Alphabet::spin ? -1 : 0;
        for (auto& v : c.state) v = rng.bernoulli(p) ? 1 : lo;
        return c;
    }

    static Configuration uniform_potts(std::size_t n, int q, Rng& rng) {
        Configuration c{Alphabet::potts, q, std::vector<std::int8_t>(n)};
        for (auto& v : c.state) v = static_cast<std::int8_t>(1 + rng.below(static_cast<std::uint64_t>(q)));
        return c;
    }

    static Configuration indicator(std::size_t n, std::span<const Site> sites) {
        auto c = zeros(n);
        for (Site s : sites) c.state[s] = 1;
        return c;
    }
};

// Writes the lattice's boundary value into every pinned site.
inline void pin_boundary(const Lattice& lattice, Configuration& x) {
    if (!lattice.has_pinned()) return;
    const auto v = static_cast<std::int8_t>(*lattice.boundary_value());
    if (!x.in_alphabet(v)) throw InvalidArgument("boundary value outside alphabet");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (lattice.pinned(static_cast<Site>(i))) x.state[i] = v;
}

// Flat CSV rows: one coordinate column per axis, then the state.
inline void write_configuration_csv(std::ostream& out, const Lattice& lattice, const Configuration& x) {
    for (int a = 0; a < lattice.dim(); ++a) out << "x" << a << ",";
    out << "state\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int c : lattice.coords(static_cast<Site>(i))) out << c << ",";
        out << static_cast<int>(x.state[i]) << "\n";
    }
}

}  // namespace ips
