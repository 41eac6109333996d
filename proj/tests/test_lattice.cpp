#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "ips/ips.hpp"

using namespace ips;

namespace {

// Independent neighbour count: enumerate every offset in the (2R+1)^d cube.
std::size_t count_offsets(int d, int range, Norm norm) {
    std::size_t n = 0;
    std::vector<int> off(static_cast<std::size_t>(d), -range);
    for (;;) {
        int l1 = 0, sup = 0;
        for (int v : off) {
            l1 += std::abs(v);
            sup = std::max(sup, std::abs(v));
        }
        const int r = norm == Norm::l1 ? l1 : sup;
        if (r > 0 && r <= range) ++n;
        std::size_t a = 0;
        while (a < off.size() && ++off[a] > range) off[a++] = -range;
        if (a == off.size()) break;
    }
    return n;
}

std::multiset<std::vector<int>> offset_multiset(const Lattice& lat, Site i) {
    std::multiset<std::vector<int>> out;
    const auto ci = lat.coords(i);
    for (Site j : lat.neighbors(i)) {
        auto cj = lat.coords(j);
        std::vector<int> off;
        for (std::size_t a = 0; a < ci.size(); ++a) {
            const int side = lat.sides()[a];
            off.push_back(((cj[a] - ci[a]) % side + side + side / 2) % side - side / 2);
        }
        out.insert(off);
    }
    return out;
}

}  // namespace

TEST(Lattice, RingNeighbours) {
    const auto lat = Lattice::torus(1, 5, 1);
    for (Site i = 0; i < 5; ++i) {
        const auto nb = lat.neighbors(i);
        ASSERT_EQ(nb.size(), 2u);
        std::set<Site> want{(i + 4) % 5, (i + 1) % 5};
        EXPECT_EQ(std::set<Site>(nb.begin(), nb.end()), want);
    }
    const auto r4 = Lattice::ring(4);
    EXPECT_EQ(std::vector<Site>(r4.neighbors(0).begin(), r4.neighbors(0).end()), (std::vector<Site>{1, 3}));
}

TEST(Lattice, SquareTorusHasTwoDNeighbours) {
    const auto lat = Lattice::torus(2, 7, 1, Norm::l1);
    for (Site i = 0; i < lat.size(); ++i) EXPECT_EQ(lat.neighbors(i).size(), 4u);
}

TEST(Lattice, SupNormRangeTwoCount) {
    const auto lat = Lattice::torus(2, 7, 2, Norm::sup);
    const std::size_t oracle = count_offsets(2, 2, Norm::sup);
    EXPECT_EQ(oracle, 24u);
    for (Site i = 0; i < lat.size(); ++i) EXPECT_EQ(lat.neighbors(i).size(), oracle);
}

TEST(Lattice, NeighbourCountsMatchOffsetEnumeration) {
    for (int d : {1, 2, 3})
        for (int range : {1, 2})
            for (Norm norm : {Norm::l1, Norm::sup}) {
                const auto lat = Lattice::torus(d, 2 * range + 3, range, norm);
                EXPECT_EQ(lat.neighbors(0).size(), count_offsets(d, range, norm)) << d << " " << range;
            }
}

TEST(Lattice, CompleteGraphConventions) {
    const auto inc = Lattice::complete(3, Neighborhood::include_self);
    EXPECT_EQ(std::vector<Site>(inc.neighbors(1).begin(), inc.neighbors(1).end()), (std::vector<Site>{0, 1, 2}));
    const auto exc = Lattice::complete(5, Neighborhood::exclude_self);
    for (Site i = 0; i < 5; ++i) {
        EXPECT_EQ(exc.neighbors(i).size(), 4u);
        EXPECT_FALSE(std::binary_search(exc.neighbors(i).begin(), exc.neighbors(i).end(), i));
    }
    const auto big = Lattice::complete(50);
    for (Site i = 0; i < 50; ++i) EXPECT_EQ(big.neighbors(i).size(), 50u);
}

TEST(Lattice, FrozenBoxOneDimensional) {
    const auto lat = Lattice::frozen_box(1, 10, 1);
    EXPECT_EQ(std::vector<Site>(lat.neighbors(1).begin(), lat.neighbors(1).end()), (std::vector<Site>{0, 2}));
    EXPECT_TRUE(lat.pinned(0));
    EXPECT_TRUE(lat.pinned(9));
    for (Site i = 1; i < 9; ++i) EXPECT_FALSE(lat.pinned(i));
    EXPECT_EQ(lat.dynamic_count(), 8u);
}

TEST(Lattice, RejectsTorusSmallerThanRange) {
    EXPECT_THROW(Lattice::torus(1, 4, 2), InvalidArgument);
    EXPECT_THROW(Lattice::torus(2, 2, 1), InvalidArgument);
}

TEST(LatticeProperty, NeighbourRelationIsSymmetricAndSorted) {
    std::vector<Lattice> all = {Lattice::ring(7),
                                Lattice::torus(2, 6, 1),
                                Lattice::torus(2, 7, 2, Norm::sup),
                                Lattice::torus(3, 5, 1),
                                Lattice::complete(6, Neighborhood::include_self),
                                Lattice::complete(6, Neighborhood::exclude_self),
                                Lattice::frozen_box(2, 6, -1),
                                Lattice::frozen_box(2, 8, 1, 2, Norm::sup)};
    for (const auto& lat : all) {
        for (Site i = 0; i < lat.size(); ++i) {
            const auto nb = lat.neighbors(i);
            EXPECT_TRUE(std::is_sorted(nb.begin(), nb.end())) << lat.describe();
            EXPECT_TRUE(std::adjacent_find(nb.begin(), nb.end()) == nb.end()) << lat.describe();
            for (Site j : nb) {
                const auto back = lat.neighbors(j);
                EXPECT_TRUE(std::binary_search(back.begin(), back.end(), i)) << lat.describe() << " " << i << "," << j;
            }
        }
    }
}

TEST(LatticeProperty, TorusOffsetsAreTranslationInvariant) {
    for (const auto& lat : {Lattice::torus(2, 7, 2, Norm::sup), Lattice::torus(3, 5, 1), Lattice::ring(9)}) {
        const auto ref = offset_multiset(lat, 0);
        for (Site i = 1; i < lat.size(); ++i) EXPECT_EQ(offset_multiset(lat, i), ref);
    }
}

TEST(LatticeProperty, RowMajorIndexRoundTrip) {
    const auto lat = Lattice::torus(3, 4, 1);
    for (Site i = 0; i < lat.size(); ++i) {
        const auto c = lat.coords(i);
        EXPECT_EQ(lat.index(c), i);
        EXPECT_EQ(static_cast<std::size_t>(c[0] * 16 + c[1] * 4 + c[2]), i);
    }
}

TEST(Configuration, ProductAndIndicator) {
    Rng rng(3);
    const auto x = Configuration::product(10000, 0.3, rng);
    EXPECT_TRUE(x.valid());
    EXPECT_NEAR(static_cast<double>(x.count(1)) / 10000.0, 0.3, 3.0 * std::sqrt(0.21 / 10000.0));
    const std::vector<Site> s{2, 5};
    const auto ind = Configuration::indicator(8, s);
    EXPECT_EQ(ind.count(1), 2u);
    EXPECT_EQ(ind[5], 1);
}

TEST(Configuration, CsvReportsCoordinates) {
    const auto lat = Lattice::torus(2, 3, 1);
    auto x = Configuration::zeros(lat.size());
    x.state[lat.index(std::array<int, 2>{1, 2})] = 1;
    std::ostringstream out;
    write_configuration_csv(out, lat, x);
    EXPECT_NE(out.str().find("1,2,1"), std::string::npos);
}
