#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "ips/ips.hpp"

using namespace ips;
using models::share;

namespace {

// Generator entry by direct enumeration of the instances, bits encode ones.
double brute_entry(const ModelSpec& m, std::uint32_t x, std::uint32_t y) {
    const std::size_t n = m.lat().size();
    auto decode = [&](std::uint32_t bits) {
        auto c = Configuration::zeros(n);
        for (std::size_t i = 0; i < n; ++i) c.state[i] = static_cast<std::int8_t>((bits >> i) & 1U);
        return c;
    };
    double off = 0.0, out = 0.0;
    for (const auto& inst : m.instances) {
        const auto z = apply(inst.map, decode(x));
        std::uint32_t bits = 0;
        for (std::size_t i = 0; i < n; ++i) bits |= static_cast<std::uint32_t>(z[i]) << i;
        if (bits == x) continue;
        out += inst.rate;
        if (bits == y) off += inst.rate;
    }
    return x == y ? -out : off;
}

Configuration from_bits(std::size_t n, std::uint32_t bits) {
    auto c = Configuration::zeros(n);
    for (std::size_t i = 0; i < n; ++i) c.state[i] = static_cast<std::int8_t>((bits >> i) & 1U);
    return c;
}

}  // namespace

TEST(Duality, AdditiveDualsOfCatalogMaps) {
    EXPECT_EQ(dual_map(maps::vot(0, 1), DualMode::additive), maps::rw(1, 0));
    EXPECT_EQ(dual_map(maps::bra(0, 1), DualMode::additive), maps::bra(1, 0));
    EXPECT_EQ(dual_map(maps::death(2), DualMode::additive), maps::death(2));
    EXPECT_EQ(dual_map(maps::excl(0, 1), DualMode::additive), maps::excl(0, 1));
}

TEST(Duality, CancellativeDualOfBranching) {
    const auto m = maps::bran(0, 1);
    const auto d = dual_map(m, DualMode::cancellative);
    EXPECT_EQ(d, maps::bran(1, 0));
    // Parity relation <<m(x), y>> = <<x, d(y)>> over all 16 pairs on {0,1}.
    for (std::uint32_t xb = 0; xb < 4; ++xb)
        for (std::uint32_t yb = 0; yb < 4; ++yb) {
            const auto x = from_bits(2, xb), y = from_bits(2, yb);
            const auto mx = apply(m, x), dy = apply(d, y);
            const int lhs = (mx[0] & y[0]) ^ (mx[1] & y[1]);
            const int rhs = (x[0] & dy[0]) ^ (x[1] & dy[1]);
            EXPECT_EQ(lhs, rhs) << xb << " " << yb;
        }
}

TEST(Duality, NonAdditiveMapsHaveNoDual) {
    EXPECT_THROW(dual_map(maps::coop(0, 1, 2), DualMode::additive), Unsupported);
    EXPECT_THROW(dual_map(maps::bra(0, 1), DualMode::cancellative), Unsupported);
}

TEST(DualityProperty, DualIsAnInvolutionAndSatisfiesTheRelation) {
    const std::vector<LocalMap> additive = {maps::vot(0, 1), maps::vot(2, 0), maps::bra(1, 2), maps::death(0),
                                            maps::death2(0, 1), maps::rw(0, 2), maps::excl(1, 2), maps::kill(0, 1)};
    for (const auto& m : additive) {
        if (!classify(m).additive) continue;
        const auto d = dual_map(m, DualMode::additive);
        EXPECT_TRUE(verify_dual(m, d, DualMode::additive)) << m.str();
        EXPECT_TRUE(classify(d).additive) << m.str();
        EXPECT_EQ(dual_map(d, DualMode::additive), m) << m.str();
    }
    const std::vector<LocalMap> cancellative = {maps::bran(0, 1), maps::ann(0, 2), maps::vot(1, 0), maps::death(1),
                                                maps::excl(0, 1)};
    for (const auto& m : cancellative) {
        const auto d = dual_map(m, DualMode::cancellative);
        EXPECT_TRUE(verify_dual(m, d, DualMode::cancellative)) << m.str();
        EXPECT_EQ(dual_map(d, DualMode::cancellative), m) << m.str();
    }
}

TEST(Duality, DualModels) {
    const auto lat = share(Lattice::ring(6));
    auto names = [](const ModelSpec& m) {
        std::multiset<std::pair<std::string, double>> s;
        for (const auto& inst : m.instances) s.emplace(inst.map.str(), inst.rate);
        return s;
    };
    const auto contact = models::contact(lat, 1.4);
    EXPECT_EQ(names(dual_model(contact, DualMode::additive)), names(contact));
    // excl(i,j) and excl(j,i) are the same map, so compare generators.
    const auto excl = models::exclusion(lat);
    EXPECT_EQ(generator_matrix(dual_model(excl, DualMode::additive)).dense(), generator_matrix(excl).dense());
    EXPECT_EQ(names(dual_model(models::voter(lat), DualMode::additive)), names(models::coalescing_rw(lat)));
}

TEST(Duality, DeathGenerator) {
    ModelSpec m;
    m.name = "single_death";
    m.lattice = share(Lattice::complete(1));
    m.add(maps::death(0), 1.0);
    const auto g = generator_matrix(m).dense();
    EXPECT_EQ(g, (std::vector<std::vector<double>>{{0.0, 0.0}, {1.0, -1.0}}));
}

TEST(Duality, ContactGeneratorEntry) {
    const auto g = generator_matrix(models::contact(share(Lattice::ring(3)), 1.0));
    EXPECT_DOUBLE_EQ(g.at(0b001, 0b011), 1.0);
    EXPECT_DOUBLE_EQ(g.at(0b001, 0b000), 1.0);
    EXPECT_DOUBLE_EQ(g.at(0b001, 0b001), -3.0);
}

TEST(DualityProperty, GeneratorRowsSumToZeroAndMatchEnumeration) {
    const auto lat = share(Lattice::ring(3));
    for (const auto& m : {models::contact(lat, 1.3), models::voter(lat), models::biased_voter(lat, 0.5),
                          models::contact_voter(lat, 1.0, 2.0), models::neuhauser_pacala(lat, 0.4), models::threshold_voter(lat),
                          models::coalescing_rw(lat), models::annihilating_rw(lat), models::exclusion(lat),
                          models::annihilating_branching(lat, 1.0), models::coop_death(lat, 2.0), models::coop_rw(lat, 2.0),
                          models::babp(lat, 1.5), models::contact_double_death(lat, 1.0), models::coop_branching_1d(lat, 1.0)}) {
        const auto g = generator_matrix(m);
        for (std::uint32_t x = 0; x < g.dim(); ++x) {
            double sum = 0.0;
            for (const auto& [c, r] : g.rows[x]) sum += r;
            EXPECT_NEAR(sum, 0.0, 1e-14) << m.name;
            for (std::uint32_t y = 0; y < g.dim(); ++y) EXPECT_NEAR(g.at(x, y), brute_entry(m, x, y), 1e-14) << m.name;
        }
    }
}

TEST(Duality, GeneratorRejectsLargeLattices) {
    EXPECT_THROW(generator_matrix(models::contact(share(Lattice::ring(13)), 1.0)), Unsupported);
}

TEST(Duality, ContactIsSelfDualAtGeneratorLevel) {
    const auto m = models::contact(share(Lattice::ring(4)), 1.7);
    const auto g = generator_matrix(m);
    EXPECT_LT(generator_duality_residual(g, generator_matrix(dual_model(m, DualMode::additive)), 0.0), 1e-12);
}

TEST(Duality, VoterIsDualToCoalescingWalks) {
    const auto lat = share(Lattice::ring(5));
    EXPECT_LT(generator_duality_residual(generator_matrix(models::voter(lat)), generator_matrix(models::coalescing_rw(lat)), 0.0),
              1e-12);
}

TEST(Duality, CancellativeGeneratorDuality) {
    const auto m = models::annihilating_branching(share(Lattice::ring(4)), 0.8, 0.6);
    EXPECT_LT(generator_duality_residual(generator_matrix(m), generator_matrix(dual_model(m, DualMode::cancellative)), -1.0),
              1e-12);
}

TEST(Duality, ContactVoterIsQSelfDual) {
    const auto lat = share(Lattice::complete(4, Neighborhood::exclude_self));
    for (const auto& [lambda, gamma] : std::vector<std::pair<double, double>>{{1, 1}, {2, 0.5}, {0.5, 3}}) {
        const auto g = generator_matrix(models::contact_voter(lat, lambda, gamma));
        const double q = gamma / (gamma + lambda);
        EXPECT_LT(generator_duality_residual(g, g, q), 1e-12) << lambda << " " << gamma;
        EXPECT_GT(generator_duality_residual(g, g, q + 0.05), 1e-3) << lambda << " " << gamma;
    }
}

TEST(DualityProperty, ExactRationalResidualIsZero) {
    const auto lat = share(Lattice::ring(3));
    const auto c = models::contact(lat, 2.0);
    EXPECT_EQ(generator_duality_residual(generator_matrix<Rational>(c), generator_matrix<Rational>(dual_model(c, DualMode::additive)),
                                         Rational(0)),
              Rational(0));
    EXPECT_EQ(generator_duality_residual(generator_matrix<Rational>(models::voter(lat)),
                                         generator_matrix<Rational>(models::coalescing_rw(lat)), Rational(0)),
              Rational(0));
    const auto lat3 = share(Lattice::complete(3, Neighborhood::exclude_self));
    const auto covo = generator_matrix<Rational>(models::contact_voter(lat3, 1.0, 2.0));
    EXPECT_EQ(generator_duality_residual(covo, covo, Rational(2, 3)), Rational(0));
    const auto ab = models::annihilating_branching(lat, 1.0, 3.0);
    EXPECT_EQ(generator_duality_residual(generator_matrix<Rational>(ab),
                                         generator_matrix<Rational>(dual_model(ab, DualMode::cancellative)), Rational(-1)),
              Rational(0));
}

TEST(Duality, PathwiseAdditiveDualityOfContact) {
    PathwiseOptions opt;
    opt.horizon = 5.0;
    opt.seeds = 1000;
    const auto rep = pathwise_duality_assert(models::contact(share(Lattice::ring(20)), 1.5), DualMode::additive, opt);
    EXPECT_TRUE(rep.passed);
    EXPECT_EQ(rep.runs, 1000u);
}

TEST(Duality, PathwiseCancellativeDuality) {
    PathwiseOptions opt;
    opt.seeds = 1000;
    const auto rep =
        pathwise_duality_assert(models::annihilating_branching(share(Lattice::ring(20)), 1.0, 0.5), DualMode::cancellative, opt);
    EXPECT_TRUE(rep.passed);
}

TEST(Duality, PathwiseEmptyDualStartIsTrivial) {
    PathwiseOptions opt;
    opt.seeds = 50;
    opt.y0_density = 0.0;
    EXPECT_TRUE(pathwise_duality_assert(models::voter(share(Lattice::ring(10))), DualMode::additive, opt).passed);
}

TEST(Duality, PathwiseRejectsNonAdditiveModels) {
    PathwiseOptions opt;
    opt.seeds = 5;
    EXPECT_THROW(pathwise_duality_assert(models::coop_death(share(Lattice::ring(10)), 2.0), DualMode::additive, opt), Unsupported);
}

// Negative control: running the voter model itself backwards instead of coalescing walks
// breaks the pathwise identity on some realizations.
TEST(Duality, PathwiseIdentityDetectsAWrongDual) {
    const auto lat = share(Lattice::ring(8));
    const auto v = models::voter(lat);
    const auto dv = dual_model(v, DualMode::additive);
    const DualityFunction psi{0.0};
    const std::vector<double> at = {3.0};
    std::size_t mismatches = 0;
    Rng rng(5);
    for (std::size_t r = 0; r < 200; ++r) {
        const auto st = sample_events(v, 3.0, stream_seed(6, r));
        const auto x0 = Configuration::product(8, 0.5, rng), y0 = Configuration::product(8, 0.3, rng);
        const auto xt = evolve_to(v, st, x0, 3.0);
        EXPECT_EQ(psi(xt, y0), psi(x0, dual_evolve(dv, st, y0, 3.0, at).states[0]));
        mismatches += psi(xt, y0) != psi(x0, dual_evolve(v, st, y0, 3.0, at).states[0]);
    }
    EXPECT_GT(mismatches, 0u);
}

TEST(Duality, PathwiseDualityOfBiasedVoter) {
    PathwiseOptions opt;
    opt.seeds = 200;
    EXPECT_TRUE(pathwise_duality_assert(models::biased_voter(share(Lattice::ring(8)), 2.0), DualMode::additive, opt).passed);
}

TEST(DualityProperty, PsiIsMultiplicativeOverDisjointSupports) {
    Rng rng(7);
    for (double q : {0.0, -1.0, 0.3, 0.8}) {
        const DualityFunction psi{q};
        for (int rep = 0; rep < 100; ++rep) {
            const auto x = Configuration::product(12, 0.5, rng);
            auto y = Configuration::zeros(12), z = Configuration::zeros(12), yz = Configuration::zeros(12);
            for (Site i = 0; i < 12; ++i) {
                const double u = rng.uniform();
                if (u < 0.3) {
                    y.state[i] = 1;
                } else if (u < 0.6) {
                    z.state[i] = 1;
                }
                yz.state[i] = static_cast<std::int8_t>(y[i] | z[i]);
            }
            EXPECT_NEAR(psi(x, yz), psi(x, y) * psi(x, z), 1e-15);
        }
    }
    const auto x = Configuration::ones(3), y = Configuration::indicator(3, std::vector<Site>{0, 2});
    EXPECT_EQ(DualityFunction{0.0}(x, y), 0.0);
    EXPECT_EQ(DualityFunction{-1.0}(x, y), 1.0);
    EXPECT_EQ(DualityFunction{0.0}(x, Configuration::zeros(3)), 1.0);
}

// With gamma = 0 the identity reads: survival probability from one site equals the
// upper invariant density.
TEST(Duality, ContactVoterIdentityWithoutVoting) {
    const std::vector<Site> y = {0};
    const auto r = covo_extinction_identity(2.5, 0.0, y, share(Lattice::ring(101)), 30.0, 2000, 11);
    EXPECT_EQ(r.q, 0.0);
    const double density = 1.0 - r.lhs.mean;  // lhs is P[X_T(0) = 0] from all ones
    const double survive = 1.0 - r.rhs;
    EXPECT_NEAR(density, survive, 3.0 * std::hypot(r.lhs.se, std::sqrt(survive * (1 - survive) / 2000.0)));
}

TEST(Duality, ContactVoterIdentityBelowThreshold) {
    const std::vector<Site> y = {0};
    const auto r = covo_extinction_identity(0.3, 0.5, y, share(Lattice::ring(51)), 40.0, 500, 12);
    EXPECT_GT(r.lhs.mean, 0.99);
    EXPECT_GT(r.rhs, 0.99);
}
