// Dual maps, a pathwise duality check and the contact-voter q-duality on a small graph.

#include <cstdio>

#include "ips/ips.hpp"

int main() {
    using namespace ips;
    for (const auto& m : {maps::vot(0, 1), maps::bra(0, 1), maps::death(0), maps::excl(0, 1)})
        std::printf("%-12s dual %s\n", m.str().c_str(), dual_map(m, DualMode::additive).str().c_str());

    PathwiseOptions opt;
    opt.horizon = 5.0;
    opt.seeds = 200;
    const auto rep = pathwise_duality_assert(models::contact(models::share(Lattice::ring(20)), 2.0), DualMode::additive, opt);
    std::printf("\ncontact on a 20-ring: identity held in %zu runs (%s)\n", rep.runs, rep.passed ? "pass" : "fail");

    const auto lat = models::share(Lattice::complete(4, Neighborhood::exclude_self));
    const double lambda = 2.0, gamma = 0.5;
    const auto g = generator_matrix(models::contact_voter(lat, lambda, gamma));
    std::printf("\ncontact-voter, lambda=%.1f gamma=%.1f\n", lambda, gamma);
    for (double q : {0.1, 0.2, 0.25, 0.3})
        std::printf("  q = %.2f  residual %.3e\n", q, generator_duality_residual(g, g, q));
}
