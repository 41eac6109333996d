// Curie-Weiss drift: fixed points across the transition and a finite-N chain against its ODE.

#include <cstdio>

#include "ips/ips.hpp"

int main() {
    using namespace ips;
    std::printf("beta   fixed points (s = stable, u = unstable)\n");
    for (double beta : {1.0, 1.5, 2.0, 2.5, 3.0, 4.0}) {
        std::printf("%4.1f  ", beta);
        for (const auto& p : meanfield::fixed_points(meanfield::ising(beta)).points)
            std::printf(" %+.4f%c", p.x, p.stability == meanfield::Stability::stable ? 's' : 'u');
        std::printf("\n");
    }

    const auto spec = meanfield::ising(3.0);
    const auto ode = meanfield::integrate_ode(spec, 0.1, 10.0);
    Rng rng(11);
    const auto chain = meanfield::simulate_chain(spec, 10000, 0.1, 10.0, rng);
    std::printf("\n   t    ODE     chain (N = 10000)\n");
    for (double t = 0.0; t <= 10.0; t += 1.0)
        std::printf("%4.1f  %.4f  %.4f\n", t, ode.at(t), meanfield::chain_value_at(chain, t));
    std::printf("sup deviation %.4f\n", meanfield::sup_deviation(chain, ode, 10.0));
}
