// Survival proxy of the 1D contact process from one infected site, on a shared
// graphical representation so the curve is monotone in lambda by construction.

#include <cstdio>

#include "ips/ips.hpp"

int main() {
    using namespace ips;
    const auto ring = models::share(Lattice::ring(401));
    const std::vector<double> lambdas = {1.0, 1.2, 1.4, 1.5, 1.6, 1.7, 1.8, 2.0, 2.4};
    const auto rows = estimators::theta_curve(ring, lambdas, 100.0, 500, 7);

    std::printf("lambda  theta_hat  95%% interval       truncated\n");
    for (const auto& r : rows)
        std::printf("%6.2f  %9.3f  [%.3f, %.3f]  %9.3f\n", r.lambda, r.theta, r.ci.lo, r.ci.hi, r.truncated_frac);

    const auto c = models::summability_constants(models::contact(ring, 0.4));
    std::printf("\nlambda = 0.4: K = %.2f, the relevance sets shrink, so the process is ergodic\n", c.k);
}
