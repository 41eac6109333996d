#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace ips::stats {

// Pairwise summation; result depends only on the order of `xs`.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return lo <= x && x <= hi; }
};

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean
    std::size_t n = 0;
    Interval ci(double z = 1.959963984540054) const { return {mean - z * se, mean + z * se}; }
};

inline MeanEstimate mean_se(std::span<const double> xs) {
    MeanEstimate out;
    out.n = xs.size();
    if (xs.empty()) return out;
    out.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        std::vector<double> sq(xs.size());
        for (std::size_t k = 0; k < xs.size(); ++k) sq[k] = (xs[k] - out.mean) * (xs[k] - out.mean);
        const double var = pairwise_sum(sq) / static_cast<double>(xs.size() - 1);
        out.se = std::sqrt(var / static_cast<double>(xs.size()));
    }
    return out;
}

inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

// Wilson score interval for a binomial proportion.
inline Interval wilson(std::size_t successes, std::size_t n, double confidence = 0.95) {
    if (n == 0) return {0.0, 1.0};
    const double z = normal_quantile(0.5 + confidence / 2.0);
    const double nn = static_cast<double>(n);
    const double phat = static_cast<double>(successes) / nn;
    const double denom = 1.0 + z * z / nn;
    const double centre = (phat + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z * z / (4.0 * nn * nn)) / denom;
    // Rounding can push the bound past an extreme estimate; the limits are exact there.
    return {successes == 0 ? 0.0 : std::max(0.0, centre - half), successes == n ? 1.0 : std::min(1.0, centre + half)};
}

inline double chi2_quantile(double dof, double p) {
    return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

inline double chi2_sf(double dof, double x) {
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), x));
}

struct ChiSquare {
    double statistic = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
};

// Goodness of fit of observed counts against expected probabilities.
inline ChiSquare chi_square_gof(std::span<const double> observed, std::span<const double> probs) {
    if (observed.size() != probs.size() || observed.size() < 2)
        throw std::invalid_argument("chi_square_gof: size mismatch");
    double n = 0.0;
    for (double o : observed) n += o;
    ChiSquare out;
    for (std::size_t k = 0; k < observed.size(); ++k) {
        const double e = n * probs[k];
        if (e <= 0.0) throw std::invalid_argument("chi_square_gof: zero expected count");
        out.statistic += (observed[k] - e) * (observed[k] - e) / e;
    }
    out.dof = static_cast<double>(observed.size() - 1);
    out.p_value = chi2_sf(out.dof, out.statistic);
    return out;
}

// Pearson independence test on an r x c contingency table (row-major).
inline ChiSquare chi_square_independence(std::span<const double> table, std::size_t rows, std::size_t cols) {
    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    double n = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            row_sum[r] += table[r * cols + c];
            col_sum[c] += table[r * cols + c];
            n += table[r * cols + c];
        }
    ChiSquare out;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double e = row_sum[r] * col_sum[c] / n;
            if (e > 0.0) out.statistic += (table[r * cols + c] - e) * (table[r * cols + c] - e) / e;
        }
    out.dof = static_cast<double>((rows - 1) * (cols - 1));
    out.p_value = chi2_sf(out.dof, out.statistic);
    return out;
}

// Asymptotic Kolmogorov survival function Q(x) = 2 sum (-1)^{k-1} e^{-2k^2x^2}.
inline double kolmogorov_sf(double x) {
    if (x < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
    double distance = 0.0;
    double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov distance; handles ties (atoms) exactly.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double d = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] <= x) ++ia;
        while (ib < b.size() && b[ib] <= x) ++ib;
        d = std::max(d, std::abs(ia / na - ib / nb));
    }
    const double ne = na * nb / (na + nb);
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    return {d, kolmogorov_sf(lambda)};
}

// Least-squares slope and intercept of y on x.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    LineFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

}  // namespace ips::stats
