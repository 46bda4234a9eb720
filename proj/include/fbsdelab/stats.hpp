#ifndef FBSDELAB_STATS_HPP
#define FBSDELAB_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fbsde {

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

inline MeanSE mean_se(const std::vector<double>& xs) {
    MeanSE r;
    r.n = xs.size();
    if (r.n == 0) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(r.n);
    if (r.n < 2) return r;
    double v = 0.0;
    for (double x : xs) v += (x - r.mean) * (x - r.mean);
    v /= static_cast<double>(r.n - 1);
    r.se = std::sqrt(v / static_cast<double>(r.n));
    return r;
}

// Regularized upper incomplete gamma Q(a, x), series + continued fraction.
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) by series, Q = 1 - P
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
        }
        double p = sum * std::exp(-x + a * std::log(x) - lg);
        return 1.0 - p;
    }
    // Lentz continued fraction for Q
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - lg);
}

// chi-square upper tail p-value
inline double chi2_pvalue(double stat, double dof) { return gamma_q(dof / 2.0, stat / 2.0); }

// Kolmogorov asymptotic survival function Q_KS(t) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2)
inline double kolmogorov_q(double t) {
    if (t <= 0.0) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * t * t);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KSResult {
    double statistic = 0.0;  // sup |F_n - F|
    double p_value = 1.0;
};

// One-sample KS test against a cdf; small-sample corrected p-value.
template <typename Cdf>
KSResult ks_test(std::vector<double> xs, Cdf&& cdf) {
    KSResult r;
    const std::size_t n = xs.size();
    if (n == 0) return r;
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double f = cdf(xs[i]);
        double lo = static_cast<double>(i) / n;
        double hi = static_cast<double>(i + 1) / n;
        d = std::max(d, std::max(std::fabs(f - lo), std::fabs(hi - f)));
    }
    r.statistic = d;
    double sn = std::sqrt(static_cast<double>(n));
    r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
    return r;
}

inline KSResult ks_test_exp1(const std::vector<double>& xs) {
    return ks_test(xs, [](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-x); });
}

}  // namespace fbsde

#endif
