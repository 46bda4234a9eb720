#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "fbsdelab/rng.hpp"
#include "fbsdelab/stats.hpp"

using namespace fbsde;

TEST_CASE("mean_se on a known sample") {
    std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
    MeanSE m = mean_se(xs);
    REQUIRE(m.mean == Catch::Approx(2.5));
    // sample variance 5/3, se = sqrt(5/12)
    REQUIRE(m.se == Catch::Approx(std::sqrt(5.0 / 12.0)));
    REQUIRE(m.n == 4);
}

TEST_CASE("chi-square tail probabilities match tabulated values") {
    // reference values from standard chi-square tables
    REQUIRE(chi2_pvalue(3.841, 1.0) == Catch::Approx(0.05).margin(5e-4));
    REQUIRE(chi2_pvalue(5.991, 2.0) == Catch::Approx(0.05).margin(5e-4));
    REQUIRE(chi2_pvalue(18.307, 10.0) == Catch::Approx(0.05).margin(5e-4));
    REQUIRE(chi2_pvalue(2.0, 2.0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-10));
}

TEST_CASE("gamma_q endpoints and special cases") {
    REQUIRE(gamma_q(1.0, 0.0) == Catch::Approx(1.0));
    REQUIRE(gamma_q(1.0, 1.0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
    // Q(1/2, x) = erfc(sqrt(x))
    REQUIRE(gamma_q(0.5, 2.0) == Catch::Approx(std::erfc(std::sqrt(2.0))).epsilon(1e-10));
}

TEST_CASE("kolmogorov tail function") {
    // K(t) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2); at t = 1: ~0.26999967
    REQUIRE(kolmogorov_q(1.0) == Catch::Approx(0.26999967168).epsilon(1e-8));
    REQUIRE(kolmogorov_q(0.0) == Catch::Approx(1.0));
    REQUIRE(kolmogorov_q(10.0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("KS test accepts its own law and rejects a wrong one") {
    RngStream rng(23, 0, 0);
    std::vector<double> xs;
    for (int i = 0; i < 5000; ++i) xs.push_back(rng.exponential(1.0));
    REQUIRE(ks_test_exp1(xs).p_value > 1e-3);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(2.0 * x);  // Exp(1/2), not Exp(1)
    REQUIRE(ks_test_exp1(ys).p_value < 1e-6);
}

TEST_CASE("KS statistic on a tiny hand case") {
    // single observation at the median of U(0,1): D = 1/2
    std::vector<double> xs = {0.5};
    KSResult r = ks_test(xs, [](double x) { return x; });
    REQUIRE(r.statistic == Catch::Approx(0.5));
}
