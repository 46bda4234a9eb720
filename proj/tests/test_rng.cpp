#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "fbsdelab/rng.hpp"
#include "fbsdelab/stats.hpp"

using namespace fbsde;

TEST_CASE("substreams are deterministic") {
    RngStream a(42, 3, 1);
    RngStream b(42, 3, 1);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.uniform() == b.uniform());
        REQUIRE(a.normal() == b.normal());
    }
}

TEST_CASE("distinct substreams differ") {
    RngStream a(42, 3, 1);
    RngStream b(42, 3, 2);
    RngStream c(42, 4, 1);
    RngStream d(43, 3, 1);
    int same_ab = 0, same_ac = 0, same_ad = 0;
    for (int i = 0; i < 100; ++i) {
        double ua = a.uniform();
        if (ua == b.uniform()) ++same_ab;
        if (ua == c.uniform()) ++same_ac;
        if (ua == d.uniform()) ++same_ad;
    }
    REQUIRE(same_ab == 0);
    REQUIRE(same_ac == 0);
    REQUIRE(same_ad == 0);
}

TEST_CASE("uniform stays in (0, 1] and matches moments") {
    RngStream rng(7, 0, 0);
    std::vector<double> xs;
    for (int i = 0; i < 200000; ++i) {
        double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
        xs.push_back(u);
    }
    MeanSE m = mean_se(xs);
    REQUIRE(std::fabs(m.mean - 0.5) <= 4.0 * m.se);
    for (auto& x : xs) x = x * x;
    MeanSE m2 = mean_se(xs);
    REQUIRE(std::fabs(m2.mean - 1.0 / 3.0) <= 4.0 * m2.se);
}

TEST_CASE("normal has unit variance and zero skew") {
    RngStream rng(11, 0, 0);
    std::vector<double> xs, sq, cu;
    for (int i = 0; i < 200000; ++i) {
        double z = rng.normal();
        xs.push_back(z);
        sq.push_back(z * z);
        cu.push_back(z * z * z);
    }
    MeanSE m1 = mean_se(xs), m2 = mean_se(sq), m3 = mean_se(cu);
    REQUIRE(std::fabs(m1.mean) <= 4.0 * m1.se);
    REQUIRE(std::fabs(m2.mean - 1.0) <= 4.0 * m2.se);
    REQUIRE(std::fabs(m3.mean) <= 4.0 * m3.se);
}

TEST_CASE("exponential matches its rate") {
    RngStream rng(13, 0, 0);
    std::vector<double> xs;
    for (int i = 0; i < 100000; ++i) xs.push_back(rng.exponential(2.5));
    MeanSE m = mean_se(xs);
    REQUIRE(std::fabs(m.mean - 0.4) <= 4.0 * m.se);
    KSResult ks = ks_test(xs, [](double x) { return 1.0 - std::exp(-2.5 * x); });
    REQUIRE(ks.p_value > 1e-4);
}

TEST_CASE("discrete sampling matches probabilities") {
    RngStream rng(17, 0, 0);
    std::vector<std::pair<double, double>> law = {{-1.0, 0.2}, {0.5, 0.5}, {2.0, 0.3}};
    int counts[3] = {0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[rng.discrete(law)];
    for (int j = 0; j < 3; ++j) {
        double p = law[static_cast<std::size_t>(j)].second;
        double se = std::sqrt(p * (1.0 - p) / n);
        REQUIRE(std::fabs(counts[j] / static_cast<double>(n) - p) <= 4.0 * se);
    }
}

TEST_CASE("uniform range endpoints") {
    RngStream rng(19, 0, 0);
    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform(-2.0, 3.0);
        REQUIRE(u > -2.0);
        REQUIRE(u <= 3.0);
    }
}
