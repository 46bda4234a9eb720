#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fbsdelab/intensity.hpp"
#include "fbsdelab/rng.hpp"

using namespace fbsde;

namespace {
EnvironmentPath flat(double mean, double horizon) {
    return EnvironmentPath::constant(EmpiricalMeasure::dirac1d(mean), horizon);
}
}  // namespace

TEST_CASE("additive kernel evaluates the lag sum with left limits") {
    AdditiveKernel k;
    k.psi0 = [](double t) { return 1.0 + t; };
    k.psi0_bound = 2.0;
    k.psi1 = [](const EmpiricalMeasure& nu) { return measure_mean(nu); };
    k.psi1_bound = 0.5;
    k.psi2 = [](double u) { return std::exp(-2.0 * u); };
    k.psi2_at0 = 1.0;
    EventLog hist({{0.2, 1.0, 0}, {0.6, 1.0, 0}}, 1.0);
    EnvironmentPath env = flat(0.5, 1.0);
    // at t = 0.6 the event at 0.6 itself is excluded (predictability)
    const double expect = 1.6 + 0.5 + std::exp(-2.0 * 0.4);
    REQUIRE(eval_intensity(k, 0.6, hist, env) == Catch::Approx(expect).epsilon(1e-12));
    // just after, both events count
    const double expect2 = 1.0 + 0.61 + 0.5 + std::exp(-2.0 * 0.41) + std::exp(-2.0 * 0.01);
    REQUIRE(eval_intensity(k, 0.61, hist, env) == Catch::Approx(expect2).epsilon(1e-12));
}

TEST_CASE("negative intensity is a hard failure") {
    AdditiveKernel k = AdditiveKernel::constant(1.0);
    k.psi0 = [](double) { return -0.5; };
    REQUIRE_THROWS_AS(eval_intensity(k, 0.5, EventLog(1.0), flat(0.0, 1.0)),
                      std::runtime_error);
}

TEST_CASE("dominating rate majorizes the intensity over the window") {
    AdditiveKernel k = AdditiveKernel::hawkes(1.0, 0.8, 1.5, 2.0);
    EventLog hist({{0.3, 1.0, 0}, {0.9, 1.0, 0}, {1.1, 1.0, 0}}, 2.0);
    EnvironmentPath env = flat(0.0, 2.0);
    const double t_from = 1.2, t_to = 2.0;
    const double bar = dominating_rate(k, hist, t_from, t_to);
    // grid sweep with the history frozen at t_from (no events after t_from)
    for (int i = 1; i <= 200; ++i) {
        const double t = t_from + (t_to - t_from) * i / 200.0;
        REQUIRE(eval_intensity(k, t, hist, env) <= bar * (1.0 + 1e-12));
    }
    REQUIRE_THROWS_AS(dominating_rate(k, hist, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("regime partition intervals are global prefix sums") {
    RegimeKernel rk;
    rk.n_states = 3;
    rk.h0 = 13.0;  // largest exit rate across rows
    Eigen::MatrixXd q(3, 3);
    q << -3, 1, 2,
          4, -9, 5,
          6, 7, -13;
    rk.rate_matrix = [q](const EmpiricalMeasure&) { return q; };
    const EmpiricalMeasure nu = EmpiricalMeasure::dirac1d(0.0);
    // row-major off-diagonal order: (0,1) (0,2) (1,0) (1,2) (2,0) (2,1)
    // lengths:                        1     2     4     5     6     7
    auto iv0 = partition_intervals(rk, nu, 0);
    REQUIRE(iv0.size() == 2);
    REQUIRE(iv0[0].target == 1);
    REQUIRE(iv0[0].lo == Catch::Approx(0.0));
    REQUIRE(iv0[0].hi == Catch::Approx(1.0));
    REQUIRE(iv0[1].target == 2);
    REQUIRE(iv0[1].lo == Catch::Approx(1.0));
    REQUIRE(iv0[1].hi == Catch::Approx(3.0));
    auto iv1 = partition_intervals(rk, nu, 1);
    REQUIRE(iv1[0].lo == Catch::Approx(3.0));
    REQUIRE(iv1[0].hi == Catch::Approx(7.0));
    REQUIRE(iv1[1].lo == Catch::Approx(7.0));
    REQUIRE(iv1[1].hi == Catch::Approx(12.0));
    auto iv2 = partition_intervals(rk, nu, 2);
    REQUIRE(iv2[0].lo == Catch::Approx(12.0));
    REQUIRE(iv2[1].hi == Catch::Approx(25.0));
    REQUIRE_THROWS_AS(partition_intervals(rk, nu, 3), std::invalid_argument);

    // displacement: r in (0,2)'s interval moves 0 -> 2
    REQUIRE(q_jump(rk, nu, 0, 1.5) == 2);
    REQUIRE(q_jump(rk, nu, 0, 0.5) == 1);
    REQUIRE(q_jump(rk, nu, 0, 20.0) == 0);  // outside state-0 intervals
    REQUIRE(q_jump(rk, nu, 2, 13.0) == -2);
    REQUIRE_THROWS_AS(q_jump(rk, nu, 0, -1.0), std::invalid_argument);

    REQUIRE(regime_candidate_rate(rk) == Catch::Approx(39.0));
}

TEST_CASE("rate matrix validation") {
    RegimeKernel rk;
    rk.n_states = 2;
    rk.h0 = 1.0;
    const EmpiricalMeasure nu = EmpiricalMeasure::dirac1d(0.0);

    rk.rate_matrix = [](const EmpiricalMeasure&) {
        Eigen::MatrixXd q(2, 2);
        q << -1.0, 1.0, 0.5, -0.4;  // row sum != 0
        return q;
    };
    REQUIRE_THROWS_AS(rk.q_at(nu), std::runtime_error);

    rk.rate_matrix = [](const EmpiricalMeasure&) {
        Eigen::MatrixXd q(2, 2);
        q << 1.0, -1.0, 0.5, -0.5;  // negative off-diagonal
        return q;
    };
    REQUIRE_THROWS_AS(rk.q_at(nu), std::runtime_error);

    rk.rate_matrix = [](const EmpiricalMeasure&) {
        Eigen::MatrixXd q(2, 2);
        q << -2.0, 2.0, 0.5, -0.5;  // exceeds declared H0 = 1
        return q;
    };
    REQUIRE_THROWS_AS(rk.q_at(nu), std::runtime_error);

    rk.rate_matrix = [](const EmpiricalMeasure&) {
        Eigen::MatrixXd q(2, 2);
        q << -0.8, 0.8, 0.5, -0.5;
        return q;
    };
    REQUIRE_NOTHROW(rk.q_at(nu));
}
