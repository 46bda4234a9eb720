#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fbsdelab/models.hpp"

using namespace fbsde;

TEST_CASE("lq parameter validation and derived coefficients") {
    LQParams p;  // defaults b=-2, f=1, sigma=0.2, gamma=0.1, f1=2, f2=1, g=1
    REQUIRE_NOTHROW(p.validate());
    REQUIRE(p.b_hat() == Catch::Approx(-3.0));
    REQUIRE(p.f_hat() == Catch::Approx(0.0));

    LQParams bad = p;
    bad.f2 = 2.0;  // |b| f2 = 4
    REQUIRE_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("|b| * f2 = 2"));
    bad = p;
    bad.f1 = 1.4;  // f1 f2 = 1.4 <= f^2/2 + 1 = 1.5
    REQUIRE_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("f1 * f2"));
    bad = p;
    bad.g = -1.0;
    REQUIRE_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("positive"));
    bad = p;
    bad.sigma = 0.0;
    REQUIRE_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("nonzero"));

    LQParams q = p;
    q.b = 4.0;
    q.f2 = 0.5;
    q.f = 0.5;
    q.f1 = 4.0;  // f1 f2 = 2 > 0.125/2 + 1
    REQUIRE_NOTHROW(q.validate());
    REQUIRE(q.b_hat() == Catch::Approx(4.0 - 0.5 / 0.5));
    REQUIRE(q.f_hat() == Catch::Approx(2.0 - 0.25 / 0.5));
}

TEST_CASE("lq model wires the derived coefficients") {
    LQParams p;
    FBSDEModel m = build_lq_model(p);
    REQUIRE(m.beta1 == Catch::Approx(std::max(p.f_hat(), 0.0)).margin(1e-15));
    REQUIRE(m.beta2 == Catch::Approx(1.0 / p.f2));
    REQUIRE(m.beta3 == Catch::Approx(p.g));
    REQUIRE(m.scheme == FBSDEModel::Scheme::BackwardFirst);
    EmpiricalMeasure nu = EmpiricalMeasure::dirac1d(0.5);
    FullArgs a;
    a.x = Eigen::VectorXd::Constant(1, 2.0);
    a.y = Eigen::VectorXd::Constant(1, -1.0);
    a.z = Eigen::MatrixXd::Constant(1, 1, 0.3);
    a.u = {Eigen::VectorXd::Constant(1, 0.1)};
    REQUIRE(m.drift(0.2, nu, a)[0] ==
            Catch::Approx(p.b_hat() * (2.0 - 0.5) - (-1.0) / p.f2));
    REQUIRE(m.driver(0.2, nu, a)[0] ==
            Catch::Approx(p.f_hat() * (2.0 - 0.5) + p.b_hat() * (-1.0)));
    REQUIRE(m.diffusion(0.2, nu, a)(0, 0) == Catch::Approx(p.sigma));
    REQUIRE(m.jump(0.2, 1.0, 0, nu, a)[0] == Catch::Approx(p.gamma));
    REQUIRE(m.terminal(nu, a.x)[0] == Catch::Approx(p.g * 1.5));
}

TEST_CASE("riccati reference matches the closed form") {
    // defaults: b_hat = -3, f_hat = 0, f2 = 1, g = 1:
    //   p' = 6p + p^2, p(T) = 1  =>  p(t) = 6 e^{6(t-T)} / (7 - e^{6(t-T)})
    LQParams lp;
    const double T = 1.0;
    std::vector<double> grid;
    for (int i = 0; i <= 50; ++i) grid.push_back(T * i / 50.0);
    RiccatiReference ref = riccati_reference(lp, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double e = std::exp(6.0 * (grid[i] - T));
        const double exact = 6.0 * e / (7.0 - e);
        REQUIRE(ref.p[i] == Catch::Approx(exact).margin(1e-8));
    }
    REQUIRE(ref.y_predict(50, 2.0) == Catch::Approx(2.0));
    // step quantities reference the right endpoint: the last step sees p(T)
    REQUIRE(ref.z_predict(49) == Catch::Approx(lp.sigma));
    REQUIRE(ref.u_predict(49) == Catch::Approx(lp.gamma));

    // unstable configuration: f2 = -1 gives backward dynamics
    // dp/ds = p^2 - 2p + 2 >= 1, which escapes in finite time
    std::vector<double> long_grid;
    for (int i = 0; i <= 400; ++i) long_grid.push_back(40.0 * i / 400.0);
    LQParams explode = lp;
    explode.f2 = -1.0;
    explode.g = 3.0;
    REQUIRE_THROWS_AS(riccati_reference(explode, long_grid), std::runtime_error);
}

TEST_CASE("hamiltonian adjoint system differentiates the data") {
    HamiltonianSpec spec;
    spec.b = [](double, const EmpiricalMeasure&, double x) { return -x + 0.5 * x * x; };
    spec.sigma = [](double t, const EmpiricalMeasure&, double x) { return 0.3 * x + t; };
    spec.f = [](double, const EmpiricalMeasure&, double x) { return std::sin(x); };
    spec.gamma = [](double, const EmpiricalMeasure&, double x) { return 0.1 * x; };
    spec.g = [](double, const EmpiricalMeasure&, double x) { return x * x; };
    spec.lambda_rate = [](double) { return 2.0; };
    FBSDEModel m = build_hamiltonian_fbsde(spec);

    EmpiricalMeasure nu = EmpiricalMeasure::dirac1d(0.0);
    FullArgs a;
    a.x = Eigen::VectorXd::Constant(1, 0.7);
    a.y = Eigen::VectorXd::Constant(1, 2.0);
    a.z = Eigen::MatrixXd::Constant(1, 1, -1.0);
    a.u = {Eigen::VectorXd::Constant(1, 0.5)};
    // d_x H = f' + y b' + z sigma' + u lambda gamma'
    const double expect =
        std::cos(0.7) + 2.0 * (-1.0 + 0.7) + (-1.0) * 0.3 + 0.5 * 2.0 * 0.1;
    REQUIRE(m.driver(0.4, nu, a)[0] == Catch::Approx(expect).margin(1e-5));
    REQUIRE(m.terminal(nu, a.x)[0] == Catch::Approx(2.0 * 0.7).margin(1e-5));
    REQUIRE(m.drift(0.4, nu, a)[0] == Catch::Approx(-0.7 + 0.5 * 0.49));

    // analytic derivatives must agree with the differences
    spec.df = [](double, const EmpiricalMeasure&, double x) { return std::cos(x); };
    spec.db = [](double, const EmpiricalMeasure&, double x) { return -1.0 + x; };
    REQUIRE(check_hamiltonian_derivatives(spec, nu, 1.0, 200, 3) <= 1e-5);
    spec.df = [](double, const EmpiricalMeasure&, double x) { return std::cos(x) + 0.1; };
    REQUIRE(check_hamiltonian_derivatives(spec, nu, 1.0, 200, 3) > 1e-3);

    // a nonpositive candidate intensity is refused at the jump coefficient
    spec.lambda_rate = [](double) { return 0.0; };
    FBSDEModel bad = build_hamiltonian_fbsde(spec);
    REQUIRE_THROWS_AS(bad.jump(0.4, 1.0, 0, nu, a), std::runtime_error);
}

TEST_CASE("regime chain with zero generator never moves") {
    RegimeKernel rk;
    rk.n_states = 3;
    rk.h0 = 1.0;
    rk.rate_matrix = [](const EmpiricalMeasure&) { return Eigen::MatrixXd::Zero(3, 3); };
    EnvironmentPath env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), 10.0);
    RngStream rng(55, 0, 2);
    RegimeChain chain = simulate_regime_chain(rk, env, 1, 10.0, rng);
    REQUIRE(chain.times.empty());
    REQUIRE(chain.state_at(5.0) == 1);
    REQUIRE_THROWS_AS(simulate_regime_chain(rk, env, 3, 10.0, rng), std::invalid_argument);
}

TEST_CASE("regime chain transitions are recorded consistently") {
    RegimeKernel rk;
    rk.n_states = 2;
    rk.h0 = 3.0;
    rk.rate_matrix = [](const EmpiricalMeasure&) {
        Eigen::MatrixXd q(2, 2);
        q << -1.0, 1.0, 2.0, -2.0;
        return q;
    };
    EnvironmentPath env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), 20.0);
    RngStream rng(57, 0, 2);
    RegimeChain chain = simulate_regime_chain(rk, env, 0, 20.0, rng);
    REQUIRE(!chain.times.empty());
    int cur = 0;
    for (std::size_t i = 0; i < chain.times.size(); ++i) {
        REQUIRE(chain.states[i] != cur);  // every recorded transition moves
        REQUIRE((chain.states[i] == 0 || chain.states[i] == 1));
        cur = chain.states[i];
        if (i > 0) REQUIRE(chain.times[i] > chain.times[i - 1]);
    }
    // event log mirrors the chain: mark = new state on channel 0
    REQUIRE(chain.events.size() == chain.times.size());
    for (std::size_t i = 0; i < chain.times.size(); ++i) {
        REQUIRE(chain.events.events()[i].time == chain.times[i]);
        REQUIRE(chain.events.events()[i].mark ==
                Catch::Approx(static_cast<double>(chain.states[i])));
    }
    REQUIRE(chain.state_at(chain.times.front()) == chain.states.front());
    REQUIRE(chain.state_at(0.0) == 0);
}
