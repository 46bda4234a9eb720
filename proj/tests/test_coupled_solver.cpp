#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fbsdelab/coupled_solver.hpp"

using namespace fbsde;

namespace {

PathBundle bundle(int paths, int steps, std::uint64_t seed) {
    BundleConfig bc;
    bc.horizon = 1.0;
    bc.base_steps = steps;
    bc.n_paths = paths;
    bc.seed = seed;
    bc.kernels = {AdditiveKernel::constant(1.0)};
    bc.env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), 1.0);
    return make_bundle(bc);
}

FBSDEModel deterministic_model(FBSDEModel::Scheme scheme) {
    // b = 1, sigma = gamma = 0, f = 1, g = 0: X_t = t, Y_t = (T - t)
    FBSDEModel m;
    m.d = m.n = m.k = 1;
    m.G = Eigen::MatrixXd::Identity(1, 1);
    m.beta1 = 1.0;
    m.beta2 = scheme == FBSDEModel::Scheme::BackwardFirst ? 1.0 : 0.0;
    m.beta3 = 1.0;
    m.scheme = scheme;
    m.drift = [](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Ones(1);
    };
    m.diffusion = [](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::MatrixXd::Zero(1, 1);
    };
    m.jump = [](double, double, int, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Zero(1);
    };
    m.driver = [](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Ones(1);
    };
    m.terminal = [](const EmpiricalMeasure&, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(1);
    };
    return m;
}

std::function<Eigen::VectorXd(int)> zero_x0() {
    return [](int) { return Eigen::VectorXd::Zero(1); };
}

}  // namespace

TEST_CASE("model validation") {
    FBSDEModel m = deterministic_model(FBSDEModel::Scheme::ForwardFirst);
    REQUIRE_NOTHROW(m.validate());
    m.beta1 = 0.0;
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
    m = deterministic_model(FBSDEModel::Scheme::BackwardFirst);
    m.beta2 = 0.0;
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
    m = deterministic_model(FBSDEModel::Scheme::ForwardFirst);
    m.G = Eigen::MatrixXd::Zero(1, 1);
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("offsets-only forward leg integrates hand values") {
    PathBundle b = bundle(50, 20, 11);
    Offsets off = Offsets::zero(b, 1, 1, 1);
    for (int p = 0; p < b.n_paths(); ++p) off.B[static_cast<std::size_t>(p)].setConstant(1.0);
    auto x = forward_affine(nullptr, b, 0.0, 0.0, &off, nullptr, zero_x0(), 1, 1, 1);
    for (int p = 0; p < b.n_paths(); ++p)
        for (int m = 0; m <= b.n_base_steps(); ++m) {
            const double t = b.base_grid[static_cast<std::size_t>(m)];
            FBSDEIterate it;
            it.x = x;
            REQUIRE(it.x_base(b, p, m)[0] == Catch::Approx(t).margin(1e-12));
        }
}

TEST_CASE("deterministic coupled system solves exactly, both schemes") {
    for (auto scheme : {FBSDEModel::Scheme::ForwardFirst, FBSDEModel::Scheme::BackwardFirst}) {
        PathBundle b = bundle(100, 20, 13);
        FBSDEModel model = deterministic_model(scheme);
        ContinuationConfig cc;
        cc.lsmc.basis.degree = 0;
        cc.picard_tol = 1e-9;
        cc.x0 = zero_x0();
        auto [sol, rep] = continuation_solve(model, b, cc);
        REQUIRE(rep.converged);
        double worst_x = 0.0, worst_y = 0.0;
        for (int p = 0; p < b.n_paths(); ++p)
            for (int m = 0; m <= b.n_base_steps(); ++m) {
                const double t = b.base_grid[static_cast<std::size_t>(m)];
                worst_x = std::max(worst_x, std::fabs(sol.x_base(b, p, m)[0] - t));
                worst_y = std::max(worst_y,
                                   std::fabs(sol.bw.y[static_cast<std::size_t>(p)](0, m) -
                                             (1.0 - t)));
            }
        REQUIRE(worst_x <= 1e-7);
        REQUIRE(worst_y <= 1e-7);
    }
}

TEST_CASE("zero data gives the zero solution") {
    PathBundle b = bundle(60, 10, 17);
    FBSDEModel model = deterministic_model(FBSDEModel::Scheme::ForwardFirst);
    model.drift = [](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Zero(1);
    };
    model.driver = [](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Zero(1);
    };
    ContinuationConfig cc;
    cc.lsmc.basis.degree = 0;
    cc.x0 = zero_x0();
    auto [sol, rep] = continuation_solve(model, b, cc);
    REQUIRE(rep.converged);
    REQUIRE(star_norm_sq(sol, b) <= 1e-16);
}

TEST_CASE("monotonicity verifier accepts and rejects as derived") {
    FBSDEModel model = deterministic_model(FBSDEModel::Scheme::ForwardFirst);
    // f = x + y-free: df = dx, db = 0 -> lhs = -|dx|^2, valid beta1 = 1
    model.driver = [](double, const EmpiricalMeasure&, const FullArgs& a) {
        return Eigen::VectorXd::Constant(1, a.x[0]);
    };
    model.terminal = [](const EmpiricalMeasure&, const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, 2.0 * x[0]);
    };
    model.beta1 = 1.0;
    model.beta2 = 0.0;
    model.beta3 = 2.0;
    MarkGrid marks = MarkGrid::unmarked(1);
    std::vector<EmpiricalMeasure> envs = {EmpiricalMeasure::dirac1d(0.0)};
    MonotonicityReport ok = check_g_monotonicity(model, marks, {1.0}, envs, 1.0, 2000, 5);
    REQUIRE(ok.violations == 0);
    REQUIRE(ok.terminal_violations == 0);

    FBSDEModel bad = model;
    bad.beta1 = 1.5;  // stronger than the coefficients deliver
    MonotonicityReport caught = check_g_monotonicity(bad, marks, {1.0}, envs, 1.0, 2000, 5);
    REQUIRE(caught.violations > 0);
    FBSDEModel badg = model;
    badg.beta3 = 3.0;  // terminal slope is only 2
    MonotonicityReport tcaught = check_g_monotonicity(badg, marks, {1.0}, envs, 1.0, 2000, 5);
    REQUIRE(tcaught.terminal_violations > 0);
}

TEST_CASE("duality identity on a driftless pairing") {
    // X = x0 (no offsets), backward zero: both sides vanish
    PathBundle b = bundle(200, 10, 23);
    FBSDEModel dims;
    dims.d = dims.n = dims.k = 1;
    Offsets off = Offsets::zero(b, 1, 1, 1);
    LsmcOptions opts;
    opts.basis.degree = 0;
    DualityReport rep = ito_duality_check(
        dims, b, off, [](int) { return Eigen::VectorXd::Ones(1); }, opts, 1.0);
    REQUIRE(rep.ok);
    REQUIRE(std::fabs(rep.lhs - rep.rhs) <= 1e-10);
}

TEST_CASE("uniqueness probe on the deterministic model") {
    PathBundle b = bundle(100, 10, 29);
    FBSDEModel model = deterministic_model(FBSDEModel::Scheme::ForwardFirst);
    ContinuationConfig cc;
    cc.lsmc.basis.degree = 0;
    cc.picard_tol = 1e-9;
    cc.x0 = zero_x0();
    FBSDEIterate ga = zero_iterate(model, b);
    FBSDEIterate gb = zero_iterate(model, b);
    for (auto& xm : gb.x) xm.setConstant(2.0);
    const double gap = uniqueness_probe(model, b, cc, ga, gb);
    REQUIRE(gap <= 1e-6);
}
