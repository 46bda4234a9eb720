#ifndef FBSDELAB_ACCEPTANCE_HPP
#define FBSDELAB_ACCEPTANCE_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fbsdelab/cli.hpp"
#include "fbsdelab/coupled_solver.hpp"
#include "fbsdelab/models.hpp"
#include "fbsdelab/pointproc.hpp"

namespace fbsde {

struct CriterionResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

namespace acceptance {

inline EnvironmentPath flat_env(double horizon) {
    return EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), horizon);
}

// 1: linear-quadratic instance against the Riccati feedback reference.
// Bounds pinned here: 5% on Y, 10% on Z and U, 1% on the residual martingale.
inline CriterionResult criterion_lq_riccati() {
    CriterionResult r{"lq-riccati-reproduction"};
    LQParams lp;  // (-2, 1, 1, 2, 1, 0.2, 0.1) defaults
    // closed form for this instance: p(t) = 6 e^{6(t-T)} / (7 - e^{6(t-T)})
    std::vector<double> grid = make_time_grid(1.0, 50);
    RiccatiReference ric = riccati_reference(lp, grid);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double u = std::exp(6.0 * (grid[i] - 1.0));
        worst = std::max(worst, std::fabs(ric.p[i] - 6.0 * u / (7.0 - u)));
    }
    if (worst > 1e-8) {
        r.detail = "ODE stepper vs closed form gap " + detail::fmt_double(worst);
        return r;
    }
    RunConfig cfg;
    cfg.experiment = "reproduce-lq";
    cfg.seed = 42;
    cfg.horizon = 1.0;
    cfg.grid_steps = 50;
    cfg.paths = 10000;
    cfg.basis_degree = 2;
    // the 0.25 first stage never contracts at this coupling strength and is
    // always halved; start below it
    cfg.eps_init = 0.125;
    // ~lambda*dt*paths = 200 effective jump samples per step cannot support a
    // quadratic fit; the jump component is constant in the state here anyway
    cfg.model["jump_degree"] = 0;
    cfg.output_dir = "";
    detail::LQRunResult res = detail::run_lq_instance(cfg, nullptr);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "rel_y=%.4f (<=0.05) rel_z=%.4f rel_u=%.4f (<=0.10) m_ratio=%.5f (<=0.01)",
                  res.rel_y, res.rel_z, res.rel_u, res.m_ratio);
    r.detail = buf;
    r.pass = res.converged && res.rel_y <= 0.05 && res.rel_z <= 0.10 && res.rel_u <= 0.10 &&
             res.m_ratio <= 0.01;
    if (!res.converged) r.detail = "continuation did not converge";
    return r;
}

// one-directionally coupled test model: forward constants, backward sees x
inline FBSDEModel one_directional_model() {
    FBSDEModel m;
    m.d = m.n = m.k = 1;
    m.G = Eigen::MatrixXd::Identity(1, 1);
    m.beta1 = 1.0;
    m.beta2 = 0.0;
    m.beta3 = 1.0;
    m.scheme = FBSDEModel::Scheme::ForwardFirst;
    m.drift = [](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Constant(1, 0.2);
    };
    m.diffusion = [](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::MatrixXd::Constant(1, 1, 0.3);
    };
    m.jump = [](double, double, int, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Constant(1, 0.1);
    };
    m.driver = [](double, const EmpiricalMeasure&, const FullArgs& a) {
        return Eigen::VectorXd::Constant(1, 2.0 * a.x[0]);
    };
    m.terminal = [](const EmpiricalMeasure&, const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, 2.0 * x[0]);
    };
    return m;
}

// 2: continuation on a one-directionally coupled model vs the sequential
// forward-then-backward solve on the same noise; gap <= 1e-6 relative.
inline CriterionResult criterion_decoupled_oracle() {
    CriterionResult r{"decoupled-oracle-equivalence"};
    BundleConfig bc;
    bc.horizon = 1.0;
    bc.base_steps = 25;
    bc.n_paths = 2000;
    bc.seed = 7;
    bc.kernels = {AdditiveKernel::constant(1.0)};
    bc.env = flat_env(1.0);
    PathBundle b = make_bundle(bc);
    FBSDEModel model = one_directional_model();
    auto x0 = [](int) { return Eigen::VectorXd::Constant(1, 1.0); };
    LsmcOptions opts;
    opts.basis.degree = 2;

    FBSDEIterate oracle;
    oracle.x = forward_affine(&model, b, 1.0, 0.0, nullptr, nullptr, x0, 1, 1, 1);
    set_bundle_state(b, oracle.x);
    oracle.bw = backward_affine(model, b, 1.0, 0.0, 0.0, nullptr, opts);

    ContinuationConfig cc;
    cc.lsmc = opts;
    cc.picard_tol = 1e-8;
    cc.x0 = x0;
    auto [sol, rep] = continuation_solve(model, b, cc);
    if (!rep.converged) {
        r.detail = "continuation did not converge";
        return r;
    }
    const double rel = std::sqrt(star_norm_sq(iterate_diff(sol, oracle), b) /
                                 (1e-300 + star_norm_sq(oracle, b)));
    r.detail = "relative gap " + detail::fmt_double(rel) + " (<= 1e-6)";
    r.pass = rel <= 1e-6;
    return r;
}

// 3: monotonicity verifier — clean on the derived constants, and catching a
// deliberately overclaimed beta1 on the same instance.
inline CriterionResult criterion_monotonicity() {
    CriterionResult r{"g-monotonicity-verifier"};
    LQParams lp;
    FBSDEModel model = build_lq_model(lp);
    MarkGrid marks = MarkGrid::unmarked(1);
    std::vector<EmpiricalMeasure> envs = {EmpiricalMeasure::dirac1d(0.0),
                                          EmpiricalMeasure::uniform1d({-1.0, 0.0, 2.0})};
    MonotonicityReport ok =
        check_g_monotonicity(model, marks, {1.0}, envs, 1.0, 10000, 11);
    FBSDEModel bad = model;  // claimed constants that the expansion refutes
    bad.beta1 = 2.0;
    bad.beta2 = 0.0;
    MonotonicityReport caught =
        check_g_monotonicity(bad, marks, {1.0}, envs, 1.0, 10000, 11);
    r.pass = ok.violations == 0 && ok.terminal_violations == 0 && caught.violations > 0;
    r.detail = "declared betas: " + std::to_string(ok.violations) + " violations; overclaimed beta1: " +
               std::to_string(caught.violations) + " violations detected";
    return r;
}

// 4: pairing identity, constant-coefficient closed form and the solved
// LQ instance, both within 3 SE + C*dt with C pinned to 5.
inline CriterionResult criterion_duality() {
    CriterionResult r{"ito-duality"};
    const double c_slack = 5.0;
    // closed-form leg: X = int Sig dW, terminal zeta = W_T -> Z ~ 1,
    // E[X_T Y_T] = Sig * T
    BundleConfig bc;
    bc.horizon = 1.0;
    bc.base_steps = 25;
    bc.n_paths = 10000;
    bc.seed = 13;
    bc.kernels = {AdditiveKernel::constant(1.0)};
    bc.env = flat_env(1.0);
    PathBundle b = make_bundle(bc);
    const double sig_const = 0.8;
    FBSDEModel dims;
    dims.d = dims.n = dims.k = 1;
    Offsets off = Offsets::zero(b, 1, 1, 1);
    for (int p = 0; p < b.n_paths(); ++p) {
        off.Sig[static_cast<std::size_t>(p)].setConstant(sig_const);
        double w = 0.0;
        for (int m = 0; m < b.n_base_steps(); ++m) w += b.base_dW(p, m)[0];
        off.zeta[static_cast<std::size_t>(p)].setConstant(w);
    }
    LsmcOptions opts;
    opts.basis.degree = 0;
    opts.basis.extra.push_back([](const PathBundle& bb, int p, int m) {
        double w = 0.0;
        for (int j = 0; j < m; ++j) w += bb.base_dW(p, j)[0];
        return w;
    });
    DualityReport closed = ito_duality_check(dims, b, off, [](int) {
        return Eigen::VectorXd::Zero(1);
    }, opts, c_slack);

    // solved LQ instance: the identity along the converged solution
    BundleConfig bc2 = bc;
    bc2.n_paths = 4000;
    bc2.seed = 17;
    PathBundle b2 = make_bundle(bc2);
    LQParams lp;
    FBSDEModel model = build_lq_model(lp);
    ContinuationConfig cc;
    cc.lsmc.basis.degree = 2;
    cc.x0 = [](int) { return Eigen::VectorXd::Constant(1, 1.0); };
    auto [sol, rep] = continuation_solve(model, b2, cc);
    std::vector<double> diffs;
    double dt_max = 0.0;
    const int ms = b2.n_base_steps();
    for (int p = 0; p < b2.n_paths(); ++p) {
        const double xT = sol.x_base(b2, p, ms)[0];
        const double x0v = sol.x_base(b2, p, 0)[0];
        const double yT = sol.bw.y[static_cast<std::size_t>(p)](0, ms);
        const double y0 = sol.bw.y[static_cast<std::size_t>(p)](0, 0);
        double rhs = 0.0;
        for (int m = 0; m < ms; ++m) {
            const double t = b2.base_grid[static_cast<std::size_t>(m)];
            const double dt = b2.base_grid[static_cast<std::size_t>(m) + 1] - t;
            dt_max = std::max(dt_max, dt);
            FullArgs a{sol.x_base(b2, p, m), sol.bw.y[static_cast<std::size_t>(p)].col(m),
                       sol.bw.z_at(p, m), sol.bw.u_cells(p, m)};
            const EmpiricalMeasure nu = b2.env_of(p).at(t, Side::Right);
            rhs += dt * (-a.x[0] * model.driver(t, nu, a)[0] +
                         model.drift(t, nu, a)[0] * a.y[0] +
                         model.diffusion(t, nu, a)(0, 0) * a.z(0, 0) +
                         b2.lambda_at_base(p, m, 0) * model.jump(t, 1.0, 0, nu, a)[0] *
                             a.u[0][0]);
        }
        diffs.push_back(xT * yT - x0v * y0 - rhs);
    }
    const MeanSE ms2 = mean_se(diffs);
    const bool lq_ok =
        rep.converged && std::fabs(ms2.mean) <= 3.0 * ms2.se + c_slack * dt_max;
    r.pass = closed.ok && lq_ok;
    r.detail = "closed-form gap " + detail::fmt_double(closed.lhs - closed.rhs) + " (se " +
               detail::fmt_double(closed.mc_error) + "); lq gap " + detail::fmt_double(ms2.mean) + " (se " +
               detail::fmt_double(ms2.se) + ")";
    return r;
}

// 5: point-process laws — homogeneous mean count, Hawkes stationary rate
// lambda0 / (1 - integral psi2) = 2, and the compensator time change.
inline CriterionResult criterion_pointproc() {
    CriterionResult r{"point-process-law"};
    const EnvironmentPath env1 = flat_env(1.0);
    AdditiveKernel homog = AdditiveKernel::constant(2.0);
    std::vector<double> counts;
    for (int p = 0; p < 100000; ++p) {
        RngStream rng(101, static_cast<std::uint64_t>(p), 1);
        counts.push_back(static_cast<double>(simulate_thinning(homog, env1, 1.0, rng).size()));
    }
    const MeanSE mc = mean_se(counts);
    const bool homog_ok = std::fabs(mc.mean - 2.0) <= 3.0 * mc.se;

    // Hawkes: baseline 1, kernel 0.5 e^{-u}; stationary rate 1/(1-0.5) = 2;
    // counts on the second half of [0, 200] to wash out the transient
    const double horizon = 200.0;
    const EnvironmentPath env2 = flat_env(horizon);
    AdditiveKernel hawkes = AdditiveKernel::hawkes(1.0, 0.5, 1.0, horizon);
    std::vector<double> rates;
    for (int p = 0; p < 300; ++p) {
        RngStream rng(103, static_cast<std::uint64_t>(p), 1);
        EventLog log = simulate_thinning(hawkes, env2, horizon, rng);
        const double n2 = static_cast<double>(log.count_up_to(horizon) -
                                              log.count_up_to(horizon / 2.0));
        rates.push_back(n2 / (horizon / 2.0));
    }
    const MeanSE mh = mean_se(rates);
    const bool hawkes_ok = std::fabs(mh.mean - 2.0) <= 3.0 * mh.se;

    // time rescaling on one long homogeneous realization (about 10^3 events)
    RngStream rng(107, 0, 1);
    const EnvironmentPath env3 = flat_env(500.0);
    EventLog longlog = simulate_thinning(AdditiveKernel::constant(2.0), env3, 500.0, rng);
    TimeRescaleReport tr = time_rescale_diagnostic(longlog, [](double) { return 2.0; });
    const bool ks_ok = tr.ks.p_value > 0.01 && longlog.size() >= 900;

    r.pass = homog_ok && hawkes_ok && ks_ok;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "homog mean=%.4f (se %.4f); hawkes rate=%.4f (se %.4f, target 2); KS p=%.4f on %zu events",
                  mc.mean, mc.se, mh.mean, mh.se, tr.ks.p_value, longlog.size());
    r.detail = buf;
    return r;
}

// 6: regime chain — stationary occupation, exponential holding times, and
// the exactness of the interval partition.
inline CriterionResult criterion_regime() {
    CriterionResult r{"regime-chain"};
    RegimeKernel rk;
    rk.n_states = 2;
    rk.h0 = 2.0;
    rk.rate_matrix = [](const EmpiricalMeasure&) {
        Eigen::MatrixXd q(2, 2);
        q << -1.0, 1.0, 2.0, -2.0;
        return q;
    };
    const double horizon = 50.0;
    const EnvironmentPath env = flat_env(horizon);
    std::vector<double> occ0;
    std::vector<double> holds0;
    for (int p = 0; p < 1000; ++p) {
        RngStream rng(211, static_cast<std::uint64_t>(p), 2);
        RegimeChain chain = simulate_regime_chain(rk, env, 0, horizon, rng);
        double t0 = 0.0, prev = 0.0, entered0 = 0.0;
        int cur = 0;
        for (std::size_t i = 0; i < chain.times.size(); ++i) {
            if (cur == 0) {
                t0 += chain.times[i] - prev;
                // only holds starting far from the horizon: completion is then
                // near-certain and the censoring bias is ~e^{-15}
                if (entered0 < horizon - 15.0)
                    holds0.push_back(chain.times[i] - entered0);
            } else {
                entered0 = chain.times[i];
            }
            prev = chain.times[i];
            cur = chain.states[i];
        }
        if (cur == 0) t0 += horizon - prev;  // censored tail excluded from holds
        occ0.push_back(t0 / horizon);
    }
    const MeanSE mo = mean_se(occ0);
    const bool occ_ok = std::fabs(mo.mean - 2.0 / 3.0) <= 3.0 * mo.se;
    // state-0 exit rate is 1, so completed holding times are Exp(1)
    KSResult ks = ks_test_exp1(holds0);
    const bool hold_ok = ks.p_value > 0.01;

    // interval partition: disjoint consecutive intervals, total mass = row sum
    RngStream rng(223, 0, 3);
    double worst = 0.0;
    bool partition_ok = true;
    for (int s = 0; s < 1000; ++s) {
        const int ns = 3;
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(ns, ns);
        for (int i = 0; i < ns; ++i)
            for (int j = 0; j < ns; ++j)
                if (i != j) {
                    q(i, j) = rng.uniform(0.0, 2.0);
                    q(i, i) -= q(i, j);
                }
        RegimeKernel rk3;
        rk3.n_states = ns;
        rk3.h0 = 4.0;
        rk3.rate_matrix = [q](const EmpiricalMeasure&) { return q; };
        const EmpiricalMeasure nu = EmpiricalMeasure::dirac1d(rng.normal());
        const int state = static_cast<int>(rng.uniform(0.0, 3.0));
        auto ivs = partition_intervals(rk3, nu, state);
        double mass = 0.0, prev_hi = -1.0;
        for (const auto& iv : ivs) {
            if (iv.lo < prev_hi - 1e-15) partition_ok = false;  // overlap
            prev_hi = iv.hi;
            mass += iv.hi - iv.lo;
        }
        worst = std::max(worst, std::fabs(mass + q(state, state)));
    }
    partition_ok = partition_ok && worst <= 1e-12;
    r.pass = occ_ok && hold_ok && partition_ok;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "occ=%.4f (se %.4f, target 0.6667); hold KS p=%.4f on %zu; partition worst=%.2e",
                  mo.mean, mo.se, ks.p_value, holds0.size(), worst);
    r.detail = buf;
    return r;
}

// 7: backward decomposition — exact trivial solves, orthogonality of the
// residual martingale, and the weighted-norm sandwich.
inline CriterionResult criterion_bsde_decomposition() {
    CriterionResult r{"bsde-decomposition"};
    BundleConfig bc;
    bc.horizon = 1.0;
    bc.base_steps = 20;
    bc.n_paths = 2000;
    bc.seed = 31;
    bc.kernels = {AdditiveKernel::constant(1.0)};
    bc.env = flat_env(1.0);
    PathBundle b = make_bundle(bc);
    LsmcOptions opts;
    opts.basis.degree = 0;

    // f = 0, zeta = c -> Y = c exactly; Z/U/M carry only regression noise
    // (scale |zeta|/sqrt(dt P) per step), far below the solution scale c^2
    GridDriver zero_drv = [](int, int, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                             const std::vector<Eigen::VectorXd>&) {
        return Eigen::VectorXd::Zero(1);
    };
    BackwardSolution s1 = lsmc_solve(
        b, 1, zero_drv, [](int) { return Eigen::VectorXd::Constant(1, 3.5); }, opts);
    double worst1 = 0.0;
    for (int p = 0; p < b.n_paths(); ++p)
        worst1 = std::max(worst1,
                          (s1.y[static_cast<std::size_t>(p)].array() - 3.5).abs().maxCoeff());
    const SolutionNorms n1 = weighted_norm_components(s1, b);
    const double noise1 = n1.h2_z + n1.h2_u + n1.m_quad;  // solution scale is 3.5^2

    // f = 1, zeta = 0 -> Y_t = T - t exactly
    GridDriver one_drv = [](int, int, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                            const std::vector<Eigen::VectorXd>&) {
        return Eigen::VectorXd::Constant(1, 1.0);
    };
    BackwardSolution s2 =
        lsmc_solve(b, 1, one_drv, [](int) { return Eigen::VectorXd::Zero(1); }, opts);
    double worst2 = 0.0;
    for (int p = 0; p < b.n_paths(); ++p)
        for (int m = 0; m <= b.n_base_steps(); ++m)
            worst2 = std::max(worst2,
                              std::fabs(s2.y[static_cast<std::size_t>(p)](0, m) -
                                        (1.0 - b.base_grid[static_cast<std::size_t>(m)])));

    // zeta = W_T with W_t in the basis -> Y ~ W_t, Z ~ 1, U ~ 0
    LsmcOptions optsw = opts;
    optsw.basis.extra.push_back([](const PathBundle& bb, int p, int m) {
        double w = 0.0;
        for (int j = 0; j < m; ++j) w += bb.base_dW(p, j)[0];
        return w;
    });
    BackwardSolution s3 = lsmc_solve(b, 1, zero_drv, [&b](int p) {
        double w = 0.0;
        for (int m = 0; m < b.n_base_steps(); ++m) w += b.base_dW(p, m)[0];
        return Eigen::VectorXd::Constant(1, w);
    }, optsw);
    double zerr_sq = 0.0, uerr_sq = 0.0;
    int nzu = 0;
    for (int p = 0; p < b.n_paths(); ++p)
        for (int m = 0; m < b.n_base_steps(); ++m) {
            const double ze = s3.z[static_cast<std::size_t>(p)](0, m) - 1.0;
            const double ue = s3.u[static_cast<std::size_t>(p)](0, m);
            zerr_sq += ze * ze;
            uerr_sq += ue * ue;
            ++nzu;
        }
    const double z_rms = std::sqrt(zerr_sq / nzu);
    const double u_rms = std::sqrt(uerr_sq / nzu);
    const bool w_ok = z_rms <= 0.2 && u_rms <= 0.2;

    // orthogonality: the mean total covariation of M against W and against
    // the compensated counts. The in-sample regression leaves a finite-sample
    // bias of order dt + 1/paths, so the bound is 5% of the solution scale
    // sqrt(sup E|Y|^2 * T) rather than a pure standard-error test.
    double cov_w = 0.0, cov_n = 0.0;
    for (int p = 0; p < b.n_paths(); ++p)
        for (int m = 0; m < b.n_base_steps(); ++m) {
            const double dt = b.base_grid[static_cast<std::size_t>(m) + 1] -
                              b.base_grid[static_cast<std::size_t>(m)];
            const double dm = s3.dm[static_cast<std::size_t>(p)](0, m);
            cov_w += dm * b.base_dW(p, m)[0];
            cov_n += dm * (static_cast<double>(b.events_in_base_step(p, m).size()) -
                           b.lambda_at_base(p, m, 0) * dt);
        }
    cov_w /= static_cast<double>(b.n_paths());
    cov_n /= static_cast<double>(b.n_paths());
    const SolutionNorms n3 = weighted_norm_components(s3, b);
    const double orth_scale = 0.05 * std::sqrt(n3.sup_y * bc.horizon);
    const bool orth_ok = std::fabs(cov_w) <= orth_scale && std::fabs(cov_n) <= orth_scale;

    // sandwich: plain <= weighted <= e^{beta K^* T} plain, alpha^2 = 1
    NormEquivalenceReport ne =
        norm_equivalence_check(s3, b, 2.0, [](double) { return 1.0; }, 1.0);

    r.pass = worst1 <= 1e-10 && noise1 <= 0.05 * 3.5 * 3.5 && worst2 <= 1e-10 && w_ok &&
             orth_ok && ne.ok;
    char buf[280];
    std::snprintf(buf, sizeof(buf),
                  "const y=%.1e zu-noise=%.3f linear=%.1e z_rms=%.3f u_rms=%.3f "
                  "cov=[%.4f,%.4f] (<=%.4f) sandwich=[%.4g,%.4g,%.4g]",
                  worst1, noise1, worst2, z_rms, u_rms, cov_w, cov_n, orth_scale, ne.lower,
                  ne.value, ne.upper);
    r.detail = buf;
    return r;
}

// 8: two continuation runs from different initial iterates coincide within
// ten times the Picard tolerance (relative).
inline CriterionResult criterion_uniqueness() {
    CriterionResult r{"uniqueness-probe"};
    BundleConfig bc;
    bc.horizon = 1.0;
    bc.base_steps = 25;
    bc.n_paths = 2000;
    bc.seed = 47;
    bc.kernels = {AdditiveKernel::constant(1.0)};
    bc.env = flat_env(1.0);
    PathBundle b = make_bundle(bc);
    LQParams lp;
    FBSDEModel model = build_lq_model(lp);
    ContinuationConfig cc;
    cc.lsmc.basis.degree = 2;
    cc.picard_tol = 1e-6;
    cc.x0 = [](int) { return Eigen::VectorXd::Constant(1, 1.0); };
    FBSDEIterate guess_a = zero_iterate(model, b);
    FBSDEIterate guess_b = zero_iterate(model, b);
    for (auto& xm : guess_b.x) xm.setConstant(1.0);
    for (auto& ym : guess_b.bw.y) ym.setConstant(0.5);
    auto [sol_a, rep_a] = continuation_solve(model, b, cc, &guess_a);
    auto [sol_b, rep_b] = continuation_solve(model, b, cc, &guess_b);
    if (!rep_a.converged || !rep_b.converged) {
        r.detail = "continuation did not converge";
        return r;
    }
    const double rel = std::sqrt(star_norm_sq(iterate_diff(sol_a, sol_b), b) /
                                 (1.0 + star_norm_sq(sol_a, b)));
    r.pass = rel <= 10.0 * cc.picard_tol;
    r.detail = "relative discrepancy " + detail::fmt_double(rel) + " (<= 1e-5)";
    return r;
}

// 9: byte-identical replay of a recorded run, and sensitivity to the seed.
inline CriterionResult criterion_determinism() {
    CriterionResult r{"determinism-replay"};
    namespace fs = std::filesystem;
    fs::path root = fs::temp_directory_path() / "fbsde-accept-replay";
    fs::remove_all(root);
    fs::create_directories(root);
    RunConfig cfg;
    cfg.experiment = "reproduce-lq";
    cfg.seed = 5;
    cfg.horizon = 1.0;
    cfg.grid_steps = 20;
    cfg.paths = 2000;
    cfg.basis_degree = 2;
    cfg.output_dir = (root / "run1").string();
    run(cfg);
    ReplayVerdict same = replay(root / "run1" / "manifest.json");

    RunConfig cfg2 = cfg;
    cfg2.seed = 6;
    cfg2.output_dir = (root / "run2").string();
    RunManifest m2 = run(cfg2);
    // a changed seed must change at least one result file digest
    std::ifstream is(root / "run1" / "manifest.json");
    json m1 = json::parse(is);
    bool differs = false;
    for (const auto& [name, digest] : m1.at("files").items())
        if (m2.files.count(name) && m2.files[name] != digest.get<std::string>()) differs = true;
    fs::remove_all(root);
    r.pass = same.identical && differs;
    r.detail = std::string("replay ") + (same.identical ? "identical" : "DIFFERS") +
               "; changed seed " + (differs ? "differs" : "IDENTICAL");
    return r;
}

}  // namespace acceptance

/// Run the nine acceptance criteria, printing one pass/fail line each.
/// Returns true when every criterion passes.
inline bool run_acceptance(std::ostream& os) {
    using Fn = std::function<CriterionResult()>;
    const std::vector<Fn> criteria = {
        acceptance::criterion_lq_riccati,    acceptance::criterion_decoupled_oracle,
        acceptance::criterion_monotonicity,  acceptance::criterion_duality,
        acceptance::criterion_pointproc,     acceptance::criterion_regime,
        acceptance::criterion_bsde_decomposition, acceptance::criterion_uniqueness,
        acceptance::criterion_determinism};
    // wall-clock budget per criterion (0 = unlimited)
    const double budget_s[] = {60.0, 30.0, 5.0, 30.0, 60.0, 30.0, 30.0, 120.0, 0.0};
    bool all = true;
    int idx = 1;
    for (const auto& fn : criteria) {
        const auto start = std::chrono::steady_clock::now();
        CriterionResult res;
        try {
            res = fn();
        } catch (const std::exception& e) {
            res.pass = false;
            res.detail = std::string("exception: ") + e.what();
        }
        res.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (budget_s[idx - 1] > 0.0 && res.seconds > budget_s[idx - 1]) {
            res.pass = false;
            res.detail += " [over time budget " + detail::fmt_double(budget_s[idx - 1]) + "s]";
        }
        char buf[400];
        std::snprintf(buf, sizeof(buf), "[%s] %d %-28s %6.1fs  %s",
                      res.pass ? "PASS" : "FAIL", idx, res.name.c_str(), res.seconds,
                      res.detail.c_str());
        os << buf << '\n' << std::flush;
        all = all && res.pass;
        ++idx;
    }
    os << (all ? "ACCEPTANCE: all criteria passed" : "ACCEPTANCE: failures present") << '\n';
    return all;
}

}  // namespace fbsde

#endif
