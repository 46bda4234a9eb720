#ifndef FBSDELAB_MODELS_HPP
#define FBSDELAB_MODELS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbsdelab/coupled_solver.hpp"
#include "fbsdelab/intensity.hpp"
#include "fbsdelab/measures.hpp"
#include "fbsdelab/rng.hpp"

namespace fbsde {

/// Scalar linear-quadratic model. Derived coefficients: b_hat = b - f/f2,
/// f_hat = f1/2 - f^2/f2; drift b_hat (x - m(nu)) - y/f2, driver
/// f_hat (x - m(nu)) + b_hat y, terminal g (x - m(nu)).
struct LQParams {
    double b = -2.0, f = 1.0, sigma = 0.2, gamma = 0.1;
    double f1 = 2.0, f2 = 1.0, g = 1.0;
    double b_hat() const { return b - f / f2; }
    double f_hat() const { return f1 / 2.0 - f * f / f2; }

    void validate() const {
        if (std::fabs(std::fabs(b) * f2 - 2.0) > 1e-12)
            throw std::invalid_argument("LQParams: requires |b| * f2 = 2");
        if (!(f1 * f2 > f * f / 2.0 + 1.0))
            throw std::invalid_argument("LQParams: requires f1 * f2 > f^2/2 + 1");
        if (!(f1 > 0.0 && f2 > 0.0 && g > 0.0))
            throw std::invalid_argument("LQParams: f1, f2, g must be positive");
        if (b == 0.0 || f == 0.0 || sigma == 0.0 || gamma == 0.0)
            throw std::invalid_argument("LQParams: b, f, sigma, gamma must be nonzero");
    }
};

/// Expanding the coupling form of this model gives exactly
///   -f_hat dx^2 - dy^2 / f2
/// (the b_hat cross terms cancel), so the sharp monotonicity constants are
/// beta1 = max(f_hat, 0), beta2 = 1/f2, beta3 = g. Since beta2 > 0 the
/// backward-first linearization applies.
inline FBSDEModel build_lq_model(const LQParams& p) {
    p.validate();
    FBSDEModel m;
    m.d = m.n = m.k = 1;
    m.G = Eigen::MatrixXd::Identity(1, 1);
    m.beta1 = std::max(p.f_hat(), 0.0);
    m.beta2 = 1.0 / p.f2;
    m.beta3 = p.g;
    m.scheme = FBSDEModel::Scheme::BackwardFirst;
    const double bh = p.b_hat(), fh = p.f_hat();
    m.drift = [bh, p](double, const EmpiricalMeasure& nu, const FullArgs& a) {
        return Eigen::VectorXd::Constant(
            1, bh * (a.x[0] - measure_mean(nu)) - a.y[0] / p.f2);
    };
    m.diffusion = [p](double, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::MatrixXd::Constant(1, 1, p.sigma);
    };
    m.jump = [p](double, double, int, const EmpiricalMeasure&, const FullArgs&) {
        return Eigen::VectorXd::Constant(1, p.gamma);
    };
    m.driver = [bh, fh](double, const EmpiricalMeasure& nu, const FullArgs& a) {
        return Eigen::VectorXd::Constant(1, fh * (a.x[0] - measure_mean(nu)) + bh * a.y[0]);
    };
    m.terminal = [p](const EmpiricalMeasure& nu, const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, p.g * (x[0] - measure_mean(nu)));
    };
    // profiles feed only the reported weighted norms
    m.profile.k_y = std::max(bh * bh, 1e-2);
    m.profile.k_z = 1e-2;
    m.profile.k_u = 1e-2;
    m.profile.k_lower = 1e-2;
    m.profile.k_upper = std::max(1.0, m.profile.alpha_sq());
    return m;
}

struct RiccatiReference {
    std::vector<double> p;  // one value per grid point
    double sigma = 0.0, gamma = 0.0;
    double y_predict(int m, double x) const { return p[static_cast<std::size_t>(m)] * x; }
    // step quantities condition the next-node value on the current increment,
    // so their reference uses p at the right endpoint of the step
    double z_predict(int m) const { return p[static_cast<std::size_t>(m) + 1] * sigma; }
    double u_predict(int m) const { return p[static_cast<std::size_t>(m) + 1] * gamma; }
};

/// Linear-feedback ansatz Y = p X with m(nu) = 0: matching drift terms gives
///   p' = -2 b_hat p + p^2 / f2 - f_hat,  p(T) = g,
/// integrated backward with classic RK4 on the supplied grid.
inline RiccatiReference riccati_reference(const LQParams& lp, const std::vector<double>& grid) {
    RiccatiReference ref;
    ref.sigma = lp.sigma;
    ref.gamma = lp.gamma;
    const double bh = lp.b_hat(), fh = lp.f_hat();
    auto rhs = [bh, fh, &lp](double p) { return -2.0 * bh * p + p * p / lp.f2 - fh; };
    const std::size_t m = grid.size();
    ref.p.assign(m, 0.0);
    ref.p[m - 1] = lp.g;
    const int sub = 16;  // substeps per grid interval keep the ODE error well under 1e-8
    for (std::size_t i = m - 1; i > 0; --i) {
        const double h = (grid[i] - grid[i - 1]) / sub;  // step backward in time
        double p0 = ref.p[i];
        for (int s = 0; s < sub; ++s) {
            const double k1 = rhs(p0);
            const double k2 = rhs(p0 - 0.5 * h * k1);
            const double k3 = rhs(p0 - 0.5 * h * k2);
            const double k4 = rhs(p0 - h * k3);
            p0 -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (std::fabs(p0) > 1e6)
                throw std::runtime_error("riccati_reference: blow-up, |p| > 1e6");
        }
        ref.p[i - 1] = p0;
    }
    return ref;
}

/// Scalar Hamiltonian data: base coefficients as functions of (t, nu, x),
/// with optional analytic x-derivatives (central finite differences with
/// step 1e-6 (1 + |x|) otherwise).
struct HamiltonianSpec {
    using Fn = std::function<double(double t, const EmpiricalMeasure& nu, double x)>;
    Fn b, sigma, f, gamma, g;
    Fn db, dsigma, df, dgamma, dg;  // optional
    std::function<double(double t)> lambda_rate = [](double) { return 1.0; };

    static double fd(const Fn& fn, double t, const EmpiricalMeasure& nu, double x) {
        const double h = 1e-6 * (1.0 + std::fabs(x));
        return (fn(t, nu, x + h) - fn(t, nu, x - h)) / (2.0 * h);
    }
    double dx(const Fn& analytic, const Fn& base, double t, const EmpiricalMeasure& nu,
              double x) const {
        return analytic ? analytic(t, nu, x) : fd(base, t, nu, x);
    }
};

/// Adjoint system of the Hamiltonian H = f + y b + z sigma + u lambda gamma:
/// forward coefficients (b, sigma, gamma), backward driver d_x H, terminal
/// d_x g. Monotonicity constants are not derivable from a generic spec and
/// are left at the permissive backward-first defaults.
inline FBSDEModel build_hamiltonian_fbsde(const HamiltonianSpec& spec) {
    FBSDEModel m;
    m.d = m.n = m.k = 1;
    m.G = Eigen::MatrixXd::Identity(1, 1);
    m.beta1 = 0.0;
    m.beta2 = 1.0;
    m.beta3 = 1.0;
    m.scheme = FBSDEModel::Scheme::BackwardFirst;
    m.drift = [spec](double t, const EmpiricalMeasure& nu, const FullArgs& a) {
        return Eigen::VectorXd::Constant(1, spec.b(t, nu, a.x[0]));
    };
    m.diffusion = [spec](double t, const EmpiricalMeasure& nu, const FullArgs& a) {
        return Eigen::MatrixXd::Constant(1, 1, spec.sigma(t, nu, a.x[0]));
    };
    m.jump = [spec](double t, double, int, const EmpiricalMeasure& nu, const FullArgs& a) {
        if (spec.lambda_rate(t) <= 0.0)
            throw std::runtime_error("build_hamiltonian_fbsde: nonpositive intensity");
        return Eigen::VectorXd::Constant(1, spec.gamma(t, nu, a.x[0]));
    };
    m.driver = [spec](double t, const EmpiricalMeasure& nu, const FullArgs& a) {
        const double x = a.x[0];
        double v = spec.dx(spec.df, spec.f, t, nu, x) +
                   a.y[0] * spec.dx(spec.db, spec.b, t, nu, x) +
                   a.z(0, 0) * spec.dx(spec.dsigma, spec.sigma, t, nu, x);
        if (!a.u.empty())
            v += a.u[0][0] * spec.lambda_rate(t) * spec.dx(spec.dgamma, spec.gamma, t, nu, x);
        return Eigen::VectorXd::Constant(1, v);
    };
    m.terminal = [spec](const EmpiricalMeasure& nu, const Eigen::VectorXd& x) {
        // terminal time is not part of the signature; g may only depend on x here
        return Eigen::VectorXd::Constant(1, spec.dx(spec.dg, spec.g, 0.0, nu, x[0]));
    };
    return m;
}

/// Max relative gap between supplied derivatives and central differences on
/// random points (consistency guard for HamiltonianSpec).
inline double check_hamiltonian_derivatives(const HamiltonianSpec& spec,
                                            const EmpiricalMeasure& nu, double horizon,
                                            int count, std::uint64_t seed) {
    RngStream rng(seed, 0, 11);
    double worst = 0.0;
    auto probe = [&](const HamiltonianSpec::Fn& analytic, const HamiltonianSpec::Fn& base,
                     double t, double x) {
        if (!analytic) return;
        const double a = analytic(t, nu, x);
        const double d = HamiltonianSpec::fd(base, t, nu, x);
        worst = std::max(worst, std::fabs(a - d) / (1.0 + std::fabs(d)));
    };
    for (int i = 0; i < count; ++i) {
        const double t = rng.uniform(0.0, horizon);
        const double x = 3.0 * rng.normal();
        probe(spec.db, spec.b, t, x);
        probe(spec.dsigma, spec.sigma, t, x);
        probe(spec.df, spec.f, t, x);
        probe(spec.dgamma, spec.gamma, t, x);
        probe(spec.dg, spec.g, t, x);
    }
    return worst;
}

struct RegimeChain {
    std::vector<double> times;  // transition times
    std::vector<int> states;    // states after each transition
    int initial_state = 0;
    EventLog events;            // channel 0, mark = new state

    int state_at(double t) const {
        int s = initial_state;
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] <= t)
                s = states[i];
            else
                break;
        }
        return s;
    }
};

/// Finite-state chain by uniform-rate thinning: candidates at the total
/// interval-partition rate (n_states * H0, covering the global offsets of
/// every row), uniform position r, displacement from the interval partition
/// evaluated at the pre-candidate environment.
inline RegimeChain simulate_regime_chain(const RegimeKernel& rk, const EnvironmentPath& env,
                                         int state0, double horizon, RngStream& rng) {
    if (state0 < 0 || state0 >= rk.n_states)
        throw std::invalid_argument("simulate_regime_chain: initial state outside E");
    RegimeChain chain;
    chain.initial_state = state0;
    const double rate = regime_candidate_rate(rk);
    std::vector<MarkedEvent> events;
    int cur = state0;
    double t = 0.0;
    while (rate > 0.0) {
        t += rng.exponential(rate);
        if (t > horizon) break;
        const double r = rng.uniform(0.0, rate);
        const int jump = q_jump(rk, env.at(t, Side::Left), cur, r);
        if (jump != 0) {
            cur += jump;
            chain.times.push_back(t);
            chain.states.push_back(cur);
            events.push_back({t, static_cast<double>(cur), 0});
        }
    }
    chain.events = EventLog(std::move(events), horizon);
    return chain;
}

}  // namespace fbsde

#endif
