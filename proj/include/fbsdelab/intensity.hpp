#ifndef FBSDELAB_INTENSITY_HPP
#define FBSDELAB_INTENSITY_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fbsdelab/events.hpp"
#include "fbsdelab/measures.hpp"

namespace fbsde {

/// Additive intensity kernel
///   lambda(t) = psi0(t) + psi1(mu_{t-}) + sum_{tau_i < t} psi2(t - tau_i),
/// factorized against a finite discrete mark law. Bounds are declared by the
/// caller, not inferred; they make the thinning majorant a checkable
/// contract.
struct AdditiveKernel {
    std::function<double(double)> psi0;  // deterministic baseline of time
    double psi0_bound = 0.0;             // sup of psi0 on [0, T]

    std::function<double(const EmpiricalMeasure&)> psi1;  // environment functional
    double psi1_bound = 0.0;      // sup over reachable environments
    double psi1_lipschitz = 0.0;  // w.r.t. W2

    std::function<double(double)> psi2;  // self-excitation lag kernel, nonneg, non-increasing
    double psi2_at0 = 0.0;
    double psi2_integral = 0.0;  // over [0, T]

    std::vector<std::pair<double, double>> mark_law = {{1.0, 1.0}};  // (mark, prob)

    static AdditiveKernel constant(double rate) {
        AdditiveKernel k;
        k.psi0 = [rate](double) { return rate; };
        k.psi0_bound = rate;
        k.psi1 = [](const EmpiricalMeasure&) { return 0.0; };
        k.psi2 = [](double) { return 0.0; };
        return k;
    }

    // a * exp(-b u) self-excitation on top of a constant baseline
    static AdditiveKernel hawkes(double baseline, double a, double b, double horizon) {
        AdditiveKernel k = constant(baseline);
        k.psi2 = [a, b](double u) { return a * std::exp(-b * u); };
        k.psi2_at0 = a;
        k.psi2_integral = a / b * (1.0 - std::exp(-b * horizon));
        return k;
    }
};

/// lambda(t) evaluated with the pre-t history and the left limit mu_{t-}
/// (predictable evaluation: an event at exactly t does not contribute).
inline double eval_intensity(const AdditiveKernel& k, double t, const EventLog& history,
                             const EnvironmentPath& env) {
    double lam = k.psi0(t) + k.psi1(env.at(t, Side::Left));
    for (const auto& e : history.events()) {
        if (e.time >= t) break;
        lam += k.psi2(t - e.time);
    }
    if (!(lam >= 0.0)) throw std::runtime_error("eval_intensity: negative intensity");
    return lam;
}

/// Majorant of eval_intensity over (t_from, t_to] with the history frozen at
/// t_from. Valid because psi2 is non-increasing and the psi0/psi1 bounds are
/// declared suprema.
inline double dominating_rate(const AdditiveKernel& k, const EventLog& history, double t_from,
                              double t_to) {
    if (!(t_from < t_to)) throw std::invalid_argument("dominating_rate: empty window");
    double bar = k.psi0_bound + k.psi1_bound;
    for (const auto& e : history.events()) {
        if (e.time > t_from) break;
        bar += k.psi2(std::max(t_from - e.time, 0.0));
    }
    return bar;
}

/// Regime-switching kernel: a conservative rate matrix Q(nu) on a finite
/// state set, with a declared uniform bound H0 on off-diagonal row sums.
struct RegimeKernel {
    int n_states = 0;
    std::function<Eigen::MatrixXd(const EmpiricalMeasure&)> rate_matrix;
    double h0 = 0.0;               // sup_nu max_i sum_{j != i} Q^{(i,j)}(nu)
    double entry_lipschitz = 0.0;  // per-entry Lipschitz constant w.r.t. W2

    Eigen::MatrixXd q_at(const EmpiricalMeasure& nu) const {
        Eigen::MatrixXd q = rate_matrix(nu);
        if (q.rows() != n_states || q.cols() != n_states)
            throw std::runtime_error("RegimeKernel: rate matrix has wrong shape");
        for (int i = 0; i < n_states; ++i) {
            double row = 0.0;
            double off = 0.0;
            for (int j = 0; j < n_states; ++j) {
                row += q(i, j);
                if (j != i) {
                    if (q(i, j) < 0.0)
                        throw std::runtime_error("RegimeKernel: negative off-diagonal rate");
                    off += q(i, j);
                }
            }
            if (std::fabs(row) > 1e-10)
                throw std::runtime_error("RegimeKernel: rate matrix is not conservative");
            if (off > h0 * (1.0 + 1e-12))
                throw std::runtime_error("RegimeKernel: H0 bound violated");
        }
        return q;
    }
};

struct RegimeInterval {
    int target = 0;  // state j
    double lo = 0.0;
    double hi = 0.0;  // [lo, hi), hi - lo = Q^{(i,j)}(nu)
};

/// Consecutive left-closed right-open intervals for the off-diagonal pairs,
/// laid out in row-major (lexicographic) order over all pairs; the interval
/// for (i, j) starts after every pair strictly preceding it. States are
/// 0-based here.
inline std::vector<RegimeInterval> partition_intervals(const RegimeKernel& rk,
                                                       const EmpiricalMeasure& nu, int state) {
    if (state < 0 || state >= rk.n_states)
        throw std::invalid_argument("partition_intervals: state outside E");
    const Eigen::MatrixXd q = rk.q_at(nu);
    double offset = 0.0;
    std::vector<RegimeInterval> out;
    for (int i = 0; i < rk.n_states; ++i) {
        for (int j = 0; j < rk.n_states; ++j) {
            if (i == j) continue;
            double len = q(i, j);
            if (i == state) out.push_back({j, offset, offset + len});
            offset += len;
        }
    }
    return out;
}

/// Displacement q(nu, i, r): j - i when r lands in the interval of (i, j),
/// else 0.
inline int q_jump(const RegimeKernel& rk, const EmpiricalMeasure& nu, int state, double r) {
    if (r < 0.0) throw std::invalid_argument("q_jump: r must be nonnegative");
    for (const auto& iv : partition_intervals(rk, nu, state)) {
        if (r >= iv.lo && r < iv.hi) return iv.target - state;
    }
    return 0;
}

// total interval length over all states; the thinning majorant for regime
// chains must cover this, not just H0, because the lexicographic offsets of
// rows beyond the first extend past H0
inline double regime_candidate_rate(const RegimeKernel& rk) {
    return rk.h0 * static_cast<double>(rk.n_states);
}

}  // namespace fbsde

#endif
