#ifndef FBSDELAB_FORWARD_SDE_HPP
#define FBSDELAB_FORWARD_SDE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbsdelab/events.hpp"
#include "fbsdelab/mark_grid.hpp"
#include "fbsdelab/measures.hpp"

namespace fbsde {

/// Backward-component feedback frozen along a step (used by coupled
/// schemes; empty members mean the coefficient ignores that slot).
struct ForwardFeedback {
    Eigen::VectorXd y;
    Eigen::MatrixXd z;
    std::vector<Eigen::VectorXd> u;  // per mark cell
};

struct CoefArgs {
    Eigen::VectorXd x;
    const ForwardFeedback* feedback = nullptr;  // null when decoupled
};

struct ForwardCoefficients {
    int d = 1;
    int k = 1;
    std::function<Eigen::VectorXd(double t, const EmpiricalMeasure& nu, const CoefArgs&)> drift;
    std::function<Eigen::MatrixXd(double t, const EmpiricalMeasure& nu, const CoefArgs&)>
        diffusion;  // d x k
    // column of the jump coefficient for one (mark, channel) cell
    std::function<Eigen::VectorXd(double t, double mark, int channel, const EmpiricalMeasure& nu,
                                  const CoefArgs&)>
        jump;
    bool compensated_jumps = true;
};

/// Uniform grid on [0, T] merged with extra times (event times, environment
/// breakpoints), deduplicated.
inline std::vector<double> make_time_grid(double horizon, int steps,
                                          const std::vector<double>& extra = {}) {
    if (!(horizon > 0.0) || steps < 1) throw std::invalid_argument("make_time_grid: bad shape");
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(steps) + 1 + extra.size());
    for (int i = 0; i <= steps; ++i) g.push_back(horizon * i / steps);
    for (double t : extra)
        if (t > 0.0 && t < horizon) g.push_back(t);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end(),
                        [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
            g.end());
    return g;
}

/// Euler scheme with exact event-time insertion: the grid must contain every
/// event time. Drift/diffusion use the cadlag environment value at the left
/// endpoint; the jump coefficient at an event uses the left limits of state
/// and environment (predictable evaluation). The compensator drift uses the
/// left-endpoint intensity, constant over each step.
///
/// dW: k x (grid.size()-1); lambda: n_channels x (grid.size()-1) left-endpoint
/// intensities; feedback(step) supplies frozen backward values when coupled.
inline Eigen::MatrixXd euler_simulate(
    const ForwardCoefficients& coef, const Eigen::VectorXd& x0, const EnvironmentPath& env,
    const std::vector<double>& grid, const Eigen::MatrixXd& dW, const EventLog& events,
    const Eigen::MatrixXd& lambda, const MarkGrid& marks,
    const std::function<ForwardFeedback(int step)>& feedback = nullptr) {
    const int m_steps = static_cast<int>(grid.size()) - 1;
    if (m_steps < 1) throw std::invalid_argument("euler_simulate: grid too short");
    if (dW.rows() != coef.k || dW.cols() != m_steps)
        throw std::invalid_argument("euler_simulate: dW shape mismatch");
    if (marks.n_cells() > 0 &&
        (lambda.rows() != marks.n_channels() || lambda.cols() != m_steps))
        throw std::invalid_argument("euler_simulate: intensity shape mismatch");

    Eigen::MatrixXd x(coef.d, m_steps + 1);
    x.col(0) = x0;
    std::size_t ei = 0;
    const auto& evs = events.events();
    ForwardFeedback fb;
    for (int m = 0; m < m_steps; ++m) {
        const double t = grid[static_cast<std::size_t>(m)];
        const double tn = grid[static_cast<std::size_t>(m) + 1];
        const double dt = tn - t;
        CoefArgs args;
        args.x = x.col(m);
        if (feedback) {
            fb = feedback(m);
            args.feedback = &fb;
        }
        const EmpiricalMeasure nu = env.at(t, Side::Right);
        Eigen::VectorXd xn = x.col(m) + coef.drift(t, nu, args) * dt +
                             coef.diffusion(t, nu, args) * dW.col(m);
        if (coef.compensated_jumps) {
            for (const auto& cell : marks.cells())
                xn -= coef.jump(t, cell.mark, cell.channel, nu, args) *
                      (lambda(cell.channel, m) * cell.prob * dt);
        }
        // events at the right endpoint of the step, applied at the pre-jump
        // state; an event strictly inside a step means the caller failed to
        // insert its time into the grid
        while (ei < evs.size() && evs[ei].time <= tn + 1e-12) {
            const auto& e = evs[ei];
            if (e.time < tn - 1e-12)
                throw std::runtime_error("euler_simulate: event time missing from grid");
            CoefArgs pre = args;
            pre.x = xn;
            xn += coef.jump(e.time, e.mark, e.channel, env.at(e.time, Side::Left), pre);
            ++ei;
        }
        if (!xn.allFinite())
            throw std::runtime_error("euler_simulate: state diverged at t = " + std::to_string(tn));
        x.col(m + 1) = xn;
    }
    if (ei != evs.size()) throw std::runtime_error("euler_simulate: events beyond the grid");
    return x;
}

struct MomentReport {
    Eigen::MatrixXd mean;               // d x grid.size()
    Eigen::VectorXd second_moment;      // E|X_t|^2 per grid point
    double sup_second_moment = 0.0;     // E[sup_t |X_t|^2]
};

inline MomentReport moment_report(const std::vector<Eigen::MatrixXd>& paths) {
    if (paths.empty()) throw std::invalid_argument("moment_report: no paths");
    const Eigen::Index d = paths[0].rows(), m = paths[0].cols();
    MomentReport rep;
    rep.mean = Eigen::MatrixXd::Zero(d, m);
    rep.second_moment = Eigen::VectorXd::Zero(m);
    for (const auto& x : paths) {
        if (x.rows() != d || x.cols() != m)
            throw std::invalid_argument("moment_report: inconsistent path shapes");
        rep.mean += x;
        rep.second_moment += x.colwise().squaredNorm().transpose();
        rep.sup_second_moment += x.colwise().squaredNorm().maxCoeff();
    }
    const double inv = 1.0 / static_cast<double>(paths.size());
    rep.mean *= inv;
    rep.second_moment *= inv;
    rep.sup_second_moment *= inv;
    return rep;
}

}  // namespace fbsde

#endif
