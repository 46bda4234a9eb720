#ifndef FBSDELAB_PATH_BUNDLE_HPP
#define FBSDELAB_PATH_BUNDLE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fbsdelab/events.hpp"
#include "fbsdelab/forward_sde.hpp"
#include "fbsdelab/intensity.hpp"
#include "fbsdelab/mark_grid.hpp"
#include "fbsdelab/measures.hpp"
#include "fbsdelab/pointproc.hpp"
#include "fbsdelab/rng.hpp"

namespace fbsde {

/// One simulated path of the driving noise: a refined grid (base grid merged
/// with this path's event times and the environment breakpoints), Brownian
/// increments and the realized intensity on that grid, and the event log.
/// The state path is filled in by a forward pass.
struct PathData {
    std::vector<double> grid;      // refined
    std::vector<int> base_index;   // refined index of each base grid point
    std::vector<int> base_step_of; // per refined step: containing base step
    Eigen::MatrixXd dW;            // k x (grid.size()-1)
    EventLog events;
    Eigen::MatrixXd lambda;        // channels x (grid.size()-1), right limit at left endpoint
    Eigen::MatrixXd x;             // d x grid.size(), filled by the forward solver
    std::vector<int> regime;       // optional regime state per refined point

    int n_steps() const { return static_cast<int>(grid.size()) - 1; }
};

/// Monte Carlo bundle: shared base grid, shared (or per-path) environment,
/// mark cells, and per-path noise. Regression and norm computations live on
/// the base grid; forward integration uses the refined grids.
struct PathBundle {
    double horizon = 1.0;
    int dim_w = 1;
    std::vector<double> base_grid;
    MarkGrid marks;
    std::vector<EnvironmentPath> envs;  // size 1 (shared) or size n_paths
    std::vector<PathData> paths;

    int n_paths() const { return static_cast<int>(paths.size()); }
    int n_base_steps() const { return static_cast<int>(base_grid.size()) - 1; }
    const EnvironmentPath& env_of(int p) const {
        return envs.size() == 1 ? envs[0] : envs[static_cast<std::size_t>(p)];
    }

    // Brownian increment over base step m (sum of refined increments)
    Eigen::VectorXd base_dW(int p, int m) const {
        const PathData& pd = paths[static_cast<std::size_t>(p)];
        const int a = pd.base_index[static_cast<std::size_t>(m)];
        const int b = pd.base_index[static_cast<std::size_t>(m) + 1];
        Eigen::VectorXd s = Eigen::VectorXd::Zero(dim_w);
        for (int i = a; i < b; ++i) s += pd.dW.col(i);
        return s;
    }

    double lambda_at_base(int p, int m, int channel) const {
        const PathData& pd = paths[static_cast<std::size_t>(p)];
        return pd.lambda(channel, pd.base_index[static_cast<std::size_t>(m)]);
    }

    // allocation-free variant of base_dW for hot loops
    void base_dW_into(int p, int m, Eigen::VectorXd& out) const {
        const PathData& pd = paths[static_cast<std::size_t>(p)];
        const int a = pd.base_index[static_cast<std::size_t>(m)];
        const int c = pd.base_index[static_cast<std::size_t>(m) + 1];
        out.setZero();
        for (int i = a; i < c; ++i) out += pd.dW.col(i);
    }

    // count of events in (base_grid[m], base_grid[m+1]] matching a mark cell
    int count_events_in_base_step(int p, int m, int channel, double mark) const {
        const double lo = base_grid[static_cast<std::size_t>(m)];
        const double hi = base_grid[static_cast<std::size_t>(m) + 1];
        int count = 0;
        for (const auto& e : paths[static_cast<std::size_t>(p)].events.events())
            if (e.time > lo + 1e-12 && e.time <= hi + 1e-12 && e.channel == channel &&
                std::fabs(e.mark - mark) <= 1e-9)
                ++count;
        return count;
    }

    // events with time in (base_grid[m], base_grid[m+1]]
    std::vector<MarkedEvent> events_in_base_step(int p, int m) const {
        const double lo = base_grid[static_cast<std::size_t>(m)];
        const double hi = base_grid[static_cast<std::size_t>(m) + 1];
        std::vector<MarkedEvent> out;
        for (const auto& e : paths[static_cast<std::size_t>(p)].events.events())
            if (e.time > lo + 1e-12 && e.time <= hi + 1e-12) out.push_back(e);
        return out;
    }

    Eigen::VectorXd state_at_base(int p, int m) const {
        const PathData& pd = paths[static_cast<std::size_t>(p)];
        return pd.x.col(pd.base_index[static_cast<std::size_t>(m)]);
    }
};

struct BundleConfig {
    double horizon = 1.0;
    int base_steps = 50;
    int n_paths = 100;
    int dim_w = 1;
    std::uint64_t seed = 1;
    std::vector<AdditiveKernel> kernels;  // one per channel; empty = continuous noise only
    EnvironmentPath env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), 1.0);
};

namespace detail {

// right limit of the additive intensity at t: events with time <= t count
inline double intensity_right(const AdditiveKernel& k, double t, const EventLog& history,
                              const EnvironmentPath& env) {
    double lam = k.psi0(t) + k.psi1(env.at(t, Side::Right));
    for (const auto& e : history.events()) {
        if (e.time > t) break;
        lam += k.psi2(t - e.time);
    }
    return lam;
}

}  // namespace detail

/// Deterministic bundle generation: path p draws events from substreams
/// (seed, p, 1 + channel) and Brownian increments from (seed, p, 0), so any
/// path is reproducible in isolation.
inline PathBundle make_bundle(const BundleConfig& cfg) {
    if (cfg.n_paths < 1 || cfg.base_steps < 1 || !(cfg.horizon > 0.0))
        throw std::invalid_argument("make_bundle: bad shape");
    PathBundle b;
    b.horizon = cfg.horizon;
    b.dim_w = cfg.dim_w;
    b.base_grid = make_time_grid(cfg.horizon, cfg.base_steps);
    b.envs = {cfg.env};
    std::vector<std::vector<std::pair<double, double>>> laws;
    for (const auto& k : cfg.kernels) laws.push_back(k.mark_law);
    b.marks = MarkGrid(laws);
    b.paths.resize(static_cast<std::size_t>(cfg.n_paths));

    for (int p = 0; p < cfg.n_paths; ++p) {
        PathData& pd = b.paths[static_cast<std::size_t>(p)];
        pd.events = cfg.kernels.empty()
                        ? EventLog(cfg.horizon)
                        : simulate_thinning_multi(cfg.kernels, cfg.env, cfg.horizon, cfg.seed,
                                                  static_cast<std::uint64_t>(p));
        std::vector<double> extra;
        for (const auto& e : pd.events.events()) extra.push_back(e.time);
        for (double t : cfg.env.breakpoints()) extra.push_back(t);
        pd.grid = make_time_grid(cfg.horizon, cfg.base_steps, extra);

        pd.base_index.clear();
        std::size_t j = 0;
        for (double t : b.base_grid) {
            while (j < pd.grid.size() && pd.grid[j] < t - 1e-12) ++j;
            if (j >= pd.grid.size() || std::fabs(pd.grid[j] - t) > 1e-12)
                throw std::runtime_error("make_bundle: base grid point lost in refinement");
            pd.base_index.push_back(static_cast<int>(j));
        }
        pd.base_step_of.assign(pd.grid.size() - 1, 0);
        for (std::size_t m = 0, bs = 0; m + 1 < pd.grid.size(); ++m) {
            while (bs + 2 < b.base_grid.size() && pd.grid[m] >= b.base_grid[bs + 1] - 1e-12) ++bs;
            pd.base_step_of[m] = static_cast<int>(bs);
        }

        RngStream wrng(cfg.seed, static_cast<std::uint64_t>(p), 0);
        const int steps = pd.n_steps();
        pd.dW.resize(cfg.dim_w, steps);
        for (int m = 0; m < steps; ++m) {
            const double sdt = std::sqrt(pd.grid[static_cast<std::size_t>(m) + 1] -
                                         pd.grid[static_cast<std::size_t>(m)]);
            for (int c = 0; c < cfg.dim_w; ++c) pd.dW(c, m) = wrng.normal() * sdt;
        }

        pd.lambda.resize(static_cast<Eigen::Index>(cfg.kernels.size()), steps);
        for (std::size_t ch = 0; ch < cfg.kernels.size(); ++ch)
            for (int m = 0; m < steps; ++m)
                pd.lambda(static_cast<Eigen::Index>(ch), m) = detail::intensity_right(
                    cfg.kernels[ch], pd.grid[static_cast<std::size_t>(m)], pd.events, cfg.env);
    }
    return b;
}

/// Run the forward Euler scheme on every path of the bundle, storing the
/// state on the refined grids. Feedback, when present, is piecewise constant
/// over base steps.
inline void forward_sweep(PathBundle& b, const ForwardCoefficients& coef,
                          const std::function<Eigen::VectorXd(int p)>& x0,
                          const std::function<ForwardFeedback(int p, int base_step)>& feedback =
                              nullptr) {
    for (int p = 0; p < b.n_paths(); ++p) {
        PathData& pd = b.paths[static_cast<std::size_t>(p)];
        std::function<ForwardFeedback(int)> fb;
        if (feedback) {
            const auto& map = pd.base_step_of;
            fb = [&feedback, &map, p](int m) {
                return feedback(p, map[static_cast<std::size_t>(m)]);
            };
        }
        pd.x = euler_simulate(coef, x0(p), b.env_of(p), pd.grid, pd.dW, pd.events, pd.lambda,
                              b.marks, fb);
    }
}

}  // namespace fbsde

#endif
