#ifndef FBSDELAB_POINTPROC_HPP
#define FBSDELAB_POINTPROC_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbsdelab/events.hpp"
#include "fbsdelab/intensity.hpp"
#include "fbsdelab/measures.hpp"
#include "fbsdelab/rng.hpp"
#include "fbsdelab/stats.hpp"

namespace fbsde {

/// Ogata-style thinning against a per-window majorant. Windows end at the
/// next environment breakpoint; the majorant is refreshed after every
/// accepted event and at every breakpoint. An evaluated intensity above the
/// majorant means a declared bound was wrong, which is a hard failure.
inline EventLog simulate_thinning(const AdditiveKernel& kernel, const EnvironmentPath& env,
                                  double horizon, RngStream& rng, int channel = 0) {
    EventLog log(horizon);  // grows incrementally; accepted times are already ordered
    double t = 0.0;
    auto next_breakpoint = [&](double after) {
        for (double b : env.breakpoints())
            if (b > after) return std::min(b, horizon);
        return horizon;
    };
    while (t < horizon) {
        double window_end = next_breakpoint(t);
        double bar = dominating_rate(kernel, log, t, window_end);
        if (bar <= 0.0) {
            t = window_end;
            continue;
        }
        double s = t + rng.exponential(bar);
        if (s > window_end) {
            t = window_end;
            continue;
        }
        double lam = eval_intensity(kernel, s, log, env);
        if (lam > bar * (1.0 + 1e-12))
            throw std::runtime_error("simulate_thinning: majorant violated at t = " +
                                     std::to_string(s));
        double u = rng.uniform();
        if (u * bar <= lam) {
            int mi = rng.discrete(kernel.mark_law);
            log.add({s, kernel.mark_law[static_cast<std::size_t>(mi)].first, channel});
        }
        t = s;
    }
    return log;
}

/// Multichannel version: independent candidate streams per channel, merged
/// by time (ties broken by channel index inside EventLog).
inline EventLog simulate_thinning_multi(const std::vector<AdditiveKernel>& kernels,
                                        const EnvironmentPath& env, double horizon,
                                        std::uint64_t master_seed, std::uint64_t path_index) {
    std::vector<MarkedEvent> all;
    for (std::size_t j = 0; j < kernels.size(); ++j) {
        RngStream rng(master_seed, path_index, 1 + j);
        EventLog lj = simulate_thinning(kernels[j], env, horizon, rng, static_cast<int>(j));
        for (const auto& e : lj.events()) all.push_back(e);
    }
    return EventLog(std::move(all), horizon);
}

struct StepProcess {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> values;
};

/// Integral of a predictable integrand against the marked point process,
/// evaluated on a grid: sum over events with time <= t of U(tau, mark,
/// channel), minus the compensator integral when compensated. The
/// compensator uses the per-channel intensity path and mark law; the time
/// integral is a trapezoid between grid points (exact for constant rates).
inline StepProcess integrate_against(
    const std::function<Eigen::VectorXd(double t, double mark, int channel)>& integrand,
    const EventLog& log, bool compensated,
    const std::function<double(double t, int channel)>& lambda_path,
    const std::vector<std::vector<std::pair<double, double>>>& mark_laws,
    const std::vector<double>& grid) {
    const int n_channels = static_cast<int>(mark_laws.size());
    StepProcess out;
    out.times = grid;

    auto compensator_rate = [&](double t) {
        Eigen::VectorXd r;
        for (int j = 0; j < n_channels; ++j) {
            double lam = lambda_path ? lambda_path(t, j) : 0.0;
            for (const auto& [mark, prob] : mark_laws[static_cast<std::size_t>(j)]) {
                Eigen::VectorXd v = integrand(t, mark, j) * (lam * prob);
                if (r.size() == 0)
                    r = v;
                else
                    r += v;
            }
        }
        return r;
    };

    Eigen::VectorXd acc;
    Eigen::VectorXd comp;
    std::size_t ei = 0;
    double prev_t = 0.0;
    for (double t : grid) {
        while (ei < log.events().size() && log.events()[ei].time <= t) {
            const auto& e = log.events()[ei];
            Eigen::VectorXd v = integrand(e.time, e.mark, e.channel);
            if (acc.size() == 0)
                acc = v;
            else
                acc += v;
            ++ei;
        }
        if (compensated && t > prev_t) {
            Eigen::VectorXd mid = 0.5 * (compensator_rate(prev_t) + compensator_rate(t));
            if (comp.size() == 0)
                comp = mid * (t - prev_t);
            else
                comp += mid * (t - prev_t);
        }
        Eigen::VectorXd val = acc.size() ? acc : compensator_rate(t) * 0.0;
        if (compensated && comp.size()) val = val - comp;
        out.values.push_back(val);
        prev_t = t;
    }
    return out;
}

/// Random norm of Eq.-(9) type for finite mark laws: cell weights are
/// lambda_j * Q_j(mark), and the norm is the weighted root sum of squared
/// column norms of u(mark).
///
/// `cells`: per channel, a list of (mark, weight) with weight = lambda * prob.
inline double random_norm(const std::function<Eigen::MatrixXd(double mark)>& u,
                          const std::vector<std::vector<std::pair<double, double>>>& cells) {
    double s = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
        for (const auto& [mark, weight] : cells[j]) {
            if (weight < 0.0) throw std::invalid_argument("random_norm: negative kernel mass");
            Eigen::MatrixXd m = u(mark);
            if (m.cols() <= static_cast<Eigen::Index>(j))
                throw std::invalid_argument("random_norm: integrand has too few columns");
            s += weight * m.col(static_cast<Eigen::Index>(j)).squaredNorm();
        }
    }
    return std::sqrt(s);
}

inline double random_inner(const std::function<Eigen::MatrixXd(double)>& u,
                           const std::function<Eigen::MatrixXd(double)>& v,
                           const std::vector<std::vector<std::pair<double, double>>>& cells) {
    double s = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j)
        for (const auto& [mark, weight] : cells[j])
            s += weight * u(mark).col(static_cast<Eigen::Index>(j))
                              .dot(v(mark).col(static_cast<Eigen::Index>(j)));
    return s;
}

struct TimeRescaleReport {
    std::vector<double> transformed;  // Lambda(tau_i) - Lambda(tau_{i-1})
    KSResult ks;                      // against Exp(1)
};

/// Compensator time-change diagnostic: transformed interarrivals of a point
/// process with its realized intensity are iid Exp(1). Lambda is integrated
/// by composite Simpson between consecutive events.
inline TimeRescaleReport time_rescale_diagnostic(const EventLog& log,
                                                 const std::function<double(double)>& lambda_path,
                                                 int simpson_panels = 32) {
    TimeRescaleReport rep;
    double prev = 0.0;
    for (const auto& e : log.events()) {
        double a = prev, b = e.time;
        double h = (b - a) / (2.0 * simpson_panels);
        double s = lambda_path(a) + lambda_path(b);
        for (int i = 1; i < 2 * simpson_panels; ++i)
            s += lambda_path(a + i * h) * (i % 2 ? 4.0 : 2.0);
        double integral = s * h / 3.0;
        if (integral < 0.0)
            throw std::runtime_error("time_rescale_diagnostic: non-monotone compensator");
        rep.transformed.push_back(integral);
        prev = e.time;
    }
    rep.ks = ks_test_exp1(rep.transformed);
    return rep;
}

}  // namespace fbsde

#endif
