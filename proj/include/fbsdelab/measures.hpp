#ifndef FBSDELAB_MEASURES_HPP
#define FBSDELAB_MEASURES_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

constexpr double kWeightTol = 1e-12;

/// Finite weighted atom set on R^d with strictly positive weights summing
/// to one. All simulated environments are finitely supported, so these are
/// exact representatives of the second-moment measures they stand in for.
class EmpiricalMeasure {
  public:
    EmpiricalMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights)
        : points_(std::move(points)), weights_(std::move(weights)) {
        validate();
    }

    static EmpiricalMeasure dirac(const Eigen::VectorXd& x) {
        Eigen::MatrixXd p(x.size(), 1);
        p.col(0) = x;
        return EmpiricalMeasure(p, Eigen::VectorXd::Ones(1));
    }

    static EmpiricalMeasure dirac1d(double x) {
        return dirac(Eigen::VectorXd::Constant(1, x));
    }

    // uniform weights over the columns of `points`
    static EmpiricalMeasure uniform(const Eigen::MatrixXd& points) {
        const auto m = points.cols();
        return EmpiricalMeasure(points, Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)));
    }

    static EmpiricalMeasure uniform1d(const std::vector<double>& xs) {
        Eigen::MatrixXd p(1, static_cast<Eigen::Index>(xs.size()));
        for (std::size_t i = 0; i < xs.size(); ++i) p(0, static_cast<Eigen::Index>(i)) = xs[i];
        return uniform(p);
    }

    int dim() const { return static_cast<int>(points_.rows()); }
    int size() const { return static_cast<int>(points_.cols()); }
    const Eigen::MatrixXd& points() const { return points_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    Eigen::VectorXd point(int i) const { return points_.col(i); }
    double weight(int i) const { return weights_(i); }

    Eigen::VectorXd mean() const { return points_ * weights_; }

    double second_moment() const {
        double s = 0.0;
        for (int i = 0; i < size(); ++i) s += weights_(i) * points_.col(i).squaredNorm();
        return s;
    }

    bool uniform_weights(double tol = kWeightTol) const {
        const double w = 1.0 / static_cast<double>(size());
        for (int i = 0; i < size(); ++i)
            if (std::fabs(weights_(i) - w) > tol) return false;
        return true;
    }

  private:
    void validate() const {
        if (points_.cols() != weights_.size())
            throw std::invalid_argument("EmpiricalMeasure: atom/weight count mismatch");
        if (points_.cols() == 0) throw std::invalid_argument("EmpiricalMeasure: empty atom set");
        double s = 0.0;
        for (int i = 0; i < weights_.size(); ++i) {
            if (!(weights_(i) > 0.0))
                throw std::invalid_argument("EmpiricalMeasure: weights must be strictly positive");
            s += weights_(i);
        }
        if (std::fabs(s - 1.0) > kWeightTol)
            throw std::invalid_argument("EmpiricalMeasure: weights must sum to 1");
    }

    Eigen::MatrixXd points_;  // d x m
    Eigen::VectorXd weights_;
};

namespace detail {

// Min-cost assignment (Hungarian algorithm with potentials), O(n^3).
// cost is n x n; returns the minimal total cost.
inline double min_cost_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
    return total;
}

}  // namespace detail

/// Wasserstein-2 distance between finite measures on the same R^d.
/// Exact in two regimes: d = 1 with arbitrary weights (monotone/quantile
/// coupling) and equal-count uniform-weight atom sets with <= 64 atoms in
/// any d (optimal assignment). Anything else is refused: an approximation
/// would poison the oracles built on top of this.
inline double w2_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("w2_distance: dimension mismatch");
    if (a.dim() == 1) {
        // quantile coupling over merged cumulative weights
        std::vector<int> ia(a.size()), ib(b.size());
        std::iota(ia.begin(), ia.end(), 0);
        std::iota(ib.begin(), ib.end(), 0);
        std::sort(ia.begin(), ia.end(),
                  [&](int i, int j) { return a.points()(0, i) < a.points()(0, j); });
        std::sort(ib.begin(), ib.end(),
                  [&](int i, int j) { return b.points()(0, i) < b.points()(0, j); });
        double cost = 0.0;
        std::size_t i = 0, j = 0;
        double ra = a.weight(ia[0]), rb = b.weight(ib[0]);
        while (true) {
            double mass = std::min(ra, rb);
            double diff = a.points()(0, ia[i]) - b.points()(0, ib[j]);
            cost += mass * diff * diff;
            ra -= mass;
            rb -= mass;
            if (ra <= kWeightTol) {
                if (++i >= ia.size()) break;
                ra = a.weight(ia[i]);
            }
            if (rb <= kWeightTol) {
                if (++j >= ib.size()) break;
                rb = b.weight(ib[j]);
            }
        }
        return std::sqrt(std::max(cost, 0.0));
    }
    if (a.size() == b.size() && a.size() <= 64 && a.uniform_weights() && b.uniform_weights()) {
        const int m = a.size();
        Eigen::MatrixXd cost(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                cost(i, j) = (a.point(i) - b.point(j)).squaredNorm();
        return std::sqrt(std::max(detail::min_cost_assignment(cost) / m, 0.0));
    }
    throw std::invalid_argument(
        "w2_distance: not exactly computable for d > 1 with unequal weights or > 64 atoms");
}

/// Scalar functionals of a measure used by intensity kernels and model
/// coefficients.
inline double measure_mean(const EmpiricalMeasure& nu) {
    if (nu.dim() != 1) throw std::invalid_argument("measure_mean: requires d = 1");
    return nu.mean()(0);
}

// second moment restricted to the open ball of radius r around 0
inline double truncated_second_moment(const EmpiricalMeasure& nu, double r) {
    if (r <= 0.0) throw std::invalid_argument("truncated_second_moment: r must be positive");
    double s = 0.0;
    for (int i = 0; i < nu.size(); ++i) {
        if (nu.point(i).norm() < r) s += nu.weight(i) * nu.point(i).squaredNorm();
    }
    return s;
}

struct LipschitzScalarFn {
    std::function<double(const Eigen::VectorXd&)> fn;
    double lipschitz = 0.0;
};

inline double linear_functional(const EmpiricalMeasure& nu, const LipschitzScalarFn& psi) {
    double s = 0.0;
    for (int i = 0; i < nu.size(); ++i) s += nu.weight(i) * psi.fn(nu.point(i));
    return s;
}

enum class Side { Right, Left };

/// Cadlag step flow t -> mu_t of empirical measures on [0, T].
class EnvironmentPath {
  public:
    EnvironmentPath(std::vector<double> breakpoints, std::vector<EmpiricalMeasure> values,
                    double horizon)
        : breakpoints_(std::move(breakpoints)), values_(std::move(values)), horizon_(horizon) {
        if (breakpoints_.empty() || breakpoints_.size() != values_.size())
            throw std::invalid_argument("EnvironmentPath: breakpoint/value count mismatch");
        if (breakpoints_.front() != 0.0)
            throw std::invalid_argument("EnvironmentPath: first breakpoint must be 0");
        if (!(horizon_ > 0.0)) throw std::invalid_argument("EnvironmentPath: horizon must be positive");
        for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
            if (!(breakpoints_[i] > breakpoints_[i - 1]))
                throw std::invalid_argument("EnvironmentPath: breakpoints must be strictly increasing");
            if (breakpoints_[i] > horizon_)
                throw std::invalid_argument("EnvironmentPath: breakpoint beyond horizon");
        }
    }

    static EnvironmentPath constant(const EmpiricalMeasure& nu, double horizon) {
        return EnvironmentPath({0.0}, {nu}, horizon);
    }

    double horizon() const { return horizon_; }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<EmpiricalMeasure>& values() const { return values_; }
    const EmpiricalMeasure& initial() const { return values_.front(); }

    const EmpiricalMeasure& at(double t, Side side = Side::Right) const {
        if (t < 0.0 || t > horizon_)
            throw std::out_of_range("EnvironmentPath: time outside [0, T]");
        // largest breakpoint <= t (right) or < t (left); mu_{0-} := mu_0
        std::size_t lo = 0;
        for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
            if (side == Side::Right ? breakpoints_[i] <= t : breakpoints_[i] < t)
                lo = i;
            else
                break;
        }
        return values_[lo];
    }

    // computed bound on sup_t W2(mu_t, ref)^2
    double sup_w2_sq(const EmpiricalMeasure& ref) const {
        double s = 0.0;
        for (const auto& v : values_) {
            double w = w2_distance(v, ref);
            s = std::max(s, w * w);
        }
        return s;
    }

  private:
    std::vector<double> breakpoints_;
    std::vector<EmpiricalMeasure> values_;
    double horizon_;
};

namespace detail {
inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}
}  // namespace detail

/// Line-oriented serialization: header line "T d", then one record per
/// breakpoint: time, atom count, then per atom the d coordinates and the
/// weight. %.17g round-trips doubles exactly.
inline void write_environment(std::ostream& os, const EnvironmentPath& env) {
    using detail::fmt_double;
    os << fmt_double(env.horizon()) << ' ' << env.initial().dim() << '\n';
    for (std::size_t i = 0; i < env.breakpoints().size(); ++i) {
        const auto& nu = env.values()[i];
        os << fmt_double(env.breakpoints()[i]) << ' ' << nu.size();
        for (int a = 0; a < nu.size(); ++a) {
            for (int c = 0; c < nu.dim(); ++c) os << ' ' << fmt_double(nu.points()(c, a));
            os << ' ' << fmt_double(nu.weight(a));
        }
        os << '\n';
    }
}

inline EnvironmentPath read_environment(std::istream& is) {
    double horizon = 0.0;
    int d = 0;
    if (!(is >> horizon >> d)) throw std::runtime_error("read_environment: bad header");
    std::vector<double> bps;
    std::vector<EmpiricalMeasure> values;
    double t = 0.0;
    int m = 0;
    while (is >> t >> m) {
        Eigen::MatrixXd pts(d, m);
        Eigen::VectorXd w(m);
        for (int a = 0; a < m; ++a) {
            for (int c = 0; c < d; ++c)
                if (!(is >> pts(c, a))) throw std::runtime_error("read_environment: bad atom");
            if (!(is >> w(a))) throw std::runtime_error("read_environment: bad weight");
        }
        bps.push_back(t);
        values.emplace_back(pts, w);
    }
    return EnvironmentPath(std::move(bps), std::move(values), horizon);
}

}  // namespace fbsde

#endif
