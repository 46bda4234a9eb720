#ifndef FBSDELAB_BACKWARD_BSDE_HPP
#define FBSDELAB_BACKWARD_BSDE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fbsdelab/measures.hpp"
#include "fbsdelab/path_bundle.hpp"

namespace fbsde {

/// Driver evaluated on the bundle: (path, base step, candidate y/z/u) -> R^n.
/// Wrappers below build this from coefficient functions of (t, nu, x, ...).
using GridDriver = std::function<Eigen::VectorXd(
    int p, int m, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
    const std::vector<Eigen::VectorXd>& u)>;

struct DriverProfile {
    // Lipschitz profiles (constant in time at desk scale); alpha^2 is their max
    double k_y = 1.0;      // squared Lipschitz constant in y
    double k_z = 1.0;      // in z
    double k_u = 1.0;      // in u, under the kernel-weighted norm
    double k_lower = 1.0;  // uniform lower bound K_*
    double k_upper = 1.0;  // uniform upper bound K^*
    double alpha_sq() const { return std::max(std::sqrt(k_y), std::max(k_z, k_u)); }
};

struct Driver {
    std::function<Eigen::VectorXd(double t, const EmpiricalMeasure& nu, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                                  const std::vector<Eigen::VectorXd>& u)>
        f;
    DriverProfile profile;
};

inline GridDriver make_grid_driver(const PathBundle& b, const Driver& d) {
    return [&b, f = d.f](int p, int m, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                         const std::vector<Eigen::VectorXd>& u) {
        const double t = b.base_grid[static_cast<std::size_t>(m)];
        return f(t, b.env_of(p).at(t, Side::Right), b.state_at_base(p, m), y, z, u);
    };
}

/// Regression features evaluated at (path, base step): intercept, state
/// monomials up to `degree`, optional environment mean / truncated second
/// moment, optional regime one-hot (states 1..n_regimes-1; state 0 is
/// absorbed by the intercept), plus caller-supplied features.
struct RegressionBasis {
    int degree = 2;
    bool use_state = true;   // off for terminal-only problems with no X
    double winsor_sd = 5.0;  // clamp state features to mean +- winsor_sd * sd; <= 0 disables
    bool env_mean = false;
    bool env_second_moment = false;
    double env_radius = 1.0;
    int regime_states = 0;
    std::vector<std::function<double(const PathBundle&, int p, int m)>> extra;

    int dimension(const PathBundle& b, int state_dim) const {
        int n = 1;
        if (use_state && degree >= 1) n += state_dim;
        if (use_state && degree >= 2) n += state_dim * (state_dim + 1) / 2;
        if (env_mean) n += static_cast<int>(b.env_of(0).at(0.0, Side::Right).mean().size());
        if (env_second_moment) n += 1;
        if (regime_states > 1) n += regime_states - 1;
        n += static_cast<int>(extra.size());
        return n;
    }

    void fill(const PathBundle& b, int p, int m, Eigen::Ref<Eigen::VectorXd> phi,
              const Eigen::VectorXd* clip_lo = nullptr,
              const Eigen::VectorXd* clip_hi = nullptr) const {
        int i = 0;
        phi[i++] = 1.0;
        if (use_state && degree >= 1) {
            const PathData& pd = b.paths[static_cast<std::size_t>(p)];
            const auto x = pd.x.col(pd.base_index[static_cast<std::size_t>(m)]);
            const Eigen::Index sd = x.size();
            for (Eigen::Index a = 0; a < sd; ++a) {
                double v = x[a];
                if (clip_lo && clip_hi)
                    v = std::min(std::max(v, (*clip_lo)[a]), (*clip_hi)[a]);
                phi[i++] = v;
            }
            if (degree >= 2)
                for (Eigen::Index a = 0; a < sd; ++a)
                    for (Eigen::Index c = a; c < sd; ++c)
                        phi[i++] = phi[1 + a] * phi[1 + c];
        }
        const double t = b.base_grid[static_cast<std::size_t>(m)];
        if (env_mean || env_second_moment) {
            const EmpiricalMeasure& nu = b.env_of(p).at(t, Side::Right);
            if (env_mean) {
                const Eigen::VectorXd em = nu.mean();
                for (Eigen::Index a = 0; a < em.size(); ++a) phi[i++] = em[a];
            }
            if (env_second_moment) phi[i++] = truncated_second_moment(nu, env_radius);
        }
        if (regime_states > 1) {
            const auto& reg = b.paths[static_cast<std::size_t>(p)].regime;
            const int s = reg.empty() ? 0
                                      : reg[static_cast<std::size_t>(
                                            b.paths[static_cast<std::size_t>(p)]
                                                .base_index[static_cast<std::size_t>(m)])];
            for (int r = 1; r < regime_states; ++r) phi[i++] = (s == r) ? 1.0 : 0.0;
        }
        for (const auto& fn : extra) phi[i++] = fn(b, p, m);
    }
};

struct LsmcOptions {
    RegressionBasis basis;
    double ridge_rel = 1e-10;  // relative ridge weight when the Gram matrix is not PD
    bool use_qr = false;       // column-pivoted QR instead of normal equations
    double min_rate_mass = 1e-8;  // lambda*q*dt below this: U forced to 0
    // state-monomial order for the jump-component fits; -1 reuses the full
    // basis. Jump regressions see only ~lambda*dt*paths effective samples per
    // step, so a coarser basis is often statistically appropriate.
    int jump_degree = -1;
};

/// Discrete backward solution on the base grid. Column m of y is the value
/// at base_grid[m]; z/u/dm columns are per-step (flattened column-major for
/// z and cell-blocked for u).
struct BackwardSolution {
    int n = 1, k = 1, cells = 0;
    std::vector<Eigen::MatrixXd> y;   // per path: n x (M+1)
    std::vector<Eigen::MatrixXd> z;   // per path: (n*k) x M
    std::vector<Eigen::MatrixXd> u;   // per path: (n*cells) x M
    std::vector<Eigen::MatrixXd> dm;  // per path: n x M

    Eigen::MatrixXd z_at(int p, int m) const {
        return Eigen::Map<const Eigen::MatrixXd>(
            z[static_cast<std::size_t>(p)].col(m).data(), n, k);
    }
    Eigen::VectorXd u_at(int p, int m, int cell) const {
        return u[static_cast<std::size_t>(p)].col(m).segment(cell * n, n);
    }
    std::vector<Eigen::VectorXd> u_cells(int p, int m) const {
        std::vector<Eigen::VectorXd> out;
        out.reserve(static_cast<std::size_t>(cells));
        for (int c = 0; c < cells; ++c) out.push_back(u_at(p, m, c));
        return out;
    }
};

/// Explicit backward induction with least-squares conditional expectations:
///   Yhat = E_m[Y_{m+1}],  Y_m = Yhat + f(t_m, Yhat, Z_m, U_m) dt,
///   Z from dW/dt-weighted targets, U per mark cell from compensated-count
///   targets normalized by the predictable cell mass lambda*q*dt, and the
///   orthogonal increment dM = Y_{m+1} - Yhat - Z dW - int U d(eta - comp)
/// so the discrete decomposition holds path-wise by construction.
inline BackwardSolution lsmc_solve(const PathBundle& b, int n, const GridDriver& driver,
                                   const std::function<Eigen::VectorXd(int p)>& terminal,
                                   const LsmcOptions& opts = {}) {
    const int pcount = b.n_paths();
    const int msteps = b.n_base_steps();
    const int k = b.dim_w;
    const int cells = b.marks.n_cells();
    const int state_dim =
        b.paths[0].x.size() ? static_cast<int>(b.paths[0].x.rows()) : 0;
    RegressionBasis basis = opts.basis;
    if (state_dim == 0) basis.use_state = false;
    const int bdim = basis.dimension(b, state_dim);
    if (pcount < bdim)
        throw std::invalid_argument("lsmc_solve: fewer paths than basis dimension");
    RegressionBasis ubasis = basis;
    const bool split_u =
        cells > 0 && opts.jump_degree >= 0 && opts.jump_degree < basis.degree;
    if (split_u) ubasis.degree = opts.jump_degree;
    const int budim = split_u ? ubasis.dimension(b, state_dim) : bdim;

    BackwardSolution sol;
    sol.n = n;
    sol.k = k;
    sol.cells = cells;
    sol.y.assign(static_cast<std::size_t>(pcount), Eigen::MatrixXd::Zero(n, msteps + 1));
    sol.z.assign(static_cast<std::size_t>(pcount), Eigen::MatrixXd::Zero(n * k, msteps));
    sol.u.assign(static_cast<std::size_t>(pcount),
                 Eigen::MatrixXd::Zero(std::max(n * cells, 1), msteps));
    sol.dm.assign(static_cast<std::size_t>(pcount), Eigen::MatrixXd::Zero(n, msteps));
    for (int p = 0; p < pcount; ++p) {
        Eigen::VectorXd zt = terminal(p);
        if (zt.size() != n) throw std::invalid_argument("lsmc_solve: terminal dimension");
        sol.y[static_cast<std::size_t>(p)].col(msteps) = zt;
    }

    const int tdim = n * k + n * cells;
    Eigen::MatrixXd phi(pcount, bdim);
    Eigen::MatrixXd phi_u;
    if (split_u) phi_u.resize(pcount, budim);
    Eigen::MatrixXd ytarget(pcount, n);
    Eigen::MatrixXd targets(pcount, std::max(tdim, 1));
    Eigen::MatrixXd cell_mass(pcount, std::max(cells, 1));
    Eigen::MatrixXd cell_dn(pcount, std::max(cells, 1));

    for (int m = msteps - 1; m >= 0; --m) {
        const double dt = b.base_grid[static_cast<std::size_t>(m) + 1] -
                          b.base_grid[static_cast<std::size_t>(m)];
        // winsorized state features: outlier paths would otherwise dominate
        // the fit and make the fitted Z/U explode under extrapolation
        Eigen::VectorXd clip_lo, clip_hi;
        const bool clip = basis.use_state && basis.winsor_sd > 0.0 && state_dim > 0;
        if (clip) {
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(state_dim);
            Eigen::VectorXd sq = Eigen::VectorXd::Zero(state_dim);
            for (int p = 0; p < pcount; ++p) {
                const Eigen::VectorXd x = b.state_at_base(p, m);
                mean += x;
                sq += x.cwiseProduct(x);
            }
            mean /= static_cast<double>(pcount);
            sq /= static_cast<double>(pcount);
            const Eigen::VectorXd sd =
                (sq - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
            clip_lo = mean - basis.winsor_sd * sd;
            clip_hi = mean + basis.winsor_sd * sd;
        }
        Eigen::VectorXd prow(bdim), prow_u(budim);
        for (int p = 0; p < pcount; ++p) {
            basis.fill(b, p, m, prow, clip ? &clip_lo : nullptr, clip ? &clip_hi : nullptr);
            phi.row(p) = prow.transpose();
            if (split_u) {
                ubasis.fill(b, p, m, prow_u, clip ? &clip_lo : nullptr,
                            clip ? &clip_hi : nullptr);
                phi_u.row(p) = prow_u.transpose();
            }
            ytarget.row(p) =
                sol.y[static_cast<std::size_t>(p)].col(m + 1).transpose();
            for (int c = 0; c < cells; ++c) {
                const auto& cell = b.marks.cell(c);
                const double mass = b.lambda_at_base(p, m, cell.channel) * cell.prob * dt;
                const int count =
                    b.count_events_in_base_step(p, m, cell.channel, cell.mark);
                cell_mass(p, c) = mass;
                cell_dn(p, c) = count - mass;
            }
        }

        // shared factorization for the conditional-mean fit and the
        // increment-weighted fits below
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
        Eigen::LDLT<Eigen::MatrixXd> ldlt;
        if (opts.use_qr) {
            qr.compute(phi);
        } else {
            Eigen::MatrixXd gram = phi.transpose() * phi;
            ldlt.compute(gram);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
                gram.diagonal().array() += opts.ridge_rel * gram.trace() / bdim;
                ldlt.compute(gram);
            }
        }
        auto fit = [&](const Eigen::MatrixXd& rhs) -> Eigen::MatrixXd {
            return opts.use_qr ? Eigen::MatrixXd(qr.solve(rhs))
                               : Eigen::MatrixXd(ldlt.solve(phi.transpose() * rhs));
        };

        const Eigen::MatrixXd fitted_y = phi * fit(ytarget);

        // increment-weighted targets are centered by the fitted conditional
        // mean (measurable at the step's left endpoint): this keeps the
        // estimator unbiased while shrinking its variance from the scale of
        // the value process to the scale of its one-step innovation
        Eigen::VectorXd ycen(n), dw(b.dim_w);
        for (int p = 0; p < pcount; ++p) {
            ycen = sol.y[static_cast<std::size_t>(p)].col(m + 1) -
                   fitted_y.row(p).transpose();
            b.base_dW_into(p, m, dw);
            for (int c = 0; c < k; ++c)
                targets.block(p, c * n, 1, n) = (ycen * (dw[c] / dt)).transpose();
            for (int c = 0; c < cells; ++c) {
                const double scale = cell_mass(p, c) < opts.min_rate_mass
                                         ? 0.0
                                         : cell_dn(p, c) / cell_mass(p, c);
                targets.block(p, n * k + c * n, 1, n) = (ycen * scale).transpose();
            }
        }
        Eigen::MatrixXd fitted;
        if (tdim > 0) {
            if (!split_u) {
                fitted = phi * fit(targets.leftCols(tdim));
            } else {
                fitted.resize(pcount, tdim);
                fitted.leftCols(n * k) = phi * fit(targets.leftCols(n * k));
                // coarser basis for the jump components, own factorization
                Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_u;
                Eigen::LDLT<Eigen::MatrixXd> ldlt_u;
                if (opts.use_qr) {
                    qr_u.compute(phi_u);
                } else {
                    Eigen::MatrixXd gram_u = phi_u.transpose() * phi_u;
                    ldlt_u.compute(gram_u);
                    if (ldlt_u.info() != Eigen::Success || !ldlt_u.isPositive()) {
                        gram_u.diagonal().array() += opts.ridge_rel * gram_u.trace() / budim;
                        ldlt_u.compute(gram_u);
                    }
                }
                const Eigen::MatrixXd urhs = targets.middleCols(n * k, n * cells);
                fitted.rightCols(n * cells) =
                    phi_u * (opts.use_qr
                                 ? Eigen::MatrixXd(qr_u.solve(urhs))
                                 : Eigen::MatrixXd(ldlt_u.solve(phi_u.transpose() * urhs)));
            }
        } else {
            fitted = Eigen::MatrixXd::Zero(pcount, 0);
        }

        Eigen::VectorXd yhat(n), jump_int(n);
        Eigen::MatrixXd zm(n, k);
        std::vector<Eigen::VectorXd> um(static_cast<std::size_t>(cells),
                                        Eigen::VectorXd::Zero(n));
        for (int p = 0; p < pcount; ++p) {
            yhat = fitted_y.row(p).transpose();
            for (int c = 0; c < k; ++c)
                zm.col(c) = fitted.block(p, c * n, 1, n).transpose();
            for (int c = 0; c < cells; ++c) {
                if (cell_mass(p, c) < opts.min_rate_mass)
                    um[static_cast<std::size_t>(c)].setZero();
                else
                    um[static_cast<std::size_t>(c)] =
                        fitted.block(p, n * k + c * n, 1, n).transpose();
            }
            const Eigen::VectorXd fval = driver(p, m, yhat, zm, um);
            sol.y[static_cast<std::size_t>(p)].col(m) = yhat + fval * dt;
            sol.z[static_cast<std::size_t>(p)].col(m) =
                Eigen::Map<const Eigen::VectorXd>(zm.data(), n * k);
            jump_int.setZero();
            for (int c = 0; c < cells; ++c) {
                sol.u[static_cast<std::size_t>(p)].col(m).segment(c * n, n) =
                    um[static_cast<std::size_t>(c)];
                jump_int.noalias() += um[static_cast<std::size_t>(c)] * cell_dn(p, c);
            }
            b.base_dW_into(p, m, dw);
            sol.dm[static_cast<std::size_t>(p)].col(m) =
                sol.y[static_cast<std::size_t>(p)].col(m + 1) - yhat - jump_int;
            sol.dm[static_cast<std::size_t>(p)].col(m).noalias() -= zm * dw;
        }
    }
    return sol;
}

struct SolutionNorms {
    double sup_y = 0.0;  // E[sup_t |Y_t|^2]
    double h2_z = 0.0;   // E int ||Z||^2 dt
    double h2_u = 0.0;   // E int ||U||^2_lambda dt
    double m_quad = 0.0; // E sum |dM|^2  (discrete E tr<M>_T)
    double total() const { return sup_y + h2_z + h2_u + m_quad; }
};

/// Weighted squared norm with weight e^{beta A_t}; alpha_sq defaults to 1
/// (then A_t = t). beta = 0 gives the plain components.
inline SolutionNorms weighted_norm_components(
    const BackwardSolution& sol, const PathBundle& b, double beta = 0.0,
    const std::function<double(double)>& alpha_sq = nullptr) {
    const int pcount = b.n_paths();
    const int msteps = b.n_base_steps();
    std::vector<double> a(static_cast<std::size_t>(msteps) + 1, 0.0);
    for (int m = 0; m < msteps; ++m) {
        const double t0 = b.base_grid[static_cast<std::size_t>(m)];
        const double t1 = b.base_grid[static_cast<std::size_t>(m) + 1];
        const double a0 = alpha_sq ? alpha_sq(t0) : 1.0;
        const double a1 = alpha_sq ? alpha_sq(t1) : 1.0;
        a[static_cast<std::size_t>(m) + 1] =
            a[static_cast<std::size_t>(m)] + 0.5 * (a0 + a1) * (t1 - t0);
    }
    SolutionNorms out;
    for (int p = 0; p < pcount; ++p) {
        double sup = 0.0;
        for (int m = 0; m <= msteps; ++m) {
            const double w = std::exp(beta * a[static_cast<std::size_t>(m)]);
            sup = std::max(sup,
                           w * sol.y[static_cast<std::size_t>(p)].col(m).squaredNorm());
        }
        out.sup_y += sup;
        for (int m = 0; m < msteps; ++m) {
            const double dt = b.base_grid[static_cast<std::size_t>(m) + 1] -
                              b.base_grid[static_cast<std::size_t>(m)];
            const double w = std::exp(beta * a[static_cast<std::size_t>(m)]);
            out.h2_z += w * sol.z[static_cast<std::size_t>(p)].col(m).squaredNorm() * dt;
            for (int c = 0; c < sol.cells; ++c) {
                const auto& cell = b.marks.cell(c);
                out.h2_u += w * b.lambda_at_base(p, m, cell.channel) * cell.prob *
                            sol.u_at(p, m, c).squaredNorm() * dt;
            }
            out.m_quad += w * sol.dm[static_cast<std::size_t>(p)].col(m).squaredNorm();
        }
    }
    const double inv = 1.0 / static_cast<double>(pcount);
    out.sup_y *= inv;
    out.h2_z *= inv;
    out.h2_u *= inv;
    out.m_quad *= inv;
    return out;
}

inline double weighted_norm(const BackwardSolution& sol, const PathBundle& b, double beta = 0.0,
                            const std::function<double(double)>& alpha_sq = nullptr) {
    return weighted_norm_components(sol, b, beta, alpha_sq).total();
}

struct NormEquivalenceReport {
    double lower = 0.0;  // plain squared norm
    double value = 0.0;  // weighted squared norm
    double upper = 0.0;  // e^{beta K^* T} * plain
    bool ok = false;
};

/// Sandwich check: with K_* <= alpha_sq <= K^*, the weight e^{beta A_t} lies
/// in [1, e^{beta K^* T}], so the weighted squared norm is pinched between
/// the plain squared norm and its e^{beta K^* T} multiple.
inline NormEquivalenceReport norm_equivalence_check(
    const BackwardSolution& sol, const PathBundle& b, double beta,
    const std::function<double(double)>& alpha_sq, double k_upper) {
    NormEquivalenceReport rep;
    rep.lower = weighted_norm(sol, b, 0.0, nullptr);
    rep.value = weighted_norm(sol, b, beta, alpha_sq);
    rep.upper = rep.lower * std::exp(beta * k_upper * b.horizon);
    const double tol = 1e-9 * (1.0 + rep.upper);
    rep.ok = rep.lower <= rep.value + tol && rep.value <= rep.upper + tol;
    return rep;
}

inline BackwardSolution solution_diff(const BackwardSolution& a, const BackwardSolution& c) {
    BackwardSolution d = a;
    for (std::size_t p = 0; p < d.y.size(); ++p) {
        d.y[p] -= c.y[p];
        d.z[p] -= c.z[p];
        d.u[p] -= c.u[p];
        d.dm[p] -= c.dm[p];
    }
    return d;
}

struct AprioriGapReport {
    double gap_sq = 0.0;     // squared solution-gap norm
    double dzeta_sq = 0.0;   // E|delta zeta|^2
    double df_int_sq = 0.0;  // E (int |delta f| dt)^2, deltas at sol2's arguments
};

inline AprioriGapReport apriori_gap_check(const BackwardSolution& sol1,
                                          const BackwardSolution& sol2, const GridDriver& f1,
                                          const GridDriver& f2, const PathBundle& b) {
    AprioriGapReport rep;
    rep.gap_sq = weighted_norm(solution_diff(sol1, sol2), b);
    const int msteps = b.n_base_steps();
    for (int p = 0; p < b.n_paths(); ++p) {
        rep.dzeta_sq += (sol1.y[static_cast<std::size_t>(p)].col(msteps) -
                         sol2.y[static_cast<std::size_t>(p)].col(msteps))
                            .squaredNorm();
        double fint = 0.0;
        for (int m = 0; m < msteps; ++m) {
            const double dt = b.base_grid[static_cast<std::size_t>(m) + 1] -
                              b.base_grid[static_cast<std::size_t>(m)];
            const Eigen::VectorXd y = sol2.y[static_cast<std::size_t>(p)].col(m);
            const Eigen::MatrixXd z = sol2.z_at(p, m);
            const auto u = sol2.u_cells(p, m);
            fint += (f1(p, m, y, z, u) - f2(p, m, y, z, u)).norm() * dt;
        }
        rep.df_int_sq += fint * fint;
    }
    rep.dzeta_sq /= static_cast<double>(b.n_paths());
    rep.df_int_sq /= static_cast<double>(b.n_paths());
    return rep;
}

}  // namespace fbsde

#endif
