#ifndef FBSDELAB_CLI_HPP
#define FBSDELAB_CLI_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsdelab/backward_bsde.hpp"
#include "fbsdelab/coupled_solver.hpp"
#include "fbsdelab/models.hpp"
#include "fbsdelab/path_bundle.hpp"
#include "fbsdelab/pointproc.hpp"

namespace fbsde {

using json = nlohmann::json;

inline std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t file_digest(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("file_digest: cannot open " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return fnv1a(ss.str());
}

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds = {
        "simulate-pointproc", "simulate-regime",     "solve-forward",
        "solve-backward",     "solve-coupled",       "verify-monotonicity",
        "verify-duality",     "reproduce-lq"};
    return kinds;
}

/// One experiment run: every numeric default is materialized back into the
/// manifest so a replay never depends on compiled-in defaults.
struct RunConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    double horizon = 1.0;
    int grid_steps = 50;
    int paths = 1000;
    int basis_degree = 2;
    double eps_init = 0.25;
    double eps_min = 1e-3;
    double picard_tol = 1e-6;
    int threads = 1;
    std::string output_dir;
    json model = json::object();

    static RunConfig from_json(const json& j) {
        RunConfig c;
        if (!j.contains("experiment")) throw std::invalid_argument("config: missing 'experiment'");
        c.experiment = j.at("experiment").get<std::string>();
        bool known = false;
        for (const auto& k : experiment_kinds()) known = known || k == c.experiment;
        if (!known) throw std::invalid_argument("config: unknown experiment '" + c.experiment + "'");
        if (!j.contains("seed"))
            throw std::invalid_argument("config: missing 'seed' (no entropy defaults)");
        c.seed = j.at("seed").get<std::uint64_t>();
        if (!j.contains("output_dir")) throw std::invalid_argument("config: missing 'output_dir'");
        c.output_dir = j.at("output_dir").get<std::string>();
        c.horizon = j.value("horizon", c.horizon);
        c.grid_steps = j.value("grid_steps", c.grid_steps);
        c.paths = j.value("paths", c.paths);
        c.basis_degree = j.value("basis_degree", c.basis_degree);
        c.eps_init = j.value("eps_init", c.eps_init);
        c.eps_min = j.value("eps_min", c.eps_min);
        c.picard_tol = j.value("picard_tol", c.picard_tol);
        c.threads = j.value("threads", c.threads);
        if (j.contains("model")) c.model = j.at("model");
        c.validate();
        return c;
    }

    void validate() const {
        if (grid_steps < 2) throw std::invalid_argument("config: grid_steps must be >= 2");
        if (!(horizon > 0.0)) throw std::invalid_argument("config: horizon must be positive");
        if (paths < 1) throw std::invalid_argument("config: paths must be >= 1");
        if (basis_degree < 0 || basis_degree > 2)
            throw std::invalid_argument("config: basis_degree must be 0, 1, or 2");
        const int basis_dim = 1 + (basis_degree >= 1 ? 1 : 0) + (basis_degree >= 2 ? 1 : 0);
        if (paths < basis_dim)
            throw std::invalid_argument("config: paths < basis dimension " +
                                        std::to_string(basis_dim));
        if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    }

    json to_json() const {
        return json{{"experiment", experiment}, {"seed", seed},
                    {"horizon", horizon},       {"grid_steps", grid_steps},
                    {"paths", paths},           {"basis_degree", basis_degree},
                    {"eps_init", eps_init},     {"eps_min", eps_min},
                    {"picard_tol", picard_tol}, {"threads", threads},
                    {"output_dir", output_dir}, {"model", model}};
    }
};

struct CheckOutcome {
    std::string name;
    bool pass = false;
    double value = 0.0;
    std::string detail;
};

struct RunManifest {
    json config;
    std::string config_digest;
    std::string artifact_version = "1";
    double wall_time_s = 0.0;
    std::vector<CheckOutcome> checks;
    std::map<std::string, std::string> files;  // file name -> digest

    json to_json() const {
        json jc = json::array();
        for (const auto& c : checks)
            jc.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value},
                          {"detail", c.detail}});
        return json{{"artifact_version", artifact_version},
                    {"config", config},
                    {"config_digest", config_digest},
                    {"wall_time_s", wall_time_s},
                    {"checks", jc},
                    {"files", files}};
    }

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

namespace detail {

inline void write_table(const std::filesystem::path& p, const std::string& header,
                        const std::vector<std::vector<double>>& rows) {
    std::ofstream os(p);
    os << header << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i)
            os << (i ? " " : "") << fmt_double(r[i]);
        os << '\n';
    }
}

struct RunContext {
    const RunConfig& cfg;
    std::filesystem::path dir;
    RunManifest manifest;

    void emit(const std::string& name, const std::string& header,
              const std::vector<std::vector<double>>& rows) {
        write_table(dir / name, header, rows);
        manifest.files[name] = hex64(file_digest(dir / name));
    }
    void check(const std::string& name, bool pass, double value, const std::string& detail) {
        manifest.checks.push_back({name, pass, value, detail});
    }
};

inline LQParams lq_from_json(const json& m) {
    LQParams p;
    p.b = m.value("b", p.b);
    p.f = m.value("f", p.f);
    p.sigma = m.value("sigma", p.sigma);
    p.gamma = m.value("gamma", p.gamma);
    p.f1 = m.value("f1", p.f1);
    p.f2 = m.value("f2", p.f2);
    p.g = m.value("g", p.g);
    return p;
}

inline void run_simulate_pointproc(RunContext& ctx) {
    const RunConfig& c = ctx.cfg;
    const std::string kind = c.model.value("kind", std::string("constant"));
    AdditiveKernel kernel;
    double expected = -1.0;
    if (kind == "constant") {
        const double rate = c.model.value("rate", 1.0);
        kernel = AdditiveKernel::constant(rate);
        expected = rate * c.horizon;
    } else if (kind == "hawkes") {
        kernel = AdditiveKernel::hawkes(c.model.value("baseline", 1.0), c.model.value("a", 0.5),
                                        c.model.value("b", 1.0), c.horizon);
    } else {
        throw std::invalid_argument("simulate-pointproc: unknown kernel kind '" + kind + "'");
    }
    const EnvironmentPath env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0),
                                                          c.horizon);
    std::vector<double> counts;
    std::vector<std::vector<double>> rows;
    EventLog first(c.horizon);
    for (int p = 0; p < c.paths; ++p) {
        RngStream rng(c.seed, static_cast<std::uint64_t>(p), 1);
        EventLog log = simulate_thinning(kernel, env, c.horizon, rng);
        if (p == 0) first = log;
        counts.push_back(static_cast<double>(log.size()));
        rows.push_back({static_cast<double>(p), static_cast<double>(log.size())});
    }
    ctx.emit("counts.tsv", "path count", rows);
    std::vector<std::vector<double>> erows;
    for (const auto& e : first.events())
        erows.push_back({e.time, static_cast<double>(e.channel), e.mark});
    ctx.emit("events_path0.tsv", "time channel mark", erows);
    const MeanSE ms = mean_se(counts);
    if (expected >= 0.0)
        ctx.check("mean_count_3se", std::fabs(ms.mean - expected) <= 3.0 * ms.se, ms.mean,
                  "expected " + fmt_double(expected) + " se " + fmt_double(ms.se));
    else
        ctx.check("mean_count_recorded", true, ms.mean, "se " + fmt_double(ms.se));
}

inline void run_simulate_regime(RunContext& ctx) {
    const RunConfig& c = ctx.cfg;
    const double q12 = c.model.value("q12", 1.0);
    const double q21 = c.model.value("q21", 2.0);
    RegimeKernel rk;
    rk.n_states = 2;
    rk.h0 = std::max(q12, q21);
    rk.rate_matrix = [q12, q21](const EmpiricalMeasure&) {
        Eigen::MatrixXd q(2, 2);
        q << -q12, q12, q21, -q21;
        return q;
    };
    const EnvironmentPath env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0),
                                                          c.horizon);
    std::vector<double> occ0;
    std::vector<std::vector<double>> rows;
    for (int p = 0; p < c.paths; ++p) {
        RngStream rng(c.seed, static_cast<std::uint64_t>(p), 2);
        RegimeChain chain = simulate_regime_chain(rk, env, 0, c.horizon, rng);
        double t_in0 = 0.0, prev = 0.0;
        int cur = 0;
        for (std::size_t i = 0; i < chain.times.size(); ++i) {
            if (cur == 0) t_in0 += chain.times[i] - prev;
            prev = chain.times[i];
            cur = chain.states[i];
        }
        if (cur == 0) t_in0 += c.horizon - prev;
        occ0.push_back(t_in0 / c.horizon);
        rows.push_back({static_cast<double>(p), t_in0 / c.horizon,
                        static_cast<double>(chain.times.size())});
    }
    ctx.emit("occupation.tsv", "path frac_state0 transitions", rows);
    const MeanSE ms = mean_se(occ0);
    const double target = q21 / (q12 + q21);
    ctx.check("occupation_3se", std::fabs(ms.mean - target) <= 3.0 * ms.se, ms.mean,
              "target " + fmt_double(target) + " se " + fmt_double(ms.se));
}

inline void run_solve_forward(RunContext& ctx) {
    const RunConfig& c = ctx.cfg;
    const double theta = c.model.value("theta", 1.0);
    const double sig = c.model.value("sig", 0.5);
    const double x0 = c.model.value("x0", 1.0);
    const double rate = c.model.value("rate", 1.0);
    const double jump_size = c.model.value("jump_size", 0.1);
    BundleConfig bc;
    bc.horizon = c.horizon;
    bc.base_steps = c.grid_steps;
    bc.n_paths = c.paths;
    bc.seed = c.seed;
    bc.env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), c.horizon);
    if (rate > 0.0) bc.kernels = {AdditiveKernel::constant(rate)};
    PathBundle b = make_bundle(bc);
    ForwardCoefficients fc;
    fc.drift = [theta](double, const EmpiricalMeasure&, const CoefArgs& a) {
        return Eigen::VectorXd::Constant(1, -theta * a.x[0]);
    };
    fc.diffusion = [sig](double, const EmpiricalMeasure&, const CoefArgs&) {
        return Eigen::MatrixXd::Constant(1, 1, sig);
    };
    fc.jump = [jump_size](double, double, int, const EmpiricalMeasure&, const CoefArgs&) {
        return Eigen::VectorXd::Constant(1, jump_size);
    };
    forward_sweep(b, fc, [x0](int) { return Eigen::VectorXd::Constant(1, x0); });
    std::vector<std::vector<double>> rows;
    std::vector<double> terminal;
    for (int m = 0; m <= b.n_base_steps(); ++m) {
        std::vector<double> xs;
        for (int p = 0; p < b.n_paths(); ++p) xs.push_back(b.state_at_base(p, m)[0]);
        const MeanSE ms = mean_se(xs);
        double m2 = 0.0;
        for (double x : xs) m2 += x * x;
        m2 /= static_cast<double>(xs.size());
        rows.push_back({b.base_grid[static_cast<std::size_t>(m)], ms.mean, m2, ms.se});
        if (m == b.n_base_steps()) terminal = xs;
    }
    ctx.emit("moments.tsv", "time mean second_moment se", rows);
    const MeanSE ms = mean_se(terminal);
    const double target = x0 * std::exp(-theta * c.horizon);
    ctx.check("terminal_mean_3se", std::fabs(ms.mean - target) <= 3.0 * ms.se, ms.mean,
              "target " + fmt_double(target) + " se " + fmt_double(ms.se));
}

inline void run_solve_backward(RunContext& ctx) {
    const RunConfig& c = ctx.cfg;
    const double fconst = c.model.value("driver_const", 1.0);
    const double zconst = c.model.value("terminal_const", 0.0);
    BundleConfig bc;
    bc.horizon = c.horizon;
    bc.base_steps = c.grid_steps;
    bc.n_paths = c.paths;
    bc.seed = c.seed;
    bc.kernels = {AdditiveKernel::constant(c.model.value("rate", 1.0))};
    bc.env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), c.horizon);
    PathBundle b = make_bundle(bc);
    GridDriver drv = [fconst](int, int, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                              const std::vector<Eigen::VectorXd>&) {
        return Eigen::VectorXd::Constant(1, fconst);
    };
    LsmcOptions opts;
    opts.basis.degree = c.basis_degree;
    BackwardSolution sol = lsmc_solve(
        b, 1, drv, [zconst](int) { return Eigen::VectorXd::Constant(1, zconst); }, opts);
    std::vector<std::vector<double>> rows;
    for (int m = 0; m <= b.n_base_steps(); ++m) {
        double mean = 0.0;
        for (int p = 0; p < b.n_paths(); ++p) mean += sol.y[static_cast<std::size_t>(p)](0, m);
        mean /= static_cast<double>(b.n_paths());
        rows.push_back({b.base_grid[static_cast<std::size_t>(m)], mean});
    }
    ctx.emit("value.tsv", "time mean_y", rows);
    const double expect = zconst + fconst * c.horizon;
    const double y0 = rows[0][1];
    ctx.check("constant_driver_exact", std::fabs(y0 - expect) <= 1e-10, y0,
              "expected " + fmt_double(expect));
}

struct LQRunResult {
    double rel_y = 0.0, rel_z = 0.0, rel_u = 0.0, m_ratio = 0.0;
    bool converged = false;
    SolverReport report;
};

/// Shared implementation of solve-coupled / reproduce-lq: solve the LQ
/// instance by continuation and compare to the linear-feedback reference.
inline LQRunResult run_lq_instance(const RunConfig& c, RunContext* ctx) {
    const LQParams lp = lq_from_json(c.model);
    const double rate = c.model.value("rate", 1.0);
    const double x0 = c.model.value("x0", 1.0);
    BundleConfig bc;
    bc.horizon = c.horizon;
    bc.base_steps = c.grid_steps;
    bc.n_paths = c.paths;
    bc.seed = c.seed;
    bc.kernels = {AdditiveKernel::constant(rate)};
    bc.env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), c.horizon);
    PathBundle b = make_bundle(bc);
    FBSDEModel model = build_lq_model(lp);
    ContinuationConfig cc;
    cc.lsmc.basis.degree = c.basis_degree;
    cc.lsmc.jump_degree = c.model.value("jump_degree", -1);
    cc.picard_tol = c.picard_tol;
    cc.eps_init = c.eps_init;
    cc.eps_min = c.eps_min;
    cc.x0 = [x0](int) { return Eigen::VectorXd::Constant(1, x0); };
    auto [sol, rep] = continuation_solve(model, b, cc);
    LQRunResult res;
    res.report = rep;
    res.converged = rep.converged;
    if (ctx) {
        // emitted even for failed solves so every run leaves a seed-sensitive artifact
        std::vector<std::vector<double>> srows;
        for (const auto& s : rep.steps)
            srows.push_back({s.alpha, s.eps, static_cast<double>(s.phi_iters),
                             static_cast<double>(s.picard_iters)});
        ctx->emit("continuation.tsv", "alpha eps phi_iters picard_iters", srows);
    }
    if (!rep.converged) return res;

    const RiccatiReference ric = riccati_reference(lp, b.base_grid);
    const int msteps = b.n_base_steps();
    const double pc = static_cast<double>(b.n_paths());
    double max_err = 0.0, max_y = 0.0;
    double z_err = 0.0, z_ref = 0.0, u_err = 0.0, u_ref = 0.0, y_sup = 0.0, m_quad = 0.0;
    std::vector<std::vector<double>> rows;
    for (int m = 0; m <= msteps; ++m) {
        double e2 = 0.0, y2 = 0.0, ymean = 0.0, xmean = 0.0;
        for (int p = 0; p < b.n_paths(); ++p) {
            const double x = sol.x_base(b, p, m)[0];
            const double y = sol.bw.y[static_cast<std::size_t>(p)](0, m);
            const double d = y - ric.y_predict(m, x);
            e2 += d * d;
            y2 += y * y;
            ymean += y;
            xmean += x;
        }
        e2 /= pc;
        y2 /= pc;
        max_err = std::max(max_err, std::sqrt(e2));
        max_y = std::max(max_y, std::sqrt(y2));
        y_sup = std::max(y_sup, y2);
        rows.push_back({b.base_grid[static_cast<std::size_t>(m)], xmean / pc, ymean / pc,
                        ric.p[static_cast<std::size_t>(m)], std::sqrt(e2)});
        if (m < msteps) {
            const double dt = b.base_grid[static_cast<std::size_t>(m) + 1] -
                              b.base_grid[static_cast<std::size_t>(m)];
            for (int p = 0; p < b.n_paths(); ++p) {
                const double z = sol.bw.z[static_cast<std::size_t>(p)](0, m);
                const double u = sol.bw.u[static_cast<std::size_t>(p)](0, m);
                z_err += (z - ric.z_predict(m)) * (z - ric.z_predict(m)) * dt;
                z_ref += ric.z_predict(m) * ric.z_predict(m) * dt;
                u_err += (u - ric.u_predict(m)) * (u - ric.u_predict(m)) * dt;
                u_ref += ric.u_predict(m) * ric.u_predict(m) * dt;
                const double dm = sol.bw.dm[static_cast<std::size_t>(p)](0, m);
                m_quad += dm * dm;
            }
        }
    }
    res.rel_y = max_err / max_y;
    res.rel_z = std::sqrt(z_err / z_ref);
    res.rel_u = std::sqrt(u_err / u_ref);
    // E|M_T|^2 (martingale increments are uncorrelated, so the summed
    // squared increments estimate it) against the sup-in-time norm of Y
    res.m_ratio = m_quad / pc / y_sup;
    if (ctx) ctx->emit("solution.tsv", "time mean_x mean_y riccati_p err_y_l2", rows);
    return res;
}

inline void run_reproduce_lq(RunContext& ctx) {
    LQRunResult r = run_lq_instance(ctx.cfg, &ctx);
    ctx.check("continuation_converged", r.converged, r.converged ? 1.0 : 0.0, "");
    ctx.check("rel_y_5pct", r.converged && r.rel_y <= 0.05, r.rel_y, "bound 0.05");
    ctx.check("rel_z_10pct", r.converged && r.rel_z <= 0.10, r.rel_z, "bound 0.10");
    ctx.check("rel_u_10pct", r.converged && r.rel_u <= 0.10, r.rel_u, "bound 0.10");
    ctx.check("m_ratio_1pct", r.converged && r.m_ratio <= 0.01, r.m_ratio, "bound 0.01");
}

inline void run_verify_monotonicity(RunContext& ctx) {
    const RunConfig& c = ctx.cfg;
    const LQParams lp = lq_from_json(c.model);
    const int count = c.model.value("count", 10000);
    FBSDEModel model = build_lq_model(lp);
    MarkGrid marks = MarkGrid::unmarked(1);
    std::vector<EmpiricalMeasure> envs = {EmpiricalMeasure::dirac1d(0.0)};
    MonotonicityReport rep = check_g_monotonicity(model, marks, {c.model.value("rate", 1.0)},
                                                  envs, c.horizon, count, c.seed);
    std::vector<std::vector<double>> rows = {
        {static_cast<double>(rep.count), static_cast<double>(rep.violations),
         static_cast<double>(rep.terminal_violations), rep.worst_slack,
         rep.worst_terminal_slack}};
    ctx.emit("monotonicity.tsv",
             "count violations terminal_violations worst_slack worst_terminal_slack", rows);
    ctx.check("zero_violations", rep.violations == 0 && rep.terminal_violations == 0,
              static_cast<double>(rep.violations), "worst slack " + fmt_double(rep.worst_slack));
}

inline void run_verify_duality(RunContext& ctx) {
    const RunConfig& c = ctx.cfg;
    BundleConfig bc;
    bc.horizon = c.horizon;
    bc.base_steps = c.grid_steps;
    bc.n_paths = c.paths;
    bc.seed = c.seed;
    bc.kernels = {AdditiveKernel::constant(c.model.value("rate", 1.0))};
    bc.env = EnvironmentPath::constant(EmpiricalMeasure::dirac1d(0.0), c.horizon);
    PathBundle b = make_bundle(bc);
    FBSDEModel model;  // dims only; coefficients unused at alpha = 0
    model.d = model.n = model.k = 1;
    Offsets off = Offsets::zero(b, 1, 1, 1);
    const double B = c.model.value("B", 0.5), F = c.model.value("F", 0.25);
    const double S = c.model.value("Sig", 1.0), Gm = c.model.value("Gam", 0.2);
    const double zeta = c.model.value("zeta", 1.0);
    for (int p = 0; p < b.n_paths(); ++p) {
        off.B[static_cast<std::size_t>(p)].setConstant(B);
        off.F[static_cast<std::size_t>(p)].setConstant(F);
        off.Sig[static_cast<std::size_t>(p)].setConstant(S);
        off.Gam[static_cast<std::size_t>(p)].setConstant(Gm);
        off.zeta[static_cast<std::size_t>(p)].setConstant(zeta);
    }
    LsmcOptions opts;
    opts.basis.degree = c.basis_degree;
    DualityReport rep = ito_duality_check(model, b, off, [](int) {
        return Eigen::VectorXd::Zero(1);
    }, opts, c.model.value("c_slack", 2.0));
    std::vector<std::vector<double>> rows = {{rep.lhs, rep.rhs, rep.mc_error}};
    ctx.emit("duality.tsv", "lhs rhs mc_error", rows);
    ctx.check("duality_3se", rep.ok, rep.lhs - rep.rhs, "se " + fmt_double(rep.mc_error));
}

}  // namespace detail

/// Execute one experiment into a fresh output directory; returns the
/// manifest (also written as manifest.json alongside the result files).
inline RunManifest run(const RunConfig& cfg) {
    std::filesystem::path dir(cfg.output_dir);
    if (std::filesystem::exists(dir))
        throw std::runtime_error("run: output directory already exists: " + dir.string());
    std::filesystem::create_directories(dir);
    detail::RunContext ctx{cfg, dir, {}};
    ctx.manifest.config = cfg.to_json();
    ctx.manifest.config_digest = hex64(fnv1a(ctx.manifest.config.dump()));
    const auto start = std::chrono::steady_clock::now();
    if (cfg.experiment == "simulate-pointproc")
        detail::run_simulate_pointproc(ctx);
    else if (cfg.experiment == "simulate-regime")
        detail::run_simulate_regime(ctx);
    else if (cfg.experiment == "solve-forward")
        detail::run_solve_forward(ctx);
    else if (cfg.experiment == "solve-backward")
        detail::run_solve_backward(ctx);
    else if (cfg.experiment == "solve-coupled" || cfg.experiment == "reproduce-lq")
        detail::run_reproduce_lq(ctx);
    else if (cfg.experiment == "verify-monotonicity")
        detail::run_verify_monotonicity(ctx);
    else if (cfg.experiment == "verify-duality")
        detail::run_verify_duality(ctx);
    else
        throw std::invalid_argument("run: unknown experiment " + cfg.experiment);
    ctx.manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream os(dir / "manifest.json");
    os << ctx.manifest.to_json().dump(2) << '\n';
    return ctx.manifest;
}

struct ReplayVerdict {
    bool identical = false;
    std::string first_diff;  // first diverging or missing file
};

/// Re-run the experiment recorded in a manifest into a scratch directory and
/// compare result-file digests.
inline ReplayVerdict replay(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw std::runtime_error("replay: cannot open " + manifest_path.string());
    json mj = json::parse(is);
    RunConfig cfg = RunConfig::from_json(mj.at("config"));
    std::filesystem::path scratch;
    for (int i = 0;; ++i) {
        scratch = std::filesystem::path(cfg.output_dir + ".replay" + std::to_string(i));
        if (!std::filesystem::exists(scratch)) break;
    }
    cfg.output_dir = scratch.string();
    RunManifest rerun = run(cfg);
    ReplayVerdict v;
    v.identical = true;
    for (const auto& [name, digest] : mj.at("files").items()) {
        auto it = rerun.files.find(name);
        if (it == rerun.files.end() || it->second != digest.get<std::string>()) {
            v.identical = false;
            v.first_diff = name;
            break;
        }
    }
    std::filesystem::remove_all(scratch);
    return v;
}

}  // namespace fbsde

#endif
