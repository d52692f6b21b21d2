#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coefficients.hpp"
#include "errors.hpp"
#include "fbm_core.hpp"
#include "grid.hpp"
#include "mf_sde.hpp"
#include "parallel.hpp"

namespace mfbm {

enum class FeatureSet {
    quadratic,  // 1, X, BH, X^2, X BH, BH^2
    lagged      // quadratic plus the last BH increment and the previous state
};

inline const char* feature_set_name(FeatureSet f) {
    return f == FeatureSet::quadratic ? "quadratic" : "lagged";
}

struct AdjointOptions {
    FeatureSet features = FeatureSet::quadratic;
    // State used in the regression features; nullptr means the forward ensemble's own X.
    const PathMatrix* feature_state = nullptr;
};

struct AdjointEnsemble {
    PathMatrix P;
    PathMatrix beta;
    std::vector<double> terminal;
    std::vector<double> regression_se;  // per step: residual sd times sqrt(p/M)
    std::vector<std::size_t> basis_rank;
    std::string basis_spec;
};

namespace detail {

// Least squares on centred, unit-norm columns with a small ridge term. Exactly constant
// columns are dropped; the ridge keeps the projection continuous in the data when columns
// become nearly collinear (hard pruning would switch the basis between fixed-point iterates).
class Regression {
public:
    Regression(const std::vector<std::vector<double>>& cols, std::size_t M, double ridge = 1e-6) : M_(M) {
        const double Md = static_cast<double>(M);
        std::vector<const std::vector<double>*> kept;
        std::vector<double> means, scales;
        for (const auto& c : cols) {
            for (double v : c)
                if (!std::isfinite(v)) throw BasisDegeneracyError("regression feature is not finite");
            double mean = 0.0;
            for (double v : c) mean += v;
            mean /= Md;
            double ss = 0.0;
            for (double v : c) ss += (v - mean) * (v - mean);
            if (!(ss > 1e-24 * Md * (1.0 + mean * mean))) continue;
            kept.push_back(&c);
            means.push_back(mean);
            scales.push_back(1.0 / std::sqrt(ss));
        }
        p_ = kept.size();
        if (M_ <= p_ + 2)
            throw BasisDegeneracyError("regression needs more particles than basis functions (" +
                                       std::to_string(p_ + 1) + ")");
        F_.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(p_));
        for (std::size_t j = 0; j < p_; ++j)
            for (std::size_t i = 0; i < M; ++i)
                F_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ((*kept[j])[i] - means[j]) * scales[j];
        Eigen::MatrixXd G = F_.transpose() * F_;
        G.diagonal().array() += ridge;
        llt_.compute(G);
        if (llt_.info() != Eigen::Success) throw BasisDegeneracyError("regression normal equations are singular");
    }

    std::size_t rank() const noexcept { return p_ + 1; }

    std::vector<double> fit(std::span<const double> y, double* se = nullptr) const {
        const double Md = static_cast<double>(M_);
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= Md;
        std::vector<double> out(M_, mean);
        if (p_ > 0) {
            Eigen::VectorXd yc(static_cast<Eigen::Index>(M_));
            for (std::size_t i = 0; i < M_; ++i) yc(static_cast<Eigen::Index>(i)) = y[i] - mean;
            Eigen::VectorXd beta = llt_.solve(F_.transpose() * yc);
            Eigen::VectorXd f = F_ * beta;
            for (std::size_t i = 0; i < M_; ++i) out[i] += f(static_cast<Eigen::Index>(i));
        }
        if (se) {
            double rss = 0.0;
            for (std::size_t i = 0; i < M_; ++i) rss += (y[i] - out[i]) * (y[i] - out[i]);
            const double p = static_cast<double>(p_ + 1);
            *se = std::sqrt(rss / (Md - p)) * std::sqrt(p / Md);
        }
        return out;
    }

private:
    std::size_t M_, p_ = 0;
    Eigen::MatrixXd F_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline std::vector<std::vector<double>> features_at(const ParticleEnsemble& e, std::size_t k, FeatureSet fs,
                                                    const PathMatrix* state) {
    const PathMatrix& X = state ? *state : e.X;
    auto x = X.column(k), b = e.BH.column(k);
    const std::size_t M = x.size();
    std::vector<std::vector<double>> cols(5, std::vector<double>(M));
    for (std::size_t i = 0; i < M; ++i) {
        cols[0][i] = x[i];
        cols[1][i] = b[i];
        cols[2][i] = x[i] * x[i];
        cols[3][i] = x[i] * b[i];
        cols[4][i] = b[i] * b[i];
    }
    if (fs == FeatureSet::lagged && k > 0) {
        auto xp = X.column(k - 1), bp = e.BH.column(k - 1);
        std::vector<double> db(M);
        for (std::size_t i = 0; i < M; ++i) db[i] = b[i] - bp[i];
        cols.push_back(std::move(db));
        cols.push_back(std::move(xp));
    }
    return cols;
}

// Sum_l [avg_j weight_j d_{m_l} w(X_j, u_j, m)] * grad phi_l(X_i, u_i), both components.
inline void tilde_average(const MeanFieldMap& w, std::span<const double> x, std::span<const double> u,
                          const std::vector<double>& m, std::span<const double> weight, std::vector<double>& avg) {
    const std::size_t L = w.n_stats(), M = x.size();
    avg.assign(L, 0.0);
    if (L == 0) return;
    std::vector<double> g(L);
    for (std::size_t j = 0; j < M; ++j) {
        w.d_m(x[j], u.empty() ? 0.0 : u[j], m.data(), g.data());
        const double c = weight.empty() ? 1.0 : weight[j];
        for (std::size_t l = 0; l < L; ++l) avg[l] += c * g[l];
    }
    for (double& a : avg) a /= static_cast<double>(M);
}

inline double contract_state(const MeanFieldMap& w, const std::vector<double>& avg, double y, double v) {
    double s = 0.0;
    for (std::size_t l = 0; l < avg.size(); ++l) s += avg[l] * w.stats[l].d_state(y, v);
    return s;
}

inline double contract_control(const MeanFieldMap& w, const std::vector<double>& avg, double y, double v) {
    double s = 0.0;
    for (std::size_t l = 0; l < avg.size(); ++l) s += avg[l] * w.stats[l].d_control(y, v);
    return s;
}

}  // namespace detail

// P_T = d_x g(X_T, mu_T) + E~[d_mu g(X~_T, mu_T, X_T)] assembled per particle.
inline std::vector<double> adjoint_terminal(const ParticleEnsemble& e, const CoefficientSet& c) {
    const std::size_t n = e.grid.n_steps();
    auto x = e.X.column(n);
    auto m = c.terminal.moments(x, {});
    std::vector<double> avg;
    detail::tilde_average(c.terminal, x, {}, m, {}, avg);
    std::vector<double> pt(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        pt[i] = c.terminal.d_x(x[i], 0.0, m.data()) + detail::contract_state(c.terminal, avg, x[i], 0.0);
    return pt;
}

// Backward Euler with regression for the conditional expectation:
//   P_k = E^[P_{k+1} | F_k] + dt * drift(P^, cloud, X, u).
inline AdjointEnsemble solve_adjoint_bsde(const ParticleEnsemble& e, const CoefficientSet& c, AdjointOptions opt = {}) {
    if (!c.sigma_constant)
        throw UnsupportedRegimeError("adjoint solver needs a constant diffusion coefficient; the E[D^H P] term is out of scope");
    const TimeGrid& grid = e.grid;
    const std::size_t n = grid.n_steps(), M = e.n_paths();
    const double dt = grid.dt();
    AdjointEnsemble a{PathMatrix(grid, M, PathLabel::P), PathMatrix(grid, M, PathLabel::P), {},
                      std::vector<double>(n + 1, 0.0), std::vector<std::size_t>(n + 1, 0), ""};
    a.basis_spec = std::string("least squares on {1, X, BH, X^2, X*BH, BH^2}") +
                   (opt.features == FeatureSet::lagged ? " + {dBH_last, X_prev}" : "") +
                   ", centred and unit-scaled, ridge 1e-6";
    a.terminal = adjoint_terminal(e, c);
    a.P.set_column(n, a.terminal);

    std::vector<double> next = a.terminal, cur(M), avg_f, avg_b;
    for (std::size_t kk = n; kk-- > 0;) {
        const std::size_t k = kk;
        detail::Regression reg(detail::features_at(e, k, opt.features, opt.feature_state), M);
        double se = 0.0;
        auto phat = reg.fit(next, &se);
        a.regression_se[k] = se;
        a.basis_rank[k] = reg.rank();

        auto x = e.X.column(k), u = e.u.column(k);
        auto mb = c.drift.moments(x, u);
        auto mf = c.running.moments(x, u);
        detail::tilde_average(c.running, x, u, mf, {}, avg_f);
        detail::tilde_average(c.drift, x, u, mb, phat, avg_b);
        parallel_for(M, [&](std::size_t i) {
            double drift = c.running.d_x(x[i], u[i], mf.data()) + detail::contract_state(c.running, avg_f, x[i], u[i]) +
                           phat[i] * c.drift.d_x(x[i], u[i], mb.data()) +
                           detail::contract_state(c.drift, avg_b, x[i], u[i]);
            cur[i] = phat[i] + dt * drift;
        });
        for (double v : cur)
            if (!std::isfinite(v)) throw BlowUpError("adjoint value is not finite", k);
        a.P.set_column(k, cur);

        // martingale integrand: E^[(P_{k+1} - P^_k) dW_k | F_k] / dt, diagnostic only
        std::vector<double> z(M);
        for (std::size_t i = 0; i < M; ++i) z[i] = (next[i] - phat[i]) * (e.W(i, k + 1) - e.W(i, k)) / dt;
        auto beta = reg.fit(z);
        a.beta.set_column(k, beta);
        next.swap(cur);
    }
    return a;
}

// ---- stationarity map ----

struct EtaOptions {
    double tol = 1e-10;
    std::size_t max_iter = 500;
    double damping = 0.5;
};

struct EtaResult {
    std::vector<double> u;
    std::vector<double> residual_trace;
    std::size_t sweeps = 0;
};

// Per-particle stationarity residual
//   E~[(d_mu f)_2(mu, X~, u~, X, u)] + d_u f + E~[P~ (d_mu b)_2(mu, X~, u~, X, u)] + P d_u b
// with the law of (X, u) and tilde-averages taken over the ensemble.
inline std::vector<double> stationarity_residual(const CoefficientSet& c, std::span<const double> p,
                                                 std::span<const double> x, std::span<const double> u) {
    auto mf = c.running.moments(x, u);
    auto mb = c.drift.moments(x, u);
    std::vector<double> avg_f, avg_b;
    detail::tilde_average(c.running, x, u, mf, {}, avg_f);
    detail::tilde_average(c.drift, x, u, mb, p, avg_b);
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        r[i] = detail::contract_control(c.running, avg_f, x[i], u[i]) + c.running.d_u(x[i], u[i], mf.data()) +
               detail::contract_control(c.drift, avg_b, x[i], u[i]) + p[i] * c.drift.d_u(x[i], u[i], mb.data());
    return r;
}

// Jacobi sweeps of damped Newton steps; the tilde-averages are frozen within a sweep and
// the diagonal derivative is a central difference of the frozen local residual.
inline EtaResult solve_eta(std::span<const double> p, std::span<const double> x, const CoefficientSet& c,
                           EtaOptions opt = {}, std::span<const double> u_start = {}) {
    const std::size_t M = x.size();
    if (p.size() != M) throw DomainError("solve_eta: adjoint and state sample sizes differ");
    if (c.constants.convexity <= 0.0)
        throw DomainError("solve_eta: a positive strict convexity modulus must be declared");
    EtaResult res;
    const double mid = 0.5 * (c.box.lo + c.box.hi);
    res.u.assign(M, mid);
    if (!u_start.empty()) res.u.assign(u_start.begin(), u_start.end());
    std::vector<double> avg_f, avg_b;
    const double h = 1e-6 * std::max(1.0, c.box.hi - c.box.lo);
    for (std::size_t sweep = 0; sweep < opt.max_iter; ++sweep) {
        auto mf = c.running.moments(x, res.u);
        auto mb = c.drift.moments(x, res.u);
        detail::tilde_average(c.running, x, res.u, mf, {}, avg_f);
        detail::tilde_average(c.drift, x, res.u, mb, p, avg_b);
        auto local = [&](std::size_t i, double v) {
            return detail::contract_control(c.running, avg_f, x[i], v) + c.running.d_u(x[i], v, mf.data()) +
                   detail::contract_control(c.drift, avg_b, x[i], v) + p[i] * c.drift.d_u(x[i], v, mb.data());
        };
        // residual at the current iterate with freshly computed averages
        double sup = 0.0;
        std::vector<double> r(M);
        for (std::size_t i = 0; i < M; ++i) {
            r[i] = local(i, res.u[i]);
            sup = std::max(sup, std::abs(r[i]));
        }
        if (!std::isfinite(sup)) throw NonConvergenceError("stationarity residual is not finite", res.residual_trace);
        res.residual_trace.push_back(sup);
        res.sweeps = sweep;
        if (sup < opt.tol) break;
        if (sweep + 1 == opt.max_iter) break;
        for (std::size_t i = 0; i < M; ++i) {
            double d = (local(i, res.u[i] + h) - local(i, res.u[i] - h)) / (2.0 * h);
            if (!(d > 0.0)) throw NonConvergenceError("stationarity map lost strict monotonicity", res.residual_trace);
            double full = res.u[i] - r[i] / d;
            res.u[i] += opt.damping * (full - res.u[i]);
            res.u[i] = std::clamp(res.u[i], c.box.lo + 0.5e-9, c.box.hi - 0.5e-9);
        }
    }
    for (double v : res.u)
        if (!c.box.interior(v))
            throw InteriorViolationError("optimizer pinned to the boundary of the control box at " + std::to_string(v));
    if (res.residual_trace.back() >= opt.tol)
        throw NonConvergenceError("stationarity sweeps stopped at residual " + std::to_string(res.residual_trace.back()),
                                  res.residual_trace);
    return res;
}

// ---- coupled forward-backward system ----

struct FixedPointReport {
    std::size_t n_iterations = 0;
    std::vector<double> distances;
    std::vector<double> contraction_ratios;
    bool converged = false;
};

struct FbsdeOptions {
    double tol = 1e-4;
    std::size_t max_iter = 30;
    double initial_adjoint = 0.0;
    AdjointOptions adjoint;
    EtaOptions eta;
};

struct FbsdeSolution {
    ParticleEnsemble forward;
    AdjointEnsemble adjoint;
    PathMatrix control;
    FixedPointReport report;
};

inline PathMatrix eta_path(const PathMatrix& P, const PathMatrix& X, const CoefficientSet& c, const EtaOptions& opt,
                           const PathMatrix* warm = nullptr) {
    PathMatrix u(X.grid(), X.n_paths(), PathLabel::u);
    for (std::size_t k = 0; k < X.n_times(); ++k) {
        auto p = P.column(k), x = X.column(k);
        std::vector<double> start;
        if (warm) start = warm->column(k);
        auto r = solve_eta(p, x, c, opt, start);
        u.set_column(k, r.u);
    }
    return u;
}

// sqrt(E[sup_t |dX|^2] + E[sup_t |dP|^2])
inline double sup_distance(const PathMatrix& x1, const PathMatrix& x2, const PathMatrix& p1, const PathMatrix& p2) {
    double s = 0.0;
    for (std::size_t i = 0; i < x1.n_paths(); ++i) {
        double sx = 0.0, sp = 0.0;
        for (std::size_t k = 0; k < x1.n_times(); ++k) {
            sx = std::max(sx, std::abs(x1(i, k) - x2(i, k)));
            sp = std::max(sp, std::abs(p1(i, k) - p2(i, k)));
        }
        s += sx * sx + sp * sp;
    }
    return std::sqrt(s / static_cast<double>(x1.n_paths()));
}

// Fixed point of (x, p) -> u = eta(p, x) -> X = forward(u) -> P = adjoint(X, u) on fixed noise.
inline FbsdeSolution solve_coupled_fbsde(const CoefficientSet& c, std::span<const double> xi, const NoisePaths& noise,
                                         FbsdeOptions opt = {}) {
    if (!c.sigma_constant) throw UnsupportedRegimeError("coupled solver needs a constant diffusion coefficient");
    const TimeGrid grid = noise.BH.grid();
    const std::size_t M = noise.BH.n_paths();
    PathMatrix x(grid, M, PathLabel::X), p(grid, M, PathLabel::P, opt.initial_adjoint);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < grid.size(); ++k) x(i, k) = xi[i];
    FixedPointReport rep;
    PathMatrix u = eta_path(p, x, c, opt.eta);
    // Regression features use one reference state for every iteration (the flow under
    // eta(0, x0)), so the conditional-expectation operator does not move with the iterate
    // and does not depend on the starting point.
    std::optional<PathMatrix> reference;
    AdjointOptions aopt = opt.adjoint;
    if (!aopt.feature_state) {
        PathMatrix zero(grid, M, PathLabel::P, 0.0);
        PathMatrix u0 = eta_path(zero, x, c, opt.eta);
        reference = solve_forward(c, ControlPolicy::open_loop(u0), xi, noise).X;
        aopt.feature_state = &*reference;
    }
    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
        auto fwd = solve_forward(c, ControlPolicy::open_loop(u), xi, noise);
        auto adj = solve_adjoint_bsde(fwd, c, aopt);
        double d = sup_distance(fwd.X, x, adj.P, p);
        if (!rep.distances.empty()) rep.contraction_ratios.push_back(d / rep.distances.back());
        rep.distances.push_back(d);
        rep.n_iterations = it;
        x = std::move(fwd.X);
        p = std::move(adj.P);
        u = eta_path(p, x, c, opt.eta, &u);
        if (d < opt.tol) {
            rep.converged = true;
            auto final_fwd = solve_forward(c, ControlPolicy::open_loop(u), xi, noise);
            adj.P = p;
            return {std::move(final_fwd), std::move(adj), std::move(u), std::move(rep)};
        }
    }
    throw NonConvergenceError("coupled fixed point did not reach tol " + std::to_string(opt.tol) +
                                  "; shrink the horizon (distances in trace)",
                              rep.distances);
}

inline FbsdeSolution solve_coupled_fbsde(const CoefficientSet& c, double x0, const NoisePaths& noise,
                                         FbsdeOptions opt = {}) {
    std::vector<double> xi(noise.BH.n_paths(), x0);
    return solve_coupled_fbsde(c, xi, noise, opt);
}

inline void write_fixed_point_csv(std::ostream& os, const FixedPointReport& r) {
    os << "iteration,distance,ratio\n";
    os.precision(17);
    for (std::size_t i = 0; i < r.distances.size(); ++i) {
        os << i + 1 << ',' << r.distances[i] << ',';
        if (i > 0) os << r.contraction_ratios[i - 1];
        os << '\n';
    }
}

}  // namespace mfbm
