#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "fbm_core.hpp"
#include "grid.hpp"
#include "measure.hpp"
#include "mf_fbsde.hpp"
#include "mf_sde.hpp"
#include "parallel.hpp"

namespace mfbm {

struct ControlProblem {
    double x0 = 0.0;
    CoefficientSet coeffs;
    TimeGrid grid{1.0, 2};
    HurstModel model{0.75};
    std::size_t M = 2;
    std::uint64_t seed = 0;
    NoiseMode noise_mode = NoiseMode::independent;

    NoisePaths noise() const {
        if (!(coeffs.box.lo < coeffs.box.hi)) throw DomainError("ControlProblem: empty control box");
        return make_noise(model, grid, M, seed, noise_mode);
    }
};

// ---- cost ----

struct CostEstimate {
    double J = 0.0;
    double se = 0.0;
    std::vector<double> per_path;
};

// Per-particle int f dt (trapezoid) + g(X_T, law X_T); the law is the ensemble cloud.
inline std::vector<double> cost_per_path(const CoefficientSet& c, const ParticleEnsemble& e) {
    const std::size_t n = e.grid.n_steps(), M = e.n_paths();
    const double dt = e.grid.dt();
    std::vector<double> out(M, 0.0);
    for (std::size_t k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 0.5 * dt : dt;
        auto x = e.X.column(k), u = e.u.column(k);
        auto m = c.running.moments(x, u);
        for (std::size_t i = 0; i < M; ++i) out[i] += w * c.running.value(x[i], u[i], m.data());
    }
    auto xT = e.X.column(n);
    auto mg = c.terminal.moments(xT, {});
    for (std::size_t i = 0; i < M; ++i) out[i] += c.terminal.value(xT[i], 0.0, mg.data());
    return out;
}

inline CostEstimate evaluate_cost(const CoefficientSet& c, const ParticleEnsemble& e) {
    CostEstimate r;
    r.per_path = cost_per_path(c, e);
    auto est = estimate(r.per_path);
    r.J = est.mean;
    r.se = est.se;
    return r;
}

inline CostEstimate evaluate_cost(const ControlProblem& p, const ControlPolicy& control, const NoisePaths& noise) {
    return evaluate_cost(p.coeffs, solve_forward(p.coeffs, control, p.x0, noise));
}

inline CostEstimate evaluate_cost(const ControlProblem& p, const PathMatrix& control) {
    return evaluate_cost(p, ControlPolicy::open_loop(control), p.noise());
}

// Standard error of a paired difference (matched noise).
inline Estimate paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return estimate(d);
}

// ---- variational process ----

struct VariationalEnsemble {
    PathMatrix Y;
    PathMatrix direction;  // u - u*
};

// Linearization of the particle scheme along u* + eps (u - u*):
//   dY = E~[d_mu sigma(P_X*, X~*) Y~] dB^H
//        + (d_x b Y + E~[<d_mu b(., X*, u*, X~*, u~*), (Y~, u~ - u~*)>] + d_u b (u - u*)) dt
inline VariationalEnsemble solve_variational(const CoefficientSet& c, const ParticleEnsemble& star, const PathMatrix& u) {
    const TimeGrid& grid = star.grid;
    const std::size_t n = grid.n_steps(), M = star.n_paths();
    if (u.n_paths() != M || !(u.grid() == grid)) throw DomainError("solve_variational: control has the wrong shape");
    const double dt = grid.dt();
    VariationalEnsemble v{PathMatrix(grid, M, PathLabel::Y), PathMatrix(grid, M, PathLabel::u)};
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k <= n; ++k) v.direction(i, k) = u(i, k) - star.u(i, k);
    std::vector<double> y(M, 0.0), next(M);
    for (std::size_t k = 0; k < n; ++k) {
        auto x = star.X.column(k), us = star.u.column(k), d = v.direction.column(k);
        auto mb = c.drift.moments(x, us);
        auto ms = c.sigma.moments(x, {});
        // dm_l = avg_j (d_y phi_l Y_j + d_v phi_l d_j)
        std::vector<double> dmb(c.drift.n_stats(), 0.0), dms(c.sigma.n_stats(), 0.0);
        for (std::size_t l = 0; l < dmb.size(); ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < M; ++j)
                s += c.drift.stats[l].d_state(x[j], us[j]) * y[j] + c.drift.stats[l].d_control(x[j], us[j]) * d[j];
            dmb[l] = s / static_cast<double>(M);
        }
        for (std::size_t l = 0; l < dms.size(); ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < M; ++j) s += c.sigma.stats[l].d_state(x[j], 0.0) * y[j];
            dms[l] = s / static_cast<double>(M);
        }
        double sig = 0.0;
        {
            auto g = c.sigma.grad_m(0.0, 0.0, ms);
            for (std::size_t l = 0; l < g.size(); ++l) sig += g[l] * dms[l];
        }
        parallel_for(M, [&](std::size_t i) {
            std::vector<double> g(c.drift.n_stats());
            if (!g.empty()) c.drift.d_m(x[i], us[i], mb.data(), g.data());
            double lift = 0.0;
            for (std::size_t l = 0; l < g.size(); ++l) lift += g[l] * dmb[l];
            next[i] = y[i] + sig * (star.BH(i, k + 1) - star.BH(i, k)) +
                      (c.drift.d_x(x[i], us[i], mb.data()) * y[i] + lift + c.drift.d_u(x[i], us[i], mb.data()) * d[i]) * dt;
        });
        y.swap(next);
        v.Y.set_column(k + 1, y);
    }
    return v;
}

inline VariationalEnsemble solve_variational(const ControlProblem& p, const PathMatrix& u_star, const PathMatrix& u,
                                             const ParticleEnsemble& forward_star) {
    if (!(u_star.grid() == forward_star.grid) || u_star.data() != forward_star.u.data())
        throw DomainError("solve_variational: forward ensemble was not solved under u_star");
    return solve_variational(p.coeffs, forward_star, u);
}

struct VariationalConvergence {
    std::vector<double> eps;
    std::vector<double> sup_mse;  // sup_t mean_i |Y - (X^eps - X*) / eps|^2
};

// Difference quotients of the state along u* + eps (u - u*) against Y, matched noise.
inline VariationalConvergence variational_fd_errors(const CoefficientSet& c, const PathMatrix& u_star,
                                                    const PathMatrix& u, std::span<const double> xi,
                                                    const NoisePaths& noise,
                                                    std::vector<double> ladder = {0.1, 0.05, 0.025}) {
    std::sort(ladder.begin(), ladder.end(), std::greater<>());
    auto star = solve_forward(c, ControlPolicy::open_loop(u_star), xi, noise);
    auto var = solve_variational(c, star, u);
    VariationalConvergence r;
    const std::size_t M = star.n_paths(), n = star.grid.n_steps();
    for (double e : ladder) {
        if (!(e > 0.0 && e <= 1.0)) throw DomainError("variational_fd_errors: ladder entries must lie in (0, 1]");
        PathMatrix ue(u_star.grid(), M, PathLabel::u);
        for (std::size_t i = 0; i < ue.data().size(); ++i)
            ue.data()[i] = u_star.data()[i] + e * (u.data()[i] - u_star.data()[i]);
        auto pert = solve_forward(c, ControlPolicy::open_loop(ue), xi, noise);
        double sup = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < M; ++i) {
                double d = var.Y(i, k) - (pert.X(i, k) - star.X(i, k)) / e;
                s += d * d;
            }
            sup = std::max(sup, s / static_cast<double>(M));
        }
        r.eps.push_back(e);
        r.sup_mse.push_back(sup);
    }
    return r;
}

// ---- Gateaux derivative ----

// Right side of the first-variation formula of J, per particle:
//   d_x g Y_T + E~[d_mu g Y~_T] + int (d_x f Y + E~[(d_mu f)_1 Y~] + E~[(d_mu f)_2 (u~ - u~*)] + d_u f (u - u*)) dt
// with the same trapezoid weights as the cost.
inline CostEstimate gateaux_formula(const CoefficientSet& c, const ParticleEnsemble& star, const VariationalEnsemble& v) {
    const std::size_t n = star.grid.n_steps(), M = star.n_paths();
    const double dt = star.grid.dt();
    std::vector<double> out(M, 0.0);
    for (std::size_t k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 0.5 * dt : dt;
        auto x = star.X.column(k), u = star.u.column(k), y = v.Y.column(k), d = v.direction.column(k);
        auto m = c.running.moments(x, u);
        std::vector<double> dm(c.running.n_stats(), 0.0), g(c.running.n_stats());
        for (std::size_t l = 0; l < dm.size(); ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < M; ++j)
                s += c.running.stats[l].d_state(x[j], u[j]) * y[j] + c.running.stats[l].d_control(x[j], u[j]) * d[j];
            dm[l] = s / static_cast<double>(M);
        }
        for (std::size_t i = 0; i < M; ++i) {
            if (!g.empty()) c.running.d_m(x[i], u[i], m.data(), g.data());
            double lift = 0.0;
            for (std::size_t l = 0; l < g.size(); ++l) lift += g[l] * dm[l];
            out[i] += w * (c.running.d_x(x[i], u[i], m.data()) * y[i] + lift + c.running.d_u(x[i], u[i], m.data()) * d[i]);
        }
    }
    auto xT = star.X.column(n), yT = v.Y.column(n);
    auto mg = c.terminal.moments(xT, {});
    std::vector<double> dm(c.terminal.n_stats(), 0.0), g(c.terminal.n_stats());
    for (std::size_t l = 0; l < dm.size(); ++l) {
        double s = 0.0;
        for (std::size_t j = 0; j < M; ++j) s += c.terminal.stats[l].d_state(xT[j], 0.0) * yT[j];
        dm[l] = s / static_cast<double>(M);
    }
    for (std::size_t i = 0; i < M; ++i) {
        if (!g.empty()) c.terminal.d_m(xT[i], 0.0, mg.data(), g.data());
        double lift = 0.0;
        for (std::size_t l = 0; l < g.size(); ++l) lift += g[l] * dm[l];
        out[i] += c.terminal.d_x(xT[i], 0.0, mg.data()) * yT[i] + lift;
    }
    CostEstimate r;
    r.per_path = std::move(out);
    auto e = estimate(r.per_path);
    r.J = e.mean;
    r.se = e.se;
    return r;
}

struct GateauxReport {
    std::vector<double> eps;
    std::vector<double> fd_slopes;
    std::vector<double> fd_se;
    double extrapolated = 0.0;
    double extrapolated_se = 0.0;
    double formula = 0.0;
    double formula_se = 0.0;
    bool agree = false;
};

// Matched-noise finite differences of J along u* + eps (u - u*) against the formula.
// The slope is Richardson-extrapolated from the two smallest ladder entries.
inline GateauxReport gateaux_check(const CoefficientSet& c, const PathMatrix& u_star, const PathMatrix& u,
                                   std::span<const double> xi, const NoisePaths& noise,
                                   std::vector<double> ladder = {0.1, 0.05, 0.025}) {
    if (ladder.size() < 2) throw DomainError("gateaux_check: ladder needs at least two entries");
    std::sort(ladder.begin(), ladder.end(), std::greater<>());
    for (double e : ladder)
        if (!(e > 0.0 && e <= 1.0)) throw DomainError("gateaux_check: ladder entries must lie in (0, 1]");
    GateauxReport r;
    r.eps = ladder;
    auto star = solve_forward(c, ControlPolicy::open_loop(u_star), xi, noise);
    auto J0 = cost_per_path(c, star);
    std::vector<std::vector<double>> slopes;
    for (double e : ladder) {
        PathMatrix ue(u_star.grid(), u_star.n_paths(), PathLabel::u);
        for (std::size_t i = 0; i < ue.data().size(); ++i)
            ue.data()[i] = u_star.data()[i] + e * (u.data()[i] - u_star.data()[i]);
        auto Je = cost_per_path(c, solve_forward(c, ControlPolicy::open_loop(ue), xi, noise));
        std::vector<double> s(Je.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = (Je[i] - J0[i]) / e;
        auto est = estimate(s);
        r.fd_slopes.push_back(est.mean);
        r.fd_se.push_back(est.se);
        slopes.push_back(std::move(s));
    }
    const auto& fine = slopes.back();
    const auto& coarse = slopes[slopes.size() - 2];
    const double q = ladder[ladder.size() - 2] / ladder.back();  // ladder ratio, 2 for halving
    std::vector<double> ex(fine.size());
    for (std::size_t i = 0; i < ex.size(); ++i) ex[i] = (q * fine[i] - coarse[i]) / (q - 1.0);
    auto ee = estimate(ex);
    r.extrapolated = ee.mean;
    r.extrapolated_se = ee.se;
    auto var = solve_variational(c, star, u);
    auto F = gateaux_formula(c, star, var);
    r.formula = F.J;
    r.formula_se = F.se;
    r.agree = std::abs(r.extrapolated - r.formula) <=
              std::max(3.0 * std::hypot(r.extrapolated_se, r.formula_se), 1e-2 * std::abs(r.formula));
    return r;
}

inline GateauxReport gateaux_check(const ControlProblem& p, const PathMatrix& u_star, const PathMatrix& u,
                                   std::vector<double> ladder = {0.1, 0.05, 0.025}) {
    const std::vector<double> xi(p.M, p.x0);
    return gateaux_check(p.coeffs, u_star, u, xi, p.noise(), std::move(ladder));
}

// ---- Hamiltonian and stationarity ----

// H = f(mu, x, u) + b(mu, x, u) y + sigma(mu) z, mu a two-dimensional (state, control) cloud.
inline double hamiltonian(const CoefficientSet& c, const EmpiricalMeasure& mu, double x, double u, double y, double z) {
    if (mu.dim() != 2) throw DomainError("hamiltonian: the law must be on (state, control) pairs");
    std::vector<double> xs(mu.size()), us(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        xs[j] = mu.point(j)[0];
        us[j] = mu.point(j)[1];
    }
    auto mf = c.running.moments(xs, us), mb = c.drift.moments(xs, us), ms = c.sigma.moments(xs, {});
    return c.running.value(x, u, mf.data()) + c.drift.value(x, u, mb.data()) * y + c.sigma.value(0.0, 0.0, ms.data()) * z;
}

struct ResidualReport {
    PathMatrix residual_paths;
    double l2_norm = 0.0;
};

// Stationarity residual on every particle and grid time; l2_norm is the root mean square
// under dt/T x dP (trapezoid in time).
inline ResidualReport optimality_residual(const ParticleEnsemble& forward, const PathMatrix& u,
                                          const AdjointEnsemble& adjoint, const CoefficientSet& c) {
    const TimeGrid& grid = forward.grid;
    const std::size_t n = grid.n_steps(), M = forward.n_paths();
    if (u.n_paths() != M || adjoint.P.n_paths() != M || !(u.grid() == grid) || !(adjoint.P.grid() == grid))
        throw DomainError("optimality_residual: shapes differ");
    ResidualReport r{PathMatrix(grid, M, PathLabel::u), 0.0};
    double acc = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        auto res = stationarity_residual(c, adjoint.P.column(k), forward.X.column(k), u.column(k));
        r.residual_paths.set_column(k, res);
        double s = 0.0;
        for (double v : res) s += v * v;
        acc += ((k == 0 || k == n) ? 0.5 : 1.0) * s / static_cast<double>(M);
    }
    r.l2_norm = std::sqrt(acc / static_cast<double>(n));
    return r;
}

// ---- assumption validation ----

struct AssumptionRow {
    std::string clause;
    std::string quantity;
    double estimate = 0.0;
    double declared = 0.0;
    bool lower_bound = false;  // estimate must be >= declared instead of <=
    bool pass = true;
    bool required = false;
    std::string worst;
};

struct AssumptionReport {
    std::vector<AssumptionRow> rows;
    bool all_required_pass = true;

    const AssumptionRow& row(const std::string& clause, const std::string& quantity = "") const {
        for (const auto& r : rows)
            if (r.clause == clause && (quantity.empty() || r.quantity == quantity)) return r;
        throw DomainError("assumption report has no row " + clause + " " + quantity);
    }
    bool clause_pass(const std::string& prefix) const {
        for (const auto& r : rows)
            if (r.clause.rfind(prefix, 0) == 0 && !r.pass) return false;
        return true;
    }
};

namespace detail {

struct ProbePoint {
    double x = 0, u = 0, y = 0, v = 0;  // (y, v): where Lions derivatives are evaluated
    std::vector<double> ys, vs;         // the law, as a cloud of (state, control) pairs
};

inline std::string describe(const ProbePoint& p) {
    char buf[160];
    double my = 0, mv = 0;
    for (std::size_t j = 0; j < p.ys.size(); ++j) my += p.ys[j] / p.ys.size(), mv += p.vs[j] / p.vs.size();
    std::snprintf(buf, sizeof buf, "x=%.4g u=%.4g y=%.4g v=%.4g mean(law)=(%.4g, %.4g)", p.x, p.u, p.y, p.v, my, mv);
    return buf;
}

struct Tracker {
    double value;
    bool maximize;
    std::string worst;
    explicit Tracker(bool max) : value(max ? 0.0 : std::numeric_limits<double>::infinity()), maximize(max) {}
    void offer(double v, const ProbePoint& p) {
        if (!std::isfinite(v)) return;
        if (maximize ? v > value : v < value) {
            value = v;
            worst = describe(p);
        }
    }
};

inline MeasureFunction pair_function(const MeanFieldMap& w) {
    auto moments = [&w](const EmpiricalMeasure& mu) {
        std::vector<double> ys(mu.size()), vs(mu.size());
        for (std::size_t j = 0; j < mu.size(); ++j) ys[j] = mu.point(j)[0], vs[j] = mu.point(j)[1];
        return w.moments(ys, vs);
    };
    MeasureFunction F;
    F.value = [&w, moments](std::span<const double> x, const EmpiricalMeasure& mu) {
        return w.value(x[0], x[1], moments(mu).data());
    };
    F.grad_x = [&w, moments](std::span<const double> x, const EmpiricalMeasure& mu) {
        auto m = moments(mu);
        return std::vector<double>{w.d_x(x[0], x[1], m.data()), w.d_u(x[0], x[1], m.data())};
    };
    F.lions = [&w, moments](std::span<const double> x, const EmpiricalMeasure& mu, std::span<const double> y) {
        double dy, dv;
        w.lions(x[0], x[1], moments(mu), y[0], y[1], dy, dv);
        return std::vector<double>{dy, dv};
    };
    return F;
}

}  // namespace detail

inline AssumptionReport validate_assumptions(const CoefficientSet& c, std::size_t probes, std::uint64_t seed) {
    if (probes < 1) throw DomainError("validate_assumptions: probes must be at least 1");
    using detail::ProbePoint;
    using detail::Tracker;
    const double R = c.probe.state_radius, span = c.box.hi - c.box.lo;
    const double lo = c.box.lo + 1e-6 * span, hi = c.box.hi - 1e-6 * span;
    const std::size_t Mp = c.probe.cloud_size;
    const double C = c.constants.lipschitz, lambda = c.constants.convexity;
    const bool h7 = c.assumptions == AssumptionSet::H2_H5_H7;
    const double ylo = h7 ? 0.0 : -c.probe.adjoint_max, yhi = c.probe.adjoint_max;

    auto clampx = [&](double x) { return std::clamp(x, -R, R); };
    auto clampu = [&](double u) { return std::clamp(u, lo, hi); };

    auto rng = path_rng(seed, 0, stream::probe);
    std::uniform_real_distribution<double> UX(-R, R), UU(lo, hi), U01(0.0, 1.0);
    std::normal_distribution<double> N;
    auto random_point = [&]() {
        ProbePoint p;
        p.x = UX(rng), p.u = UU(rng), p.y = UX(rng), p.v = UU(rng);
        p.ys.resize(Mp), p.vs.resize(Mp);
        for (auto& y : p.ys) y = UX(rng);
        for (auto& v : p.vs) v = UU(rng);
        return p;
    };
    // kind: 0 x, 1 u, 2 law state coords, 3 law control shift, 4 law control per point, 5 all, 6 evaluation point
    auto perturb = [&](const ProbePoint& a, int kind, double h) {
        ProbePoint b = a;
        double s = U01(rng) < 0.5 ? -1.0 : 1.0;
        switch (kind) {
            case 0: b.x = clampx(a.x + s * h); break;
            case 1: b.u = clampu(a.u + s * h); break;
            case 2: for (auto& y : b.ys) y = clampx(y + h * N(rng)); break;
            case 3: for (auto& v : b.vs) v = clampu(v + s * h); break;
            case 4: for (auto& v : b.vs) v = clampu(v + h * N(rng)); break;
            case 5:
                b.x = clampx(a.x + h * N(rng)), b.u = clampu(a.u + h * N(rng));
                for (auto& y : b.ys) y = clampx(y + h * N(rng));
                for (auto& v : b.vs) v = clampu(v + h * N(rng));
                break;
            default:
                b.y = clampx(a.y + h * N(rng)), b.v = clampu(a.v + h * N(rng));
                break;
        }
        return b;
    };

    std::vector<std::pair<ProbePoint, ProbePoint>> pairs;
    std::vector<ProbePoint> points;
    for (std::size_t k = 0; k < probes; ++k) {
        auto a = random_point();
        double h = std::exp(std::log(1e-4) + U01(rng) * (std::log(0.3) - std::log(1e-4)));
        pairs.emplace_back(a, perturb(a, static_cast<int>(k % 7), h));
        points.push_back(std::move(a));
    }
    // extreme probes: every corner of the domain, small perturbations of each kind
    for (int mask = 0; mask < 32; ++mask) {
        ProbePoint a;
        a.x = (mask & 1) ? R : -R;
        a.u = (mask & 2) ? hi : lo;
        a.y = (mask & 4) ? R : -R;
        a.v = (mask & 8) ? hi : lo;
        a.ys.assign(Mp, (mask & 16) ? R : -R);
        a.vs.assign(Mp, (mask & 8) ? hi : lo);
        for (int kind = 0; kind < 7; ++kind) pairs.emplace_back(a, perturb(a, kind, 1e-4 * std::max(1.0, span)));
        points.push_back(a);
    }

    auto mom = [](const MeanFieldMap& w, const ProbePoint& p) { return w.moments(p.ys, p.vs); };
    auto mom_state = [](const MeanFieldMap& w, const ProbePoint& p) { return w.moments(p.ys, {}); };
    auto lions_pair = [&](const MeanFieldMap& w, const ProbePoint& p, double& dy, double& dv) {
        w.lions(p.x, p.u, mom(w, p), p.y, p.v, dy, dv);
    };
    auto lions_state = [&](const MeanFieldMap& w, const ProbePoint& p) {
        double dy, dv;
        w.lions(p.x, 0.0, mom_state(w, p), p.y, 0.0, dy, dv);
        return dy;
    };
    auto sigma_of = [&](const ProbePoint& p) { return c.sigma.value(0.0, 0.0, mom_state(c.sigma, p).data()); };
    auto g_of = [&](const ProbePoint& p) { return c.terminal.value(p.x, 0.0, mom_state(c.terminal, p).data()); };
    auto w_of = [&](const MeanFieldMap& w, const ProbePoint& p) { return w.value(p.x, p.u, mom(w, p).data()); };

    Tracker h1_sig(true), h1_bg(true), h1_sl(true), h1_bl(true);
    Tracker h1p_sig(true), h1p_bg(true), h1p_sl(true), h1p_bl(true);
    Tracker h2_s(true), h2_b(true), h2_g(true), h2_f(true);
    Tracker h3_bound(true), h3_lip(true);
    Tracker h4_bound_b(true), h4_bound_f(true), h4_mu_b(true), h4_mu_f(true), h4_x_b(true), h4_x_f(true),
        h4_u_b(true), h4_u_f(true);
    Tracker h5_x(true), h5_mu(true);
    Tracker h7_gx(false), h7_gmu(false), h7_bmu(false), h7_fmu(false), h7_fx(false), h7_sigma(true);

    for (const auto& p : points) {
        double my1 = 0, my2 = 0;
        for (double y : p.ys) my1 += std::abs(y) / Mp, my2 += y * y / Mp;
        const double s = sigma_of(p), b = w_of(c.drift, p);
        h1_sig.offer(std::abs(s), p);
        h1_bg.offer(std::abs(b) / (1.0 + my1 + std::abs(p.x)), p);
        h1p_sig.offer(std::abs(s) / (1.0 + std::sqrt(my2)), p);
        h1p_bg.offer(std::abs(b) / (1.0 + std::sqrt(my2) + std::abs(p.x)), p);
        h3_bound.offer(std::abs(lions_state(c.sigma, p)), p);
        for (int which = 0; which < 2; ++which) {
            const MeanFieldMap& w = which ? c.running : c.drift;
            auto m = mom(w, p);
            double dy, dv;
            lions_pair(w, p, dy, dv);
            double bound = std::hypot(dy, dv) + std::abs(w.d_x(p.x, p.u, m.data())) + std::abs(w.d_u(p.x, p.u, m.data()));
            (which ? h4_bound_f : h4_bound_b).offer(bound, p);
            (which ? h7_fmu : h7_bmu).offer(dy, p);
            if (which) h7_fx.offer(w.d_x(p.x, p.u, m.data()), p);
        }
        auto mg = mom_state(c.terminal, p);
        const double gx = c.terminal.d_x(p.x, 0.0, mg.data()), gmu = lions_state(c.terminal, p);
        h5_x.offer(std::abs(gx), p);
        h5_mu.offer(std::abs(gmu), p);
        h7_gx.offer(gx, p);
        h7_gmu.offer(gmu, p);
    }

    WassersteinOptions wopt;
    for (const auto& [a, b] : pairs) {
        const double dx = std::abs(a.x - b.x), du = std::abs(a.u - b.u), dyv = std::hypot(a.y - b.y, a.v - b.v);
        double e1 = 0.0;
        for (std::size_t j = 0; j < Mp; ++j) e1 += std::abs(a.ys[j] - b.ys[j]) / Mp;
        bool law_moved = false, theta_moved = false;
        for (std::size_t j = 0; j < Mp; ++j) {
            law_moved = law_moved || a.ys[j] != b.ys[j] || a.vs[j] != b.vs[j];
            theta_moved = theta_moved || a.vs[j] != b.vs[j];
        }
        const double w2 = law_moved ? wasserstein(EmpiricalMeasure::from_pairs(a.ys, a.vs),
                                                  EmpiricalMeasure::from_pairs(b.ys, b.vs), 2, wopt)
                                    : 0.0;
        const double w2y = e1 > 0 ? wasserstein(EmpiricalMeasure::from_1d(a.ys), EmpiricalMeasure::from_1d(b.ys), 2, wopt)
                                  : 0.0;
        auto q = [](double num, double den) { return den > 1e-14 ? num / den : std::numeric_limits<double>::quiet_NaN(); };

        const double ds = std::abs(sigma_of(a) - sigma_of(b));
        h7_sigma.offer(ds, a);
        h2_s.offer(q(ds, w2y), a);
        h1_sl.offer(q(ds, e1), a);
        h1p_sl.offer(q(ds, w2y), a);
        const double db = std::abs(w_of(c.drift, a) - w_of(c.drift, b));
        h2_b.offer(q(db, w2 + dx + du), a);
        if (du == 0.0 && !theta_moved) {
            h1_bl.offer(q(db, e1 + dx), a);
            h1p_bl.offer(q(db, w2y + dx), a);
        }
        h2_f.offer(q(std::abs(w_of(c.running, a) - w_of(c.running, b)), w2 + dx + du), a);
        h2_g.offer(q(std::abs(g_of(a) - g_of(b)), dx + w2y), a);
        h3_lip.offer(q(std::abs(lions_state(c.sigma, a) - lions_state(c.sigma, b)), w2y + std::abs(a.y - b.y)), a);
        for (int which = 0; which < 2; ++which) {
            const MeanFieldMap& w = which ? c.running : c.drift;
            double ay, av, by, bv;
            lions_pair(w, a, ay, av);
            lions_pair(w, b, by, bv);
            auto ma = mom(w, a), mb = mom(w, b);
            (which ? h4_mu_f : h4_mu_b).offer(q(std::hypot(ay - by, av - bv), w2 + dx + du + dyv), a);
            (which ? h4_x_f : h4_x_b)
                .offer(q(std::abs(w.d_x(a.x, a.u, ma.data()) - w.d_x(b.x, b.u, mb.data())), w2 + dx + du), a);
            (which ? h4_u_f : h4_u_b)
                .offer(q(std::abs(w.d_u(a.x, a.u, ma.data()) - w.d_u(b.x, b.u, mb.data())), w2 + dx + du), a);
        }
    }

    // convexity samples
    std::vector<ConvexitySample> joint, strict, gsamples, hsamples;
    std::vector<std::pair<double, double>> hyz;
    const std::size_t nconv = std::max<std::size_t>(probes, 8);
    for (std::size_t k = 0; k < nconv; ++k) {
        auto a = random_point();
        double h = 0.05 + 0.5 * U01(rng);
        auto b = perturb(a, 5, h);
        joint.push_back({{a.x, a.u}, {b.x, b.u}, EmpiricalMeasure::from_pairs(a.ys, a.vs),
                         EmpiricalMeasure::from_pairs(b.ys, b.vs)});
        hsamples.push_back(joint.back());
        hyz.emplace_back(ylo + (yhi - ylo) * U01(rng), 2.0 * U01(rng) - 1.0);
        gsamples.push_back({{a.x}, {b.x}, EmpiricalMeasure::from_1d(a.ys), EmpiricalMeasure::from_1d(b.ys)});
        // (law, control) directions only: control alone, law controls alone, both
        ProbePoint s = a;
        int mode = static_cast<int>(k % 3);
        if (mode != 1) s.u = clampu(a.u + h * N(rng));
        if (mode != 0)
            for (auto& v : s.vs) v = clampu(v + h * N(rng));
        strict.push_back({{a.x, a.u}, {a.x, s.u}, EmpiricalMeasure::from_pairs(a.ys, a.vs),
                          EmpiricalMeasure::from_pairs(a.ys, s.vs)});
    }
    const auto Fb = detail::pair_function(c.drift), Ff = detail::pair_function(c.running);
    MeasureFunction Fg;
    Fg.value = [&c](std::span<const double> x, const EmpiricalMeasure& mu) {
        return c.terminal.value(x[0], 0.0, c.terminal.moments(mu.points(), {}).data());
    };
    Fg.grad_x = [&c](std::span<const double> x, const EmpiricalMeasure& mu) {
        return std::vector<double>{c.terminal.d_x(x[0], 0.0, c.terminal.moments(mu.points(), {}).data())};
    };
    Fg.lions = [&c](std::span<const double> x, const EmpiricalMeasure& mu, std::span<const double> y) {
        double dy, dv;
        c.terminal.lions(x[0], 0.0, c.terminal.moments(mu.points(), {}), y[0], 0.0, dy, dv);
        return std::vector<double>{dy};
    };
    double h_min_gap = std::numeric_limits<double>::infinity();
    std::string h_worst;
    for (std::size_t k = 0; k < hsamples.size(); ++k) {
        const auto [yv, zv] = hyz[k];
        MeasureFunction Fh;
        Fh.value = [&, yv, zv](std::span<const double> x, const EmpiricalMeasure& mu) {
            return Ff.value(x, mu) + yv * Fb.value(x, mu) +
                   zv * c.sigma.value(0.0, 0.0, [&] {
                       std::vector<double> ys(mu.size());
                       for (std::size_t j = 0; j < mu.size(); ++j) ys[j] = mu.point(j)[0];
                       return c.sigma.moments(ys, {});
                   }().data());
        };
        Fh.grad_x = [&, yv](std::span<const double> x, const EmpiricalMeasure& mu) {
            auto gf = Ff.grad_x(x, mu), gb = Fb.grad_x(x, mu);
            return std::vector<double>{gf[0] + yv * gb[0], gf[1] + yv * gb[1]};
        };
        Fh.lions = [&, yv, zv](std::span<const double> x, const EmpiricalMeasure& mu, std::span<const double> y) {
            auto lf = Ff.lions(x, mu, y), lb = Fb.lions(x, mu, y);
            std::vector<double> ys(mu.size());
            for (std::size_t j = 0; j < mu.size(); ++j) ys[j] = mu.point(j)[0];
            double sy, sv;
            c.sigma.lions(0.0, 0.0, c.sigma.moments(ys, {}), y[0], 0.0, sy, sv);
            return std::vector<double>{lf[0] + yv * lb[0] + zv * sy, lf[1] + yv * lb[1]};
        };
        double gap = convexity_gap(Fh, hsamples[k]);
        if (gap < h_min_gap) {
            h_min_gap = gap;
            char buf[96];
            std::snprintf(buf, sizeof buf, "sample %zu (y=%.3g, z=%.3g)", k, yv, zv);
            h_worst = buf;
        }
    }
    auto conv_b = convexity_probe(Fb, joint), conv_f = convexity_probe(Ff, joint), conv_g = convexity_probe(Fg, gsamples);
    auto strict_b = convexity_probe(Fb, strict), strict_f = convexity_probe(Ff, strict);

    AssumptionReport rep;
    const double gap_tol = -1e-9;
    auto req = [&](const std::string& clause) {
        switch (c.assumptions) {
            case AssumptionSet::H1: return clause.rfind("H1 ", 0) == 0 || clause == "H1";
            case AssumptionSet::H1prime: return clause.rfind("H1'", 0) == 0;
            case AssumptionSet::H2_H6:
                return clause.rfind("H2", 0) == 0 || clause.rfind("H3", 0) == 0 || clause.rfind("H4", 0) == 0 ||
                       clause.rfind("H5", 0) == 0 || clause.rfind("H6", 0) == 0;
            case AssumptionSet::H2_H5_H7:
                return clause.rfind("H2", 0) == 0 || clause.rfind("H3", 0) == 0 || clause.rfind("H4", 0) == 0 ||
                       clause.rfind("H5", 0) == 0 || clause.rfind("H7", 0) == 0;
        }
        return false;
    };
    auto upper = [&](const std::string& clause, const std::string& what, const Tracker& t, double declared) {
        AssumptionRow r{clause, what, t.value, declared, false, t.value <= declared * (1.0 + 1e-9) + 1e-12, req(clause),
                        t.worst};
        rep.rows.push_back(r);
    };
    auto lower = [&](const std::string& clause, const std::string& what, double est, double declared,
                     const std::string& worst) {
        AssumptionRow r{clause, what, est, declared, true, est >= declared - 1e-6 * std::abs(declared) + (declared == 0 ? gap_tol : 0.0),
                        req(clause), worst};
        rep.rows.push_back(r);
    };
    auto sample_name = [](const ConvexityReport& r) { return "sample " + std::to_string(r.worst_sample); };

    upper("H1", "sup |sigma|", h1_sig, C);
    upper("H1", "sup |b| / (1 + E|eta| + |x|)", h1_bg, C);
    upper("H1", "sigma Lipschitz in E|eta - eta'|", h1_sl, C);
    upper("H1", "b Lipschitz in E|eta - eta'| + |x - x'|", h1_bl, C);
    upper("H1'", "sup |sigma| / (1 + E[eta^2]^(1/2))", h1p_sig, C);
    upper("H1'", "sup |b| / (1 + E[eta^2]^(1/2) + |x|)", h1p_bg, C);
    upper("H1'", "sigma Lipschitz in W2", h1p_sl, C);
    upper("H1'", "b Lipschitz in W2 + |x - x'|", h1p_bl, C);
    upper("H2(i)", "sigma Lipschitz in W2", h2_s, C);
    upper("H2(ii)", "b Lipschitz in W2 + |x - x'| + |u - u'|", h2_b, C);
    upper("H2(iii)", "g Lipschitz in |x - x'| + W2", h2_g, C);
    upper("H2(iv)", "f Lipschitz in W2 + |x - x'| + |u - u'|", h2_f, C);
    upper("H3(i)", "sup |d_mu sigma|", h3_bound, C);
    upper("H3(ii)", "d_mu sigma Lipschitz", h3_lip, C);
    upper("H4(i) b", "sup |d_mu b| + |d_x b| + |d_u b|", h4_bound_b, C);
    upper("H4(i) f", "sup |d_mu f| + |d_x f| + |d_u f|", h4_bound_f, C);
    upper("H4(ii) b", "d_mu b Lipschitz", h4_mu_b, C);
    upper("H4(ii) f", "d_mu f Lipschitz", h4_mu_f, C);
    upper("H4(iii) b", "d_x b Lipschitz", h4_x_b, C);
    upper("H4(iii) f", "d_x f Lipschitz", h4_x_f, C);
    upper("H4(iv) b", "d_u b Lipschitz", h4_u_b, C);
    upper("H4(iv) f", "d_u f Lipschitz", h4_u_f, C);
    upper("H5", "sup |d_x g|", h5_x, C);
    upper("H5", "sup |d_mu g|", h5_mu, C);
    lower("H6", "min convexity gap of g in (x, mu)", conv_g.min_gap, 0.0, sample_name(conv_g));
    lower("H6", "min convexity gap of H in (mu, x, u)", h_min_gap, 0.0, h_worst);
    lower("H7", "min convexity gap of g in (x, mu)", conv_g.min_gap, 0.0, sample_name(conv_g));
    lower("H7", "min d_x g", h7_gx.value, 0.0, h7_gx.worst);
    lower("H7", "min d_mu g", h7_gmu.value, 0.0, h7_gmu.worst);
    lower("H7", "min convexity gap of b in (mu, x, u)", conv_b.min_gap, 0.0, sample_name(conv_b));
    lower("H7", "min (d_mu b)_1", h7_bmu.value, 0.0, h7_bmu.worst);
    lower("H7", "strict convexity modulus of b in (mu, u)", strict_b.strict_modulus_estimate, lambda,
          sample_name(strict_b));
    lower("H7", "min convexity gap of f in (mu, x, u)", conv_f.min_gap, 0.0, sample_name(conv_f));
    lower("H7", "strict convexity modulus of f in (mu, u)", strict_f.strict_modulus_estimate, lambda,
          sample_name(strict_f));
    lower("H7", "min (d_mu f)_1", h7_fmu.value, 0.0, h7_fmu.worst);
    lower("H7", "min d_x f", h7_fx.value, 0.0, h7_fx.worst);
    upper("H7", "sup |sigma(mu) - sigma(mu')| (constant sigma)", h7_sigma, 0.0);
    for (const auto& r : rep.rows)
        if (r.required && !r.pass) rep.all_required_pass = false;
    return rep;
}

inline void write_assumption_csv(std::ostream& os, const AssumptionReport& r) {
    os << "clause,quantity,estimate,declared,kind,required,result,worst_probe\n";
    os.precision(10);
    for (const auto& row : r.rows)
        os << row.clause << ",\"" << row.quantity << "\"," << row.estimate << ',' << row.declared << ','
           << (row.lower_bound ? ">=" : "<=") << ',' << (row.required ? "yes" : "no") << ','
           << (row.pass ? "PASS" : "FAIL") << ",\"" << row.worst << "\"\n";
}

}  // namespace mfbm
