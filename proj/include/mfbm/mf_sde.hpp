#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "fbm_core.hpp"
#include "girsanov.hpp"
#include "grid.hpp"
#include "parallel.hpp"

namespace mfbm {

// Controls for every particle at step k, given the states at step k.
class ControlPolicy {
public:
    using Feedback = std::function<void(std::size_t, std::span<const double>, std::span<double>)>;

    static ControlPolicy zero() { return constant(0.0); }
    static ControlPolicy constant(double c) {
        return feedback([c](std::size_t, std::span<const double>, std::span<double> u) {
            for (double& v : u) v = c;
        });
    }
    static ControlPolicy open_loop(const PathMatrix& u) {
        ControlPolicy p;
        p.open_ = &u;
        return p;
    }
    static ControlPolicy feedback(Feedback fn) {
        ControlPolicy p;
        p.fb_ = std::move(fn);
        return p;
    }

    void evaluate(std::size_t k, std::span<const double> x, std::span<double> u) const {
        if (open_) {
            if (open_->n_paths() != x.size() || k >= open_->n_times())
                throw DomainError("ControlPolicy: open-loop control has the wrong shape");
            for (std::size_t i = 0; i < x.size(); ++i) u[i] = (*open_)(i, k);
        } else {
            fb_(k, x, u);
        }
    }

private:
    const PathMatrix* open_ = nullptr;
    Feedback fb_;
};

struct ParticleEnsemble {
    TimeGrid grid;
    PathMatrix X;
    PathMatrix u;
    PathMatrix W;
    PathMatrix BH;
    std::optional<PathMatrix> theta;
    // Picard route with gamma != 0: X holds X_t(T_t) and weights holds eps_t^{-1}(T_t);
    // weighted averages over X give the law of the solution.
    std::optional<PathMatrix> weights;

    std::size_t n_paths() const { return X.n_paths(); }
};

inline void check_admissible(const ControlBox& box, std::span<const double> u, std::size_t k) {
    for (double v : u)
        if (!std::isfinite(v) || !box.interior(v))
            throw InteriorViolationError("control value " + std::to_string(v) + " at step " + std::to_string(k) +
                                         " is not inside the open box (" + std::to_string(box.lo) + ", " +
                                         std::to_string(box.hi) + ")");
}

// Particle Euler scheme; the law at each step is the M-particle cloud of (X, u).
inline ParticleEnsemble solve_forward(const CoefficientSet& c, const ControlPolicy& control, std::span<const double> xi,
                                      const NoisePaths& noise) {
    const TimeGrid grid = noise.BH.grid();
    const std::size_t M = noise.BH.n_paths(), n = grid.n_steps();
    if (xi.size() != M) throw DomainError("solve_forward: initial values do not match the number of paths");
    require_same_grid(grid, noise.W.grid(), "solve_forward");
    ParticleEnsemble e{grid, PathMatrix(grid, M, PathLabel::X), PathMatrix(grid, M, PathLabel::u), noise.W, noise.BH,
                       std::nullopt, std::nullopt};
    const double dt = grid.dt();
    std::vector<double> x(xi.begin(), xi.end()), u(M), next(M);
    for (std::size_t k = 0;; ++k) {
        e.X.set_column(k, x);
        control.evaluate(k, x, u);
        check_admissible(c.box, u, k);
        e.u.set_column(k, u);
        if (k == n) break;
        auto mb = c.drift.moments(x, u);
        auto ms = c.sigma.moments(x, {});
        const double sig = c.sigma.value(0.0, 0.0, ms.data());
        parallel_for(M, [&](std::size_t i) {
            next[i] = x[i] + sig * (noise.BH(i, k + 1) - noise.BH(i, k)) + c.drift.value(x[i], u[i], mb.data()) * dt;
        });
        for (double v : next)
            if (!std::isfinite(v)) throw BlowUpError("forward state is not finite", k + 1);
        x.swap(next);
    }
    return e;
}

inline ParticleEnsemble solve_forward(const CoefficientSet& c, const ControlPolicy& control, double x0,
                                      const NoisePaths& noise) {
    std::vector<double> xi(noise.BH.n_paths(), x0);
    return solve_forward(c, control, xi, noise);
}

inline ParticleEnsemble solve_forward(const CoefficientSet& c, const ControlPolicy& control, double x0,
                                      const HurstModel& model, const TimeGrid& grid, std::size_t M, std::uint64_t seed,
                                      NoiseMode mode = NoiseMode::independent) {
    return solve_forward(c, control, x0, make_noise(model, grid, M, seed, mode));
}

// sup_t E[X_t^2 / eps_t]; eps == nullptr means eps = 1.
inline double lstar_norm(const PathMatrix& X, const PathMatrix* eps = nullptr) {
    if (eps && (eps->n_paths() != X.n_paths() || !(eps->grid() == X.grid())))
        throw DomainError("lstar_norm: shapes differ");
    double sup = 0.0;
    for (std::size_t k = 0; k < X.n_times(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < X.n_paths(); ++i) s += X(i, k) * X(i, k) / (eps ? (*eps)(i, k) : 1.0);
        sup = std::max(sup, s / static_cast<double>(X.n_paths()));
    }
    return sup;
}

struct PicardDiagnostics {
    std::size_t n_iterations = 0;
    std::vector<double> diffs;
    bool converged = false;
    // Fit of log(diff_n n!) = n log(CT) + c: the factorial envelope of the existence proof.
    double envelope_ct = 0.0;

    std::vector<double> ratios() const {
        std::vector<double> r;
        for (std::size_t i = 1; i < diffs.size(); ++i) r.push_back(diffs[i] / diffs[i - 1]);
        return r;
    }
};

struct PicardOptions {
    double tol = 1e-6;
    std::size_t max_iter = 25;
};

struct PicardResult {
    ParticleEnsemble ensemble;
    PicardDiagnostics diagnostics;
};

namespace detail {

inline double envelope_fit(const std::vector<double>& diffs) {
    std::vector<double> xs, ys;
    double lf = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        lf += std::log(static_cast<double>(i + 1));
        if (diffs[i] > 0.0) {
            xs.push_back(static_cast<double>(i + 1));
            ys.push_back(0.5 * std::log(diffs[i]) + lf);  // diffs are squared norms
        }
    }
    if (xs.size() < 2) return 0.0;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
    mx /= xs.size(), my /= ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
    return std::exp(sxy / sxx);
}

}  // namespace detail

// Picard iteration for the semilinear equation
//   X_t = xi + int (gamma X + sigma(P_(X,Theta))) dB^H + int b(P_(X,Theta), X) ds
// through its transformed form Y_t = X_t(T_t) eps_t^{-1}(T_t). The Skorohod integral of
// sigma eps^{-1}(T) is the discrete divergence: the pathwise sum plus the trace term
// <D eps^{-1}(T_s), K*1_cell>. The law of X_s is the eps^{-1}(T_s)-weighted cloud of X_s(T_s).
// The drift is evaluated with its control argument at 0; theta (if given) enters the law and
// is read as already evaluated along the shifted paths.
inline PicardResult picard_solve(const CoefficientSet& c, const KStarOperator& kstar, const GridFunction& gamma,
                                 const PathMatrix& W, std::span<const double> xi, const PathMatrix* theta = nullptr,
                                 PicardOptions opt = {}) {
    const TimeGrid grid = kstar.grid();
    require_same_grid(grid, W.grid(), "picard_solve");
    const std::size_t M = W.n_paths(), n = grid.n_steps();
    if (xi.size() != M) throw DomainError("picard_solve: initial values do not match the number of paths");
    if (theta && (theta->n_paths() != M || !(theta->grid() == grid)))
        throw DomainError("picard_solve: theta has the wrong shape");
    const double dt = grid.dt();

    const GirsanovData gd = build_girsanov(kstar, gamma, W);
    const auto ones = kstar.prefix_cell_means(GridFunction(grid.size(), 1.0));

    // BH rebuilt from W, and the trace term of each step's divergence.
    PathMatrix BH(grid, M, PathLabel::BH);
    std::vector<double> trace(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < j; ++k) s += gd.kstar_cache[j][k] * (ones[j + 1][k] - ones[j][k]);
        trace[j] = s * dt;
    }
    parallel_for(M, [&](std::size_t i) {
        auto w = W.row(i);
        for (std::size_t j = 1; j <= n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < j; ++k) s += ones[j][k] * (w[k + 1] - w[k]);
            BH(i, j) = s;
        }
    });

    const PathMatrix& E = gd.epsilon_inv_T;
    PathMatrix Z(grid, M, PathLabel::X), Y(grid, M, PathLabel::X);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k <= n; ++k) {
            Z(i, k) = xi[i];
            Y(i, k) = xi[i] * E(i, k);
        }

    PicardDiagnostics diag;
    std::vector<double> th;
    PathMatrix Ynew(grid, M, PathLabel::X);
    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
        std::vector<double> sig(n), mbuf;
        std::vector<std::vector<double>> mb(n);
        for (std::size_t k = 0; k < n; ++k) {
            auto z = Z.column(k), e = E.column(k);
            th = theta ? theta->column(k) : std::vector<double>();
            mb[k] = c.drift.moments(z, th, e);
            auto ms = c.sigma.moments(z, {}, e);
            sig[k] = c.sigma.value(0.0, 0.0, ms.data());
        }
        parallel_for(M, [&](std::size_t i) {
            double y = xi[i];
            Ynew(i, 0) = y;
            for (std::size_t k = 0; k < n; ++k) {
                const double e = E(i, k);
                y += sig[k] * e * (BH(i, k + 1) - BH(i, k) + trace[k]) + c.drift.value(Z(i, k), 0.0, mb[k].data()) * e * dt;
                Ynew(i, k + 1) = y;
            }
        });
        if (!Ynew.all_finite()) throw BlowUpError("Picard iterate is not finite", it);
        double sup = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < M; ++i) {
                double d = Ynew(i, k) - Y(i, k);
                s += d * d;
            }
            sup = std::max(sup, s / static_cast<double>(M));
        }
        std::swap(Y, Ynew);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k <= n; ++k) Z(i, k) = Y(i, k) / E(i, k);
        diag.diffs.push_back(sup);
        diag.n_iterations = it;
        if (sup < opt.tol) {
            diag.converged = true;
            break;
        }
    }
    diag.envelope_ct = detail::envelope_fit(diag.diffs);
    if (!diag.converged) {
        throw NonConvergenceError("Picard iteration did not reach tol " + std::to_string(opt.tol) + " in " +
                                      std::to_string(opt.max_iter) + " iterations",
                                  diag.diffs);
    }
    ParticleEnsemble e{grid, std::move(Z), PathMatrix(grid, M, PathLabel::u), W, std::move(BH), std::nullopt,
                       std::nullopt};
    if (theta) e.theta = *theta;
    bool unit = true;
    for (double g : gamma) unit = unit && g == 0.0;
    if (!unit) e.weights = E;
    return {std::move(e), std::move(diag)};
}

inline PicardResult picard_solve(const CoefficientSet& c, const HurstModel& model, const GridFunction& gamma,
                                 const PathMatrix& W, std::span<const double> xi, const PathMatrix* theta = nullptr,
                                 PicardOptions opt = {}) {
    return picard_solve(c, KStarOperator(model, W.grid()), gamma, W, xi, theta, opt);
}

// Weighted ensemble mean at step k (weights self-normalized when present).
inline Estimate ensemble_mean(const ParticleEnsemble& e, std::size_t k) {
    auto x = e.X.column(k);
    if (!e.weights) return estimate(x);
    auto w = e.weights->column(k);
    double sw = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] *= w[i];
        sw += w[i];
    }
    const double scale = static_cast<double>(x.size()) / sw;
    for (double& v : x) v *= scale;
    return estimate(x);
}

inline void write_ensemble_csv(std::ostream& os, const ParticleEnsemble& e) {
    os << "t,path_id,X,u,BH,W\n";
    os.precision(17);
    for (std::size_t i = 0; i < e.n_paths(); ++i)
        for (std::size_t k = 0; k < e.grid.size(); ++k)
            os << e.grid.t(k) << ',' << i << ',' << e.X(i, k) << ',' << e.u(i, k) << ',' << e.BH(i, k) << ','
               << e.W(i, k) << '\n';
}

}  // namespace mfbm
