#pragma once

// Fractional Brownian motion: covariance, Volterra kernel, the adjoint
// transfer operator K*, exact synthesis, and the phi-weighted derivative for
// linear-Gaussian functionals.

#include <fftw3.h>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <vector>

#include "errors.hpp"
#include "frac_calc.hpp"
#include "grid.hpp"
#include "parallel.hpp"

namespace mfbm {

inline double normalizer_cH(double H) {
    if (!(H > 0.5 && H < 1.0)) throw DomainError("Hurst exponent must lie in (1/2, 1)");
    const double a = 2.0 - 2.0 * H, b = H - 0.5;
    const double beta = std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    return std::sqrt(H * (2.0 * H - 1.0) / beta);
}

class HurstModel {
public:
    explicit HurstModel(double H) : H_(H), cH_(normalizer_cH(H)) {}

    double H() const noexcept { return H_; }
    double c_H() const noexcept { return cH_; }
    // Exponent H - 1/2 that appears throughout the kernel calculus.
    double alpha() const noexcept { return H_ - 0.5; }
    double phi(double r) const { return H_ * (2.0 * H_ - 1.0) * std::pow(std::abs(r), 2.0 * H_ - 2.0); }

private:
    double H_;
    double cH_;
};

inline double covariance(const HurstModel& m, double s, double t) {
    if (s < 0.0 || t < 0.0) throw DomainError("covariance: negative time");
    const double h2 = 2.0 * m.H();
    return 0.5 * (std::pow(t, h2) + std::pow(s, h2) - std::pow(std::abs(t - s), h2));
}

// K_H(t,s). With u - s = w^{1/a} the singular factor (u-s)^{a-1} becomes the
// constant 1/a and the remaining integrand (s + w^{1/a})^a is smooth.
inline double kernel_K(const HurstModel& m, double t, double s) {
    if (s >= t) return 0.0;
    if (!(s > 0.0)) throw DomainError("kernel_K: s must be positive (kernel singular at 0)");
    const double a = m.alpha();
    const double top = std::pow(t - s, a);
    auto f = [&](double w) { return std::pow(s + std::pow(w, 1.0 / a), a); };
    double err = 0.0;
    double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, top, 12, 1e-11, &err);
    return m.c_H() * std::pow(s, -a) * I / a;
}

namespace detail {

// Gauss-Legendre nodes and weights mapped to [0,1], weights summing to 1.
inline void unit_gauss(std::vector<double>& x, std::vector<double>& w) {
    using GL = boost::math::quadrature::gauss<double, 6>;
    x.clear();
    w.clear();
    const auto& ab = GL::abscissa();
    const auto& wt = GL::weights();
    for (std::size_t i = 0; i < ab.size(); ++i) {
        x.push_back(0.5 * (1.0 - ab[i]));
        w.push_back(0.5 * wt[i]);
        if (ab[i] != 0.0) {
            x.push_back(0.5 * (1.0 + ab[i]));
            w.push_back(0.5 * wt[i]);
        }
    }
}

}  // namespace detail

// K*(psi 1_[0,upper])(s) = c_H s^{-a} int_s^upper u^a psi(u) (u-s)^{a-1} du on a fixed grid.
// Stochastic sums against W use cell averages of K*psi because K*psi blows up
// like s^{-a} at the origin; the first cell is averaged through s = dt v^{1/(1-a)}.
class KStarOperator {
public:
    KStarOperator(const HurstModel& model, const TimeGrid& grid) : model_(model), grid_(grid) {
        std::vector<double> x, w;
        detail::unit_gauss(x, w);
        const double a = model.alpha(), dt = grid.dt();
        const std::size_t n = grid.n_steps();
        nodes_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t q = 0; q < x.size(); ++q) {
                Node nd;
                if (k == 0) {
                    nd.s = dt * std::pow(x[q], 1.0 / (1.0 - a));
                    nd.factor = w[q] * std::pow(dt, -a) / (1.0 - a);
                } else {
                    nd.s = grid.t(k) + dt * x[q];
                    nd.factor = w[q] * std::pow(nd.s, -a);
                }
                nodes_[k].push_back(nd);
            }
        }
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    const HurstModel& model() const noexcept { return model_; }

    // Pointwise value at s in (0, t_upper].
    double at(double s, const GridFunction& psi, std::size_t upper) const {
        check(psi);
        if (!(s > 0.0)) throw DomainError("K*: evaluation point must be positive");
        const double a = model_.alpha();
        GridFunction h = weighted(psi);
        std::vector<double> cells;
        detail::right_cell_contributions(s, h, grid_, a, upper, cells);
        double sum = 0.0;
        for (double v : cells) sum += v;
        return model_.c_H() * std::pow(s, -a) * sum;
    }

    // Grid function of K*(psi 1_[0,t_upper]); index 0 holds the first-cell average.
    GridFunction apply(const GridFunction& psi, std::size_t upper) const {
        check(psi);
        GridFunction out(grid_.size(), 0.0);
        auto means = cell_means(psi, upper);
        out[0] = means.empty() ? 0.0 : means[0];
        for (std::size_t k = 1; k < upper; ++k) out[k] = at(grid_.t(k), psi, upper);
        return out;
    }

    // Cell averages of K*(psi 1_[0,t_upper]) over cells 0..n-1 (zero beyond upper).
    std::vector<double> cell_means(const GridFunction& psi, std::size_t upper) const {
        check(psi);
        const std::size_t n = grid_.n_steps();
        const double a = model_.alpha(), cH = model_.c_H();
        GridFunction h = weighted(psi);
        std::vector<double> out(n, 0.0);
        parallel_for(std::min(upper, n), [&](std::size_t k) {
            std::vector<double> cells;
            double acc = 0.0;
            for (const Node& nd : nodes_[k]) {
                detail::right_cell_contributions(nd.s, h, grid_, a, upper, cells);
                double sum = 0.0;
                for (double v : cells) sum += v;
                acc += nd.factor * cH * sum;
            }
            out[k] = acc;
        });
        return out;
    }

    // rows[j][k], k < j: cell averages of K*(psi 1_[0,t_j]) for every truncation j = 0..n at once.
    std::vector<std::vector<double>> prefix_cell_means(const GridFunction& psi) const {
        check(psi);
        const std::size_t n = grid_.n_steps();
        const double a = model_.alpha(), cH = model_.c_H();
        GridFunction h = weighted(psi);
        // cols[k][j] = value for truncation j, filled per cell k in parallel.
        std::vector<std::vector<double>> cols(n);
        parallel_for(n, [&](std::size_t k) {
            std::vector<double> cells;
            std::vector<double> col(n + 1, 0.0);
            for (const Node& nd : nodes_[k]) {
                detail::right_cell_contributions(nd.s, h, grid_, a, n, cells);
                double cum = 0.0;
                for (std::size_t c = k; c < n; ++c) {
                    cum += cells[c];
                    col[c + 1] += nd.factor * cH * cum;
                }
            }
            cols[k] = std::move(col);
        });
        std::vector<std::vector<double>> rows(n + 1);
        for (std::size_t j = 0; j <= n; ++j) {
            rows[j].resize(j);
            for (std::size_t k = 0; k < j; ++k) rows[j][k] = cols[k][j];
        }
        return rows;
    }

    // int_0^{t_upper} (K* psi)^2 ds; the first cell uses s = dt v^{1/(1-2a)} to absorb s^{-2a}.
    double l2_norm_sq(const GridFunction& psi, std::size_t upper) const {
        check(psi);
        const double a = model_.alpha(), dt = grid_.dt(), cH = model_.c_H();
        GridFunction h = weighted(psi);
        std::vector<double> x, w, cells;
        detail::unit_gauss(x, w);
        auto F = [&](double s) {
            detail::right_cell_contributions(s, h, grid_, a, upper, cells);
            double sum = 0.0;
            for (double v : cells) sum += v;
            return cH * sum;
        };
        double total = 0.0;
        for (std::size_t q = 0; q < x.size(); ++q) {
            double s = dt * std::pow(x[q], 1.0 / (1.0 - 2.0 * a));
            double f = F(s);
            total += w[q] * std::pow(dt, 1.0 - 2.0 * a) / (1.0 - 2.0 * a) * f * f;
        }
        for (std::size_t k = 1; k < upper; ++k)
            for (std::size_t q = 0; q < x.size(); ++q) {
                double s = grid_.t(k) + dt * x[q];
                double f = std::pow(s, -a) * F(s);
                total += w[q] * dt * f * f;
            }
        return total;
    }

private:
    struct Node {
        double s;
        double factor;
    };

    void check(const GridFunction& psi) const {
        if (psi.size() != grid_.size()) throw DomainError("K*: grid function has wrong length");
    }
    GridFunction weighted(const GridFunction& psi) const {
        GridFunction h(psi.size());
        const double a = model_.alpha();
        for (std::size_t k = 0; k < psi.size(); ++k) h[k] = std::pow(grid_.t(k), a) * psi[k];
        return h;
    }

    HurstModel model_;
    TimeGrid grid_;
    std::vector<std::vector<Node>> nodes_;
};

inline GridFunction apply_K_star(const HurstModel& model, const TimeGrid& grid, const GridFunction& psi, double upper) {
    if (!(upper > 0.0) || upper > grid.horizon() * (1.0 + 1e-12)) throw DomainError("apply_K_star: upper outside (0,T]");
    return KStarOperator(model, grid).apply(psi, grid.index_of(upper));
}

// Per-path Ito sums of the cell-averaged K*psi against the Brownian increments.
inline std::vector<double> wiener_integral_fbm(const HurstModel& model, const GridFunction& psi, const PathMatrix& W) {
    const TimeGrid& grid = W.grid();
    auto g = KStarOperator(model, grid).cell_means(psi, grid.n_steps());
    std::vector<double> out(W.n_paths());
    parallel_for(W.n_paths(), [&](std::size_t i) {
        auto w = W.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) s += g[k] * (w[k + 1] - w[k]);
        out[i] = s;
    });
    return out;
}

// B^H rebuilt pathwise from W through the kernel: BH_j = sum_k avg_cell_k K_H(t_j,.) dW_k.
inline PathMatrix fbm_from_brownian(const KStarOperator& kstar, const PathMatrix& W) {
    require_same_grid(kstar.grid(), W.grid(), "fbm_from_brownian");
    const TimeGrid& grid = W.grid();
    auto rows = kstar.prefix_cell_means(GridFunction(grid.size(), 1.0));
    PathMatrix BH(grid, W.n_paths(), PathLabel::BH);
    parallel_for(W.n_paths(), [&](std::size_t i) {
        auto w = W.row(i);
        std::vector<double> dw(grid.n_steps());
        for (std::size_t k = 0; k < dw.size(); ++k) dw[k] = w[k + 1] - w[k];
        for (std::size_t j = 1; j < grid.size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < j; ++k) s += rows[j][k] * dw[k];
            BH(i, j) = s;
        }
    });
    return BH;
}

inline PathMatrix fbm_from_brownian(const HurstModel& model, const PathMatrix& W) {
    return fbm_from_brownian(KStarOperator(model, W.grid()), W);
}

struct LinearGaussianFunctional {
    TimeGrid grid;
    GridFunction psi;  // F = int psi dB^H
};

// int_0^T phi(t-r) psi(r) dr with psi constant on each cell (average of its end values)
// and |t-r|^{2H-2} integrated exactly per cell.
inline double dd_H(const HurstModel& model, const LinearGaussianFunctional& F, double t) {
    const TimeGrid& grid = F.grid;
    if (F.psi.size() != grid.size()) throw DomainError("dd_H: grid function has wrong length");
    const double e = 2.0 * model.H() - 1.0, H = model.H();
    double total = 0.0;
    for (std::size_t c = 0; c < grid.n_steps(); ++c) {
        double a = grid.t(c), b = grid.t(c + 1);
        double pc = 0.5 * (F.psi[c] + F.psi[c + 1]);
        double w;
        if (t <= a)
            w = std::pow(b - t, e) - std::pow(a - t, e);
        else if (t >= b)
            w = std::pow(t - a, e) - std::pow(t - b, e);
        else
            w = std::pow(t - a, e) + std::pow(b - t, e);
        total += pc * H * w;
    }
    return total;
}

struct NoisePaths {
    PathMatrix W;
    PathMatrix BH;
};

namespace detail {

// Autocovariance of fractional Gaussian noise with step dt.
inline double fgn_autocov(double H, double dt, std::size_t k) {
    const double h2 = 2.0 * H, kk = static_cast<double>(k);
    return 0.5 * std::pow(dt, h2) *
           (std::pow(kk + 1.0, h2) - 2.0 * std::pow(kk, h2) + std::pow(std::abs(kk - 1.0), h2));
}

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : p(fftw_alloc_complex(n)) {}
    ~FftwBuffer() { fftw_free(p); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    fftw_complex* p;
};

struct FftwPlan {
    fftw_plan plan = nullptr;
    ~FftwPlan() {
        if (plan) {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex());
            fftw_destroy_plan(plan);
        }
    }
};

inline void fill_brownian(PathMatrix& W, std::uint64_t seed) {
    const double sq = std::sqrt(W.grid().dt());
    parallel_for(W.n_paths(), [&](std::size_t i) {
        auto rng = path_rng(seed, i, stream::brownian);
        std::normal_distribution<double> nd;
        auto r = W.row(i);
        r[0] = 0.0;
        for (std::size_t k = 1; k < r.size(); ++k) r[k] = r[k - 1] + sq * nd(rng);
    });
}

}  // namespace detail

// W: exact Brownian paths. BH: exact fBM by circulant embedding of the noise,
// falling back to a dense Cholesky factor. The two are independent.
inline NoisePaths sample_paths(const HurstModel& model, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed) {
    if (n_paths < 1) throw DomainError("sample_paths: need at least one path");
    const std::size_t n = grid.n_steps(), N = 2 * n;
    const double dt = grid.dt(), H = model.H();
    NoisePaths out{PathMatrix(grid, n_paths, PathLabel::W), PathMatrix(grid, n_paths, PathLabel::BH)};
    detail::fill_brownian(out.W, seed);

    std::vector<double> lambda(N);
    bool circulant_ok = true;
    {
        detail::FftwBuffer in(N), spec(N);
        for (std::size_t k = 0; k < N; ++k) {
            std::size_t lag = k <= n ? k : N - k;
            in.p[k][0] = detail::fgn_autocov(H, dt, lag);
            in.p[k][1] = 0.0;
        }
        detail::FftwPlan plan;
        {
            std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
            plan.plan = fftw_plan_dft_1d(static_cast<int>(N), in.p, spec.p, FFTW_FORWARD, FFTW_ESTIMATE);
        }
        fftw_execute(plan.plan);
        double lmax = 0.0;
        for (std::size_t k = 0; k < N; ++k) lmax = std::max(lmax, spec.p[k][0]);
        for (std::size_t k = 0; k < N; ++k) {
            double l = spec.p[k][0];
            if (l < -1e-10 * lmax) circulant_ok = false;
            lambda[k] = std::max(l, 0.0);
        }
    }

    if (circulant_ok) {
        detail::FftwPlan plan;
        {
            detail::FftwBuffer a(N), b(N);
            std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
            plan.plan = fftw_plan_dft_1d(static_cast<int>(N), a.p, b.p, FFTW_FORWARD, FFTW_ESTIMATE);
        }
        std::vector<double> amp(N);
        for (std::size_t k = 0; k < N; ++k) amp[k] = std::sqrt(lambda[k] / static_cast<double>(N));
        parallel_for(n_paths, [&](std::size_t i) {
            detail::FftwBuffer z(N), y(N);
            auto rng = path_rng(seed, i, stream::fgn);
            std::normal_distribution<double> nd;
            for (std::size_t k = 0; k < N; ++k) {
                z.p[k][0] = amp[k] * nd(rng);
                z.p[k][1] = amp[k] * nd(rng);
            }
            fftw_execute_dft(plan.plan, z.p, y.p);
            auto r = out.BH.row(i);
            r[0] = 0.0;
            for (std::size_t k = 0; k < n; ++k) r[k + 1] = r[k] + y.p[k][0];
        });
        return out;
    }

    Eigen::MatrixXd C(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) C(i, j) = detail::fgn_autocov(H, dt, i > j ? i - j : j - i);
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success)
        throw SynthesisError("sample_paths: circulant embedding and Cholesky factorization both failed");
    Eigen::MatrixXd L = llt.matrixL();
    parallel_for(n_paths, [&](std::size_t i) {
        auto rng = path_rng(seed, i, stream::fgn);
        std::normal_distribution<double> nd;
        Eigen::VectorXd z(n);
        for (std::size_t k = 0; k < n; ++k) z[k] = nd(rng);
        Eigen::VectorXd inc = L * z;
        auto r = out.BH.row(i);
        r[0] = 0.0;
        for (std::size_t k = 0; k < n; ++k) r[k + 1] = r[k] + inc[k];
    });
    return out;
}

enum class NoiseMode {
    independent,  // circulant fBM, independent Brownian path
    coupled       // fBM rebuilt from W through the kernel
};

inline NoisePaths make_noise(const HurstModel& model, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                             NoiseMode mode) {
    if (mode == NoiseMode::independent) return sample_paths(model, grid, n_paths, seed);
    PathMatrix W(grid, n_paths, PathLabel::W);
    detail::fill_brownian(W, seed);
    PathMatrix BH = fbm_from_brownian(model, W);
    return {std::move(W), std::move(BH)};
}

}  // namespace mfbm
