#pragma once

// Riemann-Liouville fractional integrals and Marchaud derivatives on uniform
// grids. Grid functions are reconstructed piecewise-linearly and integrated
// exactly against the power kernels cell by cell.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace mfbm {

enum class Side { left, right };

struct FracOrder {
    double alpha;
    Side side = Side::left;

    FracOrder(double a, Side s = Side::left) : alpha(a), side(s) {
        if (!(a > 0.0 && a < 1.0)) throw DomainError("FracOrder: alpha must lie in (0,1)");
    }
};

struct FracDerivative {
    GridFunction values;
    // The endpoint where the defining formula is singular holds the adjacent interior value.
    bool endpoint_substituted = false;
};

namespace detail {

inline void check_grid_function(const GridFunction& f, const TimeGrid& grid, const char* where) {
    if (f.size() != grid.size()) throw DomainError(std::string(where) + ": grid function has wrong length");
    for (double v : f)
        if (!std::isfinite(v)) throw DomainError(std::string(where) + ": non-finite input");
}

inline GridFunction reversed(const GridFunction& f) { return GridFunction(f.rbegin(), f.rend()); }

// Left integral at grid points without the 1/Gamma factor.
inline GridFunction left_integral_grid(const GridFunction& f, const TimeGrid& grid, double a) {
    const std::size_t n = grid.n_steps();
    // A_k: int of (x-u)^{a-1} over the k-th cell back from x, in units of dt;
    // B_k: the same against (u - cell start).
    std::vector<double> A(n + 1), B(n + 1);
    for (std::size_t k = 1; k <= n; ++k) {
        double kk = static_cast<double>(k), km = kk - 1.0;
        A[k] = (std::pow(kk, a) - std::pow(km, a)) / a;
        B[k] = kk * A[k] - (std::pow(kk, a + 1.0) - std::pow(km, a + 1.0)) / (a + 1.0);
    }
    const double scale = std::pow(grid.dt(), a);
    GridFunction out(n + 1, 0.0);
    for (std::size_t j = 1; j <= n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < j; ++c) {
            std::size_t k = j - c;
            s += f[c] * (A[k] - B[k]) + f[c + 1] * B[k];
        }
        out[j] = scale * s;
    }
    return out;
}

// Marchaud left derivative at grid points j >= 1 without the 1/Gamma(1-a) factor.
inline GridFunction left_marchaud_grid(const GridFunction& f, const TimeGrid& grid, double a) {
    const std::size_t n = grid.n_steps();
    const double dt = grid.dt();
    std::vector<double> E(n + 1), F(n + 1);
    for (std::size_t k = 2; k <= n; ++k) {
        double kk = static_cast<double>(k), km = kk - 1.0;
        E[k] = (std::pow(km, -a) - std::pow(kk, -a)) / a;
        F[k] = kk * E[k] - (std::pow(kk, 1.0 - a) - std::pow(km, 1.0 - a)) / (1.0 - a);
    }
    const double scale = std::pow(dt, -a);
    GridFunction out(n + 1, 0.0);
    for (std::size_t j = 1; j <= n; ++j) {
        double tail = (f[j] - f[j - 1]) / (1.0 - a);
        for (std::size_t c = 0; c + 2 <= j; ++c) {
            std::size_t k = j - c;
            tail += (f[j] - f[c]) * E[k] - (f[c + 1] - f[c]) * F[k];
        }
        out[j] = f[j] * std::pow(grid.t(j), -a) + a * scale * tail;
    }
    return out;
}

// Per-cell pieces of int_x^{t_upper} h(u)(u-x)^{a-1} du for piecewise-linear h
// and arbitrary x in [0, t_upper]. Cell c receives its contribution in out[c]
// (the cell containing x gets the partial piece); cells outside stay zero.
// Returns the index of the cell containing x.
inline std::size_t right_cell_contributions(double x, const GridFunction& h, const TimeGrid& grid, double a,
                                            std::size_t upper, std::vector<double>& out) {
    const double dt = grid.dt();
    out.assign(grid.n_steps(), 0.0);
    if (upper == 0 || x >= grid.t(upper)) return upper;
    std::size_t c0 = static_cast<std::size_t>(std::max(0.0, std::floor(x / dt)));
    if (c0 >= upper) c0 = upper - 1;
    {
        double a0 = grid.t(c0), b0 = grid.t(c0 + 1);
        double slope = (h[c0 + 1] - h[c0]) / dt;
        double hx = h[c0] + slope * (x - a0);
        double L = b0 - x;
        if (L > 0.0) {
            double La = std::pow(L, a);
            out[c0] = hx * La / a + slope * La * L / (a + 1.0);
        }
    }
    double p = grid.t(c0 + 1) - x;
    double pa = std::pow(p, a);
    for (std::size_t c = c0 + 1; c < upper; ++c) {
        double q = grid.t(c + 1) - x;
        double qa = std::pow(q, a);
        double m0 = (qa - pa) / a;
        double m1 = (qa * q - pa * p) / (a + 1.0) - p * m0;
        double slope = (h[c + 1] - h[c]) / dt;
        out[c] = h[c] * m0 + slope * m1;
        p = q;
        pa = qa;
    }
    return c0;
}

}  // namespace detail

// Right-sided integral int_x^{t_upper} h(u)(u-x)^{a-1} du / Gamma(a) at an arbitrary point x.
inline double frac_integral_right_at(double x, const GridFunction& h, const TimeGrid& grid, double a,
                                     std::size_t upper) {
    std::vector<double> cells;
    detail::right_cell_contributions(x, h, grid, a, upper, cells);
    double s = 0.0;
    for (double v : cells) s += v;
    return s / std::tgamma(a);
}

inline GridFunction frac_integral(const GridFunction& f, const FracOrder& order, const TimeGrid& grid) {
    detail::check_grid_function(f, grid, "frac_integral");
    const double a = order.alpha;
    GridFunction out = order.side == Side::left ? detail::left_integral_grid(f, grid, a)
                                                : detail::reversed(detail::left_integral_grid(detail::reversed(f), grid, a));
    const double g = std::tgamma(a);
    for (double& v : out) v /= g;
    return out;
}

inline FracDerivative frac_derivative(const GridFunction& f, const FracOrder& order, const TimeGrid& grid) {
    detail::check_grid_function(f, grid, "frac_derivative");
    const double a = order.alpha;
    const std::size_t n = grid.n_steps();
    GridFunction out = order.side == Side::left ? detail::left_marchaud_grid(f, grid, a)
                                                : detail::reversed(detail::left_marchaud_grid(detail::reversed(f), grid, a));
    const double g = std::tgamma(1.0 - a);
    for (double& v : out) v /= g;
    if (order.side == Side::left)
        out[0] = out[1];
    else
        out[n] = out[n - 1];
    for (double v : out)
        if (!std::isfinite(v)) throw RoughnessError("frac_derivative: non-finite value, input too rough");
    return {std::move(out), true};
}

}  // namespace mfbm
