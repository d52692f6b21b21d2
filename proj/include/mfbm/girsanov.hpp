#pragma once

// Deterministic shifts of the Brownian path and the associated density.
//   T_t w = w + int_0^{t ^ .} K*(gamma 1_[0,t]) ds,   A_t w = w - (same)
//   eps_t = exp(I_t - Q_t/2),  eps_t^{-1}(T_t) = exp(-I_t - Q_t/2)
// with I_t = sum_k g_{t,k} dW_k and Q_t = sum_k g_{t,k}^2 dt, g the cell averages of K*.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fbm_core.hpp"
#include "grid.hpp"
#include "parallel.hpp"

namespace mfbm {

enum class ShiftDirection { T, A };

struct GirsanovData {
    TimeGrid grid;
    GridFunction gamma;
    std::vector<std::vector<double>> kstar_cache;  // [j][k], k < j
    std::vector<double> compensator;               // Q_j
    PathMatrix exponent;                           // I_j per path
    PathMatrix epsilon;
    PathMatrix epsilon_inv_T;
};

namespace detail {

inline double checked_exp(double e) {
    if (!std::isfinite(e) || std::abs(e) > 700.0)
        throw OverflowError("density exponent " + std::to_string(e) + " out of range; gamma too large for the grid");
    return std::exp(e);
}

inline double shift_exponent(const std::vector<double>& g, std::span<const double> w) {
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += g[k] * (w[k + 1] - w[k]);
    return s;
}

}  // namespace detail

inline GirsanovData build_girsanov(const KStarOperator& kstar, const GridFunction& gamma, const PathMatrix& W) {
    const TimeGrid& grid = kstar.grid();
    require_same_grid(grid, W.grid(), "build_girsanov");
    if (gamma.size() != grid.size()) throw DomainError("build_girsanov: gamma has wrong length");
    for (double g : gamma)
        if (!std::isfinite(g)) throw DomainError("build_girsanov: gamma must be bounded");

    const std::size_t n = grid.n_steps(), M = W.n_paths();
    GirsanovData d{grid,
                   gamma,
                   kstar.prefix_cell_means(gamma),
                   std::vector<double>(n + 1, 0.0),
                   PathMatrix(grid, M, PathLabel::epsilon),
                   PathMatrix(grid, M, PathLabel::epsilon),
                   PathMatrix(grid, M, PathLabel::epsilon)};
    // Discrete compensator: makes the discrete density an exact mean-one martingale.
    for (std::size_t j = 0; j <= n; ++j) {
        double q = 0.0;
        for (double g : d.kstar_cache[j]) q += g * g;
        d.compensator[j] = q * grid.dt();
    }
    for (double q : d.compensator) detail::checked_exp(0.5 * q);

    std::vector<char> bad(M, 0);
    parallel_for(M, [&](std::size_t i) {
        auto w = W.row(i);
        for (std::size_t j = 0; j <= n; ++j) {
            double I = detail::shift_exponent(d.kstar_cache[j], w);
            double q = d.compensator[j];
            d.exponent(i, j) = I;
            if (!std::isfinite(I) || std::abs(I) + 0.5 * q > 700.0) {
                bad[i] = 1;
                continue;
            }
            d.epsilon(i, j) = std::exp(I - 0.5 * q);
            d.epsilon_inv_T(i, j) = std::exp(-I - 0.5 * q);
        }
    });
    for (char b : bad)
        if (b) throw OverflowError("density exponent beyond 700; gamma too large for the grid");
    return d;
}

inline GirsanovData build_girsanov(const HurstModel& model, const GridFunction& gamma, const PathMatrix& W) {
    return build_girsanov(KStarOperator(model, W.grid()), gamma, W);
}

// Shift of a Brownian path (values on the grid) at grid time t.
inline std::vector<double> shift_path(const GirsanovData& d, std::span<const double> w, double t, ShiftDirection dir) {
    if (w.size() != d.grid.size()) throw DomainError("shift_path: path has wrong length");
    const std::size_t j = d.grid.index_of(t);
    const double sign = dir == ShiftDirection::T ? 1.0 : -1.0;
    const auto& g = d.kstar_cache[j];
    std::vector<double> out(w.begin(), w.end());
    double drift = 0.0;
    for (std::size_t k = 0; k < d.grid.n_steps(); ++k) {
        if (k < j) drift += g[k] * d.grid.dt();
        out[k + 1] = w[k + 1] + sign * drift;
    }
    return out;
}

// I_t evaluated on an arbitrary Brownian path.
inline double girsanov_exponent(const GirsanovData& d, std::span<const double> w, double t) {
    if (w.size() != d.grid.size()) throw DomainError("girsanov_exponent: path has wrong length");
    return detail::shift_exponent(d.kstar_cache[d.grid.index_of(t)], w);
}

inline double density_at(const GirsanovData& d, std::span<const double> w, double t) {
    const std::size_t j = d.grid.index_of(t);
    return detail::checked_exp(girsanov_exponent(d, w, t) - 0.5 * d.compensator[j]);
}

inline double density_inv_T_at(const GirsanovData& d, std::span<const double> w, double t) {
    const std::size_t j = d.grid.index_of(t);
    return detail::checked_exp(-girsanov_exponent(d, w, t) - 0.5 * d.compensator[j]);
}

}  // namespace mfbm
