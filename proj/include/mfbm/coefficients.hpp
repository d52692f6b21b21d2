#pragma once

// Coefficient maps of the form w(mu, x, u) = W(x, u, m) with m_l = E_mu[phi_l(y, v)].
// The Lions derivative is then sum_l dW/dm_l * grad phi_l(y, v), so every
// independent-copy average reduces to O(M k) work.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace mfbm {

struct PairStatistic {
    std::function<double(double, double)> value;
    std::function<double(double, double)> d_state;
    std::function<double(double, double)> d_control;
};

struct MeanFieldMap {
    std::vector<PairStatistic> stats;
    std::function<double(double, double, const double*)> value;
    std::function<double(double, double, const double*)> d_x;
    std::function<double(double, double, const double*)> d_u;
    std::function<void(double, double, const double*, double*)> d_m;

    std::size_t n_stats() const noexcept { return stats.size(); }

    static MeanFieldMap zero() {
        MeanFieldMap w;
        w.value = w.d_x = w.d_u = [](double, double, const double*) { return 0.0; };
        w.d_m = [](double, double, const double*, double*) {};
        return w;
    }

    static MeanFieldMap constant(double c) {
        MeanFieldMap w = zero();
        w.value = [c](double, double, const double*) { return c; };
        return w;
    }

    // Moments of the empirical law of (xs, us); us may be empty (taken as 0).
    std::vector<double> moments(std::span<const double> xs, std::span<const double> us) const {
        std::vector<double> m(stats.size(), 0.0);
        if (stats.empty()) return m;
        const std::size_t M = xs.size();
        for (std::size_t l = 0; l < stats.size(); ++l) {
            double s = 0.0;
            for (std::size_t i = 0; i < M; ++i) s += stats[l].value(xs[i], us.empty() ? 0.0 : us[i]);
            m[l] = s / static_cast<double>(M);
        }
        return m;
    }

    // Self-normalized weighted moments.
    std::vector<double> moments(std::span<const double> xs, std::span<const double> us,
                                std::span<const double> weights) const {
        std::vector<double> m(stats.size(), 0.0);
        if (stats.empty()) return m;
        double wsum = 0.0;
        for (double w : weights) wsum += w;
        for (std::size_t l = 0; l < stats.size(); ++l) {
            double s = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) s += weights[i] * stats[l].value(xs[i], us.empty() ? 0.0 : us[i]);
            m[l] = s / wsum;
        }
        return m;
    }

    std::vector<double> grad_m(double x, double u, const std::vector<double>& m) const {
        std::vector<double> g(stats.size(), 0.0);
        if (!stats.empty()) d_m(x, u, m.data(), g.data());
        return g;
    }

    // Lions derivative of w(., x, u) at the point (y, v): components along state and control.
    void lions(double x, double u, const std::vector<double>& m, double y, double v, double& dy, double& dv) const {
        dy = dv = 0.0;
        if (stats.empty()) return;
        auto g = grad_m(x, u, m);
        for (std::size_t l = 0; l < stats.size(); ++l) {
            dy += g[l] * stats[l].d_state(y, v);
            dv += g[l] * stats[l].d_control(y, v);
        }
    }
};

enum class AssumptionSet { H1, H1prime, H2_H6, H2_H5_H7 };

inline const char* assumption_set_name(AssumptionSet a) {
    switch (a) {
        case AssumptionSet::H1: return "H1";
        case AssumptionSet::H1prime: return "H1'";
        case AssumptionSet::H2_H6: return "H2-H6";
        case AssumptionSet::H2_H5_H7: return "H2-H5+H7";
    }
    return "?";
}

// Open control box (lo, hi).
struct ControlBox {
    double lo = -10.0;
    double hi = 10.0;

    bool interior(double u, double margin = 1e-9) const { return u > lo + margin && u < hi - margin; }
};

struct DeclaredConstants {
    double lipschitz = 1.0;   // C in the Lipschitz, growth and bound clauses
    double convexity = 0.0;   // strict convexity modulus lambda in (mu, u)
};

// Region sampled by the assumption validator.
struct ProbeDomain {
    double state_radius = 3.0;
    double adjoint_max = 2.0;
    std::size_t cloud_size = 16;
};

// sigma depends on the law of the state only; g is evaluated as g(x, 0, m) with
// statistics of the terminal state.
struct CoefficientSet {
    std::string name;
    MeanFieldMap sigma = MeanFieldMap::zero();
    MeanFieldMap drift = MeanFieldMap::zero();
    MeanFieldMap running = MeanFieldMap::zero();
    MeanFieldMap terminal = MeanFieldMap::zero();
    DeclaredConstants constants;
    bool sigma_constant = true;
    AssumptionSet assumptions = AssumptionSet::H2_H6;
    ControlBox box;
    ProbeDomain probe;
};

}  // namespace mfbm
