#pragma once

// One parametric family covers every preset and the inline-config route:
//   b     = b_x x + b_u u + b_uu u^2/2 + b_xx x^2 + b_mean E[y] + b_musq E[v^2]/2
//   sigma = s0 + s_tanh tanh(E[y])
//   f     = f_xx x^2/2 + f_x x + f_uu u^2/2 + f_u u + f_mean E[y] + f_musq E[v^2]/2 + f_const
//   g     = g_xx x^2/2 + g_x x + g_softplus log(1 + e^x) + g_mean E[y] + g_const
// with (y, v) the state/control coordinates of the law.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"

namespace mfbm {

inline const std::vector<std::string>& family_parameter_names() {
    static const std::vector<std::string> names = {
        "b_x",  "b_u", "b_uu", "b_xx", "b_mean", "b_musq", "s0",     "s_tanh", "f_xx",       "f_x",    "f_uu",
        "f_u",  "f_mean", "f_musq", "f_const", "g_xx", "g_x",  "g_softplus", "g_mean", "g_const"};
    return names;
}

struct FamilySpec {
    std::map<std::string, double> params;
    ControlBox box;
    DeclaredConstants constants;
    AssumptionSet assumptions = AssumptionSet::H2_H6;
    ProbeDomain probe;
};

namespace detail {

inline PairStatistic stat_mean_state() {
    return {[](double y, double) { return y; }, [](double, double) { return 1.0; }, [](double, double) { return 0.0; }};
}
inline PairStatistic stat_control_sq() {
    return {[](double, double v) { return v * v; }, [](double, double) { return 0.0; },
            [](double, double v) { return 2.0 * v; }};
}

inline double softplus(double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

inline CoefficientSet make_family(const std::string& name, const FamilySpec& spec) {
    std::map<std::string, double> p;
    for (const auto& k : family_parameter_names()) p[k] = 0.0;
    std::vector<std::string> unknown;
    for (const auto& [k, v] : spec.params) {
        if (!p.count(k)) unknown.push_back("coefficients." + k + ": unknown parameter");
        else if (!std::isfinite(v)) unknown.push_back("coefficients." + k + ": must be finite");
        else p[k] = v;
    }
    if (!unknown.empty()) throw ConfigError(unknown);
    if (!(spec.box.lo < spec.box.hi)) throw ConfigError({"control_box: lo must be below hi"});

    CoefficientSet c;
    c.name = name;
    c.box = spec.box;
    c.constants = spec.constants;
    c.assumptions = spec.assumptions;
    c.probe = spec.probe;

    const double bx = p["b_x"], bu = p["b_u"], buu = p["b_uu"], bxx = p["b_xx"], bm = p["b_mean"], bq = p["b_musq"];
    c.drift.stats = {detail::stat_mean_state(), detail::stat_control_sq()};
    c.drift.value = [=](double x, double u, const double* m) {
        return bx * x + bu * u + 0.5 * buu * u * u + bxx * x * x + bm * m[0] + 0.5 * bq * m[1];
    };
    c.drift.d_x = [=](double x, double, const double*) { return bx + 2.0 * bxx * x; };
    c.drift.d_u = [=](double, double u, const double*) { return bu + buu * u; };
    c.drift.d_m = [=](double, double, const double*, double* g) {
        g[0] = bm;
        g[1] = 0.5 * bq;
    };

    const double s0 = p["s0"], st = p["s_tanh"];
    c.sigma.stats = {detail::stat_mean_state()};
    c.sigma.value = [=](double, double, const double* m) { return s0 + st * std::tanh(m[0]); };
    c.sigma.d_x = c.sigma.d_u = [](double, double, const double*) { return 0.0; };
    c.sigma.d_m = [=](double, double, const double* m, double* g) {
        double th = std::tanh(m[0]);
        g[0] = st * (1.0 - th * th);
    };
    c.sigma_constant = st == 0.0;

    const double fxx = p["f_xx"], fx = p["f_x"], fuu = p["f_uu"], fu = p["f_u"], fm = p["f_mean"], fq = p["f_musq"],
                 fc = p["f_const"];
    c.running.stats = {detail::stat_mean_state(), detail::stat_control_sq()};
    c.running.value = [=](double x, double u, const double* m) {
        return 0.5 * fxx * x * x + fx * x + 0.5 * fuu * u * u + fu * u + fm * m[0] + 0.5 * fq * m[1] + fc;
    };
    c.running.d_x = [=](double x, double, const double*) { return fxx * x + fx; };
    c.running.d_u = [=](double, double u, const double*) { return fuu * u + fu; };
    c.running.d_m = [=](double, double, const double*, double* g) {
        g[0] = fm;
        g[1] = 0.5 * fq;
    };

    const double gxx = p["g_xx"], gx = p["g_x"], gs = p["g_softplus"], gm = p["g_mean"], gc = p["g_const"];
    c.terminal.stats = {detail::stat_mean_state()};
    c.terminal.value = [=](double x, double, const double* m) {
        return 0.5 * gxx * x * x + gx * x + gs * detail::softplus(x) + gm * m[0] + gc;
    };
    c.terminal.d_x = [=](double x, double, const double*) { return gxx * x + gx + gs * detail::logistic(x); };
    c.terminal.d_u = [](double, double, const double*) { return 0.0; };
    c.terminal.d_m = [=](double, double, const double*, double* g) { g[0] = gm; };
    return c;
}

struct PresetInfo {
    std::string name;
    std::string description;
    FamilySpec spec;
};

inline const std::vector<PresetInfo>& preset_table() {
    static const std::vector<PresetInfo> table = [] {
        std::vector<PresetInfo> t;
        {
            FamilySpec s;
            s.params = {{"b_x", 0.5}, {"b_u", 1.0}, {"b_uu", 0.5}, {"b_mean", 0.2}, {"b_musq", 0.2}, {"s0", 0.3},
                        {"f_uu", 1.0}, {"f_musq", 0.5}, {"g_x", 1.0}};
            s.box = {-2.0, 2.0};
            s.constants = {3.0, 0.1};
            s.assumptions = AssumptionSet::H2_H5_H7;
            t.push_back({"lq_basic", "convex drift and cost quadratic in the control, linear terminal cost", s});
        }
        {
            FamilySpec s;
            s.params = {{"b_x", 0.5}, {"b_u", 1.0}, {"b_mean", 0.2}, {"s0", 0.3}, {"f_xx", 1.0}, {"f_uu", 1.0},
                        {"g_xx", 1.0}};
            s.box = {-5.0, 5.0};
            s.constants = {8.0, 0.5};
            s.assumptions = AssumptionSet::H2_H6;
            t.push_back({"lq_meanfield", "linear mean-field drift, quadratic state and control costs", s});
        }
        {
            FamilySpec s;
            s.params = {{"b_x", 0.5}, {"b_mean", 0.5}, {"s0", 0.2}, {"s_tanh", 0.2}};
            s.box = {-1.0, 1.0};
            s.constants = {1.0, 0.0};
            s.assumptions = AssumptionSet::H1;
            t.push_back({"tanh_drift", "Lipschitz semilinear test problem with law-dependent diffusion", s});
        }
        {
            FamilySpec s;
            s.params = {{"b_xx", 1.0}, {"s0", 0.3}, {"f_uu", 1.0}, {"g_x", 1.0}};
            s.box = {-2.0, 2.0};
            s.constants = {2.0, 0.5};
            s.assumptions = AssumptionSet::H2_H6;
            t.push_back({"nonlipschitz_demo", "drift quadratic in the state (not Lipschitz)", s});
        }
        {
            FamilySpec s;
            s.params = {{"b_x", 0.5}, {"b_u", 1.0}, {"s0", 0.3}, {"f_uu", 1.0}, {"g_xx", -1.0}};
            s.box = {-2.0, 2.0};
            s.constants = {4.0, 0.5};
            s.assumptions = AssumptionSet::H2_H6;
            t.push_back({"concave_demo", "concave terminal cost", s});
        }
        {
            FamilySpec s;
            s.params = {{"b_x", 0.3}, {"b_u", 1.0}, {"b_uu", 0.5}, {"b_mean", 0.3}, {"b_musq", 0.2}, {"s0", 0.5},
                        {"f_uu", 1.0}, {"f_musq", 0.5}, {"g_softplus", 1.0}, {"g_mean", 0.2}};
            s.box = {-2.0, 2.0};
            s.constants = {3.0, 0.1};
            s.assumptions = AssumptionSet::H2_H5_H7;
            t.push_back({"softplus_terminal", "convex drift, softplus terminal cost (state-dependent adjoint)", s});
        }
        {
            FamilySpec s;
            s.box = {-1.0, 1.0};
            s.constants = {1.0, 0.0};
            s.assumptions = AssumptionSet::H1prime;
            t.push_back({"zero", "no drift, no noise, no cost", s});
        }
        return t;
    }();
    return table;
}

inline const PresetInfo& preset_info(const std::string& name) {
    for (const auto& p : preset_table())
        if (p.name == name) return p;
    throw ConfigError({"preset: unknown name '" + name + "'"});
}

inline CoefficientSet make_preset(const std::string& name) {
    const auto& info = preset_info(name);
    return make_family(info.name, info.spec);
}

}  // namespace mfbm
