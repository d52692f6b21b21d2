#pragma once

// Config-driven experiment runner behind mfbm_cli.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfbm/control.hpp"
#include "mfbm/presets.hpp"

namespace mfbm::cli {

using nlohmann::json;

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k{"forward", "picard", "fbsde", "gateaux", "residual-sweep", "validate"};
    return k;
}

struct CoefficientConfig {
    std::string preset;  // empty when fully inline
    FamilySpec spec;
};

struct ExperimentConfig {
    std::string experiment;
    double hurst = 0.75;
    double horizon = 1.0;
    std::size_t n_steps = 64;
    std::size_t n_particles = 1024;
    std::uint64_t seed = 1;
    double x0 = 0.0;
    NoiseMode noise_mode = NoiseMode::independent;
    CoefficientConfig coefficients;
    std::string output_dir = "mfbm_out";

    // forward
    double control = 0.0;
    // picard
    double gamma = 0.3;
    PicardOptions picard;
    // fbsde, gateaux (optimal base), residual-sweep
    FbsdeOptions fbsde;
    // gateaux
    std::string gateaux_base = "optimal";  // "optimal" or a number encoded as "value"
    double gateaux_base_value = 0.0;
    std::string gateaux_direction = "random";
    double gateaux_direction_value = 0.0;
    std::vector<double> ladder{0.1, 0.05, 0.025};
    // residual-sweep
    std::vector<double> shifts{0.0, 0.05, 0.1, 0.2};
    // validate
    std::size_t probes = 400;
};

namespace detail {

class FieldErrors {
public:
    void add(const std::string& field, const std::string& msg) { errs_.push_back(field + ": " + msg); }
    bool empty() const { return errs_.empty(); }
    [[noreturn]] void raise() const { throw ConfigError(errs_); }
    void check() const {
        if (!errs_.empty()) raise();
    }

private:
    std::vector<std::string> errs_;
};

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix,
                           FieldErrors& err) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) err.add(prefix + it.key(), "unknown key");
}

template <class T>
void read_number(const json& obj, const std::string& key, const std::string& path, T& out, FieldErrors& err) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0))
            return err.add(path, "expected a non-negative integer");
        out = v.get<T>();
    } else {
        if (!v.is_number()) return err.add(path, "expected a number");
        out = v.get<T>();
        if (!std::isfinite(static_cast<double>(out))) err.add(path, "must be finite");
    }
}

inline void read_string(const json& obj, const std::string& key, const std::string& path, std::string& out,
                        FieldErrors& err) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) return err.add(path, "expected a string");
    out = obj.at(key).get<std::string>();
}

inline std::optional<AssumptionSet> parse_assumption_set(const std::string& s) {
    for (auto a : {AssumptionSet::H1, AssumptionSet::H1prime, AssumptionSet::H2_H6, AssumptionSet::H2_H5_H7})
        if (s == assumption_set_name(a)) return a;
    return std::nullopt;
}

inline void read_coefficients(const json& j, CoefficientConfig& cc, FieldErrors& err) {
    if (!j.is_object()) return err.add("coefficients", "expected an object");
    reject_unknown(j, {"preset", "params", "box", "lipschitz", "convexity", "assumption_set"}, "coefficients.", err);
    read_string(j, "preset", "coefficients.preset", cc.preset, err);
    if (!cc.preset.empty()) {
        try {
            cc.spec = preset_info(cc.preset).spec;
        } catch (const ConfigError&) {
            err.add("coefficients.preset", "unknown preset '" + cc.preset + "'");
        }
    } else if (!j.contains("params")) {
        err.add("coefficients", "needs either 'preset' or 'params'");
    }
    if (j.contains("params")) {
        const json& p = j.at("params");
        if (!p.is_object()) {
            err.add("coefficients.params", "expected an object");
        } else {
            const auto& names = family_parameter_names();
            for (auto it = p.begin(); it != p.end(); ++it) {
                const std::string path = "coefficients.params." + it.key();
                if (std::find(names.begin(), names.end(), it.key()) == names.end()) {
                    err.add(path, "unknown parameter");
                } else if (!it->is_number() || !std::isfinite(it->get<double>())) {
                    err.add(path, "expected a finite number");
                } else {
                    cc.spec.params[it.key()] = it->get<double>();
                }
            }
        }
    }
    if (j.contains("box")) {
        const json& b = j.at("box");
        if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
            err.add("coefficients.box", "expected [lo, hi]");
        else
            cc.spec.box = {b[0].get<double>(), b[1].get<double>()};
    }
    if (!(cc.spec.box.lo < cc.spec.box.hi)) err.add("coefficients.box", "needs lo < hi");
    read_number(j, "lipschitz", "coefficients.lipschitz", cc.spec.constants.lipschitz, err);
    read_number(j, "convexity", "coefficients.convexity", cc.spec.constants.convexity, err);
    if (j.contains("assumption_set")) {
        std::string s;
        read_string(j, "assumption_set", "coefficients.assumption_set", s, err);
        if (auto a = parse_assumption_set(s))
            cc.spec.assumptions = *a;
        else if (!s.empty())
            err.add("coefficients.assumption_set", "expected one of H1, H1', H2-H6, H2-H5+H7");
    }
}

inline void read_fbsde(const json& s, const std::string& sec, FbsdeOptions& o, FieldErrors& err) {
    read_number(s, "tolerance", sec + ".tolerance", o.tol, err);
    read_number(s, "max_iterations", sec + ".max_iterations", o.max_iter, err);
    read_number(s, "initial_adjoint", sec + ".initial_adjoint", o.initial_adjoint, err);
    read_number(s, "eta_tolerance", sec + ".eta_tolerance", o.eta.tol, err);
    read_number(s, "eta_max_iterations", sec + ".eta_max_iterations", o.eta.max_iter, err);
    if (s.contains("features")) {
        std::string f;
        read_string(s, "features", sec + ".features", f, err);
        if (f == "quadratic")
            o.adjoint.features = FeatureSet::quadratic;
        else if (f == "lagged")
            o.adjoint.features = FeatureSet::lagged;
        else
            err.add(sec + ".features", "expected 'quadratic' or 'lagged'");
    }
    if (!(o.tol > 0)) err.add(sec + ".tolerance", "must be positive");
    if (o.max_iter < 1) err.add(sec + ".max_iterations", "must be at least 1");
}

inline std::vector<double> read_list(const json& s, const std::string& key, const std::string& path,
                                     std::vector<double> fallback, FieldErrors& err) {
    if (!s.contains(key)) return fallback;
    const json& a = s.at(key);
    if (!a.is_array() || a.empty()) {
        err.add(path, "expected a non-empty array of numbers");
        return fallback;
    }
    std::vector<double> out;
    for (const auto& v : a) {
        if (!v.is_number()) {
            err.add(path, "expected a non-empty array of numbers");
            return fallback;
        }
        out.push_back(v.get<double>());
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    detail::FieldErrors err;
    ExperimentConfig c;
    if (!j.is_object()) {
        err.add("<root>", "expected an object");
        err.raise();
    }
    std::set<std::string> allowed{"experiment", "hurst",       "horizon",      "n_steps", "n_particles",
                                  "seed",       "x0",          "noise_mode",   "coefficients", "output_dir"};
    for (const auto& k : experiment_kinds()) allowed.insert(k);
    detail::reject_unknown(j, allowed, "", err);

    if (!j.contains("experiment")) err.add("experiment", "missing");
    detail::read_string(j, "experiment", "experiment", c.experiment, err);
    const auto& kinds = experiment_kinds();
    if (j.contains("experiment") && std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end())
        err.add("experiment", "expected one of forward, picard, fbsde, gateaux, residual-sweep, validate");
    for (const auto& k : kinds)
        if (j.contains(k) && k != c.experiment) err.add(k, "section does not belong to experiment '" + c.experiment + "'");

    detail::read_number(j, "hurst", "hurst", c.hurst, err);
    detail::read_number(j, "horizon", "horizon", c.horizon, err);
    detail::read_number(j, "n_steps", "n_steps", c.n_steps, err);
    detail::read_number(j, "n_particles", "n_particles", c.n_particles, err);
    detail::read_number(j, "seed", "seed", c.seed, err);
    detail::read_number(j, "x0", "x0", c.x0, err);
    detail::read_string(j, "output_dir", "output_dir", c.output_dir, err);
    if (j.contains("noise_mode")) {
        std::string m;
        detail::read_string(j, "noise_mode", "noise_mode", m, err);
        if (m == "independent")
            c.noise_mode = NoiseMode::independent;
        else if (m == "coupled")
            c.noise_mode = NoiseMode::coupled;
        else
            err.add("noise_mode", "expected 'independent' or 'coupled'");
    }
    if (!(c.hurst > 0.5 && c.hurst < 1.0)) err.add("hurst", "must lie in (0.5, 1)");
    if (!(c.horizon > 0)) err.add("horizon", "must be positive");
    if (c.n_steps < 1) err.add("n_steps", "must be at least 1");
    if (c.n_particles < 2) err.add("n_particles", "must be at least 2");
    if (!j.contains("coefficients"))
        err.add("coefficients", "missing");
    else
        detail::read_coefficients(j.at("coefficients"), c.coefficients, err);

    json sec = j.contains(c.experiment) ? j.at(c.experiment) : json::object();
    const std::string s = c.experiment;
    if (!sec.is_object()) {
        err.add(s, "expected an object");
        sec = json::object();
    }
    if (s == "forward") {
        detail::reject_unknown(sec, {"control"}, s + ".", err);
        detail::read_number(sec, "control", s + ".control", c.control, err);
    } else if (s == "picard") {
        detail::reject_unknown(sec, {"gamma", "tolerance", "max_iterations"}, s + ".", err);
        detail::read_number(sec, "gamma", s + ".gamma", c.gamma, err);
        detail::read_number(sec, "tolerance", s + ".tolerance", c.picard.tol, err);
        detail::read_number(sec, "max_iterations", s + ".max_iterations", c.picard.max_iter, err);
        if (!(c.picard.tol > 0)) err.add(s + ".tolerance", "must be positive");
    } else if (s == "fbsde") {
        detail::reject_unknown(sec,
                               {"tolerance", "max_iterations", "initial_adjoint", "eta_tolerance", "eta_max_iterations",
                                "features"},
                               s + ".", err);
        detail::read_fbsde(sec, s, c.fbsde, err);
    } else if (s == "gateaux") {
        detail::reject_unknown(sec,
                               {"base", "direction", "ladder", "tolerance", "max_iterations", "initial_adjoint",
                                "eta_tolerance", "eta_max_iterations", "features"},
                               s + ".", err);
        detail::read_fbsde(sec, s, c.fbsde, err);
        if (sec.contains("base")) {
            if (sec["base"].is_number())
                c.gateaux_base = "value", c.gateaux_base_value = sec["base"].get<double>();
            else if (sec["base"] == "optimal")
                c.gateaux_base = "optimal";
            else
                err.add(s + ".base", "expected 'optimal' or a constant control value");
        }
        if (sec.contains("direction")) {
            if (sec["direction"].is_number())
                c.gateaux_direction = "value", c.gateaux_direction_value = sec["direction"].get<double>();
            else if (sec["direction"] == "random")
                c.gateaux_direction = "random";
            else
                err.add(s + ".direction", "expected 'random' or a constant control value");
        }
        c.ladder = detail::read_list(sec, "ladder", s + ".ladder", c.ladder, err);
        if (c.ladder.size() < 2) err.add(s + ".ladder", "needs at least two entries");
        for (double e : c.ladder)
            if (!(e > 0 && e <= 1)) err.add(s + ".ladder", "entries must lie in (0, 1]");
    } else if (s == "residual-sweep") {
        detail::reject_unknown(sec,
                               {"shifts", "tolerance", "max_iterations", "initial_adjoint", "eta_tolerance",
                                "eta_max_iterations", "features"},
                               s + ".", err);
        detail::read_fbsde(sec, s, c.fbsde, err);
        c.shifts = detail::read_list(sec, "shifts", s + ".shifts", c.shifts, err);
    } else if (s == "validate") {
        detail::reject_unknown(sec, {"probes"}, s + ".", err);
        detail::read_number(sec, "probes", s + ".probes", c.probes, err);
        if (c.probes < 1) err.add(s + ".probes", "must be at least 1");
    }
    err.check();
    // a family with bad parameters fails here with coefficient field messages
    (void)make_family(c.coefficients.preset.empty() ? "inline" : c.coefficients.preset, c.coefficients.spec);
    return c;
}

inline json resolved(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["hurst"] = c.hurst;
    j["horizon"] = c.horizon;
    j["n_steps"] = c.n_steps;
    j["n_particles"] = c.n_particles;
    j["seed"] = c.seed;
    j["x0"] = c.x0;
    j["noise_mode"] = c.noise_mode == NoiseMode::independent ? "independent" : "coupled";
    j["output_dir"] = c.output_dir;
    json co;
    if (!c.coefficients.preset.empty()) co["preset"] = c.coefficients.preset;
    co["params"] = json::object();
    for (const auto& [k, v] : c.coefficients.spec.params) co["params"][k] = v;
    co["box"] = {c.coefficients.spec.box.lo, c.coefficients.spec.box.hi};
    co["lipschitz"] = c.coefficients.spec.constants.lipschitz;
    co["convexity"] = c.coefficients.spec.constants.convexity;
    co["assumption_set"] = assumption_set_name(c.coefficients.spec.assumptions);
    j["coefficients"] = co;
    auto fb = [&](json& s) {
        s["tolerance"] = c.fbsde.tol;
        s["max_iterations"] = c.fbsde.max_iter;
        s["initial_adjoint"] = c.fbsde.initial_adjoint;
        s["eta_tolerance"] = c.fbsde.eta.tol;
        s["eta_max_iterations"] = c.fbsde.eta.max_iter;
        s["features"] = feature_set_name(c.fbsde.adjoint.features);
    };
    json s = json::object();
    if (c.experiment == "forward") {
        s["control"] = c.control;
    } else if (c.experiment == "picard") {
        s["gamma"] = c.gamma;
        s["tolerance"] = c.picard.tol;
        s["max_iterations"] = c.picard.max_iter;
    } else if (c.experiment == "fbsde") {
        fb(s);
    } else if (c.experiment == "gateaux") {
        fb(s);
        s["base"] = c.gateaux_base == "optimal" ? json("optimal") : json(c.gateaux_base_value);
        s["direction"] = c.gateaux_direction == "random" ? json("random") : json(c.gateaux_direction_value);
        s["ladder"] = c.ladder;
    } else if (c.experiment == "residual-sweep") {
        fb(s);
        s["shifts"] = c.shifts;
    } else if (c.experiment == "validate") {
        s["probes"] = c.probes;
    }
    j[c.experiment] = s;
    return j;
}

// Curvature of the running cost in the agent's own control, used to normalize residual norms.
inline double control_cost_curvature(const FamilySpec& s) {
    auto it = s.params.find("f_uu");
    return it != s.params.end() && it->second > 0 ? it->second : 1.0;
}

class Summary {
public:
    template <class T>
    void add(const std::string& key, const T& v) {
        std::ostringstream os;
        os.precision(12);
        os << v;
        lines_.push_back(key + ": " + os.str());
    }
    void check(const std::string& name, bool ok) { lines_.push_back("check " + name + ": " + (ok ? "PASS" : "FAIL")); }
    std::string str() const {
        std::string out;
        for (const auto& l : lines_) out += l + "\n";
        return out;
    }

private:
    std::vector<std::string> lines_;
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << s;
}

template <class Fn>
std::string to_string(Fn&& fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

inline std::string list_csv(const std::string& header, const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << header << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
    return os.str();
}

inline PathMatrix random_control(const TimeGrid& g, std::size_t M, const ControlBox& box, std::uint64_t seed) {
    PathMatrix u(g, M, PathLabel::u);
    const double w = box.hi - box.lo;
    for (std::size_t i = 0; i < M; ++i) {
        auto rng = path_rng(seed, i, stream::perturbation);
        std::uniform_real_distribution<double> U(box.lo + 0.05 * w, box.hi - 0.05 * w);
        for (std::size_t k = 0; k < g.size(); ++k) u(i, k) = U(rng);
    }
    return u;
}

}  // namespace detail

// Runs the experiment and writes manifest.json, CSVs and summary.txt into the output directory.
// Returns the summary text.
inline std::string run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path out(cfg.output_dir);
    fs::create_directories(out);
    json manifest;
    manifest["library_version"] = MFBM_VERSION;
    manifest["config"] = resolved(cfg);
    detail::write_file(out / "manifest.json", manifest.dump(2) + "\n");

    const CoefficientSet coeffs =
        make_family(cfg.coefficients.preset.empty() ? "inline" : cfg.coefficients.preset, cfg.coefficients.spec);
    const TimeGrid grid(cfg.horizon, cfg.n_steps);
    const HurstModel model(cfg.hurst);
    const std::size_t M = cfg.n_particles, n = cfg.n_steps;
    Summary sum;
    sum.add("experiment", cfg.experiment);
    sum.add("coefficients", coeffs.name);

    auto noise = [&] { return make_noise(model, grid, M, cfg.seed, cfg.noise_mode); };
    const std::vector<double> xi(M, cfg.x0);
    const double curvature = control_cost_curvature(cfg.coefficients.spec);

    if (cfg.experiment == "forward") {
        auto e = solve_forward(coeffs, ControlPolicy::constant(cfg.control), cfg.x0, noise());
        auto m = ensemble_mean(e, n);
        auto J = evaluate_cost(coeffs, e);
        detail::write_file(out / "paths.csv", detail::to_string([&](std::ostream& os) { write_ensemble_csv(os, e); }));
        sum.add("X_T mean", m.mean);
        sum.add("X_T mean se", m.se);
        sum.add("J", J.J);
        sum.add("J se", J.se);
    } else if (cfg.experiment == "picard") {
        auto nz = noise();
        auto r = picard_solve(coeffs, model, GridFunction(grid.size(), cfg.gamma), nz.W, xi, nullptr, cfg.picard);
        auto m = ensemble_mean(r.ensemble, n);
        std::vector<std::vector<double>> rows;
        auto ratios = r.diagnostics.ratios();
        for (std::size_t i = 0; i < r.diagnostics.diffs.size(); ++i)
            rows.push_back({double(i + 1), r.diagnostics.diffs[i], i ? ratios[i - 1] : std::nan("")});
        detail::write_file(out / "picard_diffs.csv", detail::list_csv("iteration,diff,ratio", rows));
        detail::write_file(out / "paths.csv",
                           detail::to_string([&](std::ostream& os) { write_ensemble_csv(os, r.ensemble); }));
        sum.add("iterations", r.diagnostics.n_iterations);
        sum.add("converged", r.diagnostics.converged ? "true" : "false");
        sum.add("final diff", r.diagnostics.diffs.back());
        sum.add("X_T weighted mean", m.mean);
        sum.add("X_T weighted mean se", m.se);
        bool fast = true;
        for (std::size_t i = 2; i < ratios.size(); ++i) fast = fast && ratios[i] <= 0.5;
        sum.check("contraction ratio <= 0.5 after warm-up", fast);
    } else if (cfg.experiment == "fbsde" || cfg.experiment == "residual-sweep" ||
               (cfg.experiment == "gateaux" && cfg.gateaux_base == "optimal")) {
        auto nz = noise();
        auto s = solve_coupled_fbsde(coeffs, xi, nz, cfg.fbsde);
        auto J = evaluate_cost(coeffs, s.forward);
        auto res = optimality_residual(s.forward, s.control, s.adjoint, coeffs);
        if (cfg.experiment == "fbsde") {
            detail::write_file(out / "fixed_point.csv",
                               detail::to_string([&](std::ostream& os) { write_fixed_point_csv(os, s.report); }));
            detail::write_file(out / "paths.csv",
                               detail::to_string([&](std::ostream& os) { write_ensemble_csv(os, s.forward); }));
            auto adj = s.adjoint.P;
            detail::write_file(out / "adjoint.csv", detail::to_string([&](std::ostream& os) { write_paths_csv(os, adj); }));
            sum.add("converged", s.report.converged ? "true" : "false");
            sum.add("iterations", s.report.n_iterations);
            double worst = 0.0;
            for (double r : s.report.contraction_ratios) worst = std::max(worst, r);
            sum.add("max contraction ratio", worst);
            sum.add("J", J.J);
            sum.add("J se", J.se);
            sum.add("residual l2", res.l2_norm);
            sum.add("residual l2 / curvature", res.l2_norm / curvature);
            sum.check("converged with contraction ratios < 1", s.report.converged && worst < 1.0);
            sum.check("residual within 10 x tolerance", res.l2_norm <= 10 * cfg.fbsde.tol);
        } else if (cfg.experiment == "residual-sweep") {
            std::vector<std::vector<double>> rows;
            for (double shift : cfg.shifts) {
                PathMatrix u = s.control;
                for (auto& v : u.data()) v += shift;
                check_admissible(coeffs.box, u.data(), 0);
                auto r = optimality_residual(s.forward, u, s.adjoint, coeffs);
                auto Jshift = evaluate_cost(coeffs, solve_forward(coeffs, ControlPolicy::open_loop(u), xi, nz));
                auto d = paired_difference(Jshift.per_path, J.per_path);
                rows.push_back({shift, r.l2_norm, r.l2_norm / curvature, Jshift.J, Jshift.se, d.mean, d.se});
            }
            detail::write_file(out / "residual_sweep.csv",
                               detail::list_csv("shift,l2_norm,l2_norm_over_curvature,J,J_se,J_minus_J_star,diff_se", rows));
            sum.add("converged", s.report.converged ? "true" : "false");
            sum.add("J star", J.J);
            sum.add("residual l2 at u star", res.l2_norm);
            bool ok = true;
            for (const auto& r : rows) ok = ok && r[5] >= -3 * r[6];
            sum.check("J(u* + shift) >= J(u*) - 3 se", ok);
        } else {
            auto u = cfg.gateaux_direction == "random"
                         ? detail::random_control(grid, M, coeffs.box, cfg.seed)
                         : PathMatrix(grid, M, PathLabel::u, cfg.gateaux_direction_value);
            auto g = gateaux_check(coeffs, s.control, u, xi, nz, cfg.ladder);
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < g.eps.size(); ++i) rows.push_back({g.eps[i], g.fd_slopes[i], g.fd_se[i]});
            detail::write_file(out / "gateaux.csv", detail::list_csv("epsilon,fd_slope,fd_se", rows));
            sum.add("base", "optimal");
            sum.add("fixed point converged", s.report.converged ? "true" : "false");
            sum.add("extrapolated slope", g.extrapolated);
            sum.add("extrapolated se", g.extrapolated_se);
            sum.add("formula", g.formula);
            sum.add("formula se", g.formula_se);
            sum.check("finite differences agree with formula", g.agree);
            sum.check("formula >= -3 se at the optimum", g.formula >= -3 * g.formula_se);
        }
    } else if (cfg.experiment == "gateaux") {
        auto nz = noise();
        PathMatrix ustar(grid, M, PathLabel::u, cfg.gateaux_base_value);
        auto u = cfg.gateaux_direction == "random" ? detail::random_control(grid, M, coeffs.box, cfg.seed)
                                                   : PathMatrix(grid, M, PathLabel::u, cfg.gateaux_direction_value);
        auto g = gateaux_check(coeffs, ustar, u, xi, nz, cfg.ladder);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < g.eps.size(); ++i) rows.push_back({g.eps[i], g.fd_slopes[i], g.fd_se[i]});
        detail::write_file(out / "gateaux.csv", detail::list_csv("epsilon,fd_slope,fd_se", rows));
        sum.add("base", cfg.gateaux_base_value);
        sum.add("extrapolated slope", g.extrapolated);
        sum.add("extrapolated se", g.extrapolated_se);
        sum.add("formula", g.formula);
        sum.add("formula se", g.formula_se);
        sum.check("finite differences agree with formula", g.agree);
    } else if (cfg.experiment == "validate") {
        auto r = validate_assumptions(coeffs, cfg.probes, cfg.seed);
        detail::write_file(out / "assumptions.csv",
                           detail::to_string([&](std::ostream& os) { write_assumption_csv(os, r); }));
        sum.add("assumption set", assumption_set_name(coeffs.assumptions));
        std::size_t fails = 0;
        for (const auto& row : r.rows)
            if (!row.pass) {
                ++fails;
                sum.add("FAIL " + row.clause, row.quantity + " (estimate " + std::to_string(row.estimate) +
                                                   ", declared " + std::to_string(row.declared) +
                                                   (row.required ? ", required)" : ", not required)"));
            }
        sum.add("failing rows", fails);
        sum.check("all required clauses", r.all_required_pass);
    }
    const std::string text = sum.str();
    detail::write_file(out / "summary.txt", text);
    return text;
}

inline std::string preset_listing() {
    std::ostringstream os;
    os << "name                 assumption_set  box            C      lambda  description\n";
    for (const auto& p : preset_table()) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-20s %-15s [%5.2g, %5.2g]  %-6.3g %-7.3g %s\n", p.name.c_str(),
                      assumption_set_name(p.spec.assumptions), p.spec.box.lo, p.spec.box.hi,
                      p.spec.constants.lipschitz, p.spec.constants.convexity, p.description.c_str());
        os << buf;
    }
    return os.str();
}

}  // namespace mfbm::cli
