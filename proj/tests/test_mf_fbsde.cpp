#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mfbm/mf_fbsde.hpp"
#include "mfbm/presets.hpp"

using namespace mfbm;

namespace {

CoefficientSet family(std::map<std::string, double> p, ControlBox box = {-5.0, 5.0}, double lambda = 0.5) {
    FamilySpec s;
    s.params = std::move(p);
    s.box = box;
    s.constants = {3.0, lambda};
    return make_family("test", s);
}

ParticleEnsemble forward(const CoefficientSet& c, double T, std::size_t n, std::size_t M, std::uint64_t seed,
                         double u = 0.0) {
    return solve_forward(c, ControlPolicy::constant(u), 1.0, HurstModel(0.75), TimeGrid(T, n), M, seed);
}

}  // namespace

TEST(Adjoint, ConstantTerminalSlope) {
    auto c = family({{"g_x", 1.7}, {"s0", 0.3}});
    auto e = forward(c, 1.0, 32, 256, 1);
    auto a = solve_adjoint_bsde(e, c);
    for (double v : a.P.data()) EXPECT_NEAR(v, 1.7, 1e-13);
}

TEST(Adjoint, ZeroDataGivesZero) {
    auto c = family({{"s0", 0.3}, {"b_x", 0.5}});
    auto e = forward(c, 1.0, 32, 256, 1);
    auto a = solve_adjoint_bsde(e, c);
    for (double v : a.P.data()) EXPECT_EQ(v, 0.0);
    for (double v : a.beta.data()) EXPECT_EQ(v, 0.0);
}

TEST(Adjoint, LinearDriftMatchesOde) {
    const double c1 = 0.3, c2 = 0.2, K = 1.3;
    auto c = family({{"b_x", c1}, {"b_mean", c2}, {"g_x", K}, {"s0", 0.3}});
    auto e = forward(c, 1.0, 256, 512, 2);
    auto a = solve_adjoint_bsde(e, c);
    for (std::size_t k = 0; k <= 256; k += 16) {
        double exact = K * std::exp((c1 + c2) * (1.0 - e.grid.t(k)));
        for (std::size_t i = 0; i < 512; i += 51) EXPECT_LT(std::abs(a.P(i, k) / exact - 1.0), 1e-3);
    }
}

// Random terminal data: the regression recovers E[P_T | F_t] for a martingale terminal value.
TEST(Adjoint, RegressionTracksConditionalMean) {
    auto c = family({{"g_xx", 1.0}, {"s0", 0.5}});
    auto e = forward(c, 1.0, 64, 4096, 3);
    auto a = solve_adjoint_bsde(e, c);
    // P_T = X_T = 1 + 0.5 BH_T; E[X_T | F_t] = 1 + 0.5 E[BH_T | F_t] so E[P_t] = 1
    auto est = estimate(a.P.column(32));
    EXPECT_LT(std::abs(est.mean - 1.0), 5.0 * est.se + 1e-3);
    EXPECT_EQ(a.basis_rank[0], 1u);
    EXPECT_GT(a.basis_rank[32], 2u);
    EXPECT_GT(a.regression_se[32], 0.0);
}

TEST(Adjoint, RefusesNonConstantSigma) {
    auto c = make_preset("tanh_drift");
    auto e = forward(c, 1.0, 8, 64, 1);
    EXPECT_THROW(solve_adjoint_bsde(e, c), UnsupportedRegimeError);
}

TEST(Adjoint, TooFewParticles) {
    auto c = family({{"g_xx", 1.0}, {"s0", 0.5}});
    auto e = forward(c, 1.0, 8, 4, 1);
    EXPECT_THROW(solve_adjoint_bsde(e, c), BasisDegeneracyError);
}

TEST(Adjoint, LaggedFeaturesDeclared) {
    auto c = family({{"g_xx", 1.0}, {"s0", 0.5}});
    auto e = forward(c, 1.0, 16, 512, 1);
    auto a = solve_adjoint_bsde(e, c, {FeatureSet::lagged});
    EXPECT_NE(a.basis_spec.find("dBH_last"), std::string::npos);
}

TEST(Eta, LinearQuadraticClosedForm) {
    auto c = family({{"b_x", 0.7}, {"b_u", 1.3}, {"f_uu", 2.0}, {"f_xx", 1.0}});
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N;
    std::vector<double> p(200), x(200);
    for (auto& v : p) v = N(rng);
    for (auto& v : x) v = N(rng);
    auto r = solve_eta(p, x, c);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(r.u[i], -1.3 * p[i] / 2.0, 1e-10);
}

TEST(Eta, ZeroAdjointGivesCostMinimizer) {
    auto c = family({{"f_uu", 1.0}, {"f_u", -0.4}});
    std::vector<double> p(50, 0.0), x(50, 1.0);
    auto r = solve_eta(p, x, c);
    for (double v : r.u) EXPECT_NEAR(v, 0.4, 1e-10);
}

TEST(Eta, MeanFieldCouplingSolved) {
    auto c = make_preset("lq_basic");
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> U(0.5, 2.0);
    std::vector<double> p(300), x(300);
    for (auto& v : p) v = U(rng);
    for (auto& v : x) v = U(rng) - 1.0;
    auto r = solve_eta(p, x, c);
    double pbar = 0.0;
    for (double v : p) pbar += v / 300.0;
    // u (f_uu + f_musq + b_musq pbar + b_uu p) + b_u p = 0
    for (std::size_t i = 0; i < 300; ++i)
        EXPECT_NEAR(r.u[i], -p[i] / (1.5 + 0.2 * pbar + 0.5 * p[i]), 1e-10);
    auto res = stationarity_residual(c, p, x, r.u);
    for (double v : res) EXPECT_LT(std::abs(v), 1e-10);
}

TEST(Eta, LipschitzInInputs) {
    auto c = make_preset("lq_basic");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.5, 2.0);
    std::normal_distribution<double> N;
    const std::size_t M = 200;
    std::vector<double> p(M), x(M);
    for (auto& v : p) v = U(rng);
    for (auto& v : x) v = U(rng);
    auto base = solve_eta(p, x, c).u;
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        auto p2 = p, x2 = x;
        double d2 = 0.0;
        for (std::size_t i = 0; i < M; ++i) {
            double a = 0.05 * N(rng), b = 0.05 * N(rng);
            p2[i] += a, x2[i] += b;
            d2 += a * a + b * b;
        }
        auto moved = solve_eta(p2, x2, c).u;
        double du = 0.0;
        for (std::size_t i = 0; i < M; ++i) du += (moved[i] - base[i]) * (moved[i] - base[i]);
        worst = std::max(worst, std::sqrt(du / d2));
    }
    EXPECT_LE(worst, c.constants.lipschitz / c.constants.convexity);
    EXPECT_GT(worst, 0.0);
}

TEST(Eta, BoundaryPinningRejected) {
    auto c = family({{"f_uu", 1.0}, {"f_u", -3.0}}, {-1.0, 1.0});
    std::vector<double> p(10, 0.0), x(10, 0.0);
    EXPECT_THROW(solve_eta(p, x, c), InteriorViolationError);
}

TEST(Eta, NonConvergenceCarriesResidual) {
    auto c = family({{"f_uu", 1.0}, {"f_u", -0.4}});
    std::vector<double> p(10, 0.0), x(10, 0.0);
    try {
        solve_eta(p, x, c, {1e-14, 3, 0.5});
        FAIL();
    } catch (const NonConvergenceError& e) {
        EXPECT_EQ(e.trace().size(), 3u);
    }
}

TEST(Coupled, TrivialProblem) {
    auto c = family({{"b_u", 1.0}, {"f_uu", 1.0}, {"f_u", -0.3}, {"s0", 0.2}});
    TimeGrid grid(0.5, 32);
    auto noise = make_noise(HurstModel(0.7), grid, 128, 4, NoiseMode::independent);
    auto s = solve_coupled_fbsde(c, 1.0, noise);
    EXPECT_TRUE(s.report.converged);
    for (double v : s.adjoint.P.data()) EXPECT_EQ(v, 0.0);
    for (double v : s.control.data()) EXPECT_NEAR(v, 0.3, 1e-10);
    auto direct = solve_forward(c, ControlPolicy::constant(0.3), 1.0, noise);
    for (std::size_t i = 0; i < 128; ++i) EXPECT_NEAR(s.forward.X(i, 32), direct.X(i, 32), 1e-9);
}

TEST(Coupled, LqContractsAndIsUnique) {
    auto c = make_preset("lq_meanfield");
    TimeGrid grid(0.25, 32);
    auto noise = make_noise(HurstModel(0.75), grid, 1024, 5, NoiseMode::independent);
    FbsdeOptions o;
    o.tol = 1e-6;
    auto a = solve_coupled_fbsde(c, 1.0, noise, o);
    EXPECT_TRUE(a.report.converged);
    for (double r : a.report.contraction_ratios) EXPECT_LT(r, 1.0);
    o.initial_adjoint = 1.0;
    auto b = solve_coupled_fbsde(c, 1.0, noise, o);
    EXPECT_LT(sup_distance(a.forward.X, b.forward.X, a.adjoint.P, b.adjoint.P), 10 * o.tol);
    auto res = stationarity_residual(c, a.adjoint.P.column(10), a.forward.X.column(10), a.control.column(10));
    for (double v : res) EXPECT_LT(std::abs(v), 1e-4);
    std::ostringstream os;
    write_fixed_point_csv(os, a.report);
    EXPECT_EQ(os.str().substr(0, 24), "iteration,distance,ratio");
}

TEST(Coupled, SandwichOnSoftplusPreset) {
    auto c = make_preset("softplus_terminal");
    TimeGrid grid(0.5, 32);
    auto noise = make_noise(HurstModel(0.75), grid, 1024, 6, NoiseMode::independent);
    auto s = solve_coupled_fbsde(c, 0.0, noise);
    const double C = c.constants.lipschitz;
    std::size_t bad = 0;
    for (std::size_t k = 0; k <= 32; ++k)
        for (std::size_t i = 0; i < 1024; ++i) {
            double p = s.adjoint.P(i, k), se = s.adjoint.regression_se[k];
            if (p < -3 * se || p > C * std::exp(2 * C * (0.5 - grid.t(k))) + 3 * se) ++bad;
        }
    EXPECT_EQ(bad, 0u);
}

TEST(Coupled, DeterministicAcrossWorkers) {
    auto c = make_preset("lq_basic");
    TimeGrid grid(0.25, 16);
    auto noise = make_noise(HurstModel(0.75), grid, 256, 8, NoiseMode::independent);
    set_worker_count(1);
    auto a = solve_coupled_fbsde(c, 1.0, noise);
    set_worker_count(3);
    auto b = solve_coupled_fbsde(c, 1.0, noise);
    set_worker_count(0);
    EXPECT_EQ(a.control.data(), b.control.data());
    EXPECT_EQ(a.adjoint.P.data(), b.adjoint.P.data());
}
