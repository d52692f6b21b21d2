#include <gtest/gtest.h>

#include <cmath>

#include "mfbm/girsanov.hpp"

using namespace mfbm;

namespace {

PathMatrix brownian(const TimeGrid& grid, std::size_t M, std::uint64_t seed) {
    PathMatrix W(grid, M, PathLabel::W);
    detail::fill_brownian(W, seed);
    return W;
}

}  // namespace

TEST(Girsanov, ZeroGammaGivesUnitDensity) {
    TimeGrid grid(1.0, 32);
    auto W = brownian(grid, 64, 3);
    auto d = build_girsanov(HurstModel(0.75), GridFunction(grid.size(), 0.0), W);
    for (double e : d.epsilon.data()) EXPECT_EQ(e, 1.0);
    for (double e : d.epsilon_inv_T.data()) EXPECT_EQ(e, 1.0);
    auto w = W.row(5);
    auto s = shift_path(d, w, 0.5, ShiftDirection::T);
    for (std::size_t k = 0; k < w.size(); ++k) EXPECT_EQ(s[k], w[k]);
}

TEST(Girsanov, DensityHasUnitMean) {
    TimeGrid grid(1.0, 128);
    auto W = brownian(grid, 8192, 11);
    auto d = build_girsanov(HurstModel(0.75), GridFunction(grid.size(), 0.5), W);
    auto e = estimate(d.epsilon.column(grid.n_steps()));
    EXPECT_LT(std::abs(e.mean - 1.0), 5.0 * e.se);
    double mn = 1e300;
    for (double v : d.epsilon.data()) mn = std::min(mn, v);
    EXPECT_GT(mn, 0.0);
}

TEST(Girsanov, ShiftsAreInverse) {
    TimeGrid grid(1.0, 64);
    auto W = brownian(grid, 16, 5);
    auto d = build_girsanov(HurstModel(0.6), GridFunction(grid.size(), 0.8), W);
    for (std::size_t i = 0; i < 16; ++i) {
        auto w = W.row(i);
        for (double t : {0.25, 0.5, 1.0}) {
            auto back = shift_path(d, shift_path(d, w, t, ShiftDirection::T), t, ShiftDirection::A);
            auto fwd = shift_path(d, shift_path(d, w, t, ShiftDirection::A), t, ShiftDirection::T);
            for (std::size_t k = 0; k < w.size(); ++k) {
                EXPECT_NEAR(back[k], w[k], 1e-12);
                EXPECT_NEAR(fwd[k], w[k], 1e-12);
            }
        }
    }
}

TEST(Girsanov, InverseConsistency) {
    TimeGrid grid(1.0, 64);
    auto W = brownian(grid, 32, 9);
    auto d = build_girsanov(HurstModel(0.75), GridFunction(grid.size(), 0.7), W);
    for (std::size_t i = 0; i < 32; ++i)
        for (double t : {0.5, 1.0}) {
            std::size_t j = grid.index_of(t);
            auto a = shift_path(d, W.row(i), t, ShiftDirection::A);
            double prod = d.epsilon(i, j) * density_inv_T_at(d, a, t);
            EXPECT_NEAR(prod, 1.0, 1e-10);
            // eps^{-1}(T_t) matches the density recomputed on the shifted path
            auto T = shift_path(d, W.row(i), t, ShiftDirection::T);
            EXPECT_NEAR(d.epsilon_inv_T(i, j) * density_at(d, T, t), 1.0, 1e-10);
        }
}

TEST(Girsanov, ShiftLinearInGamma) {
    TimeGrid grid(1.0, 32);
    auto W = brownian(grid, 4, 2);
    GridFunction g1(grid.size()), g2(grid.size()), g3(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        g1[k] = std::sin(grid.t(k));
        g2[k] = 0.3;
        g3[k] = 2.0 * g1[k] - g2[k];
    }
    HurstModel m(0.7);
    auto d1 = build_girsanov(m, g1, W), d2 = build_girsanov(m, g2, W), d3 = build_girsanov(m, g3, W);
    std::vector<double> zero(grid.size(), 0.0);
    auto s1 = shift_path(d1, zero, 0.75, ShiftDirection::T), s2 = shift_path(d2, zero, 0.75, ShiftDirection::T),
         s3 = shift_path(d3, zero, 0.75, ShiftDirection::T);
    for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(s3[k], 2.0 * s1[k] - s2[k], 1e-12);
}

// E[F] = E[F(A_t) eps_t] with F = B^H_t, the fBM rebuilt from the path.
TEST(Girsanov, IdentityForFbmValue) {
    TimeGrid grid(1.0, 128);
    const std::size_t M = 8192;
    HurstModel model(0.75);
    KStarOperator kstar(model, grid);
    auto W = brownian(grid, M, 21);
    auto d = build_girsanov(kstar, GridFunction(grid.size(), 0.5), W);
    auto ones = kstar.prefix_cell_means(GridFunction(grid.size(), 1.0));
    for (double t : {0.5, 1.0}) {
        std::size_t j = grid.index_of(t);
        std::vector<double> lhs(M), rhs(M);
        for (std::size_t i = 0; i < M; ++i) {
            auto a = shift_path(d, W.row(i), t, ShiftDirection::A);
            auto w = W.row(i);
            double bh = 0.0, bh_a = 0.0;
            for (std::size_t k = 0; k < j; ++k) {
                bh += ones[j][k] * (w[k + 1] - w[k]);
                bh_a += ones[j][k] * (a[k + 1] - a[k]);
            }
            lhs[i] = bh;
            rhs[i] = bh_a * d.epsilon(i, j);
        }
        auto L = estimate(lhs), R = estimate(rhs);
        EXPECT_LT(std::abs(L.mean - R.mean), 5.0 * std::hypot(L.se, R.se)) << "t=" << t;
        // the shifted side is not trivially centred: the shift moves BH_t by <1, gamma>_H
        double shift = 0.0;
        for (std::size_t k = 0; k < j; ++k) shift += ones[j][k] * d.kstar_cache[j][k] * grid.dt();
        EXPECT_GT(shift, 0.1);
    }
}

TEST(Girsanov, MomentsStayBounded) {
    TimeGrid grid(1.0, 64);
    auto W = brownian(grid, 4096, 17);
    auto d = build_girsanov(HurstModel(0.75), GridFunction(grid.size(), 0.5), W);
    for (double p : {-2.0, 2.0}) {
        double sup = 0.0;
        for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
            auto c = d.epsilon.column(k);
            double s = 0.0;
            for (double e : c) s += std::pow(e, p);
            sup = std::max(sup, s / c.size());
        }
        // E[eps^p] = exp(p(p-1)Q/2) for the Gaussian exponent
        double bound = std::exp(0.5 * p * (p - 1.0) * d.compensator.back());
        EXPECT_LT(sup, 1.5 * bound) << p;
        EXPECT_TRUE(std::isfinite(sup));
    }
}

TEST(Girsanov, OverflowIsReported) {
    TimeGrid grid(1.0, 16);
    auto W = brownian(grid, 8, 1);
    EXPECT_THROW(build_girsanov(HurstModel(0.75), GridFunction(grid.size(), 100.0), W), OverflowError);
}
