#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mfbm/measure.hpp"

using namespace mfbm;

namespace {

EmpiricalMeasure random_cloud(std::mt19937_64& rng, std::size_t M, std::size_t d, double shift = 0.0) {
    std::normal_distribution<double> nd;
    std::vector<double> p(M * d);
    for (double& v : p) v = nd(rng) + shift;
    return EmpiricalMeasure(d, p);
}

StatFunctional mean_functional() {
    StatFunctional F;
    F.dim = 1;
    F.stats.push_back({[](std::span<const double> x) { return x[0]; },
                       [](std::span<const double>, std::span<double> g) { g[0] = 1.0; }});
    F.outer = [](std::span<const double> m) { return m[0]; };
    F.outer_gradient = [](std::span<const double>, std::span<double> g) { g[0] = 1.0; };
    return F;
}

StatFunctional squared_mean() {
    StatFunctional F = mean_functional();
    F.outer = [](std::span<const double> m) { return m[0] * m[0]; };
    F.outer_gradient = [](std::span<const double> m, std::span<double> g) { g[0] = 2.0 * m[0]; };
    return F;
}

// Brute force over all assignments for equal-size clouds (uniform weights make
// a permutation optimal).
double brute_force(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int p) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < a.dim(); ++c) {
                double d = a.point(i)[c] - b.point(perm[i])[c];
                d2 += d * d;
            }
            s += p == 1 ? std::sqrt(d2) : d2;
        }
        best = std::min(best, s / a.size());
    } while (std::next_permutation(perm.begin(), perm.end()));
    return p == 1 ? best : std::sqrt(best);
}

}  // namespace

TEST(Wasserstein, IdentityAndPointMasses) {
    std::mt19937_64 rng(1);
    auto a = random_cloud(rng, 20, 2);
    EXPECT_NEAR(wasserstein(a, a, 2), 0.0, 1e-12);
    EXPECT_NEAR(wasserstein(a, a, 1), 0.0, 1e-12);
    auto x = EmpiricalMeasure::from_1d({0.3}), y = EmpiricalMeasure::from_1d({-1.2});
    EXPECT_DOUBLE_EQ(wasserstein(x, y, 1), 1.5);
    EXPECT_DOUBLE_EQ(wasserstein(x, y, 2), 1.5);
    EmpiricalMeasure x2(2, {0.0, 0.0}), y2(2, {3.0, 4.0});
    EXPECT_DOUBLE_EQ(wasserstein(x2, y2, 1), 5.0);
    EXPECT_DOUBLE_EQ(wasserstein(x2, y2, 2), 5.0);
    EXPECT_THROW(wasserstein(x, x2, 1), DomainError);
}

TEST(Wasserstein, MatchesBruteForceInTwoDimensions) {
    std::mt19937_64 rng(2);
    for (std::size_t M : {3u, 5u}) {
        for (int rep = 0; rep < 20; ++rep) {
            auto a = random_cloud(rng, M, 2), b = random_cloud(rng, M, 2, 0.5);
            for (int p : {1, 2}) EXPECT_NEAR(wasserstein(a, b, p), brute_force(a, b, p), 1e-12);
        }
    }
}

TEST(Wasserstein, OneDimensionalEqualSizesUseSortedPairing) {
    std::mt19937_64 rng(3);
    auto a = random_cloud(rng, 50, 1), b = random_cloud(rng, 50, 1, 1.0);
    auto x = a.points(), y = b.points();
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double s = 0.0;
    for (std::size_t i = 0; i < 50; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    EXPECT_NEAR(wasserstein(a, b, 2), std::sqrt(s / 50), 1e-13);
}

TEST(Wasserstein, UnequalSizesAgreeWithTransportSolver) {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 10; ++rep) {
        auto a = random_cloud(rng, 7, 1), b = random_cloud(rng, 4, 1, 0.3);
        // embed on a line in the plane and solve exactly there
        std::vector<double> pa, pb;
        for (double v : a.points()) pa.insert(pa.end(), {v, 0.0});
        for (double v : b.points()) pb.insert(pb.end(), {v, 0.0});
        EmpiricalMeasure A(2, pa), B(2, pb);
        for (int p : {1, 2}) EXPECT_NEAR(wasserstein(a, b, p), wasserstein(A, B, p), 1e-12);
    }
}

TEST(Wasserstein, MetricProperties) {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        auto a = random_cloud(rng, 12, 2), b = random_cloud(rng, 12, 2, 0.4), c = random_cloud(rng, 12, 2, -0.3);
        for (int p : {1, 2}) {
            double ab = wasserstein(a, b, p), ba = wasserstein(b, a, p);
            EXPECT_NEAR(ab, ba, 1e-12);
            EXPECT_LE(ab, wasserstein(a, c, p) + wasserstein(c, b, p) + 1e-12);
            EXPECT_GT(ab, 0.0);
        }
    }
}

TEST(Wasserstein, BoundedByCoupling) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t d = rep % 2 ? 2 : 1, M = 16;
        auto a = random_cloud(rng, M, d);
        std::vector<double> q = a.points();
        for (double& v : q) v += 0.3 * nd(rng) + 0.2;
        EmpiricalMeasure b(d, q);
        for (int p : {1, 2}) {
            double coupled = 0.0;
            for (std::size_t i = 0; i < M; ++i) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) d2 += std::pow(a.point(i)[c] - b.point(i)[c], 2);
                coupled += p == 1 ? std::sqrt(d2) : d2;
            }
            coupled /= M;
            if (p == 2) coupled = std::sqrt(coupled);
            EXPECT_LE(wasserstein(a, b, p), coupled + 1e-12);
        }
    }
}

TEST(Wasserstein, SlicedFallbackIsALowerBoundEstimate) {
    std::mt19937_64 rng(7);
    auto a = random_cloud(rng, 80, 2), b = random_cloud(rng, 80, 2, 1.0);
    double sliced = wasserstein(a, b, 2);
    WassersteinOptions exact;
    exact.exact_limit = 80 * 80;
    double ex = wasserstein(a, b, 2, exact);
    EXPECT_LE(sliced, ex + 1e-12);
    EXPECT_GT(sliced, 0.5 * ex);
}

TEST(LionsDerivative, MeanAndSquaredMean) {
    std::mt19937_64 rng(8);
    auto mu = random_cloud(rng, 30, 1);
    double m = 0.0;
    for (double v : mu.points()) m += v / 30;
    for (double x : {-2.0, 0.1, 5.0}) {
        std::vector<double> xv{x};
        EXPECT_DOUBLE_EQ(lions_derivative(mean_functional(), mu, xv)[0], 1.0);
        EXPECT_NEAR(lions_derivative(squared_mean(), mu, xv)[0], 2.0 * m, 1e-14);
    }
}

TEST(LionsDerivative, FiniteDifferenceLift) {
    std::mt19937_64 rng(9);
    StatFunctional F;
    F.dim = 1;
    F.stats.push_back({[](std::span<const double> x) { return std::sin(x[0]); },
                       [](std::span<const double> x, std::span<double> g) { g[0] = std::cos(x[0]); }});
    F.stats.push_back({[](std::span<const double> x) { return x[0] * x[0]; },
                       [](std::span<const double> x, std::span<double> g) { g[0] = 2 * x[0]; }});
    F.outer = [](std::span<const double> m) { return std::exp(m[0]) + m[0] * m[1]; };
    F.outer_gradient = [](std::span<const double> m, std::span<double> g) {
        g[0] = std::exp(m[0]) + m[1];
        g[1] = m[0];
    };
    const std::size_t M = 16;
    auto mu = random_cloud(rng, M, 1);
    const double h = 1e-5;
    for (std::size_t j = 0; j < M; ++j) {
        auto p = mu.points();
        p[j] += h;
        double fd = (F(EmpiricalMeasure(1, p)) - F(mu)) / h;
        double ld = lions_derivative(F, mu, mu.point(j))[0] / M;
        EXPECT_NEAR(fd / ld, 1.0, 1e-3);
    }
}

TEST(LionsDerivative, LinearInOuterAndPermutationInvariant) {
    std::mt19937_64 rng(10);
    auto mu = random_cloud(rng, 10, 1);
    auto p = mu.points();
    std::reverse(p.begin(), p.end());
    EmpiricalMeasure rev(1, p);
    StatFunctional A = squared_mean(), B = mean_functional(), C = squared_mean();
    C.outer = [](std::span<const double> m) { return 3 * m[0] * m[0] - 2 * m[0]; };
    C.outer_gradient = [](std::span<const double> m, std::span<double> g) { g[0] = 6 * m[0] - 2; };
    std::vector<double> x{0.7};
    double a = lions_derivative(A, mu, x)[0], b = lions_derivative(B, mu, x)[0];
    EXPECT_NEAR(lions_derivative(C, mu, x)[0], 3 * a - 2 * b, 1e-13);
    EXPECT_NEAR(lions_derivative(A, rev, x)[0], a, 1e-14);
}

namespace {

MeasureFunction quadratic_fn(double sign, bool second_moment) {
    MeasureFunction F;
    F.value = [=](std::span<const double> x, const EmpiricalMeasure& mu) {
        double m = 0.0, m2 = 0.0;
        for (double v : mu.points()) {
            m += v * mu.weight();
            m2 += v * v * mu.weight();
        }
        return sign * x[0] * x[0] + (second_moment ? m2 : (sign > 0 ? m * m : 0.0));
    };
    F.grad_x = [=](std::span<const double> x, const EmpiricalMeasure&) { return std::vector<double>{2 * sign * x[0]}; };
    F.lions = [=](std::span<const double>, const EmpiricalMeasure& mu, std::span<const double> y) {
        double m = 0.0;
        for (double v : mu.points()) m += v * mu.weight();
        if (second_moment) return std::vector<double>{2 * y[0]};
        return std::vector<double>{sign > 0 ? 2 * m : 0.0};
    };
    return F;
}

std::vector<ConvexitySample> random_samples(std::size_t n) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    std::vector<ConvexitySample> out;
    for (std::size_t k = 0; k < n; ++k) {
        ConvexitySample s{{nd(rng)}, {nd(rng)}, random_cloud(rng, 8, 1), random_cloud(rng, 8, 1)};
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST(ConvexityProbe, ConvexQuadraticHasNonnegativeGap) {
    auto r = convexity_probe(quadratic_fn(1.0, false), random_samples(100));
    EXPECT_GE(r.min_gap, -1e-12);
}

TEST(ConvexityProbe, ConcaveDetected) {
    auto r = convexity_probe(quadratic_fn(-1.0, false), random_samples(100));
    EXPECT_LT(r.min_gap, 0.0);
}

TEST(ConvexityProbe, StrictModulus) {
    auto r = convexity_probe(quadratic_fn(1.0, true), random_samples(100));
    EXPECT_GE(r.strict_modulus_estimate, 1.0 - 1e-6);
}
