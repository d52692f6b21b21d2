#pragma once

// Empirical measures, Wasserstein distances and the Lions derivative for
// functionals of the form s(E[phi_1], ..., E[phi_k]).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "errors.hpp"

namespace mfbm {

class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;
    EmpiricalMeasure(std::size_t dim, std::vector<double> points) : dim_(dim), pts_(std::move(points)) {
        if (dim_ == 0 || pts_.size() % dim_ != 0 || pts_.empty())
            throw DomainError("EmpiricalMeasure: support size is not a positive multiple of the dimension");
        for (double v : pts_)
            if (!std::isfinite(v)) throw DomainError("EmpiricalMeasure: non-finite support point");
    }

    static EmpiricalMeasure from_1d(std::vector<double> x) { return EmpiricalMeasure(1, std::move(x)); }
    static EmpiricalMeasure from_pairs(std::span<const double> x, std::span<const double> v) {
        if (x.size() != v.size()) throw DomainError("EmpiricalMeasure: coordinate arrays differ in length");
        std::vector<double> p(2 * x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            p[2 * i] = x[i];
            p[2 * i + 1] = v[i];
        }
        return EmpiricalMeasure(2, std::move(p));
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ ? pts_.size() / dim_ : 0; }
    double weight() const noexcept { return 1.0 / static_cast<double>(size()); }
    std::span<const double> point(std::size_t i) const noexcept { return {pts_.data() + i * dim_, dim_}; }
    const std::vector<double>& points() const noexcept { return pts_; }

private:
    std::size_t dim_ = 0;
    std::vector<double> pts_;
};

struct WassersteinOptions {
    std::size_t projections = 64;     // sliced fallback
    std::size_t exact_limit = 4096;   // largest M_a*M_b solved exactly in d = 2
};

namespace detail {

// W_p^p between two 1-d samples through the quantile coupling. Break points
// i/Ma and j/Mb are compared as integers i*Mb and j*Ma.
inline double wasserstein_1d_pow(std::vector<double> a, std::vector<double> b, int p) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::uint64_t Ma = a.size(), Mb = b.size();
    std::uint64_t i = 0, j = 0, pos = 0;
    const double total = static_cast<double>(Ma) * static_cast<double>(Mb);
    double acc = 0.0;
    while (i < Ma && j < Mb) {
        std::uint64_t ni = (i + 1) * Mb, nj = (j + 1) * Ma;
        std::uint64_t next = std::min(ni, nj);
        double d = std::abs(a[i] - b[j]);
        acc += static_cast<double>(next - pos) * (p == 1 ? d : d * d);
        pos = next;
        if (ni == next) ++i;
        if (nj == next) ++j;
    }
    return acc / total;
}

// Exact discrete transport by successive shortest paths with potentials.
// Each source carries Mb units and each sink takes Ma units.
inline double wasserstein_exact_pow(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int p) {
    const std::size_t Ma = a.size(), Mb = b.size(), d = a.dim();
    std::vector<double> cost(Ma * Mb);
    for (std::size_t i = 0; i < Ma; ++i)
        for (std::size_t j = 0; j < Mb; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                double diff = a.point(i)[c] - b.point(j)[c];
                s += diff * diff;
            }
            cost[i * Mb + j] = p == 1 ? std::sqrt(s) : s;
        }
    const std::size_t S = Ma + Mb, T = S + 1, V = S + 2;
    std::vector<std::int64_t> flow(Ma * Mb, 0), supply(Ma, static_cast<std::int64_t>(Mb)),
        demand(Mb, static_cast<std::int64_t>(Ma)), sent(Ma, 0), received(Mb, 0);
    std::vector<double> pot(V, 0.0), dist(V);
    std::vector<std::size_t> prev(V);
    const double inf = std::numeric_limits<double>::infinity();
    std::int64_t remaining = static_cast<std::int64_t>(Ma * Mb);
    using Item = std::pair<double, std::size_t>;

    while (remaining > 0) {
        std::fill(dist.begin(), dist.end(), inf);
        std::vector<char> done(V, 0);
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        dist[S] = 0.0;
        pq.push({0.0, S});
        auto relax = [&](std::size_t u, std::size_t v, double c) {
            double nd = dist[u] + std::max(0.0, c + pot[u] - pot[v]);
            if (nd < dist[v]) {
                dist[v] = nd;
                prev[v] = u;
                pq.push({nd, v});
            }
        };
        while (!pq.empty()) {
            auto [du, u] = pq.top();
            pq.pop();
            if (done[u]) continue;
            done[u] = 1;
            if (u == S) {
                for (std::size_t i = 0; i < Ma; ++i)
                    if (supply[i] > 0) relax(S, i, 0.0);
            } else if (u < Ma) {
                for (std::size_t j = 0; j < Mb; ++j) relax(u, Ma + j, cost[u * Mb + j]);
                if (sent[u] > 0) relax(u, S, 0.0);
            } else if (u < S) {
                std::size_t j = u - Ma;
                for (std::size_t i = 0; i < Ma; ++i)
                    if (flow[i * Mb + j] > 0) relax(u, i, -cost[i * Mb + j]);
                if (demand[j] > 0) relax(u, T, 0.0);
            } else if (u == T) {
                for (std::size_t j = 0; j < Mb; ++j)
                    if (received[j] > 0) relax(T, Ma + j, 0.0);
            }
        }
        if (dist[T] == inf) throw Error("wasserstein: transport solver found no augmenting path");
        for (std::size_t v = 0; v < V; ++v) pot[v] += std::min(dist[v], dist[T]);

        std::int64_t push = remaining;
        for (std::size_t v = T; v != S; v = prev[v]) {
            std::size_t u = prev[v];
            if (u == S) push = std::min(push, supply[v]);
            else if (v == T) push = std::min(push, demand[u - Ma]);
            else if (u >= Ma && v < Ma) push = std::min(push, flow[v * Mb + (u - Ma)]);
            else if (v == S) push = std::min(push, sent[u]);
            else if (u == T) push = std::min(push, received[v - Ma]);
        }
        for (std::size_t v = T; v != S; v = prev[v]) {
            std::size_t u = prev[v];
            if (u == S) {
                supply[v] -= push;
                sent[v] += push;
            } else if (v == T) {
                demand[u - Ma] -= push;
                received[u - Ma] += push;
            } else if (u < Ma && v >= Ma && v < S) {
                flow[u * Mb + (v - Ma)] += push;
            } else if (u >= Ma && u < S && v < Ma) {
                flow[v * Mb + (u - Ma)] -= push;
            } else if (v == S) {
                supply[u] += push;
                sent[u] -= push;
            } else if (u == T) {
                demand[v - Ma] += push;
                received[v - Ma] -= push;
            }
        }
        remaining -= push;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < flow.size(); ++k) acc += static_cast<double>(flow[k]) * cost[k];
    return acc / (static_cast<double>(Ma) * static_cast<double>(Mb));
}

inline double wasserstein_sliced_pow(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int p, std::size_t L) {
    const double golden = std::acos(-1.0) * (3.0 - std::sqrt(5.0));
    double acc = 0.0;
    std::vector<double> pa(a.size()), pb(b.size());
    for (std::size_t l = 0; l < L; ++l) {
        double th = std::fmod(golden * static_cast<double>(l), std::acos(-1.0));
        double c = std::cos(th), s = std::sin(th);
        for (std::size_t i = 0; i < a.size(); ++i) pa[i] = c * a.point(i)[0] + s * a.point(i)[1];
        for (std::size_t j = 0; j < b.size(); ++j) pb[j] = c * b.point(j)[0] + s * b.point(j)[1];
        acc += wasserstein_1d_pow(pa, pb, p);
    }
    return acc / static_cast<double>(L);
}

}  // namespace detail

inline double wasserstein(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int p,
                          const WassersteinOptions& opt = {}) {
    if (a.dim() != b.dim()) throw DomainError("wasserstein: dimension mismatch");
    if (p != 1 && p != 2) throw DomainError("wasserstein: order must be 1 or 2");
    if (a.dim() > 2) throw DomainError("wasserstein: dimension above 2 is not supported");
    double wp;
    if (a.dim() == 1)
        wp = detail::wasserstein_1d_pow(a.points(), b.points(), p);
    else if (a.size() * b.size() <= opt.exact_limit)
        wp = detail::wasserstein_exact_pow(a, b, p);
    else
        wp = detail::wasserstein_sliced_pow(a, b, p, opt.projections);
    return p == 1 ? wp : std::sqrt(wp);
}

struct Statistic {
    std::function<double(std::span<const double>)> value;
    std::function<void(std::span<const double>, std::span<double>)> gradient;
};

// F(mu) = outer(E_mu[phi_1], ..., E_mu[phi_k]).
struct StatFunctional {
    std::size_t dim = 1;
    std::vector<Statistic> stats;
    std::function<double(std::span<const double>)> outer;
    std::function<void(std::span<const double>, std::span<double>)> outer_gradient;
    double lipschitz = 0.0;

    std::vector<double> moments(const EmpiricalMeasure& mu) const {
        if (mu.dim() != dim) throw DomainError("StatFunctional: measure dimension mismatch");
        std::vector<double> m(stats.size(), 0.0);
        for (std::size_t j = 0; j < mu.size(); ++j)
            for (std::size_t i = 0; i < stats.size(); ++i) m[i] += stats[i].value(mu.point(j));
        for (double& v : m) v *= mu.weight();
        return m;
    }

    double operator()(const EmpiricalMeasure& mu) const { return outer(moments(mu)); }
};

inline std::vector<double> lions_derivative(const StatFunctional& F, const EmpiricalMeasure& mu,
                                            std::span<const double> x) {
    if (x.size() != F.dim) throw DomainError("lions_derivative: point dimension mismatch");
    for (double v : x)
        if (!std::isfinite(v)) throw DomainError("lions_derivative: non-finite point");
    auto m = F.moments(mu);
    std::vector<double> ds(m.size()), grad(F.dim, 0.0), dphi(F.dim);
    F.outer_gradient(m, ds);
    for (std::size_t i = 0; i < F.stats.size(); ++i) {
        F.stats[i].gradient(x, dphi);
        for (std::size_t c = 0; c < F.dim; ++c) grad[c] += ds[i] * dphi[c];
    }
    return grad;
}

// A scalar function of (x, mu) with its x-gradient and Lions derivative.
struct MeasureFunction {
    std::function<double(std::span<const double>, const EmpiricalMeasure&)> value;
    std::function<std::vector<double>(std::span<const double>, const EmpiricalMeasure&)> grad_x;
    std::function<std::vector<double>(std::span<const double>, const EmpiricalMeasure&, std::span<const double>)> lions;
};

// (x, mu) and (x', mu'); support points of mu and mu' are coupled by index.
struct ConvexitySample {
    std::vector<double> x, x_prime;
    EmpiricalMeasure mu, mu_prime;
};

struct ConvexityReport {
    double min_gap = std::numeric_limits<double>::infinity();
    double strict_modulus_estimate = std::numeric_limits<double>::infinity();
    std::size_t worst_sample = 0;
};

inline double convexity_gap(const MeasureFunction& F, const ConvexitySample& s, double* spread = nullptr) {
    if (s.mu.size() != s.mu_prime.size() || s.mu.dim() != s.mu_prime.dim() || s.x.size() != s.x_prime.size())
        throw DomainError("convexity_probe: sample pair shapes differ");
    double gap = F.value(s.x_prime, s.mu_prime) - F.value(s.x, s.mu);
    auto gx = F.grad_x(s.x, s.mu);
    double dx2 = 0.0;
    for (std::size_t c = 0; c < s.x.size(); ++c) {
        double d = s.x_prime[c] - s.x[c];
        gap -= gx[c] * d;
        dx2 += d * d;
    }
    double lifted = 0.0, dX2 = 0.0;
    for (std::size_t j = 0; j < s.mu.size(); ++j) {
        auto y = s.mu.point(j), y2 = s.mu_prime.point(j);
        auto g = F.lions(s.x, s.mu, y);
        for (std::size_t c = 0; c < y.size(); ++c) {
            lifted += g[c] * (y2[c] - y[c]);
            dX2 += (y2[c] - y[c]) * (y2[c] - y[c]);
        }
    }
    gap -= lifted * s.mu.weight();
    if (spread) *spread = dx2 + dX2 * s.mu.weight();
    return gap;
}

inline ConvexityReport convexity_probe(const MeasureFunction& F, const std::vector<ConvexitySample>& samples) {
    if (samples.empty()) throw DomainError("convexity_probe: no samples");
    ConvexityReport r;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        double spread = 0.0;
        double gap = convexity_gap(F, samples[k], &spread);
        if (gap < r.min_gap) {
            r.min_gap = gap;
            r.worst_sample = k;
        }
        if (spread > 1e-14) r.strict_modulus_estimate = std::min(r.strict_modulus_estimate, gap / spread);
    }
    return r;
}

}  // namespace mfbm
