#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace mfbm {

using GridFunction = std::vector<double>;

class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_(n_steps) {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("TimeGrid: horizon must be positive");
        if (n_steps < 2) throw DomainError("TimeGrid: need at least 2 steps");
    }

    double horizon() const noexcept { return horizon_; }
    std::size_t n_steps() const noexcept { return n_; }
    std::size_t size() const noexcept { return n_ + 1; }
    double dt() const noexcept { return horizon_ / static_cast<double>(n_); }
    double t(std::size_t k) const noexcept { return horizon_ * static_cast<double>(k) / static_cast<double>(n_); }

    // Index of a grid-aligned time; throws if t is off-grid.
    std::size_t index_of(double t) const {
        double x = t / dt();
        double r = std::round(x);
        if (r < 0 || r > static_cast<double>(n_) || std::abs(x - r) > 1e-9 * (1.0 + r))
            throw DomainError("TimeGrid: time " + std::to_string(t) + " is not a grid point");
        return static_cast<std::size_t>(r);
    }

    bool operator==(const TimeGrid& o) const noexcept { return horizon_ == o.horizon_ && n_ == o.n_; }

private:
    double horizon_;
    std::size_t n_;
};

enum class PathLabel { W, BH, X, P, Y, u, epsilon };

inline const char* label_name(PathLabel l) {
    switch (l) {
        case PathLabel::W: return "W";
        case PathLabel::BH: return "BH";
        case PathLabel::X: return "X";
        case PathLabel::P: return "P";
        case PathLabel::Y: return "Y";
        case PathLabel::u: return "u";
        case PathLabel::epsilon: return "epsilon";
    }
    return "?";
}

// Row-major M x (n_steps+1) array of sample paths.
class PathMatrix {
public:
    PathMatrix(TimeGrid grid, std::size_t n_paths, PathLabel label, double fill = 0.0)
        : grid_(grid), m_(n_paths), label_(label), v_(n_paths * grid.size(), fill) {}

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return m_; }
    std::size_t n_times() const noexcept { return grid_.size(); }
    PathLabel label() const noexcept { return label_; }

    double& operator()(std::size_t i, std::size_t k) noexcept { return v_[i * grid_.size() + k]; }
    double operator()(std::size_t i, std::size_t k) const noexcept { return v_[i * grid_.size() + k]; }

    std::span<double> row(std::size_t i) noexcept { return {v_.data() + i * grid_.size(), grid_.size()}; }
    std::span<const double> row(std::size_t i) const noexcept { return {v_.data() + i * grid_.size(), grid_.size()}; }

    std::vector<double> column(std::size_t k) const {
        std::vector<double> c(m_);
        for (std::size_t i = 0; i < m_; ++i) c[i] = (*this)(i, k);
        return c;
    }
    void set_column(std::size_t k, std::span<const double> c) {
        for (std::size_t i = 0; i < m_; ++i) (*this)(i, k) = c[i];
    }

    const std::vector<double>& data() const noexcept { return v_; }
    std::vector<double>& data() noexcept { return v_; }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

private:
    TimeGrid grid_;
    std::size_t m_;
    PathLabel label_;
    std::vector<double> v_;
};

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* where) {
    if (!(a == b)) throw DomainError(std::string(where) + ": grid mismatch");
}

// Mean and standard error of a sample.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

inline Estimate estimate(std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    double s = 0.0, comp = 0.0;  // Neumaier summation: exact mean when all entries agree
    for (double v : x) {
        double t = s + v;
        comp += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
        s = t;
    }
    double m = (s + comp) / n, ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    double var = x.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {m, std::sqrt(var / n)};
}

inline void write_paths_csv(std::ostream& os, const PathMatrix& p) {
    os << "t,path_id,value\n";
    os.precision(17);
    for (std::size_t i = 0; i < p.n_paths(); ++i)
        for (std::size_t k = 0; k < p.n_times(); ++k) os << p.grid().t(k) << ',' << i << ',' << p(i, k) << '\n';
}

}  // namespace mfbm
