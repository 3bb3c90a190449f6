#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "wdecon/common.hpp"

namespace wdecon {

/// One rectangular-grid axis with uniform spacing.
struct Axis {
    double min = 0.0;
    double max = 1.0;
    int count = 2;

    double spacing() const { return (max - min) / (count - 1); }
    double node(int i) const { return min + i * spacing(); }
    bool valid() const { return count >= 2 && max > min; }
};

/// Density tabulated on a rectangular grid (row-major, last axis fastest).
class GridDensity {
public:
    GridDensity() = default;
    GridDensity(std::vector<Axis> axes, std::vector<double> values, bool normalized = false)
        : axes_(std::move(axes)), values_(std::move(values)), normalized_(normalized) {
        std::size_t n = 1;
        for (const auto& ax : axes_) {
            if (!ax.valid()) throw std::invalid_argument("GridDensity: invalid axis");
            n *= static_cast<std::size_t>(ax.count);
        }
        if (n != values_.size()) throw std::invalid_argument("GridDensity: value count mismatch");
    }

    int dim() const { return static_cast<int>(axes_.size()); }
    const Axis& axis(int j) const { return axes_[static_cast<std::size_t>(j)]; }
    const std::vector<Axis>& axes() const { return axes_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    bool normalized() const { return normalized_; }
    void set_normalized(bool b) { normalized_ = b; }

    std::size_t size() const { return values_.size(); }

    /// Trapezoidal integral over the grid extent.
    double integral() const {
        double s = 0.0;
        std::vector<int> idx(axes_.size(), 0);
        for (std::size_t flat = 0; flat < values_.size(); ++flat) {
            s += values_[flat] * weight(idx);
            advance(idx);
        }
        double cell = 1.0;
        for (const auto& ax : axes_) cell *= ax.spacing();
        return s * cell;
    }

    /// Multilinear interpolation; zero outside the grid extent.
    double evaluate(std::span<const double> x) const {
        const int d = dim();
        if (static_cast<int>(x.size()) != d) throw std::invalid_argument("evaluate: dim mismatch");
        std::vector<int> lo(static_cast<std::size_t>(d));
        std::vector<double> frac(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            const Axis& ax = axes_[static_cast<std::size_t>(j)];
            const double s = (x[static_cast<std::size_t>(j)] - ax.min) / ax.spacing();
            if (s < 0.0 || s > ax.count - 1) return 0.0;
            int i = static_cast<int>(std::floor(s));
            if (i >= ax.count - 1) i = ax.count - 2;
            lo[static_cast<std::size_t>(j)] = i;
            frac[static_cast<std::size_t>(j)] = s - i;
        }
        double acc = 0.0;
        const int corners = 1 << d;
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            std::size_t flat = 0;
            for (int j = 0; j < d; ++j) {
                const int bit = (c >> j) & 1;
                w *= bit ? frac[static_cast<std::size_t>(j)] : 1.0 - frac[static_cast<std::size_t>(j)];
                flat = flat * static_cast<std::size_t>(axes_[static_cast<std::size_t>(j)].count) +
                       static_cast<std::size_t>(lo[static_cast<std::size_t>(j)] + bit);
            }
            acc += w * values_[flat];
        }
        return acc;
    }

    /// Marginal density on axis j (integrates out the other axes).
    GridDensity marginal(int j) const {
        const int d = dim();
        if (j < 0 || j >= d) throw std::invalid_argument("marginal: bad axis");
        if (d == 1) return *this;
        const Axis& target = axes_[static_cast<std::size_t>(j)];
        std::vector<double> out(static_cast<std::size_t>(target.count), 0.0);
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        double cell = 1.0;
        for (int a = 0; a < d; ++a)
            if (a != j) cell *= axes_[static_cast<std::size_t>(a)].spacing();
        for (std::size_t flat = 0; flat < values_.size(); ++flat) {
            double w = 1.0;
            for (int a = 0; a < d; ++a) {
                if (a == j) continue;
                const int i = idx[static_cast<std::size_t>(a)];
                const int c = axes_[static_cast<std::size_t>(a)].count;
                w *= (i == 0 || i == c - 1) ? 0.5 : 1.0;
            }
            out[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])] += values_[flat] * w;
            advance(idx);
        }
        for (auto& v : out) v *= cell;
        return GridDensity({target}, std::move(out), normalized_);
    }

    /// Piecewise-linear CDF values at the nodes (d=1), built by trapezoidal
    /// cumulative sums.
    std::vector<double> cdf_nodes() const {
        require_1d("cdf_nodes");
        const Axis& ax = axes_[0];
        std::vector<double> F(static_cast<std::size_t>(ax.count), 0.0);
        const double h = ax.spacing();
        for (int i = 1; i < ax.count; ++i)
            F[static_cast<std::size_t>(i)] =
                F[static_cast<std::size_t>(i - 1)] +
                0.5 * h * (values_[static_cast<std::size_t>(i - 1)] + values_[static_cast<std::size_t>(i)]);
        return F;
    }

    /// CDF at an arbitrary point (d=1), linear between nodes, clamped outside.
    double cdf(double x) const {
        require_1d("cdf");
        const Axis& ax = axes_[0];
        const auto F = cdf_nodes();
        if (x <= ax.min) return 0.0;
        if (x >= ax.max) return F.back();
        const double s = (x - ax.min) / ax.spacing();
        const int i = std::min(static_cast<int>(std::floor(s)), ax.count - 2);
        const double t = s - i;
        return F[static_cast<std::size_t>(i)] * (1.0 - t) + F[static_cast<std::size_t>(i + 1)] * t;
    }

    /// Quantile by binary search over the piecewise-linear CDF (d=1).
    double quantile(double u) const {
        require_1d("quantile");
        const Axis& ax = axes_[0];
        const auto F = cdf_nodes();
        const double total = F.back();
        if (total <= 0.0) throw std::runtime_error("quantile: zero-mass density");
        const double target = u * total;
        if (target <= 0.0) return ax.min;
        if (target >= total) return ax.max;
        auto it = std::lower_bound(F.begin(), F.end(), target);
        auto i = static_cast<int>(std::distance(F.begin(), it));
        if (i == 0) return ax.min;
        const double f0 = F[static_cast<std::size_t>(i - 1)], f1 = F[static_cast<std::size_t>(i)];
        const double t = (f1 > f0) ? (target - f0) / (f1 - f0) : 0.0;
        return ax.node(i - 1) + t * ax.spacing();
    }

private:
    void require_1d(const char* who) const {
        if (dim() != 1) throw std::invalid_argument(std::string(who) + ": requires d=1");
    }

    double weight(const std::vector<int>& idx) const {
        double w = 1.0;
        for (std::size_t j = 0; j < axes_.size(); ++j) {
            const int i = idx[j], c = axes_[j].count;
            w *= (i == 0 || i == c - 1) ? 0.5 : 1.0;
        }
        return w;
    }

    void advance(std::vector<int>& idx) const {
        for (std::size_t j = axes_.size(); j-- > 0;) {
            if (++idx[j] < axes_[j].count) return;
            idx[j] = 0;
        }
    }

    std::vector<Axis> axes_;
    std::vector<double> values_;
    bool normalized_ = false;
};

}  // namespace wdecon
