#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wdecon {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool empty() const { return !(lo < hi); }
};

/// Thrown when a characteristic function vanishes on the integration band.
struct SingularityError : std::runtime_error {
    double location;
    explicit SingularityError(const std::string& what, double where)
        : std::runtime_error(what), location(where) {}
};

/// Thrown when derivative evaluation would overflow; carries the largest
/// usable integration endpoint.
struct OverflowBoundError : std::runtime_error {
    double max_safe;
    OverflowBoundError(const std::string& what, double safe)
        : std::runtime_error(what), max_safe(safe) {}
};

/// Infeasible lower-bound schedule parameters (eta <= 0).
struct FeasibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Positive part of a raw estimate integrates to zero.
struct DegenerateEstimateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Resampling lost more mass than the configured tolerance.
struct GridCoverageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Requested a sampler for a noise kind that has none.
struct UnsupportedSamplerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Perturbation amplitude violates the nonnegativity envelope; carries the
/// maximal feasible amplitude.
struct EnvelopeError : std::runtime_error {
    double max_amplitude;
    EnvelopeError(const std::string& what, double amax)
        : std::runtime_error(what), max_amplitude(amax) {}
};

inline std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 2) throw std::invalid_argument("linspace: need at least 2 nodes");
    std::vector<double> x(static_cast<std::size_t>(n));
    const double step = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = lo + i * step;
    x.back() = hi;
    return x;
}

/// Catmull-Rom cubic on a uniform table; clamps to `outside` beyond the range.
class UniformTable {
public:
    UniformTable() = default;
    UniformTable(double x0, double dx, std::vector<double> values, double outside = 0.0)
        : x0_(x0), dx_(dx), v_(std::move(values)), outside_(outside) {}

    double x_min() const { return x0_; }
    double x_max() const { return x0_ + dx_ * (static_cast<double>(v_.size()) - 1); }
    double spacing() const { return dx_; }
    std::size_t size() const { return v_.size(); }
    const std::vector<double>& values() const { return v_; }

    bool covers(double x) const { return x >= x_min() && x <= x_max(); }

    double operator()(double x) const {
        if (v_.empty()) return outside_;
        const double s = (x - x0_) / dx_;
        if (s < 0.0 || s > static_cast<double>(v_.size() - 1)) return outside_;
        const auto n = static_cast<std::ptrdiff_t>(v_.size());
        auto i = static_cast<std::ptrdiff_t>(std::floor(s));
        if (i >= n - 1) i = n - 2;
        const double t = s - static_cast<double>(i);
        const double p1 = v_[static_cast<std::size_t>(i)];
        const double p2 = v_[static_cast<std::size_t>(i + 1)];
        const double p0 = (i > 0) ? v_[static_cast<std::size_t>(i - 1)] : 2.0 * p1 - p2;
        const double p3 = (i + 2 < n) ? v_[static_cast<std::size_t>(i + 2)] : 2.0 * p2 - p1;
        const double a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
        const double b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        const double c = -0.5 * p0 + 0.5 * p2;
        return ((a * t + b) * t + c) * t + p1;
    }

private:
    double x0_ = 0.0;
    double dx_ = 1.0;
    std::vector<double> v_;
    double outside_ = 0.0;
};

inline double sq(double x) { return x * x; }

}  // namespace wdecon
