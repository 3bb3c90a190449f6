#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace wdecon {

/// Deterministic generator with explicit transform-based samplers. All
/// distributions are derived from mt19937_64 uniforms by fixed closed-form
/// transforms, so streams are identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// Uniform on (0,1]: never returns 0 so logs are safe.
    double uniform() {
        return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Box-Muller.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double exponential() { return -std::log(uniform()); }

    double laplace(double b) {
        const double u = uniform();
        return u < 0.5 ? b * std::log(2.0 * u) : -b * std::log(2.0 * (1.0 - u));
    }

    double cauchy(double s) {
        return s * std::tan(std::numbers::pi * (uniform() - 0.5));
    }

    /// Symmetric alpha-stable via the Chambers-Mallows-Stuck transform,
    /// normalized so the characteristic function is exp(-|t|^alpha).
    double stable(double alpha) {
        const double v = std::numbers::pi * (uniform() - 0.5);
        const double e = exponential();
        if (std::abs(alpha - 1.0) < 1e-12) return std::tan(v);
        const double a = alpha * v;
        return std::sin(a) / std::pow(std::cos(v), 1.0 / alpha) *
               std::pow(std::cos(v - a) / e, (1.0 - alpha) / alpha);
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace wdecon
