#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdecon/common.hpp"
#include "wdecon/measures.hpp"
#include "wdecon/quadrature.hpp"

namespace wdecon {

/// Order of the sinc-power kernel for Wasserstein order p.
inline int kernel_order(double p) {
    if (p < 1.0) throw std::invalid_argument("kernel_order: p >= 1");
    return 2 * static_cast<int>(std::ceil(p / 2.0)) + 2;
}

namespace detail {

/// Central B-spline of order m (density of the sum of m iid uniforms on
/// [-1/2,1/2]), via the truncated-power expansion. Support [-m/2, m/2].
inline double central_bspline(int m, double x) {
    const double half = 0.5 * m;
    if (std::abs(x) >= half) return 0.0;
    double fact = 1.0;
    for (int i = 2; i < m; ++i) fact *= i;
    double binom = 1.0;
    double s = 0.0;
    for (int j = 0; j <= m; ++j) {
        const double base = x + half - j;
        if (base > 0.0) {
            double pw = 1.0;
            for (int q = 0; q < m - 1; ++q) pw *= base;
            s += ((j % 2 == 0) ? 1.0 : -1.0) * binom * pw;
        }
        binom = binom * (m - j) / (j + 1);
    }
    return s / fact;
}

inline double sinc(double y) {
    if (std::abs(y) < 1e-4) {
        const double y2 = y * y;
        return 1.0 - y2 / 6.0 + y2 * y2 / 120.0;
    }
    return std::sin(y) / y;
}

}  // namespace detail

/// Sinc-power smoothing kernel of order m = 2*ceil(p/2)+2. The normalizer c_p
/// comes from k*(0) = 1, equivalent to the unit-integral condition under the
/// transform convention used throughout.
struct KernelSpec {
    double p = 1.0;
    int m = 4;
    double c_p = 0.0;

    static KernelSpec for_order(double p) {
        KernelSpec s;
        s.p = p;
        s.m = kernel_order(p);
        // k*(u) = M_m(m u / 2) / M_m(0); integral of k equals 1 iff
        // c_p = 1 / (pi * m * M_m(0)).
        s.c_p = 1.0 / (std::numbers::pi * s.m * detail::central_bspline(s.m, 0.0));
        return s;
    }
};

/// k(x) = c_p { m sin(x/m) / x }^m, total on the reals.
inline double kernel_density(const KernelSpec& spec, double x) {
    return spec.c_p * std::pow(detail::sinc(x / spec.m), spec.m);
}

/// k*(u): the m-fold self-convolution of the uniform density on [-1/m, 1/m]
/// rescaled to k*(0) = 1. Piecewise polynomial of degree m-1, identically zero
/// outside [-1,1], with m-2 continuous derivatives.
inline double kernel_ft(const KernelSpec& spec, double u) {
    if (std::abs(u) >= 1.0) return 0.0;
    return detail::central_bspline(spec.m, 0.5 * spec.m * u) /
           detail::central_bspline(spec.m, 0.0);
}

/// Tabulated deconvolution kernel for one coordinate and bandwidth.
struct DeconvKernelTable {
    KernelSpec spec;
    int coordinate = 0;
    double bandwidth = 1.0;
    std::vector<double> grid;
    std::vector<double> values;
    int quadrature_nodes = 0;
    double max_imag_residue = 0.0;

    double eval(double x) const { return interp_(x); }
    const UniformTable& table() const { return interp_; }

    UniformTable interp_;
};

namespace detail {

inline std::vector<double> deconv_values(const KernelSpec& spec, const CoordinateNoise& noise,
                                         double h, const std::vector<double>& xs, int panels,
                                         double* max_imag) {
    // (1/2pi) int_{-1}^{1} e^{iux} k*(u) / mu*(u/h) du by trapezoid on a
    // uniform u-grid; the integrand vanishes at +-1 with the spline's edge
    // zeros, so the rule converges fast.
    const int nodes = panels + 1;
    std::vector<std::complex<double>> ratio(static_cast<std::size_t>(nodes));
    const double du = 2.0 / panels;
    for (int q = 0; q < nodes; ++q) {
        const double u = -1.0 + q * du;
        const auto cf = noise.char_fn(u / h);
        if (std::abs(cf) <= 1e-300)
            throw SingularityError(
                "deconv_kernel: characteristic function vanishes at u = " + std::to_string(u), u);
        ratio[static_cast<std::size_t>(q)] = kernel_ft(spec, u) / cf;
    }
    // endpoint weights folded in; e^{iux} advanced by phase rotation
    ratio.front() *= 0.5;
    ratio.back() *= 0.5;
    std::vector<double> out(xs.size());
    double imag_peak = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double x = xs[i];
        std::complex<double> phase(std::cos(-x), std::sin(-x));  // u = -1
        const std::complex<double> step(std::cos(du * x), std::sin(du * x));
        std::complex<double> acc(0.0, 0.0);
        for (int q = 0; q < nodes; ++q) {
            acc += ratio[static_cast<std::size_t>(q)] * phase;
            phase *= step;
        }
        acc *= du / (2.0 * std::numbers::pi);
        out[i] = acc.real();
        imag_peak = std::max(imag_peak, std::abs(acc.imag()));
    }
    if (max_imag) *max_imag = imag_peak;
    return out;
}

}  // namespace detail

/// Tabulates the deconvolution kernel on the given abscissae. A doubled-node
/// quadrature pass guards convergence: the two rules must agree to 1e-8
/// relative sup-norm.
inline DeconvKernelTable deconv_kernel(const KernelSpec& spec, const NoiseModel& noise, int j,
                                       double h, std::vector<double> grid, int panels = 4096) {
    if (!(h > 0.0)) throw std::invalid_argument("deconv_kernel: h > 0");
    if (j < 0 || j >= noise.dim()) throw std::invalid_argument("deconv_kernel: bad coordinate");
    if (grid.size() < 2) throw std::invalid_argument("deconv_kernel: need >= 2 abscissae");
    const auto& cn = noise.coord(j);
    double imag = 0.0;
    auto vals = detail::deconv_values(spec, cn, h, grid, panels, &imag);
    auto vals2 = detail::deconv_values(spec, cn, h, grid, 2 * panels, nullptr);
    double peak = 1e-300, diff = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        peak = std::max(peak, std::abs(vals2[i]));
        diff = std::max(diff, std::abs(vals2[i] - vals[i]));
    }
    if (diff > 1e-8 * peak)
        throw std::runtime_error("deconv_kernel: quadrature not converged at " +
                                 std::to_string(panels) + " panels");
    DeconvKernelTable t;
    t.spec = spec;
    t.coordinate = j;
    t.bandwidth = h;
    t.quadrature_nodes = panels + 1;
    t.max_imag_residue = imag;
    t.values = std::move(vals2);
    const double x0 = grid.front();
    const double dx = grid[1] - grid[0];
    t.grid = std::move(grid);
    t.interp_ = UniformTable(x0, dx, t.values, 0.0);
    return t;
}

struct VarianceBoundTerms {
    double I = 0.0;
    double J = 0.0;
};

namespace detail {

/// Derivative of order ell of r_j = 1 / mu*_{eps,j}. Analytic for Gaussian,
/// Laplace and Dirac kinds, central finite differences otherwise.
class ReciprocalCf {
public:
    ReciprocalCf(const CoordinateNoise& noise, int max_order) : noise_(noise) {
        switch (noise.kind()) {
            case NoiseKind::Gaussian: {
                // r = exp(s u^2 / 2) with s = sigma^2; r^{(l)} = P_l(u) r with
                // P_{l+1} = P_l' + s u P_l.
                const double s = sq(noise.param());
                polys_.push_back({1.0});
                for (int l = 0; l < max_order; ++l) {
                    const auto& p = polys_.back();
                    std::vector<double> nxt(p.size() + 1, 0.0);
                    for (std::size_t i = 1; i < p.size(); ++i) nxt[i - 1] += i * p[i];
                    for (std::size_t i = 0; i < p.size(); ++i) nxt[i + 1] += s * p[i];
                    polys_.push_back(std::move(nxt));
                }
                mode_ = Mode::GaussPoly;
                break;
            }
            case NoiseKind::Laplace:
                mode_ = Mode::LaplacePoly;
                break;
            case NoiseKind::DiracZero:
                mode_ = Mode::One;
                break;
            default:
                mode_ = Mode::FiniteDiff;
                break;
        }
    }

    double operator()(int ell, double u) const {
        switch (mode_) {
            case Mode::One:
                return ell == 0 ? 1.0 : 0.0;
            case Mode::GaussPoly: {
                const double s = sq(noise_.param());
                const auto& p = polys_[static_cast<std::size_t>(ell)];
                double acc = 0.0;
                for (std::size_t i = p.size(); i-- > 0;) acc = acc * u + p[i];
                return acc * std::exp(0.5 * s * u * u);
            }
            case Mode::LaplacePoly: {
                const double b2 = sq(noise_.param());
                if (ell == 0) return 1.0 + b2 * u * u;
                if (ell == 1) return 2.0 * b2 * u;
                if (ell == 2) return 2.0 * b2;
                return 0.0;
            }
            case Mode::FiniteDiff:
                return fd(ell, u);
        }
        return 0.0;
    }

private:
    double r0(double u) const {
        const double a = std::abs(noise_.char_fn(u));
        if (a <= 1e-300) throw SingularityError("variance_bound_terms: char fn vanished", u);
        return 1.0 / a;
    }

    double fd(int ell, double u) const {
        if (ell == 0) return r0(u);
        const double step = 1e-4 * std::max(1.0, std::abs(u));
        return (fd(ell - 1, u + step) - fd(ell - 1, u - step)) / (2.0 * step);
    }

    enum class Mode { One, GaussPoly, LaplacePoly, FiniteDiff };
    const CoordinateNoise& noise_;
    Mode mode_ = Mode::FiniteDiff;
    std::vector<std::vector<double>> polys_;
};

}  // namespace detail

/// Diagnostic integrals of the variance bound:
///   I_j(h) = sqrt( int_{-1/h}^{1/h} r^2 + (r')^2 ),
///   J_j(h) = sqrt( int r^2 + (r^{(cp+1)})^2 ) + sum_{k=1}^{cp} h^{cp+1-k} sqrt( int (r^{(k)})^2 )
/// with cp = ceil(p).
inline VarianceBoundTerms variance_bound_terms(const KernelSpec& spec, const NoiseModel& noise,
                                               int j, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("variance_bound_terms: h > 0");
    const int cp = static_cast<int>(std::ceil(spec.p));
    const auto& cn = noise.coord(j);
    const double limit = 1.0 / h;

    // Overflow guard: the Gaussian reciprocal grows like exp(s u^2 / 2).
    if (cn.kind() == NoiseKind::Gaussian) {
        const double s = sq(cn.param());
        if (0.5 * s * limit * limit > 690.0)
            throw OverflowBoundError("variance_bound_terms: exp overflow at 1/h",
                                     std::sqrt(2.0 * 690.0 / s));
    }
    if (cn.kind() == NoiseKind::Cauchy || cn.kind() == NoiseKind::Stable) {
        const auto& sm = cn.smoothness();
        if (std::pow(limit, sm.beta) / sm.gamma2 > 690.0)
            throw OverflowBoundError("variance_bound_terms: exp overflow at 1/h",
                                     std::pow(690.0 * sm.gamma2, 1.0 / sm.beta));
    }

    detail::ReciprocalCf r(cn, cp + 1);
    auto sq_int = [&](auto f) {
        // even integrands: integrate half range and double
        return 2.0 * integrate_adaptive(f, 0.0, limit, 1e-12 * std::max(1.0, limit));
    };
    const double base = sq_int([&](double u) { return sq(r(0, u)); });
    const double d1 = sq_int([&](double u) { return sq(r(1, u)); });
    VarianceBoundTerms out;
    out.I = std::sqrt(base + d1);
    const double dtop = sq_int([&](double u) { return sq(r(cp + 1, u)); });
    out.J = std::sqrt(base + dtop);
    for (int k = 1; k <= cp; ++k) {
        const double dk = (k == 1) ? d1 : sq_int([&](double u) { return sq(r(k, u)); });
        out.J += std::pow(h, cp + 1 - k) * std::sqrt(dk);
    }
    return out;
}

}  // namespace wdecon
