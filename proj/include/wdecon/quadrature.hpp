#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wdecon/common.hpp"

namespace wdecon {

/// Trapezoid rule over uniformly spaced samples.
inline double trapezoid(std::span<const double> values, double dx) {
    if (values.size() < 2) return 0.0;
    double s = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
    return s * dx;
}

namespace detail {

template <class F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson integration with absolute tolerance.
template <class F>
double integrate_adaptive(const F& f, double a, double b, double tol = 1e-10, int max_depth = 48) {
    if (!(a < b)) return a == b ? 0.0 : -integrate_adaptive(f, b, a, tol, max_depth);
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Adaptive integration split at interior kinks (integrand not smooth there).
template <class F>
double integrate_adaptive_split(const F& f, double a, double b, std::span<const double> kinks,
                                double tol = 1e-10) {
    std::vector<double> pts{a, b};
    for (double k : kinks)
        if (k > a && k < b) pts.push_back(k);
    std::sort(pts.begin(), pts.end());
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        s += integrate_adaptive(f, pts[i], pts[i + 1], tol / static_cast<double>(pts.size()));
    return s;
}

namespace detail {
// 20-point Gauss-Legendre nodes/weights on [-1,1] (positive half; symmetric).
inline constexpr double kGL20x[10] = {
    0.0765265211334973, 0.2277858511416451, 0.3737060887154195, 0.5108670019508271,
    0.6360536807265150, 0.7463319064601508, 0.8391169718222188, 0.9122344282513259,
    0.9639719272779138, 0.9931285991850949};
inline constexpr double kGL20w[10] = {
    0.1527533871307258, 0.1491729864726037, 0.1420961093183820, 0.1316886384491766,
    0.1181945319615184, 0.1019301198172404, 0.0832767415767048, 0.0626720483341091,
    0.0406014298003869, 0.0176140071391521};
}  // namespace detail

/// 20-point Gauss-Legendre on a single panel.
template <class F>
double gauss20(const F& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double dx = h * detail::kGL20x[i];
        s += detail::kGL20w[i] * (f(c - dx) + f(c + dx));
    }
    return s * h;
}

/// Composite fixed-panel Gauss quadrature; suited to oscillatory integrands
/// when panels resolve the oscillation.
template <class F>
double gauss_panels(const F& f, double a, double b, int n_panels) {
    if (n_panels < 1) throw std::invalid_argument("gauss_panels: n_panels < 1");
    const double h = (b - a) / n_panels;
    double s = 0.0;
    for (int i = 0; i < n_panels; ++i) s += gauss20(f, a + i * h, a + (i + 1) * h);
    return s;
}

}  // namespace wdecon
