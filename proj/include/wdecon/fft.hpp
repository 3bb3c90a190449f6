#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace wdecon {

// Iterative radix-2 Cooley-Tukey. n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size not a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Linear convolution of two sampled functions with shared spacing dx,
/// scaled so the result approximates the continuous convolution integral.
/// Index arithmetic: out[i] corresponds to offset (i - (nb - 1)) relative to
/// a's origin when b is indexed symmetrically; callers track origins.
inline std::vector<double> convolve_fft(const std::vector<double>& a, const std::vector<double>& b,
                                        double dx) {
    const std::size_t na = a.size(), nb = b.size();
    if (na == 0 || nb == 0) return {};
    const std::size_t m = next_pow2(na + nb - 1);
    std::vector<std::complex<double>> fa(m), fb(m);
    for (std::size_t i = 0; i < na; ++i) fa[i] = a[i];
    for (std::size_t i = 0; i < nb; ++i) fb[i] = b[i];
    fft_inplace(fa, false);
    fft_inplace(fb, false);
    for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
    fft_inplace(fa, true);
    std::vector<double> out(na + nb - 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fa[i].real() * dx;
    return out;
}

/// Direct O(n^2) linear convolution; self-check companion to convolve_fft.
inline std::vector<double> convolve_direct(const std::vector<double>& a,
                                           const std::vector<double>& b, double dx) {
    const std::size_t na = a.size(), nb = b.size();
    if (na == 0 || nb == 0) return {};
    std::vector<double> out(na + nb - 1, 0.0);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) out[i + j] += a[i] * b[j];
    for (auto& v : out) v *= dx;
    return out;
}

}  // namespace wdecon
