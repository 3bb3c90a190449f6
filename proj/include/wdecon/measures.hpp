#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdecon/common.hpp"
#include "wdecon/fft.hpp"
#include "wdecon/grid_density.hpp"
#include "wdecon/rng.hpp"

namespace wdecon {

/// n observations in R^d, row-major.
struct SampleBatch {
    std::vector<double> data;
    int n = 0;
    int d = 0;

    SampleBatch() = default;
    SampleBatch(int n_, int d_) : data(static_cast<std::size_t>(n_) * d_, 0.0), n(n_), d(d_) {
        if (n_ < 1 || d_ < 1) throw std::invalid_argument("SampleBatch: n,d must be >= 1");
    }

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * d + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * d + j]; }
    std::span<const double> row(int i) const {
        return {data.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
    }
};

enum class NoiseKind { DiracZero, Gaussian, Laplace, Cauchy, Stable, PoweredStable, Tabulated };

/// Smoothness descriptors of one error coordinate: exp(-|t|^beta / gamma)
/// decay scales for the characteristic-function lower bound (gamma1) and the
/// reciprocal growth bound (gamma2), plus the polynomial correction beta_tilde
/// and the two constants.
struct Smoothness {
    double beta = 0.0;
    double beta_tilde = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double c1 = 1.0;
    double c2 = 1.0;
};

namespace detail {

/// q_{alpha,k}: the k-fold self-convolution of exp(-|x|^alpha), tabulated once
/// per (alpha,k). Grid extent adds a margin where exp(-|x|^alpha) < 1e-14 so
/// truncated tails stay below that threshold.
struct PoweredStableTable {
    double alpha = 0.0;
    int k = 0;
    UniformTable q;       // q_{alpha,k}
    double q0 = 1.0;      // q_{alpha,k}(0)
    double x_limit = 0.0; // usable half-range

    static constexpr double kTailExp = 32.2362;  // ln(1e14)

    static PoweredStableTable build(double alpha, int k, double x_need = 24.0) {
        if (!(alpha > 0.0 && alpha < 2.0)) throw std::invalid_argument("powered-stable: alpha in (0,2)");
        if (k < 1) throw std::invalid_argument("powered-stable: k >= 1");
        const double margin = std::pow(kTailExp, 1.0 / alpha);
        const double S = x_need + margin;
        const std::size_t n_half = 1u << 18;
        const double dx = S / static_cast<double>(n_half);
        const std::size_t n = 2 * n_half + 1;
        std::vector<double> base(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = -S + static_cast<double>(i) * dx;
            base[i] = std::exp(-std::pow(std::abs(x), alpha));
        }
        std::vector<double> cur = base;
        for (int it = 1; it < k; ++it) {
            auto full = convolve_fft(cur, base, dx);
            // crop back to [-S, S]: full covers offset range of length na+nb-1
            // with center at index (full.size()-1)/2.
            const std::size_t c = (full.size() - 1) / 2;
            std::vector<double> cropped(n);
            for (std::size_t i = 0; i < n; ++i) cropped[i] = full[c - n_half + i];
            cur = std::move(cropped);
        }
        PoweredStableTable t;
        t.alpha = alpha;
        t.k = k;
        t.q0 = cur[n_half];
        t.q = UniformTable(-S, dx, std::move(cur), 0.0);
        t.x_limit = S - margin;  // beyond this, truncation bites
        return t;
    }
};

inline std::shared_ptr<const PoweredStableTable> powered_stable_cache(double alpha, int k) {
    static std::mutex mu;
    static std::map<std::pair<double, int>, std::shared_ptr<const PoweredStableTable>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_pair(alpha, k);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto ptr = std::make_shared<const PoweredStableTable>(PoweredStableTable::build(alpha, k));
    cache.emplace(key, ptr);
    return ptr;
}

}  // namespace detail

/// One error coordinate: kind, characteristic function, optional sampler and
/// density, smoothness constants.
class CoordinateNoise {
public:
    static CoordinateNoise dirac_zero() {
        CoordinateNoise c;
        c.kind_ = NoiseKind::DiracZero;
        c.smooth_ = {0.0, 0.0, 0.0, 0.0, 1.0, 1.0};
        return c;
    }

    static CoordinateNoise gaussian(double sigma) {
        if (!(sigma > 0.0)) throw std::invalid_argument("gaussian: sigma > 0");
        CoordinateNoise c;
        c.kind_ = NoiseKind::Gaussian;
        c.p1_ = sigma;
        c.smooth_ = {2.0, 0.0, 2.0 / (sigma * sigma), 2.0 / (sigma * sigma), 1.0, 1.0};
        return c;
    }

    static CoordinateNoise laplace(double b) {
        if (!(b > 0.0)) throw std::invalid_argument("laplace: b > 0");
        CoordinateNoise c;
        c.kind_ = NoiseKind::Laplace;
        c.p1_ = b;
        c.smooth_ = {0.0, 2.0, 0.0, 0.0, 1.0, 1.0};  // ordinary smooth: no supersmooth scale
        return c;
    }

    static CoordinateNoise cauchy(double s) {
        if (!(s > 0.0)) throw std::invalid_argument("cauchy: s > 0");
        CoordinateNoise c;
        c.kind_ = NoiseKind::Cauchy;
        c.p1_ = s;
        c.smooth_ = {1.0, 0.0, 1.0 / s, 1.0 / s, 1.0, 1.0};
        return c;
    }

    static CoordinateNoise stable(double alpha) {
        if (!(alpha > 0.0 && alpha < 2.0)) throw std::invalid_argument("stable: alpha in (0,2)");
        CoordinateNoise c;
        c.kind_ = NoiseKind::Stable;
        c.p1_ = alpha;
        c.smooth_ = {alpha, 0.0, 1.0, 1.0, 1.0, 1.0};
        return c;
    }

    static CoordinateNoise powered_stable(double alpha, int k) {
        CoordinateNoise c;
        c.kind_ = NoiseKind::PoweredStable;
        c.p1_ = alpha;
        c.k_ = k;
        c.table_ = detail::powered_stable_cache(alpha, k);
        // Sandwich bounds: exp(-|x|^a) <= q/q0 * q0 <= ..., giving gamma1 from
        // the upper envelope exp(-|x|^a / 2^{(k-1)a}) and gamma2 = 1 from the
        // reciprocal growth exp(+|x|^a).
        c.smooth_ = {alpha, 0.0, std::pow(2.0, (k - 1) * alpha), 1.0, 1.0, 1.0};
        return c;
    }

    static CoordinateNoise tabulated(std::vector<double> t_nodes_min_dx,
                                     std::vector<std::complex<double>> values) {
        // t_nodes_min_dx = {t0, dt}; values on t0 + i*dt.
        if (t_nodes_min_dx.size() != 2 || values.size() < 2)
            throw std::invalid_argument("tabulated: need {t0, dt} and >=2 values");
        CoordinateNoise c;
        c.kind_ = NoiseKind::Tabulated;
        c.tab_t0_ = t_nodes_min_dx[0];
        c.tab_dt_ = t_nodes_min_dx[1];
        c.tab_values_ = std::move(values);
        c.smooth_ = {};
        return c;
    }

    NoiseKind kind() const { return kind_; }
    const Smoothness& smoothness() const { return smooth_; }
    Smoothness& smoothness() { return smooth_; }
    double param() const { return p1_; }
    int power() const { return k_; }

    std::complex<double> char_fn(double t) const {
        switch (kind_) {
            case NoiseKind::DiracZero:
                return {1.0, 0.0};
            case NoiseKind::Gaussian:
                return {std::exp(-0.5 * sq(p1_ * t)), 0.0};
            case NoiseKind::Laplace:
                return {1.0 / (1.0 + sq(p1_ * t)), 0.0};
            case NoiseKind::Cauchy:
                return {std::exp(-p1_ * std::abs(t)), 0.0};
            case NoiseKind::Stable:
                return {std::exp(-std::pow(std::abs(t), p1_)), 0.0};
            case NoiseKind::PoweredStable: {
                if (std::abs(t) > table_->x_limit)
                    throw std::out_of_range("powered-stable char_fn: |t| beyond tabulation range");
                return {(*table_).q(t) / table_->q0, 0.0};
            }
            case NoiseKind::Tabulated: {
                const double s = (t - tab_t0_) / tab_dt_;
                const auto n = static_cast<std::ptrdiff_t>(tab_values_.size());
                if (s < 0.0 || s > static_cast<double>(n - 1))
                    throw std::out_of_range("tabulated char_fn: t outside tabulation range");
                auto i = static_cast<std::ptrdiff_t>(std::floor(s));
                if (i >= n - 1) i = n - 2;
                const double u = s - static_cast<double>(i);
                return tab_values_[static_cast<std::size_t>(i)] * (1.0 - u) +
                       tab_values_[static_cast<std::size_t>(i + 1)] * u;
            }
        }
        return {1.0, 0.0};
    }

    bool has_sampler() const {
        return kind_ != NoiseKind::PoweredStable && kind_ != NoiseKind::Tabulated;
    }

    double sample(Rng& rng) const {
        switch (kind_) {
            case NoiseKind::DiracZero: return 0.0;
            case NoiseKind::Gaussian: return p1_ * rng.normal();
            case NoiseKind::Laplace: return rng.laplace(p1_);
            case NoiseKind::Cauchy: return rng.cauchy(p1_);
            case NoiseKind::Stable: return rng.stable(p1_);
            default:
                throw UnsupportedSamplerError("sample_noise: kind has no sampler");
        }
    }

    /// Closed-form density where one exists.
    std::optional<double> density(double x) const {
        switch (kind_) {
            case NoiseKind::Gaussian:
                return std::exp(-0.5 * sq(x / p1_)) / (p1_ * std::sqrt(2.0 * std::numbers::pi));
            case NoiseKind::Laplace:
                return std::exp(-std::abs(x) / p1_) / (2.0 * p1_);
            case NoiseKind::Cauchy:
                return p1_ / (std::numbers::pi * (sq(p1_) + sq(x)));
            default:
                return std::nullopt;
        }
    }

private:
    NoiseKind kind_ = NoiseKind::DiracZero;
    double p1_ = 0.0;
    int k_ = 0;
    std::shared_ptr<const detail::PoweredStableTable> table_;
    double tab_t0_ = 0.0, tab_dt_ = 1.0;
    std::vector<std::complex<double>> tab_values_;
    Smoothness smooth_;
};

/// Known error law with independent coordinates.
class NoiseModel {
public:
    NoiseModel() = default;
    explicit NoiseModel(std::vector<CoordinateNoise> coords) : coords_(std::move(coords)) {
        if (coords_.empty()) throw std::invalid_argument("NoiseModel: need >= 1 coordinate");
    }

    static NoiseModel iid(const CoordinateNoise& c, int d) {
        return NoiseModel(std::vector<CoordinateNoise>(static_cast<std::size_t>(d), c));
    }

    int dim() const { return static_cast<int>(coords_.size()); }
    const CoordinateNoise& coord(int j) const { return coords_[static_cast<std::size_t>(j)]; }

private:
    std::vector<CoordinateNoise> coords_;
};

/// mu*_{eps,j}(t).
inline std::complex<double> char_fn_eval(const NoiseModel& model, int j, double t) {
    if (j < 0 || j >= model.dim()) throw std::invalid_argument("char_fn_eval: bad coordinate");
    if (!std::isfinite(t)) throw std::invalid_argument("char_fn_eval: t not finite");
    return model.coord(j).char_fn(t);
}

/// n i.i.d. draws from the noise law. Coordinates are drawn row by row so the
/// stream for a fixed seed is a stable contract.
inline SampleBatch sample_noise(const NoiseModel& model, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample_noise: n >= 1");
    for (int j = 0; j < model.dim(); ++j)
        if (!model.coord(j).has_sampler())
            throw UnsupportedSamplerError("sample_noise: coordinate " + std::to_string(j + 1) +
                                          " has no sampler");
    SampleBatch out(n, model.dim());
    Rng rng(seed);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < model.dim(); ++j) out.at(i, j) = model.coord(j).sample(rng);
    return out;
}

/// Invertible linear map with cached inverse, determinant and operator norms.
struct LinearMap {
    int d = 0;
    std::vector<double> matrix;   // row-major d x d
    std::vector<double> inverse;  // row-major d x d
    double det_abs = 1.0;
    double op_norm = 1.0;
    double inv_op_norm = 1.0;

    static LinearMap identity(int d) {
        std::vector<double> m(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < d; ++i) m[static_cast<std::size_t>(i) * d + i] = 1.0;
        return from_matrix(d, m);
    }

    static LinearMap from_matrix(int d, std::vector<double> m) {
        if (d < 1 || m.size() != static_cast<std::size_t>(d) * d)
            throw std::invalid_argument("LinearMap: bad dimensions");
        LinearMap lm;
        lm.d = d;
        lm.matrix = m;
        // Gauss-Jordan with partial pivoting; also accumulates the determinant.
        std::vector<double> a = m;
        std::vector<double> inv(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < d; ++i) inv[static_cast<std::size_t>(i) * d + i] = 1.0;
        double det = 1.0;
        for (int col = 0; col < d; ++col) {
            int piv = col;
            for (int r = col + 1; r < d; ++r)
                if (std::abs(a[static_cast<std::size_t>(r) * d + col]) >
                    std::abs(a[static_cast<std::size_t>(piv) * d + col]))
                    piv = r;
            if (std::abs(a[static_cast<std::size_t>(piv) * d + col]) < 1e-300)
                throw std::invalid_argument("LinearMap: singular matrix");
            if (piv != col) {
                for (int c = 0; c < d; ++c) {
                    std::swap(a[static_cast<std::size_t>(piv) * d + c],
                              a[static_cast<std::size_t>(col) * d + c]);
                    std::swap(inv[static_cast<std::size_t>(piv) * d + c],
                              inv[static_cast<std::size_t>(col) * d + c]);
                }
                det = -det;
            }
            const double p = a[static_cast<std::size_t>(col) * d + col];
            det *= p;
            for (int c = 0; c < d; ++c) {
                a[static_cast<std::size_t>(col) * d + c] /= p;
                inv[static_cast<std::size_t>(col) * d + c] /= p;
            }
            for (int r = 0; r < d; ++r) {
                if (r == col) continue;
                const double f = a[static_cast<std::size_t>(r) * d + col];
                if (f == 0.0) continue;
                for (int c = 0; c < d; ++c) {
                    a[static_cast<std::size_t>(r) * d + c] -=
                        f * a[static_cast<std::size_t>(col) * d + c];
                    inv[static_cast<std::size_t>(r) * d + c] -=
                        f * inv[static_cast<std::size_t>(col) * d + c];
                }
            }
        }
        lm.inverse = std::move(inv);
        lm.det_abs = std::abs(det);
        lm.op_norm = spectral_norm(d, lm.matrix);
        lm.inv_op_norm = spectral_norm(d, lm.inverse);
        return lm;
    }

    /// Largest singular value by power iteration on A^T A.
    static double spectral_norm(int d, const std::vector<double>& m) {
        std::vector<double> v(static_cast<std::size_t>(d), 1.0 / std::sqrt(static_cast<double>(d)));
        std::vector<double> av(static_cast<std::size_t>(d)), atav(static_cast<std::size_t>(d));
        double lambda = 0.0;
        for (int it = 0; it < 500; ++it) {
            for (int i = 0; i < d; ++i) {
                double s = 0.0;
                for (int j = 0; j < d; ++j) s += m[static_cast<std::size_t>(i) * d + j] * v[static_cast<std::size_t>(j)];
                av[static_cast<std::size_t>(i)] = s;
            }
            for (int i = 0; i < d; ++i) {
                double s = 0.0;
                for (int j = 0; j < d; ++j) s += m[static_cast<std::size_t>(j) * d + i] * av[static_cast<std::size_t>(j)];
                atav[static_cast<std::size_t>(i)] = s;
            }
            double norm = 0.0;
            for (double x : atav) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-300) return 0.0;
            double next = 0.0;
            for (int i = 0; i < d; ++i) {
                v[static_cast<std::size_t>(i)] = atav[static_cast<std::size_t>(i)] / norm;
                next += v[static_cast<std::size_t>(i)] * atav[static_cast<std::size_t>(i)];
            }
            if (it > 4 && std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        return std::sqrt(lambda);
    }

    void apply_point(std::span<const double> x, std::span<double> out) const {
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j)
                s += matrix[static_cast<std::size_t>(i) * d + j] * x[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = s;
        }
    }

    void apply_inverse_point(std::span<const double> x, std::span<double> out) const {
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j)
                s += inverse[static_cast<std::size_t>(i) * d + j] * x[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = s;
        }
    }

    LinearMap inverted() const {
        LinearMap lm;
        lm.d = d;
        lm.matrix = inverse;
        lm.inverse = matrix;
        lm.det_abs = 1.0 / det_abs;
        lm.op_norm = inv_op_norm;
        lm.inv_op_norm = op_norm;
        return lm;
    }

    bool is_identity(double tol = 1e-14) const {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const double want = (i == j) ? 1.0 : 0.0;
                if (std::abs(matrix[static_cast<std::size_t>(i) * d + j] - want) > tol) return false;
            }
        return true;
    }
};

inline SampleBatch apply_linear(const LinearMap& map, const SampleBatch& batch) {
    if (map.d != batch.d) throw std::invalid_argument("apply_linear: dimension mismatch");
    SampleBatch out(batch.n, batch.d);
    std::vector<double> tmp(static_cast<std::size_t>(batch.d));
    for (int i = 0; i < batch.n; ++i) {
        map.apply_point(batch.row(i), tmp);
        for (int j = 0; j < batch.d; ++j) out.at(i, j) = tmp[static_cast<std::size_t>(j)];
    }
    return out;
}

/// Moment bound defining membership of D_A(M,p) (or C_A(M,p) when the
/// coordinates of A X are independent).
struct MomentBound {
    double p = 1.0;
    double M = 1.0;
    bool independent_coords = false;
};

struct MomentValue {
    double value = 0.0;
    bool truncated = false;  // quadrature saw non-negligible mass at the grid edge
};

/// sup_j E[(1 + |(AX)_j|^{2p+2}) prod_{l != j} (1 + (AX)_l^2)], plug-in
/// average over an empirical batch.
inline MomentValue moment_functional(const SampleBatch& batch, const LinearMap& map, double p) {
    if (p < 1.0) throw std::invalid_argument("moment_functional: p >= 1");
    if (map.d != batch.d) throw std::invalid_argument("moment_functional: dimension mismatch");
    const int d = batch.d;
    std::vector<double> ax(static_cast<std::size_t>(d));
    double best = 0.0;
    for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int i = 0; i < batch.n; ++i) {
            map.apply_point(batch.row(i), ax);
            double term = 1.0 + std::pow(std::abs(ax[static_cast<std::size_t>(j)]), 2.0 * p + 2.0);
            for (int l = 0; l < d; ++l)
                if (l != j) term *= 1.0 + sq(ax[static_cast<std::size_t>(l)]);
            acc += term;
        }
        best = std::max(best, acc / batch.n);
    }
    return {best, false};
}

/// Tensor-product trapezoidal evaluation of the same functional for a grid
/// density; flags truncation when the outer shell carries > 1% of the
/// integrand mass.
inline MomentValue moment_functional(const GridDensity& gd, const LinearMap& map, double p) {
    if (p < 1.0) throw std::invalid_argument("moment_functional: p >= 1");
    if (map.d != gd.dim()) throw std::invalid_argument("moment_functional: dimension mismatch");
    const int d = gd.dim();
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    std::vector<double> x(static_cast<std::size_t>(d)), ax(static_cast<std::size_t>(d));
    double cell = 1.0;
    for (int j = 0; j < d; ++j) cell *= gd.axis(j).spacing();
    std::vector<double> acc(static_cast<std::size_t>(d), 0.0), edge(static_cast<std::size_t>(d), 0.0);
    for (std::size_t flat = 0; flat < gd.size(); ++flat) {
        double w = 1.0;
        bool on_edge = false;
        for (int j = 0; j < d; ++j) {
            const int i = idx[static_cast<std::size_t>(j)];
            const int c = gd.axis(j).count;
            w *= (i == 0 || i == c - 1) ? 0.5 : 1.0;
            if (i <= 1 || i >= c - 2) on_edge = true;
            x[static_cast<std::size_t>(j)] = gd.axis(j).node(i);
        }
        map.apply_point(x, ax);
        const double f = gd.values()[flat] * w;
        for (int j = 0; j < d; ++j) {
            double term = 1.0 + std::pow(std::abs(ax[static_cast<std::size_t>(j)]), 2.0 * p + 2.0);
            for (int l = 0; l < d; ++l)
                if (l != j) term *= 1.0 + sq(ax[static_cast<std::size_t>(l)]);
            acc[static_cast<std::size_t>(j)] += term * f;
            if (on_edge) edge[static_cast<std::size_t>(j)] += term * f;
        }
        // manual index advance (row-major)
        for (int j = d; j-- > 0;) {
            if (++idx[static_cast<std::size_t>(j)] < gd.axis(j).count) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
    }
    MomentValue out;
    for (int j = 0; j < d; ++j) {
        const double v = acc[static_cast<std::size_t>(j)] * cell;
        if (v > out.value) out.value = v;
        if (edge[static_cast<std::size_t>(j)] * cell > 0.01 * std::abs(v)) out.truncated = true;
    }
    return out;
}

}  // namespace wdecon
