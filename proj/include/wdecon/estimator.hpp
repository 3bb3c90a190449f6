#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "wdecon/grid_density.hpp"
#include "wdecon/kernel.hpp"
#include "wdecon/measures.hpp"

namespace wdecon {

/// Bandwidth of the supersmooth rate theorem: h = (4d / (gamma2 log n))^{1/beta},
/// shared by every coordinate.
inline double bandwidth_rule(int d, double beta, double gamma2, double n) {
    if (d < 1) throw std::invalid_argument("bandwidth_rule: d >= 1");
    if (!(beta > 0.0)) throw std::invalid_argument("bandwidth_rule: beta > 0");
    if (!(gamma2 > 0.0)) throw std::invalid_argument("bandwidth_rule: gamma2 > 0");
    if (!(n >= 3.0)) throw std::invalid_argument("bandwidth_rule: n >= 3 (log n must be positive)");
    return std::pow(4.0 * d / (gamma2 * std::log(n)), 1.0 / beta);
}

struct EstimatorConfig {
    double p = 1.0;
    std::vector<double> bandwidths;
    std::vector<Axis> grid;
    std::optional<LinearMap> decorrelation;
};

struct EstimateDiagnostics {
    double raw_integral = 0.0;
    bool mass_warning = false;       // raw integral off 1 by > 0.1
    bool edge_mass_warning = false;  // > 1% of |mass| in the outer 2 cells
    bool extent_warning = false;     // grid narrower than data range + 5h
};

/// Default grid: data range extended by 5 bandwidths, 256 nodes per axis for
/// d <= 2 and 64 for d >= 3.
inline std::vector<Axis> auto_grid(const SampleBatch& batch, const std::vector<double>& bandwidths,
                                   int nodes_per_axis = 0) {
    if (static_cast<int>(bandwidths.size()) != batch.d)
        throw std::invalid_argument("auto_grid: bandwidth count mismatch");
    const int nodes = nodes_per_axis > 0 ? nodes_per_axis : (batch.d <= 2 ? 256 : 64);
    std::vector<Axis> axes;
    for (int j = 0; j < batch.d; ++j) {
        double lo = batch.at(0, j), hi = lo;
        for (int i = 1; i < batch.n; ++i) {
            lo = std::min(lo, batch.at(i, j));
            hi = std::max(hi, batch.at(i, j));
        }
        const double pad = 5.0 * bandwidths[static_cast<std::size_t>(j)];
        axes.push_back({lo - pad, hi + pad, nodes});
    }
    return axes;
}

namespace detail {

inline DeconvKernelTable kernel_table_for(const KernelSpec& spec, const NoiseModel& noise, int j,
                                          double h, const Axis& ax, double y_min, double y_max) {
    const double arg_lo = (ax.min - y_max) / h - 1.0;
    const double arg_hi = (ax.max - y_min) / h + 1.0;
    const double step = 0.05;
    const int nodes = std::max(33, static_cast<int>(std::ceil((arg_hi - arg_lo) / step)) + 1);
    return deconv_kernel(spec, noise, j, h, linspace(arg_lo, arg_hi, nodes));
}

}  // namespace detail

/// Preliminary deconvolution estimator tabulated on the configured grid:
/// mean over samples of the product of per-coordinate scaled deconvolution
/// kernels. Not necessarily nonnegative.
inline GridDensity estimate_raw(const SampleBatch& batch, const NoiseModel& noise,
                                const EstimatorConfig& cfg, EstimateDiagnostics* diag = nullptr) {
    const int d = batch.d;
    if (noise.dim() != d) throw std::invalid_argument("estimate_raw: noise dimension mismatch");
    if (static_cast<int>(cfg.bandwidths.size()) != d)
        throw std::invalid_argument("estimate_raw: bandwidth count mismatch");
    if (static_cast<int>(cfg.grid.size()) != d)
        throw std::invalid_argument("estimate_raw: grid dimension mismatch");
    for (double h : cfg.bandwidths)
        if (!(h > 0.0) || h > 1.0)
            throw std::invalid_argument("estimate_raw: bandwidths must lie in (0, 1]");
    if (cfg.decorrelation && !cfg.decorrelation->is_identity())
        throw std::invalid_argument("estimate_raw: use estimate_measure for non-identity maps");

    const KernelSpec spec = KernelSpec::for_order(cfg.p);
    std::vector<DeconvKernelTable> tables;
    std::vector<double> y_lo(static_cast<std::size_t>(d)), y_hi(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        double lo = batch.at(0, j), hi = lo;
        for (int i = 1; i < batch.n; ++i) {
            lo = std::min(lo, batch.at(i, j));
            hi = std::max(hi, batch.at(i, j));
        }
        y_lo[static_cast<std::size_t>(j)] = lo;
        y_hi[static_cast<std::size_t>(j)] = hi;
        tables.push_back(detail::kernel_table_for(spec, noise, j, cfg.bandwidths[static_cast<std::size_t>(j)],
                                                  cfg.grid[static_cast<std::size_t>(j)], lo, hi));
    }

    std::size_t total = 1;
    for (const auto& ax : cfg.grid) total *= static_cast<std::size_t>(ax.count);
    std::vector<double> values(total, 0.0);

    // per-sample separable accumulation
    std::vector<std::vector<double>> per_axis(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        per_axis[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(cfg.grid[static_cast<std::size_t>(j)].count));

    for (int i = 0; i < batch.n; ++i) {
        for (int j = 0; j < d; ++j) {
            const Axis& ax = cfg.grid[static_cast<std::size_t>(j)];
            const double h = cfg.bandwidths[static_cast<std::size_t>(j)];
            const double y = batch.at(i, j);
            auto& v = per_axis[static_cast<std::size_t>(j)];
            const auto& tab = tables[static_cast<std::size_t>(j)];
            for (int g = 0; g < ax.count; ++g) v[static_cast<std::size_t>(g)] = tab.eval((ax.node(g) - y) / h) / h;
        }
        if (d == 1) {
            const auto& v0 = per_axis[0];
            for (std::size_t g = 0; g < v0.size(); ++g) values[g] += v0[g];
        } else if (d == 2) {
            const auto& v0 = per_axis[0];
            const auto& v1 = per_axis[1];
            const std::size_t c1 = v1.size();
            for (std::size_t a = 0; a < v0.size(); ++a) {
                const double f = v0[a];
                if (f == 0.0) continue;
                double* row = values.data() + a * c1;
                for (std::size_t b = 0; b < c1; ++b) row[b] += f * v1[b];
            }
        } else {
            std::vector<int> idx(static_cast<std::size_t>(d), 0);
            for (std::size_t flat = 0; flat < total; ++flat) {
                double f = 1.0;
                for (int j = 0; j < d; ++j)
                    f *= per_axis[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
                values[flat] += f;
                for (int j = d; j-- > 0;) {
                    if (++idx[static_cast<std::size_t>(j)] < cfg.grid[static_cast<std::size_t>(j)].count) break;
                    idx[static_cast<std::size_t>(j)] = 0;
                }
            }
        }
    }
    for (auto& v : values) v /= batch.n;

    GridDensity out(cfg.grid, std::move(values), false);
    if (diag) {
        diag->raw_integral = out.integral();
        diag->mass_warning = std::abs(diag->raw_integral - 1.0) > 0.1;
        // |mass| share of the outer two node layers
        double edge = 0.0, bulk = 0.0;
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        for (std::size_t flat = 0; flat < out.size(); ++flat) {
            bool on_edge = false;
            for (int j = 0; j < d; ++j) {
                const int i = idx[static_cast<std::size_t>(j)];
                if (i <= 1 || i >= cfg.grid[static_cast<std::size_t>(j)].count - 2) on_edge = true;
            }
            const double a = std::abs(out.values()[flat]);
            bulk += a;
            if (on_edge) edge += a;
            for (int j = d; j-- > 0;) {
                if (++idx[static_cast<std::size_t>(j)] < cfg.grid[static_cast<std::size_t>(j)].count) break;
                idx[static_cast<std::size_t>(j)] = 0;
            }
        }
        diag->edge_mass_warning = bulk > 0.0 && edge > 0.01 * bulk;
        for (int j = 0; j < d; ++j) {
            const double pad = 5.0 * cfg.bandwidths[static_cast<std::size_t>(j)];
            if (cfg.grid[static_cast<std::size_t>(j)].min > y_lo[static_cast<std::size_t>(j)] - pad + 1e-12 ||
                cfg.grid[static_cast<std::size_t>(j)].max < y_hi[static_cast<std::size_t>(j)] + pad - 1e-12)
                diag->extent_warning = true;
        }
    }
    return out;
}

/// Positive-part probability normalization: clip at zero, rescale to unit
/// trapezoidal mass.
inline GridDensity positive_normalize(const GridDensity& raw) {
    GridDensity out = raw;
    for (auto& v : out.values()) v = std::max(0.0, v);
    const double mass = out.integral();
    if (!(mass > 0.0))
        throw DegenerateEstimateError("positive_normalize: positive part has zero mass");
    for (auto& v : out.values()) v /= mass;
    out.set_normalized(true);
    return out;
}

/// Full pipeline for noise with a decorrelating invertible map A: estimate in
/// the transformed frame, then map the density back by the change of
/// variables g(x) = |det A| g_A(A x), resampled onto the configured grid.
inline GridDensity estimate_measure(const SampleBatch& batch, const NoiseModel& noise,
                                    const EstimatorConfig& cfg, EstimateDiagnostics* diag = nullptr) {
    if (!cfg.decorrelation || cfg.decorrelation->is_identity()) {
        EstimatorConfig plain = cfg;
        plain.decorrelation.reset();
        return positive_normalize(estimate_raw(batch, noise, plain, diag));
    }
    const LinearMap& A = *cfg.decorrelation;
    if (A.d != batch.d) throw std::invalid_argument("estimate_measure: map dimension mismatch");
    SampleBatch z = apply_linear(A, batch);
    EstimatorConfig frame = cfg;
    frame.decorrelation.reset();
    frame.grid = auto_grid(z, cfg.bandwidths, cfg.grid.empty() ? 0 : cfg.grid[0].count);
    const GridDensity g_a = positive_normalize(estimate_raw(z, noise, frame, diag));

    std::size_t total = 1;
    for (const auto& ax : cfg.grid) total *= static_cast<std::size_t>(ax.count);
    std::vector<double> values(total, 0.0);
    const int d = batch.d;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    std::vector<double> x(static_cast<std::size_t>(d)), ax_pt(static_cast<std::size_t>(d));
    for (std::size_t flat = 0; flat < total; ++flat) {
        for (int j = 0; j < d; ++j)
            x[static_cast<std::size_t>(j)] = cfg.grid[static_cast<std::size_t>(j)].node(idx[static_cast<std::size_t>(j)]);
        A.apply_point(x, ax_pt);
        values[flat] = A.det_abs * g_a.evaluate(ax_pt);
        for (int j = d; j-- > 0;) {
            if (++idx[static_cast<std::size_t>(j)] < cfg.grid[static_cast<std::size_t>(j)].count) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
    }
    GridDensity out(cfg.grid, std::move(values), false);
    const double mass = out.integral();
    if (std::abs(mass - 1.0) > 0.01)
        throw GridCoverageError("estimate_measure: back-mapping lost more than 1% of mass");
    for (auto& v : out.values()) v /= mass;
    out.set_normalized(true);
    return out;
}

}  // namespace wdecon
