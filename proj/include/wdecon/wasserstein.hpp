#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "wdecon/common.hpp"
#include "wdecon/grid_density.hpp"
#include "wdecon/quadrature.hpp"

namespace wdecon {

/// Weighted point cloud. Construction sorts the support lexicographically,
/// merges exact duplicates and normalizes the weights to unit mass.
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;

    DiscreteMeasure(int d, std::vector<double> points, std::vector<double> weights) : d_(d) {
        if (d < 1) throw std::invalid_argument("DiscreteMeasure: d >= 1");
        const std::size_t m = weights.size();
        if (points.size() != m * static_cast<std::size_t>(d))
            throw std::invalid_argument("DiscreteMeasure: size mismatch");
        if (m == 0) throw std::invalid_argument("DiscreteMeasure: empty");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("DiscreteMeasure: negative weight");
            total += w;
        }
        if (!(total > 0.0)) throw std::invalid_argument("DiscreteMeasure: zero total mass");
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            for (int j = 0; j < d; ++j) {
                const double xa = points[a * d + j], xb = points[b * d + j];
                if (xa != xb) return xa < xb;
            }
            return false;
        });
        for (std::size_t oi = 0; oi < m; ++oi) {
            const std::size_t i = order[oi];
            const bool dup = !weights_.empty() && [&] {
                for (int j = 0; j < d; ++j)
                    if (points[i * d + j] != support_[(weights_.size() - 1) * d + j]) return false;
                return true;
            }();
            if (dup) {
                weights_.back() += weights[i] / total;
            } else {
                for (int j = 0; j < d; ++j) support_.push_back(points[i * d + j]);
                weights_.push_back(weights[i] / total);
            }
        }
    }

    int dim() const { return d_; }
    std::size_t size() const { return weights_.size(); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& support() const { return support_; }
    double point(std::size_t i, int j) const { return support_[i * static_cast<std::size_t>(d_) + j]; }

    bool operator==(const DiscreteMeasure& o) const {
        return d_ == o.d_ && support_ == o.support_ && weights_ == o.weights_;
    }

private:
    int d_ = 0;
    std::vector<double> support_;  // m x d row-major
    std::vector<double> weights_;  // m
};

/// Optimal coupling between two discrete measures together with its cost.
struct TransportPlan {
    DiscreteMeasure source;
    DiscreteMeasure target;
    std::vector<double> coupling;  // m x m' row-major
    double cost_p = 0.0;
    double p = 1.0;

    double entry(std::size_t i, std::size_t j) const { return coupling[i * target.size() + j]; }
    double wp() const { return std::pow(cost_p, 1.0 / p); }
};

/// W_1 of two 1-D measures via the CDF identity: integral of |F - G|.
inline double w1_cdf_1d(const std::function<double(double)>& F,
                        const std::function<double(double)>& G, Interval range,
                        double tol = 1e-10) {
    const double eps = 1e-6;
    if (std::abs(F(range.lo)) > eps || std::abs(G(range.lo)) > eps ||
        std::abs(F(range.hi) - 1.0) > eps || std::abs(G(range.hi) - 1.0) > eps)
        throw std::invalid_argument("w1_cdf_1d: arguments are not CDFs on the range");
    return integrate_adaptive([&](double x) { return std::abs(F(x) - G(x)); }, range.lo, range.hi,
                              tol);
}

namespace detail {

/// Piecewise-linear quantile function: on (u[k], u[k+1]) the quantile moves
/// linearly from xlo[k] to xhi[k]. Steps are pieces with xlo == xhi.
struct QuantilePieces {
    std::vector<double> u;    // breakpoints, u.front()=0, u.back()=1
    std::vector<double> xlo;  // per piece
    std::vector<double> xhi;
};

inline QuantilePieces quantile_pieces(const DiscreteMeasure& mu) {
    if (mu.dim() != 1) throw std::invalid_argument("quantile_pieces: requires d=1");
    QuantilePieces q;
    q.u.push_back(0.0);
    double c = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        c += mu.weights()[i];
        q.xlo.push_back(mu.point(i, 0));
        q.xhi.push_back(mu.point(i, 0));
        q.u.push_back(std::min(c, 1.0));
    }
    q.u.back() = 1.0;
    return q;
}

inline QuantilePieces quantile_pieces(const GridDensity& gd) {
    if (gd.dim() != 1) throw std::invalid_argument("quantile_pieces: requires d=1");
    const auto F = gd.cdf_nodes();
    const double total = F.back();
    if (!(total > 0.0)) throw std::invalid_argument("quantile_pieces: zero mass");
    QuantilePieces q;
    q.u.push_back(0.0);
    const Axis& ax = gd.axis(0);
    for (int i = 0; i + 1 < ax.count; ++i) {
        const double f0 = F[static_cast<std::size_t>(i)] / total;
        const double f1 = F[static_cast<std::size_t>(i + 1)] / total;
        if (f1 > f0) {
            q.xlo.push_back(ax.node(i));
            q.xhi.push_back(ax.node(i + 1));
            q.u.push_back(std::min(f1, 1.0));
        }
    }
    if (q.xlo.empty()) throw std::invalid_argument("quantile_pieces: degenerate CDF");
    q.u.back() = 1.0;
    return q;
}

/// Exact integral of |Q1 - Q2|^p over [0,1] for two piecewise-linear quantile
/// functions; pieces are split at sign changes so each segment has a closed
/// antiderivative.
inline double quantile_cost(const QuantilePieces& a, const QuantilePieces& b, double p) {
    auto value_at = [](const QuantilePieces& q, std::size_t piece, double u) {
        const double ua = q.u[piece], ub = q.u[piece + 1];
        if (ub <= ua) return q.xhi[piece];
        const double t = (u - ua) / (ub - ua);
        return q.xlo[piece] * (1.0 - t) + q.xhi[piece] * t;
    };
    auto segment = [p](double len, double va, double vb) {
        // |linear|^p over a segment where the sign is constant
        const double A = std::abs(va), B = std::abs(vb);
        if (len <= 0.0) return 0.0;
        if (std::abs(B - A) <= 1e-15 * std::max(A, B))
            return len * std::pow(0.5 * (A + B), p);
        return len * (std::pow(B, p + 1.0) - std::pow(A, p + 1.0)) / ((B - A) * (p + 1.0));
    };
    double cost = 0.0;
    std::size_t ia = 0, ib = 0;
    double u = 0.0;
    while (u < 1.0 && ia < a.xlo.size() && ib < b.xlo.size()) {
        const double next = std::min(a.u[ia + 1], b.u[ib + 1]);
        if (next > u) {
            const double va = value_at(a, ia, u) - value_at(b, ib, u);
            const double vb = value_at(a, ia, next) - value_at(b, ib, next);
            if (va == 0.0 || vb == 0.0 || (va > 0.0) == (vb > 0.0)) {
                cost += segment(next - u, va, vb);
            } else {
                const double t = va / (va - vb);  // root of the linear segment
                cost += segment(t * (next - u), va, 0.0);
                cost += segment((1.0 - t) * (next - u), 0.0, vb);
            }
        }
        u = next;
        while (ia < a.xlo.size() && a.u[ia + 1] <= u) ++ia;
        while (ib < b.xlo.size() && b.u[ib + 1] <= u) ++ib;
    }
    return cost;
}

}  // namespace detail

/// W_p of two 1-D measures through quantile functions; exact piecewise
/// evaluation for discrete measures, interpolated quantiles for grid
/// densities. Mixed representations are supported.
template <class MeasA, class MeasB>
double wp_quantile_1d(const MeasA& mu, const MeasB& nu, double p) {
    if (p < 1.0) throw std::invalid_argument("wp_quantile_1d: p >= 1");
    const auto qa = detail::quantile_pieces(mu);
    const auto qb = detail::quantile_pieces(nu);
    return std::pow(detail::quantile_cost(qa, qb, p), 1.0 / p);
}

/// Exact W_p between discrete measures by successive shortest augmenting
/// paths on the dense transportation graph (Dijkstra with node potentials).
/// Deterministic: ties are resolved by node index.
inline TransportPlan wp_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double p,
                                 std::size_t max_cost_entries = 4000000) {
    if (p < 1.0) throw std::invalid_argument("wp_discrete: p >= 1");
    if (mu.dim() != nu.dim()) throw std::invalid_argument("wp_discrete: dimension mismatch");
    const std::size_t m = mu.size(), mp = nu.size();
    if (m * mp > max_cost_entries)
        throw std::length_error("wp_discrete: cost matrix exceeds cap; quantize the inputs first");
    const int d = mu.dim();

    std::vector<double> cost(m * mp);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < mp; ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += sq(mu.point(i, c) - nu.point(j, c));
            cost[i * mp + j] = std::pow(std::sqrt(s), p);
        }

    std::vector<double> ra = mu.weights(), rb = nu.weights();
    std::vector<double> flow(m * mp, 0.0);
    const std::size_t nn = m + mp;
    std::vector<double> pot(nn, 0.0), dist(nn);
    std::vector<int> parent(nn);
    std::vector<char> done(nn);
    const double inf = std::numeric_limits<double>::infinity();
    const double mass_tol = 1e-14;

    auto remaining = [&] {
        double s = 0.0;
        for (double w : rb) s += w;
        return s;
    };

    while (remaining() > mass_tol) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(parent.begin(), parent.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        for (std::size_t i = 0; i < m; ++i)
            if (ra[i] > mass_tol) dist[i] = 0.0;
        for (std::size_t it = 0; it < nn; ++it) {
            std::size_t v = nn;
            double best = inf;
            for (std::size_t u = 0; u < nn; ++u)
                if (!done[u] && dist[u] < best) {
                    best = dist[u];
                    v = u;
                }
            if (v == nn) break;
            done[v] = 1;
            if (v < m) {
                const std::size_t i = v;
                for (std::size_t j = 0; j < mp; ++j) {
                    const double rc = std::max(0.0, cost[i * mp + j] + pot[i] - pot[m + j]);
                    if (dist[i] + rc < dist[m + j]) {
                        dist[m + j] = dist[i] + rc;
                        parent[m + j] = static_cast<int>(i);
                    }
                }
            } else {
                const std::size_t j = v - m;
                for (std::size_t i = 0; i < m; ++i) {
                    if (flow[i * mp + j] <= 0.0) continue;
                    const double rc = std::max(0.0, -cost[i * mp + j] + pot[m + j] - pot[i]);
                    if (dist[m + j] + rc < dist[i]) {
                        dist[i] = dist[m + j] + rc;
                        parent[i] = static_cast<int>(m + j);
                    }
                }
            }
        }
        std::size_t tgt = nn;
        double bestd = inf;
        for (std::size_t j = 0; j < mp; ++j)
            if (rb[j] > mass_tol && dist[m + j] < bestd) {
                bestd = dist[m + j];
                tgt = m + j;
            }
        if (tgt == nn) throw std::runtime_error("wp_discrete: no augmenting path (internal)");

        double push = rb[tgt - m];
        for (std::size_t v = tgt; parent[v] >= 0;) {
            const auto u = static_cast<std::size_t>(parent[v]);
            if (u >= m && v < m) push = std::min(push, flow[v * mp + (u - m)]);
            v = u;
        }
        {
            std::size_t v = tgt;
            while (parent[v] >= 0) v = static_cast<std::size_t>(parent[v]);
            push = std::min(push, ra[v]);  // supply at the path start
        }
        for (std::size_t v = tgt; parent[v] >= 0;) {
            const auto u = static_cast<std::size_t>(parent[v]);
            if (u < m && v >= m)
                flow[u * mp + (v - m)] += push;
            else
                flow[v * mp + (u - m)] -= push;
            v = u;
        }
        {
            std::size_t v = tgt;
            while (parent[v] >= 0) v = static_cast<std::size_t>(parent[v]);
            ra[v] -= push;
            rb[tgt - m] -= push;
        }
        for (std::size_t v = 0; v < nn; ++v)
            if (dist[v] < inf) pot[v] += std::min(dist[v], bestd);
    }

    TransportPlan plan;
    plan.source = mu;
    plan.target = nu;
    plan.p = p;
    plan.coupling = std::move(flow);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < mp; ++j) total += plan.coupling[i * mp + j] * cost[i * mp + j];
    plan.cost_p = total;
    return plan;
}

/// Atomizes a normalized grid density: one atom per grid cell at the cell
/// center with the cell's trapezoidal mass. When the cell count exceeds
/// max_atoms, cells are merged into uniform blocks at their mass-weighted
/// centroids. Atoms below 1e-12 of the total are dropped and the rest
/// renormalized.
inline DiscreteMeasure quantize(const GridDensity& gd, std::size_t max_atoms) {
    if (!gd.normalized()) throw std::invalid_argument("quantize: density must be normalized");
    if (max_atoms < 1) throw std::invalid_argument("quantize: max_atoms >= 1");
    const int d = gd.dim();
    std::size_t n_cells = 1;
    std::vector<int> cells(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        cells[static_cast<std::size_t>(j)] = gd.axis(j).count - 1;
        n_cells *= static_cast<std::size_t>(cells[static_cast<std::size_t>(j)]);
    }
    int block = 1;
    if (n_cells > max_atoms) {
        while (true) {
            std::size_t merged = 1;
            for (int j = 0; j < d; ++j)
                merged *= static_cast<std::size_t>((cells[static_cast<std::size_t>(j)] + block - 1) / block);
            if (merged <= max_atoms) break;
            ++block;
        }
    }

    // accumulate block mass and centroid
    std::vector<std::size_t> bcount(static_cast<std::size_t>(d));
    std::size_t n_blocks = 1;
    for (int j = 0; j < d; ++j) {
        bcount[static_cast<std::size_t>(j)] =
            static_cast<std::size_t>((cells[static_cast<std::size_t>(j)] + block - 1) / block);
        n_blocks *= bcount[static_cast<std::size_t>(j)];
    }
    std::vector<double> mass(n_blocks, 0.0);
    std::vector<double> centroid(n_blocks * static_cast<std::size_t>(d), 0.0);

    std::vector<int> ci(static_cast<std::size_t>(d), 0);
    double cellvol = 1.0;
    for (int j = 0; j < d; ++j) cellvol *= gd.axis(j).spacing();
    const int corners = 1 << d;
    bool more = true;
    while (more) {
        // trapezoidal mass of this cell = volume * mean of corner values
        double corner_sum = 0.0;
        for (int c = 0; c < corners; ++c) {
            std::size_t flat = 0;
            for (int j = 0; j < d; ++j)
                flat = flat * static_cast<std::size_t>(gd.axis(j).count) +
                       static_cast<std::size_t>(ci[static_cast<std::size_t>(j)] + ((c >> j) & 1));
            corner_sum += gd.values()[flat];
        }
        const double w = cellvol * corner_sum / corners;
        std::size_t bflat = 0;
        for (int j = 0; j < d; ++j)
            bflat = bflat * bcount[static_cast<std::size_t>(j)] +
                    static_cast<std::size_t>(ci[static_cast<std::size_t>(j)] / block);
        mass[bflat] += w;
        for (int j = 0; j < d; ++j) {
            const double center = gd.axis(j).node(ci[static_cast<std::size_t>(j)]) +
                                  0.5 * gd.axis(j).spacing();
            centroid[bflat * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] += w * center;
        }
        more = false;
        for (int j = d; j-- > 0;) {
            if (++ci[static_cast<std::size_t>(j)] < cells[static_cast<std::size_t>(j)]) {
                more = true;
                break;
            }
            ci[static_cast<std::size_t>(j)] = 0;
        }
    }

    double total = 0.0;
    for (double w : mass) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("quantize: zero-mass density");
    std::vector<double> points, weights;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        if (mass[b] < 1e-12 * total) continue;
        for (int j = 0; j < d; ++j)
            points.push_back(centroid[b * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] /
                             mass[b]);
        weights.push_back(mass[b]);
    }
    return DiscreteMeasure(d, std::move(points), std::move(weights));
}

/// W_p between two grid densities: exact quantile route for d=1, quantize +
/// exact discrete transport otherwise.
inline double wp_grid(const GridDensity& a, const GridDensity& b, double p,
                      std::size_t max_cost_entries = 4000000) {
    if (a.dim() != b.dim()) throw std::invalid_argument("wp_grid: dimension mismatch");
    if (a.dim() == 1) return wp_quantile_1d(a, b, p);
    const auto atoms = static_cast<std::size_t>(std::sqrt(static_cast<double>(max_cost_entries)));
    const auto qa = quantize(a, atoms);
    const auto qb = quantize(b, atoms);
    return wp_discrete(qa, qb, p, max_cost_entries).wp();
}

}  // namespace wdecon
