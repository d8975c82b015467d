#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"
#include "fusionmap/kd_index.hpp"

namespace fusionmap {

struct DepthMetrics {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rmse = 0.0;
    double delta_1 = 0.0;
    double delta_2 = 0.0;
    double delta_3 = 0.0;
    std::size_t n_valid = 0;
};

/// Standard monocular-depth error suite over pixels where both images are positive.
inline DepthMetrics depth_metrics(const DepthImage& pred, const DepthImage& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw DataError("depth metrics need images of equal size");
    DepthMetrics m;
    double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0;
    std::size_t d1 = 0, d2 = 0, d3 = 0, n = 0;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        const double d = pred.data[i];
        const double t = gt.data[i];
        if (!(d > 0.0) || !(t > 0.0)) continue;
        ++n;
        const double e = d - t;
        abs_rel += std::abs(e) / t;
        sq_rel += e * e / t;
        sq += e * e;
        const double ratio = std::max(d / t, t / d);
        if (ratio < 1.25) ++d1;
        if (ratio < 1.25 * 1.25) ++d2;
        if (ratio < 1.25 * 1.25 * 1.25) ++d3;
    }
    if (n == 0) throw DataError("no pixel is valid in both depth images");
    const auto nd = static_cast<double>(n);
    m.abs_rel = abs_rel / nd;
    m.sq_rel = sq_rel / nd;
    m.rmse = std::sqrt(sq / nd);
    m.delta_1 = static_cast<double>(d1) / nd;
    m.delta_2 = static_cast<double>(d2) / nd;
    m.delta_3 = static_cast<double>(d3) / nd;
    m.n_valid = n;
    return m;
}

inline constexpr std::size_t kDefaultEmdCap = 512;
inline constexpr std::uint64_t kDefaultEmdSeed = 7;

/// `n` points drawn uniformly without replacement, in draw order. The whole cloud is returned when n >= size.
inline PointCloud subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
    if (n >= cloud.size()) return cloud;
    std::vector<std::size_t> idx(cloud.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    PointCloud out;
    out.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
        out.points.push_back(cloud.points[idx[i]]);
    }
    return out;
}

/// Minimum-cost perfect matching on a square cost matrix (row-major, n x n).
/// Shortest augmenting paths with dual potentials, O(n^3). Returns the column assigned to each row.
inline std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
    if (cost.size() != n * n) throw DataError("assignment cost matrix is not square");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based internally; index 0 is the virtual root.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            const double* row = &cost[(i0 - 1) * n];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = row[j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

/// Mean Euclidean cost of the optimal bijection between equal-size seeded subsamples.
inline double emd_exact(const PointCloud& a, const PointCloud& b, std::size_t cap = kDefaultEmdCap,
                        std::uint64_t seed = kDefaultEmdSeed) {
    if (a.empty() || b.empty()) throw DataError("earth mover's distance needs non-empty clouds");
    if (cap == 0) throw ConfigError("emd subsample cap must be positive");
    const std::size_t n = std::min({a.size(), b.size(), cap});
    const PointCloud sa = subsample(a, n, seed);
    const PointCloud sb = subsample(b, n, seed);
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (sa.points[i] - sb.points[j]).norm();
    const auto assign = solve_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + assign[i]];
    return total / static_cast<double>(n);
}

struct SinkhornResult {
    double cost = 0.0;  // transport cost of the entropic plan, meters
    bool converged = false;
    int iterations = 0;
};

inline double cloud_diameter(const PointCloud& a, const PointCloud& b) {
    Vec3 lo = a.points.front(), hi = lo;
    for (const auto* c : {&a, &b})
        for (const auto& p : c->points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
    return (hi - lo).norm();
}

namespace detail {

inline double log_sum_exp(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
    return m + std::log(s);
}

}  // namespace detail

/// Entropic optimal transport between uniform measures on the two clouds, Euclidean ground cost.
/// Log-domain Sinkhorn iterations with epsilon annealed from the cloud diameter down to `epsilon`.
inline SinkhornResult emd_sinkhorn(const PointCloud& a, const PointCloud& b, double epsilon, int max_iterations = 10000,
                                   double tolerance = 1e-9) {
    if (a.empty() || b.empty()) throw DataError("earth mover's distance needs non-empty clouds");
    if (!(epsilon > 0.0)) throw ConfigError("sinkhorn epsilon must be positive");
    const std::size_t n = a.size(), m = b.size();
    std::vector<double> cost(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = (a.points[i] - b.points[j]).norm();

    const double log_a = -std::log(static_cast<double>(n));
    const double log_b = -std::log(static_cast<double>(m));
    std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));

    auto update_f = [&](double eps) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost[i * m + j]) / eps + log_b;
            f[i] = -eps * detail::log_sum_exp(buf.data(), m);
        }
    };
    auto update_g = [&](double eps) {
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost[i * m + j]) / eps + log_a;
            g[j] = -eps * detail::log_sum_exp(buf.data(), n);
        }
    };
    // Row-marginal violation of the current plan (columns are exact right after update_g).
    auto marginal_error = [&](double eps) {
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) buf[j] = (f[i] + g[j] - cost[i * m + j]) / eps + log_a + log_b;
            err += std::abs(std::exp(detail::log_sum_exp(buf.data(), m)) - std::exp(log_a));
        }
        return err;
    };

    SinkhornResult r;
    const double diameter = std::max(cloud_diameter(a, b), epsilon);
    for (double eps = diameter; eps > epsilon; eps *= 0.5) {
        update_f(eps);
        update_g(eps);
        ++r.iterations;
    }
    while (r.iterations < max_iterations) {
        update_f(epsilon);
        update_g(epsilon);
        ++r.iterations;
        if (marginal_error(epsilon) < tolerance) {
            r.converged = true;
            break;
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double c = cost[i * m + j];
            total += std::exp((f[i] + g[j] - c) / epsilon + log_a + log_b) * c;
        }
    r.cost = total;
    return r;
}

inline constexpr double kDefaultEfsMaxDist = 1.0;

struct FitnessScore {
    double mean = 0.0;  // m^2, headline value
    double sum = 0.0;   // m^2
    std::size_t n_used = 0;
};

/// Squared nearest-neighbour distances from `pred` into `reference`, over pairs closer than `max_dist`.
inline FitnessScore efs(const PointCloud& pred, const KdIndex3& reference, double max_dist = kDefaultEfsMaxDist) {
    if (pred.empty()) throw DataError("fitness score needs a non-empty predicted cloud");
    FitnessScore s;
    for (const auto& p : pred.points) {
        const Neighbor nn = reference.nearest(p);
        if (nn.distance > max_dist) continue;
        s.sum += nn.distance * nn.distance;
        ++s.n_used;
    }
    if (s.n_used == 0) throw DataError("no predicted point has a reference neighbour within max_dist");
    s.mean = s.sum / static_cast<double>(s.n_used);
    return s;
}

inline FitnessScore efs(const PointCloud& pred, const PointCloud& reference, double max_dist = kDefaultEfsMaxDist) {
    if (reference.empty()) throw DataError("fitness score needs a non-empty reference cloud");
    return efs(pred, KdIndex3(reference), max_dist);
}

struct CloudMetrics {
    double emd = 0.0;  // m
    double efs = 0.0;  // m^2 (mean)
    double efs_sum = 0.0;
    std::size_t n_used = 0;
};

}  // namespace fusionmap
