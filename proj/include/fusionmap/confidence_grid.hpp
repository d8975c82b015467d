#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fusionmap/error.hpp"
#include "fusionmap/laser_mask.hpp"

namespace fusionmap {

inline constexpr double kDefaultKernelSigma = 0.2;
inline constexpr double kDefaultGridCell = 0.1;

/// Bird's-eye-view raster of laser proximity. Cell (i, j) is centered at
/// origin + ((i + 0.5) * cell, (j + 0.5) * cell); values lie in [0, 1].
struct ConfidenceGrid {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell = kDefaultGridCell;
    int width = 0;   // cells along x
    int height = 0;  // cells along y
    std::vector<double> values;

    double at(int i, int j) const { return values[static_cast<std::size_t>(j) * width + i]; }
    double center_x(int i) const { return origin_x + (i + 0.5) * cell; }
    double center_y(int j) const { return origin_y + (j + 0.5) * cell; }
};

/// Each cell takes the maximum Gaussian kernel response over all scan points.
inline ConfidenceGrid build_confidence_grid(const LaserScan2D& scan, double sigma = kDefaultKernelSigma,
                                            double cell = kDefaultGridCell, double padding = 3.0 * kDefaultKernelSigma) {
    if (scan.empty()) throw DataError("cannot build a confidence grid from an empty scan");
    if (!(sigma > 0.0)) throw ConfigError("kernel sigma must be positive");
    if (!(cell > 0.0)) throw ConfigError("grid cell size must be positive");
    if (!(padding >= 0.0)) throw ConfigError("grid padding must be non-negative");

    double x0 = scan.points.front().x(), x1 = x0, y0 = scan.points.front().y(), y1 = y0;
    for (const auto& p : scan.points) {
        x0 = std::min(x0, p.x());
        x1 = std::max(x1, p.x());
        y0 = std::min(y0, p.y());
        y1 = std::max(y1, p.y());
    }
    ConfidenceGrid g;
    g.cell = cell;
    g.origin_x = x0 - padding;
    g.origin_y = y0 - padding;
    g.width = std::max(1, static_cast<int>(std::ceil((x1 + padding - g.origin_x) / cell)));
    g.height = std::max(1, static_cast<int>(std::ceil((y1 + padding - g.origin_y) / cell)));
    g.values.assign(static_cast<std::size_t>(g.width) * g.height, 0.0);

    const double inv = 1.0 / (2.0 * sigma * sigma);
    // Beyond 8 sigma the kernel is below 1e-13; such cells stay at zero.
    const int reach = static_cast<int>(std::ceil(8.0 * sigma / cell)) + 1;
    for (const auto& p : scan.points) {
        const int ci = static_cast<int>(std::floor((p.x() - g.origin_x) / cell));
        const int cj = static_cast<int>(std::floor((p.y() - g.origin_y) / cell));
        for (int j = std::max(0, cj - reach); j <= std::min(g.height - 1, cj + reach); ++j)
            for (int i = std::max(0, ci - reach); i <= std::min(g.width - 1, ci + reach); ++i) {
                const double dx = g.center_x(i) - p.x();
                const double dy = g.center_y(j) - p.y();
                double& v = g.values[static_cast<std::size_t>(j) * g.width + i];
                v = std::max(v, std::exp(-(dx * dx + dy * dy) * inv));
            }
    }
    return g;
}

/// Bilinear interpolation between cell centers; 0 outside the grid.
inline double sample_confidence(const ConfidenceGrid& g, double x, double y) {
    const double extent_x = g.origin_x + g.width * g.cell;
    const double extent_y = g.origin_y + g.height * g.cell;
    if (!(x >= g.origin_x && x <= extent_x && y >= g.origin_y && y <= extent_y)) return 0.0;
    const double fx = (x - g.origin_x) / g.cell - 0.5;
    const double fy = (y - g.origin_y) / g.cell - 0.5;
    const int i0 = static_cast<int>(std::floor(fx));
    const int j0 = static_cast<int>(std::floor(fy));
    const double tx = fx - i0;
    const double ty = fy - j0;
    auto value = [&](int i, int j) {
        i = std::clamp(i, 0, g.width - 1);
        j = std::clamp(j, 0, g.height - 1);
        return g.at(i, j);
    };
    const double top = (1.0 - tx) * value(i0, j0) + tx * value(i0 + 1, j0);
    const double bottom = (1.0 - tx) * value(i0, j0 + 1) + tx * value(i0 + 1, j0 + 1);
    return std::clamp((1.0 - ty) * top + ty * bottom, 0.0, 1.0);
}

}  // namespace fusionmap
