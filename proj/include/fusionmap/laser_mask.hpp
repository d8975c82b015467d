#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"

namespace fusionmap {

/// Planar laser returns in world coordinates, all at the mount height, in beam order.
struct LaserScan2D {
    std::vector<Vec3> points;
    double mount_height = 1.2;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    void validate() const {
        for (const auto& p : points) {
            if (!is_finite(p)) throw DataError("laser point is not finite");
            if (std::abs(p.z() - mount_height) >= 1e-6) throw DataError("laser point off the mount height");
        }
    }

    friend bool operator==(const LaserScan2D&, const LaserScan2D&) = default;
};

/// Converts raw polar returns to a world-frame scan. Non-positive or non-finite ranges are dropped.
inline LaserScan2D scan_from_polar(std::span<const double> angles, std::span<const double> ranges,
                                   double mount_height, const Pose& sensor_pose) {
    if (angles.size() != ranges.size())
        throw DataError("scan has " + std::to_string(angles.size()) + " angles but " + std::to_string(ranges.size()) +
                        " ranges");
    LaserScan2D scan;
    scan.mount_height = mount_height;
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const double r = ranges[i];
        if (!std::isfinite(r) || r <= 0.0 || !std::isfinite(angles[i])) continue;
        Vec3 p = transform_point(sensor_pose, Vec3(r * std::cos(angles[i]), r * std::sin(angles[i]), 0.0));
        p.z() = mount_height;
        scan.points.push_back(p);
    }
    return scan;
}

struct BoundarySet {
    std::vector<Vec3> lower;
    std::vector<Vec3> upper;
};

inline constexpr double kDefaultBelowOffset = 1.2;
inline constexpr double kDefaultAboveOffset = 0.8;

/// Lifts each scan point down by `below` and up by `above` along world z.
inline BoundarySet build_boundaries(const LaserScan2D& scan, double below = kDefaultBelowOffset,
                                    double above = kDefaultAboveOffset) {
    if (scan.empty()) throw DataError("cannot build boundaries from an empty scan");
    BoundarySet b;
    b.lower.reserve(scan.size());
    b.upper.reserve(scan.size());
    for (const auto& p : scan.points) {
        b.lower.emplace_back(p.x(), p.y(), p.z() - below);
        b.upper.emplace_back(p.x(), p.y(), p.z() + above);
    }
    return b;
}

namespace detail {

struct BeamColumn {
    double u;        // column coordinate
    double v_lower;  // row of the lifted-down boundary point
    double v_upper;  // row of the lifted-up boundary point
    double s;        // camera depth of the scan point
    double bearing;  // horizontal angle of the scan point around the camera center
    bool in_view;
};

inline double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

inline void fill_span(Mask& mask, int col, double v_a, double v_b, double s) {
    if (col < 0 || col >= mask.width || !(s > 0.0)) return;
    const double lo = std::min(v_a, v_b);
    const double hi = std::max(v_a, v_b);
    const int r0 = std::max(0, static_cast<int>(std::ceil(lo)));
    const int r1 = std::min(mask.height - 1, static_cast<int>(std::floor(hi)));
    const auto value = static_cast<float>(s);
    for (int r = r0; r <= r1; ++r) {
        float& m = mask.at(col, r);
        if (m == 0.0f || value < m) m = value;
    }
}

}  // namespace detail

/// Front-view raster of laser depths over the band between the lifted boundaries.
///
/// Each beam whose two boundary points project into the image fills its column
/// between the projected boundary rows with the camera depth of the scan point.
/// Consecutive beams closer than twice the nominal angular spacing are bridged
/// by interpolating (v_lower, v_upper, s) across the columns between them.
/// Where spans overlap, the nearer depth wins.
inline Mask build_3d_mask(const CameraModel& cam, const LaserScan2D& scan, double below = kDefaultBelowOffset,
                          double above = kDefaultAboveOffset) {
    Mask mask(cam.width, cam.height);
    if (scan.empty()) return mask;
    const BoundarySet bounds = build_boundaries(scan, below, above);
    const Vec3 center = cam.center();

    std::vector<detail::BeamColumn> beams(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) {
        auto& b = beams[i];
        const Vec3& p = scan.points[i];
        b.bearing = std::atan2(p.y() - center.y(), p.x() - center.x());
        const auto lo = project_point(cam, bounds.lower[i]);
        const auto up = project_point(cam, bounds.upper[i]);
        const Vec3 pc = transform_point(cam.extrinsic, p);
        b.in_view = lo && up && pc.z() > kMinProjectionDepth;
        if (!b.in_view) continue;
        b.u = 0.5 * (lo->u + up->u);
        b.v_lower = lo->v;
        b.v_upper = up->v;
        b.s = pc.z();
    }

    // Nominal spacing: median absolute bearing step between consecutive beams.
    std::vector<double> steps;
    for (std::size_t i = 1; i < beams.size(); ++i)
        steps.push_back(std::abs(detail::wrap_angle(beams[i].bearing - beams[i - 1].bearing)));
    double nominal = 0.0;
    if (!steps.empty()) {
        auto mid = steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2);
        std::nth_element(steps.begin(), mid, steps.end());
        nominal = *mid;
    }

    for (std::size_t i = 0; i < beams.size(); ++i) {
        const auto& a = beams[i];
        if (!a.in_view) continue;
        detail::fill_span(mask, static_cast<int>(std::lround(a.u)), a.v_lower, a.v_upper, a.s);

        if (i + 1 >= beams.size()) continue;
        const auto& b = beams[i + 1];
        if (!b.in_view) continue;
        const double gap = std::abs(detail::wrap_angle(b.bearing - a.bearing));
        if (!(gap < 2.0 * nominal)) continue;
        const int ca = static_cast<int>(std::lround(a.u));
        const int cb = static_cast<int>(std::lround(b.u));
        if (ca == cb) continue;
        const int step = cb > ca ? 1 : -1;
        for (int c = ca + step; c != cb; c += step) {
            const double t = (c - a.u) / (b.u - a.u);
            if (t < 0.0 || t > 1.0) continue;
            detail::fill_span(mask, c, a.v_lower + t * (b.v_lower - a.v_lower), a.v_upper + t * (b.v_upper - a.v_upper),
                              a.s + t * (b.s - a.s));
        }
        detail::fill_span(mask, cb, b.v_lower, b.v_upper, b.s);
    }
    return mask;
}

}  // namespace fusionmap
