#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fusionmap/laser_mask.hpp"
#include "support.hpp"

using namespace fusionmap;
using fusionmap::testing::level_camera;
using fusionmap::testing::mask_pixel_explained;

namespace {

constexpr double kPi = std::numbers::pi;

/// Circle of returns around the origin, in beam order, seen by a level laser at 1.2 m.
LaserScan2D ring_scan(int beams, double radius_base, double span = kPi) {
    std::vector<double> angles, ranges;
    for (int i = 0; i < beams; ++i) {
        const double a = -span / 2 + span * i / (beams - 1);
        angles.push_back(a);
        ranges.push_back(radius_base + 0.5 * std::cos(3 * a));
    }
    return scan_from_polar(angles, ranges, 1.2, Pose::identity());
}

}  // namespace

TEST(ScanFromPolar, Examples) {
    const std::vector<double> a{0.0}, r{2.0};
    const auto s = scan_from_polar(a, r, 1.2, Pose::identity());
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.points[0], Vec3(2, 0, 1.2));
    EXPECT_EQ(s.mount_height, 1.2);

    const std::vector<double> a4{0, kPi / 2, kPi, 3 * kPi / 2}, r4{1, 1, 1, 1};
    const auto c = scan_from_polar(a4, r4, 1.2, Pose::identity());
    ASSERT_EQ(c.size(), 4u);
    const Vec3 want[4] = {{1, 0, 1.2}, {0, 1, 1.2}, {-1, 0, 1.2}, {0, -1, 1.2}};
    for (int i = 0; i < 4; ++i) EXPECT_LT((c.points[i] - want[i]).norm(), 1e-15);
    EXPECT_NO_THROW(c.validate());
}

TEST(ScanFromPolar, DropsDegenerateRanges) {
    const std::vector<double> a{0, 1, 2, 3}, r{0.0, -1.0, std::nan(""), 3.0};
    const auto s = scan_from_polar(a, r, 1.2, Pose::identity());
    ASSERT_EQ(s.size(), 1u);
    EXPECT_NEAR(s.points[0].x(), 3 * std::cos(3.0), 1e-15);
}

TEST(ScanFromPolar, LengthMismatchThrows) {
    const std::vector<double> a{0, 1}, r{1};
    EXPECT_THROW(scan_from_polar(a, r, 1.2, Pose::identity()), DataError);
}

TEST(ScanFromPolar, SensorPoseAppliedAndHeightForced) {
    const std::vector<double> a{0}, r{2};
    Pose pose = Pose::from_yaw(kPi / 2, Vec3(1, 1, 0.3));
    const auto s = scan_from_polar(a, r, 1.2, pose);
    EXPECT_LT((s.points[0] - Vec3(1, 3, 1.2)).norm(), 1e-15);
}

TEST(Boundaries, Examples) {
    LaserScan2D s;
    s.points = {Vec3(3, 4, 1.2)};
    auto b = build_boundaries(s);
    EXPECT_NEAR(b.lower[0].z(), 0.0, 1e-15);
    EXPECT_NEAR(b.upper[0].z(), 2.0, 1e-15);
    EXPECT_EQ(b.lower[0].x(), 3.0);
    EXPECT_EQ(b.upper[0].y(), 4.0);

    b = build_boundaries(s, 0, 0);
    EXPECT_EQ(b.lower[0], s.points[0]);
    EXPECT_EQ(b.upper[0], s.points[0]);

    b = build_boundaries(s, 0.5, 0.5);
    EXPECT_NEAR(b.lower[0].z(), 0.7, 1e-15);
    EXPECT_NEAR(b.upper[0].z(), 1.7, 1e-15);

    EXPECT_THROW(build_boundaries(LaserScan2D{}), DataError);
}

TEST(Boundaries, BandHeightIsExact) {
    const auto s = ring_scan(31, 4.0);
    const auto b = build_boundaries(s, 1.2, 0.8);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_NEAR(b.upper[i].z() - b.lower[i].z(), 2.0, 1e-15);
        EXPECT_EQ(b.lower[i].x(), s.points[i].x());
        EXPECT_EQ(b.upper[i].y(), s.points[i].y());
    }
}

TEST(Mask, EmptyScanGivesZeroMask) {
    const auto cam = level_camera(Vec3(0, 0, 1.2), 0.0);
    const Mask m = build_3d_mask(cam, LaserScan2D{});
    EXPECT_EQ(m.width, cam.width);
    EXPECT_EQ(m.height, cam.height);
    for (float v : m.data) EXPECT_EQ(v, 0.0f);
}

TEST(Mask, SingleBeamStraightAhead) {
    const double d = 5.0;
    const auto cam = level_camera(Vec3(0, 0, 1.2), 0.0);
    LaserScan2D s;
    s.points = {Vec3(d, 0, 1.2)};
    const Mask m = build_3d_mask(cam, s);
    // Lower boundary at z = 0 projects to v = 60 + 100 * 1.2 / 5; upper at z = 2 to 60 - 100 * 0.8 / 5.
    const int top = static_cast<int>(std::ceil(60 - 100 * 0.8 / d));
    const int bottom = static_cast<int>(std::floor(60 + 100 * 1.2 / d));
    for (int v = 0; v < m.height; ++v)
        for (int u = 0; u < m.width; ++u) {
            const bool inside = u == 80 && v >= top && v <= bottom;
            EXPECT_EQ(m.at(u, v), inside ? static_cast<float>(d) : 0.0f) << u << "," << v;
        }
}

TEST(Mask, NearerBeamWinsOnOverlap) {
    // Lowered camera so both bands, including the near one, project fully into view.
    const auto cam = level_camera(Vec3(0, 0, 0.8), 0.0);
    LaserScan2D s;
    s.points = {Vec3(2, 0, 1.2), Vec3(4, 0, 1.2)};
    const Mask m = build_3d_mask(cam, s);
    int filled = 0;
    for (int v = 0; v < m.height; ++v) {
        if (m.at(80, v) == 0.0f) continue;
        EXPECT_EQ(m.at(80, v), 2.0f);
        ++filled;
    }
    EXPECT_GT(filled, 0);
}

TEST(Mask, BeamsBehindCameraContributeNothing) {
    const auto cam = level_camera(Vec3(0, 0, 1.2), 0.0);
    LaserScan2D s;
    s.points = {Vec3(-3, 0, 1.2), Vec3(-3, 1, 1.2)};
    for (float v : build_3d_mask(cam, s).data) EXPECT_EQ(v, 0.0f);
}

TEST(Mask, ContiguousBandAcrossDenseBeams) {
    const auto cam = level_camera(Vec3(0, 0, 1.2), 0.0);
    const auto s = ring_scan(181, 4.0);
    const Mask m = build_3d_mask(cam, s);
    // The laser row at the camera height crosses every column the beams span.
    int first = -1, last = -1;
    for (int u = 0; u < m.width; ++u)
        if (m.at(u, 60) > 0.0f) {
            if (first < 0) first = u;
            last = u;
        }
    ASSERT_GE(first, 0);
    for (int u = first; u <= last; ++u) EXPECT_GT(m.at(u, 60), 0.0f) << u;
    // Near the image edges one degree of bearing spans about three columns.
    EXPECT_LE(first, 3);
    EXPECT_GE(last, m.width - 4);
}

TEST(Mask, LargeBearingGapsAreNotBridged) {
    const auto cam = level_camera(Vec3(0, 0, 1.2), 0.0);
    // Three evenly spaced beams, then a gap of five spacings.
    const double step = 0.05;
    const std::vector<double> a{-0.3, -0.3 + step, -0.3 + 2 * step, 0.2}, r{4, 4, 4, 4};
    const auto s = scan_from_polar(a, r, 1.2, Pose::identity());
    const Mask m = build_3d_mask(cam, s);
    const auto p2 = project_point(cam, s.points[2]);
    const auto p3 = project_point(cam, s.points[3]);
    ASSERT_TRUE(p2 && p3);
    const int c2 = static_cast<int>(std::lround(p2->u)), c3 = static_cast<int>(std::lround(p3->u));
    for (int u = std::min(c2, c3) + 1; u < std::max(c2, c3); ++u) EXPECT_EQ(m.at(u, 60), 0.0f) << u;
    EXPECT_GT(m.at(c2, 60), 0.0f);
    EXPECT_GT(m.at(c3, 60), 0.0f);
}

TEST(Mask, EveryPixelLiesBetweenBoundaryCurves) {
    const auto s = ring_scan(64, 3.5, kPi);
    for (double yaw : {0.0, 0.4, -0.7}) {
        auto cam = level_camera(Vec3(0.3, -0.2, 1.5), yaw);
        const Mask m = build_3d_mask(cam, s, 1.2, 0.8);
        int nonzero = 0;
        for (int v = 0; v < m.height; ++v)
            for (int u = 0; u < m.width; ++u) {
                const float val = m.at(u, v);
                if (val == 0.0f) continue;
                ++nonzero;
                EXPECT_TRUE(mask_pixel_explained(cam, s, 1.2, 0.8, u, v, val)) << u << "," << v;
            }
        EXPECT_GT(nonzero, 100);
    }
}

TEST(Mask, ScalingRangesScalesDepths) {
    // Camera at the laser origin, level: columns depend only on bearing, so a scaled scan
    // lands in the same columns with proportionally scaled depths.
    const auto cam = level_camera(Vec3(0, 0, 1.2), 0.1);
    std::vector<double> angles, ranges;
    for (int i = 0; i < 90; ++i) {
        angles.push_back(-kPi / 2 + kPi * i / 89.0);
        ranges.push_back(6.0 + std::sin(2.0 * angles.back()));
    }
    const auto base = scan_from_polar(angles, ranges, 1.2, Pose::identity());
    for (double lambda : {0.5, 1.7}) {
        std::vector<double> scaled = ranges;
        for (auto& r : scaled) r *= lambda;
        const auto s = scan_from_polar(angles, scaled, 1.2, Pose::identity());
        const Mask m1 = build_3d_mask(cam, base), ml = build_3d_mask(cam, s);
        int compared = 0;
        for (int u = 0; u < cam.width; ++u) {
            EXPECT_EQ(m1.at(u, 60) > 0.0f, ml.at(u, 60) > 0.0f) << u;
            for (int v = 0; v < cam.height; ++v) {
                if (m1.at(u, v) == 0.0f || ml.at(u, v) == 0.0f) continue;
                EXPECT_NEAR(ml.at(u, v), lambda * m1.at(u, v), 1e-5 * lambda * m1.at(u, v));
                ++compared;
            }
        }
        EXPECT_GT(compared, 500);
    }
}
