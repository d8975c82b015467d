#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fusionmap/confidence_grid.hpp"
#include "fusionmap/kd_index.hpp"
#include "support.hpp"

using namespace fusionmap;
using fusionmap::testing::brute_knn;
using fusionmap::testing::random_cloud;
using fusionmap::testing::random_point;

TEST(KdIndex, EmptyInputThrows) {
    EXPECT_THROW(KdIndex3(std::span<const Vec3>{}), DataError);
    EXPECT_THROW(KdIndex2(PointCloud{}), DataError);
}

TEST(KdIndex, SinglePointAlwaysReturned) {
    const KdIndex3 idx(PointCloud{{Vec3(1, 2, 3)}});
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10; ++i) {
        const auto r = idx.knn(random_point(rng), 1);
        ASSERT_EQ(r.size(), 1u);
        EXPECT_EQ(r[0].index, 0u);
    }
}

TEST(KdIndex, DuplicatesBothReturned) {
    const KdIndex3 idx(PointCloud{{Vec3(1, 1, 1), Vec3(5, 5, 5), Vec3(1, 1, 1)}});
    const auto r = idx.knn(Vec3(1, 1, 1), 2);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].index, 0u);
    EXPECT_EQ(r[1].index, 2u);
    EXPECT_EQ(r[0].distance, 0.0);
    EXPECT_EQ(r[1].distance, 0.0);
}

TEST(KdIndex, QueryAtIndexedPoint) {
    std::mt19937_64 rng(2);
    const PointCloud c = random_cloud(rng, 200);
    const KdIndex3 idx(c);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Neighbor n = idx.nearest(c.points[i]);
        EXPECT_EQ(n.index, i);
        EXPECT_EQ(n.distance, 0.0);
    }
}

TEST(KdIndex, KLargerThanPopulationReturnsAllSorted) {
    std::mt19937_64 rng(3);
    const PointCloud c = random_cloud(rng, 30);
    const KdIndex3 idx(c);
    const Vec3 q = random_point(rng);
    const auto r = idx.knn(q, 100);
    ASSERT_EQ(r.size(), 30u);
    EXPECT_EQ(r, brute_knn(c.points, q, 30, 3));
    EXPECT_TRUE(idx.knn(q, 0).empty());
}

TEST(KdIndex, MatchesBruteForce3D) {
    std::mt19937_64 rng(4);
    const PointCloud c = random_cloud(rng, 1000);
    const KdIndex3 idx(c);
    for (int i = 0; i < 500; ++i) {
        const Vec3 q = random_point(rng, -12, 12);
        for (std::size_t k : {1, 9, 37}) {
            const auto got = idx.knn(q, k);
            const auto want = brute_knn(c.points, q, k, 3);
            ASSERT_EQ(got.size(), want.size());
            for (std::size_t j = 0; j < got.size(); ++j) {
                EXPECT_EQ(got[j].index, want[j].index);
                EXPECT_NEAR(got[j].distance, want[j].distance, 1e-12);
            }
        }
    }
}

TEST(KdIndex, TwoDimensionalIgnoresZ) {
    std::mt19937_64 rng(5);
    PointCloud c = random_cloud(rng, 300);
    const KdIndex2 idx(c);
    for (int i = 0; i < 200; ++i) {
        Vec3 q = random_point(rng);
        const auto a = idx.knn(q, 9);
        q.z() = 1e6;
        EXPECT_EQ(idx.knn(q, 9), a);
        EXPECT_EQ(a, brute_knn(c.points, q, 9, 2));
    }
}

TEST(KdIndex, GridTiesBreakByIndex) {
    // Integer lattice: many equidistant neighbours.
    PointCloud c;
    for (int x = 0; x < 6; ++x)
        for (int y = 0; y < 6; ++y)
            for (int z = 0; z < 6; ++z) c.points.emplace_back(x, y, z);
    const KdIndex3 idx(c);
    const KdIndex2 idx2(c);
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> coord(-1, 6);
    for (int i = 0; i < 300; ++i) {
        const Vec3 q(coord(rng) * 0.5, coord(rng) * 0.5, coord(rng) * 0.5);
        for (std::size_t k : {1, 7, 27, 216}) {
            EXPECT_EQ(idx.knn(q, k), brute_knn(c.points, q, k, 3));
            EXPECT_EQ(idx2.knn(q, k), brute_knn(c.points, q, k, 2));
        }
    }
}

TEST(KdIndex, AllCoincidentPoints) {
    PointCloud c;
    for (int i = 0; i < 50; ++i) c.points.emplace_back(2, 2, 2);
    const KdIndex3 idx(c);
    const auto r = idx.knn(Vec3(0, 0, 0), 5);
    ASSERT_EQ(r.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r[i].index, i);
}

namespace {

LaserScan2D scan_of(std::initializer_list<Vec3> pts) {
    LaserScan2D s;
    s.points = pts;
    return s;
}

}  // namespace

TEST(ConfidenceGrid, EmptyScanAndBadParametersThrow) {
    EXPECT_THROW(build_confidence_grid(LaserScan2D{}), DataError);
    const auto s = scan_of({Vec3(0, 0, 1.2)});
    EXPECT_THROW(build_confidence_grid(s, 0.0), ConfigError);
    EXPECT_THROW(build_confidence_grid(s, 0.2, -1.0), ConfigError);
}

TEST(ConfidenceGrid, KernelValues) {
    // Padding of 6.5 cells puts a cell center exactly on the scan point.
    const auto s = scan_of({Vec3(0.05, 0.05, 1.2)});
    const ConfidenceGrid g = build_confidence_grid(s, 0.2, 0.1, 0.65);
    int ci = -1, cj = -1;
    for (int i = 0; i < g.width; ++i)
        if (std::abs(g.center_x(i) - 0.05) < 1e-12) ci = i;
    for (int j = 0; j < g.height; ++j)
        if (std::abs(g.center_y(j) - 0.05) < 1e-12) cj = j;
    ASSERT_GE(ci, 0);
    ASSERT_GE(cj, 0);
    EXPECT_DOUBLE_EQ(g.at(ci, cj), 1.0);
    // Two cells over along x is one sigma away.
    EXPECT_NEAR(g.at(ci + 2, cj), std::exp(-0.5), 1e-12);
    EXPECT_NEAR(g.at(ci + 2, cj), 0.6065, 1e-4);
}

TEST(ConfidenceGrid, FarCellsAreNegligible) {
    const auto s = scan_of({Vec3(0, 0, 1.2)});
    const ConfidenceGrid g = build_confidence_grid(s, 0.2, 0.1, 2.0);
    for (int j = 0; j < g.height; ++j)
        for (int i = 0; i < g.width; ++i)
            if (std::hypot(g.center_x(i), g.center_y(j)) >= 5 * 0.2) EXPECT_LT(g.at(i, j), 4e-6);
}

TEST(ConfidenceGrid, PeakLowerBoundAndRange) {
    std::mt19937_64 rng(9);
    LaserScan2D s;
    for (int i = 0; i < 40; ++i) {
        Vec3 p = random_point(rng, -3, 3);
        p.z() = 1.2;
        s.points.push_back(p);
    }
    const double sigma = 0.2, cell = 0.1;
    const ConfidenceGrid g = build_confidence_grid(s, sigma, cell, 3 * sigma);
    const double bound = std::exp(-std::pow(cell * std::sqrt(2.0) / 2.0, 2) / (2 * sigma * sigma));
    for (const auto& p : s.points) {
        const int i = static_cast<int>(std::floor((p.x() - g.origin_x) / cell));
        const int j = static_cast<int>(std::floor((p.y() - g.origin_y) / cell));
        EXPECT_GE(g.at(i, j), bound - 1e-12);
    }
    for (double v : g.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(ConfidenceGrid, MonotoneAwayFromIsolatedPoint) {
    const auto s = scan_of({Vec3(0.37, -0.21, 1.2)});
    const ConfidenceGrid g = build_confidence_grid(s, 0.2, 0.05, 1.0);
    // Sample along a ray; allow one cell of discretization slack.
    double prev = sample_confidence(g, 0.37, -0.21);
    for (double r = 0.05; r < 0.9; r += 0.05) {
        const double v = sample_confidence(g, 0.37 + r * 0.6, -0.21 + r * 0.8);
        EXPECT_LE(v, prev + 1e-12);
        prev = v;
    }
}

TEST(ConfidenceGrid, SampleAtCenterOutsideAndMidpoint) {
    const auto s = scan_of({Vec3(0, 0, 1.2), Vec3(0.45, 0.3, 1.2)});
    const ConfidenceGrid g = build_confidence_grid(s);
    EXPECT_EQ(sample_confidence(g, g.origin_x - 0.01, 0.0), 0.0);
    EXPECT_EQ(sample_confidence(g, 100.0, 100.0), 0.0);
    for (int j = 1; j + 1 < g.height; j += 3)
        for (int i = 1; i + 2 < g.width; i += 3) {
            EXPECT_NEAR(sample_confidence(g, g.center_x(i), g.center_y(j)), g.at(i, j), 1e-12);
            const double mid = 0.5 * (g.center_x(i) + g.center_x(i + 1));
            EXPECT_NEAR(sample_confidence(g, mid, g.center_y(j)), 0.5 * (g.at(i, j) + g.at(i + 1, j)), 1e-12);
        }
}
