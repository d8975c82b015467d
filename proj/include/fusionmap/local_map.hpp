#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <set>
#include <tuple>
#include <utility>

#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"

namespace fusionmap {

inline constexpr double kOutdoorMapRadius = 30.0;
inline constexpr double kIndoorMapRadius = 8.0;

/// FIFO of the most recent sweeps, each in its sensor frame with its sensor -> world pose.
class ScanBuffer {
public:
    static constexpr std::size_t capacity = 5;

    struct Entry {
        PointCloud cloud;
        Pose pose;
    };

    void push(PointCloud cloud, const Pose& pose) {
        if (entries_.size() == capacity) entries_.pop_front();
        entries_.push_back({std::move(cloud), pose});
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::deque<Entry>& entries() const { return entries_; }
    const Entry& newest() const { return entries_.back(); }

private:
    std::deque<Entry> entries_;
};

/// Value-returning form of ScanBuffer::push.
inline ScanBuffer push_scan(ScanBuffer buf, PointCloud cloud, const Pose& pose) {
    buf.push(std::move(cloud), pose);
    return buf;
}

struct LocalMap {
    PointCloud cloud;
    Vec3 center = Vec3::Zero();
    double thresh = kIndoorMapRadius;
};

/// Keeps one point per occupied voxel (the first encountered), preserving input order.
inline PointCloud voxel_filter(const PointCloud& cloud, double leaf) {
    if (!(leaf > 0.0)) throw ConfigError("voxel leaf size must be positive");
    std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t>> seen;
    PointCloud out;
    for (const auto& p : cloud.points) {
        const auto key = std::make_tuple(static_cast<std::int64_t>(std::floor(p.x() / leaf)),
                                         static_cast<std::int64_t>(std::floor(p.y() / leaf)),
                                         static_cast<std::int64_t>(std::floor(p.z() / leaf)));
        if (seen.insert(key).second) out.points.push_back(p);
    }
    return out;
}

/// Union of the buffered sweeps in the world frame, cropped to a ball of radius `thresh`
/// (boundary inclusive) around `center`. A positive `voxel_leaf` thins the result.
inline LocalMap build_local_map(const ScanBuffer& buf, const Vec3& center, double thresh, double voxel_leaf = 0.0) {
    if (buf.empty()) throw DataError("cannot build a local map from an empty scan buffer");
    if (!(thresh > 0.0)) throw ConfigError("local map threshold must be positive");
    LocalMap map;
    map.center = center;
    map.thresh = thresh;
    for (const auto& e : buf.entries())
        for (const auto& p : e.cloud.points) {
            const Vec3 w = transform_point(e.pose, p);
            if ((w - center).norm() <= thresh) map.cloud.points.push_back(w);
        }
    if (voxel_leaf > 0.0) map.cloud = voxel_filter(map.cloud, voxel_leaf);
    return map;
}

/// Centers the map on the newest sensor position.
inline LocalMap build_local_map(const ScanBuffer& buf, double thresh) {
    if (buf.empty()) throw DataError("cannot build a local map from an empty scan buffer");
    return build_local_map(buf, buf.newest().pose.translation, thresh);
}

}  // namespace fusionmap
