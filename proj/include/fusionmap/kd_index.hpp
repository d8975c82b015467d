#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"

namespace fusionmap {

struct Neighbor {
    std::size_t index;
    double distance;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact k-d tree over 2D (xy) or 3D points. Results match a linear scan,
/// including tie order (equal distances sorted by point index).
template <int Dim>
class KdIndex {
    static_assert(Dim == 2 || Dim == 3, "KdIndex supports 2D and 3D points");

public:
    static constexpr int dimension = Dim;
    static constexpr std::size_t leaf_size = 8;

    explicit KdIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
        if (points_.empty()) throw DataError("cannot build a spatial index over zero points");
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        nodes_.reserve(2 * points_.size() / leaf_size + 1);
        build(0, points_.size());
    }

    explicit KdIndex(const PointCloud& cloud) : KdIndex(std::span<const Vec3>(cloud.points)) {}

    std::size_t size() const { return points_.size(); }
    const std::vector<Vec3>& points() const { return points_; }
    const Vec3& point(std::size_t i) const { return points_[i]; }

    static double squared_distance(const Vec3& a, const Vec3& b) {
        double d2 = 0.0;
        for (int c = 0; c < Dim; ++c) {
            const double d = a[c] - b[c];
            d2 += d * d;
        }
        return d2;
    }

    /// The k nearest points sorted by ascending distance. Returns every point when k >= size().
    std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const {
        k = std::min(k, points_.size());
        std::vector<Neighbor> out;
        if (k == 0) return out;
        Heap heap;
        search(0, query, k, heap);
        std::vector<Candidate> found;
        found.reserve(heap.size());
        while (!heap.empty()) {
            found.push_back(heap.top());
            heap.pop();
        }
        out.reserve(found.size());
        for (auto it = found.rbegin(); it != found.rend(); ++it) out.push_back({it->index, std::sqrt(it->d2)});
        return out;
    }

    Neighbor nearest(const Vec3& query) const { return knn(query, 1).front(); }

private:
    struct Node {
        std::size_t begin;
        std::size_t end;
        int axis = -1;  // -1 marks a leaf
        double split = 0.0;
        std::uint32_t left = 0;
        std::uint32_t right = 0;
    };

    struct Candidate {
        double d2;
        std::size_t index;
        bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
    };
    using Heap = std::priority_queue<Candidate>;

    std::uint32_t build(std::size_t begin, std::size_t end) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= leaf_size) return id;

        std::array<double, Dim> lo, hi;
        lo.fill(std::numeric_limits<double>::infinity());
        hi.fill(-std::numeric_limits<double>::infinity());
        for (std::size_t i = begin; i < end; ++i)
            for (int c = 0; c < Dim; ++c) {
                lo[c] = std::min(lo[c], points_[order_[i]][c]);
                hi[c] = std::max(hi[c], points_[order_[i]][c]);
            }
        int axis = 0;
        for (int c = 1; c < Dim; ++c)
            if (hi[c] - lo[c] > hi[axis] - lo[axis]) axis = c;
        if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        const double split = points_[order_[mid]][axis];

        const auto left = build(begin, mid);
        const auto right = build(mid, end);
        Node& n = nodes_[id];
        n.axis = axis;
        n.split = split;
        n.left = left;
        n.right = right;
        return id;
    }

    void search(std::uint32_t id, const Vec3& q, std::size_t k, Heap& heap) const {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const Candidate c{squared_distance(points_[order_[i]], q), order_[i]};
                if (heap.size() < k) {
                    heap.push(c);
                } else if (c < heap.top()) {
                    heap.pop();
                    heap.push(c);
                }
            }
            return;
        }
        // Left holds coordinates <= split, right holds >= split.
        const double diff = q[n.axis] - n.split;
        const std::uint32_t first = diff <= 0.0 ? n.left : n.right;
        const std::uint32_t second = diff <= 0.0 ? n.right : n.left;
        search(first, q, k, heap);
        // Equality keeps descending so index tie-breaks stay exact.
        if (heap.size() < k || diff * diff <= heap.top().d2) search(second, q, k, heap);
    }

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

using KdIndex2 = KdIndex<2>;
using KdIndex3 = KdIndex<3>;

}  // namespace fusionmap
