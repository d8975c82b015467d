#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "fusionmap/error.hpp"

namespace fusionmap {

// World frame is z-up. Camera frame is x right, y down, z forward.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool is_finite(const Vec3& p) { return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z()); }

/// Rigid transform p -> R p + t.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }

    static Pose from_translation(const Vec3& t) {
        Pose p;
        p.translation = t;
        return p;
    }

    /// Rotation about world z by `yaw` radians, then translation.
    static Pose from_yaw(double yaw, const Vec3& t = Vec3::Zero()) {
        Pose p;
        p.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
        p.translation = t;
        return p;
    }

    bool is_valid(double tol = 1e-9) const {
        if (!rotation.allFinite() || !is_finite(translation)) return false;
        if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
        return std::abs(rotation.determinant() - 1.0) <= tol;
    }
};

inline Vec3 transform_point(const Pose& pose, const Vec3& p) { return pose.rotation * p + pose.translation; }

/// (a ∘ b)(p) = a(b(p)).
inline Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

inline Pose invert(const Pose& pose) {
    Pose out;
    out.rotation = pose.rotation.transpose();
    out.translation = -(out.rotation * pose.translation);
    return out;
}

/// Pinhole intrinsics plus the world -> camera extrinsic.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Pose extrinsic;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("camera focal lengths must be positive");
        if (width <= 0 || height <= 0) throw DataError("camera dimensions must be positive");
        if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
            throw DataError("camera principal point outside the image");
        if (!extrinsic.is_valid(1e-6)) throw DataError("camera extrinsic is not a rigid transform");
    }

    /// Camera center in world coordinates.
    Vec3 center() const { return invert(extrinsic).translation; }
};

/// Row-major single-channel float raster; 0 marks an empty pixel.
template <class Tag>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, float fill = 0.0f) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
        if (w < 0 || h < 0) throw DataError("negative image dimensions");
    }

    float& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
    float at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
    bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
    std::size_t size() const { return data.size(); }

    friend bool operator==(const Image&, const Image&) = default;
};

struct DepthTag;
struct MaskTag;
using DepthImage = Image<DepthTag>;
using Mask = Image<MaskTag>;

/// Rejects NaN, infinities and negative depths.
template <class Tag>
void validate_depth_values(const Image<Tag>& img) {
    if (img.data.size() != static_cast<std::size_t>(img.width) * img.height)
        throw DataError("image data length does not match its dimensions");
    for (float d : img.data)
        if (!std::isfinite(d) || d < 0.0f) throw DataError("depth values must be finite and non-negative");
}

struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

inline PointCloud transform_cloud(const Pose& pose, const PointCloud& cloud) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto& p : cloud.points) out.points.push_back(transform_point(pose, p));
    return out;
}

struct Projection {
    double u;
    double v;
    double s;  ///< camera-frame depth
};

// Camera depth below which a point counts as behind the camera.
inline constexpr double kMinProjectionDepth = 1e-6;

inline std::optional<Projection> project_point(const CameraModel& cam, const Vec3& p_world) {
    const Vec3 pc = transform_point(cam.extrinsic, p_world);
    if (!(pc.z() > kMinProjectionDepth)) return std::nullopt;
    const double s = pc.z();
    const double u = cam.fx * pc.x() / s + cam.cx;
    const double v = cam.fy * pc.y() / s + cam.cy;
    if (!(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height)) return std::nullopt;
    return Projection{u, v, s};
}

/// World point seen at pixel (u, v) with camera depth s.
inline Vec3 backproject_pixel(const CameraModel& cam, double u, double v, double s) {
    const Vec3 pc((u - cam.cx) * s / cam.fx, (v - cam.cy) * s / cam.fy, s);
    return transform_point(invert(cam.extrinsic), pc);
}

/// Back-projected cloud plus, for each point, the row-major pixel index it came from.
struct IndexedCloud {
    PointCloud cloud;
    std::vector<std::size_t> pixel;
};

inline IndexedCloud backproject_depth_indexed(const CameraModel& cam, const DepthImage& depth) {
    if (depth.width != cam.width || depth.height != cam.height)
        throw DataError("depth image is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                        " but camera is " + std::to_string(cam.width) + "x" + std::to_string(cam.height));
    const Pose cam_to_world = invert(cam.extrinsic);
    IndexedCloud out;
    for (int v = 0; v < depth.height; ++v) {
        for (int u = 0; u < depth.width; ++u) {
            const double s = depth.at(u, v);
            if (s <= 0.0) continue;
            const Vec3 pc((u - cam.cx) * s / cam.fx, (v - cam.cy) * s / cam.fy, s);
            out.cloud.points.push_back(transform_point(cam_to_world, pc));
            out.pixel.push_back(static_cast<std::size_t>(v) * depth.width + u);
        }
    }
    return out;
}

inline PointCloud backproject_depth(const CameraModel& cam, const DepthImage& depth) {
    return backproject_depth_indexed(cam, depth).cloud;
}

/// Z-buffered rasterization of a cloud into the camera (nearest depth per pixel).
inline DepthImage rasterize_cloud(const CameraModel& cam, const PointCloud& cloud) {
    DepthImage out(cam.width, cam.height);
    for (const auto& p : cloud.points) {
        // Nearest pixel center, so points a hair left of column 0 still land in it.
        const Vec3 pc = transform_point(cam.extrinsic, p);
        if (!(pc.z() > kMinProjectionDepth)) continue;
        const int u = static_cast<int>(std::lround(cam.fx * pc.x() / pc.z() + cam.cx));
        const int v = static_cast<int>(std::lround(cam.fy * pc.y() / pc.z() + cam.cy));
        if (!out.contains(u, v)) continue;
        float& d = out.at(u, v);
        const auto s = static_cast<float>(pc.z());
        if (d == 0.0f || s < d) d = s;
    }
    return out;
}

}  // namespace fusionmap
