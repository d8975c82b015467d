#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"
#include "fusionmap/laser_mask.hpp"
#include "fusionmap/local_map.hpp"

namespace fusionmap {

using Vec2 = Eigen::Vector2d;

/// Axis-aligned solid resting anywhere in the world.
struct Box {
    Vec3 center;
    Vec3 size;
};

/// Zero-thickness vertical wall from the ground up to `height` along segment a-b.
struct Wall {
    Vec2 a;
    Vec2 b;
    double height = 2.5;
};

/// Static scene: a square ground patch [-extent, extent]^2 at z = 0 plus boxes and walls.
struct SceneSpec {
    double extent = 5.0;
    bool ground = true;
    std::vector<Box> boxes;
    std::vector<Wall> walls;

    void validate() const {
        if (!(extent > 0.0)) throw ConfigError("scene extent must be positive");
        for (const auto& b : boxes) {
            if (!(b.size.minCoeff() > 0.0)) throw ConfigError("box sizes must be positive");
            const Vec3 lo = b.center - 0.5 * b.size, hi = b.center + 0.5 * b.size;
            if (lo.x() < -extent || lo.y() < -extent || hi.x() > extent || hi.y() > extent)
                throw ConfigError("box outside the scene extent");
        }
        for (const auto& w : walls)
            if (w.a.cwiseAbs().maxCoeff() > extent + 1e-9 || w.b.cwiseAbs().maxCoeff() > extent + 1e-9)
                throw ConfigError("wall outside the scene extent");
    }
};

namespace detail {

inline constexpr double kRayEpsilon = 1e-9;

inline std::optional<double> hit_ground(const SceneSpec& s, const Vec3& o, const Vec3& d) {
    if (!s.ground || d.z() == 0.0) return std::nullopt;
    const double t = -o.z() / d.z();
    if (t <= kRayEpsilon) return std::nullopt;
    const Vec3 p = o + t * d;
    if (std::abs(p.x()) > s.extent || std::abs(p.y()) > s.extent) return std::nullopt;
    return t;
}

inline std::optional<double> hit_box(const Box& b, const Vec3& o, const Vec3& d) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 3; ++c) {
        const double lo = b.center[c] - 0.5 * b.size[c];
        const double hi = b.center[c] + 0.5 * b.size[c];
        if (d[c] == 0.0) {
            if (o[c] < lo || o[c] > hi) return std::nullopt;
            continue;
        }
        double ta = (lo - o[c]) / d[c];
        double tb = (hi - o[c]) / d[c];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
    }
    if (t0 > kRayEpsilon) return t0;
    if (t1 > kRayEpsilon) return t1;  // origin inside the box
    return std::nullopt;
}

inline std::optional<double> hit_wall(const Wall& w, const Vec3& o, const Vec3& d) {
    const Vec2 seg = w.b - w.a;
    const Vec2 normal(-seg.y(), seg.x());
    const double denom = normal.dot(d.head<2>());
    if (denom == 0.0) return std::nullopt;
    const double t = normal.dot(w.a - o.head<2>()) / denom;
    if (t <= kRayEpsilon) return std::nullopt;
    const Vec3 p = o + t * d;
    const double along = (p.head<2>() - w.a).dot(seg) / seg.squaredNorm();
    if (along < 0.0 || along > 1.0 || p.z() < 0.0 || p.z() > w.height) return std::nullopt;
    return t;
}

}  // namespace detail

/// Nearest positive ray parameter t (in units of |d|) over all scene surfaces.
inline std::optional<double> cast_ray(const SceneSpec& s, const Vec3& origin, const Vec3& dir) {
    std::optional<double> best;
    auto consider = [&](std::optional<double> t) {
        if (t && (!best || *t < *best)) best = t;
    };
    consider(detail::hit_ground(s, origin, dir));
    for (const auto& b : s.boxes) consider(detail::hit_box(b, origin, dir));
    for (const auto& w : s.walls) consider(detail::hit_wall(w, origin, dir));
    return best;
}

/// Distance from a point to the nearest scene surface (ground patch, box faces, wall panels).
inline double distance_to_surfaces(const SceneSpec& s, const Vec3& p) {
    double best = std::numeric_limits<double>::infinity();
    if (s.ground) {
        const double dx = std::max(0.0, std::abs(p.x()) - s.extent);
        const double dy = std::max(0.0, std::abs(p.y()) - s.extent);
        best = std::min(best, std::sqrt(dx * dx + dy * dy + p.z() * p.z()));
    }
    for (const auto& b : s.boxes) {
        const Vec3 q = (p - b.center).cwiseAbs() - 0.5 * b.size;
        const double outside = q.cwiseMax(0.0).norm();
        const double inside = std::min(q.maxCoeff(), 0.0);
        best = std::min(best, std::abs(outside + inside));
    }
    for (const auto& w : s.walls) {
        const Vec2 seg = w.b - w.a;
        const double t = std::clamp((p.head<2>() - w.a).dot(seg) / seg.squaredNorm(), 0.0, 1.0);
        const Vec2 horiz = p.head<2>() - (w.a + t * seg);
        const double dz = std::max({0.0, -p.z(), p.z() - w.height});
        best = std::min(best, std::sqrt(horiz.squaredNorm() + dz * dz));
    }
    return best;
}

/// Camera-frame depth of the nearest hit through each pixel; 0 where the ray escapes.
inline DepthImage render_depth(const SceneSpec& scene, const CameraModel& cam) {
    DepthImage img(cam.width, cam.height);
    const Pose cam_to_world = invert(cam.extrinsic);
    const Vec3 origin = cam_to_world.translation;
    for (int v = 0; v < cam.height; ++v)
        for (int u = 0; u < cam.width; ++u) {
            // Ray direction with unit camera-z component, so t is the camera depth.
            const Vec3 dir = cam_to_world.rotation * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
            if (const auto t = cast_ray(scene, origin, dir)) img.at(u, v) = static_cast<float>(*t);
        }
    return img;
}

struct Intrinsics {
    double fx = 100.0;
    double fy = 100.0;
    double cx = 80.0;
    double cy = 60.0;
    int width = 160;
    int height = 120;
};

/// Ground robot carrying a camera and a planar laser. `pose` is rig -> world, rig x forward, z up.
struct SensorRig {
    CameraModel camera;
    double mount_height = 1.2;
    int beams = 64;
    double span = std::numbers::pi;
    Pose pose;

    void validate() const {
        camera.validate();
        if (!(mount_height > 0.0)) throw ConfigError("laser mount height must be positive");
        if (beams < 2) throw ConfigError("laser needs at least two beams");
        if (!(span > 0.0)) throw ConfigError("laser span must be positive");
    }
};

/// Camera mounted `height` above the rig origin looking along rig x, pitched down by `pitch` radians.
inline CameraModel mount_camera(const Intrinsics& k, const Pose& rig_pose, double height, double pitch) {
    const Vec3 fwd = rig_pose.rotation * Vec3::UnitX();
    const Vec3 up = Vec3::UnitZ();
    const Vec3 z_axis = std::cos(pitch) * fwd - std::sin(pitch) * up;
    const Vec3 y_axis = -std::sin(pitch) * fwd - std::cos(pitch) * up;
    const Vec3 x_axis = y_axis.cross(z_axis);
    Pose cam_to_world;
    cam_to_world.rotation.col(0) = x_axis.normalized();
    cam_to_world.rotation.col(1) = y_axis.normalized();
    cam_to_world.rotation.col(2) = z_axis.normalized();
    cam_to_world.translation = rig_pose.translation + height * up;
    CameraModel cam;
    cam.fx = k.fx;
    cam.fy = k.fy;
    cam.cx = k.cx;
    cam.cy = k.cy;
    cam.width = k.width;
    cam.height = k.height;
    cam.extrinsic = invert(cam_to_world);
    return cam;
}

/// Horizontal rays at the mount height, evenly spread over the span centered on rig x; misses are dropped.
inline LaserScan2D simulate_laser(const SceneSpec& scene, const SensorRig& rig) {
    std::vector<double> angles, ranges;
    const Vec3 origin(rig.pose.translation.x(), rig.pose.translation.y(), rig.mount_height);
    const Vec3 fwd = rig.pose.rotation * Vec3::UnitX();
    const double yaw = std::atan2(fwd.y(), fwd.x());
    for (int i = 0; i < rig.beams; ++i) {
        const double theta = -0.5 * rig.span + rig.span * i / (rig.beams - 1);
        const Vec3 dir(std::cos(yaw + theta), std::sin(yaw + theta), 0.0);
        angles.push_back(theta);
        ranges.push_back(cast_ray(scene, origin, dir).value_or(0.0));
    }
    const Pose sensor = Pose::from_yaw(yaw, Vec3(origin.x(), origin.y(), 0.0));
    return scan_from_polar(angles, ranges, rig.mount_height, sensor);
}

struct CorruptionSpec {
    double tail_prob = 0.0;       // chance a discontinuity pixel grows a tail
    double tail_length = 0.0;     // maximum push along the viewing ray, m
    double misalign_sigma = 0.0;  // xy noise std, m
    std::uint64_t seed = 0;

    void validate() const {
        if (!(tail_prob >= 0.0 && tail_prob <= 1.0)) throw ConfigError("tail_prob must lie in [0, 1]");
        if (!(tail_length >= 0.0)) throw ConfigError("tail_length must be non-negative");
        if (!(misalign_sigma >= 0.0)) throw ConfigError("misalign_sigma must be non-negative");
    }
};

inline constexpr double kDiscontinuityJump = 1.0;

/// True for valid pixels with a valid 4-neighbour more than `jump` meters away in depth.
inline std::vector<char> discontinuity_mask(const DepthImage& depth, double jump = kDiscontinuityJump) {
    std::vector<char> out(depth.size(), 0);
    for (int v = 0; v < depth.height; ++v)
        for (int u = 0; u < depth.width; ++u) {
            const double d = depth.at(u, v);
            if (d <= 0.0) continue;
            const int du[4] = {1, -1, 0, 0};
            const int dv[4] = {0, 0, 1, -1};
            for (int n = 0; n < 4; ++n) {
                const int uu = u + du[n], vv = v + dv[n];
                if (!depth.contains(uu, vv)) continue;
                const double dn = depth.at(uu, vv);
                if (dn > 0.0 && std::abs(dn - d) > jump) {
                    out[static_cast<std::size_t>(v) * depth.width + u] = 1;
                    break;
                }
            }
        }
    return out;
}

/// Injects long tails (pushes along the viewing ray at depth discontinuities) and
/// misalignment (xy Gaussian noise on every point) into a back-projected cloud.
inline PointCloud corrupt_cloud(const PointCloud& cloud, const DepthImage& gt_depth, const CameraModel& cam,
                                const CorruptionSpec& spec) {
    spec.validate();
    const IndexedCloud ref = backproject_depth_indexed(cam, gt_depth);
    if (ref.cloud.size() != cloud.size())
        throw DataError("cloud does not match the back-projection of the depth image");
    const std::vector<char> edges = discontinuity_mask(gt_depth);
    const Vec3 center = cam.center();

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointCloud out = cloud;
    if (spec.tail_prob > 0.0 && spec.tail_length > 0.0) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!edges[ref.pixel[i]]) continue;
            if (unit(rng) >= spec.tail_prob) continue;
            const double len = spec.tail_length * (1.0 - unit(rng));  // (0, tail_length]
            Vec3& p = out.points[i];
            p += len * (p - center).normalized();
        }
    }
    if (spec.misalign_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.misalign_sigma);
        for (auto& p : out.points) {
            p.x() += noise(rng);
            p.y() += noise(rng);
        }
    }
    return out;
}

struct DatasetOptions {
    Intrinsics intrinsics;
    double camera_height = 1.5;
    double camera_pitch = 0.1;
    double mount_height = 1.2;
    int beams = 64;
    double span = std::numbers::pi;
    double map_thresh = kIndoorMapRadius;
    double step = 0.15;  // rig travel between consecutive poses of the window, m
};

struct SynthSample {
    SceneSpec scene;
    CameraModel camera;                // current frame
    std::vector<Pose> sweep_poses;     // sensor -> world, oldest first, newest = current camera
    DepthImage gt_depth;
    PointCloud gt_cloud;
    LaserScan2D scan;
    LocalMap local_map;
    PointCloud corrupted_cloud;
};

/// Splitmix-style mixing so per-frame streams are independent of each other.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace detail {

inline double footprint_distance(const Box& b, const Vec2& p) {
    const Vec2 q = (p - b.center.head<2>()).cwiseAbs() - 0.5 * b.size.head<2>();
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

}  // namespace detail

/// One random scene per frame, observed from the newest pose of a short forward trajectory.
inline SynthSample generate_frame(std::uint64_t scene_seed, std::size_t frame, const CorruptionSpec& corruption,
                                  const DatasetOptions& opt = {}) {
    std::mt19937_64 rng(mix_seed(scene_seed, frame));
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto integer = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    SynthSample s;
    SceneSpec& scene = s.scene;
    scene.extent = uniform(3.5, 4.5);
    const double e = scene.extent;

    // Rig trajectory: newest pose near the middle, earlier poses trailing behind it.
    const double yaw = uniform(-std::numbers::pi, std::numbers::pi);
    const Vec2 heading(std::cos(yaw), std::sin(yaw));
    const double r = uniform(0.0, e / 4.0), a = uniform(-std::numbers::pi, std::numbers::pi);
    const Vec2 newest(r * std::cos(a), r * std::sin(a));
    std::vector<Pose> rig_poses;
    for (std::size_t i = ScanBuffer::capacity; i-- > 0;) {
        const Vec2 xy = newest - static_cast<double>(i) * opt.step * heading;
        rig_poses.push_back(Pose::from_yaw(yaw + uniform(-0.02, 0.02), Vec3(xy.x(), xy.y(), 0.0)));
    }

    // 2-4 boundary walls.
    const Vec2 corners[4] = {{-e, -e}, {e, -e}, {e, e}, {-e, e}};
    std::vector<int> sides{0, 1, 2, 3};
    std::shuffle(sides.begin(), sides.end(), rng);
    const int n_walls = integer(2, 4);
    for (int i = 0; i < n_walls; ++i)
        scene.walls.push_back({corners[sides[i]], corners[(sides[i] + 1) % 4], uniform(2.2, 3.0)});

    // 3-8 boxes kept clear of the trajectory, all taller than the laser plane so every obstacle shows up in the scan.
    const int n_boxes = integer(3, 8);
    int attempts = 0;
    while (static_cast<int>(scene.boxes.size()) < n_boxes && attempts++ < 1000) {
        Box b;
        b.size = Vec3(uniform(0.3, 1.2), uniform(0.3, 1.2), uniform(1.5, 2.5));
        const double mx = e - 0.5 * b.size.x() - 0.05, my = e - 0.5 * b.size.y() - 0.05;
        b.center = Vec3(uniform(-mx, mx), uniform(-my, my), 0.5 * b.size.z());
        bool clear = true;
        for (const auto& p : rig_poses)
            if (detail::footprint_distance(b, p.translation.head<2>()) < 1.0) clear = false;
        if (clear) scene.boxes.push_back(b);
    }
    scene.validate();

    ScanBuffer buf;
    for (const auto& rp : rig_poses) {
        const CameraModel cam = mount_camera(opt.intrinsics, rp, opt.camera_height, opt.camera_pitch);
        const PointCloud world = backproject_depth(cam, render_depth(scene, cam));
        buf.push(transform_cloud(cam.extrinsic, world), invert(cam.extrinsic));
        s.sweep_poses.push_back(invert(cam.extrinsic));
    }

    SensorRig rig;
    rig.camera = mount_camera(opt.intrinsics, rig_poses.back(), opt.camera_height, opt.camera_pitch);
    rig.mount_height = opt.mount_height;
    rig.beams = opt.beams;
    rig.span = opt.span;
    rig.pose = rig_poses.back();
    rig.validate();

    s.camera = rig.camera;
    s.gt_depth = render_depth(scene, s.camera);
    s.gt_cloud = backproject_depth(s.camera, s.gt_depth);
    s.scan = simulate_laser(scene, rig);
    s.local_map = build_local_map(buf, s.camera.center(), opt.map_thresh);
    CorruptionSpec c = corruption;
    c.seed = mix_seed(corruption.seed, frame);
    s.corrupted_cloud = corrupt_cloud(s.gt_cloud, s.gt_depth, s.camera, c);
    return s;
}

inline std::vector<SynthSample> generate_dataset(std::uint64_t scene_seed, std::size_t n_frames,
                                                 const CorruptionSpec& corruption, const DatasetOptions& opt = {}) {
    if (n_frames < 1) throw ConfigError("dataset needs at least one frame");
    corruption.validate();
    std::vector<SynthSample> out;
    out.reserve(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) out.push_back(generate_frame(scene_seed, f, corruption, opt));
    return out;
}

}  // namespace fusionmap
