#pragma once

// Random generators and brute-force oracles shared by the unit and acceptance suites.
// The oracles deliberately avoid the library code paths they are used to check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fusionmap/geometry.hpp"
#include "fusionmap/kd_index.hpp"
#include "fusionmap/laser_mask.hpp"
#include "fusionmap/mlp.hpp"

namespace fusionmap::testing {

inline Vec3 random_point(std::mt19937_64& rng, double lo = -10.0, double hi = 10.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    const double x = d(rng), y = d(rng), z = d(rng);
    return {x, y, z};
}

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double lo = -10.0, double hi = 10.0) {
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i) c.points.push_back(random_point(rng, lo, hi));
    return c;
}

inline Pose random_pose(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    Pose p;
    p.rotation = q.toRotationMatrix();
    p.translation = random_point(rng, -5.0, 5.0);
    return p;
}

/// Linear-scan k nearest neighbours in the first `dim` coordinates; ties by lower index.
inline std::vector<Neighbor> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k, int dim) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double d2 = 0.0;
        for (int c = 0; c < dim; ++c) d2 += (pts[i][c] - q[c]) * (pts[i][c] - q[c]);
        all.emplace_back(d2, i);
    }
    std::sort(all.begin(), all.end());
    std::vector<Neighbor> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back({all[i].second, std::sqrt(all[i].first)});
    return out;
}

/// Minimum mean matching cost over every permutation.
inline double brute_emd(const PointCloud& a, const PointCloud& b) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) s += (a.points[i] - b.points[perm[i]]).norm();
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(a.size());
}

/// Scalar probe loss L = <c, mlp(x)> for finite-difference checks.
inline double probe_loss(const Mlp& m, const Vector& x, const Vector& c) { return c.dot(mlp_forward(m, x)); }

/// Signs of every hidden preactivation; a change means a finite-difference step crossed a kink.
inline std::vector<bool> activation_pattern(const Mlp& m, const Vector& x) {
    MlpCache cache;
    mlp_forward_batch(m, x, &cache);
    std::vector<bool> pattern;
    for (std::size_t l = 0; l + 1 < cache.preactivations.size(); ++l)
        for (Eigen::Index i = 0; i < cache.preactivations[l].size(); ++i)
            pattern.push_back(cache.preactivations[l](i) > 0.0);
    return pattern;
}

// Below this magnitude a derivative is compared absolutely; finite-difference round-off is about 1e-11.
inline constexpr double kGradientFloor = 1e-6;

struct FdCheck {
    std::size_t checked = 0;
    std::size_t skipped = 0;  // both one-sided steps crossed a kink
    double max_rel_error = 0.0;
};

/// Compares one analytic derivative with a finite difference of the probe loss.
/// Central differences are used when the step stays on one linear piece; for
/// piecewise-linear activations a one-sided difference on the unchanged side is exact.
template <class Perturb>
void fd_compare(FdCheck& out, const Mlp& m, const Vector& x, const Vector& c, double analytic, double h,
                Perturb perturb) {
    const bool piecewise = m.activation == Activation::leaky_relu;
    const auto base_pattern = activation_pattern(m, x);
    Mlp mp = m, mm = m;
    Vector xp = x, xm = x;
    perturb(mp, xp, h);
    perturb(mm, xm, -h);
    const double f0 = probe_loss(m, x, c);
    const double fp = probe_loss(mp, xp, c);
    const double fm = probe_loss(mm, xm, c);
    double numeric = 0.0;
    if (!piecewise) {
        numeric = (fp - fm) / (2.0 * h);
    } else {
        const bool plus_ok = activation_pattern(mp, xp) == base_pattern;
        const bool minus_ok = activation_pattern(mm, xm) == base_pattern;
        if (plus_ok && minus_ok) {
            numeric = (fp - fm) / (2.0 * h);
        } else if (plus_ok) {
            numeric = (fp - f0) / h;
        } else if (minus_ok) {
            numeric = (f0 - fm) / h;
        } else {
            ++out.skipped;
            return;
        }
    }
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), kGradientFloor});
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
}

/// Checks every weight, bias and input derivative of the probe loss.
inline FdCheck check_mlp_gradients(const Mlp& m, const Vector& x, const Vector& c, double h = 1e-5) {
    const MlpGradients g = mlp_backward(m, x, c);
    FdCheck out;
    for (std::size_t l = 0; l < m.layers(); ++l) {
        for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r)
            for (Eigen::Index k = 0; k < m.weights[l].cols(); ++k)
                fd_compare(out, m, x, c, g.d_weights[l](r, k), h,
                           [&](Mlp& net, Vector&, double d) { net.weights[l](r, k) += d; });
        for (Eigen::Index r = 0; r < m.biases[l].size(); ++r)
            fd_compare(out, m, x, c, g.d_biases[l](r), h, [&](Mlp& net, Vector&, double d) { net.biases[l](r) += d; });
    }
    for (Eigen::Index i = 0; i < x.size(); ++i)
        fd_compare(out, m, x, c, g.d_input(i, 0), h, [&](Mlp&, Vector& in, double d) { in(i) += d; });
    return out;
}

/// Level pinhole camera at `center` looking along world heading `yaw`.
inline CameraModel level_camera(const Vec3& center, double yaw, int width = 160, int height = 120, double f = 100.0) {
    CameraModel cam;
    cam.fx = cam.fy = f;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    Mat3 r;
    r.row(0) = Vec3(std::sin(yaw), -std::cos(yaw), 0.0);  // right
    r.row(1) = Vec3(0.0, 0.0, -1.0);                      // down
    r.row(2) = Vec3(std::cos(yaw), std::sin(yaw), 0.0);   // forward
    cam.extrinsic.rotation = r;
    cam.extrinsic.translation = -(r * center);
    return cam;
}

/// Whether a nonzero mask pixel is accounted for by the projected boundary curves:
/// either one beam's own column span, or the straight segment joining two consecutive
/// in-view beams. The pixel value must lie within the depths of the explaining beams.
inline bool mask_pixel_explained(const CameraModel& cam, const LaserScan2D& scan, double below, double above, int col,
                                 int row, double value) {
    struct Beam {
        double u, vl, vu, s;
        bool ok;
    };
    std::vector<Beam> beams;
    for (const auto& p : scan.points) {
        const auto lo = project_point(cam, Vec3(p.x(), p.y(), p.z() - below));
        const auto up = project_point(cam, Vec3(p.x(), p.y(), p.z() + above));
        const Vec3 pc = cam.extrinsic.rotation * p + cam.extrinsic.translation;
        if (!lo || !up) {
            beams.push_back({0, 0, 0, 0, false});
            continue;
        }
        beams.push_back({0.5 * (lo->u + up->u), lo->v, up->v, pc.z(), true});
    }
    const double tol = 1e-6;
    auto between = [&](double r, double a, double b) { return r >= std::min(a, b) - tol && r <= std::max(a, b) + tol; };
    auto value_ok = [&](double lo, double hi) {
        return value >= static_cast<float>(lo) * (1 - 1e-6) && value <= static_cast<float>(hi) * (1 + 1e-6);
    };
    for (std::size_t i = 0; i < beams.size(); ++i) {
        const Beam& a = beams[i];
        if (!a.ok) continue;
        if (std::lround(a.u) == col && between(row, a.vl, a.vu) && value_ok(a.s, a.s)) return true;
        if (i + 1 >= beams.size() || !beams[i + 1].ok) continue;
        const Beam& b = beams[i + 1];
        if (a.u == b.u) continue;
        const double t = (col - a.u) / (b.u - a.u);
        if (t < 0.0 || t > 1.0) continue;
        const double vl = a.vl + t * (b.vl - a.vl), vu = a.vu + t * (b.vu - a.vu);
        if (between(row, vl, vu) && value_ok(std::min(a.s, b.s), std::max(a.s, b.s))) return true;
    }
    return false;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(std::filesystem::temp_directory_path() / ("fusionmap_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace fusionmap::testing
