#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fusionmap/confidence_grid.hpp"
#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"
#include "fusionmap/kd_index.hpp"
#include "fusionmap/laser_mask.hpp"
#include "fusionmap/local_map.hpp"
#include "fusionmap/mlp.hpp"

namespace fusionmap {

inline constexpr int kDefaultNeighbors = 9;
inline constexpr double kDefaultOffsetClamp = 2.0;
inline constexpr double kDefaultRejectRadius = 5.0;

/// Interleaved (dx, dy) from a point to its k nearest laser returns in the ground plane.
struct FxyFeature {
    Vector values;
};

/// Interleaved (dz, confidence) for the k nearest cloud neighbours of a point.
struct FzFeature {
    Vector values;
};

/// Two shared per-point heads: xy offsets from laser geometry, z offset from local height structure.
struct RefinementModel {
    Mlp xy;  // 2k -> 2
    Mlp z;   // 2k -> 1
    int k = kDefaultNeighbors;

    void validate() const {
        if (k < 1) throw DataError("refinement model needs k >= 1");
        xy.validate();
        z.validate();
        if (xy.input_size() != 2 * k || z.input_size() != 2 * k)
            throw DataError("refinement heads must take 2k inputs");
        if (xy.output_size() != 2 || z.output_size() != 1)
            throw DataError("refinement heads must output 2 (xy) and 1 (z) values");
    }

    friend bool operator==(const RefinementModel&, const RefinementModel&) = default;
};

/// 2k -> hidden... -> {2, 1} heads with small initial weights so the initial offsets are near zero.
inline RefinementModel make_refinement_model(int k = kDefaultNeighbors, std::vector<int> hidden = {64, 64},
                                             std::uint64_t seed = 1, double init_scale = 0.1,
                                             Activation act = Activation::leaky_relu) {
    if (k < 1) throw ConfigError("neighbour count k must be at least 1");
    std::mt19937_64 rng(seed);
    std::vector<int> sizes{2 * k};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    RefinementModel m;
    m.k = k;
    sizes.push_back(2);
    m.xy = make_mlp(sizes, rng, init_scale, act);
    sizes.back() = 1;
    m.z = make_mlp(sizes, rng, init_scale, act);
    return m;
}

/// Clears the output layers of both heads; the model then leaves every point where it is.
inline void zero_output_layers(RefinementModel& m) {
    m.xy.weights.back().setZero();
    m.xy.biases.back().setZero();
    m.z.weights.back().setZero();
    m.z.biases.back().setZero();
}

/// Points whose nearest laser return is farther than `reject_radius` in xy get an all-zero feature.
inline FxyFeature extract_fxy(const Vec3& p, const KdIndex2& scan_index, int k,
                              double reject_radius = kDefaultRejectRadius) {
    FxyFeature f{Vector::Zero(2 * k)};
    const auto nbrs = scan_index.knn(p, static_cast<std::size_t>(k));
    if (nbrs.empty() || nbrs.front().distance > reject_radius) return f;
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
        const Vec3& n = scan_index.point(nbrs[i].index);
        f.values[2 * i] = n.x() - p.x();
        f.values[2 * i + 1] = n.y() - p.y();
    }
    return f;
}

/// Neighbours of cloud point `self` (excluded from its own list), ordered by 3D distance.
inline FzFeature extract_fz(std::size_t self, const KdIndex3& cloud_index, const ConfidenceGrid& grid, int k) {
    FzFeature f{Vector::Zero(2 * k)};
    const Vec3& p = cloud_index.point(self);
    auto nbrs = cloud_index.knn(p, static_cast<std::size_t>(k) + 1);
    auto self_it = std::find_if(nbrs.begin(), nbrs.end(), [&](const Neighbor& n) { return n.index == self; });
    if (self_it != nbrs.end()) {
        nbrs.erase(self_it);
    } else if (nbrs.size() > static_cast<std::size_t>(k)) {
        nbrs.pop_back();
    }
    for (std::size_t i = 0; i < nbrs.size() && i < static_cast<std::size_t>(k); ++i) {
        const Vec3& n = cloud_index.point(nbrs[i].index);
        f.values[2 * i] = n.z() - p.z();
        f.values[2 * i + 1] = sample_confidence(grid, n.x(), n.y());
    }
    return f;
}

/// Per-point features for a whole cloud, one column per point.
struct FeatureSet {
    Matrix fxy;
    Matrix fz;
};

inline FeatureSet extract_features(const PointCloud& cloud, const LaserScan2D& scan, const ConfidenceGrid& grid, int k,
                                   double reject_radius = kDefaultRejectRadius) {
    if (cloud.empty()) throw DataError("cannot refine an empty cloud");
    if (scan.empty()) throw DataError("refinement needs a non-empty laser scan");
    const KdIndex2 scan_index(scan.points);
    const KdIndex3 cloud_index(cloud);
    const auto n = static_cast<Eigen::Index>(cloud.size());
    FeatureSet fs{Matrix(2 * k, n), Matrix(2 * k, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        fs.fxy.col(i) = extract_fxy(cloud.points[static_cast<std::size_t>(i)], scan_index, k, reject_radius).values;
        fs.fz.col(i) = extract_fz(static_cast<std::size_t>(i), cloud_index, grid, k).values;
    }
    return fs;
}

/// Head outputs clamped to [-clamp, clamp]; rows are (dx, dy, dz), one column per point.
inline Matrix predict_offsets(const RefinementModel& model, const FeatureSet& fs, double clamp = kDefaultOffsetClamp) {
    Matrix off(3, fs.fxy.cols());
    off.topRows(2) = mlp_forward_batch(model.xy, fs.fxy);
    off.bottomRows(1) = mlp_forward_batch(model.z, fs.fz);
    return off.cwiseMax(-clamp).cwiseMin(clamp);
}

inline PointCloud apply_refinement(const RefinementModel& model, const PointCloud& cloud, const LaserScan2D& scan,
                                   const ConfidenceGrid& grid, double offset_clamp = kDefaultOffsetClamp,
                                   double reject_radius = kDefaultRejectRadius) {
    model.validate();
    const FeatureSet fs = extract_features(cloud, scan, grid, model.k, reject_radius);
    const Matrix off = predict_offsets(model, fs, offset_clamp);
    PointCloud out = cloud;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        out.points[i].x() += off(0, c);
        out.points[i].y() += off(1, c);
        out.points[i].z() += off(2, c);
    }
    return out;
}

struct RefinementLoss {
    double loss = 0.0;                         // sum of squared distances, m^2
    std::vector<std::size_t> correspondences;  // nearest map point per refined point
};

/// One-hot nearest-neighbour correspondence loss against the local map.
inline RefinementLoss refinement_loss(const PointCloud& refined, const KdIndex3& map_index) {
    if (refined.empty()) throw DataError("refinement loss needs a non-empty cloud");
    RefinementLoss out;
    out.correspondences.reserve(refined.size());
    for (const auto& p : refined.points) {
        const Neighbor nn = map_index.nearest(p);
        out.loss += (p - map_index.point(nn.index)).squaredNorm();
        out.correspondences.push_back(nn.index);
    }
    return out;
}

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 200;
    int minibatch = 256;
    std::uint64_t seed = 1;
    std::string optimizer = "adam";  // "adam" or "sgd"
    double grad_clip = 10.0;         // global gradient norm; <= 0 disables
    double offset_clamp = kDefaultOffsetClamp;
    double reject_radius = kDefaultRejectRadius;
    int points_per_sample = 1024;  // points drawn from each sample per epoch; <= 0 uses all

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("learning rate must be finite and non-negative");
        if (epochs < 1) throw ConfigError("epochs must be at least 1");
        if (minibatch < 1) throw ConfigError("minibatch must be at least 1");
        if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be 'adam' or 'sgd'");
        if (!(offset_clamp > 0.0)) throw ConfigError("offset clamp must be positive");
        if (!(reject_radius > 0.0)) throw ConfigError("reject radius must be positive");
    }
};

struct TrainingSample {
    PointCloud cloud;  // preliminary pseudo-LiDAR
    LaserScan2D scan;
    ConfidenceGrid grid;
    LocalMap map;
};

struct TrainResult {
    RefinementModel model;
    std::vector<double> loss_history;  // mean squared correspondence distance per epoch, m^2
};

namespace detail {

struct PreparedSample {
    const TrainingSample* sample;
    FeatureSet features;
    KdIndex3 map_index;
};

class Optimizer {
public:
    Optimizer(const RefinementModel& m, const TrainConfig& cfg)
        : sgd_(cfg.optimizer == "sgd"), lr_(cfg.learning_rate), adam_xy_(m.xy, cfg.learning_rate),
          adam_z_(m.z, cfg.learning_rate) {}

    void step(RefinementModel& m, const MlpGradients& gxy, const MlpGradients& gz) {
        if (sgd_) {
            sgd(m.xy, gxy);
            sgd(m.z, gz);
        } else {
            adam_xy_.step(m.xy, gxy);
            adam_z_.step(m.z, gz);
        }
    }

private:
    void sgd(Mlp& net, const MlpGradients& g) const {
        if (lr_ == 0.0) return;
        for (std::size_t l = 0; l < net.layers(); ++l) {
            net.weights[l] -= lr_ * g.d_weights[l];
            net.biases[l] -= lr_ * g.d_biases[l];
        }
    }

    bool sgd_;
    double lr_;
    Adam adam_xy_, adam_z_;
};

}  // namespace detail

/// Fits both heads to the local maps by alternating nearest-neighbour correspondence
/// search (held fixed within a step) with a gradient step on the mean squared residual.
inline TrainResult train_refinement(RefinementModel model, std::span<const TrainingSample> samples,
                                    const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (samples.empty()) throw DataError("training needs at least one sample");

    std::vector<detail::PreparedSample> prepared;
    prepared.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.map.cloud.empty()) throw DataError("training sample has an empty local map");
        prepared.push_back({&s, extract_features(s.cloud, s.scan, s.grid, model.k, cfg.reject_radius),
                            KdIndex3(s.map.cloud)});
    }

    std::mt19937_64 rng(cfg.seed);
    detail::Optimizer opt(model, cfg);
    TrainResult result;
    const Eigen::Index in = 2 * model.k;

    struct Ref {
        std::uint32_t sample;
        std::uint32_t point;
    };
    std::vector<Ref> pool;
    std::vector<std::uint32_t> order;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        pool.clear();
        for (std::uint32_t s = 0; s < prepared.size(); ++s) {
            const auto n = static_cast<std::uint32_t>(prepared[s].sample->cloud.size());
            order.resize(n);
            std::iota(order.begin(), order.end(), 0u);
            std::uint32_t take = n;
            if (cfg.points_per_sample > 0 && static_cast<std::uint32_t>(cfg.points_per_sample) < n) {
                take = static_cast<std::uint32_t>(cfg.points_per_sample);
                for (std::uint32_t i = 0; i < take; ++i) {
                    std::uniform_int_distribution<std::uint32_t> pick(i, n - 1);
                    std::swap(order[i], order[pick(rng)]);
                }
            }
            for (std::uint32_t i = 0; i < take; ++i) pool.push_back({s, order[i]});
        }
        for (std::size_t i = pool.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(pool[i - 1], pool[pick(rng)]);
        }

        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < pool.size(); begin += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t end = std::min(pool.size(), begin + static_cast<std::size_t>(cfg.minibatch));
            const auto b = static_cast<Eigen::Index>(end - begin);
            Matrix fxy(in, b), fz(in, b);
            for (Eigen::Index j = 0; j < b; ++j) {
                const Ref r = pool[begin + static_cast<std::size_t>(j)];
                fxy.col(j) = prepared[r.sample].features.fxy.col(r.point);
                fz.col(j) = prepared[r.sample].features.fz.col(r.point);
            }
            MlpCache cxy, cz;
            const Matrix oxy = mlp_forward_batch(model.xy, fxy, &cxy);
            const Matrix oz = mlp_forward_batch(model.z, fz, &cz);

            Matrix dxy = Matrix::Zero(2, b), dz = Matrix::Zero(1, b);
            double batch_loss = 0.0;
            for (Eigen::Index j = 0; j < b; ++j) {
                const Ref r = pool[begin + static_cast<std::size_t>(j)];
                const auto& ps = prepared[r.sample];
                const Vec3 off(std::clamp(oxy(0, j), -cfg.offset_clamp, cfg.offset_clamp),
                               std::clamp(oxy(1, j), -cfg.offset_clamp, cfg.offset_clamp),
                               std::clamp(oz(0, j), -cfg.offset_clamp, cfg.offset_clamp));
                const Vec3 refined = ps.sample->cloud.points[r.point] + off;
                const Vec3 residual = refined - ps.map_index.point(ps.map_index.nearest(refined).index);
                batch_loss += residual.squaredNorm();
                const double scale = 2.0 / static_cast<double>(b);
                if (std::abs(oxy(0, j)) < cfg.offset_clamp) dxy(0, j) = scale * residual.x();
                if (std::abs(oxy(1, j)) < cfg.offset_clamp) dxy(1, j) = scale * residual.y();
                if (std::abs(oz(0, j)) < cfg.offset_clamp) dz(0, j) = scale * residual.z();
            }
            if (!std::isfinite(batch_loss))
                throw TrainingError("non-finite refinement loss at epoch " + std::to_string(epoch + 1));
            epoch_loss += batch_loss;

            MlpGradients gxy = mlp_backward_batch(model.xy, cxy, dxy);
            MlpGradients gz = mlp_backward_batch(model.z, cz, dz);
            if (cfg.grad_clip > 0.0) {
                const double norm = std::sqrt(gxy.squared_norm() + gz.squared_norm());
                if (norm > cfg.grad_clip) {
                    gxy.scale(cfg.grad_clip / norm);
                    gz.scale(cfg.grad_clip / norm);
                }
            }
            opt.step(model, gxy, gz);
        }
        const double mean_loss = epoch_loss / static_cast<double>(pool.size());
        if (!std::isfinite(mean_loss))
            throw TrainingError("non-finite refinement loss at epoch " + std::to_string(epoch + 1));
        result.loss_history.push_back(mean_loss);
    }
    result.model = std::move(model);
    return result;
}

}  // namespace fusionmap
