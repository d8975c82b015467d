#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fusionmap/config.hpp"
#include "fusionmap/confidence_grid.hpp"
#include "fusionmap/error.hpp"
#include "fusionmap/geometry.hpp"
#include "fusionmap/io.hpp"
#include "fusionmap/laser_mask.hpp"
#include "fusionmap/metrics.hpp"
#include "fusionmap/refinement.hpp"
#include "fusionmap/synth.hpp"

namespace fusionmap {

// Per-frame dataset layout.
inline constexpr const char* kDepthFile = "depth.pfm";
inline constexpr const char* kCloudFile = "cloud.ply";
inline constexpr const char* kScanFile = "scan.csv";
inline constexpr const char* kPosesFile = "poses.txt";
inline constexpr const char* kMapFile = "map.ply";
inline constexpr const char* kCorruptedFile = "corrupted.ply";
inline constexpr const char* kCameraFile = "camera.txt";
inline constexpr const char* kMaskFile = "mask.pfm";
inline constexpr const char* kRefinedFile = "refined.ply";
inline constexpr const char* kModelFile = "model.plrefine";
inline constexpr const char* kLossFile = "loss_history.csv";
inline constexpr const char* kMetricsFile = "metrics.txt";
inline constexpr const char* kReportFile = "report.txt";

inline std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04zu", i);
    return buf;
}

/// Sorted `frame_*` subdirectories of a dataset.
inline std::vector<fs::path> list_frames(const fs::path& dataset) {
    if (!fs::is_directory(dataset)) throw DataError("dataset directory " + dataset.string() + " does not exist");
    std::vector<fs::path> frames;
    for (const auto& e : fs::directory_iterator(dataset))
        if (e.is_directory() && e.path().filename().string().rfind("frame_", 0) == 0) frames.push_back(e.path());
    std::sort(frames.begin(), frames.end());
    if (frames.empty()) throw DataError("dataset " + dataset.string() + " contains no frame_* directories");
    return frames;
}

inline void write_sample(const fs::path& dir, const SynthSample& s) {
    fs::create_directories(dir);
    write_pfm(dir / kDepthFile, s.gt_depth);
    write_ply(dir / kCloudFile, s.gt_cloud);
    write_scan(dir / kScanFile, s.scan);
    write_poses(dir / kPosesFile, s.sweep_poses);
    write_ply(dir / kMapFile, s.local_map.cloud);
    write_ply(dir / kCorruptedFile, s.corrupted_cloud);
    write_camera(dir / kCameraFile, s.camera);
}

/// synth: writes one directory per generated frame.
inline void cmd_synth(const RunConfig& cfg, const fs::path& output, std::ostream& log) {
    const auto samples = generate_dataset(cfg.seed, cfg.frames, cfg.corruption, cfg.dataset);
    for (std::size_t i = 0; i < samples.size(); ++i) write_sample(output / frame_name(i), samples[i]);
    log << "synth: wrote " << samples.size() << " frames to " << output.string() << '\n';
}

/// mask: a 3D-mask PFM per frame from its camera and laser scan.
inline void cmd_mask(const RunConfig& cfg, const fs::path& input, const fs::path& output, std::ostream& log) {
    const auto frames = list_frames(input);
    for (const auto& f : frames) {
        const CameraModel cam = read_camera(f / kCameraFile);
        const LaserScan2D scan = read_scan(f / kScanFile);
        write_pfm(output / f.filename() / kMaskFile, build_3d_mask(cam, scan, cfg.below, cfg.above));
    }
    log << "mask: wrote " << frames.size() << " masks to " << output.string() << '\n';
}

inline TrainingSample load_training_sample(const RunConfig& cfg, const fs::path& frame) {
    TrainingSample s;
    s.cloud = read_ply(frame / kCorruptedFile);
    s.scan = read_scan(frame / kScanFile);
    s.grid = build_confidence_grid(s.scan, cfg.sigma, cfg.cell, cfg.padding);
    s.map.cloud = read_ply(frame / kMapFile);
    s.map.center = read_camera(frame / kCameraFile).center();
    s.map.thresh = cfg.dataset.map_thresh;
    if (s.cloud.empty()) throw DataError(frame.string() + ": empty pseudo-LiDAR cloud");
    if (s.map.cloud.empty()) throw DataError(frame.string() + ": empty local map");
    return s;
}

inline RefinementModel initial_model(const RunConfig& cfg) {
    return make_refinement_model(cfg.k, cfg.hidden, cfg.model_seed, cfg.init_scale, cfg.activation);
}

/// refine-train: fits the refinement model on every frame of the dataset.
inline TrainResult cmd_refine_train(const RunConfig& cfg, const fs::path& input, const fs::path& output,
                                    std::ostream& log) {
    std::vector<TrainingSample> samples;
    for (const auto& f : list_frames(input)) samples.push_back(load_training_sample(cfg, f));
    TrainResult r = train_refinement(initial_model(cfg), samples, cfg.train);
    save_model(output / kModelFile, r.model);
    auto out = detail::open_out(output / kLossFile);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < r.loss_history.size(); ++e) out << e + 1 << ',' << format_double(r.loss_history[e]) << '\n';
    log << "refine-train: " << samples.size() << " frames, " << r.loss_history.size() << " epochs, loss "
        << r.loss_history.front() << " -> " << r.loss_history.back() << '\n';
    return r;
}

/// refine-apply: writes refined.ply for every frame.
inline void cmd_refine_apply(const RunConfig& cfg, const fs::path& input, const fs::path& output, std::ostream& log) {
    if (cfg.model.empty()) throw ConfigError("refine-apply needs a model (--model or config key 'model')");
    const RefinementModel model = load_model(cfg.model);
    const auto frames = list_frames(input);
    for (const auto& f : frames) {
        const PointCloud cloud = read_ply(f / kCorruptedFile);
        const LaserScan2D scan = read_scan(f / kScanFile);
        const ConfidenceGrid grid = build_confidence_grid(scan, cfg.sigma, cfg.cell, cfg.padding);
        write_ply(output / f.filename() / kRefinedFile,
                  apply_refinement(model, cloud, scan, grid, cfg.train.offset_clamp, cfg.train.reject_radius));
    }
    log << "refine-apply: refined " << frames.size() << " frames into " << output.string() << '\n';
}

struct EvalRow {
    std::string frame;
    std::string method;
    std::optional<DepthMetrics> depth;  // empty for 3D-only outputs
    CloudMetrics cloud;
};

inline CloudMetrics cloud_metrics(const RunConfig& cfg, const PointCloud& pred, const PointCloud& map,
                                  const KdIndex3& map_index) {
    CloudMetrics m;
    m.emd = emd_exact(pred, map, cfg.emd_cap, cfg.emd_seed);
    const FitnessScore f = efs(pred, map_index, cfg.efs_max_dist);
    m.efs = f.mean;
    m.efs_sum = f.sum;
    m.n_used = f.n_used;
    return m;
}

inline std::string metrics_record(const EvalRow& r) {
    std::ostringstream o;
    o << "frame=" << r.frame << " method=" << r.method;
    auto field = [&](const char* key, double v) { o << ' ' << key << '=' << format_double(v); };
    if (r.depth) {
        field("abs_rel", r.depth->abs_rel);
        field("sq_rel", r.depth->sq_rel);
        field("rmse", r.depth->rmse);
        field("delta_1", r.depth->delta_1);
        field("delta_2", r.depth->delta_2);
        field("delta_3", r.depth->delta_3);
    } else {
        o << " abs_rel=NA sq_rel=NA rmse=NA delta_1=NA delta_2=NA delta_3=NA";
    }
    field("emd", r.cloud.emd);
    field("efs", r.cloud.efs);
    field("efs_sum", r.cloud.efs_sum);
    o << " n_used=" << r.cloud.n_used;
    return o.str();
}

/// Table with one row per method, averaged over frames, in the usual column order.
inline std::string format_report(const std::vector<EvalRow>& rows) {
    std::vector<std::string> methods;
    for (const auto& r : rows)
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    std::ostringstream o;
    o << std::left << std::setw(12) << "method";
    for (const char* h : {"AbsRel", "SqRel", "RMSE", "d<1.25", "d<1.25^2", "d<1.25^3", "EMD", "EFS"})
        o << std::right << std::setw(10) << h;
    o << '\n';
    o << std::fixed << std::setprecision(4);
    for (const auto& m : methods) {
        DepthMetrics dsum;
        CloudMetrics csum;
        std::size_t n = 0;
        bool has_depth = true;
        for (const auto& r : rows) {
            if (r.method != m) continue;
            ++n;
            has_depth = has_depth && r.depth.has_value();
            if (r.depth) {
                dsum.abs_rel += r.depth->abs_rel;
                dsum.sq_rel += r.depth->sq_rel;
                dsum.rmse += r.depth->rmse;
                dsum.delta_1 += r.depth->delta_1;
                dsum.delta_2 += r.depth->delta_2;
                dsum.delta_3 += r.depth->delta_3;
            }
            csum.emd += r.cloud.emd;
            csum.efs += r.cloud.efs;
        }
        const double inv = 1.0 / static_cast<double>(n);
        o << std::left << std::setw(12) << m << std::right;
        if (has_depth) {
            for (double v : {dsum.abs_rel, dsum.sq_rel, dsum.rmse, dsum.delta_1, dsum.delta_2, dsum.delta_3})
                o << std::setw(10) << v * inv;
        } else {
            for (int i = 0; i < 6; ++i) o << std::setw(10) << "NA";
        }
        o << std::setw(10) << csum.emd * inv << std::setw(10) << csum.efs * inv << '\n';
    }
    return o.str();
}

/// eval: corrupted (and, when available, refined) clouds against each frame's local map.
inline std::vector<EvalRow> cmd_eval(const RunConfig& cfg, const fs::path& input, const fs::path& output,
                                     std::ostream& log) {
    std::vector<EvalRow> rows;
    for (const auto& f : list_frames(input)) {
        const std::string name = f.filename().string();
        const PointCloud map = read_ply(f / kMapFile);
        if (map.empty()) throw DataError(f.string() + ": empty local map");
        const KdIndex3 map_index(map);
        const CameraModel cam = read_camera(f / kCameraFile);
        const DepthImage gt = read_depth_pfm(f / kDepthFile);

        const PointCloud corrupted = read_ply(f / kCorruptedFile);
        rows.push_back({name, "corrupted", depth_metrics(rasterize_cloud(cam, corrupted), gt),
                        cloud_metrics(cfg, corrupted, map, map_index)});
        if (!cfg.refined.empty()) {
            const PointCloud refined = read_ply(fs::path(cfg.refined) / name / kRefinedFile);
            rows.push_back({name, "refined", std::nullopt, cloud_metrics(cfg, refined, map, map_index)});
        }
    }
    auto records = detail::open_out(output / kMetricsFile);
    for (const auto& r : rows) records << metrics_record(r) << '\n';
    const std::string report = format_report(rows);
    auto rep = detail::open_out(output / kReportFile);
    rep << report;
    log << report;
    return rows;
}

}  // namespace fusionmap
