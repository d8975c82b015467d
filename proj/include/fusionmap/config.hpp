#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fusionmap/confidence_grid.hpp"
#include "fusionmap/error.hpp"
#include "fusionmap/io.hpp"
#include "fusionmap/laser_mask.hpp"
#include "fusionmap/metrics.hpp"
#include "fusionmap/refinement.hpp"
#include "fusionmap/synth.hpp"

namespace fusionmap {

/// Every tunable of the pipeline. Loaded from `key=value` lines; '#' starts a comment.
struct RunConfig {
    // dataset
    std::uint64_t seed = 1;
    std::size_t frames = 5;
    CorruptionSpec corruption{0.5, 2.0, 0.15, 11};
    DatasetOptions dataset;

    // 3D mask
    double below = kDefaultBelowOffset;
    double above = kDefaultAboveOffset;

    // confidence grid
    double sigma = kDefaultKernelSigma;
    double cell = kDefaultGridCell;
    double padding = 3.0 * kDefaultKernelSigma;

    // refinement model and training
    int k = kDefaultNeighbors;
    std::vector<int> hidden{64, 64};
    double init_scale = 0.1;
    Activation activation = Activation::leaky_relu;
    std::uint64_t model_seed = 1;
    // The synthetic scenes are indoor-sized, so the laser reject radius shrinks with the map radius.
    TrainConfig train{.reject_radius = kDefaultRejectRadius * kIndoorMapRadius / kOutdoorMapRadius};

    // metrics
    std::size_t emd_cap = kDefaultEmdCap;
    std::uint64_t emd_seed = kDefaultEmdSeed;
    double efs_max_dist = kDefaultEfsMaxDist;

    // paths
    std::string model;    // refine-apply: model file
    std::string refined;  // eval: directory holding refined.ply per frame

    void validate() const {
        if (frames < 1) throw ConfigError("frames must be at least 1");
        corruption.validate();
        if (!(below >= 0.0) || !(above >= 0.0)) throw ConfigError("mask offsets must be non-negative");
        if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
        if (!(cell > 0.0)) throw ConfigError("cell must be positive");
        if (!(padding >= 0.0)) throw ConfigError("padding must be non-negative");
        if (k < 1) throw ConfigError("k must be at least 1");
        for (int h : hidden)
            if (h < 1) throw ConfigError("hidden layer sizes must be positive");
        if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be non-negative");
        train.validate();
        if (emd_cap < 1) throw ConfigError("emd_cap must be at least 1");
        if (!(efs_max_dist > 0.0)) throw ConfigError("efs_max_dist must be positive");
        if (!(dataset.map_thresh > 0.0)) throw ConfigError("thresh must be positive");
        if (!(dataset.mount_height > 0.0)) throw ConfigError("mount_height must be positive");
        if (dataset.beams < 2) throw ConfigError("beams must be at least 2");
        if (!(dataset.step >= 0.0)) throw ConfigError("step must be non-negative");
        const auto& in = dataset.intrinsics;
        if (!(in.fx > 0.0) || !(in.fy > 0.0) || in.width < 1 || in.height < 1 || !(in.cx >= 0.0 && in.cx < in.width) ||
            !(in.cy >= 0.0 && in.cy < in.height))
            throw ConfigError("invalid camera intrinsics");
    }
};

namespace detail {

inline double config_number(const std::string& key, const std::string& value) {
    double v = 0;
    if (!parse_double(value, v)) throw ConfigError("config key '" + key + "' needs a number, got '" + value + "'");
    return v;
}

inline long long config_integer(const std::string& key, const std::string& value) {
    const double v = config_number(key, value);
    if (v != std::floor(v) || std::abs(v) > 9.0e15)
        throw ConfigError("config key '" + key + "' needs an integer, got '" + value + "'");
    return static_cast<long long>(v);
}

inline std::uint64_t config_seed(const std::string& key, const std::string& value) {
    const long long v = config_integer(key, value);
    if (v < 0) throw ConfigError("config key '" + key + "' needs a non-negative integer");
    return static_cast<std::uint64_t>(v);
}

}  // namespace detail

/// Applies one setting; unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    using Setter = std::function<void(const std::string&)>;
    auto num = [&](double& dst) -> Setter {
        return [p = &dst, key](const std::string& v) { *p = config_number(key, v); };
    };
    auto integer = [&](int& dst) -> Setter {
        return [p = &dst, key](const std::string& v) { *p = static_cast<int>(config_integer(key, v)); };
    };
    auto seed = [&](std::uint64_t& dst) -> Setter {
        return [p = &dst, key](const std::string& v) { *p = config_seed(key, v); };
    };
    auto count = [&](std::size_t& dst) -> Setter {
        return [p = &dst, key](const std::string& v) {
            const long long n = config_integer(key, v);
            if (n < 0) throw ConfigError("config key '" + key + "' must be non-negative");
            *p = static_cast<std::size_t>(n);
        };
    };
    auto text = [&](std::string& dst) -> Setter { return [p = &dst](const std::string& v) { *p = v; }; };

    const std::map<std::string, Setter> setters{
        {"seed", seed(c.seed)},
        {"frames", count(c.frames)},
        {"tail_prob", num(c.corruption.tail_prob)},
        {"tail_length", num(c.corruption.tail_length)},
        {"misalign_sigma", num(c.corruption.misalign_sigma)},
        {"corruption_seed", seed(c.corruption.seed)},
        {"width", integer(c.dataset.intrinsics.width)},
        {"height", integer(c.dataset.intrinsics.height)},
        {"fx", num(c.dataset.intrinsics.fx)},
        {"fy", num(c.dataset.intrinsics.fy)},
        {"cx", num(c.dataset.intrinsics.cx)},
        {"cy", num(c.dataset.intrinsics.cy)},
        {"camera_height", num(c.dataset.camera_height)},
        {"camera_pitch", num(c.dataset.camera_pitch)},
        {"mount_height", num(c.dataset.mount_height)},
        {"beams", integer(c.dataset.beams)},
        {"span_deg", [&](const std::string& v) { c.dataset.span = config_number(key, v) * std::numbers::pi / 180.0; }},
        {"thresh", num(c.dataset.map_thresh)},
        {"step", num(c.dataset.step)},
        {"below", num(c.below)},
        {"above", num(c.above)},
        {"sigma", num(c.sigma)},
        {"cell", num(c.cell)},
        {"padding", num(c.padding)},
        {"k", integer(c.k)},
        {"hidden",
         [&](const std::string& v) {
             c.hidden.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) c.hidden.push_back(static_cast<int>(config_integer(key, item)));
         }},
        {"init_scale", num(c.init_scale)},
        {"activation",
         [&](const std::string& v) {
             try {
                 c.activation = activation_from_string(v);
             } catch (const DataError& e) {
                 throw ConfigError(e.what());
             }
         }},
        {"model_seed", seed(c.model_seed)},
        {"lr", num(c.train.learning_rate)},
        {"epochs", integer(c.train.epochs)},
        {"minibatch", integer(c.train.minibatch)},
        {"train_seed", seed(c.train.seed)},
        {"optimizer", text(c.train.optimizer)},
        {"grad_clip", num(c.train.grad_clip)},
        {"offset_clamp", num(c.train.offset_clamp)},
        {"reject_radius", num(c.train.reject_radius)},
        {"points_per_sample", integer(c.train.points_per_sample)},
        {"emd_cap", count(c.emd_cap)},
        {"emd_seed", seed(c.emd_seed)},
        {"efs_max_dist", num(c.efs_max_dist)},
        {"model", text(c.model)},
        {"refined", text(c.refined)},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(value);
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
    RunConfig c;
    bool padding_set = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            set_config_value(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
        padding_set = padding_set || key == "padding";
    }
    if (!padding_set) c.padding = 3.0 * c.sigma;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.string());
}

}  // namespace fusionmap
