#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "fusionmap/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::string input;
    std::string output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> frames;
    std::string model;
    std::string refined;
};

fusionmap::RunConfig resolve(const CommonFlags& f) {
    fusionmap::RunConfig cfg = f.config.empty() ? fusionmap::RunConfig{} : fusionmap::load_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.frames) cfg.frames = *f.frames;
    if (!f.model.empty()) cfg.model = f.model;
    if (!f.refined.empty()) cfg.refined = f.refined;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pseudo-LiDAR refinement with a 2D laser scan and a LiDAR local map"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto add_common = [&](CLI::App* sub, bool needs_input) {
        sub->add_option("--config", flags.config, "key=value configuration file")->check(CLI::ExistingFile);
        if (needs_input) sub->add_option("--input", flags.input, "dataset directory")->required();
        sub->add_option("--output", flags.output, "output directory")->required();
        sub->add_option("--seed", flags.seed, "dataset seed");
        sub->add_option("--frames", flags.frames, "number of frames");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, false);
    auto* mask = app.add_subcommand("mask", "build 3D masks from laser scans");
    add_common(mask, true);
    auto* train = app.add_subcommand("refine-train", "train the refinement model");
    add_common(train, true);
    auto* apply = app.add_subcommand("refine-apply", "refine pseudo-LiDAR clouds with a trained model");
    add_common(apply, true);
    apply->add_option("--model", flags.model, "model file")->check(CLI::ExistingFile);
    auto* eval = app.add_subcommand("eval", "compare clouds against local maps");
    add_common(eval, true);
    eval->add_option("--refined", flags.refined, "directory with refined clouds per frame");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const fusionmap::RunConfig cfg = resolve(flags);
        const std::filesystem::path out = flags.output;
        if (synth->parsed()) fusionmap::cmd_synth(cfg, out, std::cout);
        if (mask->parsed()) fusionmap::cmd_mask(cfg, flags.input, out, std::cout);
        if (train->parsed()) fusionmap::cmd_refine_train(cfg, flags.input, out, std::cout);
        if (apply->parsed()) fusionmap::cmd_refine_apply(cfg, flags.input, out, std::cout);
        if (eval->parsed()) fusionmap::cmd_eval(cfg, flags.input, out, std::cout);
    } catch (const fusionmap::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
