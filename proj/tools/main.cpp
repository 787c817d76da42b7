#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "adafuse/commands.hpp"

namespace {

// Flags override values from the config file.
struct CliArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> manifest;
};

adafuse::RunConfig resolve_config(const CliArgs& args) {
    adafuse::RunConfig cfg;
    if (!args.config_path.empty()) {
        cfg = adafuse::RunConfig::from_toml_file(args.config_path);
    }
    if (args.seed) cfg.seed = *args.seed;
    if (args.out_dir) cfg.out_dir = *args.out_dir;
    if (args.manifest) cfg.manifest = *args.manifest;
    cfg.validate();
    return cfg;
}

void add_common_options(CLI::App* cmd, CliArgs& args) {
    cmd->add_option("--config", args.config_path, "TOML config file");
    cmd->add_option("--seed", args.seed, "run seed (overrides config)");
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--manifest", args.manifest, "benchmark manifest path (overrides config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adafuse: adaptive multi-source knowledge fusion at desk scale"};
    app.require_subcommand(1);

    CliArgs args;
    std::string resume_path;
    std::string checkpoint_path;
    std::string baseline_path;
    std::string traces_path;
    std::string axis = "all";
    std::string inject_module;

    auto* generate = app.add_subcommand("generate", "generate a planted-expert benchmark");
    add_common_options(generate, args);

    auto* train = app.add_subcommand("train", "train the target model against fused sources");
    add_common_options(train, args);
    train->add_option("--resume", resume_path, "resume from a checkpoint file");

    auto* eval = app.add_subcommand("eval", "compare two checkpoints on the held-out split");
    add_common_options(eval, args);
    eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    eval->add_option("--baseline", baseline_path, "baseline checkpoint")->required();
    eval->add_option("--traces", traces_path, "selection trace JSONL for the histogram");

    auto* ablate = app.add_subcommand("ablate", "sweep one design axis and emit a CSV");
    add_common_options(ablate, args);
    ablate->add_option("--axis", axis,
                       "axis: count, metric, layers, fusion, threshold, feedback, all");

    auto* gradcheck = app.add_subcommand("gradcheck",
                                         "validate backward passes against finite differences");
    add_common_options(gradcheck, args);
    gradcheck->add_option("--inject-error", inject_module, "")->group("");  // test hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : adafuse::kExitConfig;
    }

    try {
        const adafuse::RunConfig cfg = resolve_config(args);
        if (generate->parsed()) {
            adafuse::cmd_generate(cfg);
        } else if (train->parsed()) {
            std::optional<std::filesystem::path> resume;
            if (!resume_path.empty()) resume = resume_path;
            adafuse::cmd_train(cfg, resume);
        } else if (eval->parsed()) {
            std::optional<std::filesystem::path> traces;
            if (!traces_path.empty()) traces = traces_path;
            adafuse::cmd_eval(cfg, checkpoint_path, baseline_path, traces);
        } else if (ablate->parsed()) {
            adafuse::cmd_ablate(cfg, axis);
        } else if (gradcheck->parsed()) {
            if (!adafuse::cmd_gradcheck(cfg, inject_module)) {
                std::cerr << "gradcheck: at least one module exceeded its tolerance\n";
                return adafuse::kExitNumeric;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return adafuse::exit_code_for(e);
    }
    return 0;
}
