// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

// vicl <subcommand> [--config PATH] [--seed INT] [--out DIR]
//                   [--mode single|ensemble] [--ablate NAME]... [--set KEY=VALUE]...

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vicl/config.hpp"
#include "vicl/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Visual in-context learning pipeline"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string mode;
    std::vector<std::string> ablations;
    std::vector<std::string> overrides;
    bool print_config = false;

    for (const auto& name : vicl::Pipeline::commands()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + (name == "all" ? " stages" : " stage"));
        sub->add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--mode", mode, "evaluation mode")->check(CLI::IsMember({"single", "ensemble"}));
        sub->add_option("--ablate", ablations, "fusion=mean | reuse=off | residual=off | layers=1");
        sub->add_option("--set", overrides, "KEY=VALUE override, applied last");
        sub->add_flag("--print-config", print_config, "print the resolved configuration and exit");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        vicl::RunConfig cfg;
        if (!config_path.empty()) cfg = vicl::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!mode.empty()) vicl::apply_setting(cfg, "mode", mode);
        for (const auto& a : ablations) cfg.ablation = vicl::parse_ablation(a, cfg.ablation);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw vicl::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
            vicl::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        cfg.finalize();
        if (print_config) {
            std::cout << cfg.to_text();
            return 0;
        }
        vicl::Pipeline pipeline(cfg);
        pipeline.run(command);
    } catch (const vicl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const vicl::PrerequisiteError& e) {
        std::cerr << "prerequisite error: " << e.what() << "\n";
        return 3;
    } catch (const vicl::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
