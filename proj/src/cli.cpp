#include "skillgraft/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>

#include "skillgraft/recipes.hpp"

namespace sg {

namespace {

int exit_code(Error::Kind kind) {
    switch (kind) {
        case Error::Kind::config: return 2;
        case Error::Kind::data: return 3;
        case Error::Kind::numerical: return 4;
        case Error::Kind::io: return 5;
    }
    return 1;
}

std::string recipe_list() {
    std::string s;
    for (const std::string& name : recipe_names()) {
        if (!s.empty()) s += ", ";
        s += name;
    }
    return s;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"skillgraft: sparse-region grafting experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run one recipe into an output directory");
    std::string recipe, config_path, out_dir;
    uint64_t seed = 0;
    bool quiet = false;
    run->add_option("--recipe", recipe, "recipe to run: " + recipe_list())->required();
    run->add_option("--config", config_path,
                    "experiment config JSON; omitted = built-in reduced defaults");
    auto* seed_opt = run->add_option("--seed", seed, "override: run this single seed");
    auto* out_opt = run->add_option("--out", out_dir, "override: output directory");
    run->add_flag("--quiet", quiet, "suppress progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg =
            config_path.empty() ? default_config() : config_from_json(read_json(config_path));
        if (*seed_opt) cfg.seeds = {seed};
        if (*out_opt) cfg.out_dir = out_dir;
        cfg.recipe = recipe;
        run_recipe(recipe, cfg, quiet);
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.kind);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"skillgraft"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace sg
