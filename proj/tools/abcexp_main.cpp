#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "abcexp/config.hpp"
#include "abcexp/sweep.hpp"

int main(int argc, char** argv) {
    CLI::App app{"exact error/erasure exponents for the asymmetric broadcast "
                 "channel: solver, grid oracle and codebook simulator"};
    std::string config_path;
    std::string mode_override;
    std::string out_override;
    int workers = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;

    app.add_option("--config", config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--mode", mode_override,
                   "override mode: exponents|oracle|simulate|reproduce_figures");
    app.add_option("--out", out_override, "override output directory");
    app.add_option("--workers", workers, "worker pool size");
    auto* seed_opt = app.add_option("--seed", seed, "override RNG seed");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;

    try {
        abcexp::RunConfig cfg = abcexp::parse_config_file(config_path);
        if (!mode_override.empty()) {
            if (mode_override == "exponents")
                cfg.mode = abcexp::RunMode::exponents;
            else if (mode_override == "oracle")
                cfg.mode = abcexp::RunMode::oracle;
            else if (mode_override == "simulate")
                cfg.mode = abcexp::RunMode::simulate;
            else if (mode_override == "reproduce_figures")
                cfg.mode = abcexp::RunMode::reproduce_figures;
            else {
                std::fprintf(stderr, "unknown --mode '%s'\n",
                             mode_override.c_str());
                return 2;
            }
        }
        if (!out_override.empty()) cfg.out = out_override;
        if (workers >= 0) cfg.workers = workers;
        if (seed_set) cfg.seed = seed;
        cfg.validate();

        const auto result = abcexp::run(cfg);
        for (const auto& f : result.files)
            std::printf("wrote %s\n", f.c_str());
        return result.exit_code;
    } catch (const abcexp::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
