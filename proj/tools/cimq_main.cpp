// cimq: mixed-precision quantization pipeline for compute-in-memory crossbars.
// Subcommands map 1:1 to pipeline stages; `pipeline` runs them all in order.
// Exit codes: 0 ok, 2 config/load error, 4 numeric failure, 3 any other stage
// failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cimq/pipeline.hpp"

namespace {

struct CliOptions {
    std::string config;
    std::string out;
    std::optional<uint64_t> seed;
    std::vector<std::string> stages;
    std::vector<std::string> hw_overrides;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config, "pipeline config JSON")->required();
    cmd->add_option("--out", opt.out, "output directory (overrides the config's out_dir)");
    cmd->add_option("--seed", opt.seed, "override the sensitivity probe seed");
    cmd->add_option("--hw-override", opt.hw_overrides,
                    "hardware field override, key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed-precision quantization for compute-in-memory crossbars"};
    app.require_subcommand(1);
    CliOptions opt;

    for (const auto& stage : cimq::kStageOrder) {
        add_common(app.add_subcommand(stage, "run the " + stage + " stage"), opt);
    }
    CLI::App* pipe = app.add_subcommand("pipeline", "run every stage in order");
    add_common(pipe, opt);
    pipe->add_option("--stage", opt.stages,
                     "restrict the pipeline to these stages (repeatable, in pipeline order)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    const std::string sub = app.get_subcommands().front()->get_name();

    cimq::PipelineConfig cfg;
    try {
        std::optional<std::filesystem::path> out_override;
        if (!opt.out.empty()) out_override = opt.out;
        cfg = cimq::load_pipeline_config(opt.config, out_override, opt.seed, opt.hw_overrides);
    } catch (const cimq::Error& e) {
        std::cerr << "cimq: config error: " << e.what() << "\n";
        return 2;
    }

    cimq::StageContext ctx;
    try {
        ctx = cimq::StageContext::load(std::move(cfg));
    } catch (const cimq::Error& e) {
        // inputs must load and validate before any stage runs
        std::cerr << "cimq: input load error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (sub == "pipeline") {
            cimq::run_pipeline(ctx, opt.stages);
        } else {
            cimq::run_stage(ctx, sub);
        }
    } catch (const cimq::NumericError& e) {
        std::cerr << "cimq: stage '" << ctx.current_stage << "' numeric failure: " << e.what()
                  << "\n";
        return 4;
    } catch (const cimq::OverflowError& e) {
        std::cerr << "cimq: stage '" << ctx.current_stage << "' numeric failure: " << e.what()
                  << "\n";
        return 4;
    } catch (const cimq::ConfigError& e) {
        std::cerr << "cimq: stage '" << ctx.current_stage << "' config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "cimq: stage '" << ctx.current_stage << "' failed: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
