// led: pipeline driver for the LED retrieval system. Each offline stage is
// a subcommand reading one JSON config; `pipeline` chains them all.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "led/io.hpp"
#include "led/pipeline.hpp"

namespace {

led::PipelineConfig load_config(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
    std::string text = config_path.empty() ? "{}" : led::read_text_file(config_path);
    for (const std::string& o : overrides) text = led::apply_override(text, o);
    return led::PipelineConfig::from_json_text(text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"led: embedding-based candidate retrieval pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "dotted-path override, e.g. train.learning_rate=0.01");
    app.add_flag("--force", force, "rerun stages even when inputs are unchanged");

    const std::vector<std::string> stages = {"ingest", "split", "pmi",   "rsvd",  "train",
                                             "index",  "eval",  "sweep", "serve", "pipeline"};
    for (const std::string& name : stages) {
        app.add_subcommand(name, "run the '" + name + "' stage");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        led::PipelineConfig cfg = load_config(config_path, overrides);
        led::StageOptions opts;
        opts.force = force;
        for (const std::string& name : stages) {
            if (app.get_subcommand(name)->parsed()) {
                return led::run_stage(led::parse_stage(name), cfg, opts);
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "{\"level\":\"error\",\"msg\":\"%s\"}\n", e.what());
        return 1;
    }
    return 0;
}
