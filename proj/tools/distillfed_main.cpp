// distillfed: run federated-learning simulations from a JSON experiment
// config. Subcommands pick the cell plan; every cell writes its own report so
// interrupted runs can resume.
//
// Exit codes: 0 all cells done, 1 bad arguments or config, 3 some cells
// failed (their errors are recorded next to the reports).

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distillfed/experiment.hpp"

namespace {

using distillfed::Cell;
using distillfed::ExperimentConfig;

using Planner = std::function<std::vector<Cell>(const ExperimentConfig&)>;

struct Subcommand {
    CLI::App* cmd = nullptr;
    Planner plan;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic federated-learning simulator with distilled-data uploads"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int jobs = 1;
    bool resume = false;

    std::vector<Subcommand> subs;
    auto add = [&](const char* name, const char* desc, Planner plan) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        cmd->add_option("--config", config_path, "experiment config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory (overrides the config)");
        cmd->add_option("--jobs", jobs, "cells to run in parallel")->check(CLI::PositiveNumber);
        cmd->add_flag("--resume", resume, "reuse cells that already have a readable report");
        subs.push_back({cmd, std::move(plan)});
    };
    add("run", "run the configured methods over all seeds", distillfed::plan_run);
    add("sweep-clients", "vary the client count under a fixed distilled budget",
        distillfed::plan_sweep_clients);
    add("sweep-imgcls", "vary distilled points per class", distillfed::plan_sweep_imgcls);
    add("sweep-ck", "vary classes per client under pathological partitions",
        distillfed::plan_sweep_ck);
    add("sweep-stragglers", "vary the per-round client drop rate",
        distillfed::plan_sweep_stragglers);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // CLI11 assigns its own exit codes per error kind; collapse every
        // argument problem to 1 so callers see the documented contract.
        // app.exit() still prints the message (and keeps --help at 0).
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        ExperimentConfig cfg = distillfed::parse_experiment_config(config_path);
        if (distillfed::apply_env_seed(cfg))
            std::fprintf(stderr, "distillfed: DISTILLFED_SEED=%llu overrides the seed list\n",
                         static_cast<unsigned long long>(cfg.seeds.front()));
        std::vector<Cell> cells;
        for (const auto& sub : subs)
            if (sub.cmd->parsed()) cells = sub.plan(cfg);
        const std::string out = out_dir.empty() ? cfg.output_dir : out_dir;

        std::vector<distillfed::CellResult> results;
        const int failures =
            distillfed::run_experiment_cells(cfg, cells, out, jobs, resume, &results);
        int resumed = 0;
        for (const auto& res : results) resumed += res.resumed ? 1 : 0;
        std::printf("distillfed: %zu cells -> %s (%d resumed, %d failed)\n", cells.size(),
                    out.c_str(), resumed, failures);
        return failures > 0 ? 3 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "distillfed: %s\n", e.what());
        return 1;
    }
}
