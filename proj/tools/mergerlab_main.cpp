// Command line front end: each subcommand runs one stage of the pipeline (or
// the whole table for `report`) off a shared JSON plan.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mergerlab/errors.hpp"
#include "mergerlab/harness.hpp"

using namespace mergerlab;

namespace {

struct CommonOpts {
    std::string config;
    std::string out;
    long long seed = -1;
};

ExperimentPlan load_plan(const CommonOpts& opts) {
    ExperimentPlan plan = plan_from_json_file(opts.config);
    if (!opts.out.empty()) plan.output_dir = opts.out;
    if (opts.seed >= 0) plan.scenario.seed = static_cast<std::uint64_t>(opts.seed);
    return plan;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config, "experiment plan JSON")->required();
    cmd->add_option("--out", opts.out, "output directory (overrides plan)");
    cmd->add_option("--seed", opts.seed, "scenario seed override");
}

int finish(const RunResult& rr) {
    for (const auto& f : rr.failures)
        std::cerr << "stage " << f.stage << " failed: " << f.message << "\n";
    if (!rr.ok) return 1;
    return rr.partial ? 2 : 0;
}

// Trims the plan so only the requested stage (plus its prerequisites) runs.
int run_stage(const CommonOpts& opts, const std::string& stage) {
    ExperimentPlan plan = load_plan(opts);
    if (stage == "generate") {
        plan.toolkit_models.clear();
        plan.vmm_estimators.clear();
        plan.run_merger = false;
        plan.run_passthrough = false;
        plan.inference.enabled = false;
        // generation alone is still a valid run
        Dataset ds = generate(plan.scenario);
        ds = split(std::move(ds), plan.scenario.split_fraction, plan.scenario.seed + 1000003);
        std::filesystem::create_directories(plan.output_dir);
        write_dataset_csv(plan.output_dir + "/dataset.csv", ds);
        write_scenario_text(plan.output_dir + "/scenario.txt", ds.scenario);
        std::cout << "wrote " << ds.markets.size() << " markets ("
                  << ds.observation_count() << " observations) to " << plan.output_dir
                  << "\n";
        return 0;
    }
    if (stage == "fit-vmm") {
        plan.toolkit_models.clear();
        plan.run_merger = false;
        plan.run_passthrough = false;
        plan.inference.enabled = false;
    } else if (stage == "fit-toolkit") {
        plan.vmm_estimators.clear();
        plan.run_merger = false;
        plan.run_passthrough = false;
        plan.inference.enabled = false;
    } else if (stage == "simulate-merger") {
        plan.run_passthrough = false;
        plan.inference.enabled = false;
    } else if (stage == "passthrough") {
        plan.inference.enabled = false;
    } else if (stage == "infer") {
        plan.inference.enabled = true;
        plan.run_passthrough = false;
    } else if (stage == "report") {
        // full pipeline
    }
    return finish(run_table(plan));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flexible merger simulation laboratory"};
    app.require_subcommand(1);

    const std::vector<std::string> stages = {"generate",        "fit-vmm",
                                             "fit-toolkit",     "simulate-merger",
                                             "passthrough",     "infer",
                                             "report"};
    std::vector<std::pair<std::string, CommonOpts>> opts(stages.size());
    for (std::size_t i = 0; i < stages.size(); ++i) {
        opts[i].first = stages[i];
        CLI::App* cmd = app.add_subcommand(stages[i]);
        add_common(cmd, opts[i].second);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (auto& [stage, o] : opts) {
            if (app.get_subcommand(stage)->parsed()) return run_stage(o, stage);
        }
    } catch (const InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
