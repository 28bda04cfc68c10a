#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "qhr/data.hpp"
#include "qhr/experiments.hpp"
#include "qhr/io.hpp"

namespace {

struct CommonArgs {
    std::string plan_path;
    std::string out_dir;
    std::string drug;
    std::string split_plan;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool plan_required = true) {
    auto* plan = cmd->add_option("--plan", args.plan_path, "experiment plan JSON file");
    if (plan_required) plan->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides the plan)");
    cmd->add_option("--drug", args.drug, "drug name (overrides the plan)");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&args](std::uint64_t v) { args.seed = v; },
        "base seed (overrides the plan)");
    cmd->add_option_function<int>(
        "--workers", [&args](int v) { args.workers = v; },
        "concurrent runs (overrides the plan)");
    cmd->add_option("--split", args.split_plan,
                    "saved split plan JSON to replay the exact same split");
}

qhr::ExperimentPlan load_plan(const CommonArgs& args) {
    qhr::ExperimentPlan plan = qhr::ExperimentPlan::from_json_file(args.plan_path);
    // Flags take precedence over plan file values.
    if (!args.out_dir.empty()) plan.out_dir = args.out_dir;
    if (!args.drug.empty()) plan.drug = args.drug;
    if (args.seed) plan.base_seed = *args.seed;
    if (args.workers) plan.workers = *args.workers;
    if (!args.split_plan.empty()) plan.split_plan_path = args.split_plan;
    return plan;
}

int fail(const std::string& op, const std::exception& e) {
    nlohmann::json j;
    j["status"] = "failed";
    j["operation"] = op;
    j["error"] = e.what();
    std::cerr << j.dump() << "\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid quantum-classical drug-response experiments"};
    app.require_subcommand(1);

    CommonArgs grid_args;
    auto* grid_cmd = app.add_subcommand(
        "grid-search", "cross-validated hyperparameter grid search (resumable)");
    add_common(grid_cmd, grid_args);

    CommonArgs cmp_args;
    auto* cmp_cmd = app.add_subcommand(
        "compare", "train every configured method and evaluate on the held-out test set");
    add_common(cmp_cmd, cmp_args);
    int cmp_repeats = 0;
    cmp_cmd->add_option("--repeats", cmp_repeats,
                        "test-protocol repetitions per method (default: plan value)");

    CommonArgs sa_args;
    auto* sa_cmd = app.add_subcommand("sweep-a", "test AUC over the list of a values (r fixed)");
    add_common(sa_cmd, sa_args);

    CommonArgs sr_args;
    auto* sr_cmd = app.add_subcommand("sweep-r", "test AUC over the list of r values (a fixed)");
    add_common(sr_cmd, sr_args);

    CommonArgs dist_args;
    std::string dist_checkpoint, dist_out = "distribution.csv";
    int dist_samples = 100;
    auto* dist_cmd = app.add_subcommand(
        "emit-dist", "pre/post-normalization embedding values from a trained checkpoint");
    add_common(dist_cmd, dist_args);
    dist_cmd->add_option("--checkpoint", dist_checkpoint, "model checkpoint")->required();
    dist_cmd->add_option("--samples", dist_samples, "training samples to export");
    dist_cmd->add_option("--csv", dist_out, "output CSV path");

    CommonArgs curves_args;
    std::string curves_out = "curves.csv";
    auto* curves_cmd = app.add_subcommand(
        "emit-curves", "per-epoch mean validation AUC per grid config, with best marker");
    add_common(curves_cmd, curves_args);
    curves_cmd->add_option("--csv", curves_out, "output CSV path");

    CommonArgs one_args;
    std::string one_method;
    auto* one_cmd = app.add_subcommand(
        "train-one", "single early-stopped training run with checkpoint and trace");
    add_common(one_cmd, one_args);
    one_cmd->add_option("--method", one_method,
                        "method name (default: first plan methods entry)");

    std::string synth_out = "synth";
    qhr::SynthSpec synth;
    auto* synth_cmd =
        app.add_subcommand("gen-synth", "write a deterministic linear-teacher dataset");
    synth_cmd->add_option("--out", synth_out, "output directory");
    synth_cmd->add_option("--samples", synth.samples, "sample count");
    synth_cmd->add_option("--genes", synth.genes, "gene count");
    synth_cmd->add_option("--informative", synth.informative, "informative gene count");
    synth_cmd->add_option("--noise", synth.noise, "label noise level");
    synth_cmd->add_option("--seed", synth.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (grid_cmd->parsed()) {
            qhr::run_grid_search(load_plan(grid_args));
        } else if (cmp_cmd->parsed()) {
            qhr::ExperimentPlan plan = load_plan(cmp_args);
            if (cmp_repeats > 0) plan.test_repeats = cmp_repeats;
            qhr::run_comparison(plan);
        } else if (sa_cmd->parsed()) {
            qhr::run_ar_sweep(load_plan(sa_args), 'a');
        } else if (sr_cmd->parsed()) {
            qhr::run_ar_sweep(load_plan(sr_args), 'r');
        } else if (dist_cmd->parsed()) {
            qhr::emit_distribution(load_plan(dist_args), dist_checkpoint, dist_samples,
                                   dist_out);
        } else if (curves_cmd->parsed()) {
            qhr::emit_curves(load_plan(curves_args), curves_out);
        } else if (one_cmd->parsed()) {
            qhr::ExperimentPlan plan = load_plan(one_args);
            qhr::MethodSpec spec;
            if (!one_method.empty()) {
                bool found = false;
                for (const auto& m : plan.methods) {
                    if (qhr::to_string(m.method) == one_method) {
                        spec = m;
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    spec.method = qhr::method_from_string(one_method);
                    if (plan.sweep_config) spec.config = *plan.sweep_config;
                }
            } else if (!plan.methods.empty()) {
                spec = plan.methods.front();
            } else {
                throw std::invalid_argument(
                    "configuration error: train-one needs --method or a plan methods list");
            }
            qhr::train_one(plan, spec);
        } else if (synth_cmd->parsed()) {
            qhr::write_dataset_csv(qhr::make_synth_dataset(synth), synth_out);
        }
    } catch (const std::exception& e) {
        return fail(app.get_subcommands().front()->get_name(), e);
    }
    return 0;
}
