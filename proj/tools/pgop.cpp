#include "pgop/experiments.hpp"
#include "pgop/verify.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

pgop::ExperimentConfig load_config(const std::string& config_path, const std::string& preset,
                                   const std::string& out_dir, std::uint64_t seed,
                                   bool seed_given) {
    if (config_path.empty() == preset.empty())
        throw std::invalid_argument("pass exactly one of --config and --preset");
    pgop::ExperimentConfig cfg = config_path.empty()
                                     ? pgop::preset_config(preset)
                                     : pgop::config_from_json(pgop::load_json_file(config_path));
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed_given) cfg.seed = seed;
    return cfg;
}

int cmd_run(const std::string& config_path, const std::string& preset, const std::string& out_dir,
            std::uint64_t seed, bool seed_given) {
    pgop::ExperimentConfig cfg = load_config(config_path, preset, out_dir, seed, seed_given);
    pgop::RunArtifacts art = pgop::run_experiment(cfg);
    std::printf("final_j %s\n", pgop::format_double(art.outcome.result.curve.back().j).c_str());
    std::printf("j_star %s\n", pgop::format_double(art.outcome.j_star).c_str());
    std::printf("curve %s\n", art.curve_path.c_str());
    std::printf("policy %s\n", art.policy_path.c_str());
    std::printf("manifest %s\n", art.manifest_path.c_str());
    return 0;
}

int cmd_landscape(const std::string& out_dir, double gamma, int grid,
                  std::vector<double> anchors) {
    pgop::ExperimentConfig cfg;
    cfg.env.kind = pgop::EnvSpec::Kind::kFourRoom;
    cfg.env.gamma = gamma;
    cfg.output_dir = out_dir;
    if (anchors.empty()) anchors = {0.2, 0.5, 0.8};
    pgop::LandscapeArtifacts art = pgop::run_landscape(cfg, grid, anchors);
    for (const std::string& f : art.files) std::printf("anchor_csv %s\n", f.c_str());
    std::printf("max_bound_excess %s\n", pgop::format_double(art.max_bound_excess).c_str());
    std::printf("bound_check PASS\n");
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, int jobs) {
    pgop::json doc = pgop::load_json_file(config_path);
    pgop::ExperimentConfig base =
        pgop::config_from_json(pgop::detail::need(doc, "base", "sweep"));
    pgop::SweepAxes axes;
    if (doc.contains("axes")) axes = pgop::axes_from_json(doc.at("axes"));
    pgop::json summary = pgop::run_sweep(base, axes, out_dir, jobs);
    std::printf("cells %zu\n", summary.at("cells").size());
    std::printf("summary %s\n",
                (std::filesystem::path(out_dir) / "summary.json").string().c_str());
    return 0;
}

int cmd_verify(const std::string& suite, const std::string& out_dir) {
    std::vector<pgop::CheckResult> results = pgop::run_verification(suite);
    if (results.empty()) {
        std::fprintf(stderr, "no checks match '%s'\n", suite.c_str());
        return 2;
    }
    bool all_pass = true;
    for (const pgop::CheckResult& r : results) {
        std::printf("[%s] %-36s measured %-13.6g tol %-9.3g %7.0f ms  %s\n",
                    r.pass ? "PASS" : "FAIL", r.name.c_str(), r.measured, r.tolerance,
                    r.wallclock_ms, r.detail.c_str());
        all_pass &= r.pass;
    }
    std::printf("%s %zu/%zu checks passed\n", all_pass ? "OK" : "FAILED",
                static_cast<std::size_t>(std::count_if(results.begin(), results.end(),
                                                       [](const auto& r) { return r.pass; })),
                results.size());
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        pgop::json report = pgop::json::array();
        for (const pgop::CheckResult& r : results) report.push_back(pgop::to_json(r));
        std::string path = (std::filesystem::path(out_dir) / "report.json").string();
        pgop::write_json_file(path, report);
        std::printf("report %s\n", path.c_str());
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"exact policy-improvement operators on tabular MDPs"};
    app.require_subcommand(1);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy on an MDP");
    std::string mdp_path, policy_path;
    eval_cmd->add_option("--mdp", mdp_path, "MDP json file")->required();
    eval_cmd->add_option("--policy", policy_path, "policy json file")->required();

    auto* run_cmd = app.add_subcommand("run", "run a training experiment");
    std::string run_config, run_preset, run_out;
    std::uint64_t run_seed = 0;
    run_cmd->add_option("--config", run_config, "experiment config json");
    run_cmd->add_option("--preset", run_preset,
                        "named preset (fig1-left, fig1-middle, fig1-anneal, op-reinforce, "
                        "offpolicy-optimal, linesearch)");
    auto* seed_opt = run_cmd->add_option("--seed", run_seed, "seed override");
    run_cmd->add_option("--out", run_out, "output directory override");

    auto* land_cmd = app.add_subcommand("landscape", "shared-policy objective landscape");
    std::string land_out;
    double land_gamma = 0.99;
    int land_grid = 101;
    std::vector<double> land_anchors;
    land_cmd->add_option("--out", land_out, "output directory")->required();
    land_cmd->add_option("--gamma", land_gamma, "discount factor");
    land_cmd->add_option("--grid", land_grid, "grid points on [0, 1]");
    land_cmd->add_option("--anchors", land_anchors, "anchor parameters in [0, 1]");

    auto* sweep_cmd = app.add_subcommand("sweep", "cross-product sweep of experiments");
    std::string sweep_config, sweep_out;
    int sweep_jobs = 1;
    sweep_cmd->add_option("--config", sweep_config, "sweep json with base and axes")->required();
    sweep_cmd->add_option("--out", sweep_out, "output directory")->required();
    sweep_cmd->add_option("--jobs", sweep_jobs, "worker threads");

    auto* verify_cmd = app.add_subcommand("verify", "run the library's property checks");
    std::string verify_suite, verify_out;
    verify_cmd->add_option("--suite", verify_suite, "only checks whose name contains this");
    verify_cmd->add_option("--out", verify_out, "directory for report.json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (eval_cmd->parsed()) {
            pgop::TabularMdp mdp = pgop::mdp_from_json(pgop::load_json_file(mdp_path));
            pgop::SoftmaxPolicy pi = pgop::policy_from_json(pgop::load_json_file(policy_path));
            pgop::PolicyEval eval = pgop::evaluate_policy(mdp, pi.prob_matrix());
            std::printf("j %.17g\n", eval.j);
            return 0;
        }
        if (run_cmd->parsed())
            return cmd_run(run_config, run_preset, run_out, run_seed, seed_opt->count() > 0);
        if (land_cmd->parsed()) return cmd_landscape(land_out, land_gamma, land_grid, land_anchors);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_config, sweep_out, sweep_jobs);
        if (verify_cmd->parsed()) return cmd_verify(verify_suite, verify_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
