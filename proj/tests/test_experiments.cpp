#include "pgop/experiments.hpp"
#include "pgop/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace pgop;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory under the system temp root, wiped on creation so
// reruns of the suite never see stale artifacts.
std::string fresh_dir(const std::string& tag) {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("pgop_exp_" + tag + "_" +
                                              std::to_string(::getpid()) + "_" +
                                              std::to_string(counter++));
    fs::remove_all(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

// A cheap config for artifact tests: tiny random MDP, a handful of
// closed-form tabular iterations.
ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.env.kind = EnvSpec::Kind::kRandomMdp;
    cfg.env.n_states = 6;
    cfg.env.n_actions = 3;
    cfg.env.reward_sparsity = 0.4;
    cfg.env.gamma = 0.9;
    cfg.policy_mode = PolicyMode::kTabular;
    cfg.improvement = ImprovementSpec::polynomial(2.0);
    cfg.projection = ProjectionSpec::weighted_kl();
    cfg.n_iters = 8;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("config json round trips through parse and serialize") {
    json j = {
        {"env", {{"kind", "random_mdp"}, {"n_states", 5}, {"n_actions", 2},
                 {"reward_sparsity", 0.3}, {"gamma", 0.85}}},
        {"policy_mode", "shared"},
        {"improvement", {{"kind", "polynomial"}, {"inv_alpha", 4.0}}},
        {"projection", {{"kind", "alpha_divergence"}, {"alpha", 0.25},
                        {"solver", "gradient_descent"}, {"gd_steps", 50},
                        {"gd_step_size", 0.5}}},
        {"n_iters", 12},
        {"alpha_schedule", {{"kind", "anneal"}, {"values", {0.5, 1.0}}}},
        {"sampling_policy", {{"kind", "vi_optimal"}}},
        {"seed", 42},
        {"output_dir", "somewhere"},
    };
    ExperimentConfig cfg = config_from_json(j);
    CHECK(cfg.env.kind == EnvSpec::Kind::kRandomMdp);
    CHECK(cfg.env.n_states == 5);
    CHECK(cfg.env.gamma == 0.85);
    CHECK(cfg.policy_mode == PolicyMode::kShared);
    CHECK(cfg.improvement.kind == ImprovementKind::kPolynomial);
    CHECK(cfg.improvement.inv_alpha == 4.0);
    CHECK(cfg.projection.kind == ProjectionKind::kAlphaDivergence);
    CHECK(cfg.projection.alpha == 0.25);
    CHECK(cfg.projection.solver == ProjectionSolver::kGradientDescent);
    CHECK(cfg.projection.gd_steps == 50);
    CHECK(cfg.projection.gd_step_size == 0.5);
    CHECK(cfg.n_iters == 12);
    CHECK(cfg.schedule.kind == AlphaScheduleKind::kAnneal);
    CHECK(cfg.schedule.values == std::vector<double>{0.5, 1.0});
    CHECK(cfg.sampling.kind == SamplingSpec::Kind::kViOptimal);
    CHECK(cfg.seed == 42);
    CHECK(cfg.output_dir == "somewhere");

    // Serialize, reparse, and compare the serializations: a fixed point.
    json echo = to_json(cfg);
    ExperimentConfig cfg2 = config_from_json(echo);
    CHECK(to_json(cfg2) == echo);
}

TEST_CASE("config parsing names the missing or bad field") {
    json base = {
        {"env", {{"kind", "four_room"}}},
        {"policy_mode", "tabular"},
        {"improvement", {{"kind", "op_reinforce"}}},
        {"projection", {{"kind", "weighted_kl"}}},
        {"n_iters", 10},
    };
    CHECK_NOTHROW(config_from_json(base));

    auto drop = [&](const char* key) {
        json j = base;
        j.erase(key);
        return j;
    };
    CHECK_THROWS_WITH(config_from_json(drop("env")),
                      Catch::Matchers::ContainsSubstring("env"));
    CHECK_THROWS_WITH(config_from_json(drop("policy_mode")),
                      Catch::Matchers::ContainsSubstring("policy_mode"));
    CHECK_THROWS_WITH(config_from_json(drop("improvement")),
                      Catch::Matchers::ContainsSubstring("improvement"));
    CHECK_THROWS_WITH(config_from_json(drop("projection")),
                      Catch::Matchers::ContainsSubstring("projection"));
    CHECK_THROWS_WITH(config_from_json(drop("n_iters")),
                      Catch::Matchers::ContainsSubstring("n_iters"));

    json bad = base;
    bad["policy_mode"] = "convolutional";
    CHECK_THROWS_WITH(config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("policy_mode"));

    bad = base;
    bad["env"] = {{"kind", "maze"}};
    CHECK_THROWS_WITH(config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("env.kind"));

    bad = base;
    bad["env"] = {{"kind", "file"}};
    CHECK_THROWS_WITH(config_from_json(bad), Catch::Matchers::ContainsSubstring("path"));

    bad = base;
    bad["improvement"] = {{"kind", "polynomial"}};
    CHECK_THROWS_WITH(config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("inv_alpha"));

    bad = base;
    bad["n_iters"] = 0;
    CHECK_THROWS_WITH(config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("n_iters"));

    bad = base;
    bad["alpha_schedule"] = {{"kind", "line_search"}, {"candidates", {0.25, 0.5}}};
    CHECK_THROWS_WITH(config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("include 1"));

    bad = base;
    bad["sampling_policy"] = {{"kind", "file"}};
    CHECK_THROWS_WITH(config_from_json(bad),
                      Catch::Matchers::ContainsSubstring("path"));
}

TEST_CASE("presets pin the experiment configurations") {
    ExperimentConfig left = preset_config("fig1-left");
    CHECK(left.policy_mode == PolicyMode::kShared);
    CHECK(left.improvement.kind == ImprovementKind::kPolynomial);
    CHECK(left.improvement.inv_alpha == 4.0);
    CHECK(left.projection.solver == ProjectionSolver::kGradientDescent);
    CHECK(left.n_iters == 150);

    ExperimentConfig middle = preset_config("fig1-middle");
    CHECK(middle.policy_mode == PolicyMode::kTabular);
    CHECK(middle.projection.kind == ProjectionKind::kAlphaDivergence);
    CHECK(middle.projection.alpha == 0.25);
    CHECK(middle.projection.solver == ProjectionSolver::kClosedFormTabular);

    ExperimentConfig anneal = preset_config("fig1-anneal");
    CHECK(anneal.schedule.kind == AlphaScheduleKind::kAnneal);
    CHECK(anneal.schedule.values == std::vector<double>{0.125, 0.25, 0.5, 1.0});

    ExperimentConfig plain = preset_config("op-reinforce");
    CHECK(plain.improvement.kind == ImprovementKind::kOpReinforce);
    CHECK(plain.schedule.kind == AlphaScheduleKind::kFixed);

    ExperimentConfig off = preset_config("offpolicy-optimal");
    CHECK(off.sampling.kind == SamplingSpec::Kind::kViOptimal);
    CHECK(off.n_iters == 50);

    ExperimentConfig ls = preset_config("linesearch");
    CHECK(ls.schedule.kind == AlphaScheduleKind::kLineSearch);
    CHECK(ls.policy_mode == PolicyMode::kShared);
    CHECK(ls.n_iters == 120);

    // All presets satisfy their own validation and name the four-room env.
    for (const char* name : {"fig1-left", "fig1-middle", "fig1-anneal", "op-reinforce",
                             "offpolicy-optimal", "linesearch"}) {
        ExperimentConfig cfg = preset_config(name);
        CHECK(cfg.env.kind == EnvSpec::Kind::kFourRoom);
        CHECK(cfg.preset == name);
        CHECK_NOTHROW(cfg.validate());
    }

    CHECK_THROWS_WITH(preset_config("fig1-right"),
                      Catch::Matchers::ContainsSubstring("fig1-right"));
}

TEST_CASE("run writes curve, policy, and manifest artifacts") {
    ExperimentConfig cfg = tiny_config();
    cfg.output_dir = fresh_dir("artifacts");
    RunArtifacts art = run_experiment(cfg);

    REQUIRE(fs::exists(art.curve_path));
    REQUIRE(fs::exists(art.policy_path));
    REQUIRE(fs::exists(art.manifest_path));
    CHECK_FALSE(fs::exists(fs::path(cfg.output_dir) / "FAILED"));

    std::string curve = slurp(art.curve_path);
    // Header plus one row per iteration plus the final summary row.
    CHECK(count_lines(curve) == 1 + cfg.n_iters + 1);
    CHECK(curve.rfind("iteration,j,alpha,bound_at_mu,bound_at_new,divergence_to_target\n",
                      0) == 0);

    json manifest = load_json_file(art.manifest_path);
    CHECK(manifest.at("version").get<std::string>() == kVersion);
    CHECK(manifest.at("final_j").get<double>() ==
          art.outcome.result.curve.back().j);
    CHECK(manifest.at("j_star").get<double>() >= manifest.at("final_j").get<double>() - 1e-9);
    CHECK(manifest.at("runtime_ms").get<double>() >= 0.0);
    // The config echo reparses to the same config.
    ExperimentConfig echo = config_from_json(manifest.at("config"));
    CHECK(to_json(echo) == to_json(cfg));

    // The stored policy evaluates to the recorded final return.
    SoftmaxPolicy stored = policy_from_json(load_json_file(art.policy_path));
    TabularMdp mdp = build_env(cfg.env, cfg.seed);
    CHECK(evaluate_policy(mdp, stored.prob_matrix()).j ==
          Catch::Approx(manifest.at("final_j").get<double>()).margin(1e-12));
}

TEST_CASE("identical config and seed produce byte-identical results") {
    ExperimentConfig a = tiny_config();
    a.output_dir = fresh_dir("det_a");
    ExperimentConfig b = tiny_config();
    b.output_dir = fresh_dir("det_b");

    RunArtifacts ra = run_experiment(a);
    RunArtifacts rb = run_experiment(b);
    CHECK(slurp(ra.curve_path) == slurp(rb.curve_path));
    CHECK(slurp(ra.policy_path) == slurp(rb.policy_path));

    // A different seed changes the random environment and hence the curve.
    ExperimentConfig c = tiny_config();
    c.seed = 12;
    c.output_dir = fresh_dir("det_c");
    RunArtifacts rc = run_experiment(c);
    CHECK(slurp(ra.curve_path) != slurp(rc.curve_path));
}

TEST_CASE("a failed run leaves a marker naming the error") {
    ExperimentConfig cfg = tiny_config();
    cfg.env.kind = EnvSpec::Kind::kFile;
    cfg.env.path = "/nonexistent/mdp.json";
    cfg.output_dir = fresh_dir("failed");
    REQUIRE_THROWS(run_experiment(cfg));
    fs::path marker = fs::path(cfg.output_dir) / "FAILED";
    REQUIRE(fs::exists(marker));
    CHECK(slurp(marker.string()).find("/nonexistent/mdp.json") != std::string::npos);
}

TEST_CASE("run requires an output directory") {
    ExperimentConfig cfg = tiny_config();
    CHECK_THROWS_WITH(run_experiment(cfg),
                      Catch::Matchers::ContainsSubstring("output_dir"));
}

TEST_CASE("landscape writes one csv per anchor and respects the bound") {
    ExperimentConfig cfg;
    cfg.env.kind = EnvSpec::Kind::kFourRoom;
    cfg.env.gamma = 0.99;
    cfg.output_dir = fresh_dir("landscape");

    LandscapeArtifacts art = run_landscape(cfg, 21, {0.3, 0.7});
    REQUIRE(art.files.size() == 2);
    CHECK(art.rows.size() == 2 * 21);
    CHECK(art.max_bound_excess <= 1e-9);
    for (const std::string& f : art.files) {
        REQUIRE(fs::exists(f));
        CHECK(count_lines(slurp(f)) == 1 + 21);
    }

    ExperimentConfig bad = cfg;
    bad.env = tiny_config().env;
    CHECK_THROWS_WITH(run_landscape(bad),
                      Catch::Matchers::ContainsSubstring("four_room"));
    CHECK_THROWS(run_landscape(cfg, 1));
    CHECK_THROWS(run_landscape(cfg, 21, {}));
    ExperimentConfig nodir = cfg;
    nodir.output_dir.clear();
    CHECK_THROWS_WITH(run_landscape(nodir),
                      Catch::Matchers::ContainsSubstring("output_dir"));
}

TEST_CASE("sweep with no axes is a single cell matching a plain run") {
    ExperimentConfig base = tiny_config();
    std::string out = fresh_dir("sweep_single");
    json summary = run_sweep(base, SweepAxes{}, out);

    REQUIRE(summary.at("cells").size() == 1);
    const json& cell = summary.at("cells").at(0);
    CHECK(cell.at("cell") == "cell_000");
    CHECK_FALSE(cell.contains("error"));

    ExperimentConfig solo = tiny_config();
    solo.output_dir = fresh_dir("sweep_ref");
    RunArtifacts ref = run_experiment(solo);
    CHECK(cell.at("final_j").get<double>() == ref.outcome.result.curve.back().j);
    CHECK(cell.at("j_star").get<double>() == ref.outcome.j_star);

    // The cell directory holds the usual artifacts, byte-identical to the
    // plain run's.
    fs::path cell_dir = fs::path(out) / "cell_000";
    CHECK(slurp((cell_dir / "curve.csv").string()) == slurp(ref.curve_path));
    REQUIRE(fs::exists(fs::path(out) / "summary.json"));
}

TEST_CASE("sweep expands the full cross product on worker threads") {
    ExperimentConfig base = tiny_config();
    SweepAxes axes;
    axes.alphas = {1.0, 0.5};
    axes.seeds = {1, 2, 3};
    REQUIRE(axes.cell_count() == 6);

    std::string out = fresh_dir("sweep_grid");
    json summary = run_sweep(base, axes, out, 3);
    REQUIRE(summary.at("cells").size() == 6);
    for (const json& cell : summary.at("cells")) {
        CHECK_FALSE(cell.contains("error"));
        CHECK(cell.at("axes").contains("alpha"));
        CHECK(cell.at("axes").contains("seed"));
        CHECK(cell.at("final_j").is_number());
        CHECK(cell.at("iterations_to_90pct").is_number());
        CHECK(cell.at("regret_slope").is_number());
        CHECK(cell.at("cumulative_regret").is_number());
    }
    // alpha = 1 cells degrade the improvement to the value-weighted form:
    // exponent 1/alpha = 1.
    CHECK(summary.at("cells").at(0).at("axes").at("alpha").get<double>() == 1.0);

    // Rerunning the identical sweep reproduces summary.json byte for byte.
    std::string out2 = fresh_dir("sweep_grid2");
    run_sweep(base, axes, out2, 2);
    CHECK(slurp((fs::path(out) / "summary.json").string()) ==
          slurp((fs::path(out2) / "summary.json").string()));
}

TEST_CASE("sweep axis validation") {
    ExperimentConfig base = tiny_config();

    SweepAxes huge;
    huge.seeds.resize(10'001);
    CHECK_THROWS_WITH(run_sweep(base, huge, fresh_dir("sweep_huge")),
                      Catch::Matchers::ContainsSubstring("10000"));

    SweepAxes alpha_axis;
    alpha_axis.alphas = {0.5};
    ExperimentConfig exp_base = tiny_config();
    exp_base.improvement = ImprovementSpec::ppo_exp(5.0);
    CHECK_THROWS_WITH(run_sweep(exp_base, alpha_axis, fresh_dir("sweep_bad_alpha")),
                      Catch::Matchers::ContainsSubstring("polynomial"));

    SweepAxes beta_axis;
    beta_axis.betas = {5.0};
    CHECK_THROWS_WITH(run_sweep(base, beta_axis, fresh_dir("sweep_bad_beta")),
                      Catch::Matchers::ContainsSubstring("exponentiated"));

    SweepAxes out_of_range;
    out_of_range.alphas = {1.5};
    CHECK_THROWS_WITH(run_sweep(base, out_of_range, fresh_dir("sweep_range")),
                      Catch::Matchers::ContainsSubstring("(0, 1]"));

    CHECK_THROWS_WITH(run_sweep(base, SweepAxes{}, ""),
                      Catch::Matchers::ContainsSubstring("output"));
    CHECK_THROWS(run_sweep(base, SweepAxes{}, fresh_dir("sweep_jobs"), 0));
}

TEST_CASE("a matched divergence inherits the cell's alpha") {
    ExperimentConfig base = tiny_config();
    SweepAxes axes;
    axes.alphas = {0.5, 0.25};
    axes.projections = {json{{"kind", "alpha_divergence"}},
                        json{{"kind", "weighted_kl"}}};

    auto cells = pgop::detail::expand_cells(base, axes, "unused");
    REQUIRE(cells.size() == 4);
    // Cells iterate projections fastest, alphas outermost.
    CHECK(cells[0].cfg.projection.kind == ProjectionKind::kAlphaDivergence);
    CHECK(cells[0].cfg.projection.alpha == 0.5);
    CHECK(cells[1].cfg.projection.kind == ProjectionKind::kWeightedKL);
    CHECK(cells[2].cfg.projection.alpha == 0.25);
    // An explicit alpha on the projection entry is kept as given.
    axes.projections = {json{{"kind", "alpha_divergence"}, {"alpha", 0.75}}};
    cells = pgop::detail::expand_cells(base, axes, "unused");
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].cfg.projection.alpha == 0.75);
    CHECK(cells[1].cfg.projection.alpha == 0.75);

    // Improvement exponents follow 1/alpha.
    CHECK(cells[0].cfg.improvement.inv_alpha == 2.0);
    CHECK(cells[1].cfg.improvement.inv_alpha == 4.0);
}

TEST_CASE("axes parse from json") {
    SweepAxes axes = axes_from_json(json{{"alpha", {1.0, 0.5}},
                                         {"seed", {7, 8}},
                                         {"projection", {json{{"kind", "weighted_kl"}}}}});
    CHECK(axes.alphas == std::vector<double>{1.0, 0.5});
    CHECK(axes.seeds == std::vector<std::uint64_t>{7, 8});
    REQUIRE(axes.projections.size() == 1);
    CHECK(axes.cell_count() == 4);
    CHECK(axes_from_json(json::object()).cell_count() == 1);
}

TEST_CASE("a broken bound makes the bound check fail") {
    // Feed the verifier a bound inflated above the true return. If the check
    // still passed, it would be vacuous; this pins its teeth.
    BoundFn inflated = [](const PolicyEval& eval, const MatrixXd& mu, const MatrixXd& pi) {
        return operator_lower_bound(eval, mu, pi) + 0.05;
    };
    CheckResult broken = check_global_lower_bound(inflated);
    CHECK_FALSE(broken.pass);
    CHECK(broken.measured > broken.tolerance);

    CheckResult real = check_global_lower_bound();
    CHECK(real.pass);
}

TEST_CASE("verification selector filters by substring") {
    std::vector<CheckResult> one = run_verification("projection-gradient");
    REQUIRE(one.size() == 1);
    CHECK(one[0].name == "projection-gradient-identity");
    CHECK(one[0].pass);
    CHECK(one[0].wallclock_ms <= one[0].time_limit_ms);

    CHECK(run_verification("no-such-check").empty());

    json j = to_json(one[0]);
    CHECK(j.at("name") == "projection-gradient-identity");
    CHECK(j.at("pass").get<bool>());
    CHECK(j.at("tolerance").get<double>() == one[0].tolerance);
}
