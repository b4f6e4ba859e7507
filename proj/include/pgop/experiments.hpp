#pragma once

#include "pgop/io.hpp"
#include "pgop/training.hpp"
#include "pgop/version.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace pgop {

namespace detail {

inline int log_level() {
    static const int level = [] {
        const char* e = std::getenv("PGOP_LOG");
        if (!e) return 0;
        std::string s(e);
        if (s == "debug") return 2;
        if (s == "info") return 1;
        return 0;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[pgop] " << msg << '\n';
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[pgop] " << msg << '\n';
}

inline const json& need(const json& j, const char* field, const char* ctx) {
    if (!j.is_object())
        throw std::invalid_argument(std::string("config: ") + ctx + " must be an object");
    if (!j.contains(field))
        throw std::invalid_argument(std::string("config: ") + ctx + ": missing field '" + field +
                                    "'");
    return j.at(field);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct EnvSpec {
    enum class Kind { kFourRoom, kRandomMdp, kFile };
    Kind kind = Kind::kFourRoom;
    double gamma = 0.99;        // four_room and random_mdp
    int n_states = 6;           // random_mdp
    int n_actions = 3;          // random_mdp
    double reward_sparsity = 0.5;  // random_mdp
    std::string path;           // file
};

struct SamplingSpec {
    enum class Kind { kCurrent, kFile, kViOptimal };
    Kind kind = Kind::kCurrent;
    std::string path;
};

struct ExperimentConfig {
    std::string preset;  // empty unless built from a named preset
    EnvSpec env;
    PolicyMode policy_mode = PolicyMode::kTabular;
    ImprovementSpec improvement;
    ProjectionSpec projection;
    int n_iters = 100;
    AlphaSchedule schedule;
    SamplingSpec sampling;
    std::uint64_t seed = 0;
    std::string output_dir;

    void validate() const {
        improvement.validate();
        projection.validate();
        if (n_iters < 1) throw std::invalid_argument("config: n_iters must be >= 1");
        if (env.kind == EnvSpec::Kind::kRandomMdp &&
            (env.n_states < 1 || env.n_actions < 1))
            throw std::invalid_argument("config: random_mdp needs positive state/action counts");
        if (env.kind == EnvSpec::Kind::kFile && env.path.empty())
            throw std::invalid_argument("config: env.path is required for a file environment");
        if (sampling.kind == SamplingSpec::Kind::kFile && sampling.path.empty())
            throw std::invalid_argument("config: sampling_policy.path is required");
        if (schedule.kind == AlphaScheduleKind::kLineSearch) {
            bool has_one = false;
            for (double c : schedule.values) has_one |= std::abs(c - 1.0) <= 1e-12;
            if (!has_one)
                throw std::invalid_argument("config: line_search candidates must include 1");
        }
    }
};

// --- JSON in ---------------------------------------------------------------

inline EnvSpec env_from_json(const json& j) {
    EnvSpec env;
    std::string kind = detail::need(j, "kind", "env").get<std::string>();
    if (kind == "four_room") {
        env.kind = EnvSpec::Kind::kFourRoom;
        env.gamma = j.value("gamma", 0.99);
    } else if (kind == "random_mdp") {
        env.kind = EnvSpec::Kind::kRandomMdp;
        env.n_states = detail::need(j, "n_states", "env").get<int>();
        env.n_actions = detail::need(j, "n_actions", "env").get<int>();
        env.reward_sparsity = j.value("reward_sparsity", 0.5);
        env.gamma = j.value("gamma", 0.9);
    } else if (kind == "file") {
        env.kind = EnvSpec::Kind::kFile;
        env.path = detail::need(j, "path", "env").get<std::string>();
    } else {
        throw std::invalid_argument("config: env.kind must be four_room, random_mdp, or file");
    }
    return env;
}

inline ImprovementSpec improvement_from_json(const json& j) {
    std::string kind = detail::need(j, "kind", "improvement").get<std::string>();
    if (kind == "op_reinforce") return ImprovementSpec::op_reinforce();
    if (kind == "polynomial")
        return ImprovementSpec::polynomial(
            detail::need(j, "inv_alpha", "improvement").get<double>());
    if (kind == "ppo_exp")
        return ImprovementSpec::ppo_exp(detail::need(j, "beta", "improvement").get<double>());
    if (kind == "mpo_exp")
        return ImprovementSpec::mpo_exp(detail::need(j, "beta", "improvement").get<double>());
    throw std::invalid_argument(
        "config: improvement.kind must be op_reinforce, polynomial, ppo_exp, or mpo_exp");
}

inline ProjectionSpec projection_from_json(const json& j) {
    ProjectionSpec spec;
    std::string kind = detail::need(j, "kind", "projection").get<std::string>();
    if (kind == "weighted_kl") {
        spec = ProjectionSpec::weighted_kl();
    } else if (kind == "alpha_divergence") {
        spec = ProjectionSpec::alpha_div(detail::need(j, "alpha", "projection").get<double>());
    } else if (kind == "clipped") {
        spec = ProjectionSpec::reverse_kl_clipped(
            detail::need(j, "beta", "projection").get<double>(), j.value("clip_eps", 0.2));
    } else {
        throw std::invalid_argument(
            "config: projection.kind must be weighted_kl, alpha_divergence, or clipped");
    }
    if (j.contains("solver")) {
        std::string solver = j.at("solver").get<std::string>();
        if (solver == "closed_form")
            spec.solver = ProjectionSolver::kClosedFormTabular;
        else if (solver == "gradient_descent")
            spec.solver = ProjectionSolver::kGradientDescent;
        else
            throw std::invalid_argument(
                "config: projection.solver must be closed_form or gradient_descent");
    }
    spec.gd_steps = j.value("gd_steps", spec.gd_steps);
    spec.gd_step_size = j.value("gd_step_size", spec.gd_step_size);
    return spec;
}

inline AlphaSchedule schedule_from_json(const json& j) {
    std::string kind = detail::need(j, "kind", "alpha_schedule").get<std::string>();
    if (kind == "fixed") return AlphaSchedule::fixed();
    if (kind == "anneal")
        return AlphaSchedule::anneal(
            detail::need(j, "values", "alpha_schedule").get<std::vector<double>>());
    if (kind == "line_search")
        return AlphaSchedule::line_search(
            detail::need(j, "candidates", "alpha_schedule").get<std::vector<double>>());
    throw std::invalid_argument(
        "config: alpha_schedule.kind must be fixed, anneal, or line_search");
}

inline SamplingSpec sampling_from_json(const json& j) {
    SamplingSpec s;
    std::string kind = detail::need(j, "kind", "sampling_policy").get<std::string>();
    if (kind == "current") {
        s.kind = SamplingSpec::Kind::kCurrent;
    } else if (kind == "file") {
        s.kind = SamplingSpec::Kind::kFile;
        s.path = detail::need(j, "path", "sampling_policy").get<std::string>();
    } else if (kind == "vi_optimal") {
        s.kind = SamplingSpec::Kind::kViOptimal;
    } else {
        throw std::invalid_argument(
            "config: sampling_policy.kind must be current, file, or vi_optimal");
    }
    return s;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.preset = j.value("preset", std::string{});
    cfg.env = env_from_json(detail::need(j, "env", "config"));
    std::string mode = detail::need(j, "policy_mode", "config").get<std::string>();
    if (mode == "tabular")
        cfg.policy_mode = PolicyMode::kTabular;
    else if (mode == "shared")
        cfg.policy_mode = PolicyMode::kShared;
    else
        throw std::invalid_argument("config: policy_mode must be tabular or shared");
    cfg.improvement = improvement_from_json(detail::need(j, "improvement", "config"));
    cfg.projection = projection_from_json(detail::need(j, "projection", "config"));
    cfg.n_iters = detail::need(j, "n_iters", "config").get<int>();
    if (j.contains("alpha_schedule")) cfg.schedule = schedule_from_json(j.at("alpha_schedule"));
    if (j.contains("sampling_policy")) cfg.sampling = sampling_from_json(j.at("sampling_policy"));
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.output_dir = j.value("output_dir", std::string{});
    cfg.validate();
    return cfg;
}

// --- JSON out --------------------------------------------------------------

inline json to_json(const EnvSpec& env) {
    switch (env.kind) {
        case EnvSpec::Kind::kFourRoom:
            return {{"kind", "four_room"}, {"gamma", env.gamma}};
        case EnvSpec::Kind::kRandomMdp:
            return {{"kind", "random_mdp"},
                    {"n_states", env.n_states},
                    {"n_actions", env.n_actions},
                    {"reward_sparsity", env.reward_sparsity},
                    {"gamma", env.gamma}};
        case EnvSpec::Kind::kFile:
            return {{"kind", "file"}, {"path", env.path}};
    }
    throw std::logic_error("env to_json: unreachable");
}

inline json to_json(const ImprovementSpec& spec) {
    switch (spec.kind) {
        case ImprovementKind::kOpReinforce:
            return {{"kind", "op_reinforce"}};
        case ImprovementKind::kPolynomial:
            return {{"kind", "polynomial"}, {"inv_alpha", spec.inv_alpha}};
        case ImprovementKind::kPpoExp:
            return {{"kind", "ppo_exp"}, {"beta", spec.beta}};
        case ImprovementKind::kMpoExp:
            return {{"kind", "mpo_exp"}, {"beta", spec.beta}};
    }
    throw std::logic_error("improvement to_json: unreachable");
}

inline json to_json(const ProjectionSpec& spec) {
    json j;
    switch (spec.kind) {
        case ProjectionKind::kWeightedKL:
            j["kind"] = "weighted_kl";
            break;
        case ProjectionKind::kAlphaDivergence:
            j["kind"] = "alpha_divergence";
            j["alpha"] = spec.alpha;
            break;
        case ProjectionKind::kReverseKLClipped:
            j["kind"] = "clipped";
            j["beta"] = spec.beta;
            j["clip_eps"] = spec.clip_eps;
            break;
    }
    j["solver"] =
        spec.solver == ProjectionSolver::kClosedFormTabular ? "closed_form" : "gradient_descent";
    if (spec.solver == ProjectionSolver::kGradientDescent) {
        j["gd_steps"] = spec.gd_steps;
        j["gd_step_size"] = spec.gd_step_size;
    }
    return j;
}

inline json to_json(const AlphaSchedule& schedule) {
    switch (schedule.kind) {
        case AlphaScheduleKind::kFixed:
            return {{"kind", "fixed"}};
        case AlphaScheduleKind::kAnneal:
            return {{"kind", "anneal"}, {"values", schedule.values}};
        case AlphaScheduleKind::kLineSearch:
            return {{"kind", "line_search"}, {"candidates", schedule.values}};
    }
    throw std::logic_error("schedule to_json: unreachable");
}

inline json to_json(const SamplingSpec& s) {
    switch (s.kind) {
        case SamplingSpec::Kind::kCurrent:
            return {{"kind", "current"}};
        case SamplingSpec::Kind::kFile:
            return {{"kind", "file"}, {"path", s.path}};
        case SamplingSpec::Kind::kViOptimal:
            return {{"kind", "vi_optimal"}};
    }
    throw std::logic_error("sampling to_json: unreachable");
}

inline json to_json(const ExperimentConfig& cfg) {
    json j;
    if (!cfg.preset.empty()) j["preset"] = cfg.preset;
    j["env"] = to_json(cfg.env);
    j["policy_mode"] = cfg.policy_mode == PolicyMode::kTabular ? "tabular" : "shared";
    j["improvement"] = to_json(cfg.improvement);
    j["projection"] = to_json(cfg.projection);
    j["n_iters"] = cfg.n_iters;
    j["alpha_schedule"] = to_json(cfg.schedule);
    j["sampling_policy"] = to_json(cfg.sampling);
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    return j;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/**
 * Named four-room configurations. The aggressive-plus-KL preset uses shared
 * parameters, where the mismatch between the covering KL pull and the
 * aggressive target stalls below the optimum; the matched alpha-divergence,
 * annealed, and plain one-step presets converge to it.
 */
inline ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig cfg;
    cfg.preset = name;
    cfg.env.kind = EnvSpec::Kind::kFourRoom;
    cfg.env.gamma = 0.99;

    ProjectionSpec shared_kl = ProjectionSpec::weighted_kl(ProjectionSolver::kGradientDescent);
    shared_kl.gd_steps = 300;
    shared_kl.gd_step_size = 1.0;

    if (name == "fig1-left") {
        cfg.policy_mode = PolicyMode::kShared;
        cfg.improvement = ImprovementSpec::polynomial(4.0);
        cfg.projection = shared_kl;
        cfg.n_iters = 150;
    } else if (name == "fig1-middle") {
        cfg.policy_mode = PolicyMode::kTabular;
        cfg.improvement = ImprovementSpec::polynomial(4.0);
        cfg.projection = ProjectionSpec::alpha_div(0.25, ProjectionSolver::kClosedFormTabular);
        cfg.n_iters = 150;
    } else if (name == "fig1-anneal") {
        cfg.policy_mode = PolicyMode::kTabular;
        cfg.improvement = ImprovementSpec::polynomial(1.0);
        cfg.projection = ProjectionSpec::weighted_kl();
        cfg.schedule = AlphaSchedule::anneal({0.125, 0.25, 0.5, 1.0});
        cfg.n_iters = 150;
    } else if (name == "op-reinforce") {
        cfg.policy_mode = PolicyMode::kTabular;
        cfg.improvement = ImprovementSpec::op_reinforce();
        cfg.projection = ProjectionSpec::weighted_kl();
        cfg.n_iters = 150;
    } else if (name == "offpolicy-optimal") {
        cfg.policy_mode = PolicyMode::kTabular;
        cfg.improvement = ImprovementSpec::op_reinforce();
        cfg.projection = ProjectionSpec::weighted_kl();
        cfg.sampling.kind = SamplingSpec::Kind::kViOptimal;
        cfg.n_iters = 50;
    } else if (name == "linesearch") {
        cfg.policy_mode = PolicyMode::kShared;
        cfg.improvement = ImprovementSpec::polynomial(1.0);
        cfg.projection = shared_kl;
        cfg.schedule = AlphaSchedule::line_search({0.125, 0.25, 0.5, 1.0});
        cfg.n_iters = 120;
    } else {
        throw std::invalid_argument(
            "unknown preset '" + name +
            "' (expected fig1-left, fig1-middle, fig1-anneal, op-reinforce, "
            "offpolicy-optimal, or linesearch)");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

inline TabularMdp build_env(const EnvSpec& env, std::uint64_t seed) {
    switch (env.kind) {
        case EnvSpec::Kind::kFourRoom:
            return build_four_room(env.gamma).mdp;
        case EnvSpec::Kind::kRandomMdp:
            return build_random_mdp(env.n_states, env.n_actions, env.reward_sparsity, seed,
                                    env.gamma);
        case EnvSpec::Kind::kFile:
            return mdp_from_json(load_json_file(env.path));
    }
    throw std::logic_error("build_env: unreachable");
}

struct ExperimentOutcome {
    TabularMdp mdp;
    TrainResult result;
    double j_star = 0.0;  // exact J of the one-hot greedy policy from value iteration
};

/// Runs a configured experiment in memory; no files are touched.
inline ExperimentOutcome execute_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentOutcome out;
    out.mdp = build_env(cfg.env, cfg.seed);

    ValueIterationResult vi = value_iteration(out.mdp, 1e-13);
    out.j_star = evaluate_policy(out.mdp, one_hot_policy(out.mdp, vi.greedy)).j;

    std::optional<SoftmaxPolicy> sampling;
    switch (cfg.sampling.kind) {
        case SamplingSpec::Kind::kCurrent:
            break;
        case SamplingSpec::Kind::kFile:
            sampling = policy_from_json(load_json_file(cfg.sampling.path));
            break;
        case SamplingSpec::Kind::kViOptimal:
            sampling = SoftmaxPolicy::from_prob_matrix(one_hot_policy(out.mdp, vi.greedy));
            break;
    }

    SoftmaxPolicy init =
        SoftmaxPolicy::uniform(cfg.policy_mode, out.mdp.n_states, out.mdp.n_actions);
    detail::log_info("running " + (cfg.preset.empty() ? std::string("config") : cfg.preset) +
                     ": " + std::to_string(cfg.n_iters) + " iterations");
    out.result = train(out.mdp, init, cfg.improvement, cfg.projection, cfg.n_iters, cfg.schedule,
                       sampling ? &*sampling : nullptr);
    if (detail::log_level() >= 2)
        for (const TrainRecord& r : out.result.curve)
            detail::log_debug("iter " + std::to_string(r.iteration) + " j=" + format_double(r.j) +
                              " alpha=" + format_double(r.alpha));
    detail::log_info("final j=" + format_double(out.result.curve.back().j) +
                     " (optimal " + format_double(out.j_star) + ")");
    return out;
}

struct RunArtifacts {
    ExperimentOutcome outcome;
    std::string curve_path;
    std::string policy_path;
    std::string manifest_path;
};

/**
 * Runs an experiment and writes curve.csv, final_policy.json, and
 * manifest.json into the config's output directory. A failure mid-run leaves
 * a FAILED marker file naming the error next to whatever was written.
 */
inline RunArtifacts run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.output_dir.empty())
        throw std::invalid_argument("config: output_dir is required to run an experiment");
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    RunArtifacts art;
    auto t0 = std::chrono::steady_clock::now();
    try {
        art.outcome = execute_experiment(cfg);
    } catch (const std::exception& e) {
        std::ofstream marker(fs::path(cfg.output_dir) / "FAILED");
        marker << e.what() << '\n';
        throw;
    }
    double total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    art.curve_path = (fs::path(cfg.output_dir) / "curve.csv").string();
    art.policy_path = (fs::path(cfg.output_dir) / "final_policy.json").string();
    art.manifest_path = (fs::path(cfg.output_dir) / "manifest.json").string();

    write_curve_csv(art.curve_path, art.outcome.result.curve);
    write_json_file(art.policy_path, to_json(art.outcome.result.policy));

    json manifest;
    manifest["config"] = to_json(cfg);
    manifest["version"] = kVersion;
    manifest["runtime_ms"] = total_ms;
    manifest["j_star"] = art.outcome.j_star;
    manifest["final_j"] = art.outcome.result.curve.back().j;
    write_json_file(art.manifest_path, manifest);
    return art;
}

// ---------------------------------------------------------------------------
// Landscape study
// ---------------------------------------------------------------------------

struct LandscapeArtifacts {
    std::vector<std::string> files;   // one CSV per anchor
    std::vector<LandscapeRow> rows;   // all rows, anchor-major
    double max_bound_excess = 0.0;    // max over rows of op_bound - j
};

/**
 * Sweeps the one-parameter shared policy family on the configured four-room
 * environment, one CSV per anchor, then validates that the operator bound
 * never exceeds the true return by more than 1e-9.
 */
inline LandscapeArtifacts run_landscape(const ExperimentConfig& cfg, int grid_points = 101,
                                        std::vector<double> anchors = {0.2, 0.5, 0.8}) {
    if (cfg.env.kind != EnvSpec::Kind::kFourRoom)
        throw std::invalid_argument("landscape: the environment must be four_room");
    if (cfg.output_dir.empty())
        throw std::invalid_argument("config: output_dir is required to run a landscape");
    if (grid_points < 2) throw std::invalid_argument("landscape: need at least two grid points");
    if (anchors.empty()) throw std::invalid_argument("landscape: need at least one anchor");

    TabularMdp mdp = build_env(cfg.env, cfg.seed);
    std::vector<double> ts(grid_points);
    for (int i = 0; i < grid_points; ++i)
        ts[i] = static_cast<double>(i) / static_cast<double>(grid_points - 1);

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);

    LandscapeArtifacts art;
    art.rows = bound_landscape(mdp, ts, anchors);
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        std::vector<LandscapeRow> slice(art.rows.begin() + k * ts.size(),
                                        art.rows.begin() + (k + 1) * ts.size());
        std::string file =
            (fs::path(cfg.output_dir) / ("landscape_anchor" + std::to_string(k) + ".csv"))
                .string();
        write_landscape_csv(file, slice);
        art.files.push_back(file);
    }
    for (const LandscapeRow& r : art.rows)
        art.max_bound_excess = std::max(art.max_bound_excess, r.op_bound - r.j);
    detail::log_info("landscape: " + std::to_string(art.rows.size()) + " rows, max bound excess " +
                     format_double(art.max_bound_excess));
    if (art.max_bound_excess > 1e-9)
        throw std::runtime_error("landscape: operator bound exceeds the return by " +
                                 format_double(art.max_bound_excess));
    return art;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepAxes {
    std::vector<double> alphas;             // polynomial exponent is 1/alpha
    std::vector<double> betas;              // exponentiated improvement temperature
    std::vector<std::uint64_t> seeds;
    std::vector<json> projections;          // projection specs, possibly partial

    std::size_t cell_count() const {
        auto dim = [](std::size_t n) { return n == 0 ? std::size_t{1} : n; };
        return dim(alphas.size()) * dim(betas.size()) * dim(seeds.size()) *
               dim(projections.size());
    }
};

inline SweepAxes axes_from_json(const json& j) {
    SweepAxes axes;
    if (j.contains("alpha")) axes.alphas = j.at("alpha").get<std::vector<double>>();
    if (j.contains("beta")) axes.betas = j.at("beta").get<std::vector<double>>();
    if (j.contains("seed")) axes.seeds = j.at("seed").get<std::vector<std::uint64_t>>();
    if (j.contains("projection"))
        axes.projections = j.at("projection").get<std::vector<json>>();
    return axes;
}

namespace detail {

struct SweepCell {
    ExperimentConfig cfg;
    json axis_values;  // echo of the overrides that built this cell
    std::string dir_name;
};

inline std::vector<SweepCell> expand_cells(const ExperimentConfig& base, const SweepAxes& axes,
                                           const std::string& out_dir) {
    if (axes.cell_count() > 10'000)
        throw std::invalid_argument("sweep: more than 10000 cells, refusing to run");
    if (!axes.alphas.empty() && base.improvement.kind != ImprovementKind::kOpReinforce &&
        base.improvement.kind != ImprovementKind::kPolynomial)
        throw std::invalid_argument("sweep: an alpha axis needs a polynomial improvement");
    if (!axes.betas.empty() && base.improvement.kind != ImprovementKind::kPpoExp &&
        base.improvement.kind != ImprovementKind::kMpoExp)
        throw std::invalid_argument("sweep: a beta axis needs an exponentiated improvement");

    auto opt_dims = [](std::size_t n) { return n == 0 ? std::size_t{1} : n; };
    std::vector<SweepCell> cells;
    cells.reserve(axes.cell_count());
    namespace fs = std::filesystem;

    for (std::size_t ia = 0; ia < opt_dims(axes.alphas.size()); ++ia)
        for (std::size_t ib = 0; ib < opt_dims(axes.betas.size()); ++ib)
            for (std::size_t is = 0; is < opt_dims(axes.seeds.size()); ++is)
                for (std::size_t ip = 0; ip < opt_dims(axes.projections.size()); ++ip) {
                    SweepCell cell;
                    cell.cfg = base;
                    cell.cfg.preset.clear();
                    if (!axes.alphas.empty()) {
                        double a = axes.alphas[ia];
                        if (!(a > 0.0 && a <= 1.0))
                            throw std::invalid_argument("sweep: alphas must lie in (0, 1]");
                        cell.cfg.improvement = ImprovementSpec::polynomial(1.0 / a);
                        cell.axis_values["alpha"] = a;
                    }
                    if (!axes.betas.empty()) {
                        cell.cfg.improvement.beta = axes.betas[ib];
                        cell.axis_values["beta"] = axes.betas[ib];
                    }
                    if (!axes.seeds.empty()) {
                        cell.cfg.seed = axes.seeds[is];
                        cell.axis_values["seed"] = axes.seeds[is];
                    }
                    if (!axes.projections.empty()) {
                        json pj = axes.projections[ip];
                        // A matched alpha-divergence: an entry without its own
                        // alpha inherits the cell's improvement exponent.
                        if (pj.value("kind", "") == "alpha_divergence" && !pj.contains("alpha"))
                            pj["alpha"] = axes.alphas.empty() ? 1.0 : axes.alphas[ia];
                        cell.cfg.projection = projection_from_json(pj);
                        cell.axis_values["projection"] = to_json(cell.cfg.projection);
                    }
                    char name[32];
                    std::snprintf(name, sizeof(name), "cell_%03zu", cells.size());
                    cell.dir_name = name;
                    cell.cfg.output_dir = (fs::path(out_dir) / name).string();
                    cells.push_back(std::move(cell));
                }
    return cells;
}

}  // namespace detail

/**
 * Cross-product sweep over the axes. Cells run on `jobs` threads, each
 * writing its own directory; the summary is aggregated afterwards in cell
 * order and written to summary.json. Timing is kept out of the summary so
 * identical sweeps produce identical bytes.
 */
inline json run_sweep(const ExperimentConfig& base, const SweepAxes& axes,
                      const std::string& out_dir, int jobs = 1) {
    base.validate();
    if (out_dir.empty()) throw std::invalid_argument("sweep: output directory is required");
    if (jobs < 1) throw std::invalid_argument("sweep: jobs must be >= 1");

    std::vector<detail::SweepCell> cells = detail::expand_cells(base, axes, out_dir);
    detail::log_info("sweep: " + std::to_string(cells.size()) + " cells on " +
                     std::to_string(jobs) + " threads");

    struct CellResult {
        json summary;
        bool failed = false;
    };
    std::vector<CellResult> results(cells.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
            json& entry = results[i].summary;
            entry["cell"] = cells[i].dir_name;
            entry["axes"] = cells[i].axis_values;
            try {
                RunArtifacts art = run_experiment(cells[i].cfg);
                const std::vector<TrainRecord>& curve = art.outcome.result.curve;
                double j_star = art.outcome.j_star;
                entry["final_j"] = curve.back().j;
                entry["j_star"] = j_star;
                entry["iterations_to_90pct"] = iterations_to_threshold(curve, 0.9 * j_star);
                entry["regret_slope"] = regret_slope(curve, j_star);
                entry["cumulative_regret"] = cumulative_regret(curve, j_star).back();
            } catch (const std::exception& e) {
                entry["error"] = e.what();
                results[i].failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    int n_threads = std::min<std::size_t>(jobs, cells.size());
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();

    json summary;
    summary["version"] = kVersion;
    summary["base"] = to_json(base);
    summary["cells"] = json::array();
    bool any_failed = false;
    for (CellResult& r : results) {
        summary["cells"].push_back(std::move(r.summary));
        any_failed |= r.failed;
    }
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_json_file((fs::path(out_dir) / "summary.json").string(), summary);
    if (any_failed) throw std::runtime_error("sweep: one or more cells failed, see summary.json");
    return summary;
}

}  // namespace pgop
