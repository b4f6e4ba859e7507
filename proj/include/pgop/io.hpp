#pragma once

#include "pgop/bounds.hpp"
#include "pgop/mdp.hpp"
#include "pgop/policy.hpp"
#include "pgop/training.hpp"
#include "pgop/trajectory.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgop {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json to_json(const TabularMdp& mdp) {
    json p = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        json row = json::array();
        for (int a = 0; a < mdp.n_actions; ++a) {
            json dest = json::array();
            for (int t = 0; t < mdp.n_states; ++t) dest.push_back(mdp.transition[a](s, t));
            row.push_back(std::move(dest));
        }
        p.push_back(std::move(row));
    }
    json r = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        json row = json::array();
        for (int a = 0; a < mdp.n_actions; ++a) row.push_back(mdp.reward(s, a));
        r.push_back(std::move(row));
    }
    json d0 = json::array(), terminal = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        d0.push_back(mdp.start[s]);
        terminal.push_back(static_cast<int>(mdp.terminal[s]));
    }
    return json{{"n_states", mdp.n_states}, {"n_actions", mdp.n_actions}, {"gamma", mdp.gamma},
                {"d0", std::move(d0)},      {"terminal", std::move(terminal)},
                {"P", std::move(p)},        {"r", std::move(r)}};
}

inline TabularMdp mdp_from_json(const json& j) {
    TabularMdp mdp;
    mdp.n_states = j.at("n_states").get<int>();
    mdp.n_actions = j.at("n_actions").get<int>();
    mdp.gamma = j.at("gamma").get<double>();
    if (mdp.n_states < 1 || mdp.n_actions < 1)
        throw std::invalid_argument("mdp json: n_states and n_actions must be positive");

    const json& p = j.at("P");
    const json& r = j.at("r");
    const json& d0 = j.at("d0");
    const json& terminal = j.at("terminal");
    if (static_cast<int>(p.size()) != mdp.n_states)
        throw std::invalid_argument("mdp json: P must have n_states rows indexed [s][a][s']");
    mdp.transition.assign(mdp.n_actions, MatrixXd::Zero(mdp.n_states, mdp.n_states));
    for (int s = 0; s < mdp.n_states; ++s) {
        if (static_cast<int>(p.at(s).size()) != mdp.n_actions)
            throw std::invalid_argument("mdp json: P[" + std::to_string(s) +
                                        "] must have n_actions entries");
        for (int a = 0; a < mdp.n_actions; ++a) {
            const json& dest = p.at(s).at(a);
            if (static_cast<int>(dest.size()) != mdp.n_states)
                throw std::invalid_argument("mdp json: P[" + std::to_string(s) + "][" +
                                            std::to_string(a) + "] must have n_states entries");
            for (int t = 0; t < mdp.n_states; ++t)
                mdp.transition[a](s, t) = dest.at(t).get<double>();
        }
    }
    mdp.reward.resize(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) mdp.reward(s, a) = r.at(s).at(a).get<double>();
    mdp.start.resize(mdp.n_states);
    mdp.terminal.resize(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
        mdp.start[s] = d0.at(s).get<double>();
        mdp.terminal[s] = static_cast<std::uint8_t>(terminal.at(s).get<int>() != 0);
    }
    mdp.validate();
    return mdp;
}

inline json to_json(const SoftmaxPolicy& policy) {
    json theta = json::array();
    for (Eigen::Index i = 0; i < policy.theta.size(); ++i) theta.push_back(policy.theta[i]);
    return json{{"mode", policy.mode == PolicyMode::kTabular ? "tabular" : "shared"},
                {"n_states", policy.n_states},
                {"n_actions", policy.n_actions},
                {"theta", std::move(theta)}};
}

inline SoftmaxPolicy policy_from_json(const json& j) {
    SoftmaxPolicy p;
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "tabular")
        p.mode = PolicyMode::kTabular;
    else if (mode == "shared")
        p.mode = PolicyMode::kShared;
    else
        throw std::invalid_argument("policy json: mode must be 'tabular' or 'shared'");
    p.n_states = j.at("n_states").get<int>();
    p.n_actions = j.at("n_actions").get<int>();
    const json& theta = j.at("theta");
    p.theta.resize(static_cast<Eigen::Index>(theta.size()));
    for (Eigen::Index i = 0; i < p.theta.size(); ++i)
        p.theta[i] = theta.at(static_cast<std::size_t>(i)).get<double>();
    p.validate();
    return p;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);  // parse errors carry byte offsets
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Shortest-round-trip-adjacent formatting, stable across runs.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Wallclock is deliberately left out so reruns of the same config produce
/// byte-identical files; timing lives in the manifest instead.
inline void write_curve_csv(const std::string& path, const std::vector<TrainRecord>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "iteration,j,alpha,bound_at_mu,bound_at_new,divergence_to_target\n";
    for (const TrainRecord& r : curve)
        out << r.iteration << ',' << format_double(r.j) << ',' << format_double(r.alpha) << ','
            << format_double(r.bound_at_mu) << ',' << format_double(r.bound_at_new) << ','
            << format_double(r.divergence_to_target) << '\n';
}

inline void write_landscape_csv(const std::string& path, const std::vector<LandscapeRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "anchor_t,t,j,op_bound,cpi\n";
    for (const LandscapeRow& r : rows)
        out << format_double(r.anchor_t) << ',' << format_double(r.t) << ','
            << format_double(r.j) << ',' << format_double(r.op_bound) << ','
            << format_double(r.cpi) << '\n';
}

inline void write_ensemble_csv(const std::string& path, const TrajectoryEnsemble& ens) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "index,steps,return,probability\n";
    for (std::size_t i = 0; i < ens.trajectories.size(); ++i)
        out << i << ',' << ens.trajectories[i].actions.size() << ','
            << format_double(ens.trajectories[i].ret) << ','
            << format_double(ens.trajectories[i].probability) << '\n';
}

/// Minimal CSV reader for round-trip checks; no quoting, comma separated.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace pgop
