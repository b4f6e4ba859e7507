#pragma once

#include "pgop/mdp.hpp"
#include "pgop/policy.hpp"

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <random>
#include <vector>

namespace pgop::testing {

/// Central-difference gradient oracle.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd lo = x, hi = x;
        lo[i] -= h;
        hi[i] += h;
        g[i] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
}

/// Unweighted BFS step count over the any-action transition graph,
/// ignoring self-loops. Returns -1 if unreachable.
inline int bfs_steps(const TabularMdp& mdp, int from, int to) {
    std::vector<int> dist(mdp.n_states, -1);
    std::deque<int> queue{from};
    dist[from] = 0;
    while (!queue.empty()) {
        int s = queue.front();
        queue.pop_front();
        if (s == to) return dist[s];
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int t = 0; t < mdp.n_states; ++t)
                if (t != s && mdp.transition[a](s, t) > 0.0 && dist[t] < 0) {
                    dist[t] = dist[s] + 1;
                    queue.push_back(t);
                }
    }
    return -1;
}

/// One-state MDP with the given per-action rewards.
inline TabularMdp single_state_mdp(const std::vector<double>& rewards, double gamma) {
    TabularMdp mdp;
    mdp.n_states = 1;
    mdp.n_actions = static_cast<int>(rewards.size());
    mdp.gamma = gamma;
    mdp.transition.assign(mdp.n_actions, Eigen::MatrixXd::Ones(1, 1));
    mdp.reward.resize(1, mdp.n_actions);
    for (int a = 0; a < mdp.n_actions; ++a) mdp.reward(0, a) = rewards[a];
    mdp.start = Eigen::VectorXd::Ones(1);
    mdp.terminal.assign(1, 0);
    mdp.validate();
    return mdp;
}

/// Absorbing chain 0 -> 1 -> .. -> n-1 (terminal). Action 1 moves right,
/// action 0 moves left (clamped at 0); entering the last state pays +1.
inline TabularMdp chain_mdp(int n, double gamma) {
    TabularMdp mdp;
    mdp.n_states = n;
    mdp.n_actions = 2;
    mdp.gamma = gamma;
    mdp.transition.assign(2, Eigen::MatrixXd::Zero(n, n));
    mdp.reward = Eigen::MatrixXd::Zero(n, 2);
    mdp.start = Eigen::VectorXd::Zero(n);
    mdp.start[0] = 1.0;
    mdp.terminal.assign(n, 0);
    mdp.terminal[n - 1] = 1;
    for (int s = 0; s < n; ++s) {
        if (s == n - 1) {
            mdp.transition[0](s, s) = 1.0;
            mdp.transition[1](s, s) = 1.0;
            continue;
        }
        mdp.transition[0](s, std::max(0, s - 1)) = 1.0;
        mdp.transition[1](s, s + 1) = 1.0;
        if (s + 1 == n - 1) mdp.reward(s, 1) = 1.0;
    }
    mdp.validate();
    return mdp;
}

inline double next_uniform(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

/// Random softmax policy with logits uniform on [-spread, spread].
inline SoftmaxPolicy random_policy(std::mt19937_64& rng, PolicyMode mode, int n_states,
                                   int n_actions, double spread = 2.0) {
    SoftmaxPolicy p = SoftmaxPolicy::uniform(mode, n_states, n_actions);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i)
        p.theta[i] = spread * (2.0 * next_uniform(rng) - 1.0);
    return p;
}

}  // namespace pgop::testing
