#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pgop {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kRowSumTol = 1e-12;
inline constexpr double kPolicyRowTol = 1e-9;

/**
 * Finite MDP with dense transitions.
 *
 * transition[a](s, s') is the probability of landing in s' after taking
 * action a in state s. Rewards depend on (state, action) only and must be
 * nonnegative. Terminal states self-loop with probability one and pay zero
 * reward, so discounted sums stay finite and occupancies keep their
 * geometric total mass.
 */
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.0;
    std::vector<MatrixXd> transition;  // one S x S matrix per action
    MatrixXd reward;                   // S x A
    VectorXd start;                    // S, sums to one
    std::vector<std::uint8_t> terminal;  // S, 1 marks absorbing states

    void validate() const;
};

inline void TabularMdp::validate() const {
    if (n_states < 1 || n_actions < 1)
        throw std::invalid_argument("mdp: need at least one state and one action");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("mdp: gamma must lie in [0, 1)");
    if (static_cast<int>(transition.size()) != n_actions)
        throw std::invalid_argument("mdp: transition must hold one matrix per action");
    if (reward.rows() != n_states || reward.cols() != n_actions)
        throw std::invalid_argument("mdp: reward must be n_states x n_actions");
    if (start.size() != n_states)
        throw std::invalid_argument("mdp: start distribution has wrong length");
    if (static_cast<int>(terminal.size()) != n_states)
        throw std::invalid_argument("mdp: terminal mask has wrong length");

    for (int a = 0; a < n_actions; ++a) {
        const MatrixXd& p = transition[a];
        if (p.rows() != n_states || p.cols() != n_states)
            throw std::invalid_argument("mdp: transition matrix " + std::to_string(a) +
                                        " must be n_states x n_states");
        for (int s = 0; s < n_states; ++s) {
            double sum = 0.0;
            for (int t = 0; t < n_states; ++t) {
                double v = p(s, t);
                if (!std::isfinite(v) || v < 0.0)
                    throw std::invalid_argument("mdp: transition entry (s=" + std::to_string(s) +
                                                ", a=" + std::to_string(a) + ", s'=" +
                                                std::to_string(t) + ") is negative or not finite");
                sum += v;
            }
            if (std::abs(sum - 1.0) > kRowSumTol)
                throw std::invalid_argument("mdp: transition row (s=" + std::to_string(s) +
                                            ", a=" + std::to_string(a) + ") sums to " +
                                            std::to_string(sum));
        }
    }
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            double r = reward(s, a);
            if (!std::isfinite(r) || r < 0.0)
                throw std::invalid_argument("mdp: reward (s=" + std::to_string(s) + ", a=" +
                                            std::to_string(a) + ") must be finite and nonnegative");
        }

    double d0 = 0.0;
    for (int s = 0; s < n_states; ++s) {
        if (!(start[s] >= 0.0) || !std::isfinite(start[s]))
            throw std::invalid_argument("mdp: start probability of state " + std::to_string(s) +
                                        " is negative or not finite");
        d0 += start[s];
    }
    if (std::abs(d0 - 1.0) > kPolicyRowTol)
        throw std::invalid_argument("mdp: start distribution sums to " + std::to_string(d0));

    for (int s = 0; s < n_states; ++s) {
        if (!terminal[s]) continue;
        for (int a = 0; a < n_actions; ++a) {
            if (std::abs(transition[a](s, s) - 1.0) > kRowSumTol)
                throw std::invalid_argument("mdp: terminal state " + std::to_string(s) +
                                            " must self-loop under every action");
            if (reward(s, a) != 0.0)
                throw std::invalid_argument("mdp: terminal state " + std::to_string(s) +
                                            " must pay zero reward");
        }
    }
}

/// Checks that pi is an S x A matrix whose rows are probability distributions.
inline void check_policy_matrix(const TabularMdp& mdp, const MatrixXd& pi) {
    if (pi.rows() != mdp.n_states || pi.cols() != mdp.n_actions)
        throw std::invalid_argument("policy matrix must be n_states x n_actions");
    for (int s = 0; s < mdp.n_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) {
            double v = pi(s, a);
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument("policy row " + std::to_string(s) +
                                            " has a negative or non-finite entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kPolicyRowTol)
            throw std::invalid_argument("policy row " + std::to_string(s) + " sums to " +
                                        std::to_string(sum));
    }
}

/// State-to-state transition matrix induced by a policy.
inline MatrixXd policy_transition(const TabularMdp& mdp, const MatrixXd& pi) {
    MatrixXd p = MatrixXd::Zero(mdp.n_states, mdp.n_states);
    for (int a = 0; a < mdp.n_actions; ++a)
        p.noalias() += pi.col(a).asDiagonal() * mdp.transition[a];
    return p;
}

/// Expected one-step reward per state under a policy.
inline VectorXd policy_reward(const TabularMdp& mdp, const MatrixXd& pi) {
    return (pi.array() * mdp.reward.array()).rowwise().sum();
}

struct PolicyEval {
    VectorXd v;          // state values
    MatrixXd q;          // state-action values
    VectorXd occupancy;  // discounted state visits; sums to 1/(1-gamma), not renormalized
    double j = 0.0;      // expected discounted return from the start distribution
};

/**
 * Exact policy evaluation via dense LU solves of the Bellman systems
 *   (I - gamma P_pi) v = r_pi        and        (I - gamma P_pi^T) d = d0.
 * The occupancy keeps its raw geometric mass; callers that need a
 * distribution divide by its sum explicitly.
 */
inline PolicyEval evaluate_policy(const TabularMdp& mdp, const MatrixXd& pi) {
    check_policy_matrix(mdp, pi);
    const int n = mdp.n_states;
    MatrixXd p_pi = policy_transition(mdp, pi);
    MatrixXd system = MatrixXd::Identity(n, n) - mdp.gamma * p_pi;
    Eigen::PartialPivLU<MatrixXd> lu(system);

    PolicyEval out;
    out.v = lu.solve(policy_reward(mdp, pi));
    out.q = mdp.reward;
    for (int a = 0; a < mdp.n_actions; ++a)
        out.q.col(a) += mdp.gamma * (mdp.transition[a] * out.v);
    out.occupancy = Eigen::PartialPivLU<MatrixXd>(system.transpose()).solve(mdp.start);
    out.j = mdp.start.dot(out.v);
    return out;
}

struct ValueIterationResult {
    VectorXd v;
    std::vector<int> greedy;  // lowest-index argmax per state
    int iterations = 0;
};

/**
 * Value iteration to a sup-norm Bellman residual below `tolerance`.
 * Ties in the greedy policy break toward the lowest action index.
 */
inline ValueIterationResult value_iteration(const TabularMdp& mdp, double tolerance = 1e-12) {
    if (!(tolerance > 0.0)) throw std::invalid_argument("value_iteration: tolerance must be positive");
    const int n = mdp.n_states, m = mdp.n_actions;
    VectorXd v = VectorXd::Zero(n);
    VectorXd next(n);
    int iter = 0;
    const int max_iter = 10'000'000;
    for (;; ++iter) {
        if (iter >= max_iter)
            throw std::runtime_error("value_iteration: failed to reach tolerance");
        double residual = 0.0;
        for (int s = 0; s < n; ++s) {
            double best = -1.0;
            for (int a = 0; a < m; ++a) {
                double q = mdp.reward(s, a) + mdp.gamma * mdp.transition[a].row(s).dot(v);
                if (q > best) best = q;
            }
            next[s] = best;
            residual = std::max(residual, std::abs(best - v[s]));
        }
        v = next;
        if (residual <= tolerance) break;
    }

    ValueIterationResult out;
    out.v = v;
    out.iterations = iter + 1;
    out.greedy.resize(n);
    for (int s = 0; s < n; ++s) {
        int best_a = 0;
        double best = -1.0;
        for (int a = 0; a < m; ++a) {
            double q = mdp.reward(s, a) + mdp.gamma * mdp.transition[a].row(s).dot(v);
            if (q > best) {
                best = q;
                best_a = a;
            }
        }
        out.greedy[s] = best_a;
    }
    return out;
}

/// Deterministic policy matrix from one action index per state.
inline MatrixXd one_hot_policy(const TabularMdp& mdp, const std::vector<int>& actions) {
    if (static_cast<int>(actions.size()) != mdp.n_states)
        throw std::invalid_argument("one_hot_policy: need one action per state");
    MatrixXd pi = MatrixXd::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        if (actions[s] < 0 || actions[s] >= mdp.n_actions)
            throw std::invalid_argument("one_hot_policy: action out of range for state " +
                                        std::to_string(s));
        pi(s, actions[s]) = 1.0;
    }
    return pi;
}

// ---------------------------------------------------------------------------
// Environment builders
// ---------------------------------------------------------------------------

enum FourRoomAction : int { kDown = 0, kLeft = 1, kUp = 2, kRight = 3 };

/**
 * Four-room gridworld: an 11x11 grid split into four rooms by a cross of
 * walls with four symmetric doorways. Moves are deterministic; stepping into
 * a wall or off the grid leaves the state unchanged. Entering the goal cell
 * (upper right) pays +1 and the goal is absorbing. The start distribution is
 * a point mass on the lower-left corner.
 */
struct FourRoom {
    TabularMdp mdp;
    int width = 11;
    int height = 11;
    std::vector<std::pair<int, int>> cell_of_state;  // (x, y), y up
    std::vector<std::vector<int>> state_of_cell;     // [x][y], -1 on walls
    int start_state = -1;
    int goal_state = -1;

    bool wall(int x, int y) const {
        if (x != 5 && y != 5) return false;
        for (auto [dx, dy] : {std::pair{5, 2}, std::pair{5, 8}, std::pair{2, 5}, std::pair{8, 5}})
            if (x == dx && y == dy) return false;
        return true;
    }
};

inline FourRoom build_four_room(double gamma = 0.99) {
    FourRoom env;
    const int w = env.width, h = env.height;
    env.state_of_cell.assign(w, std::vector<int>(h, -1));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (env.wall(x, y)) continue;
            env.state_of_cell[x][y] = static_cast<int>(env.cell_of_state.size());
            env.cell_of_state.emplace_back(x, y);
        }
    env.start_state = env.state_of_cell[0][0];
    env.goal_state = env.state_of_cell[w - 1][h - 1];

    const int n = static_cast<int>(env.cell_of_state.size());
    const int m = 4;
    TabularMdp& mdp = env.mdp;
    mdp.n_states = n;
    mdp.n_actions = m;
    mdp.gamma = gamma;
    mdp.transition.assign(m, MatrixXd::Zero(n, n));
    mdp.reward = MatrixXd::Zero(n, m);
    mdp.start = VectorXd::Zero(n);
    mdp.terminal.assign(n, 0);
    mdp.start[env.start_state] = 1.0;
    mdp.terminal[env.goal_state] = 1;

    const int dx[4] = {0, -1, 0, 1};
    const int dy[4] = {-1, 0, 1, 0};
    for (int s = 0; s < n; ++s) {
        auto [x, y] = env.cell_of_state[s];
        for (int a = 0; a < m; ++a) {
            if (s == env.goal_state) {
                mdp.transition[a](s, s) = 1.0;
                continue;
            }
            int tx = x + dx[a], ty = y + dy[a];
            int next = s;
            if (tx >= 0 && tx < w && ty >= 0 && ty < h && !env.wall(tx, ty))
                next = env.state_of_cell[tx][ty];
            mdp.transition[a](s, next) = 1.0;
            if (next == env.goal_state) mdp.reward(s, a) = 1.0;
        }
    }
    mdp.validate();
    return env;
}

namespace detail {

// (0, 1] uniform built directly from the engine's bits; std distributions are
// implementation-defined, this keeps generated instances stable everywhere.
inline double next_uniform(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

inline double next_exponential(std::mt19937_64& rng) { return -std::log(next_uniform(rng)); }

}  // namespace detail

/**
 * Random dense MDP: transition rows and the start distribution are
 * Dirichlet(1,..,1) draws, rewards are uniform on (0, 1] with an exact
 * `reward_sparsity` fraction of entries forced to zero. Fully determined by
 * the seed. No terminal states.
 */
inline TabularMdp build_random_mdp(int n_states, int n_actions, double reward_sparsity,
                                   std::uint64_t seed, double gamma = 0.9) {
    if (n_states < 1 || n_actions < 1)
        throw std::invalid_argument("build_random_mdp: need at least one state and action");
    if (!(reward_sparsity >= 0.0 && reward_sparsity <= 1.0))
        throw std::invalid_argument("build_random_mdp: reward_sparsity must lie in [0, 1]");

    std::mt19937_64 rng(seed);
    TabularMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.transition.assign(n_actions, MatrixXd::Zero(n_states, n_states));
    mdp.reward = MatrixXd::Zero(n_states, n_actions);
    mdp.start = VectorXd::Zero(n_states);
    mdp.terminal.assign(n_states, 0);

    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s) {
            double sum = 0.0;
            for (int t = 0; t < n_states; ++t) {
                double g = detail::next_exponential(rng);
                mdp.transition[a](s, t) = g;
                sum += g;
            }
            mdp.transition[a].row(s) /= sum;
        }

    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = detail::next_uniform(rng);
    const int cells = n_states * n_actions;
    const int n_zero = static_cast<int>(std::llround(reward_sparsity * cells));
    std::vector<int> order(cells);
    for (int i = 0; i < cells; ++i) order[i] = i;
    for (int i = 0; i < n_zero; ++i) {
        int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(cells - i));
        std::swap(order[i], order[j]);
        mdp.reward(order[i] / n_actions, order[i] % n_actions) = 0.0;
    }

    double sum = 0.0;
    for (int s = 0; s < n_states; ++s) {
        mdp.start[s] = detail::next_exponential(rng);
        sum += mdp.start[s];
    }
    mdp.start /= sum;

    mdp.validate();
    return mdp;
}

}  // namespace pgop
