#pragma once

#include "pgop/mdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace pgop {

inline constexpr double kProbFloor = 1e-12;  // clamp applied to probabilities before logs

enum class PolicyMode { kTabular, kShared };

/**
 * Softmax policy over a finite state-action space.
 *
 * Tabular mode keeps one logit per (state, action); Shared mode keeps a
 * single logit per action reused by every state, the coarsest function
 * approximation. Probabilities are strictly positive in both modes.
 */
struct SoftmaxPolicy {
    PolicyMode mode = PolicyMode::kTabular;
    int n_states = 0;
    int n_actions = 0;
    VectorXd theta;  // length n_states * n_actions (tabular) or n_actions (shared)

    int param_count() const {
        return mode == PolicyMode::kTabular ? n_states * n_actions : n_actions;
    }

    void validate() const {
        if (n_states < 1 || n_actions < 1)
            throw std::invalid_argument("policy: need at least one state and one action");
        if (theta.size() != param_count())
            throw std::invalid_argument("policy: parameter vector has length " +
                                        std::to_string(theta.size()) + ", expected " +
                                        std::to_string(param_count()));
        for (Eigen::Index i = 0; i < theta.size(); ++i)
            if (!std::isfinite(theta[i]))
                throw std::invalid_argument("policy: parameter " + std::to_string(i) +
                                            " is not finite");
    }

    VectorXd action_probs(int s) const {
        if (s < 0 || s >= n_states) throw std::invalid_argument("policy: state out of range");
        const int base = mode == PolicyMode::kTabular ? s * n_actions : 0;
        VectorXd logits = theta.segment(base, n_actions);
        double mx = logits.maxCoeff();
        VectorXd p = (logits.array() - mx).exp();
        return p / p.sum();
    }

    MatrixXd prob_matrix() const {
        MatrixXd pi(n_states, n_actions);
        if (mode == PolicyMode::kShared) {
            VectorXd p = action_probs(0);
            for (int s = 0; s < n_states; ++s) pi.row(s) = p.transpose();
        } else {
            for (int s = 0; s < n_states; ++s) pi.row(s) = action_probs(s).transpose();
        }
        return pi;
    }

    /// Gradient of log pi(a|s) in the policy parameters: the softmax score
    /// (indicator minus probabilities) placed in the right block.
    VectorXd log_prob_grad(int s, int a) const {
        if (a < 0 || a >= n_actions) throw std::invalid_argument("policy: action out of range");
        VectorXd probs = action_probs(s);
        VectorXd g = VectorXd::Zero(param_count());
        const int base = mode == PolicyMode::kTabular ? s * n_actions : 0;
        g.segment(base, n_actions) = -probs;
        g[base + a] += 1.0;
        return g;
    }

    static SoftmaxPolicy uniform(PolicyMode mode, int n_states, int n_actions) {
        SoftmaxPolicy p;
        p.mode = mode;
        p.n_states = n_states;
        p.n_actions = n_actions;
        p.theta = VectorXd::Zero(mode == PolicyMode::kTabular ? n_states * n_actions : n_actions);
        p.validate();
        return p;
    }

    /// Tabular policy whose probabilities reproduce the given rows; zeros are
    /// clamped to kProbFloor before the log.
    static SoftmaxPolicy from_prob_matrix(const MatrixXd& probs) {
        SoftmaxPolicy p;
        p.mode = PolicyMode::kTabular;
        p.n_states = static_cast<int>(probs.rows());
        p.n_actions = static_cast<int>(probs.cols());
        p.theta.resize(p.n_states * p.n_actions);
        for (int s = 0; s < p.n_states; ++s)
            for (int a = 0; a < p.n_actions; ++a)
                p.theta[s * p.n_actions + a] = std::log(std::max(probs(s, a), kProbFloor));
        p.validate();
        return p;
    }

    static SoftmaxPolicy from_prob_vector(const VectorXd& probs, int n_states) {
        SoftmaxPolicy p;
        p.mode = PolicyMode::kShared;
        p.n_states = n_states;
        p.n_actions = static_cast<int>(probs.size());
        p.theta.resize(p.n_actions);
        for (int a = 0; a < p.n_actions; ++a)
            p.theta[a] = std::log(std::max(probs[a], kProbFloor));
        p.validate();
        return p;
    }
};

/**
 * Exact policy gradient from the policy gradient theorem,
 *   grad J = sum_s d(s) sum_a pi(a|s) Q(s,a) grad log pi(a|s),
 * with the unnormalized discounted occupancy d. The softmax score collapses
 * the inner sum to pi(a|s) (Q(s,a) - V(s)) per coordinate.
 */
inline VectorXd policy_gradient(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
    policy.validate();
    if (policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions)
        throw std::invalid_argument("policy_gradient: policy shape does not match the MDP");
    MatrixXd pi = policy.prob_matrix();
    PolicyEval eval = evaluate_policy(mdp, pi);

    VectorXd g = VectorXd::Zero(policy.param_count());
    for (int s = 0; s < mdp.n_states; ++s) {
        const int base = policy.mode == PolicyMode::kTabular ? s * mdp.n_actions : 0;
        for (int a = 0; a < mdp.n_actions; ++a)
            g[base + a] += eval.occupancy[s] * pi(s, a) * (eval.q(s, a) - eval.v[s]);
    }
    return g;
}

/// Largest per-state total-variation distance between two policy matrices.
inline double total_variation(const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("total_variation: shape mismatch");
    double worst = 0.0;
    for (Eigen::Index s = 0; s < a.rows(); ++s)
        worst = std::max(worst, 0.5 * (a.row(s) - b.row(s)).cwiseAbs().sum());
    return worst;
}

}  // namespace pgop
