#pragma once

#include "pgop/mdp.hpp"
#include "pgop/operators.hpp"
#include "pgop/policy.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pgop {

/**
 * Global lower bound on J(pi) anchored at mu, in its summed form
 *   J(mu) + sum_s d(s) sum_a Q(s,a) mu(a|s) log(pi(a|s) / mu(a|s))
 * with the unnormalized occupancy d of mu. Valid for every pi with positive
 * probability on mu's rewarded support; returns -inf where that fails.
 * First-order tight at pi = mu.
 */
inline double operator_lower_bound(const PolicyEval& eval_mu, const MatrixXd& mu,
                                   const MatrixXd& pi) {
    if (mu.rows() != pi.rows() || mu.cols() != pi.cols() || eval_mu.q.rows() != mu.rows() ||
        eval_mu.q.cols() != mu.cols())
        throw std::invalid_argument("operator_lower_bound: shape mismatch");
    double bound = eval_mu.j;
    for (Eigen::Index s = 0; s < mu.rows(); ++s) {
        if (eval_mu.occupancy[s] == 0.0) continue;
        for (Eigen::Index a = 0; a < mu.cols(); ++a) {
            double coef = eval_mu.occupancy[s] * eval_mu.q(s, a) * mu(s, a);
            if (coef == 0.0) continue;
            if (pi(s, a) <= 0.0) return -std::numeric_limits<double>::infinity();
            bound += coef * (std::log(pi(s, a)) - std::log(mu(s, a)));
        }
    }
    return bound;
}

struct KlFormBound {
    double value = 0.0;       // J(mu) + expected_v * (d_mu - d_pi)
    double d_mu = 0.0;        // weighted KL from the improved target to mu
    double d_pi = 0.0;        // weighted KL from the improved target to pi
    double expected_v = 0.0;  // sum_s d(s) V(s), the weight normalizer
};

/**
 * The same bound written through the improvement operator:
 *   J(mu) + E_mu[V] ( D_mu(I mu || mu) - D_mu(I mu || pi) ),
 * where D_mu weights per-state KLs by d(s)V(s)/E_mu[V]. Needs positive Q on
 * improved states to form I mu. Agrees with operator_lower_bound to
 * floating-point accuracy.
 */
inline KlFormBound kl_form_lower_bound(const PolicyEval& eval_mu, const MatrixXd& mu,
                                       const MatrixXd& pi) {
    ImprovedDistribution target = improve(eval_mu, mu, ImprovementSpec::op_reinforce());
    KlFormBound out;
    out.expected_v = target.weight_normalizer;
    for (Eigen::Index s = 0; s < mu.rows(); ++s) {
        double w = target.state_weights[s];
        if (w == 0.0 || target.untouched[s]) continue;
        out.d_mu += w * kl_divergence(target.conditionals.row(s).transpose(), mu.row(s).transpose());
        out.d_pi += w * kl_divergence(target.conditionals.row(s).transpose(), pi.row(s).transpose());
    }
    out.value = eval_mu.j + out.expected_v * (out.d_mu - out.d_pi);
    return out;
}

/**
 * Linear (conservative-policy-iteration style) surrogate
 *   J(mu) + sum_s d(s) sum_a Q(s,a) (pi(a|s) - mu(a|s)).
 * First-order tight at pi = mu but NOT a lower bound away from it.
 */
inline double cpi_surrogate(const PolicyEval& eval_mu, const MatrixXd& mu, const MatrixXd& pi) {
    if (mu.rows() != pi.rows() || mu.cols() != pi.cols())
        throw std::invalid_argument("cpi_surrogate: shape mismatch");
    double value = eval_mu.j;
    for (Eigen::Index s = 0; s < mu.rows(); ++s)
        for (Eigen::Index a = 0; a < mu.cols(); ++a)
            value += eval_mu.occupancy[s] * eval_mu.q(s, a) * (pi(s, a) - mu(s, a));
    return value;
}

// ---------------------------------------------------------------------------
// One-dimensional landscape study
// ---------------------------------------------------------------------------

/// Shared action distribution [0.1, 0.8 t, 0.8 (1 - t), 0.1] over
/// (down, left, up, right); zeros clamped to kProbFloor before any log.
inline VectorXd landscape_action_probs(double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("landscape_action_probs: t must lie in [0, 1]");
    VectorXd p(4);
    p << 0.1, 0.8 * t, 0.8 * (1.0 - t), 0.1;
    for (int a = 0; a < 4; ++a) p[a] = std::max(p[a], kProbFloor);
    return p;
}

struct LandscapeRow {
    double anchor_t = 0.0;
    double t = 0.0;
    double j = 0.0;
    double op_bound = 0.0;
    double cpi = 0.0;
};

/**
 * Evaluates J, the operator lower bound, and the linear surrogate along the
 * one-parameter family of shared policies, once per anchor. Requires a
 * four-action MDP.
 */
inline std::vector<LandscapeRow> bound_landscape(const TabularMdp& mdp,
                                                 const std::vector<double>& ts,
                                                 const std::vector<double>& anchors) {
    if (mdp.n_actions != 4)
        throw std::invalid_argument("bound_landscape: the policy family needs four actions");

    auto matrix_at = [&](double t) {
        VectorXd p = landscape_action_probs(t);
        MatrixXd pi(mdp.n_states, 4);
        for (int s = 0; s < mdp.n_states; ++s) pi.row(s) = p.transpose();
        return pi;
    };

    std::vector<MatrixXd> grid;
    std::vector<double> j_grid;
    grid.reserve(ts.size());
    for (double t : ts) {
        grid.push_back(matrix_at(t));
        j_grid.push_back(evaluate_policy(mdp, grid.back()).j);
    }

    std::vector<LandscapeRow> rows;
    rows.reserve(ts.size() * anchors.size());
    for (double anchor : anchors) {
        MatrixXd mu = matrix_at(anchor);
        PolicyEval eval_mu = evaluate_policy(mdp, mu);
        for (std::size_t i = 0; i < ts.size(); ++i) {
            LandscapeRow row;
            row.anchor_t = anchor;
            row.t = ts[i];
            row.j = j_grid[i];
            row.op_bound = operator_lower_bound(eval_mu, mu, grid[i]);
            row.cpi = cpi_surrogate(eval_mu, mu, grid[i]);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace pgop
