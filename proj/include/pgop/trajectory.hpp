#pragma once

#include "pgop/mdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgop {

inline constexpr std::int64_t kMaxTrajectories = 10'000'000;

/**
 * One enumerated trajectory. `states` has one more entry than `actions`;
 * the final state is the landing of the last step. Branches stop early when
 * they reach a terminal state, whose tail is reward-free and deterministic.
 */
struct Trajectory {
    std::vector<int> states;
    std::vector<int> actions;
    std::vector<double> trans;  // trans[t] = P(states[t+1] | states[t], actions[t])
    double probability = 0.0;   // under the ensemble's build policy
    double ret = 0.0;           // discounted return
};

struct TrajectoryEnsemble {
    int horizon = 0;
    double gamma = 0.0;
    MatrixXd build_policy;  // the policy the ensemble was enumerated under
    std::vector<Trajectory> trajectories;
    double j = 0.0;  // sum of probability * return
};

namespace detail {

struct EnumerationContext {
    const TabularMdp* mdp;
    const MatrixXd* pi;
    int horizon;
    TrajectoryEnsemble* out;
    Trajectory current;
};

inline void enumerate_from(EnumerationContext& ctx, int s, int depth, double prob, double ret) {
    const TabularMdp& mdp = *ctx.mdp;
    if (depth == ctx.horizon || mdp.terminal[s]) {
        if (static_cast<std::int64_t>(ctx.out->trajectories.size()) >= kMaxTrajectories)
            throw std::runtime_error("enumerate_trajectories: more than " +
                                     std::to_string(kMaxTrajectories) + " trajectories");
        Trajectory t = ctx.current;
        t.probability = prob;
        t.ret = ret;
        ctx.out->trajectories.push_back(std::move(t));
        ctx.out->j += prob * ret;
        return;
    }
    const double discount = std::pow(mdp.gamma, depth);
    for (int a = 0; a < mdp.n_actions; ++a) {
        double pa = (*ctx.pi)(s, a);
        if (pa == 0.0) continue;  // exact zeros prune; softmax policies never hit this
        for (int next = 0; next < mdp.n_states; ++next) {
            double pt = mdp.transition[a](s, next);
            if (pt == 0.0) continue;
            ctx.current.actions.push_back(a);
            ctx.current.trans.push_back(pt);
            ctx.current.states.push_back(next);
            enumerate_from(ctx, next, depth + 1, prob * pa * pt,
                           ret + discount * mdp.reward(s, a));
            ctx.current.actions.pop_back();
            ctx.current.trans.pop_back();
            ctx.current.states.pop_back();
        }
    }
}

}  // namespace detail

/**
 * Exhaustively enumerates every trajectory of up to `horizon` steps with
 * positive probability under `pi`, in lexicographic (action, landing-state)
 * order. Throws once the count passes kMaxTrajectories.
 */
inline TrajectoryEnsemble enumerate_trajectories(const TabularMdp& mdp, const MatrixXd& pi,
                                                 int horizon) {
    if (horizon < 0) throw std::invalid_argument("enumerate_trajectories: negative horizon");
    check_policy_matrix(mdp, pi);
    TrajectoryEnsemble out;
    out.horizon = horizon;
    out.gamma = mdp.gamma;
    out.build_policy = pi;
    detail::EnumerationContext ctx{&mdp, &pi, horizon, &out, {}};
    for (int s = 0; s < mdp.n_states; ++s) {
        if (mdp.start[s] == 0.0) continue;
        ctx.current.states.assign(1, s);
        ctx.current.actions.clear();
        ctx.current.trans.clear();
        detail::enumerate_from(ctx, s, 0, mdp.start[s], 0.0);
    }
    return out;
}

/// Probability of trajectory i under another policy sharing the build support.
inline double probability_under(const TrajectoryEnsemble& ens, const TabularMdp& mdp,
                                std::size_t i, const MatrixXd& pi) {
    const Trajectory& t = ens.trajectories.at(i);
    double p = mdp.start[t.states[0]];
    for (std::size_t k = 0; k < t.actions.size(); ++k)
        p *= pi(t.states[k], t.actions[k]) * t.trans[k];
    return p;
}

/// Probabilities of every enumerated trajectory under `pi`. These sum to one
/// exactly when the ensemble's build policy had full support.
inline VectorXd probabilities_under(const TrajectoryEnsemble& ens, const TabularMdp& mdp,
                                    const MatrixXd& pi) {
    check_policy_matrix(mdp, pi);
    VectorXd p(ens.trajectories.size());
    for (std::size_t i = 0; i < ens.trajectories.size(); ++i)
        p[i] = probability_under(ens, mdp, i, pi);
    return p;
}

/// Probability of the length-(h+1) prefix (s_0, a_0, .., s_h, a_h) of
/// trajectory i under `pi`: the mass of all trajectories extending it.
inline double prefix_probability(const TrajectoryEnsemble& ens, const TabularMdp& mdp,
                                 std::size_t i, int h, const MatrixXd& pi) {
    const Trajectory& t = ens.trajectories.at(i);
    if (h < 0 || h >= static_cast<int>(t.actions.size()))
        throw std::invalid_argument("prefix_probability: prefix length out of range");
    double p = mdp.start[t.states[0]];
    for (int k = 0; k <= h; ++k) {
        p *= pi(t.states[k], t.actions[k]);
        if (k < h) p *= t.trans[k];
    }
    return p;
}

/// Expected return of the ensemble under an arbitrary weight vector.
inline double ensemble_return(const TrajectoryEnsemble& ens, const VectorXd& weights) {
    if (static_cast<std::size_t>(weights.size()) != ens.trajectories.size())
        throw std::invalid_argument("ensemble_return: weight vector length mismatch");
    double j = 0.0;
    for (std::size_t i = 0; i < ens.trajectories.size(); ++i)
        j += weights[i] * ens.trajectories[i].ret;
    return j;
}

/**
 * Return-weighted improvement: weight(tau) = R(tau) pi(tau) / J(pi).
 * Requires nonnegative returns (guaranteed by the reward contract) and
 * strictly positive J. Zero-return trajectories get weight zero.
 */
inline VectorXd improve_trajectory(const TrajectoryEnsemble& ens) {
    if (!(ens.j > 0.0))
        throw std::invalid_argument("improve_trajectory: J must be positive, got " +
                                    std::to_string(ens.j));
    VectorXd w(ens.trajectories.size());
    for (std::size_t i = 0; i < ens.trajectories.size(); ++i)
        w[i] = ens.trajectories[i].probability * ens.trajectories[i].ret / ens.j;
    return w;
}

/**
 * Transformed improvement: weight(tau) = f(R(tau)) pi(tau) / E[f(R)].
 * `f` must be increasing and strictly positive on the observed returns;
 * nonpositive or non-finite outputs are rejected.
 */
inline VectorXd improve_trajectory_transformed(const TrajectoryEnsemble& ens,
                                               const std::function<double(double)>& f) {
    VectorXd w(ens.trajectories.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < ens.trajectories.size(); ++i) {
        double v = f(ens.trajectories[i].ret);
        if (!std::isfinite(v) || v <= 0.0)
            throw std::invalid_argument(
                "improve_trajectory_transformed: transform must be strictly positive, got " +
                std::to_string(v) + " at return " + std::to_string(ens.trajectories[i].ret));
        w[i] = ens.trajectories[i].probability * v;
        norm += w[i];
    }
    return w / norm;
}

/**
 * KL divergence between weight vectors on the enumerated outcome space,
 * with the 0 log 0 = 0 convention. `p` must be a distribution; `q` may be a
 * sub-probability vector (a policy restricted to the build support) but must
 * dominate p.
 */
inline double kl_trajectories(const VectorXd& p, const VectorXd& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_trajectories: length mismatch");
    double sum_p = 0.0, kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0)
            throw std::invalid_argument("kl_trajectories: negative weight");
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0)
            throw std::invalid_argument("kl_trajectories: q vanishes inside the support of p");
        sum_p += p[i];
        kl += p[i] * std::log(p[i] / q[i]);
    }
    if (std::abs(sum_p - 1.0) > 1e-6)
        throw std::invalid_argument("kl_trajectories: p sums to " + std::to_string(sum_p));
    return kl;
}

/**
 * Trajectory-formulation lower bound on J(pi) anchored at the build policy mu:
 *   J(pi) >= J(mu) (1 - KL(Rmu || pi) + KL(Rmu || mu)).
 * `pi_probs` are trajectory probabilities of the comparison policy on the
 * same ensemble.
 */
inline double lower_bound_trajectory(const TrajectoryEnsemble& ens, const VectorXd& pi_probs) {
    VectorXd rmu = improve_trajectory(ens);
    VectorXd mu(ens.trajectories.size());
    for (std::size_t i = 0; i < ens.trajectories.size(); ++i)
        mu[i] = ens.trajectories[i].probability;
    return ens.j * (1.0 - kl_trajectories(rmu, pi_probs) + kl_trajectories(rmu, mu));
}

/**
 * Prefix-probability lower bound
 *   J_mu(pi) = sum_h gamma^h E_mu[ r(s_h, a_h) (1 + log(pi_h / mu_h)) ] <= J(pi),
 * linear in log-probabilities of pi. Environment factors cancel inside the
 * prefix ratio, leaving per-step action-probability ratios. Returns -inf when
 * pi gives zero probability to a rewarded prefix of mu.
 */
inline double j_mu_bound(const TrajectoryEnsemble& ens, const TabularMdp& mdp,
                         const MatrixXd& pi) {
    check_policy_matrix(mdp, pi);
    double total = 0.0;
    for (const Trajectory& t : ens.trajectories) {
        if (t.probability == 0.0) continue;
        double log_ratio = 0.0;  // log of pi_h / mu_h, environment factors cancelled
        bool dead = false;
        double discount = 1.0;
        for (std::size_t h = 0; h < t.actions.size(); ++h) {
            const int s = t.states[h], a = t.actions[h];
            if (!dead) {
                double num = pi(s, a);
                if (num == 0.0)
                    dead = true;
                else
                    log_ratio += std::log(num) - std::log(ens.build_policy(s, a));
            }
            double r = mdp.reward(s, a);
            if (r > 0.0) {
                if (dead) return -std::numeric_limits<double>::infinity();
                total += t.probability * discount * r * (1.0 + log_ratio);
            }
            discount *= mdp.gamma;
        }
    }
    return total;
}

}  // namespace pgop
