#pragma once

#include "pgop/mdp.hpp"
#include "pgop/policy.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgop {

inline constexpr double kValueFloor = 1e-12;  // states at or below keep their conditional

// ---------------------------------------------------------------------------
// Improvement operators
// ---------------------------------------------------------------------------

enum class ImprovementKind { kOpReinforce, kPolynomial, kPpoExp, kMpoExp };

/**
 * Improvement operator selector.
 *  - OpReinforce: conditionals Q(s,a) pi(a|s) / V(s), state weights d(s) V(s).
 *  - Polynomial(inv_alpha): conditionals pi Q^{inv_alpha}, weights d(s) Z(s)
 *    with Z(s) = sum_a pi(a|s) Q(s,a)^{inv_alpha}; inv_alpha = 1 recovers
 *    OpReinforce, large inv_alpha approaches greedification.
 *  - PpoExp(beta): conditionals proportional to exp(beta Q), weights d(s);
 *    note the source policy does not appear in the conditional.
 *  - MpoExp(beta): conditionals proportional to pi exp(beta Q), weights d(s).
 */
struct ImprovementSpec {
    ImprovementKind kind = ImprovementKind::kOpReinforce;
    double inv_alpha = 1.0;
    double beta = 1.0;

    static ImprovementSpec op_reinforce() { return {ImprovementKind::kOpReinforce, 1.0, 1.0}; }
    static ImprovementSpec polynomial(double inv_alpha) {
        return {ImprovementKind::kPolynomial, inv_alpha, 1.0};
    }
    static ImprovementSpec ppo_exp(double beta) { return {ImprovementKind::kPpoExp, 1.0, beta}; }
    static ImprovementSpec mpo_exp(double beta) { return {ImprovementKind::kMpoExp, 1.0, beta}; }

    void validate() const {
        if (kind == ImprovementKind::kPolynomial && !(inv_alpha > 0.0))
            throw std::invalid_argument("improvement: inv_alpha must be positive");
        if ((kind == ImprovementKind::kPpoExp || kind == ImprovementKind::kMpoExp) &&
            !(beta > 0.0 && std::isfinite(beta)))
            throw std::invalid_argument("improvement: beta must be positive and finite");
    }
};

/**
 * Output of an improvement operator: a weighted family of per-state action
 * distributions. `state_weights` is normalized to sum one;
 * `weight_normalizer` keeps the raw total (e.g. sum_s d(s) V(s) for
 * OpReinforce) so callers can undo the normalization. States whose value
 * sits at or below kValueFloor are flagged `untouched`: they carry the
 * source policy's conditional and, for the V/Z-weighted operators, zero
 * weight. `scores` carries the Q matrix the improvement was computed from.
 */
struct ImprovedDistribution {
    VectorXd state_weights;
    MatrixXd conditionals;
    std::vector<std::uint8_t> untouched;
    double weight_normalizer = 0.0;
    MatrixXd scores;
    ImprovementSpec spec;
};

inline ImprovedDistribution improve(const PolicyEval& eval, const MatrixXd& pi,
                                    const ImprovementSpec& spec) {
    spec.validate();
    const int n = static_cast<int>(pi.rows()), m = static_cast<int>(pi.cols());
    if (eval.v.size() != n || eval.q.rows() != n || eval.q.cols() != m ||
        eval.occupancy.size() != n)
        throw std::invalid_argument("improve: evaluation does not match the policy shape");

    ImprovedDistribution out;
    out.spec = spec;
    out.scores = eval.q;
    out.state_weights = VectorXd::Zero(n);
    out.conditionals = MatrixXd::Zero(n, m);
    out.untouched.assign(n, 0);

    const bool value_weighted =
        spec.kind == ImprovementKind::kOpReinforce || spec.kind == ImprovementKind::kPolynomial;
    const double inv_alpha = spec.kind == ImprovementKind::kOpReinforce ? 1.0 : spec.inv_alpha;

    VectorXd log_weight = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    for (int s = 0; s < n; ++s) {
        if (eval.v[s] <= kValueFloor) {
            out.untouched[s] = 1;
            out.conditionals.row(s) = pi.row(s);
            if (!value_weighted && eval.occupancy[s] > 0.0)
                log_weight[s] = std::log(eval.occupancy[s]);
            continue;
        }

        if (value_weighted) {
            double q_max = eval.q.row(s).maxCoeff();
            for (int a = 0; a < m; ++a)
                if (!(eval.q(s, a) > 0.0))
                    throw std::invalid_argument("improve: Q(s=" + std::to_string(s) +
                                                ", a=" + std::to_string(a) +
                                                ") must be positive on improved states");
            // conditionals pi * Q^{inv_alpha}, evaluated in log space so large
            // exponents stay finite; Z(s) accumulates the same terms.
            double z = 0.0;
            for (int a = 0; a < m; ++a) {
                double t = pi(s, a) * std::exp(inv_alpha * (std::log(eval.q(s, a)) - std::log(q_max)));
                out.conditionals(s, a) = t;
                z += t;
            }
            out.conditionals.row(s) /= z;
            if (eval.occupancy[s] > 0.0)
                log_weight[s] = std::log(eval.occupancy[s]) + inv_alpha * std::log(q_max) +
                                std::log(z);
        } else {
            double q_max = eval.q.row(s).maxCoeff();
            double z = 0.0;
            for (int a = 0; a < m; ++a) {
                double t = std::exp(spec.beta * (eval.q(s, a) - q_max));
                if (spec.kind == ImprovementKind::kMpoExp) t *= pi(s, a);
                out.conditionals(s, a) = t;
                z += t;
            }
            out.conditionals.row(s) /= z;
            if (eval.occupancy[s] > 0.0) log_weight[s] = std::log(eval.occupancy[s]);
        }
    }

    double max_log = log_weight.maxCoeff();
    if (!std::isfinite(max_log))
        throw std::invalid_argument("improve: every state is below the value floor, "
                                    "the improved distribution is undefined");
    double total = 0.0;
    for (int s = 0; s < n; ++s) {
        double w = std::exp(log_weight[s] - max_log);
        out.state_weights[s] = std::isfinite(log_weight[s]) ? w : 0.0;
        total += out.state_weights[s];
    }
    out.state_weights /= total;
    out.weight_normalizer = std::exp(max_log) * total;
    return out;
}

// ---------------------------------------------------------------------------
// Divergences
// ---------------------------------------------------------------------------

/// KL divergence between finite distributions with the 0 log 0 convention.
/// Throws when q vanishes where p does not.
inline double kl_divergence(const VectorXd& p, const VectorXd& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] <= 0.0)
            throw std::invalid_argument("kl_divergence: q vanishes inside the support of p");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

/**
 * Alpha-divergence in Minka's convention,
 *   D_a(p||q) = (1/(a(1-a))) sum_x [ a p + (1-a) q - p^a q^{1-a} ],
 * defined here for a in (0, 1], with the a = 1 endpoint taken as KL(p||q).
 * Nonnegative, zero iff p = q.
 */
inline double alpha_divergence(const VectorXd& p, const VectorXd& q, double alpha) {
    if (p.size() != q.size()) throw std::invalid_argument("alpha_divergence: length mismatch");
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("alpha_divergence: alpha must lie in (0, 1]");
    if (alpha == 1.0) return kl_divergence(p, q);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("alpha_divergence: negative entry");
        sum += alpha * p[i] + (1.0 - alpha) * q[i] -
               std::pow(p[i], alpha) * std::pow(q[i], 1.0 - alpha);
    }
    return sum / (alpha * (1.0 - alpha));
}

// ---------------------------------------------------------------------------
// Projection operators
// ---------------------------------------------------------------------------

enum class ProjectionKind { kWeightedKL, kAlphaDivergence, kReverseKLClipped };
enum class ProjectionSolver { kClosedFormTabular, kGradientDescent };

/**
 * Projection of an improved distribution onto the softmax policy class.
 *  - WeightedKL: argmin_z sum_s w(s) KL(mu(.|s) || z(.|s)), the covering
 *    direction. In the tabular class the minimizer is mu itself.
 *  - AlphaDivergence(alpha): same weighting with D_alpha in place of KL.
 *  - ReverseKLClipped(beta, clip_eps): maximizes the clipped surrogate
 *    sum_s w(s) [ sum_a init(a|s) min(rho Q~, clip(rho, 1-eps, 1+eps) Q~)
 *    + (1/beta) H(z(.|s)) ] with rho = z(a|s)/init(a|s) and Q~ the
 *    improvement's score matrix; the mode-seeking direction. beta may be
 *    +inf for a pure (entropy-free) surrogate; clip_eps may be +inf to
 *    disable clipping.
 *
 * The closed-form solver requires a tabular init and writes log-conditionals
 * straight into the logits (zeros clamped at kProbFloor); gradient descent
 * works for both modes, halving its step whenever the objective would
 * increase.
 */
struct ProjectionSpec {
    ProjectionKind kind = ProjectionKind::kWeightedKL;
    double alpha = 1.0;
    double beta = 1.0;
    double clip_eps = 0.2;
    ProjectionSolver solver = ProjectionSolver::kClosedFormTabular;
    int gd_steps = 500;
    double gd_step_size = 0.1;

    static ProjectionSpec weighted_kl(ProjectionSolver solver = ProjectionSolver::kClosedFormTabular) {
        ProjectionSpec s;
        s.solver = solver;
        return s;
    }
    static ProjectionSpec alpha_div(double alpha,
                                    ProjectionSolver solver = ProjectionSolver::kGradientDescent) {
        ProjectionSpec s;
        s.kind = ProjectionKind::kAlphaDivergence;
        s.alpha = alpha;
        s.solver = solver;
        return s;
    }
    static ProjectionSpec reverse_kl_clipped(double beta, double clip_eps = 0.2,
                                             ProjectionSolver solver = ProjectionSolver::kGradientDescent) {
        ProjectionSpec s;
        s.kind = ProjectionKind::kReverseKLClipped;
        s.beta = beta;
        s.clip_eps = clip_eps;
        s.solver = solver;
        return s;
    }

    void validate() const {
        if (kind == ProjectionKind::kAlphaDivergence && !(alpha > 0.0 && alpha <= 1.0))
            throw std::invalid_argument("projection: alpha must lie in (0, 1]");
        if (kind == ProjectionKind::kReverseKLClipped) {
            if (!(beta > 0.0)) throw std::invalid_argument("projection: beta must be positive");
            if (!(clip_eps > 0.0)) throw std::invalid_argument("projection: clip_eps must be positive");
        }
        if (solver == ProjectionSolver::kGradientDescent) {
            if (gd_steps < 1) throw std::invalid_argument("projection: gd_steps must be >= 1");
            if (!(gd_step_size > 0.0))
                throw std::invalid_argument("projection: gd_step_size must be positive");
        }
    }
};

namespace detail {

inline void check_projection_inputs(const ImprovedDistribution& mu, const SoftmaxPolicy& policy) {
    policy.validate();
    if (mu.conditionals.rows() != policy.n_states || mu.conditionals.cols() != policy.n_actions)
        throw std::invalid_argument("projection: improved distribution does not match the policy");
}

}  // namespace detail

/// Value of the projection objective at `policy` (the quantity the solvers
/// minimize; for ReverseKLClipped this is the negated surrogate).
inline double projection_objective(const ImprovedDistribution& mu, const ProjectionSpec& spec,
                                   const SoftmaxPolicy& policy,
                                   const SoftmaxPolicy* init = nullptr) {
    spec.validate();
    detail::check_projection_inputs(mu, policy);
    MatrixXd pi = policy.prob_matrix();
    double obj = 0.0;
    switch (spec.kind) {
        case ProjectionKind::kWeightedKL:
            for (int s = 0; s < policy.n_states; ++s) {
                if (mu.state_weights[s] == 0.0) continue;
                obj += mu.state_weights[s] *
                       kl_divergence(mu.conditionals.row(s).transpose(), pi.row(s).transpose());
            }
            return obj;
        case ProjectionKind::kAlphaDivergence:
            for (int s = 0; s < policy.n_states; ++s) {
                if (mu.state_weights[s] == 0.0) continue;
                obj += mu.state_weights[s] * alpha_divergence(mu.conditionals.row(s).transpose(),
                                                              pi.row(s).transpose(), spec.alpha);
            }
            return obj;
        case ProjectionKind::kReverseKLClipped: {
            if (init == nullptr)
                throw std::invalid_argument("projection: clipped surrogate needs the init policy");
            MatrixXd ref = init->prob_matrix();
            const double entropy_w = std::isinf(spec.beta) ? 0.0 : 1.0 / spec.beta;
            for (int s = 0; s < policy.n_states; ++s) {
                if (mu.state_weights[s] == 0.0) continue;
                double surrogate = 0.0;
                for (int a = 0; a < policy.n_actions; ++a) {
                    double rho = pi(s, a) / ref(s, a);
                    double clipped = std::min(std::max(rho, 1.0 - spec.clip_eps), 1.0 + spec.clip_eps);
                    surrogate += ref(s, a) * std::min(rho * mu.scores(s, a), clipped * mu.scores(s, a));
                    if (entropy_w > 0.0 && pi(s, a) > 0.0)
                        surrogate -= entropy_w * pi(s, a) * std::log(pi(s, a));
                }
                obj -= mu.state_weights[s] * surrogate;
            }
            return obj;
        }
    }
    throw std::logic_error("projection_objective: unreachable");
}

/// Gradient of the projection objective in the policy parameters.
inline VectorXd projection_objective_gradient(const ImprovedDistribution& mu,
                                              const ProjectionSpec& spec,
                                              const SoftmaxPolicy& policy,
                                              const SoftmaxPolicy* init = nullptr) {
    spec.validate();
    detail::check_projection_inputs(mu, policy);
    MatrixXd pi = policy.prob_matrix();
    VectorXd g = VectorXd::Zero(policy.param_count());

    MatrixXd ref;
    if (spec.kind == ProjectionKind::kReverseKLClipped) {
        if (init == nullptr)
            throw std::invalid_argument("projection: clipped surrogate needs the init policy");
        ref = init->prob_matrix();
    }

    for (int s = 0; s < policy.n_states; ++s) {
        const double w = mu.state_weights[s];
        if (w == 0.0) continue;
        const int base = policy.mode == PolicyMode::kTabular ? s * policy.n_actions : 0;
        switch (spec.kind) {
            case ProjectionKind::kWeightedKL:
                for (int a = 0; a < policy.n_actions; ++a)
                    g[base + a] += w * (pi(s, a) - mu.conditionals(s, a));
                break;
            case ProjectionKind::kAlphaDivergence: {
                // d/d theta of D_a(p || softmax) via (1/a)(1 - (p/q)^a) dq;
                // the softmax Jacobian turns it into q(a') (avg_g - g(a')).
                double avg = 0.0;
                VectorXd ratio(policy.n_actions);
                for (int a = 0; a < policy.n_actions; ++a) {
                    ratio[a] = std::pow(mu.conditionals(s, a) / pi(s, a), spec.alpha);
                    avg += pi(s, a) * ratio[a];
                }
                for (int a = 0; a < policy.n_actions; ++a)
                    g[base + a] += w * pi(s, a) * (avg - ratio[a]) / spec.alpha;
                break;
            }
            case ProjectionKind::kReverseKLClipped: {
                const double entropy_w = std::isinf(spec.beta) ? 0.0 : 1.0 / spec.beta;
                VectorXd dz(policy.n_actions);
                for (int a = 0; a < policy.n_actions; ++a) {
                    double rho = pi(s, a) / ref(s, a);
                    dz[a] = rho <= 1.0 + spec.clip_eps ? mu.scores(s, a) : 0.0;
                    if (entropy_w > 0.0) dz[a] -= entropy_w * (std::log(pi(s, a)) + 1.0);
                }
                double avg = 0.0;
                for (int a = 0; a < policy.n_actions; ++a) avg += pi(s, a) * dz[a];
                // minimizing the negated surrogate
                for (int a = 0; a < policy.n_actions; ++a)
                    g[base + a] -= w * pi(s, a) * (dz[a] - avg);
                break;
            }
        }
    }
    return g;
}

namespace detail {

inline SoftmaxPolicy project_closed_form(const ImprovedDistribution& mu, const ProjectionSpec& spec,
                                         const SoftmaxPolicy& init) {
    if (init.mode != PolicyMode::kTabular)
        throw std::invalid_argument("projection: the closed-form solver requires a tabular policy");
    SoftmaxPolicy out = init;
    MatrixXd ref;
    if (spec.kind == ProjectionKind::kReverseKLClipped) ref = init.prob_matrix();

    for (int s = 0; s < init.n_states; ++s) {
        if (mu.untouched[s] || mu.state_weights[s] == 0.0) continue;
        VectorXd target;
        switch (spec.kind) {
            case ProjectionKind::kWeightedKL:
            case ProjectionKind::kAlphaDivergence:
                // per-state minimizer of any D(mu || .) over the simplex is mu
                target = mu.conditionals.row(s).transpose();
                break;
            case ProjectionKind::kReverseKLClipped: {
                target.resize(init.n_actions);
                if (std::isinf(spec.beta)) {
                    int best = 0;
                    for (int a = 1; a < init.n_actions; ++a)
                        if (mu.scores(s, a) > mu.scores(s, best)) best = a;
                    target.setZero();
                    target[best] = 1.0;
                } else {
                    double mx = mu.scores.row(s).maxCoeff();
                    for (int a = 0; a < init.n_actions; ++a)
                        target[a] = std::exp(spec.beta * (mu.scores(s, a) - mx));
                    target /= target.sum();
                }
                if (std::isfinite(spec.clip_eps)) {
                    for (int a = 0; a < init.n_actions; ++a)
                        target[a] = std::min(std::max(target[a], ref(s, a) * (1.0 - spec.clip_eps)),
                                             ref(s, a) * (1.0 + spec.clip_eps));
                    target /= target.sum();
                }
                break;
            }
        }
        for (int a = 0; a < init.n_actions; ++a)
            out.theta[s * init.n_actions + a] = std::log(std::max(target[a], kProbFloor));
    }
    return out;
}

inline SoftmaxPolicy project_gradient_descent(const ImprovedDistribution& mu,
                                              const ProjectionSpec& spec,
                                              const SoftmaxPolicy& init) {
    SoftmaxPolicy cur = init;
    double f = projection_objective(mu, spec, cur, &init);
    double lr = spec.gd_step_size;
    for (int step = 0; step < spec.gd_steps; ++step) {
        VectorXd g = projection_objective_gradient(mu, spec, cur, &init);
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            SoftmaxPolicy cand = cur;
            cand.theta -= lr * g;
            double fc = projection_objective(mu, spec, cand, &init);
            if (fc <= f) {
                cur = std::move(cand);
                f = fc;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if (!accepted) break;  // no descent direction at double precision
    }
    return cur;
}

}  // namespace detail

/**
 * Projects an improved distribution onto the policy class, starting from
 * `init`. States flagged untouched (or carrying zero weight) keep the init
 * policy's conditionals under the closed-form solver and are simply absent
 * from the gradient objective. The objective never increases along the
 * gradient-descent path.
 */
inline SoftmaxPolicy project(const ImprovedDistribution& mu, const ProjectionSpec& spec,
                             const SoftmaxPolicy& init) {
    spec.validate();
    detail::check_projection_inputs(mu, init);
    if (spec.solver == ProjectionSolver::kClosedFormTabular)
        return detail::project_closed_form(mu, spec, init);
    return detail::project_gradient_descent(mu, spec, init);
}

/**
 * One sweep of the iterative KL scheme for alpha-divergence projection:
 * project the per-state geometric mixture mu^alpha z_t^{1-alpha}
 * (renormalized) onto the class under the weighted KL. Iterating to a fixed
 * point solves the alpha-divergence projection.
 */
inline SoftmaxPolicy minka_kl_iteration(const ImprovedDistribution& mu, const SoftmaxPolicy& z_t,
                                        double alpha, const ProjectionSpec& kl_spec) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("minka_kl_iteration: alpha must lie in (0, 1]");
    if (kl_spec.kind != ProjectionKind::kWeightedKL)
        throw std::invalid_argument("minka_kl_iteration: the inner projection must be WeightedKL");
    detail::check_projection_inputs(mu, z_t);
    MatrixXd z = z_t.prob_matrix();
    ImprovedDistribution mix = mu;
    for (int s = 0; s < z_t.n_states; ++s) {
        if (mu.untouched[s]) continue;
        double sum = 0.0;
        for (int a = 0; a < z_t.n_actions; ++a) {
            double m = std::pow(mu.conditionals(s, a), alpha) * std::pow(z(s, a), 1.0 - alpha);
            mix.conditionals(s, a) = m;
            sum += m;
        }
        if (sum <= 0.0)
            throw std::runtime_error("minka_kl_iteration: geometric mixture vanished in state " +
                                     std::to_string(s));
        mix.conditionals.row(s) /= sum;
    }
    return project(mix, kl_spec, z_t);
}

}  // namespace pgop
