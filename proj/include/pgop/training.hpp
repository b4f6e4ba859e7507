#pragma once

#include "pgop/bounds.hpp"
#include "pgop/mdp.hpp"
#include "pgop/operators.hpp"
#include "pgop/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pgop {

struct StepDiagnostics {
    double j_before = 0.0;
    double j_after = 0.0;
    double bound_at_anchor = 0.0;  // J of the improvement anchor
    double bound_at_new = 0.0;     // lower bound evaluated at the updated policy
    double div_before = 0.0;       // projection objective at the init policy
    double div_after = 0.0;        // projection objective at the result
};

struct ComposeResult {
    SoftmaxPolicy policy;
    StepDiagnostics diag;
};

/**
 * One projected-improvement step: improve at the anchor (the current policy,
 * or a fixed sampling policy when `sampling` is given), then project back
 * onto the policy class starting from the current parameters.
 */
inline ComposeResult compose_step(const TabularMdp& mdp, const SoftmaxPolicy& current,
                                  const ImprovementSpec& improvement,
                                  const ProjectionSpec& projection,
                                  const SoftmaxPolicy* sampling = nullptr) {
    const SoftmaxPolicy& anchor = sampling ? *sampling : current;
    MatrixXd anchor_pi = anchor.prob_matrix();
    PolicyEval eval = evaluate_policy(mdp, anchor_pi);
    ImprovedDistribution mu = improve(eval, anchor_pi, improvement);

    ComposeResult out;
    out.diag.j_before = sampling ? evaluate_policy(mdp, current.prob_matrix()).j : eval.j;
    out.diag.bound_at_anchor = eval.j;
    out.diag.div_before = projection_objective(mu, projection, current, &current);
    out.policy = project(mu, projection, current);
    out.diag.div_after = projection_objective(mu, projection, out.policy, &current);
    MatrixXd new_pi = out.policy.prob_matrix();
    out.diag.bound_at_new = operator_lower_bound(eval, anchor_pi, new_pi);
    out.diag.j_after = evaluate_policy(mdp, new_pi).j;
    return out;
}

/**
 * Line search over the polynomial exponent: picks the smallest candidate
 * alpha whose projected update drops the anchored lower bound by at least
 * half of the full (alpha = 1) update's drop,
 *   L(mu) - L(P I^a mu) >= (1/2) (L(mu) - L(P I^1 mu)),
 * with L(mu) = J(mu) by tightness. Early in training aggressive exponents
 * satisfy this easily; near convergence every step's drop shrinks below the
 * threshold and the search falls back to the largest candidate, annealing
 * alpha to 1. The candidate list must contain 1 so the fallback is valid.
 */
inline double line_search_alpha(const PolicyEval& eval_anchor, const MatrixXd& anchor_pi,
                                const SoftmaxPolicy& init, std::vector<double> candidates,
                                const ProjectionSpec& projection) {
    if (candidates.empty()) throw std::invalid_argument("line_search_alpha: no candidates");
    std::sort(candidates.begin(), candidates.end());
    for (double a : candidates)
        if (!(a > 0.0 && a <= 1.0))
            throw std::invalid_argument("line_search_alpha: candidates must lie in (0, 1]");
    if (std::abs(candidates.back() - 1.0) > 1e-12)
        throw std::invalid_argument("line_search_alpha: candidates must include 1");

    auto bound_drop = [&](double alpha) {
        ImprovedDistribution mu =
            improve(eval_anchor, anchor_pi, ImprovementSpec::polynomial(1.0 / alpha));
        SoftmaxPolicy cand = project(mu, projection, init);
        return eval_anchor.j - operator_lower_bound(eval_anchor, anchor_pi, cand.prob_matrix());
    };

    const double threshold = 0.5 * bound_drop(1.0);
    for (double alpha : candidates) {
        if (alpha == candidates.back()) break;
        if (bound_drop(alpha) >= threshold - 1e-12) return alpha;
    }
    return candidates.back();
}

inline double line_search_alpha(const TabularMdp& mdp, const SoftmaxPolicy& mu,
                                const std::vector<double>& candidates,
                                const ProjectionSpec& projection) {
    MatrixXd pi = mu.prob_matrix();
    PolicyEval eval = evaluate_policy(mdp, pi);
    return line_search_alpha(eval, pi, mu, candidates, projection);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

enum class AlphaScheduleKind { kFixed, kAnneal, kLineSearch };

/**
 * Exponent schedule for polynomial improvements. Fixed keeps the
 * improvement spec as given; Anneal splits the run into len(values) equal
 * phases using values[phase] as alpha; LineSearch picks alpha per iteration
 * from the candidate set (which must include 1).
 */
struct AlphaSchedule {
    AlphaScheduleKind kind = AlphaScheduleKind::kFixed;
    std::vector<double> values;

    static AlphaSchedule fixed() { return {}; }
    static AlphaSchedule anneal(std::vector<double> alphas) {
        return {AlphaScheduleKind::kAnneal, std::move(alphas)};
    }
    static AlphaSchedule line_search(std::vector<double> candidates) {
        return {AlphaScheduleKind::kLineSearch, std::move(candidates)};
    }
};

struct TrainRecord {
    int iteration = 0;
    double j = 0.0;      // J of the policy entering this iteration
    double alpha = 1.0;  // exponent used by the step leaving this row
    double bound_at_mu = 0.0;
    double bound_at_new = 0.0;
    double divergence_to_target = 0.0;
    double wallclock_ms = 0.0;
};

struct TrainResult {
    SoftmaxPolicy policy;
    std::vector<TrainRecord> curve;  // n_iters step rows plus a final summary row
};

inline TrainResult train(const TabularMdp& mdp, const SoftmaxPolicy& init,
                         const ImprovementSpec& improvement, const ProjectionSpec& projection,
                         int n_iters, const AlphaSchedule& schedule = AlphaSchedule::fixed(),
                         const SoftmaxPolicy* sampling = nullptr) {
    if (n_iters < 1) throw std::invalid_argument("train: n_iters must be >= 1");
    improvement.validate();
    projection.validate();
    const bool polynomial_family = improvement.kind == ImprovementKind::kOpReinforce ||
                                   improvement.kind == ImprovementKind::kPolynomial;
    if (schedule.kind != AlphaScheduleKind::kFixed) {
        if (!polynomial_family)
            throw std::invalid_argument("train: alpha schedules require a polynomial improvement");
        if (schedule.values.empty())
            throw std::invalid_argument("train: schedule needs at least one value");
        for (double a : schedule.values)
            if (!(a > 0.0 && a <= 1.0))
                throw std::invalid_argument("train: schedule alphas must lie in (0, 1]");
    }

    TrainResult out;
    out.policy = init;
    out.policy.validate();
    out.curve.reserve(n_iters + 1);

    PolicyEval sampling_eval;
    MatrixXd sampling_pi;
    if (sampling) {
        sampling_pi = sampling->prob_matrix();
        sampling_eval = evaluate_policy(mdp, sampling_pi);
    }

    double last_alpha = 1.0;
    for (int t = 0; t < n_iters; ++t) {
        auto t0 = std::chrono::steady_clock::now();

        MatrixXd anchor_pi = sampling ? sampling_pi : out.policy.prob_matrix();
        PolicyEval eval = sampling ? sampling_eval : evaluate_policy(mdp, anchor_pi);
        double j_cur = sampling ? evaluate_policy(mdp, out.policy.prob_matrix()).j : eval.j;

        ImprovementSpec step_spec = improvement;
        double alpha = std::numeric_limits<double>::quiet_NaN();
        switch (schedule.kind) {
            case AlphaScheduleKind::kFixed:
                if (polynomial_family)
                    alpha = improvement.kind == ImprovementKind::kOpReinforce
                                ? 1.0
                                : 1.0 / improvement.inv_alpha;
                break;
            case AlphaScheduleKind::kAnneal: {
                std::size_t phase = static_cast<std::size_t>(t) * schedule.values.size() /
                                    static_cast<std::size_t>(n_iters);
                alpha = schedule.values[std::min(phase, schedule.values.size() - 1)];
                step_spec = ImprovementSpec::polynomial(1.0 / alpha);
                break;
            }
            case AlphaScheduleKind::kLineSearch:
                alpha = line_search_alpha(eval, anchor_pi, out.policy, schedule.values, projection);
                step_spec = ImprovementSpec::polynomial(1.0 / alpha);
                break;
        }
        last_alpha = std::isnan(alpha) ? last_alpha : alpha;

        ImprovedDistribution mu = improve(eval, anchor_pi, step_spec);
        SoftmaxPolicy next = project(mu, projection, out.policy);
        MatrixXd next_pi = next.prob_matrix();

        TrainRecord rec;
        rec.iteration = t;
        rec.j = j_cur;
        rec.alpha = alpha;
        rec.bound_at_mu = eval.j;
        rec.bound_at_new = operator_lower_bound(eval, anchor_pi, next_pi);
        rec.divergence_to_target = projection_objective(mu, projection, next, &out.policy);
        rec.wallclock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        out.curve.push_back(rec);
        out.policy = std::move(next);
    }

    TrainRecord final_rec;
    final_rec.iteration = n_iters;
    final_rec.j = evaluate_policy(mdp, out.policy.prob_matrix()).j;
    final_rec.alpha = last_alpha;
    final_rec.bound_at_mu = final_rec.j;
    final_rec.bound_at_new = final_rec.j;
    final_rec.divergence_to_target = 0.0;
    final_rec.wallclock_ms = 0.0;
    out.curve.push_back(final_rec);
    return out;
}

// ---------------------------------------------------------------------------
// Curve summaries
// ---------------------------------------------------------------------------

inline double linear_fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("linear_fit_slope: need two or more points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    if (den == 0.0) throw std::invalid_argument("linear_fit_slope: degenerate abscissa");
    return num / den;
}

/// Cumulative regret sum_{i<=t} (j_star - j_i) over the curve's J column.
inline std::vector<double> cumulative_regret(const std::vector<TrainRecord>& curve,
                                             double j_star) {
    std::vector<double> out;
    out.reserve(curve.size());
    double acc = 0.0;
    for (const TrainRecord& r : curve) {
        acc += j_star - r.j;
        out.push_back(acc);
    }
    return out;
}

/// Asymptotic regret growth: least-squares slope of cumulative regret over
/// the last half of the curve.
inline double regret_slope(const std::vector<TrainRecord>& curve, double j_star) {
    std::vector<double> reg = cumulative_regret(curve, j_star);
    std::size_t from = reg.size() / 2;
    if (reg.size() - from < 2) from = 0;
    std::vector<double> xs, ys;
    for (std::size_t i = from; i < reg.size(); ++i) {
        xs.push_back(static_cast<double>(i));
        ys.push_back(reg[i]);
    }
    return linear_fit_slope(xs, ys);
}

/// First iteration whose J reaches the threshold, or -1 if none does.
inline int iterations_to_threshold(const std::vector<TrainRecord>& curve, double threshold) {
    for (const TrainRecord& r : curve)
        if (r.j >= threshold) return r.iteration;
    return -1;
}

}  // namespace pgop
