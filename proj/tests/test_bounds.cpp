#include "pgop/bounds.hpp"
#include "pgop/policy.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <cmath>

using namespace pgop;
using namespace pgop::testing;

TEST_CASE("both bound forms are tight at the anchor") {
    TabularMdp mdp = build_random_mdp(5, 3, 0.3, 11, 0.85);
    std::mt19937_64 rng(12);
    MatrixXd mu = random_policy(rng, PolicyMode::kTabular, 5, 3).prob_matrix();
    PolicyEval eval = evaluate_policy(mdp, mu);

    REQUIRE(operator_lower_bound(eval, mu, mu) == Catch::Approx(eval.j).margin(1e-12));
    KlFormBound kf = kl_form_lower_bound(eval, mu, mu);
    REQUIRE(kf.value == Catch::Approx(eval.j).margin(1e-11));
    REQUIRE(kf.d_pi == Catch::Approx(kf.d_mu).margin(1e-13));
    REQUIRE(cpi_surrogate(eval, mu, mu) == Catch::Approx(eval.j).margin(1e-12));
}

TEST_CASE("bound holds and the two forms agree over random pairs") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 100; ++rep) {
        TabularMdp mdp = build_random_mdp(5, 3, 0.2, 100 + rep, 0.85);
        MatrixXd mu = random_policy(rng, PolicyMode::kTabular, 5, 3).prob_matrix();
        MatrixXd pi = random_policy(rng, PolicyMode::kTabular, 5, 3).prob_matrix();
        PolicyEval eval_mu = evaluate_policy(mdp, mu);
        PolicyEval eval_pi = evaluate_policy(mdp, pi);

        double direct = operator_lower_bound(eval_mu, mu, pi);
        KlFormBound kf = kl_form_lower_bound(eval_mu, mu, pi);

        REQUIRE(direct <= eval_pi.j + 1e-9);
        REQUIRE(kf.value == Catch::Approx(direct).margin(1e-9));
        REQUIRE(kf.d_mu >= 0.0);
        REQUIRE(kf.d_pi >= 0.0);
        REQUIRE(kf.expected_v ==
                Catch::Approx(eval_mu.occupancy.dot(eval_mu.v)).epsilon(1e-10));
    }
}

TEST_CASE("bound gradient at the anchor is the policy gradient") {
    TabularMdp mdp = build_random_mdp(4, 3, 0.2, 21, 0.8);
    std::mt19937_64 rng(22);
    for (auto mode : {PolicyMode::kTabular, PolicyMode::kShared}) {
        SoftmaxPolicy anchor = random_policy(rng, mode, 4, 3);
        MatrixXd mu = anchor.prob_matrix();
        PolicyEval eval = evaluate_policy(mdp, mu);

        auto bound_at = [&](const VectorXd& theta) {
            SoftmaxPolicy p = anchor;
            p.theta = theta;
            return operator_lower_bound(eval, mu, p.prob_matrix());
        };
        auto cpi_at = [&](const VectorXd& theta) {
            SoftmaxPolicy p = anchor;
            p.theta = theta;
            return cpi_surrogate(eval, mu, p.prob_matrix());
        };
        VectorXd exact = policy_gradient(mdp, anchor);
        double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
        REQUIRE((fd_gradient(bound_at, anchor.theta) - exact).cwiseAbs().maxCoeff() <=
                1e-6 * scale);
        REQUIRE((fd_gradient(cpi_at, anchor.theta) - exact).cwiseAbs().maxCoeff() <= 1e-6 * scale);
    }
}

TEST_CASE("vanishing probability on rewarded support sends the bound to -inf") {
    TabularMdp mdp = build_random_mdp(3, 2, 0.0, 31, 0.7);
    MatrixXd mu = MatrixXd::Constant(3, 2, 0.5);
    PolicyEval eval = evaluate_policy(mdp, mu);
    MatrixXd pi = mu;
    pi(0, 0) = 0.0;
    pi(0, 1) = 1.0;
    double b = operator_lower_bound(eval, mu, pi);
    REQUIRE(std::isinf(b));
    REQUIRE(b < 0.0);
}

TEST_CASE("the linear surrogate is not a lower bound") {
    // A near-greedy anchor extrapolated linearly toward the uniform policy
    // overshoots the true return; search a few random pairs for a violation.
    bool violated = false;
    std::mt19937_64 rng(41);
    for (int rep = 0; rep < 50 && !violated; ++rep) {
        TabularMdp mdp = build_random_mdp(5, 3, 0.2, 200 + rep, 0.9);
        MatrixXd mu = random_policy(rng, PolicyMode::kTabular, 5, 3, 4.0).prob_matrix();
        MatrixXd pi = random_policy(rng, PolicyMode::kTabular, 5, 3, 4.0).prob_matrix();
        PolicyEval eval_mu = evaluate_policy(mdp, mu);
        PolicyEval eval_pi = evaluate_policy(mdp, pi);
        if (cpi_surrogate(eval_mu, mu, pi) > eval_pi.j + 1e-9) {
            violated = true;
            // the operator bound still holds on the same pair
            REQUIRE(operator_lower_bound(eval_mu, mu, pi) <= eval_pi.j + 1e-9);
        }
    }
    REQUIRE(violated);
}

TEST_CASE("landscape policy family") {
    VectorXd at0 = landscape_action_probs(0.0);
    REQUIRE(at0[0] == 0.1);
    REQUIRE(at0[1] == kProbFloor);
    REQUIRE(at0[2] == 0.8);
    REQUIRE(at0[3] == 0.1);

    VectorXd mid = landscape_action_probs(0.5);
    REQUIRE(mid[1] == Catch::Approx(0.4));
    REQUIRE(mid[2] == Catch::Approx(0.4));
    REQUIRE(mid.sum() == Catch::Approx(1.0).margin(1e-12));

    REQUIRE(landscape_action_probs(1.0)[1] == 0.8);
    REQUIRE_THROWS_AS(landscape_action_probs(-0.01), std::invalid_argument);
    REQUIRE_THROWS_AS(landscape_action_probs(1.01), std::invalid_argument);
}

TEST_CASE("landscape grid on the four-room task") {
    FourRoom env = build_four_room();
    std::vector<double> ts{0.0, 0.2, 0.5, 0.8, 1.0};
    std::vector<double> anchors{0.2, 0.8};
    std::vector<LandscapeRow> rows = bound_landscape(env.mdp, ts, anchors);

    REQUIRE(rows.size() == ts.size() * anchors.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const LandscapeRow& r = rows[i];
        REQUIRE(r.anchor_t == anchors[i / ts.size()]);
        REQUIRE(r.t == ts[i % ts.size()]);
        REQUIRE(r.op_bound <= r.j + 1e-9);
        if (r.t == r.anchor_t) {
            REQUIRE(r.op_bound == Catch::Approx(r.j).margin(1e-9));
            REQUIRE(r.cpi == Catch::Approx(r.j).margin(1e-9));
        }
    }
    // J is a property of t alone, not of the anchor
    for (std::size_t i = 0; i < ts.size(); ++i)
        REQUIRE(rows[i].j == rows[ts.size() + i].j);

    TabularMdp two = build_random_mdp(3, 2, 0.0, 5);
    REQUIRE_THROWS_AS(bound_landscape(two, ts, anchors), std::invalid_argument);
}

TEST_CASE("both surrogates are tangent to J along the landscape parameter") {
    FourRoom env = build_four_room();
    auto matrix_at = [&](double t) {
        VectorXd p = landscape_action_probs(t);
        MatrixXd pi(env.mdp.n_states, 4);
        for (int s = 0; s < env.mdp.n_states; ++s) pi.row(s) = p.transpose();
        return pi;
    };
    const double h = 1e-5;
    for (double anchor : {0.2, 0.5, 0.8}) {
        MatrixXd mu = matrix_at(anchor);
        PolicyEval eval = evaluate_policy(env.mdp, mu);

        auto dj = (evaluate_policy(env.mdp, matrix_at(anchor + h)).j -
                   evaluate_policy(env.mdp, matrix_at(anchor - h)).j) /
                  (2 * h);
        auto dbound = (operator_lower_bound(eval, mu, matrix_at(anchor + h)) -
                       operator_lower_bound(eval, mu, matrix_at(anchor - h))) /
                      (2 * h);
        auto dcpi = (cpi_surrogate(eval, mu, matrix_at(anchor + h)) -
                     cpi_surrogate(eval, mu, matrix_at(anchor - h))) /
                    (2 * h);
        double scale = std::max(1.0, std::abs(dj));
        REQUIRE(std::abs(dbound - dj) <= 1e-5 * scale);
        REQUIRE(std::abs(dcpi - dj) <= 1e-5 * scale);
    }
}
