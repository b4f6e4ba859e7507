#include "pgop/io.hpp"
#include "pgop/mdp.hpp"
#include "pgop/trajectory.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <cmath>

using namespace pgop;
using namespace pgop::testing;

TEST_CASE("single state geometric series") {
    TabularMdp mdp = single_state_mdp({1.0}, 0.5);
    PolicyEval eval = evaluate_policy(mdp, MatrixXd::Ones(1, 1));
    REQUIRE(eval.v[0] == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(eval.q(0, 0) == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(eval.j == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(eval.occupancy[0] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("zero rewards evaluate to zero values, occupancy unaffected") {
    TabularMdp mdp = build_random_mdp(5, 3, 1.0, 17);
    REQUIRE(mdp.reward.cwiseAbs().maxCoeff() == 0.0);
    MatrixXd uniform = MatrixXd::Constant(5, 3, 1.0 / 3.0);
    PolicyEval eval = evaluate_policy(mdp, uniform);
    REQUIRE(eval.v.cwiseAbs().maxCoeff() <= 1e-14);
    REQUIRE(eval.j == Catch::Approx(0.0).margin(1e-14));
    REQUIRE(eval.occupancy.sum() == Catch::Approx(1.0 / (1.0 - mdp.gamma)).margin(1e-9));
}

TEST_CASE("gamma zero reduces to one-step rewards") {
    TabularMdp mdp = build_random_mdp(4, 2, 0.0, 3, 0.0);
    std::mt19937_64 rng(11);
    MatrixXd pi = random_policy(rng, PolicyMode::kTabular, 4, 2).prob_matrix();
    PolicyEval eval = evaluate_policy(mdp, pi);
    for (int s = 0; s < 4; ++s)
        REQUIRE(eval.v[s] == Catch::Approx(pi.row(s).dot(mdp.reward.row(s))).margin(1e-13));
    for (int s = 0; s < 4; ++s) REQUIRE(eval.occupancy[s] == Catch::Approx(mdp.start[s]).margin(1e-13));
}

TEST_CASE("occupancy mass is geometric in every MDP") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        TabularMdp mdp = build_random_mdp(6, 3, 0.3, seed, 0.85);
        std::mt19937_64 rng(seed + 100);
        MatrixXd pi = random_policy(rng, PolicyMode::kTabular, 6, 3).prob_matrix();
        PolicyEval eval = evaluate_policy(mdp, pi);
        REQUIRE(eval.occupancy.sum() == Catch::Approx(1.0 / (1.0 - mdp.gamma)).margin(1e-9));
        REQUIRE(eval.occupancy.minCoeff() >= 0.0);
        REQUIRE(eval.j == Catch::Approx(mdp.start.dot(eval.v)).margin(1e-12));
    }
}

TEST_CASE("policy evaluation matches truncated enumeration on an absorbing chain") {
    TabularMdp mdp = chain_mdp(3, 0.3);
    MatrixXd uniform = MatrixXd::Constant(3, 2, 0.5);
    PolicyEval eval = evaluate_policy(mdp, uniform);
    const int horizon = 20;
    TrajectoryEnsemble ens = enumerate_trajectories(mdp, uniform, horizon);
    double truncation = std::pow(mdp.gamma, horizon) * 1.0 / (1.0 - mdp.gamma);
    REQUIRE(std::abs(eval.j - ens.j) <= truncation);
}

TEST_CASE("validation rejects malformed MDPs") {
    TabularMdp mdp = single_state_mdp({1.0}, 0.5);
    SECTION("broken row sum") {
        mdp.transition[0](0, 0) = 0.5;
        REQUIRE_THROWS_AS(mdp.validate(), std::invalid_argument);
    }
    SECTION("negative reward") {
        mdp.reward(0, 0) = -0.1;
        REQUIRE_THROWS_AS(mdp.validate(), std::invalid_argument);
    }
    SECTION("gamma out of range") {
        mdp.gamma = 1.0;
        REQUIRE_THROWS_AS(mdp.validate(), std::invalid_argument);
    }
    SECTION("terminal state must self-loop with zero reward") {
        TabularMdp chain = chain_mdp(3, 0.9);
        chain.reward(2, 0) = 0.5;
        REQUIRE_THROWS_AS(chain.validate(), std::invalid_argument);
    }
    SECTION("policy rows checked") {
        MatrixXd bad = MatrixXd::Constant(1, 1, 0.7);
        REQUIRE_THROWS_AS(evaluate_policy(mdp, bad), std::invalid_argument);
    }
}

TEST_CASE("value iteration closed form and tie-breaking") {
    ValueIterationResult vi = value_iteration(single_state_mdp({1.0, 2.0}, 0.5), 1e-13);
    REQUIRE(vi.v[0] == Catch::Approx(4.0).margin(1e-10));
    REQUIRE(vi.greedy[0] == 1);

    ValueIterationResult tie = value_iteration(single_state_mdp({1.0, 1.0}, 0.5), 1e-13);
    REQUIRE(tie.greedy[0] == 0);
}

TEST_CASE("value iteration agrees with exact evaluation of its greedy policy") {
    TabularMdp mdp = build_random_mdp(7, 3, 0.2, 42, 0.9);
    ValueIterationResult vi = value_iteration(mdp, 1e-13);
    PolicyEval eval = evaluate_policy(mdp, one_hot_policy(mdp, vi.greedy));
    REQUIRE((eval.v - vi.v).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("four-room geometry") {
    FourRoom env = build_four_room();
    REQUIRE(env.mdp.n_states == 104);
    REQUIRE(env.mdp.n_actions == 4);
    REQUIRE(env.mdp.terminal[env.goal_state] == 1);
    REQUIRE(env.mdp.start[env.start_state] == 1.0);

    SECTION("doorways are open, walls bump") {
        int door_west = env.state_of_cell[4][2];
        int door = env.state_of_cell[5][2];
        REQUIRE(door >= 0);
        REQUIRE(env.mdp.transition[kRight](door_west, door) == 1.0);

        int bump = env.state_of_cell[4][0];
        REQUIRE(env.mdp.transition[kRight](bump, bump) == 1.0);  // (5,0) is a wall
        int corner = env.start_state;
        REQUIRE(env.mdp.transition[kDown](corner, corner) == 1.0);
        REQUIRE(env.mdp.transition[kLeft](corner, corner) == 1.0);
    }

    SECTION("reward only on the two transitions entering the goal") {
        int hits = 0;
        for (int s = 0; s < env.mdp.n_states; ++s)
            for (int a = 0; a < 4; ++a)
                if (env.mdp.reward(s, a) > 0.0) {
                    ++hits;
                    REQUIRE(env.mdp.reward(s, a) == 1.0);
                    int next = -1;
                    for (int t = 0; t < env.mdp.n_states; ++t)
                        if (env.mdp.transition[a](s, t) == 1.0) next = t;
                    REQUIRE(next == env.goal_state);
                }
        REQUIRE(hits == 2);
    }

    SECTION("moves are deterministic") {
        for (int s = 0; s < env.mdp.n_states; ++s)
            for (int a = 0; a < 4; ++a)
                REQUIRE(env.mdp.transition[a].row(s).maxCoeff() == 1.0);
    }

    SECTION("optimal value at the start is gamma^(shortest path - 1)") {
        int steps = bfs_steps(env.mdp, env.start_state, env.goal_state);
        REQUIRE(steps == 20);
        ValueIterationResult vi = value_iteration(env.mdp, 1e-13);
        PolicyEval eval = evaluate_policy(env.mdp, one_hot_policy(env.mdp, vi.greedy));
        REQUIRE(eval.j == Catch::Approx(std::pow(env.mdp.gamma, steps - 1)).margin(1e-10));
    }

    SECTION("deterministic optimal rollout matches exact evaluation at long horizons") {
        ValueIterationResult vi = value_iteration(env.mdp, 1e-13);
        MatrixXd pi = one_hot_policy(env.mdp, vi.greedy);
        TrajectoryEnsemble ens = enumerate_trajectories(env.mdp, pi, 200);
        REQUIRE(ens.trajectories.size() == 1);
        PolicyEval eval = evaluate_policy(env.mdp, pi);
        REQUIRE(std::abs(ens.j - eval.j) <= 1e-12);
    }
}

TEST_CASE("random MDP generator is deterministic and respects sparsity") {
    TabularMdp a = build_random_mdp(6, 4, 0.5, 7);
    TabularMdp b = build_random_mdp(6, 4, 0.5, 7);
    for (int act = 0; act < 4; ++act) REQUIRE(a.transition[act] == b.transition[act]);
    REQUIRE(a.reward == b.reward);
    REQUIRE(a.start == b.start);

    int zeros = 0;
    for (int s = 0; s < 6; ++s)
        for (int act = 0; act < 4; ++act)
            if (a.reward(s, act) == 0.0) ++zeros;
    REQUIRE(zeros == 12);

    TabularMdp c = build_random_mdp(6, 4, 0.5, 8);
    REQUIRE(a.reward != c.reward);
}

TEST_CASE("mdp json round trip is exact") {
    TabularMdp mdp = build_random_mdp(5, 3, 0.25, 99, 0.8);
    TabularMdp back = mdp_from_json(to_json(mdp));
    REQUIRE(back.n_states == mdp.n_states);
    REQUIRE(back.gamma == mdp.gamma);
    for (int a = 0; a < 3; ++a) REQUIRE(back.transition[a] == mdp.transition[a]);
    REQUIRE(back.reward == mdp.reward);
    REQUIRE(back.start == mdp.start);

    SECTION("missing field is reported by name") {
        json j = to_json(mdp);
        j.erase("gamma");
        REQUIRE_THROWS_WITH(mdp_from_json(j), Catch::Matchers::ContainsSubstring("gamma"));
    }
}
