#include "catch_amalgamated.hpp"

#include "afedpg/mdp.hpp"
#include "afedpg/policy.hpp"

using namespace afedpg;

namespace {

// Independent J* oracle for deterministic-transition MDPs with few actions:
// enumerate every deterministic policy and take the best exact value.
double best_deterministic_return(const TabularMDP& mdp) {
    const int S = mdp.num_states, A = mdp.num_actions;
    long long count = 1;
    for (int s = 0; s < S; ++s) count *= A;
    double best = -1e300;
    for (long long code = 0; code < count; ++code) {
        std::vector<Vec> probs(S, Vec::Zero(A));
        long long c = code;
        for (int s = 0; s < S; ++s) {
            probs[s][static_cast<int>(c % A)] = 1.0;
            c /= A;
        }
        Vec V = exact_state_values_from(mdp, probs);
        best = std::max(best, exact_return_from(mdp, V));
    }
    return best;
}

std::vector<Vec> uniform_probs(const TabularMDP& mdp) {
    return std::vector<Vec>(mdp.num_states,
                            Vec::Constant(mdp.num_actions, 1.0 / mdp.num_actions));
}

}  // namespace

TEST_CASE("bandit environment") {
    TabularMDP m = make_bandit();
    REQUIRE(m.num_states == 1);
    REQUIRE(m.num_actions == 2);
    REQUIRE(m.gamma == 0.0);
    // J* = reward of the better arm
    REQUIRE(optimal_return(m) == Catch::Approx(1.0).margin(1e-12));
    // uniform policy mixes the two arm rewards
    Vec V = exact_state_values_from(m, uniform_probs(m));
    REQUIRE(exact_return_from(m, V) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("chain optimal return matches policy enumeration and closed form") {
    TabularMDP m = make_chain();
    double j_star = optimal_return(m);
    // go right every step: enter the rewarding end state at t = 4
    double closed_form = std::pow(0.9, 4) / (1.0 - 0.9);
    REQUIRE(j_star == Catch::Approx(closed_form).margin(1e-9));
    REQUIRE(j_star == Catch::Approx(best_deterministic_return(m)).margin(1e-9));
}

TEST_CASE("gridworld optimal return matches shortest path closed form") {
    TabularMDP m = make_gridworld();
    // corner to corner in a 5x5 grid takes 8 steps, then reward forever
    double closed_form = std::pow(0.95, 8) / (1.0 - 0.95);
    REQUIRE(optimal_return(m) == Catch::Approx(closed_form).margin(1e-8));
}

TEST_CASE("value oracle satisfies the Bellman equation") {
    TabularMDP m = make_chain();
    auto probs = uniform_probs(m);
    Vec V = exact_state_values_from(m, probs);
    Mat P = policy_kernel(m, probs);
    Vec r = policy_reward(m, probs);
    REQUIRE((V - (r + m.gamma * P * V)).norm() <= 1e-10);
    Mat Q = exact_q_values_from(m, V);
    // V is the policy average of Q
    for (int s = 0; s < m.num_states; ++s) {
        double avg = 0.0;
        for (int a = 0; a < m.num_actions; ++a) avg += probs[s][a] * Q(s, a);
        REQUIRE(avg == Catch::Approx(V[s]).margin(1e-10));
    }
}

TEST_CASE("visitation measure is a probability distribution") {
    TabularMDP m = make_gridworld();
    auto probs = uniform_probs(m);
    Mat nu = visitation_measure_from(m, probs);
    double total = 0.0;
    for (int s = 0; s < m.num_states; ++s)
        for (int a = 0; a < m.num_actions; ++a) {
            REQUIRE(nu(s, a) >= -1e-14);
            total += nu(s, a);
        }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("random MDP is valid and reproducible") {
    TabularMDP a = random_mdp(42, 6, 3, 0.8);
    TabularMDP b = random_mdp(42, 6, 3, 0.8);
    REQUIRE(a.transition == b.transition);
    REQUIRE(a.reward == b.reward);
    for (int s = 0; s < a.num_states; ++s)
        for (int ac = 0; ac < a.num_actions; ++ac) {
            double sum = 0.0;
            for (int s2 = 0; s2 < a.num_states; ++s2) sum += a.p(s, ac, s2);
            REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
        }
    TabularMDP c = random_mdp(43, 6, 3, 0.8);
    REQUIRE(a.transition != c.transition);
}

TEST_CASE("validation rejects malformed tables") {
    TabularMDP m = make_chain();
    SECTION("broken transition row") {
        m.transition[0] += 0.5;
        REQUIRE_THROWS_AS(m.validate(), ConfigError);
    }
    SECTION("reward above r_max") {
        m.reward[0] = 2.0;
        REQUIRE_THROWS_AS(m.validate(), ConfigError);
    }
    SECTION("gamma out of range") {
        m.gamma = 1.0;
        REQUIRE_THROWS_AS(m.validate(), ConfigError);
    }
    SECTION("start distribution") {
        m.start_dist[0] = 0.5;
        REQUIRE_THROWS_AS(m.validate(), ConfigError);
    }
}

TEST_CASE("default horizon reaches the 1e-6 truncation scale") {
    REQUIRE(default_horizon(0.0) == 1);
    REQUIRE(default_horizon(0.9) == 132);
    REQUIRE(default_horizon(0.95) == 270);
    // gamma^T itself is already below the target at the chosen T
    for (double g : {0.5, 0.9, 0.95, 0.99})
        REQUIRE(std::pow(g, default_horizon(g)) <= 1e-6 * (1.0 + 1e-12));
}
