#include "catch_amalgamated.hpp"

#include "afedpg/estimator.hpp"

using namespace afedpg;

TEST_CASE("bandit REINFORCE expectation equals the exact gradient") {
    // gamma = 0, horizon 1: the estimator is score(a) r(a), so its expectation
    // can be enumerated over the two arms in closed form.
    TabularMDP m = make_bandit();
    Vec theta(2);
    theta << 0.3, -0.4;
    SoftmaxPolicy pi(theta, 1, 2);
    Vec p = action_probs(pi, 0);
    Vec expect = Vec::Zero(2);
    for (int a = 0; a < 2; ++a) {
        Trajectory traj;
        traj.steps.push_back({0, a, m.r(0, a)});
        expect += p[a] * reinforce_gradient(traj, pi, m.gamma);
    }
    Vec exact = exact_policy_gradient(m, pi);
    REQUIRE((expect - exact).norm() <= 1e-12);
}

TEST_CASE("reward-to-go weights on a fixed trajectory") {
    TabularMDP m = make_chain();
    SoftmaxPolicy pi(5, 2);
    Trajectory traj;
    traj.steps = {{0, 1, 0.0}, {1, 1, 0.0}, {2, 1, 1.0}};
    const double g = m.gamma;
    // hand-computed: only t = 2 carries reward, weight_t = gamma^2 for all t
    Vec grad = reinforce_gradient(traj, pi, g);
    Vec manual = Vec::Zero(10);
    for (const auto& st : traj.steps) {
        Vec sc = score(pi, st.state, st.action);
        manual += g * g * sc;
    }
    REQUIRE((grad - manual).norm() <= 1e-14);
    // gamma^{h-t} variant rescales each weight by gamma^{-t}
    Vec grad2 = reinforce_gradient(traj, pi, g, true);
    Vec manual2 = Vec::Zero(10);
    double w[3] = {g * g, g, 1.0};
    for (int t = 0; t < 3; ++t)
        manual2 += w[t] * score(pi, traj.steps[t].state, traj.steps[t].action);
    REQUIRE((grad2 - manual2).norm() <= 1e-13);
    REQUIRE_THROWS_AS(reinforce_gradient(Trajectory{}, pi, g), InputError);
}

TEST_CASE("momentum combination") {
    Vec d(2), g(2);
    d << 1.0, 0.0;
    g << 0.0, 2.0;
    Vec out = momentum_combine(d, g, 0.25);
    REQUIRE(out[0] == Catch::Approx(0.75));
    REQUIRE(out[1] == Catch::Approx(0.5));
    REQUIRE((momentum_combine(d, g, 1.0) - g).norm() == 0.0);
    REQUIRE((momentum_combine(d, g, 0.0) - d).norm() == 0.0);
}

TEST_CASE("noise estimate is an RMS deviation around the exact gradient") {
    TabularMDP m = make_bandit();
    SoftmaxPolicy pi(1, 2);
    const int M = 64;
    NoiseEstimate est = estimate_sigma_g(m, pi, 1, M, 11);
    // recompute from the same streams
    Vec exact = exact_policy_gradient(m, pi);
    double acc = 0.0;
    for (int i = 0; i < M; ++i) {
        RngStream rng(11, "sigma_g", static_cast<std::uint64_t>(i));
        Trajectory traj = sample_trajectory(m, pi, 1, rng);
        acc += (reinforce_gradient(traj, pi, m.gamma) - exact).squaredNorm();
    }
    REQUIRE(est.sigma_g_hat == Catch::Approx(std::sqrt(acc / (M - 1))).margin(1e-14));
    REQUIRE_FALSE(est.degenerate);
    REQUIRE(estimate_sigma_g(m, pi, 1, 1, 11).degenerate);
}

TEST_CASE("estimator norm respects the score and reward bounds") {
    TabularMDP m = make_chain();
    SoftmaxPolicy pi(5, 2);
    const int T = 40;
    // each term is bounded by M_g * (truncated discounted return)
    double budget = 0.0;
    for (int t = 0; t < T; ++t) budget += std::sqrt(2.0) * std::pow(m.gamma, t) / (1.0 - m.gamma);
    for (int i = 0; i < 20; ++i) {
        RngStream rng(3, "bound_test", static_cast<std::uint64_t>(i));
        Trajectory traj = sample_trajectory(m, pi, T, rng);
        REQUIRE(reinforce_gradient(traj, pi, m.gamma).norm() <= budget + 1e-9);
    }
}
