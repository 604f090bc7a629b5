#include "catch_amalgamated.hpp"

#include "afedpg/core.hpp"

using namespace afedpg;

TEST_CASE("schedules") {
    Schedules s;
    s.eta0 = 0.5;
    s.p = 0.8;
    s.q = 1.0;
    REQUIRE(s.alpha(0) == 1.0);
    REQUIRE(s.alpha(3) == Catch::Approx(std::pow(0.25, 0.8)));
    REQUIRE(s.eta(0) == 0.5);
    REQUIRE(s.eta(9) == Catch::Approx(0.05));
    Schedules bad = s;
    bad.eta0 = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.p = 1.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = s;
    bad.q = -0.1;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("lookahead and its inverse") {
    RngStream rng(5, "lookahead_test");
    for (int trial = 0; trial < 100; ++trial) {
        Vec th(4), prev(4);
        for (int i = 0; i < 4; ++i) {
            th[i] = rng.normal();
            prev[i] = rng.normal();
        }
        double alpha = 0.05 + 0.95 * rng.uniform();
        Vec tilde = lookahead(th, prev, alpha);
        // theta = (1 - alpha) theta_prev + alpha theta_tilde
        REQUIRE(((1.0 - alpha) * prev + alpha * tilde - th).norm() <= 1e-12);
        REQUIRE(cancellation_residual(th, prev, tilde, alpha) <= 1e-12);
    }
    Vec th = Vec::Ones(3), prev = Vec::Zero(3);
    REQUIRE((lookahead(th, prev, 1.0) - th).norm() == 0.0);
    REQUIRE_THROWS_AS(lookahead(th, prev, 0.0), ConfigError);
    REQUIRE_THROWS_AS(lookahead(th, prev, 1.5), ConfigError);
}

TEST_CASE("server apply worked example") {
    Schedules s;
    s.eta0 = 0.1;
    s.q = 0.0;  // eta constant at 0.1
    Vec theta0(2);
    theta0 << 1.0, 0.0;
    ServerState server(theta0, s);
    Vec d(2);
    d << 3.0, 4.0;
    // agent_anchor applies the payload as the direction verbatim
    ApplyRecord rec = server_apply(server, d, 0, Variant::agent_anchor);
    REQUIRE(rec.d_norm == Catch::Approx(5.0));
    REQUIRE(server.theta_curr[0] == Catch::Approx(1.06).margin(1e-15));
    REQUIRE(server.theta_curr[1] == Catch::Approx(0.08).margin(1e-15));
    REQUIRE(server.theta_prev[0] == 1.0);
    REQUIRE(server.k == 1);
}

TEST_CASE("randomized applies take steps of exactly eta") {
    Schedules s;
    s.eta0 = 0.7;
    for (Variant v : {Variant::server_anchor, Variant::agent_anchor}) {
        ServerState server(Vec::Zero(6), s);
        RngStream rng(17, "apply_test", v == Variant::server_anchor ? 0 : 1);
        for (int k = 0; k < 1000; ++k) {
            Vec payload(6);
            for (int i = 0; i < 6; ++i) payload[i] = rng.normal();
            long long origin = server.k - rng.uniform_int(static_cast<int>(server.k) + 1);
            Vec before = server.theta_curr;
            ApplyRecord rec = server_apply(server, payload, origin, v);
            REQUIRE(rec.delta == rec.k - origin);
            REQUIRE(rec.alpha_used == server.schedules.alpha(origin));
            if (!rec.zero_direction) {
                double step = (server.theta_curr - before).norm();
                REQUIRE(std::abs(step - rec.eta) <= 1e-12);
            }
        }
        REQUIRE(server.k == 1000);
    }
}

TEST_CASE("zero direction skips the move but advances the iteration") {
    Schedules s;
    ServerState server(Vec::Ones(3), s);
    ApplyRecord rec = server_apply(server, Vec::Zero(3), 0, Variant::agent_anchor);
    REQUIRE(rec.zero_direction);
    REQUIRE((server.theta_curr - Vec::Ones(3)).norm() == 0.0);
    REQUIRE(server.k == 1);
}

TEST_CASE("server apply rejects bad payloads") {
    Schedules s;
    ServerState server(Vec::Zero(2), s);
    REQUIRE_THROWS_AS(server_apply(server, Vec::Ones(2), 1, Variant::server_anchor),
                      InputError);
    Vec bad(2);
    bad << 1.0, std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(server_apply(server, bad, 0, Variant::server_anchor), InputError);
}

TEST_CASE("anchor variants differ only in where momentum is combined") {
    TabularMDP mdp = make_chain();
    Schedules s;
    ServerState server(Vec::Zero(10), s);
    // advance the server so the anchor direction is nonzero
    Vec d0(10);
    d0.setOnes();
    server_apply(server, d0, 0, Variant::agent_anchor);
    ModelMessage msg = server.snapshot();
    AgentTask task = AgentTask::from_message(3, msg);
    REQUIRE(task.start_iter == 1);
    RngStream r1(2, "traj", 3, 1), r2(2, "traj", 3, 1);
    AgentResult raw = agent_step(task, mdp, 20, r1, Variant::server_anchor);
    AgentResult combined = agent_step(task, mdp, 20, r2, Variant::agent_anchor);
    REQUIRE((raw.payload - raw.raw_gradient).norm() == 0.0);
    REQUIRE((combined.raw_gradient - raw.raw_gradient).norm() == 0.0);
    Vec expect = momentum_combine(task.d_anchor, raw.raw_gradient, task.alpha);
    REQUIRE((combined.payload - expect).norm() <= 1e-14);
    // both sampled at the same lookahead point
    REQUIRE((raw.theta_tilde - lookahead(task.theta, task.theta_prev, task.alpha)).norm() <=
            1e-14);
}

TEST_CASE("server anchor combines against the last applied direction") {
    Schedules s;
    ServerState server(Vec::Zero(2), s);
    Vec g0(2), g1(2);
    g0 << 1.0, 0.0;
    g1 << 0.0, 1.0;
    server_apply(server, g0, 0, Variant::server_anchor);  // alpha(0) = 1, d = g0
    ApplyRecord rec = server_apply(server, g1, 1, Variant::server_anchor);
    double a = s.alpha(1);
    Vec expect = (1.0 - a) * g0 + a * g1;
    REQUIRE((rec.d_applied - expect).norm() <= 1e-15);
    REQUIRE((server.d_last_applied - expect).norm() <= 1e-15);
}
