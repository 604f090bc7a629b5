#include "catch_amalgamated.hpp"

#include "afedpg/sim.hpp"

using namespace afedpg;

namespace {

RunConfig chain_config(int num_agents, long long iterations) {
    RunConfig rc;
    rc.mdp = make_chain();
    rc.num_agents = num_agents;
    rc.iterations = iterations;
    rc.horizon = 30;
    rc.seed = 7;
    rc.compute.times.assign(num_agents, 1.0);
    return rc;
}

}  // namespace

TEST_CASE("compute model") {
    ComputeModel cm = one_straggler(4, 3.0);
    REQUIRE(cm.times == std::vector<double>{3.0, 1.0, 1.0, 1.0});
    REQUIRE(cm.t_max() == 3.0);
    REQUIRE(cm.t_min() == 1.0);
    REQUIRE(cm.t_bar() == Catch::Approx(1.0 / (1.0 / 3.0 + 3.0)));
    REQUIRE(cm.draw(1, 0, 5) == 3.0);  // deterministic kind ignores the seed
    cm.kind = ComputeModel::Kind::lognormal;
    double d1 = cm.draw(1, 0, 5), d2 = cm.draw(1, 0, 5), d3 = cm.draw(1, 0, 6);
    REQUIRE(d1 == d2);
    REQUIRE(d1 != d3);
    REQUIRE(d1 > 0.0);
    ComputeModel bad;
    bad.times = {1.0, -1.0};
    REQUIRE_THROWS_AS(bad.validate(2), ConfigError);
    REQUIRE_THROWS_AS(bad.validate(3), ConfigError);
}

TEST_CASE("run config validation") {
    RunConfig rc = chain_config(2, 10);
    REQUIRE_NOTHROW(rc.validate());
    rc.num_agents = 0;
    REQUIRE_THROWS_AS(rc.validate(), ConfigError);
    rc = chain_config(2, 0);
    REQUIRE_THROWS_AS(rc.validate(), ConfigError);
    rc = chain_config(2, 10);
    rc.compute.times = {1.0};
    REQUIRE_THROWS_AS(rc.validate(), ConfigError);
}

TEST_CASE("async run with equal agents settles at delay N - 1") {
    const int N = 2;
    RunConfig rc = chain_config(N, 50);
    RunResult run = run_async(rc);
    REQUIRE(run.ledger.applied.size() == 50);
    // startup: both agents hold start iteration 0, so the first two applies
    // see deltas 0 and 1; afterwards every apply is N - 1 stale
    REQUIRE(run.ledger.applied[0] == 0);
    for (std::size_t k = 1; k < run.ledger.applied.size(); ++k)
        REQUIRE(run.ledger.applied[k] == N - 1);
    REQUIRE(run.total_samples == 50 + N);
    REQUIRE(run.max_cancel_residual <= 1e-12);
}

TEST_CASE("delay accounting holds on async runs") {
    for (int N : {2, 3, 5}) {
        RunConfig rc = chain_config(N, 200);
        for (int i = 0; i < N; ++i) rc.compute.times[i] = 1.0 + 0.3 * i;
        RunResult run = run_async(rc);
        DelayAccountingReport rep = delay_accounting_check(run.ledger, 200, N);
        INFO(rep.first_violation);
        REQUIRE(rep.ok);
        REQUIRE_FALSE(rep.n1_convention_flagged);
    }
}

TEST_CASE("single agent run flags the average-delay convention") {
    RunConfig rc = chain_config(1, 100);
    RunResult run = run_single(rc);
    REQUIRE(run.log.mode == "single");
    DelayAccountingReport rep = delay_accounting_check(run.ledger, 100, 1);
    REQUIRE(rep.ok);
    REQUIRE(rep.n1_convention_flagged);
    for (long long d : run.ledger.applied) REQUIRE(d == 0);
}

TEST_CASE("single mode reproduces the one-agent async run") {
    RunConfig rc = chain_config(1, 200);
    RunResult a = run_async(rc);
    RunResult s = run_single(rc);
    REQUIRE(a.log.rows.size() == s.log.rows.size());
    for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
        REQUIRE(a.log.rows[i].j_exact == s.log.rows[i].j_exact);
        REQUIRE(a.log.rows[i].d_norm == s.log.rows[i].d_norm);
        REQUIRE(a.log.rows[i].sim_time == s.log.rows[i].sim_time);
    }
    REQUIRE((a.theta_final - s.theta_final).norm() == 0.0);
}

TEST_CASE("sync round time is the slowest agent") {
    RunConfig rc = chain_config(4, 25);
    rc.compute.times = {1.0, 2.0, 0.5, 1.5};
    RunResult run = run_sync(rc);
    REQUIRE(run.total_sim_time == Catch::Approx(25 * 2.0));
    for (const LogRow& r : run.log.rows) REQUIRE(r.delta == 0);
    REQUIRE(run.total_samples == 4 * 25);
    REQUIRE(run.ledger.unapplied.empty());
}

TEST_CASE("async inter-apply time approaches the harmonic mean") {
    RunConfig rc = chain_config(3, 3000);
    rc.compute.times = {1.0, 2.0, 5.0};
    rc.horizon = 5;
    RunResult run = run_async(rc);
    double tbar = rc.compute.t_bar();
    REQUIRE(run.total_sim_time / rc.iterations ==
            Catch::Approx(tbar).epsilon(0.01));
}

TEST_CASE("straggler speedup matches the closed form") {
    RunConfig base = chain_config(4, 1);
    base.horizon = 5;
    double sp = speedup_experiment(base, 4, 2.0, 4000);
    REQUIRE(sp == Catch::Approx(1.75).epsilon(0.02));
}

TEST_CASE("runs are reproducible from config and seed") {
    RunConfig rc = chain_config(3, 80);
    rc.compute.times = {1.0, 1.3, 0.9};
    RunResult a = run_async(rc);
    RunResult b = run_async(rc);
    REQUIRE((a.theta_final - b.theta_final).norm() == 0.0);
    REQUIRE(a.final_j == b.final_j);
    REQUIRE(a.ledger.applied == b.ledger.applied);
}

TEST_CASE("threaded runner keeps the structural invariants") {
    RunConfig rc = chain_config(4, 120);
    RunResult run = run_parallel(rc);
    REQUIRE(run.log.mode == "parallel");
    REQUIRE(run.log.rows.size() == 120);
    REQUIRE(run.total_samples == 120);
    REQUIRE(run.max_cancel_residual <= 1e-12);
    REQUIRE(run.theta_final.allFinite());
    // delays are nonnegative and the conservation identity still holds
    DelayAccountingReport rep = delay_accounting_check(run.ledger, 120, 4);
    INFO(rep.first_violation);
    REQUIRE(rep.ok);
    for (const LogRow& r : run.log.rows) {
        REQUIRE(r.delta >= 0);
        REQUIRE(r.delta <= 120);
    }
}

TEST_CASE("full trace records the iterate path") {
    RunConfig rc = chain_config(2, 40);
    rc.record_full = true;
    RunResult run = run_async(rc);
    REQUIRE(run.record.theta.size() == 41);
    REQUIRE(run.record.d_applied.size() == 40);
    // replay: theta_{k+1} = theta_k + eta_k d_k / ||d_k||
    for (int k = 0; k < 40; ++k) {
        const Vec& d = run.record.d_applied[k];
        Vec expect = run.record.theta[k];
        if (d.norm() > 0.0) expect += run.record.eta[k] / d.norm() * d;
        REQUIRE((run.record.theta[k + 1] - expect).norm() <= 1e-14);
    }
    REQUIRE(run.record.final_j == run.final_j);
}
