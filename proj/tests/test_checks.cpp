#include "catch_amalgamated.hpp"

#include "afedpg/checks.hpp"

using namespace afedpg;

namespace {

RunConfig chain_run_config() {
    RunConfig rc;
    rc.mdp = make_chain();
    rc.num_agents = 4;
    rc.iterations = 150;
    rc.horizon = 60;
    rc.seed = 7;
    rc.schedules.eta0 = 2.0;
    rc.compute.times.assign(4, 1.0);
    rc.record_full = true;
    return rc;
}

}  // namespace

TEST_CASE("lemma report bookkeeping") {
    LemmaReport rep;
    rep.tolerance = 1e-6;
    rep.observe(-1.0, 0);
    rep.observe(1e-7, 1);
    rep.observe(-0.5, 2);
    rep.finalize();
    REQUIRE(rep.samples == 3);
    REQUIRE(rep.max_violation == 1e-7);
    REQUIRE(rep.worst_index == 1);
    REQUIRE(rep.pass);
    rep.refused = true;
    rep.finalize();
    REQUIRE_FALSE(rep.pass);
}

TEST_CASE("ascent inequality holds on a chain run with the analytic constant") {
    RunResult run = run_async(chain_run_config());
    SmoothnessConstants c = smoothness_constants(std::sqrt(2.0), 0.5, 1.0, 0.9);
    LemmaReport rep = ascent_residual_check(run, c);
    INFO("max violation " << rep.max_violation);
    REQUIRE(rep.pass);
    REQUIRE(rep.samples == 150);
}

TEST_CASE("quadratic fixture separates the analytic constant from a weakened one") {
    SmoothnessConstants c = smoothness_constants(std::sqrt(2.0), 0.5, 1.0, 0.9);
    // curvature L_g / 10 sits between the weakened constant and the real one
    RunResult run = quadratic_ascent_run(6, 200, c.l_g / 10.0, 1.0);
    REQUIRE(ascent_residual_check(run, c).pass);
    LemmaReport weak = ascent_residual_check(run, c, 1e-9, 0.01);
    REQUIRE_FALSE(weak.pass);
    REQUIRE(weak.max_violation > 1e-3);
}

TEST_CASE("learning-rate ratio bound") {
    for (double p : {0.5, 0.8, 1.0})
        for (double cc : {1.0, 2.0}) {
            LemmaReport rep = lr_bound_check(p, cc, 2000);
            INFO("p=" << p << " c=" << cc << " max " << rep.max_violation);
            REQUIRE(rep.pass);
        }
    REQUIRE_THROWS_AS(lr_bound_check(1.5, 1.0, 10), ConfigError);
    REQUIRE_THROWS_AS(lr_bound_check(0.5, 0.5, 10), ConfigError);
}

TEST_CASE("geometric-sum constant") {
    // q > p: both bases positive, constant strictly positive
    REQUIRE(lr_seq_constant(0.8, 1.6) > 0.0);
    REQUIRE(lr_seq_constant(0.8, 1.2) > 0.0);
    // q = 0 <= p: first base is 0 and the odd real root of the negative
    // second base is negative, so a = 0 and the constant collapses
    REQUIRE(lr_seq_constant(0.8, 0.0) == 0.0);
}

TEST_CASE("geometric-sum bound") {
    REQUIRE(lr_seq_bound_check(0.8, 1.6, 1.0, 2000).pass);
    REQUIRE(lr_seq_bound_check(0.8, 1.2, 1.0, 2000).pass);
    LemmaReport degen = lr_seq_bound_check(0.8, 0.0, 1.0, 2000);
    REQUIRE(degen.strictness == Strictness::report_only);
    REQUIRE_FALSE(degen.notes.empty());
}

TEST_CASE("error recursion identity on a recorded chain run") {
    RunResult run = run_async(chain_run_config());
    LemmaReport rep = error_recursion_check(run, make_chain(), 25);
    INFO("max violation " << rep.max_violation);
    REQUIRE(rep.pass);
    REQUIRE_FALSE(rep.refused);
}

TEST_CASE("error recursion refuses agent-anchored runs") {
    RunConfig rc = chain_run_config();
    rc.variant = Variant::agent_anchor;
    RunResult run = run_async(rc);
    LemmaReport rep = error_recursion_check(run, make_chain());
    REQUIRE(rep.refused);
    REQUIRE_FALSE(rep.pass);
    REQUIRE_FALSE(rep.notes.empty());
}

TEST_CASE("error recursion on the analytic quadratic is exact") {
    LemmaReport rep = synthetic_recursion_check(6, 80, 3);
    INFO("max violation " << rep.max_violation);
    REQUIRE(rep.pass);
    REQUIRE(rep.max_violation <= 1e-12);
}

TEST_CASE("finite-difference Hessian products match the analytic quadratic") {
    // softmax-free sanity: compare against a second FD step size on the chain
    TabularMDP m = make_chain();
    RngStream rng(4, "hv_test");
    Vec th(10), v(10);
    for (int i = 0; i < 10; ++i) {
        th[i] = rng.normal();
        v[i] = rng.normal();
    }
    Vec hv = fd_hessian_vec(m, th, v);
    // linearity in v
    Vec hv2 = fd_hessian_vec(m, th, 2.0 * v);
    REQUIRE((hv2 - 2.0 * hv).norm() <= 1e-5 * (1.0 + hv.norm()));
    REQUIRE(fd_hessian_vec(m, th, Vec::Zero(10)).norm() == 0.0);
}

TEST_CASE("truncation budget") {
    REQUIRE(truncation_budget(std::sqrt(2.0), 1.0, 0.0, 5) == 0.0);
    double g = 0.9;
    int T = 50;
    double expect = std::sqrt(2.0) * std::pow(g, T) * (T + 10.0) / 0.1;
    REQUIRE(truncation_budget(std::sqrt(2.0), 1.0, g, T) == Catch::Approx(expect));
}

TEST_CASE("estimator unbiasedness on the bandit") {
    TabularMDP m = make_bandit();
    SoftmaxPolicy pi(1, 2);
    UnbiasednessReport rep = unbiasedness_check(m, pi, 1, 2000, 13);
    INFO("deviation " << rep.mean_deviation << " bound " << rep.bound);
    REQUIRE(rep.summary.pass);
    REQUIRE(rep.sigma_g_hat > 0.0);
}

TEST_CASE("Fisher matrix of the uniform bandit policy") {
    TabularMDP m = make_bandit();
    SoftmaxPolicy pi(1, 2);
    FisherReport rep = fisher_estimate(m, pi);
    // scores are (+-1/2, -+1/2); both outer products equal
    // [[1/4, -1/4], [-1/4, 1/4]], so F has eigenvalues {0, 1/2}
    REQUIRE(rep.rank == 1);
    REQUIRE(rep.min_nonzero_eig == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(rep.max_eig == Catch::Approx(0.5).margin(1e-12));
    REQUIRE_FALSE(rep.degenerate);
    REQUIRE(rep.symmetry_residual <= 1e-14);
}

TEST_CASE("delay accounting check rejects inconsistent ledgers") {
    DelayLedger ledger;
    ledger.applied = {0, 1, 1};
    ledger.omega = {2, 2, 2};
    ledger.unapplied = {1, 0};
    ledger.omega_end = 2;
    // inclusive delays: (0+1)+(1+1)+(1+1) + (1+1)+(0+1) = 8 = omega total
    DelayAccountingReport rep = delay_accounting_check(ledger, 3, 2);
    INFO(rep.first_violation);
    REQUIRE(rep.ok);
    ledger.applied[0] = 2;  // break conservation
    REQUIRE_FALSE(delay_accounting_check(ledger, 3, 2).ok);
}

TEST_CASE("convergence report") {
    RunConfig rc = chain_run_config();
    rc.record_full = false;
    RunResult run = run_async(rc);
    double j_star = optimal_return(rc.mdp);
    SmoothnessConstants c = smoothness_constants(std::sqrt(2.0), 0.5, 1.0, 0.9);
    ConvergenceReport rep =
        convergence_report(run, j_star, rc.schedules, c, 1.0, run.ledger.delta_bar());
    REQUIRE(rep.gap.size() == 151);
    REQUIRE(rep.initial_gap > 0.0);
    REQUIRE(rep.final_gap < rep.initial_gap);
    REQUIRE(rep.term_init >= 0.0);
    REQUIRE(rep.term_c1_sigma > 0.0);
}

TEST_CASE("ab bound margins are reported without gating") {
    RunResult run = run_async(chain_run_config());
    SmoothnessConstants c = smoothness_constants(std::sqrt(2.0), 0.5, 1.0, 0.9);
    AbBoundsReport rep = ab_bounds_check(run, make_chain(), c, chain_run_config().schedules, 10);
    REQUIRE(rep.summary.strictness == Strictness::report_only);
    REQUIRE(rep.rows.size() == 10);
    for (const AbBoundRow& r : rep.rows) {
        REQUIRE(r.a_bound >= 0.0);
        REQUIRE(r.b_bound >= 0.0);
        REQUIRE(r.c_bound >= 0.0);
    }
}
