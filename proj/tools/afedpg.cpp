// Experiment runner: single runs, sweeps over agents/straggler ratio/anchor
// variant, and the numerical check suites. See README for the config schema.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "afedpg/config.hpp"

namespace fs = std::filesystem;
using namespace afedpg;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    long long seed_override = -1;
};

ExperimentConfig load_with_overrides(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts.config_path);
    if (opts.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed_override);
    if (!opts.out_dir.empty()) cfg.out = opts.out_dir;
    return cfg;
}

fs::path resolve_out_dir(const ExperimentConfig& cfg) {
    if (!cfg.out.empty()) return cfg.out;
    const char* env = std::getenv("AFEDPG_OUT");
    fs::path root = env ? env : "out";
    return root / config_hash(cfg);
}

int cmd_run(const CommonOpts& opts) {
    ExperimentConfig cfg = load_with_overrides(opts);
    RunResult res = execute(cfg);
    RunConfig rc = to_run_config(cfg);
    double j_star = optimal_return(rc.mdp);
    fs::path dir = resolve_out_dir(cfg);
    fs::create_directories(dir);
    write_log_csv((dir / "log.csv").string(), res.log);
    json summary = summary_json(cfg, res, j_star);
    std::ofstream((dir / "summary.json").string()) << summary.dump(2) << "\n";
    std::cout << "final_gap=" << detail::fmt_g17(j_star - res.final_j);
    if (!res.ledger.applied.empty())
        std::cout << " delta_bar=" << detail::fmt_g17(res.ledger.delta_bar());
    std::cout << " out=" << dir.string() << "\n";
    return 0;
}

struct CellMetrics {
    std::vector<double> final_gap, sim_time, samples_total, samples_per_agent;
    int reached = 0, seeds = 0;
};

CellMetrics run_cell(const ExperimentConfig& base, int seeds) {
    CellMetrics m;
    m.seeds = seeds;
    for (int s = 0; s < seeds; ++s) {
        ExperimentConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(s);
        RunResult res = execute(cfg);
        RunConfig rc = to_run_config(cfg);
        double j_star = optimal_return(rc.mdp);
        m.final_gap.push_back(j_star - res.final_j);
        m.sim_time.push_back(res.total_sim_time);
        ThresholdResult th = samples_to_threshold(res, j_star, cfg.num_agents, cfg.mode);
        if (th.reached) {
            m.reached += 1;
            m.samples_total.push_back(static_cast<double>(th.samples));
            m.samples_per_agent.push_back(static_cast<double>(th.samples) / cfg.num_agents);
        }
    }
    return m;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis,
              const std::vector<double>& values, int seeds) {
    ExperimentConfig base = load_with_overrides(opts);
    fs::path dir = resolve_out_dir(base);
    fs::create_directories(dir);
    std::ofstream out((dir / "sweep.csv").string(), std::ios::binary);
    out << "axis,value,seeds,reached,final_gap_mean,final_gap_ci95,"
           "samples_total_mean,samples_total_ci95,samples_per_agent_mean,"
           "samples_per_agent_ci95,sim_time_mean,speedup_measured,speedup_predicted\n";

    struct Cell {
        std::string label;
        ExperimentConfig cfg;
        double speedup_measured = 0.0, speedup_predicted = 0.0;
        bool has_speedup = false;
    };
    std::vector<Cell> cells;
    if (axis == "agents") {
        for (double v : values) {
            Cell c;
            c.cfg = base;
            c.cfg.num_agents = static_cast<int>(v);
            if (static_cast<int>(c.cfg.compute.times.size()) != c.cfg.num_agents)
                c.cfg.compute.times.assign(c.cfg.num_agents, 1.0);
            c.label = std::to_string(c.cfg.num_agents);
            cells.push_back(std::move(c));
        }
    } else if (axis == "ratio") {
        for (double r : values) {
            Cell c;
            c.cfg = base;
            c.cfg.compute = one_straggler(c.cfg.num_agents, r);
            c.label = detail::fmt_g17(r);
            RunConfig rc = to_run_config(c.cfg);
            c.speedup_measured =
                speedup_experiment(rc, c.cfg.num_agents, r, c.cfg.iterations);
            c.speedup_predicted = ((c.cfg.num_agents - 1) * r + 1) / c.cfg.num_agents;
            c.has_speedup = true;
            cells.push_back(std::move(c));
        }
    } else if (axis == "variant") {
        for (const char* v : {"server_anchor", "agent_anchor"}) {
            Cell c;
            c.cfg = base;
            c.cfg.variant = v;
            c.label = v;
            cells.push_back(std::move(c));
        }
    } else {
        std::cerr << "sweep: axis must be agents | ratio | variant\n";
        return 2;
    }

    for (const Cell& c : cells) {
        CellMetrics m = run_cell(c.cfg, seeds);
        MeanCi gap = mean_ci95(m.final_gap);
        MeanCi st = mean_ci95(m.samples_total);
        MeanCi spa = mean_ci95(m.samples_per_agent);
        MeanCi t = mean_ci95(m.sim_time);
        out << axis << ',' << c.label << ',' << m.seeds << ',' << m.reached << ','
            << detail::fmt_g17(gap.mean) << ',' << detail::fmt_g17(gap.ci95_half_width) << ','
            << detail::fmt_g17(st.mean) << ',' << detail::fmt_g17(st.ci95_half_width) << ','
            << detail::fmt_g17(spa.mean) << ',' << detail::fmt_g17(spa.ci95_half_width) << ','
            << detail::fmt_g17(t.mean) << ','
            << detail::fmt_g17(c.has_speedup ? c.speedup_measured : 0.0) << ','
            << detail::fmt_g17(c.has_speedup ? c.speedup_predicted : 0.0) << '\n';
        std::cout << axis << "=" << c.label << " final_gap=" << detail::fmt_g17(gap.mean)
                  << " reached=" << m.reached << "/" << m.seeds << "\n";
    }
    std::cout << "sweep written to " << (dir / "sweep.csv").string() << "\n";
    return 0;
}

// Built-in scenarios used by the check suites.
ExperimentConfig chain_check_config() {
    ExperimentConfig cfg;
    cfg.mode = "async";
    cfg.env.kind = "chain";
    cfg.env.num_states = 5;
    cfg.num_agents = 4;
    cfg.compute.times.assign(4, 1.0);
    cfg.iterations = 200;
    cfg.schedules.eta0 = 2.0;
    cfg.record_full = true;
    cfg.seed = 7;
    return cfg;
}

struct CheckOutcome {
    json reports = json::array();
    bool strict_ok = true;

    void add(const LemmaReport& rep, bool gate) {
        reports.push_back(lemma_report_json(rep));
        if (gate && !rep.pass) strict_ok = false;
    }
};

int cmd_check(const CommonOpts& opts, bool all, bool negative_controls) {
    CheckOutcome oc;
    ExperimentConfig chain_cfg = chain_check_config();
    RunResult chain_run = execute(chain_cfg);
    RunConfig chain_rc = to_run_config(chain_cfg);
    SmoothnessConstants consts =
        smoothness_constants(std::sqrt(2.0), 0.5, chain_rc.mdp.r_max, chain_rc.mdp.gamma);

    if (negative_controls) {
        // perturbed checks must fail; exit 0 iff they all do
        SmoothnessConstants qc;
        qc.l_g = consts.l_g;
        RunResult quad = quadratic_ascent_run(6, 200, consts.l_g / 10.0, 1.0);
        LemmaReport quad_strict = ascent_residual_check(quad, qc);
        LemmaReport weak = ascent_residual_check(quad, qc, 1e-9, 0.01);
        bool ok = quad_strict.pass && !weak.pass;
        std::cout << "[control] ascent with L_g/100 on the overshoot fixture: "
                  << (ok ? "violates as designed" : "UNEXPECTED OUTCOME") << "\n";
        LemmaReport degen = lr_seq_bound_check(0.8, 0.0, 1.0, 1000);
        bool ok2 = degen.max_violation > 0.0;
        std::cout << "[control] degenerate-constant sum bound: "
                  << (ok2 ? "violates as designed" : "UNEXPECTED PASS") << "\n";
        return (ok && ok2) ? 0 : 1;
    }

    // cancellation + normalized step on the bundled scenario, both variants
    for (const char* variant : {"server_anchor", "agent_anchor"}) {
        ExperimentConfig cfg = chain_cfg;
        cfg.variant = variant;
        RunResult run = (std::string(variant) == "server_anchor") ? chain_run : execute(cfg);
        LemmaReport rep;
        rep.id = std::string("lookahead_cancellation_") + variant;
        rep.strictness = Strictness::exact_identity;
        rep.tolerance = 1e-12;
        rep.observe(run.max_cancel_residual, 0);
        rep.finalize();
        oc.add(rep, true);

        LemmaReport step;
        step.id = std::string("normalized_step_") + variant;
        step.strictness = Strictness::exact_identity;
        step.tolerance = 1e-12;
        for (std::size_t k = 0; k + 1 < run.record.theta.size(); ++k) {
            double len = (run.record.theta[k + 1] - run.record.theta[k]).norm();
            step.observe(std::abs(len - run.record.eta[k]), static_cast<long long>(k));
        }
        step.finalize();
        oc.add(step, true);
    }

    // delay accounting
    for (int n : {2, 4, 8}) {
        ExperimentConfig cfg = chain_cfg;
        cfg.record_full = false;
        cfg.num_agents = n;
        cfg.compute.times.assign(n, 1.0);
        cfg.iterations = 1000;
        RunResult run = execute(cfg);
        DelayAccountingReport dar = delay_accounting_check(run.ledger, cfg.iterations, n);
        LemmaReport rep;
        rep.id = "delay_accounting_n" + std::to_string(n);
        rep.strictness = Strictness::exact_identity;
        rep.tolerance = 0.0;
        rep.observe(dar.ok ? 0.0 : 1.0, 0);
        rep.notes = dar.first_violation;
        rep.finalize();
        oc.add(rep, true);
    }

    oc.add(ascent_residual_check(chain_run, consts), true);
    oc.add(error_recursion_check(chain_run, chain_rc.mdp), true);
    oc.add(synthetic_recursion_check(6, 300, 11), true);

    for (double p : {0.5, 0.8, 1.0})
        for (double c : {1.0, 2.0}) oc.add(lr_bound_check(p, c, 100000), true);
    oc.add(lr_seq_bound_check(0.8, 1.6, 1.0, 10000), true);
    oc.add(lr_seq_bound_check(0.8, 1.2, 1.0, 10000), true);

    {
        TabularMDP bandit = make_bandit();
        SoftmaxPolicy pi(bandit.num_states, bandit.num_actions);
        oc.add(unbiasedness_check(bandit, pi, 1, 10000, 3).summary, true);
        TabularMDP chain = make_chain();
        SoftmaxPolicy pic(chain.num_states, chain.num_actions);
        oc.add(unbiasedness_check(chain, pic, default_horizon(chain.gamma), 10000, 3).summary,
               true);
    }

    if (all) {
        oc.add(lr_seq_bound_check(0.8, 0.0, 1.0, 10000), false);
        oc.add(ab_bounds_check(chain_run, chain_rc.mdp, consts, chain_cfg.schedules).summary,
               false);
        double j_star = optimal_return(chain_rc.mdp);
        NoiseEstimate noise = estimate_sigma_g(
            chain_rc.mdp, SoftmaxPolicy(chain_rc.mdp.num_states, chain_rc.mdp.num_actions),
            chain_rc.horizon, 200, 5);
        ConvergenceReport conv =
            convergence_report(chain_run, j_star, chain_cfg.schedules, consts,
                               noise.sigma_g_hat, chain_run.ledger.delta_bar());
        std::cout << "[report] convergence: final_gap=" << conv.final_gap
                  << " tail_slope=" << conv.tail_slope << " (reference "
                  << conv.reference_slope << ")\n";
        FisherReport fr = fisher_estimate(
            chain_rc.mdp, SoftmaxPolicy(chain_rc.mdp.num_states, chain_rc.mdp.num_actions));
        std::cout << "[report] fisher surrogate: min_nonzero_eig=" << fr.min_nonzero_eig
                  << " rank=" << fr.rank << "\n";
    }

    for (const auto& r : oc.reports)
        std::cout << (r.at("pass").get<bool>() ? "[pass] " : "[FAIL] ")
                  << r.at("id").get<std::string>()
                  << " max_violation=" << r.at("max_violation").dump() << "\n";
    if (!opts.out_dir.empty()) {
        fs::create_directories(opts.out_dir);
        std::ofstream(fs::path(opts.out_dir) / "checks.json") << oc.reports.dump(2) << "\n";
    }
    return oc.strict_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"asynchronous federated policy-gradient trainer and verifier"};
    app.require_subcommand(1);
    CommonOpts opts;

    auto* run = app.add_subcommand("run", "execute one configured run");
    run->add_option("--config", opts.config_path, "JSON config path")->required();
    run->add_option("--out", opts.out_dir, "output directory");
    run->add_option("--seed", opts.seed_override, "master seed override");

    std::string axis = "agents";
    std::vector<double> values;
    int seeds = 10;
    auto* sweep = app.add_subcommand("sweep", "run a one-axis sweep with seed replication");
    sweep->add_option("--config", opts.config_path, "base JSON config path")->required();
    sweep->add_option("--out", opts.out_dir, "output directory");
    sweep->add_option("--seed", opts.seed_override, "base seed override");
    sweep->add_option("--axis", axis, "agents | ratio | variant");
    sweep->add_option("--values", values, "axis values (ignored for variant)");
    sweep->add_option("--seeds", seeds, "seeds per cell");

    bool all = false, negative_controls = false;
    std::string scope = "strict";
    auto* check = app.add_subcommand("check", "run the numerical verification suites");
    check->add_option("scope", scope, "strict (default) | all");
    check->add_option("--out", opts.out_dir, "directory for checks.json");
    check->add_flag("--all", all, "include report-only suites");
    check->add_flag("--negative-controls", negative_controls,
                    "run perturbed checks that must fail");

    CLI11_PARSE(app, argc, argv);
    try {
        if (app.got_subcommand(run)) return cmd_run(opts);
        if (app.got_subcommand(sweep)) return cmd_sweep(opts, axis, values, seeds);
        if (scope == "all") all = true;
        else if (scope != "strict") {
            std::cerr << "check: unknown scope \"" << scope << "\" (strict | all)\n";
            return 2;
        }
        return cmd_check(opts, all, negative_controls);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
