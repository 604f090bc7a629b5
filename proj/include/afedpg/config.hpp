#pragma once

// Experiment configuration (JSON), environment factory, run dispatch, and the
// on-disk outputs: per-iteration log.csv and summary.json with the resolved
// config and its hash.

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "afedpg/checks.hpp"
#include "afedpg/sim.hpp"

namespace afedpg {

using nlohmann::json;

inline constexpr int kLogSchemaVersion = 1;

struct EnvSpec {
    std::string kind = "bandit";  // bandit | chain | gridworld | random
    int num_states = 5;           // chain length / random size
    int side = 5;                 // gridworld side
    int num_actions = 2;          // random only
    double gamma = -1.0;          // -1 = environment default
    std::uint64_t seed = 0;       // random only
};

struct CheckToggles {
    bool ascent = true;
    bool recursion = true;
    bool delay_accounting = true;
    bool ab_bounds = false;       // report-only suites are opt-in
    bool convergence = false;
};

struct ExperimentConfig {
    std::string mode = "async";   // async | sync | single | parallel
    std::string variant = "server_anchor";
    EnvSpec env;
    int num_agents = 1;
    ComputeModel compute;         // defaulted to all-ones if absent
    Schedules schedules;
    long long iterations = 100;
    int horizon = 0;              // 0 = derive from gamma
    std::uint64_t seed = 0;
    std::string out;
    CheckToggles checks;
    bool record_full = false;
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    detail::reject_unknown_keys(
        j, {"mode", "variant", "env", "num_agents", "compute", "schedules", "iterations",
            "horizon", "seed", "out", "checks", "record_full"},
        "config root");
    ExperimentConfig cfg;
    cfg.mode = detail::get_or<std::string>(j, "mode", cfg.mode);
    if (cfg.mode != "async" && cfg.mode != "sync" && cfg.mode != "single" &&
        cfg.mode != "parallel")
        throw ConfigError("mode must be async | sync | single | parallel");
    cfg.variant = detail::get_or<std::string>(j, "variant", cfg.variant);
    variant_from_string(cfg.variant);  // validates

    if (j.contains("env")) {
        const json& e = j.at("env");
        detail::reject_unknown_keys(
            e, {"kind", "num_states", "side", "num_actions", "gamma", "seed"}, "env");
        cfg.env.kind = detail::get_or<std::string>(e, "kind", cfg.env.kind);
        cfg.env.num_states = detail::get_or<int>(e, "num_states", cfg.env.num_states);
        cfg.env.side = detail::get_or<int>(e, "side", cfg.env.side);
        cfg.env.num_actions = detail::get_or<int>(e, "num_actions", cfg.env.num_actions);
        cfg.env.gamma = detail::get_or<double>(e, "gamma", cfg.env.gamma);
        cfg.env.seed = detail::get_or<std::uint64_t>(e, "seed", cfg.env.seed);
    }
    cfg.num_agents = detail::get_or<int>(j, "num_agents", cfg.num_agents);
    if (cfg.num_agents < 1) throw ConfigError("num_agents must be >= 1");

    if (j.contains("compute")) {
        const json& c = j.at("compute");
        detail::reject_unknown_keys(c, {"kind", "times", "sigma", "shift"}, "compute");
        std::string kind = detail::get_or<std::string>(c, "kind", "deterministic");
        if (kind == "deterministic")
            cfg.compute.kind = ComputeModel::Kind::deterministic;
        else if (kind == "lognormal")
            cfg.compute.kind = ComputeModel::Kind::lognormal;
        else
            throw ConfigError("compute.kind must be deterministic | lognormal");
        cfg.compute.times = detail::get_or<std::vector<double>>(c, "times", {});
        cfg.compute.sigma = detail::get_or<double>(c, "sigma", cfg.compute.sigma);
        cfg.compute.shift = detail::get_or<double>(c, "shift", cfg.compute.shift);
    }
    if (cfg.compute.times.empty()) cfg.compute.times.assign(cfg.num_agents, 1.0);

    if (j.contains("schedules")) {
        const json& s = j.at("schedules");
        detail::reject_unknown_keys(s, {"eta0", "p", "q"}, "schedules");
        cfg.schedules.eta0 = detail::get_or<double>(s, "eta0", cfg.schedules.eta0);
        cfg.schedules.p = detail::get_or<double>(s, "p", cfg.schedules.p);
        cfg.schedules.q = detail::get_or<double>(s, "q", cfg.schedules.q);
    }
    cfg.iterations = detail::get_or<long long>(j, "iterations", cfg.iterations);
    cfg.horizon = detail::get_or<int>(j, "horizon", cfg.horizon);
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.out = detail::get_or<std::string>(j, "out", cfg.out);
    cfg.record_full = detail::get_or<bool>(j, "record_full", cfg.record_full);

    if (j.contains("checks")) {
        const json& c = j.at("checks");
        detail::reject_unknown_keys(
            c, {"ascent", "recursion", "delay_accounting", "ab_bounds", "convergence"},
            "checks");
        cfg.checks.ascent = detail::get_or<bool>(c, "ascent", cfg.checks.ascent);
        cfg.checks.recursion = detail::get_or<bool>(c, "recursion", cfg.checks.recursion);
        cfg.checks.delay_accounting =
            detail::get_or<bool>(c, "delay_accounting", cfg.checks.delay_accounting);
        cfg.checks.ab_bounds = detail::get_or<bool>(c, "ab_bounds", cfg.checks.ab_bounds);
        cfg.checks.convergence = detail::get_or<bool>(c, "convergence", cfg.checks.convergence);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

/// Resolved config re-serialized with every default filled in. Keys are
/// emitted sorted, so the dump is canonical and hashable.
inline json resolved_config_json(const ExperimentConfig& cfg) {
    json j;
    j["mode"] = cfg.mode;
    j["variant"] = cfg.variant;
    j["env"] = {{"kind", cfg.env.kind},       {"num_states", cfg.env.num_states},
                {"side", cfg.env.side},       {"num_actions", cfg.env.num_actions},
                {"gamma", cfg.env.gamma},     {"seed", cfg.env.seed}};
    j["num_agents"] = cfg.num_agents;
    j["compute"] = {
        {"kind", cfg.compute.kind == ComputeModel::Kind::deterministic ? "deterministic"
                                                                       : "lognormal"},
        {"times", cfg.compute.times},
        {"sigma", cfg.compute.sigma},
        {"shift", cfg.compute.shift}};
    j["schedules"] = {{"eta0", cfg.schedules.eta0}, {"p", cfg.schedules.p},
                      {"q", cfg.schedules.q}};
    j["iterations"] = cfg.iterations;
    j["horizon"] = cfg.horizon;
    j["seed"] = cfg.seed;
    j["record_full"] = cfg.record_full;
    j["checks"] = {{"ascent", cfg.checks.ascent},
                   {"recursion", cfg.checks.recursion},
                   {"delay_accounting", cfg.checks.delay_accounting},
                   {"ab_bounds", cfg.checks.ab_bounds},
                   {"convergence", cfg.checks.convergence}};
    return j;
}

/// FNV-1a over the canonical dump, rendered as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& cfg) {
    std::string dump = resolved_config_json(cfg).dump();
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline TabularMDP make_env(const EnvSpec& e) {
    TabularMDP mdp;
    if (e.kind == "bandit") {
        mdp = make_bandit();
    } else if (e.kind == "chain") {
        mdp = make_chain(e.num_states, e.gamma < 0.0 ? 0.9 : e.gamma);
    } else if (e.kind == "gridworld") {
        mdp = make_gridworld(e.gamma < 0.0 ? 0.95 : e.gamma, e.side);
    } else if (e.kind == "random") {
        mdp = random_mdp(e.seed, e.num_states, e.num_actions,
                         e.gamma < 0.0 ? 0.9 : e.gamma);
    } else {
        throw ConfigError("env.kind must be bandit | chain | gridworld | random");
    }
    return mdp;
}

inline RunConfig to_run_config(const ExperimentConfig& cfg) {
    RunConfig rc;
    rc.mdp = make_env(cfg.env);
    rc.num_agents = cfg.num_agents;
    rc.iterations = cfg.iterations;
    rc.horizon = cfg.horizon > 0 ? cfg.horizon : default_horizon(rc.mdp.gamma);
    rc.schedules = cfg.schedules;
    rc.variant = variant_from_string(cfg.variant);
    rc.seed = cfg.seed;
    rc.compute = cfg.compute;
    rc.record_full = cfg.record_full;
    rc.validate();
    return rc;
}

inline RunResult execute(const ExperimentConfig& cfg) {
    RunConfig rc = to_run_config(cfg);
    RunResult res;
    if (cfg.mode == "async")
        res = run_async(rc);
    else if (cfg.mode == "sync")
        res = run_sync(rc);
    else if (cfg.mode == "single") {
        if (rc.num_agents != 1) throw ConfigError("single mode requires num_agents = 1");
        res = run_single(rc);
    } else {
        res = run_parallel(rc);
    }
    res.log.config_hash = config_hash(cfg);
    return res;
}

// -- outputs ------------------------------------------------------------------

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_log_csv(const std::string& path, const TrainingLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    out << "# afedpg log schema v" << kLogSchemaVersion << " mode=" << log.mode
        << " variant=" << log.variant << " seed=" << log.seed
        << " config=" << log.config_hash << "\n";
    out << "k,sim_time,agent_id,delta,omega,eta,alpha,d_norm,j_exact,grad_norm,e_norm\n";
    for (const LogRow& r : log.rows) {
        out << r.k << ',' << detail::fmt_g17(r.sim_time) << ',' << r.agent_id << ','
            << r.delta << ',' << r.omega << ',' << detail::fmt_g17(r.eta) << ','
            << detail::fmt_g17(r.alpha_used) << ',' << detail::fmt_g17(r.d_norm) << ','
            << detail::fmt_g17(r.j_exact) << ',' << detail::fmt_g17(r.grad_norm) << ','
            << detail::fmt_g17(r.e_norm) << '\n';
    }
}

/// First iteration at which the trailing-window mean of the gap drops to
/// 5% of the initial gap; returns the number of samples consumed to get
/// there (one per apply in async/single, N per round in sync).
struct ThresholdResult {
    bool reached = false;
    long long iteration = -1;
    long long samples = -1;
};

inline ThresholdResult samples_to_threshold(const RunResult& run, double j_star,
                                            int num_agents, const std::string& mode,
                                            double fraction = 0.05, int window = 100) {
    ThresholdResult out;
    const auto& rows = run.log.rows;
    if (rows.empty()) return out;
    const double initial_gap = j_star - rows.front().j_exact;
    const double threshold = fraction * initial_gap;
    const int per_iter = (mode == "sync") ? num_agents : 1;
    double acc = 0.0;
    std::vector<double> gaps;
    gaps.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        double gap = j_star - rows[k].j_exact;
        gaps.push_back(gap);
        acc += gap;
        if (static_cast<int>(k) >= window) acc -= gaps[k - window];
        int n = std::min<int>(window, static_cast<int>(k) + 1);
        if (acc / n <= threshold) {
            out.reached = true;
            out.iteration = static_cast<long long>(k);
            out.samples = (out.iteration + 1) * per_iter;
            return out;
        }
    }
    return out;
}

inline json lemma_report_json(const LemmaReport& rep) {
    return {{"id", rep.id},
            {"strictness", to_string(rep.strictness)},
            {"tolerance", rep.tolerance},
            {"samples", rep.samples},
            {"max_violation", rep.max_violation},
            {"worst_index", rep.worst_index},
            {"pass", rep.pass},
            {"refused", rep.refused},
            {"notes", rep.notes}};
}

inline json summary_json(const ExperimentConfig& cfg, const RunResult& run, double j_star) {
    json s;
    s["schema_version"] = kLogSchemaVersion;
    s["config"] = resolved_config_json(cfg);
    s["config_hash"] = config_hash(cfg);
    s["mode"] = cfg.mode;
    s["seed"] = cfg.seed;
    s["iterations"] = static_cast<long long>(run.log.rows.size());
    s["j_star"] = j_star;
    s["final_j"] = run.final_j;
    s["final_gap"] = j_star - run.final_j;
    if (!run.log.rows.empty())
        s["initial_gap"] = j_star - run.log.rows.front().j_exact;
    s["total_sim_time"] = run.total_sim_time;
    s["total_samples"] = run.total_samples;
    s["max_cancel_residual"] = run.max_cancel_residual;
    s["zero_direction_events"] = run.zero_direction_events;
    s["t_bar"] = cfg.compute.times.empty() ? 0.0 : cfg.compute.t_bar();
    s["t_max"] = cfg.compute.times.empty() ? 0.0 : cfg.compute.t_max();
    if (!run.ledger.applied.empty()) {
        s["delta_bar"] = run.ledger.delta_bar();
        s["omega_bar"] = run.ledger.omega_bar();
        s["delta_max"] = run.ledger.delta_max();
        s["concurrency_at_end"] = run.ledger.concurrency_at_end();
    }
    std::vector<double> theta(run.theta_final.data(),
                              run.theta_final.data() + run.theta_final.size());
    s["theta_final"] = theta;
    ThresholdResult th = samples_to_threshold(run, j_star, cfg.num_agents, cfg.mode);
    s["threshold"] = {{"reached", th.reached},
                      {"iteration", th.iteration},
                      {"samples", th.samples}};
    return s;
}

// -- sweep statistics ---------------------------------------------------------

struct MeanCi {
    double mean = 0.0;
    double ci95_half_width = 0.0;
    int n = 0;
};

/// Sample mean with a 95% two-sided Student-t half-width.
inline MeanCi mean_ci95(const std::vector<double>& xs) {
    static const double t975[] = {0.0,   12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365,
                                  2.306, 2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
                                  2.120, 2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069,
                                  2.064, 2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    MeanCi out;
    out.n = static_cast<int>(xs.size());
    if (out.n == 0) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / out.n;
    if (out.n < 2) return out;
    double var = 0.0;
    for (double x : xs) var += (x - out.mean) * (x - out.mean);
    var /= (out.n - 1);
    int df = out.n - 1;
    double t = (df <= 30) ? t975[df] : 1.96;
    out.ci95_half_width = t * std::sqrt(var / out.n);
    return out;
}

}  // namespace afedpg
