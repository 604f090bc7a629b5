#pragma once

// Discrete-event simulation of asynchronous training with heterogeneous
// agent compute times, the delay/concurrency ledger, synchronous and
// single-agent baselines, and a thread-based runner that exercises the same
// state machines under real concurrency.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "afedpg/core.hpp"

namespace afedpg {

// -- compute-time model -------------------------------------------------------

/// Per-agent compute-time law: either a fixed t_i per agent or a shifted
/// lognormal around a per-agent median (positive support, heavy-ish tail).
struct ComputeModel {
    enum class Kind { deterministic, lognormal };
    Kind kind = Kind::deterministic;
    std::vector<double> times;  // t_i, or the lognormal medians
    double sigma = 0.25;        // lognormal shape
    double shift = 0.0;         // additive offset, >= 0

    void validate(int num_agents) const {
        if (static_cast<int>(times.size()) != num_agents)
            throw ConfigError("ComputeModel: need one time per agent");
        for (double t : times)
            if (!(t > 0.0) || !std::isfinite(t))
                throw ConfigError("ComputeModel: agent times must be positive and finite");
        if (shift < 0.0) throw ConfigError("ComputeModel: shift must be >= 0");
        if (kind == Kind::lognormal && !(sigma >= 0.0))
            throw ConfigError("ComputeModel: sigma must be >= 0");
    }

    double draw(std::uint64_t seed, int agent, long long task_idx) const {
        if (kind == Kind::deterministic) return times[agent];
        RngStream rng(seed, "compute_time", static_cast<std::uint64_t>(agent),
                      static_cast<std::uint64_t>(task_idx));
        return shift + times[agent] * std::exp(sigma * rng.normal());
    }

    double t_max() const { return *std::max_element(times.begin(), times.end()); }
    double t_min() const { return *std::min_element(times.begin(), times.end()); }
    /// Harmonic mean 1 / sum(1/t_i): the steady-state inter-apply time of the
    /// asynchronous server (medians are used for the stochastic law).
    double t_bar() const {
        double inv = 0.0;
        for (double t : times) inv += 1.0 / t;
        return 1.0 / inv;
    }
};

/// Uniform times except one straggler that is `ratio` times slower.
inline ComputeModel one_straggler(int num_agents, double ratio, double t_min = 1.0) {
    ComputeModel cm;
    cm.times.assign(num_agents, t_min);
    cm.times[0] = ratio * t_min;
    return cm;
}

// -- ledger and log -----------------------------------------------------------

/// Per-run delay/concurrency bookkeeping. `applied` holds the staleness
/// delta_k = k - (start iteration of the applied payload) for each global
/// iteration; `unapplied` snapshots K - (start iteration) for every task
/// still in flight when the run stops. omega_k counts tasks in flight at the
/// instant of apply k (including the one being applied); omega_end is the
/// same count at termination.
struct DelayLedger {
    std::vector<long long> applied;
    std::vector<long long> omega;
    std::vector<long long> unapplied;
    long long omega_end = 0;

    long long iterations() const { return static_cast<long long>(applied.size()); }
    long long concurrency_at_end() const { return static_cast<long long>(unapplied.size()); }

    /// Sum of per-task in-flight spans counted inclusively (a task applied at
    /// k that started at j spans iterations j..k, i.e. delta + 1 of them).
    /// Summing instead per iteration, each apply is witnessed by omega_k
    /// tasks, which is the conservation identity the checker verifies.
    long long inclusive_delay_total() const {
        long long s = 0;
        for (long long d : applied) s += d + 1;
        for (long long d : unapplied) s += d + 1;
        return s;
    }
    long long omega_total() const {
        long long s = omega_end;
        for (long long w : omega) s += w;
        return s;
    }
    double omega_bar() const {
        return static_cast<double>(omega_total()) / (iterations() + 1.0);
    }
    /// Average delay: inclusive total over K - 1 + |C_K| terms. For a single
    /// agent that denominator is undefined by the source convention; the
    /// checker substitutes max(K, 1) and flags it.
    double delta_bar() const {
        long long K = iterations();
        long long denom = (concurrency_at_end() >= 2) ? K - 1 + concurrency_at_end()
                                                      : std::max<long long>(K, 1);
        return static_cast<double>(inclusive_delay_total()) / static_cast<double>(denom);
    }
    long long delta_max() const {
        long long m = 0;
        for (long long d : applied) m = std::max(m, d);
        for (long long d : unapplied) m = std::max(m, d);
        return m;
    }
};

struct DelayAccountingReport {
    bool ok = false;
    bool n1_convention_flagged = false;
    long long delay_total = 0;        // inclusive, integer
    long long omega_total = 0;        // integer
    double delta_bar = 0.0;
    double omega_bar = 0.0;
    std::string first_violation;
};

/// Lemma-style conservation check, exact in integer arithmetic:
///   sum(applied) + sum(unapplied) = (K + 1) * omega_bar
/// with delays counted inclusively and omega_bar averaged over iterations
/// 0..K, plus delta_bar = omega_bar (K+1)/(K-1+|C_K|) and
/// delta_bar <= omega_bar <= N.
inline DelayAccountingReport delay_accounting_check(const DelayLedger& ledger, long long K,
                                                    int N) {
    DelayAccountingReport rep;
    rep.delay_total = ledger.inclusive_delay_total();
    rep.omega_total = ledger.omega_total();
    rep.delta_bar = ledger.delta_bar();
    rep.omega_bar = ledger.omega_bar();
    if (ledger.iterations() != K) {
        rep.first_violation = "ledger iteration count differs from K";
        return rep;
    }
    if (rep.delay_total != rep.omega_total) {
        rep.first_violation = "delay conservation: sum of delays != (K+1) * omega_bar";
        return rep;
    }
    if (N == 1) {
        // K - 1 + |C_K| is undefined for one agent; delta_bar used max(K, 1).
        rep.n1_convention_flagged = true;
    } else {
        long long denom = K - 1 + ledger.concurrency_at_end();
        double expect = rep.omega_bar * (K + 1.0) / static_cast<double>(denom);
        if (std::abs(rep.delta_bar - expect) > 1e-12 * std::max(1.0, expect)) {
            rep.first_violation = "delta_bar != omega_bar (K+1)/(K-1+|C_K|)";
            return rep;
        }
        if (!(rep.delta_bar <= rep.omega_bar + 1e-12)) {
            rep.first_violation = "delta_bar > omega_bar";
            return rep;
        }
    }
    if (!(rep.omega_bar <= static_cast<double>(N) + 1e-12)) {
        rep.first_violation = "omega_bar > N";
        return rep;
    }
    rep.ok = true;
    return rep;
}

struct LogRow {
    long long k = 0;
    double sim_time = 0.0;
    int agent_id = 0;
    long long delta = 0;
    long long omega = 0;
    double eta = 0.0;
    double alpha_used = 0.0;
    double d_norm = 0.0;
    double j_exact = 0.0;
    double grad_norm = 0.0;
    double e_norm = 0.0;
};

struct TrainingLog {
    std::vector<LogRow> rows;
    std::string mode;
    std::string variant;
    std::uint64_t seed = 0;
    std::string config_hash;
};

/// Full per-iteration trace kept in memory for the lemma checks. Populated
/// only when a run is configured with record_full (vectors are O(K d)).
struct RunRecord {
    std::vector<Vec> theta;        // theta_0 .. theta_K
    std::vector<Vec> d_applied;    // per apply
    std::vector<Vec> payload_raw;  // agent's raw estimator g per apply
    std::vector<Vec> theta_tilde;  // agent's lookahead point per apply
    std::vector<Vec> grad_exact;   // grad J(theta_k) per apply
    std::vector<long long> origin_iter;
    std::vector<double> alpha_used;
    std::vector<double> eta;
    std::vector<double> j_exact;   // J(theta_k) per apply
    double final_j = 0.0;          // J(theta_K)
    Vec final_grad;                // grad J(theta_K)
};

struct RunResult {
    TrainingLog log;
    DelayLedger ledger;
    RunRecord record;          // empty unless record_full
    Vec theta_final;
    double final_j = 0.0;
    double total_sim_time = 0.0;
    double max_cancel_residual = 0.0;
    long long zero_direction_events = 0;
    long long total_samples = 0;
};

struct RunConfig {
    TabularMDP mdp;
    int num_agents = 1;
    long long iterations = 0;  // K: number of server applies (async/single) or rounds (sync)
    int horizon = 1;
    Schedules schedules;
    Variant variant = Variant::server_anchor;
    std::uint64_t seed = 0;
    ComputeModel compute;
    bool record_full = false;

    void validate() const {
        mdp.validate();
        schedules.validate();
        if (num_agents < 1) throw ConfigError("RunConfig: N must be >= 1");
        if (iterations < 1) throw ConfigError("RunConfig: K must be >= 1");
        if (horizon < 1) throw ConfigError("RunConfig: horizon must be >= 1");
        compute.validate(num_agents);
    }
};

namespace detail {

struct ExactEval {
    double j;
    Vec grad;
};

inline ExactEval exact_eval(const TabularMDP& mdp, const Vec& theta) {
    SoftmaxPolicy pi(theta, mdp.num_states, mdp.num_actions);
    ExactEval ev;
    ev.grad = exact_policy_gradient(mdp, pi);
    ev.j = exact_return(mdp, pi);
    return ev;
}

inline RngStream trajectory_stream(std::uint64_t seed, int agent, long long start_iter) {
    return RngStream(seed, "traj", static_cast<std::uint64_t>(agent),
                     static_cast<std::uint64_t>(start_iter));
}

/// Shared bookkeeping for one apply: exact columns, ledger entry, log row,
/// optional full trace. theta_before is theta_k, taken before the update.
class ApplyRecorder {
public:
    ApplyRecorder(const RunConfig& cfg, RunResult& out) : cfg_(cfg), out_(out) {}

    void record(const ServerState& before_state, const AgentResult& res,
                const ApplyRecord& rec, double sim_time, long long omega,
                const Vec& theta_before) {
        ExactEval ev = exact_eval(cfg_.mdp, theta_before);
        double e_norm = (rec.d_applied - ev.grad).norm();
        LogRow row;
        row.k = rec.k;
        row.sim_time = sim_time;
        row.agent_id = res.agent_id;
        row.delta = rec.delta;
        row.omega = omega;
        row.eta = rec.eta;
        row.alpha_used = rec.alpha_used;
        row.d_norm = rec.d_norm;
        row.j_exact = ev.j;
        row.grad_norm = ev.grad.norm();
        row.e_norm = e_norm;
        out_.log.rows.push_back(row);
        out_.ledger.applied.push_back(rec.delta);
        out_.ledger.omega.push_back(omega);
        if (rec.zero_direction) out_.zero_direction_events += 1;
        if (cfg_.record_full) {
            out_.record.theta.push_back(theta_before);
            out_.record.d_applied.push_back(rec.d_applied);
            out_.record.payload_raw.push_back(res.raw_gradient);
            out_.record.theta_tilde.push_back(res.theta_tilde);
            out_.record.grad_exact.push_back(ev.grad);
            out_.record.origin_iter.push_back(res.origin_iter);
            out_.record.alpha_used.push_back(rec.alpha_used);
            out_.record.eta.push_back(rec.eta);
            out_.record.j_exact.push_back(ev.j);
        }
        (void)before_state;
    }

    void finish(const ServerState& server) {
        ExactEval ev = exact_eval(cfg_.mdp, server.theta_curr);
        out_.final_j = ev.j;
        out_.theta_final = server.theta_curr;
        if (cfg_.record_full) {
            out_.record.theta.push_back(server.theta_curr);
            out_.record.final_j = ev.j;
            out_.record.final_grad = ev.grad;
        }
    }

private:
    const RunConfig& cfg_;
    RunResult& out_;
};

}  // namespace detail

// -- runners ------------------------------------------------------------------

/// Asynchronous event loop. All N agents start at time 0 holding theta_0 with
/// start iteration 0; the earliest completion (ties broken by lowest agent id)
/// triggers one server apply, and the finishing agent immediately restarts
/// from the updated state with start iteration equal to the new k. Exactly K
/// applies are performed. Deterministic given config + seed.
inline RunResult run_async(const RunConfig& cfg) {
    cfg.validate();
    RunResult out;
    out.log.mode = "async";
    out.log.variant = to_string(cfg.variant);
    out.log.seed = cfg.seed;
    const int N = cfg.num_agents;
    const int dim = cfg.mdp.num_states * cfg.mdp.num_actions;
    ServerState server(Vec::Zero(dim), cfg.schedules);
    detail::ApplyRecorder recorder(cfg, out);

    struct InFlight {
        AgentResult result;
        long long start_iter;
        double finish_time;
    };
    std::vector<InFlight> tasks(N);
    std::vector<long long> task_counter(N, 0);

    auto launch = [&](int agent, double now) {
        ModelMessage msg = server.snapshot();
        AgentTask task = AgentTask::from_message(agent, msg);
        RngStream rng = detail::trajectory_stream(cfg.seed, agent, task.start_iter);
        AgentResult res = agent_step(task, cfg.mdp, cfg.horizon, rng, cfg.variant);
        out.max_cancel_residual =
            std::max(out.max_cancel_residual,
                     cancellation_residual(task.theta, task.theta_prev, res.theta_tilde,
                                           task.alpha));
        double dt = cfg.compute.draw(cfg.seed, agent, task_counter[agent]);
        task_counter[agent] += 1;
        tasks[agent] = {std::move(res), task.start_iter, now + dt};
        out.total_samples += 1;
    };

    for (int i = 0; i < N; ++i) launch(i, 0.0);

    double now = 0.0;
    for (long long applies = 0; applies < cfg.iterations; ++applies) {
        int next = 0;
        for (int i = 1; i < N; ++i)
            if (tasks[i].finish_time < tasks[next].finish_time) next = i;
        now = tasks[next].finish_time;
        Vec theta_before = server.theta_curr;
        const AgentResult& res = tasks[next].result;
        ApplyRecord rec = server_apply(server, res.payload, res.origin_iter, cfg.variant);
        recorder.record(server, res, rec, now, N, theta_before);
        launch(next, now);
    }
    // snapshot unapplied delays from the tasks still in flight
    for (int i = 0; i < N; ++i)
        out.ledger.unapplied.push_back(server.k - tasks[i].start_iter);
    out.ledger.omega_end = N;
    out.total_sim_time = now;
    recorder.finish(server);
    return out;
}

/// Synchronous baseline: per round every agent computes at the current model,
/// raw payloads are averaged, and one momentum + normalized apply with
/// delta = 0 advances the round. Round time is the max of the agents' drawn
/// compute times.
inline RunResult run_sync(const RunConfig& cfg) {
    cfg.validate();
    RunResult out;
    out.log.mode = "sync";
    out.log.variant = to_string(cfg.variant);
    out.log.seed = cfg.seed;
    const int N = cfg.num_agents;
    const int dim = cfg.mdp.num_states * cfg.mdp.num_actions;
    ServerState server(Vec::Zero(dim), cfg.schedules);
    detail::ApplyRecorder recorder(cfg, out);

    double now = 0.0;
    for (long long round = 0; round < cfg.iterations; ++round) {
        ModelMessage msg = server.snapshot();
        Vec mean_payload = Vec::Zero(dim);
        AgentResult representative;
        double round_time = 0.0;
        for (int i = 0; i < N; ++i) {
            AgentTask task = AgentTask::from_message(i, msg);
            RngStream rng = detail::trajectory_stream(cfg.seed, i, round);
            AgentResult res = agent_step(task, cfg.mdp, cfg.horizon, rng, cfg.variant);
            out.max_cancel_residual =
                std::max(out.max_cancel_residual,
                         cancellation_residual(task.theta, task.theta_prev, res.theta_tilde,
                                               task.alpha));
            mean_payload += res.payload;
            round_time = std::max(round_time, cfg.compute.draw(cfg.seed, i, round));
            if (i == 0) representative = std::move(res);
            out.total_samples += 1;
        }
        mean_payload /= static_cast<double>(N);
        // the averaged raw gradient is also recorded as the round's payload
        representative.payload = mean_payload;
        representative.raw_gradient = mean_payload;
        now += round_time;
        Vec theta_before = server.theta_curr;
        ApplyRecord rec = server_apply(server, mean_payload, msg.iter, cfg.variant);
        recorder.record(server, representative, rec, now, N, theta_before);
    }
    out.total_sim_time = now;
    recorder.finish(server);
    return out;
}

/// Single-agent serial policy gradient: N = 1, delta = 0, same schedules and
/// estimator. Produces the same iterate sequence as run_async with N = 1.
inline RunResult run_single(const RunConfig& cfg) {
    RunConfig c = cfg;
    if (c.num_agents != 1) throw ConfigError("run_single: N must be 1");
    RunResult out = run_async(c);
    out.log.mode = "single";
    return out;
}

/// Sync vs async global time with equal total sample budgets: sync runs
/// total_samples / N rounds of N samples, async runs total_samples applies of
/// one sample each. Returns sync time / async time.
inline double speedup_experiment(const RunConfig& base, int num_agents, double ratio,
                                 long long total_samples) {
    RunConfig cfg = base;
    cfg.num_agents = num_agents;
    cfg.compute = one_straggler(num_agents, ratio);
    cfg.record_full = false;

    RunConfig sync_cfg = cfg;
    sync_cfg.iterations = total_samples / num_agents;
    RunConfig async_cfg = cfg;
    async_cfg.iterations = total_samples;

    RunResult sync_res = run_sync(sync_cfg);
    RunResult async_res = run_async(async_cfg);
    return sync_res.total_sim_time / async_res.total_sim_time;
}

/// Thread-per-agent runner over the same state machines. Server applies are
/// totally ordered and atomic; agents exchange immutable snapshots through
/// queues. Delays come from real scheduling jitter, so the log is not
/// deterministic, but every structural invariant still holds and is checked
/// by the test suite. sim_time is wall-clock seconds since run start.
inline RunResult run_parallel(const RunConfig& cfg) {
    cfg.validate();
    RunResult out;
    out.log.mode = "parallel";
    out.log.variant = to_string(cfg.variant);
    out.log.seed = cfg.seed;
    const int N = cfg.num_agents;
    const int dim = cfg.mdp.num_states * cfg.mdp.num_actions;
    ServerState server(Vec::Zero(dim), cfg.schedules);
    detail::ApplyRecorder recorder(cfg, out);

    struct Delivery {
        AgentResult result;
        int agent_id;
    };
    std::mutex m;
    std::condition_variable server_cv;
    std::vector<std::optional<ModelMessage>> mailboxes(N);
    std::vector<std::condition_variable> agent_cv(N);
    std::queue<Delivery> deliveries;
    bool stop = false;
    std::string worker_error;

    auto worker = [&](int agent) {
        try {
            while (true) {
                ModelMessage msg;
                {
                    std::unique_lock<std::mutex> lk(m);
                    agent_cv[agent].wait(lk, [&] { return stop || mailboxes[agent].has_value(); });
                    if (stop && !mailboxes[agent].has_value()) return;
                    msg = std::move(*mailboxes[agent]);
                    mailboxes[agent].reset();
                }
                AgentTask task = AgentTask::from_message(agent, msg);
                RngStream rng = detail::trajectory_stream(cfg.seed, agent, task.start_iter);
                AgentResult res = agent_step(task, cfg.mdp, cfg.horizon, rng, cfg.variant);
                double cancel = cancellation_residual(task.theta, task.theta_prev,
                                                      res.theta_tilde, task.alpha);
                {
                    std::lock_guard<std::mutex> lk(m);
                    out.max_cancel_residual = std::max(out.max_cancel_residual, cancel);
                    deliveries.push({std::move(res), agent});
                }
                server_cv.notify_one();
            }
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lk(m);
            worker_error = e.what();
            stop = true;
            server_cv.notify_one();
        }
    };

    std::vector<long long> start_iters(N, 0);
    {
        std::lock_guard<std::mutex> lk(m);
        for (int i = 0; i < N; ++i) mailboxes[i] = server.snapshot();
    }
    std::vector<std::thread> threads;
    threads.reserve(N);
    for (int i = 0; i < N; ++i) threads.emplace_back(worker, i);
    for (int i = 0; i < N; ++i) agent_cv[i].notify_one();

    auto t0 = std::chrono::steady_clock::now();
    for (long long applies = 0; applies < cfg.iterations; ++applies) {
        Delivery del;
        {
            std::unique_lock<std::mutex> lk(m);
            server_cv.wait(lk, [&] { return stop || !deliveries.empty(); });
            if (stop) break;
            del = std::move(deliveries.front());
            deliveries.pop();
        }
        double now = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        Vec theta_before = server.theta_curr;
        ApplyRecord rec =
            server_apply(server, del.result.payload, del.result.origin_iter, cfg.variant);
        out.total_samples += 1;
        recorder.record(server, del.result, rec, now, N, theta_before);
        {
            std::lock_guard<std::mutex> lk(m);
            // relaunch unconditionally so every agent holds a task at the
            // termination snapshot, matching the event-driven runner
            start_iters[del.agent_id] = server.k;
            mailboxes[del.agent_id] = server.snapshot();
            agent_cv[del.agent_id].notify_one();
        }
        out.total_sim_time = now;
    }
    {
        std::lock_guard<std::mutex> lk(m);
        stop = true;
    }
    for (int i = 0; i < N; ++i) agent_cv[i].notify_one();
    for (auto& t : threads) t.join();
    if (!worker_error.empty())
        throw InternalError("run_parallel: worker failed: " + worker_error);

    // in-flight snapshot: agents whose next task was never delivered
    for (int i = 0; i < N; ++i)
        out.ledger.unapplied.push_back(server.k - start_iters[i]);
    out.ledger.omega_end = N;
    recorder.finish(server);
    return out;
}

}  // namespace afedpg
