#pragma once

// The asynchronous federated policy-gradient state machines: lookahead at the
// agent, normalized momentum apply at the server, and the polynomial
// learning-rate schedules. Two momentum-anchor placements are supported:
//
//   server_anchor (default): the agent ships the raw estimate g; the server
//     combines (1 - alpha_j) d_prev + alpha_j g against the direction it
//     applied most recently. This is the reading the error-recursion analysis
//     relies on (the applied direction chains off the previously applied one).
//
//   agent_anchor: the agent combines against the anchor direction that was
//     shipped to it together with the model, which may be stale by the time
//     the payload arrives. This is the pseudocode read literally.
//
// Both are first-class and compared by the acceptance suite.

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "afedpg/estimator.hpp"
#include "afedpg/policy.hpp"

namespace afedpg {

enum class Variant { server_anchor, agent_anchor };

inline Variant variant_from_string(const std::string& s) {
    if (s == "server_anchor") return Variant::server_anchor;
    if (s == "agent_anchor") return Variant::agent_anchor;
    throw ConfigError("unknown variant: " + s);
}

inline const char* to_string(Variant v) {
    return v == Variant::server_anchor ? "server_anchor" : "agent_anchor";
}

/// alpha_k = (1/(k+1))^p and eta_k = eta0 (1/(k+1))^q. alpha_0 = 1 for any p,
/// which makes the undefined anchor at k = 0 irrelevant.
struct Schedules {
    double eta0 = 0.1;
    double p = 0.8;
    double q = 1.0;

    void validate() const {
        if (!(eta0 > 0.0)) throw ConfigError("Schedules: eta0 must be > 0");
        if (!(p >= 0.0 && p < 1.0)) throw ConfigError("Schedules: p must lie in [0, 1)");
        if (!(q >= 0.0)) throw ConfigError("Schedules: q must be >= 0");
    }
    double alpha(long long k) const { return std::pow(1.0 / (k + 1.0), p); }
    double eta(long long k) const { return eta0 * std::pow(1.0 / (k + 1.0), q); }
};

/// theta_tilde = theta + ((1 - alpha)/alpha) (theta - theta_prev).
/// Equivalently theta = (1 - alpha) theta_prev + alpha theta_tilde.
inline Vec lookahead(const Vec& theta, const Vec& theta_prev, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ConfigError("lookahead: alpha must lie in (0, 1]");
    return theta + ((1.0 - alpha) / alpha) * (theta - theta_prev);
}

/// Norm of (1 - alpha)(theta_prev - theta) + alpha (theta_tilde - theta):
/// the vector whose image under the Hessian is the second-order correction
/// term. Zero to machine precision whenever theta_tilde came from lookahead.
inline double cancellation_residual(const Vec& theta, const Vec& theta_prev,
                                    const Vec& theta_tilde, double alpha) {
    return ((1.0 - alpha) * (theta_prev - theta) + alpha * (theta_tilde - theta)).norm();
}

/// The server -> agent message: everything an agent needs to start a task.
/// This in-process record is the schema a wire protocol would serialize.
struct ModelMessage {
    long long iter = 0;   // global iteration index of theta
    Vec theta;            // theta_iter
    Vec theta_prev;       // theta_{iter-1} (theta_0 at iter = 0)
    Vec d_anchor;         // last applied direction (zero vector before any apply)
    double alpha = 1.0;   // schedule weight at `iter`
};

/// One in-flight computation at an agent.
struct AgentTask {
    int agent_id = 0;
    long long start_iter = 0;
    Vec theta;
    Vec theta_prev;
    Vec d_anchor;
    double alpha = 1.0;

    static AgentTask from_message(int agent_id, const ModelMessage& msg) {
        return {agent_id, msg.iter, msg.theta, msg.theta_prev, msg.d_anchor, msg.alpha};
    }
};

struct AgentResult {
    Vec payload;      // raw g under server_anchor, combined direction otherwise
    Vec raw_gradient; // g(tau_tilde, theta_tilde), kept for analysis
    Vec theta_tilde;  // the lookahead point the sample was drawn at
    long long origin_iter = 0;
    int agent_id = 0;
    double alpha = 1.0;
};

/// Algorithm step at the agent: lookahead with the weight of its start
/// iteration, sample one trajectory under the lookahead policy, build the
/// payload per the anchor variant.
inline AgentResult agent_step(const AgentTask& task, const TabularMDP& mdp, int horizon,
                              RngStream& rng, Variant variant) {
    AgentResult res;
    res.agent_id = task.agent_id;
    res.origin_iter = task.start_iter;
    res.alpha = task.alpha;
    res.theta_tilde = lookahead(task.theta, task.theta_prev, task.alpha);
    SoftmaxPolicy pi(res.theta_tilde, mdp.num_states, mdp.num_actions);
    Trajectory traj = sample_trajectory(mdp, pi, horizon, rng);
    res.raw_gradient = reinforce_gradient(traj, pi, mdp.gamma);
    res.payload = (variant == Variant::agent_anchor)
                      ? momentum_combine(task.d_anchor, res.raw_gradient, task.alpha)
                      : res.raw_gradient;
    return res;
}

struct ApplyRecord {
    long long k = 0;       // global iteration at which the apply happened
    long long delta = 0;   // k - origin_iter
    double alpha_used = 0.0;
    double eta = 0.0;
    double d_norm = 0.0;   // pre-normalization norm of the applied direction
    bool zero_direction = false;
    Vec d_applied;
};

struct ServerState {
    long long k = 0;
    Vec theta_curr;
    Vec theta_prev;
    Vec d_last_applied;
    Schedules schedules;

    explicit ServerState(Vec theta0, Schedules sched)
        : theta_curr(theta0), theta_prev(theta0),
          d_last_applied(Vec::Zero(theta0.size())), schedules(sched) {
        schedules.validate();
    }

    ModelMessage snapshot() const {
        return {k, theta_curr, theta_prev, d_last_applied, schedules.alpha(k)};
    }
};

/// One global iteration at the server. Under server_anchor the momentum
/// combination happens here, against the previously applied direction; under
/// agent_anchor the payload already is the direction. The move is the
/// normalized step theta + eta_k d/||d||; a zero direction skips the move
/// (theta unchanged) but still advances k.
inline ApplyRecord server_apply(ServerState& server, const Vec& payload,
                                long long origin_iter, Variant variant) {
    if (origin_iter > server.k)
        throw InputError("server_apply: payload from the future");
    if (!payload.allFinite())
        throw InputError("server_apply: payload has non-finite entries");
    ApplyRecord rec;
    rec.k = server.k;
    rec.delta = server.k - origin_iter;
    rec.alpha_used = server.schedules.alpha(origin_iter);
    rec.eta = server.schedules.eta(server.k);
    Vec d = (variant == Variant::server_anchor)
                ? momentum_combine(server.d_last_applied, payload, rec.alpha_used)
                : payload;
    rec.d_norm = d.norm();
    server.theta_prev = server.theta_curr;
    if (rec.d_norm == 0.0) {
        rec.zero_direction = true;
    } else {
        server.theta_curr += (rec.eta / rec.d_norm) * d;
    }
    server.d_last_applied = d;
    rec.d_applied = std::move(d);
    server.k += 1;
    return rec;
}

}  // namespace afedpg
