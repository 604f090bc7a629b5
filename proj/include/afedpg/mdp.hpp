#pragma once

// Exactly solvable tabular MDPs: sampling plus dynamic-programming oracles
// (state values, Q tables, occupancy measures, optimal returns). These
// closed-form quantities are the ground truth the rest of the library is
// checked against.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "afedpg/rng.hpp"

namespace afedpg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Finite MDP with dense transition kernel P[s][a][s'], reward table R[s][a],
/// discount gamma in [0,1) (gamma = 0 admits bandit-style degenerate cases)
/// and a start distribution rho. Immutable after construction.
struct TabularMDP {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> transition;  // [s * A * S + a * S + s']
    std::vector<double> reward;      // [s * A + a]
    double gamma = 0.0;
    std::vector<double> start_dist;  // rho
    double r_max = 1.0;

    double p(int s, int a, int s2) const {
        return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
    }
    double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
    const double* p_row(int s, int a) const {
        return transition.data() + (static_cast<std::size_t>(s) * num_actions + a) * num_states;
    }

    void validate() const {
        if (num_states < 1 || num_actions < 1)
            throw ConfigError("TabularMDP: sizes must be >= 1");
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw ConfigError("TabularMDP: gamma must lie in [0, 1)");
        if (transition.size() != static_cast<std::size_t>(num_states) * num_actions * num_states ||
            reward.size() != static_cast<std::size_t>(num_states) * num_actions ||
            start_dist.size() != static_cast<std::size_t>(num_states))
            throw ConfigError("TabularMDP: table sizes inconsistent");
        for (int s = 0; s < num_states; ++s) {
            for (int a = 0; a < num_actions; ++a) {
                double sum = 0.0;
                for (int s2 = 0; s2 < num_states; ++s2) {
                    double v = p(s, a, s2);
                    if (v < 0.0) throw ConfigError("TabularMDP: negative transition probability");
                    sum += v;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw ConfigError("TabularMDP: transition row does not sum to 1");
                double rv = r(s, a);
                if (rv < 0.0 || rv > r_max)
                    throw ConfigError("TabularMDP: reward outside [0, r_max]");
            }
        }
        double rho_sum = 0.0;
        for (double v : start_dist) {
            if (v < 0.0) throw ConfigError("TabularMDP: negative start probability");
            rho_sum += v;
        }
        if (std::abs(rho_sum - 1.0) > 1e-12)
            throw ConfigError("TabularMDP: start distribution does not sum to 1");
    }
};

struct TrajectoryStep {
    int state;
    int action;
    double reward;
};

/// Fixed-length rollout. Bundled environments are non-absorbing, so every
/// trajectory has exactly `horizon` steps.
struct Trajectory {
    std::vector<TrajectoryStep> steps;
};

/// Horizon at which the truncated discounted return differs from the infinite
/// sum by at most 1e-6 of the natural scale R_max/(1-gamma).
inline int default_horizon(double gamma) {
    if (gamma <= 0.0) return 1;
    return static_cast<int>(std::ceil(std::log(1e-6) / std::log(gamma)));
}

// -- policy-averaged building blocks -----------------------------------------

/// P_pi[s][s'] = sum_a pi(a|s) P[s][a][s'] for a given action-probability
/// table probs[s] (rows of length num_actions).
inline Mat policy_kernel(const TabularMDP& mdp, const std::vector<Vec>& probs) {
    Mat P = Mat::Zero(mdp.num_states, mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double w = probs[s][a];
            if (w == 0.0) continue;
            const double* row = mdp.p_row(s, a);
            for (int s2 = 0; s2 < mdp.num_states; ++s2) P(s, s2) += w * row[s2];
        }
    return P;
}

inline Vec policy_reward(const TabularMDP& mdp, const std::vector<Vec>& probs) {
    Vec r = Vec::Zero(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) r[s] += probs[s][a] * mdp.r(s, a);
    return r;
}

/// Solve V = r_pi + gamma P_pi V. Throws InternalError if the residual of the
/// linear solve exceeds 1e-10.
inline Vec exact_state_values_from(const TabularMDP& mdp, const std::vector<Vec>& probs) {
    const int S = mdp.num_states;
    Mat P = policy_kernel(mdp, probs);
    Vec r = policy_reward(mdp, probs);
    Mat A = Mat::Identity(S, S) - mdp.gamma * P;
    Vec V = A.partialPivLu().solve(r);
    double resid = (A * V - r).norm();
    if (!(resid <= 1e-10 * (1.0 + r.norm())))
        throw InternalError("exact_state_values: solve residual " + std::to_string(resid));
    return V;
}

/// Q[s][a] = R[s][a] + gamma sum_s' P[s][a][s'] V[s'].
inline Mat exact_q_values_from(const TabularMDP& mdp, const Vec& V) {
    Mat Q(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) {
            const double* row = mdp.p_row(s, a);
            double acc = 0.0;
            for (int s2 = 0; s2 < mdp.num_states; ++s2) acc += row[s2] * V[s2];
            Q(s, a) = mdp.r(s, a) + mdp.gamma * acc;
        }
    return Q;
}

inline double exact_return_from(const TabularMDP& mdp, const Vec& V) {
    double J = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) J += mdp.start_dist[s] * V[s];
    return J;
}

/// Normalized discounted occupancy d solving d = (1-gamma) rho + gamma P_pi^T d,
/// then nu(s,a) = d(s) pi(a|s). Sums to 1.
inline Mat visitation_measure_from(const TabularMDP& mdp, const std::vector<Vec>& probs) {
    const int S = mdp.num_states;
    Mat P = policy_kernel(mdp, probs);
    Vec rho(S);
    for (int s = 0; s < S; ++s) rho[s] = mdp.start_dist[s];
    Mat A = Mat::Identity(S, S) - mdp.gamma * P.transpose();
    Vec d = A.partialPivLu().solve((1.0 - mdp.gamma) * rho);
    Mat nu(S, mdp.num_actions);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) nu(s, a) = d[s] * probs[s][a];
    return nu;
}

/// Value iteration to Bellman residual <= 1e-10; returns J* = rho . V*.
inline double optimal_return(const TabularMDP& mdp) {
    const int S = mdp.num_states, A = mdp.num_actions;
    Vec V = Vec::Zero(S), Vn(S);
    for (int iter = 0; iter < 2000000; ++iter) {
        double resid = 0.0;
        for (int s = 0; s < S; ++s) {
            double best = -1e300;
            for (int a = 0; a < A; ++a) {
                const double* row = mdp.p_row(s, a);
                double acc = 0.0;
                for (int s2 = 0; s2 < S; ++s2) acc += row[s2] * V[s2];
                best = std::max(best, mdp.r(s, a) + mdp.gamma * acc);
            }
            Vn[s] = best;
            resid = std::max(resid, std::abs(Vn[s] - V[s]));
        }
        V = Vn;
        if (resid * std::max(mdp.gamma / (1.0 - mdp.gamma), 1.0) <= 1e-10) break;
    }
    double J = 0.0;
    for (int s = 0; s < S; ++s) J += mdp.start_dist[s] * V[s];
    return J;
}

// -- bundled environments ----------------------------------------------------

/// Two-armed bandit embedded as a single-state MDP with gamma = 0 and
/// rewards (1, 0).
inline TabularMDP make_bandit() {
    TabularMDP m;
    m.num_states = 1;
    m.num_actions = 2;
    m.transition = {1.0, 1.0};
    m.reward = {1.0, 0.0};
    m.gamma = 0.0;
    m.start_dist = {1.0};
    m.r_max = 1.0;
    m.validate();
    return m;
}

/// 5-state chain with left/right actions, deterministic moves clamped at the
/// ends, reward 1 while in the last state.
inline TabularMDP make_chain(int n = 5, double gamma = 0.9) {
    TabularMDP m;
    m.num_states = n;
    m.num_actions = 2;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(static_cast<std::size_t>(n) * 2 * n, 0.0);
    m.reward.assign(static_cast<std::size_t>(n) * 2, 0.0);
    m.start_dist.assign(n, 0.0);
    m.start_dist[0] = 1.0;
    auto set_p = [&](int s, int a, int s2) {
        m.transition[(static_cast<std::size_t>(s) * 2 + a) * n + s2] = 1.0;
    };
    for (int s = 0; s < n; ++s) {
        set_p(s, 0, std::max(s - 1, 0));
        set_p(s, 1, std::min(s + 1, n - 1));
        if (s == n - 1) {
            m.reward[static_cast<std::size_t>(s) * 2 + 0] = 1.0;
            m.reward[static_cast<std::size_t>(s) * 2 + 1] = 1.0;
        }
    }
    m.validate();
    return m;
}

/// 5x5 gridworld, 4 actions (up/right/down/left) with wall clamping, reward 1
/// while in the goal corner, start in the opposite corner.
inline TabularMDP make_gridworld(double gamma = 0.95, int side = 5) {
    TabularMDP m;
    const int S = side * side, A = 4;
    m.num_states = S;
    m.num_actions = A;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(static_cast<std::size_t>(S) * A * S, 0.0);
    m.reward.assign(static_cast<std::size_t>(S) * A, 0.0);
    m.start_dist.assign(S, 0.0);
    m.start_dist[0] = 1.0;
    const int goal = S - 1;
    const int dr[4] = {-1, 0, 1, 0};
    const int dc[4] = {0, 1, 0, -1};
    for (int s = 0; s < S; ++s) {
        int row = s / side, col = s % side;
        for (int a = 0; a < A; ++a) {
            int nr = std::min(std::max(row + dr[a], 0), side - 1);
            int nc = std::min(std::max(col + dc[a], 0), side - 1);
            int s2 = nr * side + nc;
            m.transition[(static_cast<std::size_t>(s) * A + a) * S + s2] = 1.0;
            if (s == goal) m.reward[static_cast<std::size_t>(s) * A + a] = 1.0;
        }
    }
    m.validate();
    return m;
}

/// Seeded random MDP: Dirichlet(1,...,1) transition rows, rewards uniform in
/// [0, 1], uniform start distribution.
inline TabularMDP random_mdp(std::uint64_t seed, int num_states, int num_actions, double gamma) {
    if (num_states < 1 || num_actions < 1)
        throw ConfigError("random_mdp: sizes must be >= 1");
    TabularMDP m;
    m.num_states = num_states;
    m.num_actions = num_actions;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(static_cast<std::size_t>(num_states) * num_actions * num_states, 0.0);
    m.reward.assign(static_cast<std::size_t>(num_states) * num_actions, 0.0);
    m.start_dist.assign(num_states, 1.0 / num_states);
    RngStream rng(seed, "random_mdp");
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) {
            double* row = m.transition.data() +
                          (static_cast<std::size_t>(s) * num_actions + a) * num_states;
            double sum = 0.0;
            for (int s2 = 0; s2 < num_states; ++s2) {
                // Exp(1) draws normalized to a Dirichlet(1,...,1) sample
                row[s2] = -std::log(1.0 - rng.uniform());
                sum += row[s2];
            }
            for (int s2 = 0; s2 < num_states; ++s2) row[s2] /= sum;
            // renormalize exactly enough for the 1e-12 row-sum invariant
            double check = 0.0;
            for (int s2 = 0; s2 < num_states; ++s2) check += row[s2];
            for (int s2 = 0; s2 < num_states; ++s2) row[s2] /= check;
            m.reward[static_cast<std::size_t>(s) * num_actions + a] = rng.uniform();
        }
    double rho_sum = 0.0;
    for (double v : m.start_dist) rho_sum += v;
    for (double& v : m.start_dist) v /= rho_sum;
    m.validate();
    return m;
}

}  // namespace afedpg
