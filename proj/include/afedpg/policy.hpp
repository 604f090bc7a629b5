#pragma once

// Tabular softmax policy over state-action logits, with the analytic score
// function, its bound/Lipschitz constants, and the exact policy gradient
// assembled from the dynamic-programming oracles.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "afedpg/mdp.hpp"
#include "afedpg/rng.hpp"

namespace afedpg {

/// Softmax policy: theta is a flat logit vector of dimension
/// num_states * num_actions, laid out state-major.
struct SoftmaxPolicy {
    Vec theta;
    int num_states = 0;
    int num_actions = 0;

    SoftmaxPolicy() = default;
    SoftmaxPolicy(int s, int a) : theta(Vec::Zero(s * a)), num_states(s), num_actions(a) {}
    SoftmaxPolicy(Vec t, int s, int a) : theta(std::move(t)), num_states(s), num_actions(a) {
        if (theta.size() != static_cast<Eigen::Index>(s) * a)
            throw ConfigError("SoftmaxPolicy: theta dimension mismatch");
    }

    int dim() const { return num_states * num_actions; }

    bool matches(const TabularMDP& mdp) const {
        return num_states == mdp.num_states && num_actions == mdp.num_actions;
    }
};

/// Softmax over the state's logit row, max-subtracted for stability.
inline Vec action_probs(const SoftmaxPolicy& pi, int state) {
    if (state < 0 || state >= pi.num_states)
        throw ConfigError("action_probs: state index out of range");
    const int A = pi.num_actions;
    Vec row = pi.theta.segment(static_cast<Eigen::Index>(state) * A, A);
    double m = row.maxCoeff();
    Vec p(A);
    double z = 0.0;
    for (int a = 0; a < A; ++a) {
        p[a] = std::exp(row[a] - m);
        z += p[a];
    }
    p /= z;
    return p;
}

inline std::vector<Vec> all_action_probs(const SoftmaxPolicy& pi) {
    std::vector<Vec> probs(pi.num_states);
    for (int s = 0; s < pi.num_states; ++s) probs[s] = action_probs(pi, s);
    return probs;
}

/// Nonzero block of grad log pi(a|s): component b is 1{b=a} - pi(b|s).
/// The full score vector is this block embedded at state s, zero elsewhere.
inline Vec score_block(const SoftmaxPolicy& pi, int state, int action) {
    Vec p = action_probs(pi, state);
    Vec g = -p;
    g[action] += 1.0;
    return g;
}

inline Vec score(const SoftmaxPolicy& pi, int state, int action) {
    Vec g = Vec::Zero(pi.dim());
    g.segment(static_cast<Eigen::Index>(state) * pi.num_actions, pi.num_actions) =
        score_block(pi, state, action);
    return g;
}

inline double log_prob(const SoftmaxPolicy& pi, int state, int action) {
    const int A = pi.num_actions;
    Vec row = pi.theta.segment(static_cast<Eigen::Index>(state) * A, A);
    double m = row.maxCoeff();
    double z = 0.0;
    for (int a = 0; a < A; ++a) z += std::exp(row[a] - m);
    return row[action] - m - std::log(z);
}

// -- Assumption constants ----------------------------------------------------

struct ScoreBounds {
    double m_g;  // sup-norm bound of the score
    double m_h;  // Lipschitz constant of the score in theta
    double m_h_observed;  // largest value seen by the numerical certificate
};

/// M_g = sqrt(2) analytically for tabular softmax (supremum of ||e_a - pi||
/// at a degenerate pi). M_h is certified numerically: the score's Jacobian in
/// theta is the softmax covariance block diag(pi) - pi pi^T, whose spectral
/// norm is maximized over random points on the simplex. For any action count
/// the certified value stays at or below 1/2.
inline ScoreBounds score_bounds(int num_actions, int cert_samples = 20000,
                                std::uint64_t seed = 0) {
    if (num_actions <= 1) return {0.0, 0.0, 0.0};
    double worst = 0.0;
    RngStream rng(seed, "mh_certificate");
    Eigen::SelfAdjointEigenSolver<Mat> es;
    for (int it = 0; it < cert_samples; ++it) {
        Vec p(num_actions);
        double z = 0.0;
        for (int a = 0; a < num_actions; ++a) {
            // logits spread wide enough to visit near-degenerate corners
            p[a] = std::exp(12.0 * (rng.uniform() - 0.5));
            z += p[a];
        }
        p /= z;
        Mat cov = Mat(p.asDiagonal()) - p * p.transpose();
        es.compute(cov, Eigen::EigenvaluesOnly);
        worst = std::max(worst, es.eigenvalues().maxCoeff());
    }
    return {std::sqrt(2.0), 0.5, worst};
}

/// Smoothness constants of the expected return derived from the score bounds.
/// l_h keeps only the explicit terms; its derivation leaves an
/// O((1-gamma)^-1) remainder unstated, so inequality checks using l_h apply
/// `l_h_safety` multiplicatively and stay report-tolerant.
struct SmoothnessConstants {
    double m_g = 0.0;
    double m_h = 0.0;
    double r_max = 0.0;
    double gamma = 0.0;
    double l_g = 0.0;
    double l_h = 0.0;
    double l_h_safety = 1.0;
};

inline SmoothnessConstants smoothness_constants(double m_g, double m_h, double r_max,
                                                double gamma, double l_h_safety = 1.0) {
    SmoothnessConstants c;
    c.m_g = m_g;
    c.m_h = m_h;
    c.r_max = r_max;
    c.gamma = gamma;
    c.l_h_safety = l_h_safety;
    const double om = 1.0 - gamma;
    c.l_g = r_max * (m_g * m_g + m_h) / (om * om);
    c.l_h = r_max * m_g * m_g * m_g * (1.0 + gamma) / (om * om * om) +
            r_max * m_g * m_h / (om * om);
    return c;
}

// -- sampling ----------------------------------------------------------------

/// Roll out exactly `horizon` steps: s0 ~ rho, a_t ~ pi(.|s_t),
/// s_{t+1} ~ P(.|s_t, a_t).
inline Trajectory sample_trajectory(const TabularMDP& mdp, const SoftmaxPolicy& pi,
                                    int horizon, RngStream& rng) {
    if (!pi.matches(mdp))
        throw ConfigError("sample_trajectory: policy/MDP dimension mismatch");
    if (horizon < 1) throw ConfigError("sample_trajectory: horizon must be >= 1");
    Trajectory traj;
    traj.steps.reserve(horizon);
    int s = rng.categorical(mdp.start_dist);
    for (int t = 0; t < horizon; ++t) {
        Vec p = action_probs(pi, s);
        int a = rng.categorical(p.data(), pi.num_actions);
        traj.steps.push_back({s, a, mdp.r(s, a)});
        s = rng.categorical(mdp.p_row(s, a), mdp.num_states);
    }
    return traj;
}

// -- exact gradient oracle ---------------------------------------------------

/// grad J = (1/(1-gamma)) sum_{s,a} nu(s,a) score(s,a) A(s,a) with A = Q - V
/// from the linear-solve oracles. This is the brute-force reference used by
/// every estimator and lemma check.
inline Vec exact_policy_gradient(const TabularMDP& mdp, const SoftmaxPolicy& pi) {
    if (!pi.matches(mdp))
        throw ConfigError("exact_policy_gradient: policy/MDP dimension mismatch");
    auto probs = all_action_probs(pi);
    Vec V = exact_state_values_from(mdp, probs);
    Mat Q = exact_q_values_from(mdp, V);
    Mat nu = visitation_measure_from(mdp, probs);
    Vec grad = Vec::Zero(pi.dim());
    const double scale = 1.0 / (1.0 - mdp.gamma);
    for (int s = 0; s < mdp.num_states; ++s) {
        auto block = grad.segment(static_cast<Eigen::Index>(s) * pi.num_actions, pi.num_actions);
        for (int a = 0; a < mdp.num_actions; ++a) {
            double w = scale * nu(s, a) * (Q(s, a) - V[s]);
            if (w == 0.0) continue;
            // score block: e_a - pi(.|s)
            block -= w * probs[s];
            block[a] += w;
        }
    }
    return grad;
}

inline double exact_return(const TabularMDP& mdp, const SoftmaxPolicy& pi) {
    auto probs = all_action_probs(pi);
    return exact_return_from(mdp, exact_state_values_from(mdp, probs));
}

inline Vec exact_state_values(const TabularMDP& mdp, const SoftmaxPolicy& pi) {
    return exact_state_values_from(mdp, all_action_probs(pi));
}

inline Mat exact_q_values(const TabularMDP& mdp, const SoftmaxPolicy& pi) {
    return exact_q_values_from(mdp, exact_state_values(mdp, pi));
}

inline Mat visitation_measure(const TabularMDP& mdp, const SoftmaxPolicy& pi) {
    return visitation_measure_from(mdp, all_action_probs(pi));
}

}  // namespace afedpg
