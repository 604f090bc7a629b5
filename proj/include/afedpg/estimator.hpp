#pragma once

// Stochastic policy-gradient estimation and the momentum combination used by
// the asynchronous update rule, plus an empirical stand-in for the estimator
// noise level.

#include <Eigen/Dense>
#include <cmath>

#include "afedpg/policy.hpp"

namespace afedpg {

/// REINFORCE estimator
///   g = sum_t score(s_t, a_t) * sum_{h>=t} gamma^h r_h
/// with the discount taken from episode start (absolute power gamma^h).
/// `discount_from_t` switches to the gamma^{h-t} variant; it is off by
/// default and exists only for exploration.
inline Vec reinforce_gradient(const Trajectory& traj, const SoftmaxPolicy& pi, double gamma,
                              bool discount_from_t = false) {
    const int T = static_cast<int>(traj.steps.size());
    if (T == 0) throw InputError("reinforce_gradient: empty trajectory");
    Vec g = Vec::Zero(pi.dim());
    // backward pass: suffix_t = gamma^t r_t + suffix_{t+1}
    double suffix = 0.0;
    std::vector<double> weights(T);
    for (int t = T - 1; t >= 0; --t) {
        suffix += std::pow(gamma, t) * traj.steps[t].reward;
        weights[t] = discount_from_t ? suffix / std::pow(gamma, t) : suffix;
    }
    for (int t = 0; t < T; ++t) {
        const auto& st = traj.steps[t];
        if (weights[t] == 0.0) continue;
        auto block = g.segment(static_cast<Eigen::Index>(st.state) * pi.num_actions,
                               pi.num_actions);
        Vec p = action_probs(pi, st.state);
        block -= weights[t] * p;
        block[st.action] += weights[t];
    }
    return g;
}

/// Convex combination (1 - alpha) d_prev + alpha g.
inline Vec momentum_combine(const Vec& d_prev, const Vec& g, double alpha) {
    return (1.0 - alpha) * d_prev + alpha * g;
}

struct NoiseEstimate {
    double sigma_g_hat = 0.0;  // RMS deviation of the estimator around grad J
    int sample_count = 0;
    bool degenerate = false;   // set when sample_count < 2
};

/// Empirical sigma_g: root-mean-square of ||g - grad J_exact|| over
/// independent trajectories. The analysis uses sigma_g without a numbered
/// assumption bounding it, so it is always treated as a measurement.
inline NoiseEstimate estimate_sigma_g(const TabularMDP& mdp, const SoftmaxPolicy& pi,
                                      int horizon, int num_samples, std::uint64_t seed,
                                      std::string_view stream_tag = "sigma_g") {
    NoiseEstimate est;
    est.sample_count = num_samples;
    if (num_samples < 2) {
        est.degenerate = true;
        return est;
    }
    Vec grad = exact_policy_gradient(mdp, pi);
    double acc = 0.0;
    for (int i = 0; i < num_samples; ++i) {
        RngStream rng(seed, stream_tag, static_cast<std::uint64_t>(i));
        Trajectory traj = sample_trajectory(mdp, pi, horizon, rng);
        Vec g = reinforce_gradient(traj, pi, mdp.gamma);
        acc += (g - grad).squaredNorm();
    }
    est.sigma_g_hat = std::sqrt(acc / (num_samples - 1));
    return est;
}

}  // namespace afedpg
