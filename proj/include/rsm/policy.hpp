#ifndef RSM_POLICY_HPP
#define RSM_POLICY_HPP

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "rsm/mlp.hpp"
#include "rsm/param_vector.hpp"
#include "rsm/rng.hpp"

namespace rsm {

inline constexpr double kLogTwoPi = 1.8378770664093453;  // ln(2*pi)

struct PolicyMoments {
    std::vector<double> mean;
    std::vector<double> sigma;
};

// Diagonal Gaussian actor: mean from the tanh-headed MLP, stddev from the
// trailing state-independent log-std entries.
inline PolicyMoments policy_forward(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> theta,
                                    std::span<const double> state) {
    PolicyMoments out;
    out.mean.resize(static_cast<std::size_t>(cfg.output_dim));
    out.sigma.resize(static_cast<std::size_t>(cfg.output_dim));
    mlp_forward(cfg, layout, theta, state, out.mean, detail::tls_cache());
    for (int d = 0; d < cfg.output_dim; ++d) {
        out.sigma[static_cast<std::size_t>(d)] = std::exp(theta[layout.log_std_index(d)]);
    }
    return out;
}

inline double log_prob_from_moments(const PolicyMoments& pm, std::span<const double> theta, const ParamLayout& layout,
                                    std::span<const double> action) {
    double lp = 0.0;
    for (std::size_t d = 0; d < pm.mean.size(); ++d) {
        const double z = (action[d] - pm.mean[d]) / pm.sigma[d];
        lp += -0.5 * kLogTwoPi - theta[layout.log_std_index(static_cast<int>(d))] - 0.5 * z * z;
    }
    return lp;
}

inline double log_prob(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> theta,
                       std::span<const double> state, std::span<const double> action) {
    const PolicyMoments pm = policy_forward(cfg, layout, theta, state);
    return log_prob_from_moments(pm, theta, layout, action);
}

// Closed-form Gaussian entropy, summed over action dims. Independent of the
// state because log-std is state-independent.
inline double entropy(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> theta) {
    double h = 0.0;
    for (int d = 0; d < cfg.output_dim; ++d) {
        h += 0.5 * (kLogTwoPi + 1.0) + theta[layout.log_std_index(d)];
    }
    return h;
}

inline std::vector<double> sample_action(const MlpConfig& cfg, const ParamLayout& layout,
                                         std::span<const double> theta, std::span<const double> state, Rng& rng) {
    const PolicyMoments pm = policy_forward(cfg, layout, theta, state);
    std::vector<double> action(pm.mean.size());
    for (std::size_t d = 0; d < action.size(); ++d) action[d] = pm.mean[d] + pm.sigma[d] * rng.normal();
    return action;
}

// Accumulates scale * d log pi_theta(a|s) / d theta into grad, including the
// log-std coordinates. Returns log pi_theta(a|s).
inline double score_accumulate(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> theta,
                               std::span<const double> state, std::span<const double> action, std::span<double> grad,
                               double scale = 1.0) {
    MlpCache& cache = detail::tls_cache();
    std::vector<double> mean(static_cast<std::size_t>(cfg.output_dim));
    mlp_forward(cfg, layout, theta, state, mean, cache);

    double lp = 0.0;
    std::vector<double> d_mean(static_cast<std::size_t>(cfg.output_dim));
    for (int d = 0; d < cfg.output_dim; ++d) {
        const double log_std = theta[layout.log_std_index(d)];
        const double sigma = std::exp(log_std);
        const double z = (action[static_cast<std::size_t>(d)] - mean[static_cast<std::size_t>(d)]) / sigma;
        lp += -0.5 * kLogTwoPi - log_std - 0.5 * z * z;
        d_mean[static_cast<std::size_t>(d)] = z / sigma;
        grad[layout.log_std_index(d)] += scale * (z * z - 1.0);
    }
    mlp_backward(cfg, layout, theta, cache, d_mean, grad, scale);
    return lp;
}

// Scalar critic over the same substrate (linear head, no log-std).
inline double value_forward(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> omega,
                            std::span<const double> state) {
    double v = 0.0;
    mlp_forward(cfg, layout, omega, state, std::span<double>(&v, 1), detail::tls_cache());
    return v;
}

// Accumulates scale * dV(s)/d omega into grad. Returns V(s).
inline double value_grad_accumulate(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> omega,
                                    std::span<const double> state, std::span<double> grad, double scale = 1.0) {
    MlpCache& cache = detail::tls_cache();
    double v = 0.0;
    mlp_forward(cfg, layout, omega, state, std::span<double>(&v, 1), cache);
    const double one = 1.0;
    mlp_backward(cfg, layout, omega, cache, std::span<const double>(&one, 1), grad, scale);
    return v;
}

}  // namespace rsm

#endif  // RSM_POLICY_HPP
