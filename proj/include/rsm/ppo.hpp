#ifndef RSM_PPO_HPP
#define RSM_PPO_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/mlp.hpp"
#include "rsm/param_vector.hpp"
#include "rsm/policy.hpp"

namespace rsm {

// Log importance ratios are clamped to this magnitude before exponentiation.
inline constexpr double kLogRatioClamp = 30.0;

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One environment step as seen by one agent. `logp_old` is the behavior
// policy's log-density recorded at collection time; `done` marks a true
// terminal (collision), not a horizon truncation.
struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_state;
    double logp_old = 0.0;
    bool done = false;
};

struct MiniBatch {
    std::vector<Transition> steps;
    std::vector<double> bootstrap_state;

    bool terminated_by_collision() const { return !steps.empty() && steps.back().done; }
    std::size_t size() const { return steps.size(); }
};

// delta_t = r_t + gamma * V(s_{t+1}) - V(s_t), with V(s_{t+1}) = 0 on a
// terminal transition.
inline std::vector<double> compute_deltas(const MiniBatch& batch, const MlpConfig& critic_cfg,
                                          const ParamLayout& critic_layout, std::span<const double> omega,
                                          double gamma) {
    std::vector<double> deltas;
    deltas.reserve(batch.size());
    for (const Transition& tr : batch.steps) {
        const double v = value_forward(critic_cfg, critic_layout, omega, tr.state);
        const double v_next = tr.done ? 0.0 : value_forward(critic_cfg, critic_layout, omega, tr.next_state);
        deltas.push_back(tr.reward + gamma * v_next - v);
    }
    return deltas;
}

// A_t = delta_t + gamma*A_{t+1}; reverse recursion equal to the truncated
// discounted sum of deltas.
inline std::vector<double> compute_advantages(std::span<const double> deltas, double gamma) {
    if (deltas.empty()) throw std::invalid_argument("compute_advantages: empty deltas");
    std::vector<double> adv(deltas.size());
    double acc = 0.0;
    for (std::size_t i = deltas.size(); i-- > 0;) {
        acc = deltas[i] + gamma * acc;
        adv[i] = acc;
    }
    return adv;
}

// V^targ_t = sum_i gamma^i r_{t+i} + gamma^{T-t} V(s_T); the bootstrap term
// is dropped when the batch ended in a collision.
inline std::vector<double> compute_value_targets(const MiniBatch& batch, const MlpConfig& critic_cfg,
                                                 const ParamLayout& critic_layout, std::span<const double> omega,
                                                 double gamma) {
    std::vector<double> targets(batch.size());
    double acc = batch.terminated_by_collision()
                     ? 0.0
                     : value_forward(critic_cfg, critic_layout, omega, batch.bootstrap_state);
    for (std::size_t i = batch.size(); i-- > 0;) {
        acc = batch.steps[i].reward + gamma * acc;
        targets[i] = acc;
    }
    return targets;
}

inline double clamped_ratio(double log_diff) {
    return std::exp(std::clamp(log_diff, -kLogRatioClamp, kLogRatioClamp));
}

inline double importance_ratio(const MlpConfig& actor_cfg, const ParamLayout& actor_layout,
                               std::span<const double> theta, const Transition& tr) {
    const double lp = log_prob(actor_cfg, actor_layout, theta, tr.state, tr.action);
    return clamped_ratio(lp - tr.logp_old);
}

inline double clip(double x, double lo, double hi) { return std::clamp(x, lo, hi); }

// Clipped-surrogate actor loss with entropy bonus:
//   -(1/T) sum_t [ min(r_t A_t, clip(r_t) A_t) + beta * H ]
inline double actor_loss(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> theta,
                         const MiniBatch& batch, std::span<const double> advantages, double eps_clip, double beta) {
    if (advantages.size() != batch.size()) throw std::invalid_argument("actor_loss: advantage length mismatch");
    const double h = entropy(cfg, layout, theta);
    double total = 0.0;
    for (std::size_t t = 0; t < batch.size(); ++t) {
        const Transition& tr = batch.steps[t];
        const double ratio = clamped_ratio(log_prob(cfg, layout, theta, tr.state, tr.action) - tr.logp_old);
        const double a = advantages[t];
        total += std::min(ratio * a, clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * a) + beta * h;
    }
    return -total / static_cast<double>(batch.size());
}

struct LossAndGrad {
    double loss = 0.0;
    Gradient grad;
};

// Exact reverse-mode gradient of actor_loss, including log-std coordinates.
// The min/clip selection gates whether a sample's score contributes.
inline LossAndGrad actor_loss_grad(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> theta,
                                   const MiniBatch& batch, std::span<const double> advantages, double eps_clip,
                                   double beta) {
    if (advantages.size() != batch.size()) throw std::invalid_argument("actor_loss_grad: advantage length mismatch");
    const double inv_t = 1.0 / static_cast<double>(batch.size());
    LossAndGrad out;
    out.grad.assign(layout.size(), 0.0);
    const double h = entropy(cfg, layout, theta);
    MlpCache& cache = detail::tls_cache();

    std::vector<double> mean(static_cast<std::size_t>(cfg.output_dim));
    std::vector<double> d_mean(static_cast<std::size_t>(cfg.output_dim));
    double total = 0.0;
    for (std::size_t t = 0; t < batch.size(); ++t) {
        const Transition& tr = batch.steps[t];
        mlp_forward(cfg, layout, theta, tr.state, mean, cache);
        double lp = 0.0;
        for (int d = 0; d < cfg.output_dim; ++d) {
            const double log_std = theta[layout.log_std_index(d)];
            const double sigma = std::exp(log_std);
            const double z = (tr.action[static_cast<std::size_t>(d)] - mean[static_cast<std::size_t>(d)]) / sigma;
            lp += -0.5 * kLogTwoPi - log_std - 0.5 * z * z;
            d_mean[static_cast<std::size_t>(d)] = z / sigma;
        }
        const double log_diff = lp - tr.logp_old;
        const double ratio = clamped_ratio(log_diff);
        const double a = advantages[t];
        const double unclipped = ratio * a;
        const double clipped = clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * a;
        total += std::min(unclipped, clipped) + beta * h;

        // d min / d theta: the unclipped branch contributes ratio * A * score;
        // a selected clipped branch is locally constant. The clamp kills the
        // gradient as well once the log-ratio saturates.
        const bool live = unclipped <= clipped && std::abs(log_diff) < kLogRatioClamp;
        if (live) {
            const double coef = -inv_t * ratio * a;  // d(-total/T)/d lp
            for (int d = 0; d < cfg.output_dim; ++d) {
                const double log_std = theta[layout.log_std_index(d)];
                const double sigma = std::exp(log_std);
                const double z = (tr.action[static_cast<std::size_t>(d)] - mean[static_cast<std::size_t>(d)]) / sigma;
                out.grad[layout.log_std_index(d)] += coef * (z * z - 1.0);
                d_mean[static_cast<std::size_t>(d)] *= coef;
            }
            mlp_backward(cfg, layout, theta, cache, d_mean, out.grad, 1.0);
        }
    }
    // Entropy term: dH/d log_std_d = 1 at every timestep.
    for (int d = 0; d < cfg.output_dim; ++d) out.grad[layout.log_std_index(d)] += -beta;
    out.loss = -total * inv_t;
    return out;
}

inline double critic_loss(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> omega,
                          const MiniBatch& batch, std::span<const double> targets) {
    if (targets.size() != batch.size()) throw std::invalid_argument("critic_loss: target length mismatch");
    double total = 0.0;
    for (std::size_t t = 0; t < batch.size(); ++t) {
        const double err = value_forward(cfg, layout, omega, batch.steps[t].state) - targets[t];
        total += err * err;
    }
    return total / static_cast<double>(batch.size());
}

inline LossAndGrad critic_loss_grad(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> omega,
                                    const MiniBatch& batch, std::span<const double> targets) {
    if (targets.size() != batch.size()) throw std::invalid_argument("critic_loss_grad: target length mismatch");
    const double inv_t = 1.0 / static_cast<double>(batch.size());
    LossAndGrad out;
    out.grad.assign(layout.size(), 0.0);
    MlpCache& cache = detail::tls_cache();
    double total = 0.0;
    for (std::size_t t = 0; t < batch.size(); ++t) {
        double v = 0.0;
        mlp_forward(cfg, layout, omega, batch.steps[t].state, std::span<double>(&v, 1), cache);
        const double err = v - targets[t];
        total += err * err;
        const double d_out = 2.0 * inv_t * err;
        mlp_backward(cfg, layout, omega, cache, std::span<const double>(&d_out, 1), out.grad, 1.0);
    }
    out.loss = total * inv_t;
    return out;
}

inline ParameterVector sgd_step(const ParameterVector& params, std::span<const double> grad, double lr) {
    if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: length mismatch");
    ParameterVector next(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) next[i] = params[i] - lr * grad[i];
    return next;
}

inline void sgd_step_inplace(ParameterVector& params, std::span<const double> grad, double lr) {
    if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: length mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

// One buffered sample available to the mixing phase: state, action, the
// recorded behavior log-density, and the TD residual under the critic that
// was current when the sample was buffered.
struct BufferSample {
    std::vector<double> state;
    std::vector<double> action;
    double logp_old = 0.0;
    double delta = 0.0;
};

struct PpoHyperparams {
    int update_iterations = 3;  // U
    double lr_actor = 2.5e-5;   // eta_a
    double lr_critic = 5e-5;    // eta_c
    double gamma = 0.9;
    double eps_clip = 0.2;
    double entropy_beta = 0.01;
    bool normalize_advantages = false;
};

struct AgentState {
    MlpConfig actor_cfg;
    MlpConfig critic_cfg;
    ParameterVector theta;
    ParameterVector theta_old;
    ParameterVector omega;
    long iterations = 0;  // local iteration counter k
    std::deque<BufferSample> buffer;

    const ParamLayout& actor_layout() const { return actor_layout_; }
    const ParamLayout& critic_layout() const { return critic_layout_; }

    static AgentState init(const MlpConfig& actor_cfg, const MlpConfig& critic_cfg, std::uint64_t actor_seed,
                           std::uint64_t critic_seed, double log_std_init = kLogStdInit) {
        AgentState agent(actor_cfg, critic_cfg);
        agent.theta = init_network(actor_cfg, actor_seed, log_std_init);
        agent.theta_old = agent.theta;
        agent.omega = init_network(critic_cfg, critic_seed);
        return agent;
    }

    void push_buffer(const MiniBatch& batch, std::span<const double> deltas, std::size_t cap) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            buffer.push_back({batch.steps[i].state, batch.steps[i].action, batch.steps[i].logp_old, deltas[i]});
        }
        while (buffer.size() > cap) buffer.pop_front();
    }

    void clear_buffer() { buffer.clear(); }

  private:
    AgentState(const MlpConfig& a, const MlpConfig& c)
        : actor_cfg(a), critic_cfg(c), actor_layout_(a), critic_layout_(c) {}
    ParamLayout actor_layout_;
    ParamLayout critic_layout_;
};

// Independent local learning phase: U iterations of (recompute advantages
// and targets with the current critic, one actor SGD step, one critic SGD
// step), then sync the behavior policy. Advances k by U.
inline void local_update(AgentState& agent, const MiniBatch& batch, const PpoHyperparams& hp) {
    if (hp.update_iterations < 0) throw std::invalid_argument("local_update: U must be >= 0");
    for (int u = 0; u < hp.update_iterations; ++u) {
        if (batch.size() == 0) throw std::invalid_argument("local_update: empty batch");
        const std::vector<double> deltas =
            compute_deltas(batch, agent.critic_cfg, agent.critic_layout(), agent.omega, hp.gamma);
        std::vector<double> advantages = compute_advantages(deltas, hp.gamma);
        if (hp.normalize_advantages && advantages.size() > 1) {
            double mean = 0.0;
            for (double a : advantages) mean += a;
            mean /= static_cast<double>(advantages.size());
            double var = 0.0;
            for (double a : advantages) var += (a - mean) * (a - mean);
            const double sd = std::sqrt(var / static_cast<double>(advantages.size())) + 1e-8;
            for (double& a : advantages) a = (a - mean) / sd;
        }
        const std::vector<double> targets =
            compute_value_targets(batch, agent.critic_cfg, agent.critic_layout(), agent.omega, hp.gamma);

        const LossAndGrad actor = actor_loss_grad(agent.actor_cfg, agent.actor_layout(), agent.theta, batch,
                                                  advantages, hp.eps_clip, hp.entropy_beta);
        if (!std::isfinite(actor.loss)) throw NumericalError("actor loss diverged at k=" + std::to_string(agent.iterations));
        sgd_step_inplace(agent.theta, actor.grad, hp.lr_actor);

        const LossAndGrad critic =
            critic_loss_grad(agent.critic_cfg, agent.critic_layout(), agent.omega, batch, targets);
        if (!std::isfinite(critic.loss)) throw NumericalError("critic loss diverged at k=" + std::to_string(agent.iterations));
        sgd_step_inplace(agent.omega, critic.grad, hp.lr_critic);

        agent.iterations += 1;
    }
    agent.theta_old = agent.theta;
}

}  // namespace rsm

#endif  // RSM_PPO_HPP
