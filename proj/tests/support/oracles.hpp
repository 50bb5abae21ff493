#ifndef RSM_TESTS_ORACLES_HPP
#define RSM_TESTS_ORACLES_HPP

// Independent reference implementations used as test oracles. These
// deliberately avoid the library's forward/backward code paths.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "rsm/mlp.hpp"
#include "rsm/param_vector.hpp"

namespace rsm::test {

// Central finite differences of an arbitrary scalar function of the
// parameters.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const ParameterVector&)>& loss, const ParameterVector& params, double h = 1e-5) {
    std::vector<double> grad(params.size());
    ParameterVector probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + h;
        const double up = loss(probe);
        probe[i] = params[i] - h;
        const double down = loss(probe);
        probe[i] = params[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Brute-force MLP forward pass over explicitly unpacked weights; mirrors the
// documented flat ordering (weights row-major, bias after weights per layer).
struct UnpackedMlp {
    std::vector<std::vector<std::vector<double>>> weights;  // [layer][row][col]
    std::vector<std::vector<double>> biases;                // [layer][row]
    std::vector<double> log_std;
};

inline UnpackedMlp unpack(const MlpConfig& cfg, const ParamLayout& layout, const ParameterVector& params) {
    UnpackedMlp net;
    for (int l = 0; l < layout.layers(); ++l) {
        std::vector<std::vector<double>> w(static_cast<std::size_t>(layout.dim(l + 1)),
                                           std::vector<double>(static_cast<std::size_t>(layout.dim(l))));
        std::vector<double> b(static_cast<std::size_t>(layout.dim(l + 1)));
        for (int r = 0; r < layout.dim(l + 1); ++r) {
            for (int c = 0; c < layout.dim(l); ++c) {
                w[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = params[layout.weight_index(l, r, c)];
            }
            b[static_cast<std::size_t>(r)] = params[layout.bias_index(l, r)];
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    for (int k = 0; k < cfg.log_std_dims; ++k) net.log_std.push_back(params[layout.log_std_index(k)]);
    return net;
}

inline std::vector<double> oracle_forward(const MlpConfig& cfg, const UnpackedMlp& net,
                                          const std::vector<double>& input) {
    std::vector<double> h = input;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        std::vector<double> z(net.biases[l].size());
        for (std::size_t r = 0; r < z.size(); ++r) {
            double acc = net.biases[l][r];
            for (std::size_t c = 0; c < h.size(); ++c) acc += net.weights[l][r][c] * h[c];
            z[r] = acc;
        }
        const bool last = l + 1 == net.weights.size();
        for (double& v : z) {
            if (!last || cfg.tanh_head) v = std::tanh(v);
        }
        h = std::move(z);
    }
    return h;
}

// Direct Gaussian log-density at `a` for mean mu and stddev sigma.
inline double oracle_gaussian_logpdf(const std::vector<double>& a, const std::vector<double>& mu,
                                     const std::vector<double>& sigma) {
    double lp = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double z = (a[d] - mu[d]) / sigma[d];
        lp += -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma[d]) - 0.5 * z * z;
    }
    return lp;
}

// Dense empirical FIM from explicit score vectors: G = (1/K) sum g g^T.
inline std::vector<std::vector<double>> dense_fim(const std::vector<std::vector<double>>& scores) {
    const std::size_t n = scores.front().size();
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (const auto& s : scores) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) g[i][j] += s[i] * s[j];
        }
    }
    for (auto& row : g) {
        for (double& v : row) v /= static_cast<double>(scores.size());
    }
    return g;
}

inline double dense_quadratic_form(const std::vector<std::vector<double>>& g, const std::vector<double>& d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.size(); ++j) acc += d[i] * g[i][j] * d[j];
    }
    return acc;
}

// Two-action softmax bandit with two logit parameters; exact expectations.
struct SoftmaxBandit {
    std::array<double, 2> rewards{0.0, 1.0};

    static std::array<double, 2> probs(const std::array<double, 2>& logits) {
        const double m = std::max(logits[0], logits[1]);
        const double e0 = std::exp(logits[0] - m);
        const double e1 = std::exp(logits[1] - m);
        return {e0 / (e0 + e1), e1 / (e0 + e1)};
    }

    double expected_reward(const std::array<double, 2>& logits) const {
        const auto p = probs(logits);
        return p[0] * rewards[0] + p[1] * rewards[1];
    }

    // Exact policy advantage of logits_tilde over logits under behavior
    // logits_old, with delta(a) = reward(a):
    //   A = sum_a pi_old(a) * (pi_tilde(a) - pi(a)) / pi_old(a) * delta(a)
    double exact_policy_advantage(const std::array<double, 2>& logits_tilde,
                                  const std::array<double, 2>& logits) const {
        const auto pt = probs(logits_tilde);
        const auto p = probs(logits);
        double acc = 0.0;
        for (std::size_t a = 0; a < 2; ++a) acc += (pt[a] - p[a]) * rewards[a];
        return acc;
    }

    // Exact FIM of the softmax policy: E_a[grad log pi grad log pi^T] with
    // grad_theta log pi(a) = e_a - p.
    std::vector<std::vector<double>> exact_fim(const std::array<double, 2>& logits) const {
        const auto p = probs(logits);
        std::vector<std::vector<double>> g(2, std::vector<double>(2, 0.0));
        for (std::size_t a = 0; a < 2; ++a) {
            const std::array<double, 2> score{(a == 0 ? 1.0 : 0.0) - p[0], (a == 1 ? 1.0 : 0.0) - p[1]};
            for (std::size_t i = 0; i < 2; ++i) {
                for (std::size_t j = 0; j < 2; ++j) g[i][j] += p[a] * score[i] * score[j];
            }
        }
        return g;
    }
};

}  // namespace rsm::test

#endif  // RSM_TESTS_ORACLES_HPP
