#ifndef RSM_MLP_HPP
#define RSM_MLP_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/param_vector.hpp"
#include "rsm/rng.hpp"

namespace rsm {

// Feed-forward network shape: tanh hidden layers, then either a tanh head
// (actor mean, keeps outputs in (-1,1)) or a linear head (critic value).
// Actor configs carry trailing state-independent log-std entries.
struct MlpConfig {
    int input_dim = 0;
    std::vector<int> hidden;
    int output_dim = 1;
    bool tanh_head = false;
    int log_std_dims = 0;

    void validate() const {
        if (input_dim <= 0) throw std::invalid_argument("MlpConfig: input_dim must be > 0");
        if (output_dim <= 0) throw std::invalid_argument("MlpConfig: output_dim must be > 0");
        if (log_std_dims < 0) throw std::invalid_argument("MlpConfig: log_std_dims must be >= 0");
        for (int w : hidden) {
            if (w <= 0) throw std::invalid_argument("MlpConfig: hidden widths must be > 0");
        }
    }

    static MlpConfig actor(int obs_dim, int action_dim, std::vector<int> widths = {64, 64}) {
        MlpConfig cfg;
        cfg.input_dim = obs_dim;
        cfg.hidden = std::move(widths);
        cfg.output_dim = action_dim;
        cfg.tanh_head = true;
        cfg.log_std_dims = action_dim;
        cfg.validate();
        return cfg;
    }

    static MlpConfig critic(int obs_dim, std::vector<int> widths = {64, 64}) {
        MlpConfig cfg;
        cfg.input_dim = obs_dim;
        cfg.hidden = std::move(widths);
        cfg.output_dim = 1;
        cfg.tanh_head = false;
        cfg.log_std_dims = 0;
        cfg.validate();
        return cfg;
    }
};

// Maps (layer, row, col) to positions in the flat parameter vector.
// Flat order: for each layer, weights row-major then bias; log-std last.
class ParamLayout {
  public:
    explicit ParamLayout(const MlpConfig& cfg) {
        cfg.validate();
        dims_.push_back(cfg.input_dim);
        for (int w : cfg.hidden) dims_.push_back(w);
        dims_.push_back(cfg.output_dim);
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            weight_off_.push_back(off);
            off += static_cast<std::size_t>(dims_[l + 1]) * static_cast<std::size_t>(dims_[l]);
            bias_off_.push_back(off);
            off += static_cast<std::size_t>(dims_[l + 1]);
        }
        log_std_off_ = off;
        size_ = off + static_cast<std::size_t>(cfg.log_std_dims);
        log_std_dims_ = cfg.log_std_dims;
    }

    int layers() const { return static_cast<int>(dims_.size()) - 1; }
    int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return size_; }
    std::size_t weight_offset(int layer) const { return weight_off_[static_cast<std::size_t>(layer)]; }
    std::size_t bias_offset(int layer) const { return bias_off_[static_cast<std::size_t>(layer)]; }
    std::size_t log_std_offset() const { return log_std_off_; }
    int log_std_dims() const { return log_std_dims_; }

    std::size_t weight_index(int layer, int row, int col) const {
        return weight_offset(layer) + static_cast<std::size_t>(row) * static_cast<std::size_t>(dim(layer)) +
               static_cast<std::size_t>(col);
    }
    std::size_t bias_index(int layer, int row) const { return bias_offset(layer) + static_cast<std::size_t>(row); }
    std::size_t log_std_index(int k) const { return log_std_off_ + static_cast<std::size_t>(k); }

    // Total activation storage needed by one forward pass (all layers).
    std::size_t activation_size() const {
        std::size_t n = 0;
        for (int d : dims_) n += static_cast<std::size_t>(d);
        return n;
    }

  private:
    std::vector<int> dims_;
    std::vector<std::size_t> weight_off_;
    std::vector<std::size_t> bias_off_;
    std::size_t log_std_off_ = 0;
    std::size_t size_ = 0;
    int log_std_dims_ = 0;
};

inline constexpr double kLogStdInit = -0.6931471805599453;  // ln(0.5)

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero,
// log-std entries set to log_std_init. Deterministic in (config, seed).
inline ParameterVector init_network(const MlpConfig& cfg, std::uint64_t seed, double log_std_init = kLogStdInit) {
    const ParamLayout layout(cfg);
    ParameterVector params(layout.size(), 0.0);
    Rng rng(splitmix64_next(seed));
    for (int l = 0; l < layout.layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layout.dim(l)));
        const std::size_t wn = static_cast<std::size_t>(layout.dim(l + 1)) * static_cast<std::size_t>(layout.dim(l));
        for (std::size_t k = 0; k < wn; ++k) params[layout.weight_offset(l) + k] = rng.uniform(-bound, bound);
    }
    for (int k = 0; k < layout.log_std_dims(); ++k) params[layout.log_std_index(k)] = log_std_init;
    return params;
}

// Per-forward activation cache; reusable across calls.
struct MlpCache {
    std::vector<double> act;    // concatenated post-activation values, input first
    std::vector<double> delta;  // backward scratch, two widest layers
};

namespace detail {
inline MlpCache& tls_cache() {
    thread_local MlpCache cache;
    return cache;
}

inline void ensure_cache(MlpCache& cache, const ParamLayout& layout) {
    const std::size_t need = layout.activation_size();
    if (cache.act.size() < need) cache.act.resize(need);
    std::size_t widest = 0;
    for (int i = 0; i <= layout.layers(); ++i) {
        widest = std::max(widest, static_cast<std::size_t>(layout.dim(i)));
    }
    if (cache.delta.size() < 2 * widest) cache.delta.resize(2 * widest);
}
}  // namespace detail

// Forward pass; writes the head output to `out` and leaves activations in
// `cache` for a subsequent backward call.
inline void mlp_forward(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> params,
                        std::span<const double> input, std::span<double> out, MlpCache& cache) {
    if (static_cast<int>(input.size()) != layout.dim(0)) {
        throw std::invalid_argument("mlp_forward: input has " + std::to_string(input.size()) + " entries, expected " +
                                    std::to_string(layout.dim(0)));
    }
    if (params.size() != layout.size()) throw std::invalid_argument("mlp_forward: parameter length mismatch");
    detail::ensure_cache(cache, layout);

    double* act = cache.act.data();
    for (std::size_t i = 0; i < input.size(); ++i) act[i] = input[i];

    std::size_t in_base = 0;
    for (int l = 0; l < layout.layers(); ++l) {
        const int n_in = layout.dim(l);
        const int n_out = layout.dim(l + 1);
        const double* weights = params.data() + layout.weight_offset(l);
        const double* bias = params.data() + layout.bias_offset(l);
        const double* src = act + in_base;
        double* dst = act + in_base + static_cast<std::size_t>(n_in);
        const bool last = (l == layout.layers() - 1);
        for (int j = 0; j < n_out; ++j) {
            const double* row = weights + static_cast<std::size_t>(j) * static_cast<std::size_t>(n_in);
            double z = bias[j];
            for (int i = 0; i < n_in; ++i) z += row[i] * src[i];
            if (!last) {
                dst[j] = std::tanh(z);
            } else {
                dst[j] = cfg.tanh_head ? std::tanh(z) : z;
            }
        }
        in_base += static_cast<std::size_t>(n_in);
    }
    const double* head = act + in_base;
    for (int j = 0; j < layout.dim(layout.layers()); ++j) out[j] = head[j];
}

// Reverse pass over the cached activations. Accumulates
// scale * d(loss)/d(param) into `grad` (+=) given d(loss)/d(head output).
// Log-std entries are untouched; callers own their closed-form terms.
inline void mlp_backward(const MlpConfig& cfg, const ParamLayout& layout, std::span<const double> params,
                         const MlpCache& cache, std::span<const double> d_out, std::span<double> grad,
                         double scale = 1.0) {
    const double* act = cache.act.data();
    std::size_t head_base = 0;
    for (int l = 0; l < layout.layers(); ++l) head_base += static_cast<std::size_t>(layout.dim(l));

    std::vector<double>& scratch = const_cast<MlpCache&>(cache).delta;
    std::size_t widest = 0;
    for (int i = 0; i <= layout.layers(); ++i) widest = std::max(widest, static_cast<std::size_t>(layout.dim(i)));
    double* cur = scratch.data();
    double* prev = scratch.data() + widest;

    const int n_head = layout.dim(layout.layers());
    const double* head = act + head_base;
    for (int j = 0; j < n_head; ++j) {
        const double dz = cfg.tanh_head ? (1.0 - head[j] * head[j]) : 1.0;
        cur[j] = scale * d_out[j] * dz;
    }

    std::size_t in_base = head_base;
    for (int l = layout.layers() - 1; l >= 0; --l) {
        const int n_in = layout.dim(l);
        const int n_out = layout.dim(l + 1);
        in_base -= static_cast<std::size_t>(n_in);
        const double* src = act + in_base;
        const double* weights = params.data() + layout.weight_offset(l);
        double* dw = grad.data() + layout.weight_offset(l);
        double* db = grad.data() + layout.bias_offset(l);

        if (l > 0) {
            for (int i = 0; i < n_in; ++i) prev[i] = 0.0;
        }
        for (int j = 0; j < n_out; ++j) {
            const double dj = cur[j];
            const double* row = weights + static_cast<std::size_t>(j) * static_cast<std::size_t>(n_in);
            double* dwrow = dw + static_cast<std::size_t>(j) * static_cast<std::size_t>(n_in);
            db[j] += dj;
            if (l > 0) {
                for (int i = 0; i < n_in; ++i) {
                    dwrow[i] += dj * src[i];
                    prev[i] += dj * row[i];
                }
            } else {
                for (int i = 0; i < n_in; ++i) dwrow[i] += dj * src[i];
            }
        }
        if (l > 0) {
            for (int i = 0; i < n_in; ++i) prev[i] *= 1.0 - src[i] * src[i];
            std::swap(cur, prev);
        }
    }
}

}  // namespace rsm

#endif  // RSM_MLP_HPP
