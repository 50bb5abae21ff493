#ifndef RSM_MIXTURE_HPP
#define RSM_MIXTURE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "rsm/param_vector.hpp"
#include "rsm/policy.hpp"
#include "rsm/ppo.hpp"
#include "rsm/rng.hpp"

namespace rsm {

// A contiguous slice of a flat parameter vector, tagged with its owner and
// its place in a P-way partition (p is 1-based).
struct Segment {
    int owner = -1;
    int total_p = 0;
    int index_p = 0;
    std::vector<double> values;
};

// A referential parameter vector reassembled from P segments, with the
// contributing agent recorded per slot.
struct Replica {
    ParameterVector values;
    std::vector<int> provenance;  // provenance[p-1] = owner of segment p
};

// Segment sizes for a uniform partition: the first (n mod P) segments get
// ceil(n/P) entries, the rest floor(n/P).
inline std::vector<std::size_t> segment_sizes(std::size_t n, int parts) {
    if (parts < 1 || static_cast<std::size_t>(parts) > n) {
        throw std::invalid_argument("segment_sizes: need 1 <= P <= parameter count");
    }
    const std::size_t base = n / static_cast<std::size_t>(parts);
    const std::size_t extra = n % static_cast<std::size_t>(parts);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(parts), base);
    for (std::size_t p = 0; p < extra; ++p) sizes[p] += 1;
    return sizes;
}

inline std::vector<Segment> partition(const ParameterVector& theta, int parts, int owner = -1) {
    const std::vector<std::size_t> sizes = segment_sizes(theta.size(), parts);
    std::vector<Segment> segments;
    segments.reserve(sizes.size());
    std::size_t off = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
        Segment seg;
        seg.owner = owner;
        seg.total_p = parts;
        seg.index_p = static_cast<int>(p) + 1;
        seg.values.assign(theta.begin() + static_cast<std::ptrdiff_t>(off),
                          theta.begin() + static_cast<std::ptrdiff_t>(off + sizes[p]));
        segments.push_back(std::move(seg));
        off += sizes[p];
    }
    return segments;
}

// Concatenates exactly one segment per index p=1..P into a full replica,
// validating sizes against the uniform-partition rule.
inline Replica reconstruct(const std::vector<Segment>& segments) {
    if (segments.empty()) throw std::invalid_argument("reconstruct: no segments");
    const int parts = segments.front().total_p;
    std::size_t total = 0;
    for (const Segment& s : segments) {
        if (s.total_p != parts) throw std::invalid_argument("reconstruct: inconsistent P across segments");
        total += s.values.size();
    }
    if (static_cast<int>(segments.size()) != parts) {
        throw std::invalid_argument("reconstruct: expected exactly P segments");
    }
    const std::vector<std::size_t> sizes = segment_sizes(total, parts);
    std::vector<const Segment*> by_index(static_cast<std::size_t>(parts), nullptr);
    for (const Segment& s : segments) {
        if (s.index_p < 1 || s.index_p > parts) throw std::invalid_argument("reconstruct: segment index out of range");
        auto& slot = by_index[static_cast<std::size_t>(s.index_p - 1)];
        if (slot != nullptr) throw std::invalid_argument("reconstruct: duplicate segment index");
        slot = &s;
    }
    Replica replica;
    replica.values.reserve(total);
    replica.provenance.reserve(static_cast<std::size_t>(parts));
    for (int p = 0; p < parts; ++p) {
        const Segment* s = by_index[static_cast<std::size_t>(p)];
        if (s->values.size() != sizes[static_cast<std::size_t>(p)]) {
            throw std::invalid_argument("reconstruct: segment size violates the partition rule");
        }
        replica.values.insert(replica.values.end(), s->values.begin(), s->values.end());
        replica.provenance.push_back(s->owner);
    }
    return replica;
}

// Monte-Carlo policy-advantage estimate:
//   A ~= (1/M) sum [ (pi_tilde(a|s) - pi_theta(a|s)) / pi_old(a|s) ] * delta
// computed with density ratios in log space, each log clamped to +-30.
inline double policy_advantage_estimate(const MlpConfig& actor_cfg, const ParamLayout& layout,
                                        std::span<const double> theta_tilde, std::span<const double> theta,
                                        std::span<const BufferSample* const> samples) {
    if (samples.empty()) throw std::invalid_argument("policy_advantage_estimate: need at least one sample");
    double total = 0.0;
    for (const BufferSample* s : samples) {
        const double lp_tilde = log_prob(actor_cfg, layout, theta_tilde, s->state, s->action);
        const double lp = log_prob(actor_cfg, layout, theta, s->state, s->action);
        const double r_tilde = clamped_ratio(lp_tilde - s->logp_old);
        const double r = clamped_ratio(lp - s->logp_old);
        total += (r_tilde - r) * s->delta;
    }
    return total / static_cast<double>(samples.size());
}

// Empirical Fisher information as a matrix-free quadratic form:
//   q(d) = (1/K) sum (g_t . d)^2,  g_t = grad_theta log pi_theta(a_t|s_t).
// PSD by construction; the dense matrix is only ever materialized by tests.
class FimQuadraticForm {
  public:
    FimQuadraticForm(std::vector<Gradient> scores, std::size_t dim) : scores_(std::move(scores)), dim_(dim) {}

    double operator()(std::span<const double> d) const {
        if (d.size() != dim_) throw std::invalid_argument("FimQuadraticForm: dimension mismatch");
        double acc = 0.0;
        for (const Gradient& g : scores_) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim_; ++i) dot += g[i] * d[i];
            acc += dot * dot;
        }
        return acc / static_cast<double>(scores_.size());
    }

    std::size_t dim() const { return dim_; }
    std::size_t sample_count() const { return scores_.size(); }
    const std::vector<Gradient>& scores() const { return scores_; }

  private:
    std::vector<Gradient> scores_;
    std::size_t dim_;
};

inline FimQuadraticForm fim_estimate(const MlpConfig& actor_cfg, const ParamLayout& layout,
                                     std::span<const double> theta, std::span<const BufferSample* const> samples) {
    if (samples.empty()) throw std::invalid_argument("fim_estimate: need at least one sample");
    std::vector<Gradient> scores;
    scores.reserve(samples.size());
    for (const BufferSample* s : samples) {
        Gradient g(layout.size(), 0.0);
        score_accumulate(actor_cfg, layout, theta, s->state, s->action, g, 1.0);
        scores.push_back(std::move(g));
    }
    return FimQuadraticForm(std::move(scores), layout.size());
}

struct EpsilonC {
    double epsilon_hat = 0.0;  // max |delta_t| over the buffer
    double c = 0.0;            // 2 * eps * gamma / (1-gamma)^2
    bool degenerate() const { return epsilon_hat == 0.0; }
};

inline EpsilonC epsilon_and_c(std::span<const double> deltas, double gamma) {
    if (deltas.empty()) throw std::invalid_argument("epsilon_and_c: empty deltas");
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("epsilon_and_c: need 0 < gamma < 1");
    double eps = 0.0;
    for (double d : deltas) eps = std::max(eps, std::abs(d));
    return {eps, 2.0 * eps * gamma / ((1.0 - gamma) * (1.0 - gamma))};
}

inline constexpr double kQuadFormFloor = 1e-12;

// Theorem-style upper bound on the mixture metric:
//   alpha < sqrt( 2 * sqrt(A/C) / ((theta_tilde-theta)^T G (theta_tilde-theta)) )
// The quadratic form is floored to guard the vanishing-difference case.
inline double alpha_upper_bound(double advantage, double c, double quad_form) {
    if (advantage <= 0.0) throw std::invalid_argument("alpha_upper_bound: requires a positive advantage estimate");
    if (c <= 0.0) throw std::invalid_argument("alpha_upper_bound: requires C > 0");
    return std::sqrt(2.0 * std::sqrt(advantage / c) / std::max(quad_form, kQuadFormFloor));
}

inline ParameterVector mix(const ParameterVector& theta, const ParameterVector& theta_tilde, double alpha) {
    if (theta.size() != theta_tilde.size()) throw std::invalid_argument("mix: length mismatch");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mix: alpha must be in [0,1]");
    ParameterVector out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) out[i] = theta[i] + alpha * (theta_tilde[i] - theta[i]);
    return out;
}

enum class MixMode { AllPositive, BestOnly };

struct MixReport {
    int replica_index = 0;
    std::vector<int> provenance;
    double advantage_estimate = 0.0;
    double epsilon_hat = 0.0;
    double c = 0.0;
    double quad_form = 0.0;
    double alpha_bound = 0.0;
    double alpha_used = 0.0;
    bool accepted = false;
    bool skipped = false;  // round-level skip: degenerate buffer or too few samples
};

struct MixRoundParams {
    int advantage_samples = 200;  // M
    int fim_samples = 50;         // K
    double gamma = 0.9;
    MixMode mode = MixMode::AllPositive;
    double alpha_fraction = 0.9;  // alpha_used = min(alpha_fraction * bound, 1)
    // When set, advantage estimates in AllPositive mode are taken against
    // the pre-round parameters instead of the sequentially mixed ones.
    bool advantage_against_preround = false;
};

namespace detail {
inline std::vector<const BufferSample*> draw_samples(const std::deque<BufferSample>& buffer, int count, Rng& rng) {
    const std::vector<int> idx = rng.sample_without_replacement(static_cast<int>(buffer.size()), count);
    std::vector<const BufferSample*> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(&buffer[static_cast<std::size_t>(i)]);
    return out;
}

inline MixReport evaluate_replica(const AgentState& agent, std::span<const double> theta_ref, const Replica& replica,
                                  int index, const EpsilonC& ec, const MixRoundParams& params, Rng& rng) {
    MixReport report;
    report.replica_index = index;
    report.provenance = replica.provenance;
    report.epsilon_hat = ec.epsilon_hat;
    report.c = ec.c;
    const std::vector<const BufferSample*> samples =
        draw_samples(agent.buffer, params.advantage_samples, rng);
    report.advantage_estimate =
        policy_advantage_estimate(agent.actor_cfg, agent.actor_layout(), replica.values, theta_ref, samples);
    return report;
}

// Theorem-1 gate and mixing metric for one replica with positive advantage.
inline void apply_accepted_mix(AgentState& agent, const Replica& replica, MixReport& report,
                               const MixRoundParams& params, Rng& rng) {
    const std::vector<const BufferSample*> fim_samples = draw_samples(agent.buffer, params.fim_samples, rng);
    const FimQuadraticForm q = fim_estimate(agent.actor_cfg, agent.actor_layout(), agent.theta, fim_samples);
    std::vector<double> diff(agent.theta.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = replica.values[i] - agent.theta[i];
    report.quad_form = q(diff);
    report.alpha_bound = alpha_upper_bound(report.advantage_estimate, report.c, report.quad_form);
    report.alpha_used = std::min(params.alpha_fraction * report.alpha_bound, 1.0);
    report.accepted = true;
    agent.theta = mix(agent.theta, replica.values, report.alpha_used);
}
}  // namespace detail

// Communication-assisted mixing phase for one agent: iterate the replicas,
// estimate the policy advantage of each, and mix only certified ones. In
// AllPositive mode the mixture is sequential (theta moves before the next
// replica is evaluated); in BestOnly mode all advantages are estimated
// against the unmodified theta and only the argmax-positive replica mixes.
// Ends by aligning theta_old with theta.
inline std::vector<MixReport> regulated_mix_round(AgentState& agent, const std::vector<Replica>& replicas,
                                                  const MixRoundParams& params, Rng& rng) {
    std::vector<MixReport> reports;
    reports.reserve(replicas.size());
    const int needed = std::max(params.advantage_samples, params.fim_samples);
    const bool short_buffer = static_cast<int>(agent.buffer.size()) < needed;

    std::vector<double> buffer_deltas;
    buffer_deltas.reserve(agent.buffer.size());
    for (const BufferSample& s : agent.buffer) buffer_deltas.push_back(s.delta);
    const EpsilonC ec =
        (short_buffer || buffer_deltas.empty()) ? EpsilonC{} : epsilon_and_c(buffer_deltas, params.gamma);

    if (short_buffer || ec.degenerate()) {
        for (std::size_t u = 0; u < replicas.size(); ++u) {
            MixReport report;
            report.replica_index = static_cast<int>(u);
            report.provenance = replicas[u].provenance;
            report.epsilon_hat = ec.epsilon_hat;
            report.c = ec.c;
            report.skipped = true;
            reports.push_back(std::move(report));
        }
        agent.theta_old = agent.theta;
        return reports;
    }

    if (params.mode == MixMode::AllPositive) {
        const ParameterVector preround = agent.theta;
        for (std::size_t u = 0; u < replicas.size(); ++u) {
            MixReport report = detail::evaluate_replica(
                agent, params.advantage_against_preround ? std::span<const double>(preround) : std::span<const double>(agent.theta),
                replicas[u], static_cast<int>(u), ec, params, rng);
            if (report.advantage_estimate > 0.0) {
                detail::apply_accepted_mix(agent, replicas[u], report, params, rng);
            }
            reports.push_back(std::move(report));
        }
    } else {
        int best = -1;
        for (std::size_t u = 0; u < replicas.size(); ++u) {
            reports.push_back(
                detail::evaluate_replica(agent, agent.theta, replicas[u], static_cast<int>(u), ec, params, rng));
            if (reports.back().advantage_estimate > 0.0 &&
                (best < 0 || reports.back().advantage_estimate >
                                 reports[static_cast<std::size_t>(best)].advantage_estimate)) {
                best = static_cast<int>(u);
            }
        }
        if (best >= 0) {
            detail::apply_accepted_mix(agent, replicas[static_cast<std::size_t>(best)],
                                       reports[static_cast<std::size_t>(best)], params, rng);
        }
    }
    agent.theta_old = agent.theta;
    return reports;
}

}  // namespace rsm

#endif  // RSM_MIXTURE_HPP
