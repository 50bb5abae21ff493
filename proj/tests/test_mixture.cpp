#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "rsm/mixture.hpp"
#include "rsm/rng.hpp"
#include "support/oracles.hpp"

using namespace rsm;

namespace {

// Minimal agent with a hand-crafted buffer for mixing-phase tests.
struct TinyAgent {
    MlpConfig actor_cfg = MlpConfig::actor(1, 1, {1});
    MlpConfig critic_cfg = MlpConfig::critic(1, {1});
    AgentState agent = AgentState::init(actor_cfg, critic_cfg, 1, 2);

    TinyAgent() {
        // zero weights, sigma = 1: mean 0 everywhere
        std::fill(agent.theta.begin(), agent.theta.end(), 0.0);
        agent.theta_old = agent.theta;
    }

    const ParamLayout& layout() const { return agent.actor_layout(); }

    void fill_buffer(double action, double delta, int count) {
        agent.buffer.clear();
        for (int i = 0; i < count; ++i) {
            BufferSample s;
            s.state = {0.25};
            s.action = {action};
            s.logp_old = log_prob(actor_cfg, layout(), agent.theta, s.state, s.action);
            s.delta = delta;
            agent.buffer.push_back(std::move(s));
        }
    }

    // Replica whose policy mean is `mean` at every state (head bias set,
    // all other weights zero).
    Replica mean_shift_replica(double mean) const {
        Replica r;
        r.values.assign(layout().size(), 0.0);
        const int head = layout().layers() - 1;
        r.values[layout().bias_index(head, 0)] = std::atanh(mean);
        r.provenance = {1};
        return r;
    }
};

}  // namespace

TEST_CASE("partition: stated size rule and edge cases") {
    ParameterVector theta(10);
    for (std::size_t i = 0; i < 10; ++i) theta[i] = static_cast<double>(i);
    const auto segs = partition(theta, 4, 7);
    REQUIRE(segs.size() == 4);
    REQUIRE(segs[0].values.size() == 3);
    REQUIRE(segs[1].values.size() == 3);
    REQUIRE(segs[2].values.size() == 2);
    REQUIRE(segs[3].values.size() == 2);
    REQUIRE(segs[0].owner == 7);
    REQUIRE(segs[2].index_p == 3);
    REQUIRE(segs[0].values == std::vector<double>{0.0, 1.0, 2.0});
    REQUIRE(segs[3].values == std::vector<double>{8.0, 9.0});

    const auto whole = partition(theta, 1);
    REQUIRE(whole.size() == 1);
    REQUIRE(whole[0].values == theta);

    REQUIRE_THROWS_AS(partition(theta, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(partition(theta, 11), std::invalid_argument);
}

TEST_CASE("partition/reconstruct is a bitwise round trip") {
    Rng rng(60);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 10 + rng.below(4991);
        ParameterVector theta(n);
        for (double& v : theta) v = rng.uniform(-5.0, 5.0);
        const int parts = 1 + static_cast<int>(rng.below(7));
        const Replica back = reconstruct(partition(theta, parts, 3));
        REQUIRE(back.values == theta);
        REQUIRE(back.provenance == std::vector<int>(static_cast<std::size_t>(parts), 3));
    }
}

TEST_CASE("reconstruct: multi-owner concatenation and validation errors") {
    const ParameterVector a(4, 1.0);
    const ParameterVector b(4, 2.0);
    auto seg_a = partition(a, 2, 1);
    auto seg_b = partition(b, 2, 2);
    const Replica mixed = reconstruct({seg_a[0], seg_b[1]});
    REQUIRE(mixed.values == ParameterVector{1.0, 1.0, 2.0, 2.0});
    REQUIRE(mixed.provenance == std::vector<int>{1, 2});

    // Random multi-owner case equals index-arithmetic slice concatenation.
    Rng rng(61);
    ParameterVector thetas[3];
    for (auto& t : thetas) {
        t.resize(23);
        for (double& v : t) v = rng.uniform(-1.0, 1.0);
    }
    const int parts = 3;
    std::vector<Segment> picks;
    std::vector<int> owners;
    for (int p = 1; p <= parts; ++p) {
        const int owner = static_cast<int>(rng.below(3));
        owners.push_back(owner);
        picks.push_back(partition(thetas[owner], parts, owner)[static_cast<std::size_t>(p - 1)]);
    }
    const Replica got = reconstruct(picks);
    const auto sizes = segment_sizes(23, parts);
    std::size_t off = 0;
    for (int p = 0; p < parts; ++p) {
        for (std::size_t k = 0; k < sizes[static_cast<std::size_t>(p)]; ++k) {
            REQUIRE(got.values[off + k] == thetas[owners[static_cast<std::size_t>(p)]][off + k]);
        }
        off += sizes[static_cast<std::size_t>(p)];
    }

    REQUIRE_THROWS_AS(reconstruct({seg_a[0], seg_a[0]}), std::invalid_argument);  // duplicate index
    REQUIRE_THROWS_AS(reconstruct({seg_a[0]}), std::invalid_argument);            // missing index
    auto bad = seg_b[1];
    bad.values.push_back(0.0);  // size rule violation
    REQUIRE_THROWS_AS(reconstruct({seg_a[0], bad}), std::invalid_argument);
}

TEST_CASE("policy advantage: zero for identical policies, exact one-sample arithmetic") {
    TinyAgent t;
    t.fill_buffer(0.4, 1.0, 8);
    std::vector<const BufferSample*> samples;
    for (const auto& s : t.agent.buffer) samples.push_back(&s);

    REQUIRE(policy_advantage_estimate(t.actor_cfg, t.layout(), t.agent.theta, t.agent.theta, samples) == 0.0);

    // densities pi_tilde = 0.6, pi = 0.4, pi_old = 0.5 at delta = 2 -> 0.8
    const double sqrt2pi = std::sqrt(2.0 * std::numbers::pi);
    ParameterVector theta_tilde(t.layout().size(), 0.0);
    theta_tilde[t.layout().log_std_index(0)] = std::log(1.0 / (0.6 * sqrt2pi));
    ParameterVector theta(t.layout().size(), 0.0);
    theta[t.layout().log_std_index(0)] = std::log(1.0 / (0.4 * sqrt2pi));
    BufferSample s;
    s.state = {0.0};
    s.action = {0.0};  // at the mean: density = 1/(sigma sqrt(2 pi))
    s.logp_old = std::log(0.5);
    s.delta = 2.0;
    const std::vector<const BufferSample*> one{&s};
    REQUIRE(policy_advantage_estimate(t.actor_cfg, t.layout(), theta_tilde, theta, one) ==
            Catch::Approx(0.8).margin(1e-12));
}

TEST_CASE("policy advantage: small-M sign agrees with a large-M oracle on a toy net") {
    const MlpConfig cfg = MlpConfig::actor(2, 1, {3});
    const ParamLayout layout(cfg);
    const ParameterVector theta_old = init_network(cfg, 500);
    const ParameterVector theta = theta_old;

    // One large buffer under the behavior policy; delta correlated with the
    // action so replicas that shift the mean carry real signal.
    Rng rng(501);
    std::deque<BufferSample> buffer;
    const int big_m = 200000;
    for (int i = 0; i < big_m; ++i) {
        BufferSample s;
        s.state = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        s.action = sample_action(cfg, layout, theta_old, s.state, rng);
        s.logp_old = log_prob(cfg, layout, theta_old, s.state, s.action);
        s.delta = s.action[0] - 0.2;
        buffer.push_back(std::move(s));
    }
    std::vector<const BufferSample*> all;
    all.reserve(buffer.size());
    for (const auto& s : buffer) all.push_back(&s);

    Rng draw_rng(502);
    int agree = 0;
    for (int trial = 0; trial < 100; ++trial) {
        ParameterVector tilde = theta;
        for (double& v : tilde) v += draw_rng.uniform(-0.4, 0.4);
        const double oracle = policy_advantage_estimate(cfg, layout, tilde, theta, all);
        const auto idx = draw_rng.sample_without_replacement(big_m, 200);
        std::vector<const BufferSample*> small;
        for (int i : idx) small.push_back(&buffer[static_cast<std::size_t>(i)]);
        const double est = policy_advantage_estimate(cfg, layout, tilde, theta, small);
        agree += (est > 0.0) == (oracle > 0.0) ? 1 : 0;
    }
    REQUIRE(agree >= 95);
}

TEST_CASE("fim quadratic form: K=1 outer product, orthogonality, PSD, dense oracle") {
    const MlpConfig cfg = MlpConfig::actor(3, 1, {4});
    const ParamLayout layout(cfg);
    const ParameterVector theta = init_network(cfg, 70);
    Rng rng(71);

    std::deque<BufferSample> buffer;
    for (int i = 0; i < 12; ++i) {
        BufferSample s;
        s.state = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        s.action = sample_action(cfg, layout, theta, s.state, rng);
        s.logp_old = 0.0;
        s.delta = 1.0;
        buffer.push_back(std::move(s));
    }
    std::vector<const BufferSample*> one{&buffer[0]};
    const FimQuadraticForm q1 = fim_estimate(cfg, layout, theta, one);

    Gradient g(layout.size(), 0.0);
    score_accumulate(cfg, layout, theta, buffer[0].state, buffer[0].action, g);
    std::vector<double> d(layout.size());
    for (double& v : d) v = rng.uniform(-1.0, 1.0);
    double dot = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) dot += g[i] * d[i];
    REQUIRE(q1(d) == Catch::Approx(dot * dot).margin(1e-12));

    // d orthogonal to the single score: q(d) = 0
    double gg = 0.0;
    for (double v : g) gg += v * v;
    std::vector<double> ortho = d;
    for (std::size_t i = 0; i < d.size(); ++i) ortho[i] -= g[i] * (dot / gg);
    REQUIRE(q1(ortho) == Catch::Approx(0.0).margin(1e-9));

    // multi-sample: PSD, zero at zero, dense-matrix agreement
    std::vector<const BufferSample*> many;
    for (const auto& s : buffer) many.push_back(&s);
    const FimQuadraticForm q = fim_estimate(cfg, layout, theta, many);
    const std::vector<double> zero(layout.size(), 0.0);
    REQUIRE(q(zero) == 0.0);

    std::vector<std::vector<double>> scores;
    for (const auto& s : buffer) {
        Gradient gs(layout.size(), 0.0);
        score_accumulate(cfg, layout, theta, s.state, s.action, gs);
        scores.push_back(gs);
    }
    const auto dense = test::dense_fim(scores);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> probe(layout.size());
        for (double& v : probe) v = rng.uniform(-2.0, 2.0);
        const double quad = q(probe);
        REQUIRE(quad >= -1e-9);
        REQUIRE(quad == Catch::Approx(test::dense_quadratic_form(dense, probe)).margin(1e-10));
    }
}

TEST_CASE("epsilon and C: arithmetic, degenerate buffer, monotone in gamma") {
    const std::vector<double> deltas{0.3, -1.0, 0.7};
    const auto ec = epsilon_and_c(deltas, 0.9);
    REQUIRE(ec.epsilon_hat == Catch::Approx(1.0));
    REQUIRE(ec.c == Catch::Approx(180.0).margin(1e-9));
    REQUIRE_FALSE(ec.degenerate());

    const std::vector<double> zeros(5, 0.0);
    REQUIRE(epsilon_and_c(zeros, 0.9).degenerate());

    double prev = 0.0;
    for (double gamma = 0.05; gamma < 0.96; gamma += 0.05) {
        const double c = epsilon_and_c(deltas, gamma).c;
        REQUIRE(c > prev);
        prev = c;
    }
    REQUIRE_THROWS_AS(epsilon_and_c(deltas, 1.0), std::invalid_argument);
}

TEST_CASE("alpha upper bound: worked values and homogeneity") {
    REQUIRE(alpha_upper_bound(1.0, 1.0, 4.0) == Catch::Approx(std::sqrt(0.5)).margin(1e-12));
    REQUIRE(alpha_upper_bound(1.0, 1.0, 2.0) == Catch::Approx(1.0).margin(1e-12));
    const double base = alpha_upper_bound(0.5, 2.0, 3.0);
    REQUIRE(alpha_upper_bound(2.0, 2.0, 3.0) == Catch::Approx(base * std::sqrt(2.0)).margin(1e-12));
    REQUIRE_THROWS_AS(alpha_upper_bound(0.0, 1.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(alpha_upper_bound(-1.0, 1.0, 1.0), std::invalid_argument);
    // vanishing quadratic form hits the floor instead of dividing by zero
    REQUIRE(std::isfinite(alpha_upper_bound(1.0, 1.0, 0.0)));
}

TEST_CASE("mix: endpoint and midpoint identities") {
    const ParameterVector theta{0.0, 2.0};
    const ParameterVector tilde{2.0, 0.0};
    REQUIRE(mix(theta, tilde, 0.0) == theta);
    REQUIRE(mix(theta, tilde, 1.0) == tilde);
    REQUIRE(mix(theta, tilde, 0.5) == ParameterVector{1.0, 1.0});
    REQUIRE_THROWS_AS(mix(theta, ParameterVector{1.0}, 0.5), std::invalid_argument);
    REQUIRE_THROWS_AS(mix(theta, tilde, 1.5), std::invalid_argument);
}

TEST_CASE("regulated round: identical replicas change nothing") {
    TinyAgent t;
    t.fill_buffer(0.4, 1.0, 10);
    MixRoundParams params;
    params.advantage_samples = 4;
    params.fim_samples = 2;
    Rng rng(80);
    std::vector<Replica> replicas(2);
    for (auto& r : replicas) {
        r.values = t.agent.theta;
        r.provenance = {1};
    }
    const ParameterVector before = t.agent.theta;
    const auto reports = regulated_mix_round(t.agent, replicas, params, rng);
    REQUIRE(t.agent.theta == before);
    for (const auto& rep : reports) {
        REQUIRE(rep.advantage_estimate == 0.0);
        REQUIRE_FALSE(rep.accepted);
    }
}

TEST_CASE("regulated round: positive advantage mixes along the segment by alpha_used") {
    TinyAgent t;
    t.fill_buffer(0.4, 1.0, 10);  // positive delta at a positive action
    MixRoundParams params;
    params.advantage_samples = 4;
    params.fim_samples = 2;
    Rng rng(81);
    const Replica toward = t.mean_shift_replica(0.3);
    const ParameterVector before = t.agent.theta;
    const auto reports = regulated_mix_round(t.agent, {toward}, params, rng);
    REQUIRE(reports.size() == 1);
    const MixReport& rep = reports[0];
    REQUIRE(rep.advantage_estimate > 0.0);
    REQUIRE(rep.accepted);
    REQUIRE(rep.alpha_used > 0.0);
    REQUIRE(rep.alpha_used <= 1.0);
    REQUIRE(rep.alpha_used < rep.alpha_bound);
    double moved = 0.0;
    double span = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        moved += (t.agent.theta[i] - before[i]) * (t.agent.theta[i] - before[i]);
        span += (toward.values[i] - before[i]) * (toward.values[i] - before[i]);
    }
    REQUIRE(std::sqrt(moved) == Catch::Approx(rep.alpha_used * std::sqrt(span)).margin(1e-12));
    REQUIRE(t.agent.theta_old == t.agent.theta);
    REQUIRE(all_finite(t.agent.theta));
    REQUIRE(t.agent.theta.size() == before.size());
}

TEST_CASE("regulated round: negative advantage is never mixed") {
    TinyAgent t;
    t.fill_buffer(0.4, -1.0, 10);  // negative delta flips the sign
    MixRoundParams params;
    params.advantage_samples = 4;
    params.fim_samples = 2;
    Rng rng(82);
    const ParameterVector before = t.agent.theta;
    const auto reports = regulated_mix_round(t.agent, {t.mean_shift_replica(0.3)}, params, rng);
    REQUIRE(reports[0].advantage_estimate < 0.0);
    REQUIRE_FALSE(reports[0].accepted);
    REQUIRE(t.agent.theta == before);
}

TEST_CASE("regulated round: degenerate buffer and short buffer are skipped") {
    TinyAgent t;
    t.fill_buffer(0.4, 0.0, 10);  // all deltas zero -> epsilon_hat = 0
    MixRoundParams params;
    params.advantage_samples = 4;
    params.fim_samples = 2;
    Rng rng(83);
    const ParameterVector before = t.agent.theta;
    auto reports = regulated_mix_round(t.agent, {t.mean_shift_replica(0.3)}, params, rng);
    REQUIRE(reports[0].skipped);
    REQUIRE(t.agent.theta == before);

    t.fill_buffer(0.4, 1.0, 3);  // below max(M, K)
    reports = regulated_mix_round(t.agent, {t.mean_shift_replica(0.3)}, params, rng);
    REQUIRE(reports[0].skipped);
    REQUIRE(t.agent.theta == before);
}

TEST_CASE("best-only mode mixes exactly the argmax-positive replica") {
    TinyAgent t;
    t.fill_buffer(0.4, 1.0, 12);
    MixRoundParams params;
    params.advantage_samples = 4;
    params.fim_samples = 2;
    params.mode = MixMode::BestOnly;
    Rng rng(84);
    // one away, one weakly toward, one strongly toward the sampled action
    const std::vector<Replica> replicas{t.mean_shift_replica(-0.3), t.mean_shift_replica(0.1),
                                        t.mean_shift_replica(0.35)};
    const auto reports = regulated_mix_round(t.agent, replicas, params, rng);
    REQUIRE_FALSE(reports[0].accepted);
    REQUIRE_FALSE(reports[1].accepted);
    REQUIRE(reports[2].accepted);
    REQUIRE(reports[2].advantage_estimate > reports[1].advantage_estimate);
    REQUIRE(reports[1].advantage_estimate > 0.0);
}

TEST_CASE("accepted reports satisfy the gate invariants") {
    TinyAgent t;
    t.fill_buffer(0.5, 2.0, 16);
    MixRoundParams params;
    params.advantage_samples = 8;
    params.fim_samples = 4;
    Rng rng(85);
    const std::vector<Replica> replicas{t.mean_shift_replica(0.2), t.mean_shift_replica(-0.2),
                                        t.mean_shift_replica(0.4)};
    const auto reports = regulated_mix_round(t.agent, replicas, params, rng);
    for (const auto& rep : reports) {
        if (rep.accepted) {
            REQUIRE(rep.advantage_estimate > 0.0);
            REQUIRE(rep.alpha_used > 0.0);
            REQUIRE(rep.alpha_used < rep.alpha_bound);
        } else {
            REQUIRE((rep.advantage_estimate <= 0.0 || rep.skipped));
        }
    }
}
