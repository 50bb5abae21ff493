#ifndef RSM_GOSSIP_HPP
#define RSM_GOSSIP_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/ledger.hpp"
#include "rsm/mixture.hpp"
#include "rsm/param_vector.hpp"
#include "rsm/ppo.hpp"
#include "rsm/rng.hpp"

namespace rsm {

// Undirected communication graph over the CAV agents.
struct Topology {
    int n = 0;
    std::vector<std::vector<int>> adjacency;

    void validate() const {
        if (static_cast<int>(adjacency.size()) != n) throw std::invalid_argument("Topology: adjacency size mismatch");
        for (int i = 0; i < n; ++i) {
            for (int j : adjacency[static_cast<std::size_t>(i)]) {
                if (j == i) throw std::invalid_argument("Topology: self-loop");
                if (j < 0 || j >= n) throw std::invalid_argument("Topology: neighbor out of range");
                const auto& back = adjacency[static_cast<std::size_t>(j)];
                if (std::find(back.begin(), back.end(), i) == back.end()) {
                    throw std::invalid_argument("Topology: adjacency not symmetric");
                }
            }
        }
    }

    int min_degree() const {
        int d = n;
        for (const auto& nb : adjacency) d = std::min(d, static_cast<int>(nb.size()));
        return d;
    }

    const std::vector<int>& neighbors(int i) const { return adjacency[static_cast<std::size_t>(i)]; }

    static Topology complete(int n) {
        Topology t;
        t.n = n;
        t.adjacency.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i != j) t.adjacency[static_cast<std::size_t>(i)].push_back(j);
            }
        }
        return t;
    }

    static Topology ring(int n) {
        Topology t;
        t.n = n;
        t.adjacency.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            t.adjacency[static_cast<std::size_t>(i)].push_back((i + 1) % n);
            t.adjacency[static_cast<std::size_t>(i)].push_back((i + n - 1) % n);
        }
        return t;
    }

    // Random geometric graph on the unit square: agents within `radius` of
    // each other are neighbors.
    static Topology geometric(int n, double radius, Rng rng) {
        Topology t;
        t.n = n;
        t.adjacency.resize(static_cast<std::size_t>(n));
        std::vector<std::pair<double, double>> pts;
        pts.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pts.emplace_back(rng.uniform(), rng.uniform());
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double dx = pts[static_cast<std::size_t>(i)].first - pts[static_cast<std::size_t>(j)].first;
                const double dy = pts[static_cast<std::size_t>(i)].second - pts[static_cast<std::size_t>(j)].second;
                if (std::sqrt(dx * dx + dy * dy) <= radius) {
                    t.adjacency[static_cast<std::size_t>(i)].push_back(j);
                    t.adjacency[static_cast<std::size_t>(j)].push_back(i);
                }
            }
        }
        return t;
    }
};

struct SegmentRequest {
    int requester = -1;
    int total_p = 0;
    int target = -1;
    int index_p = 0;
};

// P distinct targets drawn uniformly without replacement from the
// requester's neighbor set.
inline std::vector<int> select_targets(const std::vector<int>& neighbors, int parts, Rng& rng) {
    if (parts > static_cast<int>(neighbors.size())) {
        throw std::invalid_argument("select_targets: P exceeds the neighbor count");
    }
    const std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(neighbors.size()), parts);
    std::vector<int> targets;
    targets.reserve(picks.size());
    for (int k : picks) targets.push_back(neighbors[static_cast<std::size_t>(k)]);
    return targets;
}

// The responder partitions its own parameters with the requester's P and
// returns segment p. Pure over the responder's parameters.
inline Segment handle_request(const SegmentRequest& request, const ParameterVector& responder_theta) {
    if (request.index_p < 1 || request.index_p > request.total_p) {
        throw std::invalid_argument("handle_request: segment index out of range");
    }
    const std::vector<std::size_t> sizes = segment_sizes(responder_theta.size(), request.total_p);
    std::size_t off = 0;
    for (int p = 1; p < request.index_p; ++p) off += sizes[static_cast<std::size_t>(p - 1)];
    Segment seg;
    seg.owner = request.target;
    seg.total_p = request.total_p;
    seg.index_p = request.index_p;
    seg.values.assign(responder_theta.begin() + static_cast<std::ptrdiff_t>(off),
                      responder_theta.begin() +
                          static_cast<std::ptrdiff_t>(off + sizes[static_cast<std::size_t>(request.index_p - 1)]));
    return seg;
}

// kappa rounds of {select targets, P requests/responses, reconstruct}
// against a frozen parameter snapshot. Ledger records each replica with its
// actual transferred value count.
inline std::vector<Replica> build_replicas(int agent, int kappa, int parts, const Topology& topo,
                                           const std::vector<ParameterVector>& snapshot, Rng& rng,
                                           CommLedger& ledger) {
    const std::vector<int>& neighbors = topo.neighbors(agent);
    if (parts > static_cast<int>(neighbors.size())) {
        throw std::invalid_argument("build_replicas: topology degree below P at agent " + std::to_string(agent));
    }
    std::vector<Replica> replicas;
    replicas.reserve(static_cast<std::size_t>(kappa));
    for (int u = 0; u < kappa; ++u) {
        const std::vector<int> targets = select_targets(neighbors, parts, rng);
        std::vector<Segment> segments;
        segments.reserve(targets.size());
        std::size_t moved = 0;
        for (int p = 1; p <= parts; ++p) {
            const SegmentRequest request{agent, parts, targets[static_cast<std::size_t>(p - 1)], p};
            Segment seg = handle_request(request, snapshot[static_cast<std::size_t>(request.target)]);
            moved += seg.values.size();
            segments.push_back(std::move(seg));
        }
        replicas.push_back(reconstruct(segments));
        ledger.note_replica_built(moved);
    }
    return replicas;
}

struct RoundParams {
    int parts = 4;   // P
    int kappa = 2;
    MixRoundParams mix;
};

struct AgentRoundResult {
    int agent = -1;
    std::vector<MixReport> reports;
    std::vector<Replica> replicas;  // as built, before any mixing
};

// One synchronous RSM round: all segment responses are served from a
// pre-round snapshot, then every agent runs its regulated mixing phase.
inline std::vector<AgentRoundResult> round_rsm(std::vector<AgentState>& agents, const Topology& topo,
                                               const RoundParams& params, std::span<Rng> gossip_rngs,
                                               std::span<Rng> mix_rngs, CommLedger& ledger) {
    if (static_cast<int>(agents.size()) != topo.n) throw std::invalid_argument("round_rsm: agent/topology mismatch");
    ledger.note_round();
    std::vector<ParameterVector> snapshot;
    snapshot.reserve(agents.size());
    for (const AgentState& a : agents) snapshot.push_back(a.theta);

    std::vector<AgentRoundResult> results;
    results.reserve(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
        std::vector<Replica> replicas =
            build_replicas(static_cast<int>(i), params.kappa, params.parts, topo, snapshot, gossip_rngs[i], ledger);
        AgentRoundResult r;
        r.agent = static_cast<int>(i);
        r.reports = regulated_mix_round(agents[i], replicas, params.mix, mix_rngs[i]);
        r.replicas = std::move(replicas);
        long accepted = 0;
        for (const MixReport& rep : r.reports) accepted += rep.accepted ? 1 : 0;
        ledger.note_accepted(accepted);
        results.push_back(std::move(r));
    }
    return results;
}

// DRL-Ave rule: referential policy is the mean of the neighbors' parameters
// and alpha = 1 - 1/|Omega_i|. Degenerate |Omega_i| = 1 leaves the agent
// unchanged (alpha = 0).
inline void round_average_neighbors(std::vector<AgentState>& agents, const Topology& topo) {
    if (static_cast<int>(agents.size()) != topo.n) {
        throw std::invalid_argument("round_average_neighbors: agent/topology mismatch");
    }
    std::vector<ParameterVector> snapshot;
    snapshot.reserve(agents.size());
    for (const AgentState& a : agents) snapshot.push_back(a.theta);
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const std::vector<int>& neighbors = topo.neighbors(static_cast<int>(i));
        if (neighbors.empty()) throw std::invalid_argument("round_average_neighbors: empty neighbor set");
        ParameterVector mean(snapshot[i].size(), 0.0);
        for (int j : neighbors) {
            const ParameterVector& other = snapshot[static_cast<std::size_t>(j)];
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += other[k];
        }
        for (double& v : mean) v /= static_cast<double>(neighbors.size());
        const double alpha = 1.0 - 1.0 / static_cast<double>(neighbors.size());
        agents[i].theta = mix(agents[i].theta, mean, alpha);
        agents[i].theta_old = agents[i].theta;
    }
}

// Average-mixture baseline over the same segment/replica transport as RSM:
// every replica is accepted, the referential policy is the plain average of
// the kappa replicas, and alpha = 1 - 1/|Omega_i|.
inline std::vector<AgentRoundResult> round_average_replicas(std::vector<AgentState>& agents, const Topology& topo,
                                                            const RoundParams& params, std::span<Rng> gossip_rngs,
                                                            CommLedger& ledger) {
    if (static_cast<int>(agents.size()) != topo.n) {
        throw std::invalid_argument("round_average_replicas: agent/topology mismatch");
    }
    ledger.note_round();
    std::vector<ParameterVector> snapshot;
    snapshot.reserve(agents.size());
    for (const AgentState& a : agents) snapshot.push_back(a.theta);

    std::vector<AgentRoundResult> results;
    results.reserve(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
        std::vector<Replica> replicas =
            build_replicas(static_cast<int>(i), params.kappa, params.parts, topo, snapshot, gossip_rngs[i], ledger);
        ParameterVector mean(snapshot[i].size(), 0.0);
        AgentRoundResult r;
        r.agent = static_cast<int>(i);
        for (std::size_t u = 0; u < replicas.size(); ++u) {
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += replicas[u].values[k];
            MixReport rep;
            rep.replica_index = static_cast<int>(u);
            rep.provenance = replicas[u].provenance;
            rep.accepted = true;
            r.reports.push_back(std::move(rep));
        }
        for (double& v : mean) v /= static_cast<double>(replicas.size());
        const double alpha = 1.0 - 1.0 / static_cast<double>(topo.neighbors(static_cast<int>(i)).size());
        for (MixReport& rep : r.reports) rep.alpha_used = alpha;
        agents[i].theta = mix(agents[i].theta, mean, alpha);
        agents[i].theta_old = agents[i].theta;
        ledger.note_accepted(static_cast<long>(replicas.size()));
        r.replicas = std::move(replicas);
        results.push_back(std::move(r));
    }
    return results;
}

// Centralized-FL baseline: every actor is replaced by the global mean;
// critics stay local. Priced as one upload and one download per agent.
inline void round_central(std::vector<AgentState>& agents, CommLedger& ledger) {
    if (agents.empty()) throw std::invalid_argument("round_central: no agents");
    ledger.note_round();
    ParameterVector mean(agents.front().theta.size(), 0.0);
    for (const AgentState& a : agents) {
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += a.theta[k];
    }
    for (double& v : mean) v /= static_cast<double>(agents.size());
    for (AgentState& a : agents) {
        a.theta = mean;
        a.theta_old = mean;
    }
    ledger.note_central_exchange(static_cast<int>(agents.size()), mean.size());
}

}  // namespace rsm

#endif  // RSM_GOSSIP_HPP
