#ifndef RSM_LEDGER_HPP
#define RSM_LEDGER_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsm {

enum class CommMode { None, Average, Rsm, RsmBest, Central };

inline std::string to_string(CommMode mode) {
    switch (mode) {
        case CommMode::None: return "none";
        case CommMode::Average: return "average";
        case CommMode::Rsm: return "rsm";
        case CommMode::RsmBest: return "rsm-best";
        case CommMode::Central: return "central";
    }
    throw std::logic_error("unknown CommMode");
}

inline CommMode comm_mode_from_string(const std::string& s) {
    if (s == "none") return CommMode::None;
    if (s == "average") return CommMode::Average;
    if (s == "rsm") return CommMode::Rsm;
    if (s == "rsm-best") return CommMode::RsmBest;
    if (s == "central") return CommMode::Central;
    throw std::invalid_argument("unknown mode '" + s + "' (expected none|average|rsm|rsm-best|central)");
}

// Rows of the per-round transfer cost model, in upsilon units.
enum class CostMode { None, Rsm, AverageMixture, FullExchange, Central };

// Per-round communication volume in units of the parameter-vector size:
//   none -> 0; rsm and average-mixture (segment transport) -> N*kappa;
//   full parameter exchange -> N*(N-1); centralized FL -> 2N (up + down).
inline double per_round_cost_upsilon(CostMode mode, int n_agents, int kappa) {
    if (n_agents < 2) throw std::invalid_argument("per_round_cost_upsilon: need N >= 2");
    switch (mode) {
        case CostMode::None: return 0.0;
        case CostMode::Rsm:
        case CostMode::AverageMixture: return static_cast<double>(n_agents) * static_cast<double>(kappa);
        case CostMode::FullExchange: return static_cast<double>(n_agents) * static_cast<double>(n_agents - 1);
        case CostMode::Central: return 2.0 * static_cast<double>(n_agents);
    }
    throw std::logic_error("unknown CostMode");
}

inline CostMode cost_mode_of(CommMode mode) {
    switch (mode) {
        case CommMode::None: return CostMode::None;
        case CommMode::Average: return CostMode::AverageMixture;
        case CommMode::Rsm:
        case CommMode::RsmBest: return CostMode::Rsm;
        case CommMode::Central: return CostMode::Central;
    }
    throw std::logic_error("unknown CommMode");
}

// Running totals of replica construction and transfer volume. Transfer
// volume is accumulated from actual message sizes (raw value counts), so
// the psi = rho_total * upsilon identity is checkable, not built in.
struct CommLedger {
    long rounds = 0;
    long rho_total = 0;          // replicas built
    long rho_ef = 0;             // replicas accepted for mixing
    double values_transferred = 0.0;  // raw scalar count moved over the wire

    void note_round() { ++rounds; }
    void note_replica_built(std::size_t segment_values_total) {
        ++rho_total;
        values_transferred += static_cast<double>(segment_values_total);
    }
    void note_accepted(long count) { rho_ef += count; }
    void note_central_exchange(int n_agents, std::size_t upsilon) {
        values_transferred += 2.0 * static_cast<double>(n_agents) * static_cast<double>(upsilon);
    }

    double transfers_in_upsilon(std::size_t upsilon) const {
        return values_transferred / static_cast<double>(upsilon);
    }
};

struct LedgerMetrics {
    long rho_total = 0;
    long rho_ef = 0;
    double rho_r = 0.0;       // rho_ef / rho_total, 0 when rho_total == 0
    double psi_raw = 0.0;     // rho_total * upsilon
    double psi_upsilon = 0.0; // psi in upsilon units (= rho_total)
};

inline LedgerMetrics ledger_metrics(const CommLedger& ledger, std::size_t upsilon) {
    LedgerMetrics m;
    m.rho_total = ledger.rho_total;
    m.rho_ef = ledger.rho_ef;
    m.rho_r = ledger.rho_total == 0 ? 0.0
                                    : static_cast<double>(ledger.rho_ef) / static_cast<double>(ledger.rho_total);
    m.psi_upsilon = static_cast<double>(ledger.rho_total);
    m.psi_raw = static_cast<double>(ledger.rho_total) * static_cast<double>(upsilon);
    return m;
}

struct ConvergencePoint {
    int index = 0;  // test-point index
    bool converged = false;
};

// Operationalized "inflexion point of the average reward curve": the first
// test index whose centered moving average (window 5, shrunk at the edges)
// is within 2% of the final moving average and stays within it.
inline ConvergencePoint convergence_epoch(std::span<const double> test_rewards) {
    const int n = static_cast<int>(test_rewards.size());
    if (n < 5) throw std::invalid_argument("convergence_epoch: need at least 5 test points");
    std::vector<double> ma(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - 2);
        const int hi = std::min(n - 1, i + 2);
        double acc = 0.0;
        for (int j = lo; j <= hi; ++j) acc += test_rewards[static_cast<std::size_t>(j)];
        ma[static_cast<std::size_t>(i)] = acc / static_cast<double>(hi - lo + 1);
    }
    const double final_ma = ma.back();
    const double band = 0.02 * std::max(std::abs(final_ma), 1e-12);
    int first = n - 1;
    for (int i = n - 1; i >= 0; --i) {
        if (std::abs(ma[static_cast<std::size_t>(i)] - final_ma) <= band) {
            first = i;
        } else {
            break;
        }
    }
    return {first, first < n - 1};
}

}  // namespace rsm

#endif  // RSM_LEDGER_HPP
