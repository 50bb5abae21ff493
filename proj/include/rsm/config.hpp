#ifndef RSM_CONFIG_HPP
#define RSM_CONFIG_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/ledger.hpp"
#include "rsm/mlp.hpp"
#include "rsm/ring_road.hpp"

namespace rsm {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TopologyKind { Complete, Ring, Geometric };

inline std::string to_string(TopologyKind k) {
    switch (k) {
        case TopologyKind::Complete: return "complete";
        case TopologyKind::Ring: return "ring";
        case TopologyKind::Geometric: return "geometric";
    }
    throw std::logic_error("unknown TopologyKind");
}

inline TopologyKind topology_from_string(const std::string& s) {
    if (s == "complete") return TopologyKind::Complete;
    if (s == "ring") return TopologyKind::Ring;
    if (s == "geometric") return TopologyKind::Geometric;
    throw ConfigError("unknown topology '" + s + "' (expected complete|ring|geometric)");
}

// All experiment knobs. Defaults mirror the reference parameter table:
// E=1500, T=250, U=3, K=50, M=200, eta_a=2.5e-5, eta_c=5e-5, gamma=0.9,
// beta=0.01, tau=1, P=4, kappa=2.
struct ExperimentConfig {
    int steps_per_epoch = 1500;  // E
    int batch_steps = 250;       // T
    int ppo_iterations = 3;      // U
    int tau = 1;
    int segments = 4;            // P
    int replicas = 2;            // kappa
    int advantage_samples = 200; // M
    int fim_samples = 50;        // K
    double eta_a = 2.5e-5;
    double eta_c = 5e-5;
    double gamma = 0.9;
    double beta = 0.01;
    double eps_clip = 0.2;
    double alpha_fraction = 0.9;
    bool normalize_advantages = false;
    bool mix_against_preround = false;

    CommMode mode = CommMode::Rsm;
    int epochs = 300;
    int test_every = 10;
    int eval_repetitions = 5;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    std::vector<int> hidden = {64, 64};
    double log_std_init = kLogStdInit;
    int buffer_factor = 4;  // buffer cap = buffer_factor * T

    TopologyKind topology = TopologyKind::Complete;
    double geo_radius = 0.6;

    RoadConfig road;

    std::string out_dir = "out";
    bool dump_trajectories = false;
    bool replica_log = false;
    int threads = 0;  // 0 = one per seed up to hardware concurrency

    void validate() const {
        if (steps_per_epoch <= 0) throw ConfigError("E must be > 0");
        if (batch_steps <= 0) throw ConfigError("T must be > 0");
        if (ppo_iterations < 0) throw ConfigError("U must be >= 0");
        if (tau < 1) throw ConfigError("tau must be >= 1");
        if (segments < 1) throw ConfigError("P must be >= 1");
        if (replicas < 0) throw ConfigError("kappa must be >= 0");
        if (advantage_samples < 1) throw ConfigError("M must be >= 1");
        if (fim_samples < 1) throw ConfigError("K must be >= 1");
        if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in (0,1)");
        if (eps_clip <= 0.0) throw ConfigError("eps_clip must be > 0");
        if (alpha_fraction <= 0.0 || alpha_fraction > 1.0) throw ConfigError("alpha_fraction must be in (0,1]");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (test_every < 1) throw ConfigError("test_every must be >= 1");
        if (eval_repetitions < 1) throw ConfigError("eval_repetitions must be >= 1");
        if (seeds.empty()) throw ConfigError("need at least one seed");
        if (buffer_factor < 1) throw ConfigError("buffer_factor must be >= 1");
        try {
            road.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (segments > road.n_cav - 1 && topology == TopologyKind::Complete && needs_topology()) {
            throw ConfigError("P exceeds the complete-graph degree (n_cav - 1)");
        }
    }

    bool needs_topology() const {
        return mode == CommMode::Rsm || mode == CommMode::RsmBest || mode == CommMode::Average;
    }

    std::size_t buffer_cap() const { return static_cast<std::size_t>(buffer_factor) * static_cast<std::size_t>(batch_steps); }
};

// Small everything: full parameter-table hyperparameters but an epoch short
// enough for laptop-scale runs. Learning rates are raised to suit the short
// horizon; all values remain plain config fields.
inline void apply_desk_preset(ExperimentConfig& cfg) {
    cfg.steps_per_epoch = 500;
    cfg.epochs = 300;
    cfg.test_every = 10;
    cfg.eta_a = 1e-3;
    cfg.eta_c = 2e-3;
    cfg.topology = TopologyKind::Complete;
    cfg.road = RoadConfig{};
}

inline void apply_table2_preset(ExperimentConfig& cfg) {
    const ExperimentConfig defaults;
    cfg.steps_per_epoch = defaults.steps_per_epoch;
    cfg.batch_steps = defaults.batch_steps;
    cfg.ppo_iterations = defaults.ppo_iterations;
    cfg.tau = defaults.tau;
    cfg.segments = defaults.segments;
    cfg.replicas = defaults.replicas;
    cfg.advantage_samples = defaults.advantage_samples;
    cfg.fim_samples = defaults.fim_samples;
    cfg.eta_a = defaults.eta_a;
    cfg.eta_c = defaults.eta_c;
    cfg.gamma = defaults.gamma;
    cfg.beta = defaults.beta;
    cfg.road = RoadConfig{};
}

inline void apply_preset(ExperimentConfig& cfg, const std::string& name) {
    if (name == "desk") {
        apply_desk_preset(cfg);
    } else if (name == "table2") {
        apply_table2_preset(cfg);
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected desk|table2)");
    }
}

namespace detail {
inline std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
    return s.substr(b, e - b);
}

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer for " + key + ": '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for " + key + ": '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

template <typename T, typename Fn>
std::vector<T> parse_list(const std::string& key, const std::string& v, Fn item) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (!part.empty()) out.push_back(item(key, part));
    }
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}
}  // namespace detail

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    return detail::parse_list<std::uint64_t>("seeds", text, [](const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const unsigned long long x = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return static_cast<std::uint64_t>(x);
        } catch (const std::exception&) {
            throw ConfigError("invalid seed in " + key + ": '" + v + "'");
        }
    });
}

// Applies one key=value assignment (the config-file grammar).
inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    if (key == "E") cfg.steps_per_epoch = parse_int(key, value);
    else if (key == "T") cfg.batch_steps = parse_int(key, value);
    else if (key == "U") cfg.ppo_iterations = parse_int(key, value);
    else if (key == "tau") cfg.tau = parse_int(key, value);
    else if (key == "P") cfg.segments = parse_int(key, value);
    else if (key == "kappa") cfg.replicas = parse_int(key, value);
    else if (key == "M") cfg.advantage_samples = parse_int(key, value);
    else if (key == "K") cfg.fim_samples = parse_int(key, value);
    else if (key == "eta_a") cfg.eta_a = parse_double(key, value);
    else if (key == "eta_c") cfg.eta_c = parse_double(key, value);
    else if (key == "gamma") cfg.gamma = parse_double(key, value);
    else if (key == "beta") cfg.beta = parse_double(key, value);
    else if (key == "eps_clip") cfg.eps_clip = parse_double(key, value);
    else if (key == "alpha_fraction") cfg.alpha_fraction = parse_double(key, value);
    else if (key == "normalize_advantages") cfg.normalize_advantages = parse_bool(key, value);
    else if (key == "mix_against_preround") cfg.mix_against_preround = parse_bool(key, value);
    else if (key == "mode") cfg.mode = comm_mode_from_string(value);
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "test_every") cfg.test_every = parse_int(key, value);
    else if (key == "eval_repetitions") cfg.eval_repetitions = parse_int(key, value);
    else if (key == "seeds") cfg.seeds = parse_seed_list(value);
    else if (key == "hidden") cfg.hidden = detail::parse_list<int>(key, value, parse_int);
    else if (key == "log_std_init") cfg.log_std_init = parse_double(key, value);
    else if (key == "buffer_factor") cfg.buffer_factor = parse_int(key, value);
    else if (key == "topology") cfg.topology = topology_from_string(value);
    else if (key == "geo_radius") cfg.geo_radius = parse_double(key, value);
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "dump_trajectories") cfg.dump_trajectories = parse_bool(key, value);
    else if (key == "replica_log") cfg.replica_log = parse_bool(key, value);
    else if (key == "threads") cfg.threads = parse_int(key, value);
    else if (key == "preset") apply_preset(cfg, value);
    else if (key == "ring_length") cfg.road.ring_length = parse_double(key, value);
    else if (key == "n_human") cfg.road.n_human = parse_int(key, value);
    else if (key == "n_cav") cfg.road.n_cav = parse_int(key, value);
    else if (key == "dt") cfg.road.dt = parse_double(key, value);
    else if (key == "v_desired") cfg.road.v_desired = parse_double(key, value);
    else if (key == "max_accel") cfg.road.max_accel = parse_double(key, value);
    else if (key == "max_decel") cfg.road.max_decel = parse_double(key, value);
    else if (key == "vehicle_length") cfg.road.vehicle_length = parse_double(key, value);
    else if (key == "init_jitter") cfg.road.init_jitter = parse_double(key, value);
    else if (key == "randomize_arrangement") cfg.road.randomize_arrangement = parse_bool(key, value);
    else if (key == "idm_v0") cfg.road.idm.v0 = parse_double(key, value);
    else if (key == "idm_t_headway") cfg.road.idm.t_headway = parse_double(key, value);
    else if (key == "idm_s0") cfg.road.idm.s0 = parse_double(key, value);
    else if (key == "idm_a_max") cfg.road.idm.a_max = parse_double(key, value);
    else if (key == "idm_b_comf") cfg.road.idm.b_comf = parse_double(key, value);
    else if (key == "idm_emergency_decel") cfg.road.idm.emergency_decel = parse_double(key, value);
    else if (key == "idm_exponent") cfg.road.idm.exponent = parse_double(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

// key=value per line; '#' starts a comment; blank lines ignored.
inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        apply_config_entry(cfg, key, value);
    }
}

}  // namespace rsm

#endif  // RSM_CONFIG_HPP
