#ifndef RSM_HARNESS_HPP
#define RSM_HARNESS_HPP

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsm/config.hpp"
#include "rsm/gossip.hpp"
#include "rsm/ledger.hpp"
#include "rsm/mixture.hpp"
#include "rsm/policy.hpp"
#include "rsm/ppo.hpp"
#include "rsm/ring_road.hpp"
#include "rsm/rng.hpp"

namespace rsm {

// Locale-independent fixed-point formatting for file output.
inline std::string format_fixed(double v, int precision) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    return std::string(buf, res.ptr);
}

struct TestPoint {
    int epoch = 0;              // epochs completed when the test ran
    double avg_reward = 0.0;    // mean accumulated reward over eval repetitions
    long rho_total = 0;
    long rho_ef = 0;
    double rho_r = 0.0;
    double psi_upsilon = 0.0;   // in upsilon units
    double sim_seconds = 0.0;   // simulated time elapsed in training
};

struct SeedRunResult {
    CommMode mode = CommMode::Rsm;
    std::uint64_t seed = 0;
    std::size_t upsilon = 0;
    std::vector<TestPoint> tests;
    std::vector<double> train_rewards;  // accumulated reward per training epoch
    CommLedger ledger;
    int convergence_epoch = 0;  // epoch count at the convergence test point
    bool converged = false;
    double final_reward = 0.0;
    // Ledger snapshot at the convergence test point (totals until convergence).
    long rho_total_at_convergence = 0;
    long rho_ef_at_convergence = 0;
    double rho_r_at_convergence = 0.0;
    double psi_upsilon_at_convergence = 0.0;
    long collisions = 0;
    double elapsed_seconds = 0.0;  // real wall time, console reporting only
    std::string trajectory_csv;    // populated when dump_trajectories is set
    std::string replica_jsonl;     // populated when replica_log is set
};

namespace detail {

struct EvalOutcome {
    double mean_reward = 0.0;
};

inline void append_trajectory_rows(std::string& out, const RingRoadEnv& env, int epoch, int step, double reward,
                                   std::span<const double> cav_actions) {
    const auto& vehicles = env.vehicles();
    const auto& accels = env.last_accelerations();
    const auto& cav_ids = env.cav_vehicle_ids();
    std::vector<int> cav_slot(vehicles.size(), -1);
    for (std::size_t c = 0; c < cav_ids.size(); ++c) cav_slot[static_cast<std::size_t>(cav_ids[c])] = static_cast<int>(c);
    for (std::size_t v = 0; v < vehicles.size(); ++v) {
        const bool is_cav = vehicles[v].kind == VehicleKind::Cav;
        const double action = is_cav ? cav_actions[static_cast<std::size_t>(cav_slot[v])] : accels[v];
        out += std::to_string(epoch);
        out += ',';
        out += std::to_string(step);
        out += ',';
        out += std::to_string(v);
        out += ',';
        out += is_cav ? "cav" : "human";
        out += ',';
        out += format_fixed(vehicles[v].position, 3);
        out += ',';
        out += format_fixed(vehicles[v].speed, 3);
        out += ',';
        out += format_fixed(action, 4);
        out += ',';
        out += format_fixed(reward, 6);
        out += '\n';
    }
}

// Deterministic evaluation: actions are the policy means, no sampling.
inline EvalOutcome evaluate_policies(const ExperimentConfig& cfg, const MlpConfig& actor_cfg,
                                     const ParamLayout& actor_layout, const std::vector<AgentState>& agents,
                                     std::uint64_t seed, int epoch, std::string* traj_sink) {
    const int n_cav = cfg.road.n_cav;
    double total = 0.0;
    for (int rep = 0; rep < cfg.eval_repetitions; ++rep) {
        RingRoadEnv env(cfg.road, cfg.steps_per_epoch);
        env.reset(Rng::stream(seed, {stream::kEvalReset, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(rep)}));
        std::vector<std::vector<double>> obs(static_cast<std::size_t>(n_cav));
        for (int i = 0; i < n_cav; ++i) obs[static_cast<std::size_t>(i)] = env.observe(i);
        std::vector<double> actions(static_cast<std::size_t>(n_cav), 0.0);
        double episode = 0.0;
        for (int t = 0; t < cfg.steps_per_epoch; ++t) {
            for (int i = 0; i < n_cav; ++i) {
                const PolicyMoments pm = policy_forward(actor_cfg, actor_layout,
                                                        agents[static_cast<std::size_t>(i)].theta,
                                                        obs[static_cast<std::size_t>(i)]);
                actions[static_cast<std::size_t>(i)] = pm.mean[0];
            }
            const RingRoadEnv::StepResult res = env.step(actions);
            episode += res.reward;
            if (traj_sink != nullptr && rep == 0) {
                append_trajectory_rows(*traj_sink, env, epoch, t, res.reward, actions);
            }
            if (res.done) break;
            for (int i = 0; i < n_cav; ++i) obs[static_cast<std::size_t>(i)] = env.observe(i);
        }
        total += episode;
    }
    return {total / static_cast<double>(cfg.eval_repetitions)};
}

inline nlohmann::json mix_report_json(int epoch, long round, int agent, const MixReport& rep) {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["round"] = round;
    j["agent"] = agent;
    j["replica"] = rep.replica_index;
    j["provenance"] = rep.provenance;
    j["advantage"] = rep.advantage_estimate;
    j["epsilon_hat"] = rep.epsilon_hat;
    j["C"] = rep.c;
    j["quad_form"] = rep.quad_form;
    j["alpha_bound"] = rep.alpha_bound;
    j["alpha_used"] = rep.alpha_used;
    j["accepted"] = rep.accepted;
    j["skipped"] = rep.skipped;
    return j;
}

}  // namespace detail

// Trains one seed end to end. Deterministic in (config, seed).
inline SeedRunResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto wall_start = std::chrono::steady_clock::now();
    const int n_cav = cfg.road.n_cav;
    const MlpConfig actor_cfg = MlpConfig::actor(RingRoadEnv::observation_dim(), 1, cfg.hidden);
    const MlpConfig critic_cfg = MlpConfig::critic(RingRoadEnv::observation_dim(), cfg.hidden);
    const ParamLayout actor_layout(actor_cfg);
    const ParamLayout critic_layout(critic_cfg);

    SeedRunResult result;
    result.mode = cfg.mode;
    result.seed = seed;
    result.upsilon = actor_layout.size();

    std::vector<AgentState> agents;
    agents.reserve(static_cast<std::size_t>(n_cav));
    for (int i = 0; i < n_cav; ++i) {
        agents.push_back(AgentState::init(
            actor_cfg, critic_cfg,
            Rng::stream(seed, {stream::kActorInit, static_cast<std::uint64_t>(i)}).next_u64(),
            Rng::stream(seed, {stream::kCriticInit, static_cast<std::uint64_t>(i)}).next_u64(), cfg.log_std_init));
    }

    Topology topo;
    if (cfg.needs_topology()) {
        switch (cfg.topology) {
            case TopologyKind::Complete: topo = Topology::complete(n_cav); break;
            case TopologyKind::Ring: topo = Topology::ring(n_cav); break;
            case TopologyKind::Geometric:
                topo = Topology::geometric(n_cav, cfg.geo_radius, Rng::stream(seed, {stream::kTopology}));
                break;
        }
        topo.validate();
        if (topo.min_degree() < cfg.segments) {
            throw ConfigError("topology degree " + std::to_string(topo.min_degree()) + " is below P=" +
                              std::to_string(cfg.segments));
        }
    }

    std::vector<Rng> action_rngs;
    std::vector<Rng> gossip_rngs;
    std::vector<Rng> mix_rngs;
    for (int i = 0; i < n_cav; ++i) {
        action_rngs.push_back(Rng::stream(seed, {stream::kActionNoise, static_cast<std::uint64_t>(i)}));
        gossip_rngs.push_back(Rng::stream(seed, {stream::kGossipTargets, static_cast<std::uint64_t>(i)}));
        mix_rngs.push_back(Rng::stream(seed, {stream::kMixSamples, static_cast<std::uint64_t>(i)}));
    }

    PpoHyperparams hp;
    hp.update_iterations = cfg.ppo_iterations;
    hp.lr_actor = cfg.eta_a;
    hp.lr_critic = cfg.eta_c;
    hp.gamma = cfg.gamma;
    hp.eps_clip = cfg.eps_clip;
    hp.entropy_beta = cfg.beta;
    hp.normalize_advantages = cfg.normalize_advantages;

    RoundParams round_params;
    round_params.parts = cfg.segments;
    round_params.kappa = cfg.replicas;
    round_params.mix.advantage_samples = cfg.advantage_samples;
    round_params.mix.fim_samples = cfg.fim_samples;
    round_params.mix.gamma = cfg.gamma;
    round_params.mix.mode = cfg.mode == CommMode::RsmBest ? MixMode::BestOnly : MixMode::AllPositive;
    round_params.mix.alpha_fraction = cfg.alpha_fraction;
    round_params.mix.advantage_against_preround = cfg.mix_against_preround;

    RingRoadEnv env(cfg.road, cfg.steps_per_epoch);
    CommLedger& ledger = result.ledger;
    long sim_steps = 0;
    const long comm_interval = static_cast<long>(cfg.tau) * static_cast<long>(cfg.ppo_iterations);

    std::vector<std::vector<double>> obs(static_cast<std::size_t>(n_cav));
    std::vector<double> actions(static_cast<std::size_t>(n_cav), 0.0);
    std::string* traj_sink = cfg.dump_trajectories ? &result.trajectory_csv : nullptr;
    if (traj_sink != nullptr) {
        *traj_sink = "epoch,step,vehicle_id,kind,position,speed,action,reward\n";
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        env.reset(Rng::stream(seed, {stream::kEnvReset, static_cast<std::uint64_t>(epoch)}));
        for (AgentState& a : agents) a.clear_buffer();
        for (int i = 0; i < n_cav; ++i) obs[static_cast<std::size_t>(i)] = env.observe(i);
        double epoch_reward = 0.0;
        bool epoch_done = false;

        while (!epoch_done) {
            std::vector<MiniBatch> batches(static_cast<std::size_t>(n_cav));
            bool collision = false;
            for (int t = 0; t < cfg.batch_steps; ++t) {
                for (int i = 0; i < n_cav; ++i) {
                    AgentState& agent = agents[static_cast<std::size_t>(i)];
                    const PolicyMoments pm =
                        policy_forward(actor_cfg, actor_layout, agent.theta_old, obs[static_cast<std::size_t>(i)]);
                    const double noise = action_rngs[static_cast<std::size_t>(i)].normal();
                    actions[static_cast<std::size_t>(i)] = pm.mean[0] + pm.sigma[0] * noise;
                    Transition tr;
                    tr.state = obs[static_cast<std::size_t>(i)];
                    tr.action = {actions[static_cast<std::size_t>(i)]};
                    tr.logp_old = log_prob_from_moments(pm, agent.theta_old, actor_layout, tr.action);
                    batches[static_cast<std::size_t>(i)].steps.push_back(std::move(tr));
                }
                const RingRoadEnv::StepResult res = env.step(actions);
                ++sim_steps;
                epoch_reward += res.reward;
                collision = res.collision;
                for (int i = 0; i < n_cav; ++i) {
                    Transition& tr = batches[static_cast<std::size_t>(i)].steps.back();
                    tr.reward = res.reward;
                    tr.done = res.collision;
                    obs[static_cast<std::size_t>(i)] = env.observe(i);
                    tr.next_state = obs[static_cast<std::size_t>(i)];
                }
                if (res.done) {
                    epoch_done = true;
                    break;
                }
            }
            if (collision) ++result.collisions;
            for (int i = 0; i < n_cav; ++i) {
                batches[static_cast<std::size_t>(i)].bootstrap_state = obs[static_cast<std::size_t>(i)];
            }

            for (int i = 0; i < n_cav; ++i) {
                AgentState& agent = agents[static_cast<std::size_t>(i)];
                local_update(agent, batches[static_cast<std::size_t>(i)], hp);
                const std::vector<double> deltas =
                    compute_deltas(batches[static_cast<std::size_t>(i)], critic_cfg, critic_layout, agent.omega,
                                   cfg.gamma);
                agent.push_buffer(batches[static_cast<std::size_t>(i)], deltas, cfg.buffer_cap());
            }

            const long k = agents.front().iterations;
            if (cfg.mode != CommMode::None && comm_interval > 0 && k % comm_interval == 0) {
                std::vector<AgentRoundResult> round_results;
                switch (cfg.mode) {
                    case CommMode::Rsm:
                    case CommMode::RsmBest:
                        round_results = round_rsm(agents, topo, round_params, gossip_rngs, mix_rngs, ledger);
                        break;
                    case CommMode::Average:
                        round_results = round_average_replicas(agents, topo, round_params, gossip_rngs, ledger);
                        break;
                    case CommMode::Central:
                        round_central(agents, ledger);
                        break;
                    case CommMode::None: break;
                }
                if (cfg.replica_log) {
                    for (const AgentRoundResult& ar : round_results) {
                        for (const MixReport& rep : ar.reports) {
                            result.replica_jsonl +=
                                detail::mix_report_json(epoch, ledger.rounds, ar.agent, rep).dump();
                            result.replica_jsonl += '\n';
                        }
                    }
                }
            }
        }
        result.train_rewards.push_back(epoch_reward);

        if (epoch % cfg.test_every == 0) {
            const detail::EvalOutcome eval =
                detail::evaluate_policies(cfg, actor_cfg, actor_layout, agents, seed, epoch, traj_sink);
            const LedgerMetrics lm = ledger_metrics(ledger, result.upsilon);
            TestPoint tp;
            tp.epoch = epoch;
            tp.avg_reward = eval.mean_reward;
            tp.rho_total = lm.rho_total;
            tp.rho_ef = lm.rho_ef;
            tp.rho_r = lm.rho_r;
            tp.psi_upsilon = lm.psi_upsilon;
            tp.sim_seconds = static_cast<double>(sim_steps) * cfg.road.dt;
            result.tests.push_back(tp);
        }
    }

    if (result.tests.size() >= 5) {
        std::vector<double> curve;
        curve.reserve(result.tests.size());
        for (const TestPoint& tp : result.tests) curve.push_back(tp.avg_reward);
        const ConvergencePoint cp = convergence_epoch(curve);
        const TestPoint& at = result.tests[static_cast<std::size_t>(cp.index)];
        result.convergence_epoch = at.epoch;
        result.converged = cp.converged;
        result.rho_total_at_convergence = at.rho_total;
        result.rho_ef_at_convergence = at.rho_ef;
        result.rho_r_at_convergence = at.rho_r;
        result.psi_upsilon_at_convergence = at.psi_upsilon;
        const int n = static_cast<int>(curve.size());
        double acc = 0.0;
        int count = 0;
        for (int j = std::max(0, n - 3); j < n; ++j) {
            acc += curve[static_cast<std::size_t>(j)];
            ++count;
        }
        result.final_reward = acc / static_cast<double>(count);
    } else if (!result.tests.empty()) {
        result.convergence_epoch = result.tests.back().epoch;
        result.final_reward = result.tests.back().avg_reward;
        result.rho_total_at_convergence = result.tests.back().rho_total;
        result.rho_ef_at_convergence = result.tests.back().rho_ef;
        result.rho_r_at_convergence = result.tests.back().rho_r;
        result.psi_upsilon_at_convergence = result.tests.back().psi_upsilon;
    }
    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return result;
}

inline std::string results_csv_header() {
    return "mode,seed,epoch,test_avg_reward,rho_total,rho_ef,rho_r,psi_upsilon,wall_s\n";
}

inline void append_results_csv(std::string& out, const SeedRunResult& r) {
    for (const TestPoint& tp : r.tests) {
        out += to_string(r.mode);
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += std::to_string(tp.epoch);
        out += ',';
        out += format_fixed(tp.avg_reward, 6);
        out += ',';
        out += std::to_string(tp.rho_total);
        out += ',';
        out += std::to_string(tp.rho_ef);
        out += ',';
        out += format_fixed(tp.rho_r, 6);
        out += ',';
        out += format_fixed(tp.psi_upsilon, 1);
        out += ',';
        out += format_fixed(tp.sim_seconds, 1);
        out += '\n';
    }
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, std::span<const SeedRunResult> results) {
    nlohmann::json j;
    j["schema_version"] = 1;
    nlohmann::json runs = nlohmann::json::array();
    for (const SeedRunResult& r : results) {
        nlohmann::json run;
        run["mode"] = to_string(r.mode);
        run["seed"] = r.seed;
        run["N"] = cfg.road.n_cav;
        run["P"] = cfg.segments;
        run["kappa"] = cfg.replicas;
        run["tau"] = cfg.tau;
        run["upsilon"] = r.upsilon;
        run["convergence_epoch"] = r.convergence_epoch;
        run["converged"] = r.converged;
        run["rho_total"] = r.rho_total_at_convergence;
        run["rho_ef"] = r.rho_ef_at_convergence;
        run["rho_r"] = r.rho_r_at_convergence;
        run["psi_upsilon_units"] = r.psi_upsilon_at_convergence;
        run["final_reward"] = r.final_reward;
        runs.push_back(std::move(run));
    }
    j["runs"] = std::move(runs);
    return j;
}

// Runs every configured seed (in parallel when allowed) and writes
// results.csv, summary.json and any optional per-seed artifacts under
// cfg.out_dir. Output bytes are a pure function of (config, seeds).
inline std::vector<SeedRunResult> run_experiment(const ExperimentConfig& cfg, bool verbose = false) {
    cfg.validate();
    const std::size_t n_seeds = cfg.seeds.size();
    std::vector<SeedRunResult> results(n_seeds);
    std::vector<std::exception_ptr> errors(n_seeds);

    unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_seeds)));

    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    auto work = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= n_seeds) return;
            try {
                results[idx] = run_seed(cfg, cfg.seeds[idx]);
                if (verbose) {
                    const std::lock_guard<std::mutex> lock(io_mutex);
                    std::cout << "[" << to_string(cfg.mode) << " seed " << cfg.seeds[idx] << "] final reward "
                              << results[idx].final_reward << " (" << format_fixed(results[idx].elapsed_seconds, 1)
                              << " s)\n";
                }
            } catch (...) {
                errors[idx] = std::current_exception();
                return;
            }
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    for (const std::exception_ptr& err : errors) {
        if (err) std::rethrow_exception(err);
    }

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    std::string csv = results_csv_header();
    for (const SeedRunResult& r : results) append_results_csv(csv, r);
    {
        std::ofstream out(fs::path(cfg.out_dir) / "results.csv", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write results.csv under " + cfg.out_dir);
        out << csv;
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "summary.json", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write summary.json under " + cfg.out_dir);
        out << summary_json(cfg, results).dump(2) << '\n';
    }
    for (const SeedRunResult& r : results) {
        if (!r.trajectory_csv.empty()) {
            const std::string name = "trajectories_" + to_string(r.mode) + "_s" + std::to_string(r.seed) + ".csv";
            std::ofstream out(fs::path(cfg.out_dir) / name, std::ios::binary);
            out << r.trajectory_csv;
        }
        if (!r.replica_jsonl.empty()) {
            const std::string name = "replicas_" + to_string(r.mode) + "_s" + std::to_string(r.seed) + ".jsonl";
            std::ofstream out(fs::path(cfg.out_dir) / name, std::ios::binary);
            out << r.replica_jsonl;
        }
    }
    return results;
}

}  // namespace rsm

#endif  // RSM_HARNESS_HPP
