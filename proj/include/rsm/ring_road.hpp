#ifndef RSM_RING_ROAD_HPP
#define RSM_RING_ROAD_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rsm/rng.hpp"

namespace rsm {

struct IdmParams {
    double v0 = 10.0;        // desired free speed, m/s
    double t_headway = 1.0;  // s
    double s0 = 2.0;         // minimum gap, m
    double a_max = 1.0;      // m/s^2
    double b_comf = 1.5;     // m/s^2, comfortable braking inside the gap law
    double emergency_decel = 3.0;  // m/s^2, hard braking limit for humans
    double exponent = 4.0;
};

struct RoadConfig {
    double ring_length = 260.0;  // m
    int n_human = 5;
    int n_cav = 9;
    double dt = 0.1;           // s
    double v_desired = 8.0;    // m/s, per-vehicle desired speed for the reward
    double max_accel = 1.0;    // m/s^2
    double max_decel = 1.0;    // m/s^2
    double vehicle_length = 5.0;  // m
    double init_jitter = 0.1;  // fraction of even spacing
    // Redraw which slots are human-driven at every reset; when false the
    // humans sit at fixed evenly interleaved slots.
    bool randomize_arrangement = true;
    IdmParams idm;

    int n_total() const { return n_human + n_cav; }

    void validate() const {
        if (ring_length <= 0.0) throw std::invalid_argument("RoadConfig: ring_length must be > 0");
        if (n_total() < 2) throw std::invalid_argument("RoadConfig: need at least 2 vehicles");
        if (dt < 0.0) throw std::invalid_argument("RoadConfig: dt must be >= 0");
        if (v_desired <= 0.0) throw std::invalid_argument("RoadConfig: v_desired must be > 0");
        if (vehicle_length * n_total() >= ring_length) {
            throw std::invalid_argument("RoadConfig: vehicles do not fit on the ring");
        }
    }
};

enum class VehicleKind { Human, Cav };

struct VehicleState {
    double position = 0.0;  // m along the ring, in [0, ring_length)
    double speed = 0.0;     // m/s, >= 0
    VehicleKind kind = VehicleKind::Human;
};

// R = max(||v_de|| - ||v_ac - v_de||, 0) / ||v_de||, Euclidean norms.
inline double global_reward(std::span<const double> v_actual, std::span<const double> v_desired) {
    if (v_actual.size() != v_desired.size()) throw std::invalid_argument("global_reward: length mismatch");
    double norm_de = 0.0;
    double norm_diff = 0.0;
    for (std::size_t i = 0; i < v_actual.size(); ++i) {
        norm_de += v_desired[i] * v_desired[i];
        const double d = v_actual[i] - v_desired[i];
        norm_diff += d * d;
    }
    norm_de = std::sqrt(norm_de);
    norm_diff = std::sqrt(norm_diff);
    if (norm_de <= 0.0) throw std::invalid_argument("global_reward: desired-velocity vector must be nonzero");
    return std::max(norm_de - norm_diff, 0.0) / norm_de;
}

// IDM car-following acceleration, clamped to the physical envelope.
inline double idm_acceleration(const VehicleState& ego, const VehicleState& leader, double gap, const IdmParams& p,
                               double max_accel, double max_decel) {
    const double dv = ego.speed - leader.speed;
    const double s_star =
        p.s0 + std::max(0.0, ego.speed * p.t_headway + ego.speed * dv / (2.0 * std::sqrt(p.a_max * p.b_comf)));
    const double a =
        p.a_max * (1.0 - std::pow(ego.speed / p.v0, p.exponent) - (s_star / gap) * (s_star / gap));
    return std::clamp(a, -max_decel, max_accel);
}

// Single-lane ring road with IDM humans and externally controlled CAVs.
// Vehicle order around the ring is fixed at reset; no overtaking.
class RingRoadEnv {
  public:
    RingRoadEnv(RoadConfig config, int horizon) : config_(config), horizon_(horizon) {
        config_.validate();
        if (horizon_ <= 0) throw std::invalid_argument("RingRoadEnv: horizon must be > 0");
    }

    struct StepResult {
        double reward = 0.0;
        bool done = false;
        bool collision = false;
    };

    // Vehicles placed evenly (humans interleaved among CAVs) with seeded
    // jitter of +-init_jitter * spacing; all speeds zero.
    void reset(Rng rng) {
        const int n = config_.n_total();
        vehicles_.assign(static_cast<std::size_t>(n), VehicleState{});
        const double spacing = config_.ring_length / static_cast<double>(n);

        std::vector<bool> human_slot(static_cast<std::size_t>(n), false);
        if (config_.randomize_arrangement) {
            for (int slot : rng.sample_without_replacement(n, config_.n_human)) {
                human_slot[static_cast<std::size_t>(slot)] = true;
            }
        } else {
            for (int j = 0; j < config_.n_human; ++j) {
                const int slot = static_cast<int>((static_cast<long long>(j) * n) / std::max(1, config_.n_human));
                human_slot[static_cast<std::size_t>(slot)] = true;
            }
        }
        cav_vehicle_.clear();
        for (int i = 0; i < n; ++i) {
            VehicleState& v = vehicles_[static_cast<std::size_t>(i)];
            const double jitter = config_.init_jitter * spacing * rng.uniform(-1.0, 1.0);
            v.position = wrap(static_cast<double>(i) * spacing + jitter);
            v.speed = 0.0;
            v.kind = human_slot[static_cast<std::size_t>(i)] ? VehicleKind::Human : VehicleKind::Cav;
            if (v.kind == VehicleKind::Cav) cav_vehicle_.push_back(i);
        }
        if (static_cast<int>(cav_vehicle_.size()) != config_.n_cav) {
            throw std::logic_error("RingRoadEnv: CAV slot assignment failed");
        }
        // Ring order by initial position; index i leads i's follower.
        order_.resize(static_cast<std::size_t>(n));
        std::iota(order_.begin(), order_.end(), 0);
        std::sort(order_.begin(), order_.end(), [&](int a, int b) {
            return vehicles_[static_cast<std::size_t>(a)].position < vehicles_[static_cast<std::size_t>(b)].position;
        });
        rank_.resize(static_cast<std::size_t>(n));
        for (int r = 0; r < n; ++r) rank_[static_cast<std::size_t>(order_[static_cast<std::size_t>(r)])] = r;

        steps_ = 0;
        collided_ = detect_collision();
        clamped_actions_ = 0;
        last_accels_.assign(static_cast<std::size_t>(n), 0.0);
        if (collided_) throw std::logic_error("RingRoadEnv: initial placement collides");
    }

    StepResult step(std::span<const double> cav_actions) {
        if (static_cast<int>(cav_actions.size()) != config_.n_cav) {
            throw std::invalid_argument("RingRoadEnv: one action per CAV required");
        }
        const int n = config_.n_total();
        std::vector<double>& accel = last_accels_;

        for (int i = 0; i < n; ++i) {
            const VehicleState& v = vehicles_[static_cast<std::size_t>(i)];
            if (v.kind == VehicleKind::Human) {
                const int lead = leader_of(i);
                const double gap = bumper_gap(i, lead);
                const double brake_limit = std::max(config_.max_decel, config_.idm.emergency_decel);
                accel[static_cast<std::size_t>(i)] =
                    gap > 0.0 ? idm_acceleration(v, vehicles_[static_cast<std::size_t>(lead)], gap, config_.idm,
                                                 config_.max_accel, brake_limit)
                              : -brake_limit;
            }
        }
        for (int c = 0; c < config_.n_cav; ++c) {
            double a = cav_actions[static_cast<std::size_t>(c)];
            if (a < -1.0 || a > 1.0) {
                a = std::clamp(a, -1.0, 1.0);
                ++clamped_actions_;
            }
            accel[static_cast<std::size_t>(cav_vehicle_[static_cast<std::size_t>(c)])] =
                a >= 0.0 ? a * config_.max_accel : a * config_.max_decel;
        }

        for (int i = 0; i < n; ++i) {
            VehicleState& v = vehicles_[static_cast<std::size_t>(i)];
            v.speed = std::max(0.0, v.speed + accel[static_cast<std::size_t>(i)] * config_.dt);
            v.position = wrap(v.position + v.speed * config_.dt);
        }

        ++steps_;
        StepResult result;
        result.collision = detect_collision();
        collided_ = collided_ || result.collision;
        result.done = result.collision || steps_ >= horizon_;
        result.reward = result.collision ? 0.0 : reward_now();
        return result;
    }

    // Reward of the current speed profile against the constant desired
    // speed vector.
    double reward_now() const {
        std::vector<double> v_ac(vehicles_.size());
        std::vector<double> v_de(vehicles_.size(), config_.v_desired);
        for (std::size_t i = 0; i < vehicles_.size(); ++i) v_ac[i] = vehicles_[i].speed;
        return global_reward(v_ac, v_de);
    }

    bool detect_collision() const {
        for (int i = 0; i < config_.n_total(); ++i) {
            if (bumper_gap(i, leader_of(i)) <= 0.0) return true;
        }
        return false;
    }

    // Partial observation for one CAV: [own pos/L, own v/v_de, leader gap/L,
    // leader v/v_de, follower gap/L, follower v/v_de].
    std::vector<double> observe(int cav_index) const {
        const int i = cav_vehicle_.at(static_cast<std::size_t>(cav_index));
        return observe_vehicle(i);
    }

    std::vector<double> observe_vehicle(int i) const {
        const int lead = leader_of(i);
        const int follow = follower_of(i);
        const VehicleState& ego = vehicles_[static_cast<std::size_t>(i)];
        const VehicleState& lv = vehicles_[static_cast<std::size_t>(lead)];
        const VehicleState& fv = vehicles_[static_cast<std::size_t>(follow)];
        const double l = config_.ring_length;
        return {ego.position / l,
                ego.speed / config_.v_desired,
                wrap(lv.position - ego.position) / l,
                lv.speed / config_.v_desired,
                wrap(ego.position - fv.position) / l,
                fv.speed / config_.v_desired};
    }

    static constexpr int observation_dim() { return 6; }

    int leader_of(int i) const {
        const int r = rank_[static_cast<std::size_t>(i)];
        return order_[static_cast<std::size_t>((r + 1) % config_.n_total())];
    }
    int follower_of(int i) const {
        const int r = rank_[static_cast<std::size_t>(i)];
        return order_[static_cast<std::size_t>((r + config_.n_total() - 1) % config_.n_total())];
    }

    // Bumper-to-bumper distance from i to the vehicle ahead.
    double bumper_gap(int i, int lead) const {
        const double d = wrap(vehicles_[static_cast<std::size_t>(lead)].position -
                              vehicles_[static_cast<std::size_t>(i)].position);
        return d - config_.vehicle_length;
    }

    double wrap(double x) const {
        const double l = config_.ring_length;
        const double m = std::fmod(x, l);
        return m < 0.0 ? m + l : m;
    }

    const RoadConfig& config() const { return config_; }
    const std::vector<VehicleState>& vehicles() const { return vehicles_; }
    const std::vector<int>& cav_vehicle_ids() const { return cav_vehicle_; }
    const std::vector<double>& last_accelerations() const { return last_accels_; }
    int steps() const { return steps_; }
    int horizon() const { return horizon_; }
    bool collided() const { return collided_; }
    long clamped_actions() const { return clamped_actions_; }

    // Ring order of vehicle ids; stable between steps while no collision
    // has occurred (single lane, no overtaking).
    const std::vector<int>& ring_order() const { return order_; }

  private:
    RoadConfig config_;
    int horizon_;
    std::vector<VehicleState> vehicles_;
    std::vector<int> cav_vehicle_;
    std::vector<int> order_;
    std::vector<int> rank_;
    std::vector<double> last_accels_;
    int steps_ = 0;
    bool collided_ = false;
    long clamped_actions_ = 0;
};

}  // namespace rsm

#endif  // RSM_RING_ROAD_HPP
