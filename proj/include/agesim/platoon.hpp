#ifndef AGESIM_PLATOON_HPP
#define AGESIM_PLATOON_HPP

#include <optional>
#include <string>
#include <vector>

#include "agesim/age.hpp"
#include "agesim/channel.hpp"
#include "agesim/mode4.hpp"
#include "agesim/rng.hpp"
#include "agesim/smart.hpp"

namespace agesim {

struct VehicleState {
    double pos_m = 0.0;  // 1-D along the lane
    double speed_mps = 0.0;
    double accel_mps2 = 0.0;
    int lane = 0;
};

// Lead speed profile: cruise, brake (clamped at standstill), re-accelerate
// back to cruise speed, then hold.
struct LeadProfile {
    double cruise_speed_mps = 22.0;
    double brake_accel_mps2 = -2.94;
    double accel_mps2 = 2.0;
    long cruise_ms = 2000;
    long brake_ms = 7500;
};

double lead_profile_accel(long t_ms, const LeadProfile& p, double current_speed_mps);

enum class CommsMode { Mode4, Ideal, None };

struct UpdatePolicyCfg {
    enum class Kind { FixedRate, SmartLite };
    Kind kind = Kind::FixedRate;
    int rri_ms = 20;        // FixedRate status update period
    int repetitions = 1;    // k copies of each status payload
    bool online_learning = true;  // SmartLite: TD updates during the run
};

struct PlatoonConfig {
    int n_lanes = 8;
    int n_platoons = 6;
    int platoon_size = 8;
    double target_gap_m = 5.0;
    long sensing_interval_ms = 60;
    long actuation_delay_ms = 10;
    double a_max_mps2 = 3.0;
    double k_p = 0.5;
    double k_v = 1.2;
    double vehicle_length_m = 4.0;
    double lane_width_m = 4.0;
    LeadProfile profile;
    long duration_ms = 23000;
    int dynamics_tick_ms = 10;

    CommsMode comms = CommsMode::Mode4;
    double ideal_delay_ms = 0.0;  // CommsMode::Ideal delivery delay
    UpdatePolicyCfg policy;
    int control_rri_ms = 20;  // lead control broadcasts, k = 1, all arms

    SpsConfig sps;
    ResourceGrid grid;
    ChannelModel channel;

    AgePenalty penalty = AgePenalty::linear();
    long epoch_ms = 1000;  // reward broadcast period
    double smart_eps_start = 0.2;
    double smart_eps_end = 0.02;
};

struct PlatoonRunReport {
    bool crashed = false;
    long crash_time_ms = -1;
    double min_gap_m = 0.0;
    long links_attempted = 0;
    long links_delivered = 0;
    long attempts = 0;
    long collisions = 0;
    double success_rate = 0.0;        // delivered links / attempted links
    double mean_status_age_ms = 0.0;  // follower status age at the lead
    double fleet_avg_penalty = 0.0;
    double max_abs_gap_error_m = 0.0;
    double mean_access_delay_ms = 0.0;
    double mean_rri_ms = 0.0;  // SmartLite diagnostics
};

// Per-follower command with its capture context (the lead's view age).
struct ControllerView {
    // latest received status per follower, with capture timestamps
    struct Entry {
        double capture_ms = 0.0;
        double speed_mps = 0.0;
        double gap_front_m = 0.0;
        double accel_mps2 = 0.0;
    };
    std::vector<Entry> followers;
};

// Commanded accel for each follower from the (possibly stale) view:
// u_i = a_lead + k_p*(gap_i - target) + k_v*(v_{i-1} - v_i), clamped.
std::vector<double> gap_control(const ControllerView& view, double lead_accel,
                                double lead_speed, const PlatoonConfig& cfg);

bool detect_crash(const std::vector<VehicleState>& platoon_vehicles, double length_m);

PlatoonRunReport run_platoon(const PlatoonConfig& cfg, uint64_t seed,
                             const RatePolicy* pretrained = nullptr,
                             std::vector<MacEvent>* mac_trace = nullptr,
                             std::vector<AgeProcess>* age_trace = nullptr);

struct MsdResult {
    double min_safe_distance_m = 0.0;
    bool crash_at_max_gap = false;  // crash even at the configured maximum
    double mean_success_rate = 0.0;  // at the found gap
    double mean_rri_ms = 0.0;
    std::vector<std::pair<double, bool>> search_trace;  // (gap, crashed)
};

// Binary search (0.1 m resolution) for the smallest target gap with zero
// crashes across all seeds. When measure_operating_point is false, the extra
// runs that fill mean_success_rate / mean_rri_ms at the found gap are skipped.
MsdResult min_safe_distance(PlatoonConfig cfg, const std::vector<uint64_t>& seeds,
                            double lo_m = 0.2, double hi_m = 12.8,
                            double resolution_m = 0.1,
                            const RatePolicy* pretrained = nullptr,
                            bool measure_operating_point = true);

}  // namespace agesim

#endif
