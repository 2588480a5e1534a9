#ifndef AGESIM_INTERSECTION_HPP
#define AGESIM_INTERSECTION_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "agesim/channel.hpp"
#include "agesim/mode4.hpp"
#include "agesim/platoon.hpp"  // UpdatePolicyCfg, CommsMode
#include "agesim/smart.hpp"

namespace agesim {

// Space-time occupancy of the 40 m x 40 m box: 4 m cells, 100 ms slots.
struct IntersectionGrid {
    double extent_m = 40.0;
    double cell_m = 4.0;
    long quantum_ms = 100;

    int cells_per_side() const { return static_cast<int>(extent_m / cell_m); }
    int n_cells() const { return cells_per_side() * cells_per_side(); }
    long slot_of(double t_ms) const { return static_cast<long>(t_ms) / quantum_ms; }
};

// approaches: 0=N, 1=S, 2=E, 3=W (direction of travel is toward the box)
struct Trajectory {
    std::vector<int> cells;  // path-ordered cell indices
    long entry_slot = 0;
    long slots_per_cell_pad = 0;
};

struct Reservation {
    int vehicle_id = -1;
    enum class Status { Confirmed, Rejected } status = Status::Rejected;
    long entry_ms = 0;
    std::vector<std::pair<int, std::pair<long, long>>> cells;  // (cell, [slot_lo, slot_hi])
};

struct LightCycle {
    long green_ms = 30000;
    long all_red_ms = 3000;
    long cycle_ms() const { return 2 * (green_ms + all_red_ms); }
    // axis 0 = N/S, axis 1 = E/W
    bool is_green(int axis, long t_ms) const {
        const long u = t_ms % cycle_ms();
        if (axis == 0) return u < green_ms;
        return u >= green_ms + all_red_ms && u < 2 * green_ms + all_red_ms;
    }
};

struct IntersectionConfig {
    IntersectionGrid grid_map;
    LightCycle lights;
    double hv_fraction = 0.10;
    int total_vehicles = 520;
    double arrival_rate_per_approach_hz = 0.15;  // Poisson
    double approach_m = 200.0;
    double exit_margin_m = 5.0;
    double v_max_mps = 10.0;
    double min_gap_m = 6.0;
    double vehicle_length_m = 4.0;
    long reject_backoff_ms = 200;
    long backoff_jitter_ms = 100;
    long response_timeout_ms = 600;
    double request_window_m = 80.0;  // request when this close to the stop line
    double cell_pad_ms = 100.0;      // reservation padding per cell interval
    long liveness_deadline_ms = 400000;  // per vehicle, after spawn
    int dynamics_tick_ms = 10;
    long max_duration_ms = 4000000;

    enum class Control { TrafficLights, Reservation } control = Control::Reservation;
    CommsMode comms = CommsMode::Mode4;
    UpdatePolicyCfg policy;      // AV status/request updates
    int hv_status_rri_ms = 100;  // HVs always report at this fixed period
    int response_rri_ms = 20;    // RSU confirm/reject batches
    long epoch_ms = 1000;        // SMART reward broadcast period

    SpsConfig sps;
    ResourceGrid grid;
    ChannelModel channel;
    double smart_eps_start = 0.2;
    double smart_eps_end = 0.02;
};

struct IntersectionRunReport {
    int spawned = 0;
    int exited = 0;
    bool all_exited = false;
    bool deadline_missed = false;
    bool cell_conflict = false;  // ground-truth safety violation
    double mean_trip_ms = 0.0;
    std::vector<double> trip_ms;  // per vehicle, spawn order
    long requests = 0;
    long confirms = 0;
    long rejects = 0;
    double success_rate = 0.0;  // delivered links / attempted links
    double mean_rri_ms = 0.0;
    long duration_ms = 0;
};

// Straight-through path cells for one approach (right-hand traffic lanes).
std::vector<int> approach_path_cells(const IntersectionGrid& grid, int approach);

// FCFS allocator used by the RSU; exposed for direct testing.
class ReservationBook {
public:
    explicit ReservationBook(const IntersectionGrid& g) : grid_(g) {}

    // Confirm iff every requested (cell, slot) is free and clear of the HV
    // blocks; on confirm the cells are marked. A vehicle holds at most one
    // reservation: any earlier allocation by the same id is released first.
    Reservation request(int vehicle_id, const std::vector<int>& path_cells, long entry_ms,
                        double cell_travel_ms, double cell_dwell_ms, double pad_ms);

    void release(int vehicle_id);

    void block_hv_window(const std::vector<int>& cells, long from_ms, long until_ms);
    void clear_hv_blocks() { hv_blocks_.clear(); }
    bool is_free(int cell, long slot) const;

    // Drop allocations for slots that ended before now_ms (memory bound only;
    // requests are always for future entry times).
    void prune_before(long now_ms);

private:
    IntersectionGrid grid_;
    std::unordered_map<int64_t, int> occupied_;  // (cell, slot) -> vehicle
    std::vector<std::pair<int, std::pair<long, long>>> hv_blocks_;  // (cell, [lo, hi] ms)
};

IntersectionRunReport run_intersection(const IntersectionConfig& cfg, uint64_t seed,
                                       const RatePolicy* pretrained = nullptr);

// (mean trip under reservation control) / (mean under traffic lights),
// paired by seed.
double normalized_trip_time(const IntersectionRunReport& controlled,
                            const IntersectionRunReport& baseline);

}  // namespace agesim

#endif
