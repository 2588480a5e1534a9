#include "agesim/intersection.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>

namespace agesim {

std::vector<int> approach_path_cells(const IntersectionGrid& grid, int approach) {
    const int n = grid.cells_per_side();
    std::vector<int> cells;
    cells.reserve(static_cast<size_t>(n));
    // right-hand traffic lanes: southbound col 3, northbound col 6,
    // westbound row 3, eastbound row 6 (for the 10-cell default)
    const int near = 3 * n / 10;
    const int far = 6 * n / 10;
    switch (approach) {
        case 0:  // from N, heading S
            for (int r = n - 1; r >= 0; --r) cells.push_back(r * n + near);
            break;
        case 1:  // from S, heading N
            for (int r = 0; r < n; ++r) cells.push_back(r * n + far);
            break;
        case 2:  // from E, heading W
            for (int c = n - 1; c >= 0; --c) cells.push_back(near * n + c);
            break;
        case 3:  // from W, heading E
            for (int c = 0; c < n; ++c) cells.push_back(far * n + c);
            break;
        default:
            throw std::invalid_argument("approach must be 0..3");
    }
    return cells;
}

namespace {
constexpr int64_t kSlotStride = 1LL << 40;
}

Reservation ReservationBook::request(int vehicle_id, const std::vector<int>& path_cells,
                                     long entry_ms, double cell_travel_ms,
                                     double cell_dwell_ms, double pad_ms) {
    const int n = grid_.cells_per_side();
    for (size_t i = 1; i < path_cells.size(); ++i) {
        const int dr = std::abs(path_cells[i - 1] / n - path_cells[i] / n);
        const int dc = std::abs(path_cells[i - 1] % n - path_cells[i] % n);
        if (dr + dc != 1) throw std::invalid_argument("trajectory cells are not path-contiguous");
    }
    release(vehicle_id);  // a re-request supersedes any earlier allocation
    Reservation res;
    res.vehicle_id = vehicle_id;
    res.entry_ms = entry_ms;
    std::vector<std::pair<int, std::pair<long, long>>> wanted;
    wanted.reserve(path_cells.size());
    for (size_t i = 0; i < path_cells.size(); ++i) {
        const double lo_ms =
            static_cast<double>(entry_ms) + static_cast<double>(i) * cell_travel_ms - pad_ms;
        const double hi_ms = static_cast<double>(entry_ms) +
                             static_cast<double>(i) * cell_travel_ms + cell_dwell_ms + pad_ms;
        wanted.emplace_back(path_cells[i], std::make_pair(grid_.slot_of(std::max(0.0, lo_ms)),
                                                          grid_.slot_of(hi_ms)));
    }
    for (const auto& [cell, range] : wanted)
        for (long s = range.first; s <= range.second; ++s)
            if (!is_free(cell, s)) {
                res.status = Reservation::Status::Rejected;
                return res;
            }
    for (const auto& [cell, range] : wanted)
        for (long s = range.first; s <= range.second; ++s)
            occupied_[static_cast<int64_t>(cell) * kSlotStride + s] = vehicle_id;
    res.cells = std::move(wanted);
    res.status = Reservation::Status::Confirmed;
    return res;
}

void ReservationBook::release(int vehicle_id) {
    for (auto it = occupied_.begin(); it != occupied_.end();)
        it = it->second == vehicle_id ? occupied_.erase(it) : std::next(it);
}

void ReservationBook::prune_before(long now_ms) {
    const long slot = now_ms / grid_.quantum_ms;
    for (auto it = occupied_.begin(); it != occupied_.end();)
        it = it->first % kSlotStride < slot ? occupied_.erase(it) : std::next(it);
}

void ReservationBook::block_hv_window(const std::vector<int>& cells, long from_ms, long until_ms) {
    for (int c : cells) hv_blocks_.emplace_back(c, std::make_pair(from_ms, until_ms));
}

bool ReservationBook::is_free(int cell, long slot) const {
    if (occupied_.count(static_cast<int64_t>(cell) * kSlotStride + slot)) return false;
    const long lo_ms = slot * grid_.quantum_ms;
    const long hi_ms = lo_ms + grid_.quantum_ms;
    for (const auto& [c, w] : hv_blocks_)
        if (c == cell && lo_ms < w.second && w.first < hi_ms) return false;
    return true;
}

double normalized_trip_time(const IntersectionRunReport& controlled,
                            const IntersectionRunReport& baseline) {
    if (baseline.mean_trip_ms <= 0.0)
        throw std::invalid_argument("baseline has no completed trips");
    return controlled.mean_trip_ms / baseline.mean_trip_ms;
}

namespace {

struct IVehicle {
    int id = 0;
    int approach = 0;
    bool hv = false;
    double sched_ms = 0.0;
    bool spawned = false;
    bool exited = false;
    double s = 0.0;  // path coordinate of the front bumper, 0 at spawn
    double v = 0.0;

    enum class RState { None, Requested, Confirmed };
    RState rstate = RState::None;
    long entry_ms = 0;
    long request_sent_ms = -1;
    long next_request_ms = 0;
};

struct RequestMsg {
    int vehicle;
    long sent_ms;
    long entry_ms;
};

struct ResponseMsg {
    int vehicle;
    long request_ms;
    bool confirmed;
    long entry_ms;
    long created_ms;
};

struct RewardMsg {
    int vehicle;
    double reward;
    double age_ms;
};

constexpr int kRsuResponseRadio = 10000;
constexpr int kRsuRewardRadio = 10001;
// payload tagging: which message store a payload index points into
constexpr int kRequestTag = 1'000'000;
constexpr int kResponseTag = 2'000'000;
constexpr int kRewardTag = 3'000'000;

void world_pos(const IntersectionConfig& cfg, int approach, double s, double& x, double& y) {
    const double L = cfg.approach_m;
    const double E = cfg.grid_map.extent_m;
    switch (approach) {
        case 0: x = 14.0; y = E + L - s; break;   // from N heading S
        case 1: x = 26.0; y = s - L; break;       // from S heading N
        case 2: x = E + L - s; y = 14.0; break;   // from E heading W
        default: x = s - L; y = 26.0; break;      // from W heading E
    }
}

long next_green_start(const LightCycle& lc, int axis, long t) {
    if (lc.is_green(axis, t)) return t;
    const long cycle = lc.cycle_ms();
    const long start = axis == 0 ? 0 : lc.green_ms + lc.all_red_ms;
    const long base = (t / cycle) * cycle + start;
    return base >= t ? base : base + cycle;
}

}  // namespace

IntersectionRunReport run_intersection(const IntersectionConfig& cfg, uint64_t seed,
                                       const RatePolicy* pretrained) {
    const bool controlled = cfg.control == IntersectionConfig::Control::Reservation;
    const bool mode4 = controlled && cfg.comms == CommsMode::Mode4;
    const bool ideal = controlled && cfg.comms == CommsMode::Ideal;
    const bool smart = cfg.policy.kind == UpdatePolicyCfg::Kind::SmartLite;
    if (controlled && cfg.comms == CommsMode::None)
        throw std::invalid_argument("reservation control needs a communication path");
    if (mode4 && smart && !pretrained)
        throw std::invalid_argument("SmartLite policy requires a pretrained table");

    const double line = cfg.approach_m;
    const double box_end = cfg.approach_m + cfg.grid_map.extent_m;
    const double path_end = box_end + cfg.exit_margin_m;
    const double cell_travel_ms = cfg.grid_map.cell_m / cfg.v_max_mps * 1000.0;
    const double cell_dwell_ms =
        (cfg.grid_map.cell_m + cfg.vehicle_length_m) / cfg.v_max_mps * 1000.0;
    const double dt_s = cfg.dynamics_tick_ms / 1000.0;
    const int n_side = cfg.grid_map.cells_per_side();

    // --- Poisson arrivals per approach, vehicles id'd in spawn-schedule order
    struct Arrival { double t; int approach; };
    std::vector<Arrival> arrivals;
    const int per_approach = cfg.total_vehicles / 4;
    for (int a = 0; a < 4; ++a) {
        Rng arr(seed, 10 + static_cast<uint64_t>(a));
        double at = 0.0;
        const int extra = a < cfg.total_vehicles % 4 ? 1 : 0;
        for (int i = 0; i < per_approach + extra; ++i) {
            at += -std::log(1.0 - arr.uniform()) / cfg.arrival_rate_per_approach_hz * 1000.0;
            arrivals.push_back({at, a});
        }
    }
    std::stable_sort(arrivals.begin(), arrivals.end(),
                     [](const Arrival& a, const Arrival& b) { return a.t < b.t; });

    std::vector<IVehicle> veh(arrivals.size());
    {
        Rng mix_rng(seed, 20);
        for (size_t i = 0; i < arrivals.size(); ++i) {
            veh[i].id = static_cast<int>(i);
            veh[i].approach = arrivals[i].approach;
            veh[i].sched_ms = arrivals[i].t;
            veh[i].hv = mix_rng.bernoulli(cfg.hv_fraction);
        }
    }

    std::vector<std::deque<int>> active(4);  // per approach, front = furthest along
    std::vector<std::deque<int>> to_spawn(4);
    for (const auto& v : veh) to_spawn[static_cast<size_t>(v.approach)].push_back(v.id);

    std::vector<std::vector<int>> path_cells;
    for (int a = 0; a < 4; ++a) path_cells.push_back(approach_path_cells(cfg.grid_map, a));
    auto axis_of = [](int approach) { return approach <= 1 ? 0 : 1; };

    // every perpendicular lane pair shares exactly one cell; remember its
    // index along each of the two paths
    std::pair<int, int> shared_cell_idx[4][4] = {};
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            if (axis_of(a) == axis_of(b)) continue;
            for (size_t i = 0; i < path_cells[static_cast<size_t>(a)].size(); ++i)
                for (size_t j = 0; j < path_cells[static_cast<size_t>(b)].size(); ++j)
                    if (path_cells[static_cast<size_t>(a)][i] ==
                        path_cells[static_cast<size_t>(b)][j])
                        shared_cell_idx[a][b] = {static_cast<int>(i), static_cast<int>(j)};
        }

    ReservationBook book(cfg.grid_map);

    std::map<int, long> rsu_entry;  // entry currently booked per vehicle

    struct HvTrack {
        double s;
        double v;
        long last_ms;
        int approach;
        long pred_entry = 0;  // filled by refresh_hv_blocks
        double pred_s = 0.0;
    };
    std::map<int, HvTrack> hv_tracks;        // RSU belief about human-driven vehicles
    std::map<int, double> rsu_last_capture;  // newest delivered AV status time

    // --- radios --------------------------------------------------------------
    BusyLog busy_log;
    std::map<int, SpsRadio> radios;  // ordered: deterministic subframe iteration
    std::map<int, Rng> radio_rng;
    std::map<int, Rng> veh_rng;
    std::map<int, RatePolicy> learners;
    std::map<int, Situation> last_situation;
    std::map<int, int> last_action;
    const double busy_rssi = cfg.channel.tx_power_dbm - pathloss_db(100.0, cfg.channel);

    std::vector<RequestMsg> request_store;
    std::vector<std::vector<ResponseMsg>> response_store;
    std::vector<std::vector<RewardMsg>> reward_store;
    std::deque<ResponseMsg> response_ring;  // unexpired responses, re-sent in batches

    if (mode4) {
        radios.emplace(kRsuResponseRadio,
                       SpsRadio(kRsuResponseRadio, cfg.sps, cfg.grid, cfg.response_rri_ms));
        radio_rng.emplace(kRsuResponseRadio, Rng(seed, 5001));
        if (smart) {
            radios.emplace(kRsuRewardRadio, SpsRadio(kRsuRewardRadio, cfg.sps, cfg.grid,
                                                     static_cast<int>(cfg.epoch_ms)));
            radio_rng.emplace(kRsuRewardRadio, Rng(seed, 5002));
        }
        for (auto& [id, r] : radios) r.use_shared_log(&busy_log);
    }

    const int status_reps =
        cfg.policy.kind == UpdatePolicyCfg::Kind::FixedRate ? cfg.policy.repetitions : 1;

    auto rng_of = [&](int vid) -> Rng& {
        auto it = veh_rng.find(vid);
        if (it == veh_rng.end())
            it = veh_rng.emplace(vid, Rng(seed, 7000 + static_cast<uint64_t>(vid))).first;
        return it->second;
    };

    auto spawn_radio = [&](const IVehicle& v) {
        if (!mode4) return;
        int rri = cfg.hv_status_rri_ms;
        if (!v.hv) {
            if (smart) {
                RatePolicy pol = *pretrained;
                pol.epsilon = cfg.smart_eps_start;
                Situation s0{0, 0, 0};
                int action = 0;
                rri = pol.act(s0, rng_of(v.id), &action);
                learners.emplace(v.id, std::move(pol));
                last_situation[v.id] = s0;
                last_action[v.id] = action;
            } else {
                rri = cfg.policy.rri_ms;
            }
        }
        radios.emplace(v.id, SpsRadio(v.id, cfg.sps, cfg.grid, rri));
        radios.at(v.id).use_shared_log(&busy_log);
        radio_rng.emplace(v.id, Rng(seed, 6000 + static_cast<uint64_t>(v.id)));
    };

    // predicted space-time windows of the tracked human-driven vehicles,
    // rebuilt from the freshest beliefs each time a request is adjudicated
    auto refresh_hv_blocks = [&](long now) {
        if (ideal) {
            hv_tracks.clear();
            for (int a = 0; a < 4; ++a)
                for (int vid : active[static_cast<size_t>(a)]) {
                    const auto& v = veh[static_cast<size_t>(vid)];
                    if (v.hv) hv_tracks[vid] = {v.s, v.v, now, v.approach};
                }
        }
        book.clear_hv_blocks();
        for (auto it = hv_tracks.begin(); it != hv_tracks.end();) {
            const auto& h = it->second;
            const double s_now =
                std::min(path_end, h.s + h.v * static_cast<double>(now - h.last_ms) / 1000.0);
            if (s_now >= box_end + cfg.vehicle_length_m || now - h.last_ms > 5000) {
                it = hv_tracks.erase(it);
                continue;
            }
            long entry_pred;
            if (s_now >= line) {
                // already in the box: back out when its front crossed the line
                entry_pred =
                    now - static_cast<long>((s_now - line) / cfg.v_max_mps * 1000.0);
            } else {
                int rank = 0;
                for (const auto& [oid, oh] : hv_tracks)
                    if (oid != it->first && oh.approach == h.approach && oh.s > h.s && oh.s < line)
                        rank += 1;
                const long eta_kin =
                    now + static_cast<long>((line - s_now) / cfg.v_max_mps * 1000.0);
                const long ngs = next_green_start(cfg.lights, axis_of(h.approach), now);
                entry_pred = std::max(eta_kin, ngs + rank * 2000L);
            }
            it->second.pred_entry = entry_pred;
            it->second.pred_s = s_now;
            // per-cell timed windows, like a reservation but with a wide
            // uncertainty margin, so traffic ahead of the prediction is not
            // locked out of the whole corridor
            const auto& cells = path_cells[static_cast<size_t>(h.approach)];
            for (size_t i = 0; i < cells.size(); ++i) {
                const long arr = entry_pred + static_cast<long>(i * cell_travel_ms);
                const long until = arr + static_cast<long>(cell_dwell_ms) + 1500;
                if (until <= now) continue;  // already cleared
                book.block_hv_window({cells[i]}, arr - 1500, until);
            }
            ++it;
        }
    };

    IntersectionRunReport rep;
    rep.trip_ms.assign(veh.size(), -1.0);

    // FCFS with deferral: the earliest feasible entry at or after the asked
    // one is granted, so a vehicle stuck behind slower traffic is scheduled
    // later instead of being turned away repeatedly.
    constexpr long kMaxDeferMs = 120000;
    auto process_request = [&](const RequestMsg& rq, long now) {
        rep.requests += 1;
        const auto& v = veh[static_cast<size_t>(rq.vehicle)];
        refresh_hv_blocks(now);
        // lane-consistency floors: nobody can enter before the traffic ahead
        // of them clears the line
        long floor_entry = 0;
        // a requester queued behind a human-driven vehicle cannot enter
        // before that vehicle is predicted to clear the line
        for (const auto& [hid, h] : hv_tracks)
            if (h.approach == v.approach && h.pred_s < line && h.pred_s > v.s)
                floor_entry = std::max(floor_entry, h.pred_entry + 1500);
        // ... nor before the booking of the vehicle directly ahead, so a
        // queue holds a ladder of feasible entries and discharges pipelined
        {
            const auto& lane = active[static_cast<size_t>(v.approach)];
            for (size_t i = 1; i < lane.size(); ++i)
                if (lane[i] == rq.vehicle) {
                    const auto& o = veh[static_cast<size_t>(lane[i - 1])];
                    if (!o.exited && o.s <= line)
                        if (auto ahead = rsu_entry.find(o.id); ahead != rsu_entry.end())
                            floor_entry = std::max(floor_entry, ahead->second + 1200);
                    break;
                }
        }
        // sticky adjudication: if this vehicle's existing booking is still
        // usable and consistent with the floors, re-confirm it — a retry
        // after a lost response must not keep pushing the booking later
        if (auto held = rsu_entry.find(rq.vehicle);
            held != rsu_entry.end() && held->second + 400 >= now &&
            held->second >= floor_entry - 200) {
            rep.confirms += 1;
            return ResponseMsg{rq.vehicle, rq.sent_ms, true, held->second, now};
        }
        Reservation res;
        long entry = std::max({rq.entry_ms, floor_entry,
                               (now / cfg.grid_map.quantum_ms + 1) * cfg.grid_map.quantum_ms});
        for (; entry <= rq.entry_ms + kMaxDeferMs; entry += cfg.grid_map.quantum_ms) {
            res = book.request(rq.vehicle, path_cells[static_cast<size_t>(v.approach)], entry,
                               cell_travel_ms, cell_dwell_ms, cfg.cell_pad_ms);
            if (res.status == Reservation::Status::Confirmed) break;
        }
        if (res.status == Reservation::Status::Confirmed) {
            rep.confirms += 1;
            rsu_entry[rq.vehicle] = entry;
        } else
            rep.rejects += 1;
        return ResponseMsg{rq.vehicle, rq.sent_ms, res.status == Reservation::Status::Confirmed,
                           entry, now};
    };

    auto deliver_response = [&](const ResponseMsg& r, long now) {
        auto& v = veh[static_cast<size_t>(r.vehicle)];
        if (v.exited || v.rstate != IVehicle::RState::Requested) return;
        if (v.request_sent_ms != r.request_ms) return;  // stale response
        if (r.confirmed) {
            v.rstate = IVehicle::RState::Confirmed;
            v.entry_ms = r.entry_ms;
        } else {
            v.rstate = IVehicle::RState::None;
            v.next_request_ms =
                now + cfg.reject_backoff_ms +
                rng_of(v.id).uniform_int(0, static_cast<int>(cfg.backoff_jitter_ms));
        }
    };

    auto epsilon_at = [&](long now) {
        const double frac = std::min(1.0, static_cast<double>(now) / 600000.0);
        return cfg.smart_eps_start + (cfg.smart_eps_end - cfg.smart_eps_start) * frac;
    };

    auto smart_choose = [&](int vid, long now, double reward, double age_ms) {
        auto it = learners.find(vid);
        if (it == learners.end()) return;
        auto& pol = it->second;
        auto rit = radios.find(vid);
        if (rit == radios.end()) return;
        const double cbr = rit->second.channel_busy_ratio(now);
        const Situation s_now{pol.grid().age_bin(age_ms), pol.grid().collision_bin(cbr),
                              last_action[vid]};
        if (cfg.policy.online_learning)
            pol.online_update(last_situation[vid], last_action[vid], reward, s_now);
        pol.epsilon = epsilon_at(now);
        int action = 0;
        const int rri = pol.act(s_now, rng_of(vid), &action);
        last_situation[vid] = s_now;
        last_action[vid] = action;
        rit->second.set_rri(rri);
    };

    // ask for the kinematic ETA; the adjudicator defers as far as needed
    auto request_eta = [&](const IVehicle& v, long now) {
        const long kin = static_cast<long>((line - v.s) / cfg.v_max_mps * 1000.0);
        long entry = now + kin + 200;
        const long q = cfg.grid_map.quantum_ms;
        entry = (entry + q - 1) / q * q;
        return entry;
    };

    auto issue_request = [&](IVehicle& v, long now) {
        const long entry = request_eta(v, now);
        v.rstate = IVehicle::RState::Requested;
        v.request_sent_ms = now;
        if (ideal) {
            deliver_response(process_request({v.id, now, entry}, now), now);
        } else {
            request_store.push_back({v.id, now, entry});
            radios.at(v.id).enqueue_sample(
                static_cast<double>(now), 2,
                kRequestTag + static_cast<int>(request_store.size()) - 1);
        }
    };

    // ground-truth cell occupancy: flags any two vehicles in one cell at once
    std::vector<int> cell_owner(static_cast<size_t>(cfg.grid_map.n_cells()));
    auto safety_scan = [&]() {
        std::fill(cell_owner.begin(), cell_owner.end(), -1);
        for (int a = 0; a < 4; ++a)
            for (int vid : active[static_cast<size_t>(a)]) {
                const auto& v = veh[static_cast<size_t>(vid)];
                const double u_front = v.s - line;
                const double u_rear = u_front - cfg.vehicle_length_m;
                if (u_front <= 0.0 || u_rear >= cfg.grid_map.extent_m) continue;
                const int lo =
                    std::max(0, static_cast<int>(std::floor(u_rear / cfg.grid_map.cell_m)));
                const int hi = std::min(
                    n_side - 1,
                    static_cast<int>(std::floor((u_front - 1e-9) / cfg.grid_map.cell_m)));
                for (int i = lo; i <= hi; ++i) {
                    const int cell = path_cells[static_cast<size_t>(a)][static_cast<size_t>(i)];
                    auto& owner = cell_owner[static_cast<size_t>(cell)];
                    if (owner >= 0 && owner != vid) rep.cell_conflict = true;
                    owner = vid;
                }
            }
    };

    std::vector<TransmissionAttempt> attempts;
    long links_attempted = 0;
    long links_delivered = 0;
    double rri_sum = 0.0;
    long rri_samples = 0;
    size_t total_exited = 0;
    long t = 0;

    for (; t < cfg.max_duration_ms && total_exited < veh.size(); ++t) {
        // --- network phases, 1 ms cadence -----------------------------------
        if (mode4) {
            // status enqueues (requests are enqueued where they are issued)
            for (int a = 0; a < 4; ++a)
                for (int vid : active[static_cast<size_t>(a)]) {
                    auto& v = veh[static_cast<size_t>(vid)];
                    auto rit = radios.find(vid);
                    if (rit == radios.end()) continue;
                    if (!v.hv && v.rstate == IVehicle::RState::Requested) continue;
                    if ((t + vid * 7) % rit->second.rri_ms() != 0) continue;
                    rit->second.enqueue_sample(static_cast<double>(t), v.hv ? 1 : status_reps, vid);
                }
            if (t > 0 && t % cfg.response_rri_ms == 0) {
                while (!response_ring.empty() &&
                       t - response_ring.front().created_ms > cfg.response_timeout_ms)
                    response_ring.pop_front();
                if (!response_ring.empty()) {
                    response_store.emplace_back(response_ring.begin(), response_ring.end());
                    radios.at(kRsuResponseRadio)
                        .enqueue_sample(static_cast<double>(t), 1,
                                        kResponseTag + static_cast<int>(response_store.size()) - 1);
                }
            }
            if (smart && t > 0 && t % cfg.epoch_ms == 0) {
                std::vector<RewardMsg> batch;
                for (const auto& [vid, pol] : learners) {
                    (void)pol;
                    const auto& v = veh[static_cast<size_t>(vid)];
                    if (v.exited) continue;
                    auto cap = rsu_last_capture.find(vid);
                    const double age = cap != rsu_last_capture.end()
                                           ? static_cast<double>(t) - cap->second
                                           : static_cast<double>(t) - v.sched_ms;
                    batch.push_back({vid, -age, age});
                }
                if (!batch.empty()) {
                    reward_store.push_back(std::move(batch));
                    radios.at(kRsuRewardRadio)
                        .enqueue_sample(static_cast<double>(t), 1,
                                        kRewardTag + static_cast<int>(reward_store.size()) - 1);
                }
            }

            // MAC + channel
            attempts.clear();
            for (auto& [rid, radio] : radios) {
                auto sent = radio.tick(t, radio_rng.at(rid));
                if (!sent) continue;
                TransmissionAttempt a;
                a.sender = rid;
                a.subframe = t;
                a.subchannel_start = radio.subchannel_start();
                a.payload = sent->payload;
                attempts.push_back(a);
                busy_log.push_back({t, a.subchannel_start, rid, busy_rssi});
            }
            if (!attempts.empty()) {
                const auto collided = collision_mask(attempts, cfg.grid);
                const bool rsu_busy =
                    std::any_of(attempts.begin(), attempts.end(), [](const TransmissionAttempt& a) {
                        return a.sender >= kRsuResponseRadio;
                    });
                auto dist_to_rsu = [&](int vid) {
                    double x, y;
                    world_pos(cfg, veh[static_cast<size_t>(vid)].approach,
                              veh[static_cast<size_t>(vid)].s, x, y);
                    return std::hypot(x - 20.0, y - 20.0);  // RSU at the box centre
                };
                auto veh_is_tx = [&](int vid) {
                    return std::any_of(attempts.begin(), attempts.end(),
                                       [&](const TransmissionAttempt& a) { return a.sender == vid; });
                };
                for (size_t i = 0; i < attempts.size(); ++i) {
                    const auto& at = attempts[i];
                    if (at.sender < kRsuResponseRadio) {
                        // vehicle -> RSU uplink
                        links_attempted += 1;
                        if (collided[i] || rsu_busy) continue;
                        if (!link_delivered(at.sender, kRsuResponseRadio, t, dist_to_rsu(at.sender),
                                            cfg.channel))
                            continue;
                        links_delivered += 1;
                        const auto& v = veh[static_cast<size_t>(at.sender)];
                        if (at.payload >= kRequestTag && at.payload < kResponseTag) {
                            const auto& rq =
                                request_store[static_cast<size_t>(at.payload - kRequestTag)];
                            if (!v.exited && v.rstate == IVehicle::RState::Requested &&
                                v.request_sent_ms == rq.sent_ms) {
                                const bool already = std::any_of(
                                    response_ring.begin(), response_ring.end(),
                                    [&](const ResponseMsg& r) {
                                        return r.vehicle == rq.vehicle && r.request_ms == rq.sent_ms;
                                    });
                                if (!already) response_ring.push_back(process_request(rq, t));
                            }
                        } else if (!v.exited) {
                            if (v.hv)
                                hv_tracks[v.id] = {v.s, v.v, t, v.approach};
                            else
                                rsu_last_capture[v.id] = static_cast<double>(t);
                        }
                    } else {
                        // RSU downlink broadcast: evaluate per addressed vehicle
                        if (collided[i]) continue;
                        auto handle = [&](int vid, auto&& fn) {
                            const auto& v = veh[static_cast<size_t>(vid)];
                            if (v.exited || !v.spawned || veh_is_tx(vid)) return;
                            if (link_delivered(at.sender, vid, t, dist_to_rsu(vid), cfg.channel))
                                fn();
                        };
                        if (at.payload >= kResponseTag && at.payload < kRewardTag) {
                            for (const auto& r :
                                 response_store[static_cast<size_t>(at.payload - kResponseTag)])
                                handle(r.vehicle, [&] { deliver_response(r, t); });
                        } else if (at.payload >= kRewardTag) {
                            for (const auto& r :
                                 reward_store[static_cast<size_t>(at.payload - kRewardTag)])
                                handle(r.vehicle,
                                       [&] { smart_choose(r.vehicle, t, r.reward, r.age_ms); });
                        }
                    }
                }
            }
            // trim the shared busy log so it does not grow with the run
            if (t % 4000 == 0 && !busy_log.empty()) {
                const long lo = t - cfg.sps.sensing_window_ms - 1;
                auto trim = std::lower_bound(
                    busy_log.begin(), busy_log.end(), lo,
                    [](const BusyEntry& e, long v) { return e.subframe < v; });
                busy_log.erase(busy_log.begin(), trim);
            }

            if (t % 100 == 0)
                for (int a = 0; a < 4; ++a)
                    for (int vid : active[static_cast<size_t>(a)])
                        if (!veh[static_cast<size_t>(vid)].hv && radios.count(vid)) {
                            rri_sum += radios.at(vid).rri_ms();
                            rri_samples += 1;
                        }
        }

        // --- vehicle logic + dynamics, 10 ms cadence -------------------------
        if (t % cfg.dynamics_tick_ms != 0) continue;

        // spawns (held back until the spawn point is clear)
        for (int a = 0; a < 4; ++a) {
            auto& q = to_spawn[static_cast<size_t>(a)];
            while (!q.empty() && veh[static_cast<size_t>(q.front())].sched_ms <= t) {
                if (!active[static_cast<size_t>(a)].empty()) {
                    const auto& last =
                        veh[static_cast<size_t>(active[static_cast<size_t>(a)].back())];
                    if (last.s < cfg.vehicle_length_m + cfg.min_gap_m) break;
                }
                auto& v = veh[static_cast<size_t>(q.front())];
                v.spawned = true;
                v.s = 0.0;
                v.v = cfg.v_max_mps;
                rep.spawned += 1;
                spawn_radio(v);
                active[static_cast<size_t>(a)].push_back(v.id);
                q.pop_front();
            }
        }

        // reservation-state housekeeping and request issuing
        if (controlled)
            for (int a = 0; a < 4; ++a)
                for (int vid : active[static_cast<size_t>(a)]) {
                    auto& v = veh[static_cast<size_t>(vid)];
                    if (v.hv || v.exited || v.s > line) continue;
                    if (v.rstate == IVehicle::RState::Requested &&
                        t - v.request_sent_ms > cfg.response_timeout_ms) {
                        v.rstate = IVehicle::RState::None;
                        v.next_request_ms =
                            t + cfg.reject_backoff_ms +
                            rng_of(vid).uniform_int(0, static_cast<int>(cfg.backoff_jitter_ms));
                    }
                    if (v.rstate == IVehicle::RState::Confirmed && t > v.entry_ms + 600) {
                        v.rstate = IVehicle::RState::None;  // missed the window, book again
                        v.next_request_ms = t;
                    }
                    if (v.rstate == IVehicle::RState::None && t >= v.next_request_ms &&
                        v.s >= line - cfg.request_window_m)
                        issue_request(v, t);
                }

        // on-board sensor safety net, every control arm: before crossing the
        // line, check whether any perpendicular vehicle already in the box
        // would occupy our one shared cell while we pass through it
        auto crossing_conflict = [&](const IVehicle& me) {
            for (int a = 0; a < 4; ++a) {
                if (axis_of(a) == axis_of(me.approach)) continue;
                const auto [im, io] = shared_cell_idx[static_cast<size_t>(me.approach)]
                                                     [static_cast<size_t>(a)];
                const double my_arr = im * cfg.grid_map.cell_m / cfg.v_max_mps;
                const double my_exit =
                    my_arr + (cfg.grid_map.cell_m + cfg.vehicle_length_m) / cfg.v_max_mps;
                const double cell_start = line + io * cfg.grid_map.cell_m;
                for (int vid : active[static_cast<size_t>(a)]) {
                    const auto& o = veh[static_cast<size_t>(vid)];
                    if (o.s - cfg.vehicle_length_m >= box_end) continue;
                    if (o.s <= line) {
                        // not yet in the box: only an HV about to enter on its
                        // green gets priority over an autonomous requester
                        if (me.hv || !o.hv || o.s < line - 15.0 ||
                            !cfg.lights.is_green(axis_of(a), t))
                            continue;
                    }
                    const double leave_d =
                        cell_start + cfg.grid_map.cell_m + cfg.vehicle_length_m - o.s;
                    if (leave_d <= 0.0) continue;  // already past the shared cell
                    const double o_arr =
                        std::max(0.0, cell_start - o.s) / cfg.v_max_mps;  // earliest
                    const double o_leave = leave_d / std::max(o.v, 0.1);  // at current speed
                    if (my_arr - 0.3 < o_leave && o_arr < my_exit + 0.3) return true;
                }
            }
            return false;
        };

        // instant-speed motion, front-to-back per approach
        for (int a = 0; a < 4; ++a) {
            double pred_s = 1e18;  // updated position of the vehicle ahead
            for (int vid : active[static_cast<size_t>(a)]) {
                auto& v = veh[static_cast<size_t>(vid)];
                double speed = cfg.v_max_mps;
                if (pred_s < 1e17) {
                    const double room = pred_s - cfg.vehicle_length_m - cfg.min_gap_m - v.s;
                    speed = std::min(speed, std::max(0.0, room) / dt_s);
                }
                if (v.s <= line) {
                    bool may_cross;
                    if (!controlled || v.hv) {
                        may_cross = cfg.lights.is_green(axis_of(a), t);
                    } else {
                        may_cross = v.rstate == IVehicle::RState::Confirmed &&
                                    t + cfg.dynamics_tick_ms >= v.entry_ms;
                        // pace a confirmed vehicle so it arrives on schedule
                        if (v.rstate == IVehicle::RState::Confirmed && v.entry_ms > t) {
                            const double horizon_s = static_cast<double>(v.entry_ms - t) / 1000.0;
                            speed = std::min(speed, (line - v.s) / horizon_s);
                        }
                    }
                    if (may_cross && v.s + speed * dt_s > line && crossing_conflict(v))
                        may_cross = false;
                    if (!may_cross) speed = std::min(speed, std::max(0.0, (line - v.s) / dt_s));
                }
                v.v = std::max(0.0, speed);
                v.s += v.v * dt_s;
                pred_s = v.s;
            }
            // exits (front of the queue only; no overtaking)
            while (!active[static_cast<size_t>(a)].empty()) {
                auto& front = veh[static_cast<size_t>(active[static_cast<size_t>(a)].front())];
                if (front.s < path_end) break;
                front.exited = true;
                rep.exited += 1;
                total_exited += 1;
                rep.trip_ms[static_cast<size_t>(front.id)] =
                    static_cast<double>(t) - front.sched_ms;
                radios.erase(front.id);
                radio_rng.erase(front.id);
                learners.erase(front.id);
                rsu_last_capture.erase(front.id);
                rsu_entry.erase(front.id);
                hv_tracks.erase(front.id);
                active[static_cast<size_t>(a)].pop_front();
            }
        }

        safety_scan();

        if (controlled && t % 1000 == 0) book.prune_before(t - 2000);

        // liveness: no spawned vehicle may be stuck past its deadline
        if (t % 1000 == 0)
            for (int a = 0; a < 4 && !rep.deadline_missed; ++a)
                for (int vid : active[static_cast<size_t>(a)])
                    if (t - veh[static_cast<size_t>(vid)].sched_ms > cfg.liveness_deadline_ms)
                        rep.deadline_missed = true;
        if (rep.deadline_missed) break;
    }

    rep.all_exited = total_exited == veh.size();
    rep.duration_ms = t;
    double trip_acc = 0.0;
    int trips = 0;
    for (double tr : rep.trip_ms)
        if (tr >= 0.0) {
            trip_acc += tr;
            trips += 1;
        }
    rep.mean_trip_ms = trips > 0 ? trip_acc / trips : 0.0;
    rep.success_rate = links_attempted > 0 ? static_cast<double>(links_delivered) /
                                                 static_cast<double>(links_attempted)
                                           : 0.0;
    rep.mean_rri_ms = rri_samples > 0 ? rri_sum / static_cast<double>(rri_samples)
                                      : static_cast<double>(cfg.policy.rri_ms);
    return rep;
}

}  // namespace agesim
