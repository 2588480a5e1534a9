#include "agesim/platoon.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace agesim {

double lead_profile_accel(long t_ms, const LeadProfile& p, double current_speed_mps) {
    if (t_ms < p.cruise_ms) return 0.0;
    if (t_ms < p.cruise_ms + p.brake_ms)
        return current_speed_mps > 0.0 ? p.brake_accel_mps2 : 0.0;
    return current_speed_mps < p.cruise_speed_mps ? p.accel_mps2 : 0.0;
}

std::vector<double> gap_control(const ControllerView& view, double lead_accel,
                                double lead_speed, const PlatoonConfig& cfg) {
    std::vector<double> u(view.followers.size());
    for (size_t i = 0; i < view.followers.size(); ++i) {
        const auto& f = view.followers[i];
        const double v_pred = i == 0 ? lead_speed : view.followers[i - 1].speed_mps;
        const double cmd = lead_accel + cfg.k_p * (f.gap_front_m - cfg.target_gap_m) +
                           cfg.k_v * (v_pred - f.speed_mps);
        u[i] = std::clamp(cmd, -cfg.a_max_mps2, cfg.a_max_mps2);
    }
    return u;
}

bool detect_crash(const std::vector<VehicleState>& platoon_vehicles, double length_m) {
    for (size_t i = 1; i < platoon_vehicles.size(); ++i) {
        const double gap = platoon_vehicles[i - 1].pos_m - platoon_vehicles[i].pos_m - length_m;
        if (gap <= 0.0) return true;
    }
    return false;
}

namespace {

struct StatusPayload {
    double capture_ms;
    double speed_mps;
    double gap_front_m;
    double accel_mps2;
};

struct PendingCmd {
    double u = 0.0;
    long effect_ms = -1;  // -1: nothing pending
};

struct IdealDelivery {
    long deliver_ms;
    int follower;  // platoon-local, or -1 for a control batch
    int platoon;
    StatusPayload status;
    std::vector<double> commands;
    double capture_ms;
};

constexpr int kRewardRadioBase = 100;

}  // namespace

PlatoonRunReport run_platoon(const PlatoonConfig& cfg, uint64_t seed,
                             const RatePolicy* pretrained,
                             std::vector<MacEvent>* mac_trace,
                             std::vector<AgeProcess>* age_trace) {
    const int np = cfg.n_platoons;
    const int sz = cfg.platoon_size;
    const int nveh = np * sz;
    const int nfol = sz - 1;
    const bool smart = cfg.policy.kind == UpdatePolicyCfg::Kind::SmartLite;
    if (smart && !pretrained)
        throw std::invalid_argument("SmartLite policy requires a pretrained table");

    PlatoonRunReport rep;

    // --- vehicles -----------------------------------------------------------
    std::vector<VehicleState> veh(static_cast<size_t>(nveh));
    const double spacing = cfg.target_gap_m + cfg.vehicle_length_m;
    for (int p = 0; p < np; ++p)
        for (int i = 0; i < sz; ++i) {
            auto& v = veh[static_cast<size_t>(p * sz + i)];
            v.lane = p;
            v.pos_m = -static_cast<double>(i) * spacing;
            v.speed_mps = cfg.profile.cruise_speed_mps;
        }
    auto lateral = [&](int a, int b) {
        return (veh[static_cast<size_t>(a)].lane - veh[static_cast<size_t>(b)].lane) *
               cfg.lane_width_m;
    };
    auto distance = [&](int a, int b) {
        const double dx = veh[static_cast<size_t>(a)].pos_m - veh[static_cast<size_t>(b)].pos_m;
        const double dy = lateral(a, b);
        return std::sqrt(dx * dx + dy * dy);
    };

    // --- controller views and age accounting --------------------------------
    std::vector<ControllerView> views(static_cast<size_t>(np));
    for (int p = 0; p < np; ++p) {
        views[static_cast<size_t>(p)].followers.resize(static_cast<size_t>(nfol));
        for (int i = 0; i < nfol; ++i) {
            auto& e = views[static_cast<size_t>(p)].followers[static_cast<size_t>(i)];
            e.capture_ms = 0.0;
            e.speed_mps = cfg.profile.cruise_speed_mps;
            e.gap_front_m = cfg.target_gap_m;
            e.accel_mps2 = 0.0;
        }
    }
    // follower status age at its lead, by global follower slot (p * nfol + i)
    std::vector<double> last_capture(static_cast<size_t>(np * nfol), 0.0);
    std::vector<double> epoch_penalty(static_cast<size_t>(np * nfol), 0.0);
    std::vector<long> epoch_ticks(static_cast<size_t>(np * nfol), 0);
    std::vector<AgeProcess> age_procs;
    if (age_trace)
        for (int s = 0; s < np * nfol; ++s) age_procs.emplace_back(s, 0.0);

    // --- radios -------------------------------------------------------------
    std::vector<SpsRadio> radios;  // [0, nveh): vehicle radios; then reward radios
    std::vector<Rng> radio_rng;
    BusyLog busy_log;
    const bool mode4 = cfg.comms == CommsMode::Mode4;
    const int status_rri0 =
        smart ? pretrained->grid().rri_options_ms[static_cast<size_t>(
                    pretrained->grid().n_actions() - 1)]
              : cfg.policy.rri_ms;
    if (mode4) {
        radios.reserve(static_cast<size_t>(nveh + np));
        for (int v = 0; v < nveh; ++v) {
            const bool is_lead = v % sz == 0;
            radios.emplace_back(v, cfg.sps, cfg.grid, is_lead ? cfg.control_rri_ms : status_rri0);
            radio_rng.emplace_back(seed, 1000 + static_cast<uint64_t>(v));
        }
        for (int p = 0; p < np; ++p) {
            radios.emplace_back(kRewardRadioBase + p, cfg.sps, cfg.grid, static_cast<int>(cfg.epoch_ms));
            radio_rng.emplace_back(seed, 2000 + static_cast<uint64_t>(p));
        }
        for (auto& r : radios) {
            r.use_shared_log(&busy_log);
            if (mac_trace) r.set_trace(mac_trace);
        }
    }
    // nominal sensed power for the shared busy log (well above -110 dBm here)
    const double busy_rssi = cfg.channel.tx_power_dbm - pathloss_db(100.0, cfg.channel);

    // --- payload stores -----------------------------------------------------
    std::vector<StatusPayload> status_store;
    std::vector<std::vector<double>> control_store;        // per-platoon command batch
    std::vector<std::vector<double>> reward_store;         // reward + piggybacked ages
    status_store.reserve(4096);

    // --- per-follower learners ---------------------------------------------
    std::vector<RatePolicy> learners;
    std::vector<Situation> last_situation(static_cast<size_t>(np * nfol));
    std::vector<int> last_action(static_cast<size_t>(np * nfol), 0);
    std::vector<Rng> learner_rng;
    double rri_time_sum = 0.0;  // integral of rri over follower-time
    if (smart) {
        for (int s = 0; s < np * nfol; ++s) {
            learners.push_back(*pretrained);
            learner_rng.emplace_back(seed, 3000 + static_cast<uint64_t>(s));
        }
    }

    // --- follower actuation -------------------------------------------------
    // latest-command semantics: a newly delivered command overwrites a pending
    // one; effect is checked on the 1 ms tick so a pending command lands at
    // exactly delivery + actuation_delay even if a successor follows
    std::vector<PendingCmd> pending(static_cast<size_t>(nveh));
    std::vector<double> active_cmd(static_cast<size_t>(nveh), 0.0);

    std::deque<IdealDelivery> ideal_queue;

    double age_penalty_sum = 0.0;
    long age_penalty_ticks = 0;
    double age_sum = 0.0;
    double access_delay_sum = 0.0;
    long access_delay_count = 0;
    rep.min_gap_m = cfg.target_gap_m;

    std::vector<TransmissionAttempt> attempts;
    std::vector<double> attempt_capture;
    std::vector<char> veh_transmitting(static_cast<size_t>(nveh), 0);

    auto follower_slot = [&](int p, int i) { return p * nfol + (i - 1); };  // i >= 1

    auto epsilon_at = [&](long t) {
        const double frac = static_cast<double>(t) / static_cast<double>(cfg.duration_ms);
        return cfg.smart_eps_start + (cfg.smart_eps_end - cfg.smart_eps_start) * frac;
    };

    auto smart_choose = [&](int slot, long t, double reward, double age_ms, bool learn) {
        auto& pol = learners[static_cast<size_t>(slot)];
        const auto& grid = pol.grid();
        const int p = slot / nfol;
        const int vid = p * sz + 1 + (slot % nfol);
        const double cbr = mode4 ? radios[static_cast<size_t>(vid)].channel_busy_ratio(t) : 0.0;
        const Situation now_s{grid.age_bin(age_ms), grid.collision_bin(cbr),
                              last_action[static_cast<size_t>(slot)]};
        if (learn && cfg.policy.online_learning)
            pol.online_update(last_situation[static_cast<size_t>(slot)],
                              last_action[static_cast<size_t>(slot)], reward, now_s);
        pol.epsilon = epsilon_at(t);
        int action = 0;
        const int rri = pol.act(now_s, learner_rng[static_cast<size_t>(slot)], &action);
        last_situation[static_cast<size_t>(slot)] = now_s;
        last_action[static_cast<size_t>(slot)] = action;
        if (mode4) radios[static_cast<size_t>(vid)].set_rri(rri);
        return rri;
    };

    // initial SMART action (no reward yet, no update)
    if (smart)
        for (int s = 0; s < np * nfol; ++s) {
            const auto& grid = learners[static_cast<size_t>(s)].grid();
            last_action[static_cast<size_t>(s)] = grid.n_actions() - 1;
            last_situation[static_cast<size_t>(s)] = Situation{0, 0, grid.n_actions() - 1};
            smart_choose(s, 0, 0.0, 0.0, false);
        }

    const int reps = cfg.policy.kind == UpdatePolicyCfg::Kind::FixedRate ? cfg.policy.repetitions : 1;

    // ------------------------------------------------------------------ loop
    for (long t = 0; t < cfg.duration_ms; ++t) {
        // actuation check precedes this tick's deliveries so a command lands
        // at exactly its effect time before any overwrite
        for (int v = 0; v < nveh; ++v) {
            if (v % sz == 0) continue;
            auto& pc = pending[static_cast<size_t>(v)];
            if (pc.effect_ms >= 0 && pc.effect_ms <= t) {
                active_cmd[static_cast<size_t>(v)] = pc.u;
                pc.effect_ms = -1;
            }
        }

        // phase 1: sense -----------------------------------------------------
        if (t % cfg.sensing_interval_ms == 0 && t > 0) {
            for (int p = 0; p < np; ++p)
                for (int i = 1; i < sz; ++i) {
                    const int v = p * sz + i;
                    StatusPayload s{static_cast<double>(t), veh[static_cast<size_t>(v)].speed_mps,
                                    veh[static_cast<size_t>(v - 1)].pos_m -
                                        veh[static_cast<size_t>(v)].pos_m - cfg.vehicle_length_m,
                                    veh[static_cast<size_t>(v)].accel_mps2};
                    if (mode4) {
                        status_store.push_back(s);
                        radios[static_cast<size_t>(v)].enqueue_sample(
                            static_cast<double>(t), reps, static_cast<int>(status_store.size() - 1));
                    } else if (cfg.comms == CommsMode::Ideal) {
                        ideal_queue.push_back({t + static_cast<long>(cfg.ideal_delay_ms), i, p, s, {},
                                               static_cast<double>(t)});
                    }
                }
        }

        // phases 2+3: MAC and channel ---------------------------------------
        attempts.clear();
        attempt_capture.clear();
        if (mode4) {
            std::fill(veh_transmitting.begin(), veh_transmitting.end(), 0);
            for (size_t r = 0; r < radios.size(); ++r) {
                auto sent = radios[r].tick(t, radio_rng[r]);
                if (!sent) continue;
                const int rid = radios[r].id();
                TransmissionAttempt a;
                a.sender = rid;
                a.subframe = t;
                a.subchannel_start = radios[r].subchannel_start();
                a.payload = sent->payload;
                attempts.push_back(a);
                attempt_capture.push_back(sent->capture_ms);
                busy_log.push_back({t, a.subchannel_start, rid, busy_rssi});
                if (rid < nveh) veh_transmitting[static_cast<size_t>(rid)] = 1;
            }
            rep.attempts += static_cast<long>(attempts.size());
            const auto collided = collision_mask(attempts, cfg.grid);
            for (bool c : collided)
                if (c) rep.collisions += 1;

            // phase 4: delivery ----------------------------------------------
            for (size_t a = 0; a < attempts.size(); ++a) {
                const auto& at = attempts[a];
                const double capture = attempt_capture[a];
                if (at.sender >= kRewardRadioBase) {
                    // reward broadcast from lead of platoon (sender - base)
                    const int p = at.sender - kRewardRadioBase;
                    const int lead = p * sz;
                    const auto& payload = reward_store[static_cast<size_t>(at.payload)];
                    for (int i = 1; i < sz; ++i) {
                        const int v = p * sz + i;
                        rep.links_attempted += 1;
                        if (collided[a] || veh_transmitting[static_cast<size_t>(v)]) continue;
                        if (!link_delivered(at.sender, v, t, distance(lead, v), cfg.channel))
                            continue;
                        rep.links_delivered += 1;
                        const int slot = follower_slot(p, i);
                        const double reward = payload[static_cast<size_t>(2 * (i - 1))];
                        const double age = payload[static_cast<size_t>(2 * (i - 1) + 1)];
                        smart_choose(slot, t, reward, age, true);
                    }
                } else if (at.sender % sz == 0) {
                    // control batch from a lead to its followers
                    const int p = at.sender / sz;
                    const auto& u = control_store[static_cast<size_t>(at.payload)];
                    for (int i = 1; i < sz; ++i) {
                        const int v = p * sz + i;
                        rep.links_attempted += 1;
                        if (collided[a] || veh_transmitting[static_cast<size_t>(v)]) continue;
                        if (!link_delivered(at.sender, v, t, distance(at.sender, v), cfg.channel))
                            continue;
                        rep.links_delivered += 1;
                        pending[static_cast<size_t>(v)] = {u[static_cast<size_t>(i - 1)],
                                                           t + cfg.actuation_delay_ms};
                    }
                } else {
                    // follower status to its lead
                    const int p = at.sender / sz;
                    const int lead = p * sz;
                    rep.links_attempted += 1;
                    if (collided[a] || veh_transmitting[static_cast<size_t>(lead)]) continue;
                    if (!link_delivered(at.sender, lead, t, distance(at.sender, lead), cfg.channel))
                        continue;
                    rep.links_delivered += 1;
                    const auto& s = status_store[static_cast<size_t>(at.payload)];
                    const int i = at.sender % sz;
                    auto& entry = views[static_cast<size_t>(p)].followers[static_cast<size_t>(i - 1)];
                    const int slot = follower_slot(p, i);
                    if (s.capture_ms > entry.capture_ms) {
                        entry = {s.capture_ms, s.speed_mps, s.gap_front_m, s.accel_mps2};
                        last_capture[static_cast<size_t>(slot)] = s.capture_ms;
                        if (age_trace)
                            age_procs[static_cast<size_t>(slot)].record_delivery(
                                static_cast<double>(t), s.capture_ms);
                    }
                    access_delay_sum += static_cast<double>(t) - capture;
                    access_delay_count += 1;
                }
            }
        } else if (cfg.comms == CommsMode::Ideal) {
            while (!ideal_queue.empty() && ideal_queue.front().deliver_ms <= t) {
                const auto& d = ideal_queue.front();
                if (d.follower >= 0) {
                    auto& entry =
                        views[static_cast<size_t>(d.platoon)].followers[static_cast<size_t>(d.follower - 1)];
                    if (d.status.capture_ms > entry.capture_ms) {
                        entry = {d.status.capture_ms, d.status.speed_mps, d.status.gap_front_m,
                                 d.status.accel_mps2};
                        const int slot = follower_slot(d.platoon, d.follower);
                        last_capture[static_cast<size_t>(slot)] = d.status.capture_ms;
                        if (age_trace)
                            age_procs[static_cast<size_t>(slot)].record_delivery(
                                static_cast<double>(t), d.status.capture_ms);
                    }
                } else {
                    for (int i = 1; i < sz; ++i)
                        pending[static_cast<size_t>(d.platoon * sz + i)] = {
                            d.commands[static_cast<size_t>(i - 1)], t + cfg.actuation_delay_ms};
                }
                ideal_queue.pop_front();
            }
        }

        // SMART reward epoch -------------------------------------------------
        if (smart && t > 0 && t % cfg.epoch_ms == 0) {
            for (int p = 0; p < np; ++p) {
                std::vector<double> payload;
                payload.reserve(static_cast<size_t>(2 * nfol));
                for (int i = 0; i < nfol; ++i) {
                    const int slot = p * nfol + i;
                    const double mean_pen =
                        epoch_penalty[static_cast<size_t>(slot)] /
                        std::max(1L, epoch_ticks[static_cast<size_t>(slot)]);
                    payload.push_back(-mean_pen);
                    payload.push_back(static_cast<double>(t) - last_capture[static_cast<size_t>(slot)]);
                    epoch_penalty[static_cast<size_t>(slot)] = 0.0;
                    epoch_ticks[static_cast<size_t>(slot)] = 0;
                }
                if (mode4) {
                    reward_store.push_back(std::move(payload));
                    radios[static_cast<size_t>(nveh + p)].enqueue_sample(
                        static_cast<double>(t), 1, static_cast<int>(reward_store.size() - 1));
                } else {
                    for (int i = 0; i < nfol; ++i)
                        smart_choose(p * nfol + i, t, payload[static_cast<size_t>(2 * i)],
                                     payload[static_cast<size_t>(2 * i + 1)], true);
                }
            }
        }

        // phases 5+6: control and dynamics ----------------------------------
        if (t % cfg.dynamics_tick_ms == 0) {
            const double dt = cfg.dynamics_tick_ms / 1000.0;
            for (int p = 0; p < np; ++p) {
                const int lead = p * sz;
                auto& lv = veh[static_cast<size_t>(lead)];
                double a_lead = lead_profile_accel(t, cfg.profile, lv.speed_mps);
                if (a_lead > 0.0)
                    a_lead = std::min(a_lead, (cfg.profile.cruise_speed_mps - lv.speed_mps) / dt);
                lv.accel_mps2 = a_lead;

                const auto u = gap_control(views[static_cast<size_t>(p)], a_lead, lv.speed_mps, cfg);
                if (mode4) {
                    control_store.push_back(u);
                    radios[static_cast<size_t>(lead)].enqueue_sample(
                        static_cast<double>(t), 1, static_cast<int>(control_store.size() - 1));
                } else if (cfg.comms == CommsMode::Ideal) {
                    ideal_queue.push_back({t + static_cast<long>(cfg.ideal_delay_ms), -1, p, {}, u,
                                           static_cast<double>(t)});
                }
            }
            for (int v = 0; v < nveh; ++v)
                if (v % sz != 0)
                    veh[static_cast<size_t>(v)].accel_mps2 = active_cmd[static_cast<size_t>(v)];
            // explicit Euler
            for (int v = 0; v < nveh; ++v) {
                auto& s = veh[static_cast<size_t>(v)];
                const double a = s.accel_mps2;
                if (s.speed_mps + a * dt >= 0.0) {
                    s.pos_m += s.speed_mps * dt + 0.5 * a * dt * dt;
                    s.speed_mps += a * dt;
                } else {  // clamp at standstill
                    if (a < 0.0) s.pos_m += -s.speed_mps * s.speed_mps / (2.0 * a);
                    s.speed_mps = 0.0;
                }
            }
            // crash and gap bookkeeping
            for (int p = 0; p < np && !rep.crashed; ++p)
                for (int i = 1; i < sz; ++i) {
                    const int v = p * sz + i;
                    const double gap = veh[static_cast<size_t>(v - 1)].pos_m -
                                       veh[static_cast<size_t>(v)].pos_m - cfg.vehicle_length_m;
                    rep.min_gap_m = std::min(rep.min_gap_m, gap);
                    rep.max_abs_gap_error_m =
                        std::max(rep.max_abs_gap_error_m, std::abs(gap - cfg.target_gap_m));
                    if (gap <= 0.0) {
                        rep.crashed = true;
                        rep.crash_time_ms = t;
                        break;
                    }
                }
            if (rep.crashed) break;
        }

        // phase 7: metrics ---------------------------------------------------
        for (int s = 0; s < np * nfol; ++s) {
            const double age = static_cast<double>(t) - last_capture[static_cast<size_t>(s)];
            const double pen = cfg.penalty(age);
            age_sum += age;
            age_penalty_sum += pen;
            epoch_penalty[static_cast<size_t>(s)] += pen;
            epoch_ticks[static_cast<size_t>(s)] += 1;
            if (age_trace) age_procs[static_cast<size_t>(s)].sample(static_cast<double>(t));
        }
        age_penalty_ticks += np * nfol;
        if (smart)
            for (int s = 0; s < np * nfol; ++s) {
                const int p = s / nfol;
                const int vid = p * sz + 1 + (s % nfol);
                rri_time_sum += mode4 ? radios[static_cast<size_t>(vid)].rri_ms()
                                      : learners[static_cast<size_t>(s)]
                                            .grid()
                                            .rri_options_ms[static_cast<size_t>(
                                                last_action[static_cast<size_t>(s)])];
            }
    }

    rep.fleet_avg_penalty = age_penalty_sum / std::max(1L, age_penalty_ticks);
    rep.mean_status_age_ms = age_sum / std::max(1L, age_penalty_ticks);
    rep.success_rate = rep.links_attempted > 0
                           ? static_cast<double>(rep.links_delivered) /
                                 static_cast<double>(rep.links_attempted)
                           : (cfg.comms == CommsMode::Ideal ? 1.0 : 0.0);
    rep.mean_access_delay_ms =
        access_delay_count > 0 ? access_delay_sum / static_cast<double>(access_delay_count) : 0.0;
    rep.mean_rri_ms = smart ? rri_time_sum / std::max(1L, age_penalty_ticks) : cfg.policy.rri_ms;
    if (age_trace) *age_trace = std::move(age_procs);
    return rep;
}

MsdResult min_safe_distance(PlatoonConfig cfg, const std::vector<uint64_t>& seeds,
                            double lo_m, double hi_m, double resolution_m,
                            const RatePolicy* pretrained, bool measure_operating_point) {
    MsdResult out;
    auto crashes = [&](double gap) {
        cfg.target_gap_m = gap;
        for (uint64_t s : seeds) {
            const auto rep = run_platoon(cfg, s, pretrained);
            if (rep.crashed) {
                out.search_trace.emplace_back(gap, true);
                return true;
            }
        }
        out.search_trace.emplace_back(gap, false);
        return false;
    };
    if (crashes(hi_m)) {
        out.crash_at_max_gap = true;
        out.min_safe_distance_m = hi_m;
        return out;
    }
    double lo = lo_m;
    double hi = hi_m;  // invariant: hi is safe
    if (!crashes(lo)) {
        hi = lo;
    } else {
        while (hi - lo > resolution_m) {
            const double mid = 0.5 * (lo + hi);
            if (crashes(mid))
                lo = mid;
            else
                hi = mid;
        }
    }
    out.min_safe_distance_m = hi;
    // success rate and operating point at the found gap
    cfg.target_gap_m = hi;
    double sr = 0.0;
    double rri = 0.0;
    for (uint64_t s : seeds) {
        const auto rep = run_platoon(cfg, s, pretrained);
        sr += rep.success_rate;
        rri += rep.mean_rri_ms;
    }
    out.mean_success_rate = sr / static_cast<double>(seeds.size());
    out.mean_rri_ms = rri / static_cast<double>(seeds.size());
    return out;
}

}  // namespace agesim
