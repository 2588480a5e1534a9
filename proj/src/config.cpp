#include "agesim/config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

namespace agesim {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> known) {
    if (!j.is_object()) throw std::runtime_error("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known)
            if (key == k) {
                ok = true;
                break;
            }
        if (!ok) throw std::runtime_error("config: unknown key '" + where + key + "'");
    }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_channel(const json& j, ChannelModel& ch) {
    reject_unknown(j, "channel.",
                   {"tx_power_dbm", "shadowing_sigma_db", "shadowing_enabled", "pathloss_a",
                    "pathloss_b", "noise_floor_dbm", "snr_threshold_db", "snr_check_enabled",
                    "shadow_seed"});
    get(j, "tx_power_dbm", ch.tx_power_dbm);
    get(j, "shadowing_sigma_db", ch.shadowing_sigma_db);
    get(j, "shadowing_enabled", ch.shadowing_enabled);
    get(j, "pathloss_a", ch.pathloss_a);
    get(j, "pathloss_b", ch.pathloss_b);
    get(j, "noise_floor_dbm", ch.noise_floor_dbm);
    get(j, "snr_threshold_db", ch.snr_threshold_db);
    get(j, "snr_check_enabled", ch.snr_check_enabled);
    get(j, "shadow_seed", ch.shadow_seed);
}

void parse_mac(const json& j, SpsConfig& sps, ResourceGrid& grid) {
    reject_unknown(j, "mac.",
                   {"c_min", "c_max", "keep_prob", "sensing_window_ms", "selection_window_cap_ms",
                    "exclusion_threshold_dbm", "n_subchannels", "packet_span"});
    get(j, "c_min", sps.c_min);
    get(j, "c_max", sps.c_max);
    get(j, "keep_prob", sps.keep_prob);
    get(j, "sensing_window_ms", sps.sensing_window_ms);
    get(j, "selection_window_cap_ms", sps.selection_window_cap_ms);
    get(j, "exclusion_threshold_dbm", sps.exclusion_threshold_dbm);
    get(j, "n_subchannels", grid.n_subchannels);
    get(j, "packet_span", grid.packet_span);
    if (grid.packet_span < 1 || grid.n_subchannels < grid.packet_span)
        throw std::runtime_error("config: mac.packet_span must fit in mac.n_subchannels");
    if (sps.c_min < 1 || sps.c_max < sps.c_min)
        throw std::runtime_error("config: mac counter bounds must satisfy 1 <= c_min <= c_max");
}

void parse_policy(const json& j, UpdatePolicyCfg& p) {
    reject_unknown(j, "policy.", {"kind", "rri_ms", "repetitions", "online_learning"});
    std::string kind = p.kind == UpdatePolicyCfg::Kind::SmartLite ? "smart" : "fixed";
    get(j, "kind", kind);
    if (kind == "fixed")
        p.kind = UpdatePolicyCfg::Kind::FixedRate;
    else if (kind == "smart")
        p.kind = UpdatePolicyCfg::Kind::SmartLite;
    else
        throw std::runtime_error("config: policy.kind must be 'fixed' or 'smart'");
    get(j, "rri_ms", p.rri_ms);
    get(j, "repetitions", p.repetitions);
    get(j, "online_learning", p.online_learning);
    if (p.rri_ms < 1) throw std::runtime_error("config: policy.rri_ms must be >= 1");
    if (p.repetitions < 1) throw std::runtime_error("config: policy.repetitions must be >= 1");
}

void parse_platoon(const json& j, PlatoonConfig& p) {
    reject_unknown(j, "platoon.",
                   {"n_platoons", "platoon_size", "target_gap_m", "sensing_interval_ms",
                    "actuation_delay_ms", "a_max_mps2", "k_p", "k_v", "vehicle_length_m",
                    "lane_width_m", "duration_ms", "dynamics_tick_ms", "control_rri_ms",
                    "ideal_delay_ms", "cruise_speed_mps", "brake_accel_mps2", "accel_mps2",
                    "cruise_ms", "brake_ms", "epoch_ms"});
    get(j, "n_platoons", p.n_platoons);
    get(j, "platoon_size", p.platoon_size);
    get(j, "target_gap_m", p.target_gap_m);
    get(j, "sensing_interval_ms", p.sensing_interval_ms);
    get(j, "actuation_delay_ms", p.actuation_delay_ms);
    get(j, "a_max_mps2", p.a_max_mps2);
    get(j, "k_p", p.k_p);
    get(j, "k_v", p.k_v);
    get(j, "vehicle_length_m", p.vehicle_length_m);
    get(j, "lane_width_m", p.lane_width_m);
    get(j, "duration_ms", p.duration_ms);
    get(j, "dynamics_tick_ms", p.dynamics_tick_ms);
    get(j, "control_rri_ms", p.control_rri_ms);
    get(j, "ideal_delay_ms", p.ideal_delay_ms);
    get(j, "cruise_speed_mps", p.profile.cruise_speed_mps);
    get(j, "brake_accel_mps2", p.profile.brake_accel_mps2);
    get(j, "accel_mps2", p.profile.accel_mps2);
    get(j, "cruise_ms", p.profile.cruise_ms);
    get(j, "brake_ms", p.profile.brake_ms);
    get(j, "epoch_ms", p.epoch_ms);
    if (p.platoon_size < 2) throw std::runtime_error("config: platoon.platoon_size must be >= 2");
    if (p.target_gap_m <= 0) throw std::runtime_error("config: platoon.target_gap_m must be > 0");
}

void parse_intersection(const json& j, IntersectionConfig& c) {
    reject_unknown(j, "intersection.",
                   {"control", "hv_fraction", "total_vehicles", "arrival_rate_per_approach_hz",
                    "approach_m", "exit_margin_m", "v_max_mps", "min_gap_m", "vehicle_length_m",
                    "reject_backoff_ms", "backoff_jitter_ms", "response_timeout_ms",
                    "request_window_m", "cell_pad_ms", "liveness_deadline_ms", "green_ms",
                    "all_red_ms", "hv_status_rri_ms", "response_rri_ms", "epoch_ms",
                    "max_duration_ms"});
    std::string control = c.control == IntersectionConfig::Control::Reservation ? "reservation"
                                                                                : "lights";
    get(j, "control", control);
    if (control == "reservation")
        c.control = IntersectionConfig::Control::Reservation;
    else if (control == "lights")
        c.control = IntersectionConfig::Control::TrafficLights;
    else
        throw std::runtime_error("config: intersection.control must be 'reservation' or 'lights'");
    get(j, "hv_fraction", c.hv_fraction);
    get(j, "total_vehicles", c.total_vehicles);
    get(j, "arrival_rate_per_approach_hz", c.arrival_rate_per_approach_hz);
    get(j, "approach_m", c.approach_m);
    get(j, "exit_margin_m", c.exit_margin_m);
    get(j, "v_max_mps", c.v_max_mps);
    get(j, "min_gap_m", c.min_gap_m);
    get(j, "vehicle_length_m", c.vehicle_length_m);
    get(j, "reject_backoff_ms", c.reject_backoff_ms);
    get(j, "backoff_jitter_ms", c.backoff_jitter_ms);
    get(j, "response_timeout_ms", c.response_timeout_ms);
    get(j, "request_window_m", c.request_window_m);
    get(j, "cell_pad_ms", c.cell_pad_ms);
    get(j, "liveness_deadline_ms", c.liveness_deadline_ms);
    get(j, "green_ms", c.lights.green_ms);
    get(j, "all_red_ms", c.lights.all_red_ms);
    get(j, "hv_status_rri_ms", c.hv_status_rri_ms);
    get(j, "response_rri_ms", c.response_rri_ms);
    get(j, "epoch_ms", c.epoch_ms);
    get(j, "max_duration_ms", c.max_duration_ms);
    if (c.hv_fraction < 0.0 || c.hv_fraction > 1.0)
        throw std::runtime_error("config: intersection.hv_fraction must be in [0,1]");
    if (c.total_vehicles < 1)
        throw std::runtime_error("config: intersection.total_vehicles must be >= 1");
}

}  // namespace

CommsMode parse_comms(const std::string& s) {
    if (s == "mode4") return CommsMode::Mode4;
    if (s == "ideal") return CommsMode::Ideal;
    if (s == "none") return CommsMode::None;
    throw std::runtime_error("config: comms must be 'mode4', 'ideal', or 'none'");
}

AgePenalty parse_penalty(const std::string& kind, double bound_ms) {
    if (kind == "linear") return AgePenalty::linear();
    if (kind == "quadratic") return AgePenalty::quadratic();
    if (kind == "exceedance") return AgePenalty::exceedance(bound_ms);
    throw std::runtime_error("config: penalty must be 'linear', 'quadratic', or 'exceedance'");
}

RootConfig parse_root_config(const json& j) {
    RootConfig cfg;
    reject_unknown(j, "", {"scenario", "seed", "runs", "comms", "penalty", "penalty_bound_ms",
                           "channel", "mac", "policy", "platoon", "intersection"});
    get(j, "scenario", cfg.scenario);
    if (cfg.scenario != "platoon" && cfg.scenario != "intersection")
        throw std::runtime_error("config: scenario must be 'platoon' or 'intersection'");
    get(j, "seed", cfg.seed);
    get(j, "runs", cfg.runs);
    if (cfg.runs < 1) throw std::runtime_error("config: runs must be >= 1");
    get(j, "comms", cfg.comms);
    parse_comms(cfg.comms);  // validate early
    get(j, "penalty", cfg.penalty);
    get(j, "penalty_bound_ms", cfg.penalty_bound_ms);
    parse_penalty(cfg.penalty, cfg.penalty_bound_ms);
    if (j.contains("channel")) parse_channel(j.at("channel"), cfg.channel);
    if (j.contains("mac")) parse_mac(j.at("mac"), cfg.sps, cfg.grid);
    if (j.contains("policy")) parse_policy(j.at("policy"), cfg.policy);
    if (j.contains("platoon")) parse_platoon(j.at("platoon"), cfg.platoon);
    if (j.contains("intersection")) parse_intersection(j.at("intersection"), cfg.intersection);
    return cfg;
}

RootConfig load_root_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
    }
    return parse_root_config(j);
}

json materialize(const RootConfig& cfg) {
    json j;
    j["scenario"] = cfg.scenario;
    j["seed"] = cfg.seed;
    j["runs"] = cfg.runs;
    j["comms"] = cfg.comms;
    j["penalty"] = cfg.penalty;
    j["penalty_bound_ms"] = cfg.penalty_bound_ms;
    j["channel"] = {{"tx_power_dbm", cfg.channel.tx_power_dbm},
                    {"shadowing_sigma_db", cfg.channel.shadowing_sigma_db},
                    {"shadowing_enabled", cfg.channel.shadowing_enabled},
                    {"pathloss_a", cfg.channel.pathloss_a},
                    {"pathloss_b", cfg.channel.pathloss_b},
                    {"noise_floor_dbm", cfg.channel.noise_floor_dbm},
                    {"snr_threshold_db", cfg.channel.snr_threshold_db},
                    {"snr_check_enabled", cfg.channel.snr_check_enabled},
                    {"shadow_seed", cfg.channel.shadow_seed}};
    j["mac"] = {{"c_min", cfg.sps.c_min},
                {"c_max", cfg.sps.c_max},
                {"keep_prob", cfg.sps.keep_prob},
                {"sensing_window_ms", cfg.sps.sensing_window_ms},
                {"selection_window_cap_ms", cfg.sps.selection_window_cap_ms},
                {"exclusion_threshold_dbm", cfg.sps.exclusion_threshold_dbm},
                {"n_subchannels", cfg.grid.n_subchannels},
                {"packet_span", cfg.grid.packet_span}};
    j["policy"] = {{"kind", cfg.policy.kind == UpdatePolicyCfg::Kind::SmartLite ? "smart" : "fixed"},
                   {"rri_ms", cfg.policy.rri_ms},
                   {"repetitions", cfg.policy.repetitions},
                   {"online_learning", cfg.policy.online_learning}};
    j["platoon"] = {{"n_platoons", cfg.platoon.n_platoons},
                    {"platoon_size", cfg.platoon.platoon_size},
                    {"target_gap_m", cfg.platoon.target_gap_m},
                    {"sensing_interval_ms", cfg.platoon.sensing_interval_ms},
                    {"actuation_delay_ms", cfg.platoon.actuation_delay_ms},
                    {"a_max_mps2", cfg.platoon.a_max_mps2},
                    {"k_p", cfg.platoon.k_p},
                    {"k_v", cfg.platoon.k_v},
                    {"vehicle_length_m", cfg.platoon.vehicle_length_m},
                    {"lane_width_m", cfg.platoon.lane_width_m},
                    {"duration_ms", cfg.platoon.duration_ms},
                    {"dynamics_tick_ms", cfg.platoon.dynamics_tick_ms},
                    {"control_rri_ms", cfg.platoon.control_rri_ms},
                    {"ideal_delay_ms", cfg.platoon.ideal_delay_ms},
                    {"cruise_speed_mps", cfg.platoon.profile.cruise_speed_mps},
                    {"brake_accel_mps2", cfg.platoon.profile.brake_accel_mps2},
                    {"accel_mps2", cfg.platoon.profile.accel_mps2},
                    {"cruise_ms", cfg.platoon.profile.cruise_ms},
                    {"brake_ms", cfg.platoon.profile.brake_ms},
                    {"epoch_ms", cfg.platoon.epoch_ms}};
    j["intersection"] = {
        {"control",
         cfg.intersection.control == IntersectionConfig::Control::Reservation ? "reservation"
                                                                              : "lights"},
        {"hv_fraction", cfg.intersection.hv_fraction},
        {"total_vehicles", cfg.intersection.total_vehicles},
        {"arrival_rate_per_approach_hz", cfg.intersection.arrival_rate_per_approach_hz},
        {"approach_m", cfg.intersection.approach_m},
        {"exit_margin_m", cfg.intersection.exit_margin_m},
        {"v_max_mps", cfg.intersection.v_max_mps},
        {"min_gap_m", cfg.intersection.min_gap_m},
        {"vehicle_length_m", cfg.intersection.vehicle_length_m},
        {"reject_backoff_ms", cfg.intersection.reject_backoff_ms},
        {"backoff_jitter_ms", cfg.intersection.backoff_jitter_ms},
        {"response_timeout_ms", cfg.intersection.response_timeout_ms},
        {"request_window_m", cfg.intersection.request_window_m},
        {"cell_pad_ms", cfg.intersection.cell_pad_ms},
        {"liveness_deadline_ms", cfg.intersection.liveness_deadline_ms},
        {"green_ms", cfg.intersection.lights.green_ms},
        {"all_red_ms", cfg.intersection.lights.all_red_ms},
        {"hv_status_rri_ms", cfg.intersection.hv_status_rri_ms},
        {"response_rri_ms", cfg.intersection.response_rri_ms},
        {"epoch_ms", cfg.intersection.epoch_ms},
        {"max_duration_ms", cfg.intersection.max_duration_ms}};
    return j;
}

PlatoonConfig make_platoon_config(const RootConfig& cfg) {
    PlatoonConfig p = cfg.platoon;
    p.comms = parse_comms(cfg.comms);
    p.policy = cfg.policy;
    p.sps = cfg.sps;
    p.grid = cfg.grid;
    p.channel = cfg.channel;
    p.penalty = parse_penalty(cfg.penalty, cfg.penalty_bound_ms);
    return p;
}

IntersectionConfig make_intersection_config(const RootConfig& cfg) {
    IntersectionConfig c = cfg.intersection;
    c.comms = parse_comms(cfg.comms);
    c.policy = cfg.policy;
    c.sps = cfg.sps;
    c.grid = cfg.grid;
    c.channel = cfg.channel;
    return c;
}

}  // namespace agesim
