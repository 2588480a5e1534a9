#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "agesim/platoon.hpp"

using namespace agesim;

TEST_SUITE("platoon") {

TEST_CASE("lead profile: cruise, brake to standstill, re-accelerate, hold") {
    LeadProfile p;
    CHECK(lead_profile_accel(0, p, 22.0) == doctest::Approx(0.0));
    CHECK(lead_profile_accel(1999, p, 22.0) == doctest::Approx(0.0));
    CHECK(lead_profile_accel(2500, p, 22.0) == doctest::Approx(-2.94));
    // braking from 22 at 2.94 m/s^2 reaches standstill after ~7.48 s
    double v = 22.0;
    long t = 2000;
    const double dt = 0.01;
    while (v > 0.0 && t < 12000) {
        v = std::max(0.0, v + lead_profile_accel(t, p, v) * dt);
        t += 10;
    }
    CHECK(t >= 2000 + 7380);
    CHECK(t <= 2000 + 7580);
    // clamp at standstill: no further deceleration command
    CHECK(lead_profile_accel(t, p, 0.0) == doctest::Approx(0.0));
    // acceleration phase pushes +2 until cruise speed, then holds
    CHECK(lead_profile_accel(10000, p, 10.0) == doctest::Approx(2.0));
    CHECK(lead_profile_accel(10000, p, 22.0) == doctest::Approx(0.0));
}

TEST_CASE("gap control: equilibrium and proportional response") {
    PlatoonConfig cfg;
    ControllerView view;
    view.followers.resize(1);
    view.followers[0] = {0.0, 22.0, cfg.target_gap_m, 0.0};
    auto u = gap_control(view, 0.0, 22.0, cfg);
    CHECK(u[0] == doctest::Approx(0.0));
    // one metre above target, speeds equal: close at k_p * 1 = +0.5
    view.followers[0].gap_front_m = cfg.target_gap_m + 1.0;
    u = gap_control(view, 0.0, 22.0, cfg);
    CHECK(u[0] == doctest::Approx(cfg.k_p * 1.0));
    // commanded accel is clamped at +-a_max
    view.followers[0].gap_front_m = cfg.target_gap_m + 1000.0;
    u = gap_control(view, 0.0, 22.0, cfg);
    CHECK(u[0] == doctest::Approx(cfg.a_max_mps2));
}

TEST_CASE("crash detection on bumper-to-bumper gaps") {
    std::vector<VehicleState> v(3);
    v[0].pos_m = 100.0;
    v[1].pos_m = 91.0;  // gap 9 - 4 = 5 > 0
    v[2].pos_m = 82.0;
    CHECK(!detect_crash(v, 4.0));
    v[1].pos_m = 96.1;  // gap 3.9 - 4 < 0
    CHECK(detect_crash(v, 4.0));
}

TEST_CASE("ideal channel: crash-free with tight tracking over the full profile") {
    PlatoonConfig cfg;
    cfg.comms = CommsMode::Ideal;
    const auto r = run_platoon(cfg, 1);
    CHECK(!r.crashed);
    CHECK(r.max_abs_gap_error_m < 0.5);  // 60 ms sensing staleness remains
    CHECK(r.min_gap_m > 0.0);

    // with a view refreshed every control tick the error is control-limited
    cfg.sensing_interval_ms = 10;
    const auto fresh = run_platoon(cfg, 1);
    CHECK(!fresh.crashed);
    CHECK(fresh.max_abs_gap_error_m < 0.1);
}

TEST_CASE("ideal channel: minimum safe distance is control-limited, under 1 m") {
    PlatoonConfig cfg;
    cfg.comms = CommsMode::Ideal;
    const auto m = min_safe_distance(cfg, {1, 2}, 0.2, 12.8, 0.1);
    CHECK(!m.crash_at_max_gap);
    CHECK(m.min_safe_distance_m <= 1.0);
}

TEST_CASE("no communication: coasting followers crash at practical gaps") {
    PlatoonConfig cfg;
    cfg.comms = CommsMode::None;
    cfg.target_gap_m = 5.0;
    CHECK(run_platoon(cfg, 1).crashed);
    cfg.target_gap_m = 100.0;  // still under the kinematic bound
    CHECK(run_platoon(cfg, 1).crashed);
    cfg.target_gap_m = 250.0;  // beyond the worst-case closing distance
    CHECK(!run_platoon(cfg, 1).crashed);
}

TEST_CASE("mode 4 run: link accounting is coherent") {
    PlatoonConfig cfg;
    cfg.policy.rri_ms = 20;
    cfg.policy.repetitions = 1;
    cfg.target_gap_m = 20.0;
    const auto r = run_platoon(cfg, 7);
    CHECK(r.links_attempted > 0);
    CHECK(r.links_delivered > 0);
    CHECK(r.links_delivered <= r.links_attempted);
    CHECK(r.success_rate == doctest::Approx(static_cast<double>(r.links_delivered) /
                                            static_cast<double>(r.links_attempted)));
    CHECK(r.success_rate > 0.0);
    CHECK(r.success_rate < 1.0);
    CHECK(r.collisions <= r.attempts);
    CHECK(r.mean_status_age_ms > 0.0);
    CHECK(r.mean_access_delay_ms >= 0.0);
}

TEST_CASE("controller-view ages include the 60 ms sensing refresh") {
    PlatoonConfig cfg;
    cfg.comms = CommsMode::Ideal;
    const auto r = run_platoon(cfg, 3);
    // with instant delivery the staleness is the sensing interval alone:
    // mean of a 60 ms sawtooth is about 30 ms
    CHECK(r.mean_status_age_ms >= 25.0);
    CHECK(r.mean_status_age_ms <= 65.0);
}

TEST_CASE("bit-exact replay: identical seeds give identical reports") {
    PlatoonConfig cfg;
    cfg.target_gap_m = 11.0;
    const auto a = run_platoon(cfg, 42);
    const auto b = run_platoon(cfg, 42);
    CHECK(a.crashed == b.crashed);
    CHECK(a.min_gap_m == b.min_gap_m);
    CHECK(a.success_rate == b.success_rate);
    CHECK(a.mean_status_age_ms == b.mean_status_age_ms);
    CHECK(a.fleet_avg_penalty == b.fleet_avg_penalty);
    CHECK(a.links_attempted == b.links_attempted);
    const auto c = run_platoon(cfg, 43);
    CHECK(a.mean_status_age_ms != c.mean_status_age_ms);
}

TEST_CASE("repetitions multiply attempts for the same payload stream") {
    PlatoonConfig cfg;
    cfg.target_gap_m = 20.0;
    cfg.policy.repetitions = 1;
    const auto r1 = run_platoon(cfg, 9);
    cfg.policy.repetitions = 2;
    const auto r2 = run_platoon(cfg, 9);
    CHECK(r2.attempts > r1.attempts * 1.4);
}

TEST_CASE("binary search trace: crash risk is monotone along the trace") {
    PlatoonConfig cfg;
    cfg.policy.rri_ms = 20;
    cfg.policy.repetitions = 2;
    const auto m = min_safe_distance(cfg, {11}, 0.2, 16.0, 0.4);
    REQUIRE(!m.search_trace.empty());
    double max_crashed = -1.0;
    double min_safe = 1e9;
    for (const auto& [gap, crashed] : m.search_trace) {
        if (crashed)
            max_crashed = std::max(max_crashed, gap);
        else
            min_safe = std::min(min_safe, gap);
    }
    CHECK(max_crashed < min_safe);            // no inversion among visited gaps
    CHECK(m.min_safe_distance_m == doctest::Approx(min_safe));
    CHECK(min_safe - max_crashed <= 0.4 + 1e-9);  // resolution honored
}

TEST_CASE("smart policy over mode 4 requires a pretrained table") {
    PlatoonConfig cfg;
    cfg.policy.kind = UpdatePolicyCfg::Kind::SmartLite;
    CHECK_THROWS_AS(run_platoon(cfg, 1), std::invalid_argument);
}

}  // TEST_SUITE
