#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "agesim/age.hpp"

using namespace agesim;

namespace {

// Deterministic period-K updating with d-slot delivery delay, sampled on the
// slot grid at t = 0 .. horizon-1. Deliveries at t = d, d+K, ... carry the
// sample generated d slots earlier, so from t = d on the age cycles
// d, d+1, ..., d+K-1. The initial reference is phased so the pre-delivery
// samples continue the same cycle backwards.
AgeProcess sawtooth(int period, int delay, int horizon, int id = 0) {
    AgeProcess p(id, -(delay + period - 1.0));
    for (int t = 0; t < horizon; ++t) {
        if (t >= delay && (t - delay) % period == 0) p.record_delivery(t, t - delay);
        p.sample(t);
    }
    return p;
}

}  // namespace

TEST_SUITE("age") {

TEST_CASE("delivery resets age to now - gen_time") {
    AgeProcess p(0, 0.0);
    CHECK(p.age_at(37.0) == doctest::Approx(37.0));
    p.record_delivery(37.0, 32.0);  // sample generated 5 ms ago
    CHECK(p.age_at(37.0) == doctest::Approx(5.0));
}

TEST_CASE("delivery with gen_time = now gives age zero") {
    AgeProcess p(0, 0.0);
    p.record_delivery(50.0, 50.0);
    CHECK(p.age_at(50.0) == doctest::Approx(0.0));
}

TEST_CASE("stale delivery leaves the process unchanged") {
    AgeProcess p(0, 0.0);
    p.record_delivery(20.0, 10.0);  // age 10 at t=20
    p.record_delivery(21.0, 5.0);   // older than the current reference
    CHECK(p.age_at(21.0) == doctest::Approx(11.0));
}

TEST_CASE("future gen_time is a causality violation") {
    AgeProcess p(0, 0.0);
    CHECK_THROWS_AS(p.record_delivery(10.0, 11.0), std::invalid_argument);
}

TEST_CASE("age grows with slope one between deliveries") {
    AgeProcess p(0, 0.0);
    p.record_delivery(5.0, 3.0);
    for (int t = 6; t < 30; ++t)
        CHECK(p.age_at(t) - p.age_at(t - 1) == doctest::Approx(1.0));
}

TEST_CASE("K=4 d=1 sawtooth: linear average 2.5, exceedance(2) 0.5, peak 4") {
    const auto p = sawtooth(4, 1, 4000);
    CHECK(time_average_penalty(p, AgePenalty::linear(), 4000.0) == doctest::Approx(2.5));
    CHECK(time_average_penalty(p, AgePenalty::exceedance(2.0), 4000.0) == doctest::Approx(0.5));
    CHECK(peak_age(p) == doctest::Approx(4.0));
}

TEST_CASE("every-slot zero-delay updates: average and peak 0") {
    const auto p = sawtooth(1, 0, 1000);
    CHECK(time_average_penalty(p, AgePenalty::linear(), 1000.0) == doctest::Approx(0.0));
    CHECK(peak_age(p) == doctest::Approx(0.0));
}

TEST_CASE("single delivery then silence: age reaches the elapsed time") {
    AgeProcess p(0, 0.0);
    p.record_delivery(0.0, 0.0);
    for (int t = 1; t <= 100; ++t) p.sample(t);
    CHECK(peak_age(p) == doctest::Approx(100.0));
}

TEST_CASE("sawtooth identity: average linear age is d + (K-1)/2") {
    for (int K : {1, 2, 4, 8})
        for (int d : {0, 1, 5}) {
            const int horizon = 8000;  // a multiple of every K
            const auto p = sawtooth(K, d, d + horizon);
            // measure over the exact whole cycles from the first delivery on
            double acc = 0.0;
            int n = 0;
            for (const auto& [t, age] : p.samples()) {
                if (t < d) continue;
                acc += age;
                n += 1;
            }
            REQUIRE(n == horizon);
            CHECK(acc / n == doctest::Approx(d + (K - 1) / 2.0));
        }
}

TEST_CASE("reset dominance: removing a delivery never lowers the age") {
    AgeProcess with(0, 0.0), without(0, 0.0);
    const std::vector<std::pair<double, double>> deliveries = {
        {10, 8}, {25, 20}, {40, 39}, {70, 50}};
    for (int t = 1; t <= 100; ++t) {
        for (size_t i = 0; i < deliveries.size(); ++i) {
            if (deliveries[i].first != t) continue;
            with.record_delivery(t, deliveries[i].second);
            if (i != 1) without.record_delivery(t, deliveries[i].second);  // drop one
        }
        CHECK(with.age_at(t) <= without.age_at(t) + 1e-12);
        with.sample(t);
        without.sample(t);
    }
    CHECK(time_average_penalty(with, AgePenalty::linear(), 100.0) <=
          time_average_penalty(without, AgePenalty::linear(), 100.0));
}

TEST_CASE("penalty monotonicity: pointwise-ordered ages give ordered aggregates") {
    const auto lo = sawtooth(2, 1, 2000);
    const auto hi = sawtooth(8, 1, 2000);
    for (size_t i = 0; i < lo.samples().size(); ++i)
        REQUIRE(lo.samples()[i].second <= hi.samples()[i].second + 1e-12);
    for (const auto& pen :
         {AgePenalty::linear(), AgePenalty::quadratic(), AgePenalty::exceedance(3.0)}) {
        CHECK(time_average_penalty(lo, pen, 2000.0) <=
              time_average_penalty(hi, pen, 2000.0) + 1e-12);
    }
    CHECK(peak_age(lo) <= peak_age(hi));
}

TEST_CASE("penalty variants evaluate per definition and are non-decreasing") {
    CHECK(AgePenalty::linear()(7.0) == doctest::Approx(7.0));
    CHECK(AgePenalty::quadratic()(7.0) == doctest::Approx(49.0));
    CHECK(AgePenalty::exceedance(5.0)(5.0) == doctest::Approx(0.0));
    CHECK(AgePenalty::exceedance(5.0)(5.1) == doctest::Approx(1.0));
    for (const auto& pen :
         {AgePenalty::linear(), AgePenalty::quadratic(), AgePenalty::exceedance(4.0)})
        for (double a = 0.0; a < 20.0; a += 0.5) CHECK(pen(a) <= pen(a + 0.5));
}

TEST_CASE("aggregate stats: fleet means, peak max, exceedance in [0,1]") {
    std::vector<AgeProcess> procs = {sawtooth(2, 1, 1000, 0), sawtooth(4, 1, 1000, 1)};
    const auto s = aggregate_stats(procs, AgePenalty::linear(), 1000.0, 2.0);
    CHECK(s.per_source.at(0).time_avg_penalty == doctest::Approx(1.5));
    CHECK(s.per_source.at(1).time_avg_penalty == doctest::Approx(2.5));
    CHECK(s.time_avg_penalty == doctest::Approx(2.0));
    CHECK(s.peak_age_ms == doctest::Approx(4.0));
    CHECK(s.exceedance_fraction >= 0.0);
    CHECK(s.exceedance_fraction <= 1.0);
    // peak >= linear time average
    CHECK(s.peak_age_ms >= s.time_avg_penalty);
}

TEST_CASE("empty sample sequence and non-positive horizon are errors") {
    AgeProcess p(0, 0.0);
    CHECK_THROWS_AS(time_average_penalty(p, AgePenalty::linear(), 10.0), std::invalid_argument);
    CHECK_THROWS_AS(peak_age(p), std::invalid_argument);
    p.sample(1.0);
    CHECK_THROWS_AS(time_average_penalty(p, AgePenalty::linear(), 0.0), std::invalid_argument);
}

}  // TEST_SUITE
