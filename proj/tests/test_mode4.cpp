#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "agesim/mode4.hpp"

using namespace agesim;

namespace {

SpsRadio make_radio(int rri, int id = 0, SpsConfig cfg = {}) {
    return SpsRadio(id, cfg, ResourceGrid{}, rri);
}

}  // namespace

TEST_SUITE("mode4") {

TEST_CASE("empty sensing history: candidate set covers all 2 x window positions") {
    auto r = make_radio(50);
    const auto cands = r.candidate_set(1000, -110.0);
    CHECK(cands.size() == 100);  // min(rri,100) offsets x 2 slots
    std::set<std::pair<int, int>> uniq;
    for (const auto& c : cands) {
        CHECK(c.offset >= 0);
        CHECK(c.offset < 50);
        CHECK((c.subchannel == 0 || c.subchannel == 2));
        uniq.insert({c.offset, c.subchannel});
    }
    CHECK(uniq.size() == cands.size());
}

TEST_CASE("selection window is capped at 100 ms for long periods") {
    auto r = make_radio(500);
    CHECK(r.candidate_set(1000, -110.0).size() == 200);
}

TEST_CASE("reservation periodicity: attempts exactly rri apart") {
    SpsConfig cfg;
    cfg.c_min = cfg.c_max = 15;  // one long reservation, no reselection noise
    auto r = make_radio(100, 0, cfg);
    Rng rng(42);
    std::vector<long> tx_times;
    for (long t = 0; t < 2200 && tx_times.size() < 15; ++t) {
        r.enqueue_sample(static_cast<double>(t), 1);
        if (r.tick(t, rng)) tx_times.push_back(t);
    }
    REQUIRE(tx_times.size() == 15);
    for (size_t i = 1; i < tx_times.size(); ++i)
        CHECK(tx_times[i] - tx_times[i - 1] == 100);
}

TEST_CASE("reselection counter is drawn in [c_min, c_max] and uniform") {
    auto r = make_radio(10);
    Rng rng(7);
    std::map<int, long> counts;
    long resels = 0;
    bool had_selection = false;
    for (long t = 0; resels < 10000; ++t) {
        const bool before = r.has_selection();
        r.tick(t, rng);
        if (!before && r.has_selection()) {  // a selection just happened
            const int c = r.resel_counter();
            CHECK(c >= 5);
            CHECK(c <= 15);
            counts[c] += 1;
            resels += 1;
            had_selection = true;
        }
    }
    CHECK(had_selection);
    // chi-square against uniform on 11 values, 1% critical value for df=10
    const double expect = 10000.0 / 11.0;
    double chi2 = 0.0;
    for (int c = 5; c <= 15; ++c) {
        const double diff = counts[c] - expect;
        chi2 += diff * diff / expect;
    }
    CHECK(chi2 < 23.21);
}

TEST_CASE("latest-sample-only queue: the newer capture wins") {
    SpsConfig cfg;
    cfg.c_min = cfg.c_max = 15;
    auto r = make_radio(100, 0, cfg);
    Rng rng(3);
    r.tick(0, rng);  // select
    r.enqueue_sample(10.0, 1);
    r.enqueue_sample(50.0, 1);  // replaces the untransmitted older sample
    for (long t = 1; t < 300; ++t) {
        if (auto m = r.tick(t, rng)) {
            CHECK(m->capture_ms == doctest::Approx(50.0));
            return;
        }
    }
    FAIL("no transmission happened");
}

TEST_CASE("k repetitions carry the original capture time, then stop") {
    SpsConfig cfg;
    cfg.c_min = cfg.c_max = 15;
    auto r = make_radio(20, 0, cfg);
    Rng rng(9);
    r.tick(0, rng);
    r.enqueue_sample(5.0, 3);
    std::vector<double> captures;
    for (long t = 1; t < 500; ++t)
        if (auto m = r.tick(t, rng)) captures.push_back(m->capture_ms);
    REQUIRE(captures.size() == 3);  // exactly k transmissions
    for (double c : captures) CHECK(c == doctest::Approx(5.0));
}

TEST_CASE("a sample arriving mid-repetition waits for the burst to finish") {
    SpsConfig cfg;
    cfg.c_min = cfg.c_max = 15;
    auto r = make_radio(20, 0, cfg);
    Rng rng(11);
    r.tick(0, rng);
    r.enqueue_sample(5.0, 3);
    std::vector<double> captures;
    long enq_at = -1;
    for (long t = 1; t < 500; ++t) {
        if (auto m = r.tick(t, rng)) captures.push_back(m->capture_ms);
        if (captures.size() == 1 && enq_at < 0) enq_at = t + 1;
        if (t == enq_at) r.enqueue_sample(static_cast<double>(t), 1);  // mid-burst arrival
    }
    REQUIRE(captures.size() == 4);
    CHECK(captures[0] == doctest::Approx(5.0));
    CHECK(captures[1] == doctest::Approx(5.0));  // burst keeps its own capture
    CHECK(captures[2] == doctest::Approx(5.0));
    // the waiting sample goes out only after the burst finished
    CHECK(captures[3] == doctest::Approx(static_cast<double>(enq_at)));
}

TEST_CASE("exclusion soundness: resources sensed busy above threshold are excluded") {
    auto r = make_radio(10);
    // busy at subframe 1995, slot 0: folds to offset (1995 - 2001) mod 10 = 4
    r.observe_busy(1995, 0, -80.0);
    const auto cands = r.candidate_set(2000, -110.0);
    CHECK(cands.size() == 19);
    for (const auto& c : cands) CHECK(!(c.offset == 4 && c.subchannel == 0));
    // below threshold the same observation excludes nothing
    auto r2 = make_radio(10);
    r2.observe_busy(1995, 0, -120.0);
    CHECK(r2.candidate_set(2000, -110.0).size() == 20);
}

TEST_CASE("observations outside the 1000 ms sensing window are forgotten") {
    auto r = make_radio(10);
    r.observe_busy(500, 0, -60.0);
    CHECK(r.candidate_set(2000, -110.0).size() == 20);
}

TEST_CASE("all resources busy at equal power: selection still succeeds via relaxation") {
    auto r = make_radio(10);
    for (long sf = 1000; sf < 2000; ++sf)
        for (int sc : {0, 2}) r.observe_busy(sf, sc, -60.0);
    CHECK(r.candidate_set(2000, -110.0).empty());
    Rng rng(5);
    r.tick(2000, rng);
    CHECK(r.has_selection());
    CHECK(r.next_tx_ms() > 2000);
    CHECK(r.next_tx_ms() <= 2010);
}

TEST_CASE("changing the rri invalidates the reservation, same value keeps it") {
    auto r = make_radio(20);
    Rng rng(13);
    r.tick(0, rng);
    REQUIRE(r.has_selection());
    r.set_rri(20);
    CHECK(r.has_selection());
    r.set_rri(100);
    CHECK(!r.has_selection());
    CHECK(r.rri_ms() == 100);
}

TEST_CASE("mean access delay: uniform enqueue phase gives about rri/2") {
    for (int rri : {10, 20}) {
        auto r = make_radio(rri);
        Rng rng(17);
        Rng phase(18);
        std::vector<std::pair<double, double>> pairs;
        double capture = -1.0;
        long next_enqueue = 5;
        for (long t = 0; t < 400000; ++t) {
            if (t == next_enqueue) {
                capture = static_cast<double>(t);
                r.enqueue_sample(capture, 1);
                next_enqueue = t + 3 * rri + phase.uniform_int(0, 2 * rri);
            }
            if (auto m = r.tick(t, rng))
                pairs.emplace_back(m->capture_ms, static_cast<double>(t));
        }
        REQUIRE(pairs.size() > 1000);
        const double mean = mean_access_delay(pairs);
        CHECK(mean > 0.30 * rri);
        CHECK(mean < 0.70 * rri);
    }
}

TEST_CASE("enqueue exactly at the opportunity: zero access delay") {
    SpsConfig cfg;
    cfg.c_min = cfg.c_max = 15;
    auto r = make_radio(50, 0, cfg);
    Rng rng(19);
    r.tick(0, rng);
    const long t0 = r.next_tx_ms();
    r.enqueue_sample(static_cast<double>(t0), 1);
    auto m = r.tick(t0, rng);
    REQUIRE(m.has_value());
    CHECK(mean_access_delay({{m->capture_ms, static_cast<double>(t0)}}) == doctest::Approx(0.0));
}

TEST_CASE("mean_access_delay rejects an empty trace") {
    CHECK_THROWS_AS(mean_access_delay({}), std::invalid_argument);
}

TEST_CASE("shared busy log folds like private sensing and skips own entries") {
    BusyLog log;  // kept sorted by subframe, as the scenario loops maintain it
    log.push_back({1994, 2, 0, -70.0});  // own transmission: ignored
    log.push_back({1995, 0, 1, -80.0});  // other sender: excluded
    auto r = make_radio(10);
    r.use_shared_log(&log);
    const auto cands = r.candidate_set(2000, -110.0);
    CHECK(cands.size() == 19);
    for (const auto& c : cands) CHECK(!(c.offset == 4 && c.subchannel == 0));
}

TEST_CASE("channel busy ratio counts busy subframes over the window") {
    auto r = make_radio(10);
    for (long sf = 1900; sf < 2000; ++sf) r.observe_busy(sf, 0, -60.0);
    CHECK(r.channel_busy_ratio(2000) == doctest::Approx(0.1));
    CHECK(make_radio(10).channel_busy_ratio(2000) == doctest::Approx(0.0));
}

}  // TEST_SUITE
