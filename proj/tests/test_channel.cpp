#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "agesim/channel.hpp"

using namespace agesim;

namespace {

TransmissionAttempt at(int sender, int subchannel, double distance = 10.0) {
    TransmissionAttempt a;
    a.sender = sender;
    a.receiver = -1;
    a.subframe = 0;
    a.subchannel_start = subchannel;
    a.distance_m = distance;
    return a;
}

// Distance at which the no-shadowing SNR equals `snr_db` exactly.
double distance_for_snr(double snr_db, const ChannelModel& ch) {
    const double pl = ch.tx_power_dbm - ch.noise_floor_dbm - snr_db;
    return std::pow(10.0, (pl - ch.pathloss_b) / ch.pathloss_a);
}

}  // namespace

TEST_SUITE("channel") {

TEST_CASE("pathloss at 1 m equals the intercept B") {
    ChannelModel ch;
    CHECK(pathloss_db(1.0, ch) == doctest::Approx(ch.pathloss_b));
}

TEST_CASE("pathloss decade ratio adds exactly A dB, log-linear") {
    ChannelModel ch;
    CHECK(pathloss_db(100.0, ch) - pathloss_db(10.0, ch) == doctest::Approx(ch.pathloss_a));
    CHECK(pathloss_db(10.0, ch) - pathloss_db(1.0, ch) ==
          doctest::Approx(pathloss_db(100.0, ch) - pathloss_db(10.0, ch)));
}

TEST_CASE("pathloss clamps below 1 m and is monotone in distance") {
    ChannelModel ch;
    CHECK(pathloss_db(0.2, ch) == doctest::Approx(pathloss_db(1.0, ch)));
    double prev = pathloss_db(1.0, ch);
    for (double d = 2.0; d < 1000.0; d *= 1.7) {
        CHECK(pathloss_db(d, ch) >= prev);
        prev = pathloss_db(d, ch);
    }
}

TEST_CASE("disjoint sub-channels: both delivered") {
    ChannelModel ch;
    ch.shadowing_enabled = false;
    ResourceGrid grid;
    std::vector<TransmissionAttempt> attempts = {at(0, 0), at(1, 2)};
    const auto out = resolve_subframe(attempts, grid, ch);
    CHECK(out[0] == TxOutcome::Delivered);
    CHECK(out[1] == TxOutcome::Delivered);
}

TEST_CASE("same sub-channels: both lost to collision") {
    ChannelModel ch;
    ResourceGrid grid;
    std::vector<TransmissionAttempt> attempts = {at(0, 0), at(1, 0)};
    const auto out = resolve_subframe(attempts, grid, ch);
    CHECK(out[0] == TxOutcome::CollisionLoss);
    CHECK(out[1] == TxOutcome::CollisionLoss);
}

TEST_CASE("partial overlap collides both") {
    ChannelModel ch;
    ResourceGrid grid;
    std::vector<TransmissionAttempt> attempts = {at(0, 0), at(1, 1)};
    const auto out = resolve_subframe(attempts, grid, ch);
    CHECK(out[0] == TxOutcome::CollisionLoss);
    CHECK(out[1] == TxOutcome::CollisionLoss);
}

TEST_CASE("SNR just below threshold without shadowing is a range loss") {
    ChannelModel ch;
    ch.shadowing_enabled = false;
    ResourceGrid grid;
    const double d = distance_for_snr(ch.snr_threshold_db - 0.1, ch);
    std::vector<TransmissionAttempt> attempts = {at(0, 0, d)};
    CHECK(resolve_subframe(attempts, grid, ch)[0] == TxOutcome::RangeLoss);
    // and just above delivers
    const double d2 = distance_for_snr(ch.snr_threshold_db + 0.1, ch);
    std::vector<TransmissionAttempt> ok = {at(0, 0, d2)};
    CHECK(resolve_subframe(ok, grid, ch)[0] == TxOutcome::Delivered);
}

TEST_CASE("without shadowing, delivery is a step function of distance") {
    ChannelModel ch;
    ch.shadowing_enabled = false;
    const double edge = distance_for_snr(ch.snr_threshold_db, ch);
    for (double d = edge / 4; d < edge * 4; d *= 1.13) {
        const bool want = d <= edge;
        CHECK(link_delivered(0, 1, 5, d, ch) == want);
    }
}

TEST_CASE("collision rule is permutation invariant") {
    ChannelModel ch;
    ch.shadowing_enabled = false;
    ResourceGrid grid;
    // one range loss, one collision pair, one clean delivery candidate
    std::vector<TransmissionAttempt> attempts = {at(0, 0, 5000.0), at(1, 2), at(2, 2)};
    auto base = resolve_subframe(attempts, grid, ch);
    CHECK(base[0] == TxOutcome::RangeLoss);
    CHECK(base[1] == TxOutcome::CollisionLoss);
    std::vector<size_t> perm = {0, 1, 2};
    std::sort(perm.begin(), perm.end());
    do {
        std::vector<TransmissionAttempt> shuffled;
        for (size_t i : perm) shuffled.push_back(attempts[i]);
        const auto out = resolve_subframe(shuffled, grid, ch);
        for (size_t k = 0; k < perm.size(); ++k) CHECK(out[k] == base[perm[k]]);
    } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("per-subframe capacity: at most 2 delivered") {
    ChannelModel ch;
    ch.shadowing_enabled = false;
    ResourceGrid grid;
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<TransmissionAttempt> attempts;
        const int n = rng.uniform_int(1, 8);
        for (int i = 0; i < n; ++i) attempts.push_back(at(i, 2 * rng.uniform_int(0, 1)));
        const auto out = resolve_subframe(attempts, grid, ch);
        const long delivered = std::count(out.begin(), out.end(), TxOutcome::Delivered);
        CHECK(delivered <= 2);
    }
}

TEST_CASE("shadowing draws are deterministic and keyed by (link, subframe)") {
    ChannelModel ch;
    const double a = rx_power_dbm(3, 7, 123, 50.0, ch);
    CHECK(rx_power_dbm(3, 7, 123, 50.0, ch) == doctest::Approx(a));  // replay
    CHECK(rx_power_dbm(3, 7, 124, 50.0, ch) != doctest::Approx(a));  // new message
    CHECK(rx_power_dbm(3, 8, 123, 50.0, ch) != doctest::Approx(a));  // other link
    ChannelModel other = ch;
    other.shadow_seed = ch.shadow_seed + 1;
    CHECK(rx_power_dbm(3, 7, 123, 50.0, other) != doctest::Approx(a));  // other run
}

TEST_CASE("shadowing is zero-mean around the deterministic pathloss") {
    ChannelModel ch;
    const double det = ch.tx_power_dbm - pathloss_db(100.0, ch);
    double acc = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) acc += rx_power_dbm(1, 2, i, 100.0, ch);
    const double err = acc / n - det;  // sigma/sqrt(n) ~ 0.042 dB
    CHECK(std::abs(err) < 0.2);
}

TEST_CASE("malformed sub-channel range is rejected") {
    ChannelModel ch;
    ResourceGrid grid;
    std::vector<TransmissionAttempt> attempts = {at(0, 3)};  // 3 + span 2 > 4
    CHECK_THROWS_AS(resolve_subframe(attempts, grid, ch), std::invalid_argument);
    std::vector<TransmissionAttempt> neg = {at(0, -1)};
    CHECK_THROWS_AS(resolve_subframe(neg, grid, ch), std::invalid_argument);
}

TEST_CASE("grid constants: 1 ms subframes, 2 slots of span 2") {
    ResourceGrid grid;
    CHECK(grid.subframe_ms == 1);
    CHECK(grid.n_subchannels == 4);
    CHECK(grid.packet_span == 2);
    CHECK(grid.slots_per_subframe() == 2);
}

}  // TEST_SUITE
