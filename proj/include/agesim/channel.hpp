#ifndef AGESIM_CHANNEL_HPP
#define AGESIM_CHANNEL_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "agesim/rng.hpp"

namespace agesim {

// Mode-4 time-frequency contention surface: 1 ms subframes, 4 sub-channels of
// 5 MHz, one packet spans 2 contiguous sub-channels (10 MHz). At most
// n_subchannels / packet_span non-colliding packets per subframe.
struct ResourceGrid {
    int subframe_ms = 1;
    int n_subchannels = 4;
    int packet_span = 2;

    int slots_per_subframe() const { return n_subchannels / packet_span; }
    // valid packet placements: subchannel start in {0, packet_span, ...}
    int n_starts() const { return n_subchannels - packet_span + 1; }
};

struct ChannelModel {
    double carrier_ghz = 5.9;
    double tx_power_dbm = 23.0;
    double shadowing_sigma_db = 6.0;
    bool shadowing_enabled = true;
    // PL(d) = A*log10(d) + B, urban-microcell LOS style, rescaled to 5.9 GHz
    double pathloss_a = 22.7;
    double pathloss_b = 42.44;  // 41.0 + 20*log10(5.9/5.0)
    // -174 dBm/Hz + 10*log10(10 MHz) + 9 dB noise figure
    double noise_floor_dbm = -95.0;
    double snr_threshold_db = 2.5;  // QPSK rate-1/3 threshold reception
    bool snr_check_enabled = true;
    uint64_t shadow_seed = 1;  // keys the per-(link, message) shadowing draws
};

enum class TxOutcome { Delivered, CollisionLoss, RangeLoss };

struct TransmissionAttempt {
    int sender = 0;
    int receiver = -1;  // -1 = broadcast (outcome evaluated at distance_m)
    long subframe = 0;
    int subchannel_start = 0;
    double distance_m = 0.0;
    int payload = -1;  // opaque reference into the caller's message store
};

double pathloss_db(double distance_m, const ChannelModel& ch);

// Received power on one link; shadowing is an i.i.d. draw keyed by
// (sender, receiver, subframe), so it is stable under attempt reordering.
double rx_power_dbm(int sender, int receiver, long subframe, double distance_m,
                    const ChannelModel& ch);

bool link_delivered(int sender, int receiver, long subframe, double distance_m,
                    const ChannelModel& ch);

// Collision rule: any two attempts in the same subframe whose sub-channel
// ranges intersect are both lost. Marks colliding[i] = true per attempt.
std::vector<bool> collision_mask(std::span<const TransmissionAttempt> attempts,
                                 const ResourceGrid& grid);

// Per-attempt outcome for one subframe: collisions first, then threshold
// reception at the attempt's distance. Deterministic given ch.shadow_seed.
std::vector<TxOutcome> resolve_subframe(std::span<const TransmissionAttempt> attempts,
                                        const ResourceGrid& grid, const ChannelModel& ch);

}  // namespace agesim

#endif
