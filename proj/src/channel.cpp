#include "agesim/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace agesim {

double pathloss_db(double distance_m, const ChannelModel& ch) {
    const double d = std::max(distance_m, 1.0);
    return ch.pathloss_a * std::log10(d) + ch.pathloss_b;
}

double rx_power_dbm(int sender, int receiver, long subframe, double distance_m,
                    const ChannelModel& ch) {
    double rx = ch.tx_power_dbm - pathloss_db(distance_m, ch);
    if (ch.shadowing_enabled && ch.shadowing_sigma_db > 0.0) {
        const uint64_t link = Rng::mix((static_cast<uint64_t>(static_cast<uint32_t>(sender)) << 32) |
                                       static_cast<uint32_t>(receiver));
        Rng rng(ch.shadow_seed ^ link, static_cast<uint64_t>(subframe));
        rx -= rng.normal(0.0, ch.shadowing_sigma_db);
    }
    return rx;
}

bool link_delivered(int sender, int receiver, long subframe, double distance_m,
                    const ChannelModel& ch) {
    if (!ch.snr_check_enabled) return true;
    const double snr = rx_power_dbm(sender, receiver, subframe, distance_m, ch) - ch.noise_floor_dbm;
    return snr >= ch.snr_threshold_db;
}

std::vector<bool> collision_mask(std::span<const TransmissionAttempt> attempts,
                                 const ResourceGrid& grid) {
    const size_t n = attempts.size();
    for (const auto& a : attempts) {
        if (a.subchannel_start < 0 || a.subchannel_start + grid.packet_span > grid.n_subchannels)
            throw std::invalid_argument("collision_mask: malformed sub-channel range");
    }
    std::vector<bool> collided(n, false);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            const int lo_i = attempts[i].subchannel_start;
            const int lo_j = attempts[j].subchannel_start;
            const bool overlap = lo_i < lo_j + grid.packet_span && lo_j < lo_i + grid.packet_span;
            if (overlap) collided[i] = collided[j] = true;
        }
    }
    return collided;
}

std::vector<TxOutcome> resolve_subframe(std::span<const TransmissionAttempt> attempts,
                                        const ResourceGrid& grid, const ChannelModel& ch) {
    const auto collided = collision_mask(attempts, grid);
    std::vector<TxOutcome> out(attempts.size(), TxOutcome::Delivered);
    for (size_t i = 0; i < attempts.size(); ++i) {
        const auto& a = attempts[i];
        if (collided[i])
            out[i] = TxOutcome::CollisionLoss;
        else if (!link_delivered(a.sender, a.receiver, a.subframe, a.distance_m, ch))
            out[i] = TxOutcome::RangeLoss;
    }
    return out;
}

}  // namespace agesim
