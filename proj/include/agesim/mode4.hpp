#ifndef AGESIM_MODE4_HPP
#define AGESIM_MODE4_HPP

#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agesim/channel.hpp"
#include "agesim/rng.hpp"

namespace agesim {

struct Message {
    int size_bytes = 300;
    double capture_ms = 0.0;       // sensor-capture timestamp, kept across repetitions
    int reps_remaining = 1;        // k >= 1
    int reps_total = 1;
    int payload = -1;              // opaque handle for the scenario layer
};

struct SpsConfig {
    int c_min = 5;
    int c_max = 15;
    double keep_prob = 0.0;
    int sensing_window_ms = 1000;
    int selection_window_cap_ms = 100;  // selection window = min(rri, cap)
    double exclusion_threshold_dbm = -110.0;
};

struct MacEvent {
    long time_ms;
    int radio_id;
    enum class Kind { Select, Tx, Resel } kind;
    int offset;
    int subchannel;
    int rri_ms;
};

// Time-ordered record of observed busy resources, shareable between the
// radios of one run (each radio skips its own transmissions when reading it).
struct BusyEntry {
    long subframe;
    int subchannel;
    int sender;
    double rssi_dbm;
};
using BusyLog = std::vector<BusyEntry>;

// One radio's Mode-4 semi-persistent scheduling state machine. Owns a
// latest-sample-only outbox; a payload under repetition finishes its k
// transmissions before a newer sample takes over.
class SpsRadio {
public:
    SpsRadio(int id, SpsConfig cfg, ResourceGrid grid, int rri_ms)
        : id_(id), cfg_(cfg), grid_(grid), rri_ms_(rri_ms) {}

    int id() const { return id_; }
    int rri_ms() const { return rri_ms_; }
    bool has_selection() const { return has_selection_; }
    long next_tx_ms() const { return next_tx_ms_; }
    int subchannel_start() const { return subchannel_; }
    int resel_counter() const { return resel_counter_; }

    // Changing the update period invalidates the reservation immediately.
    void set_rri(int rri_ms) {
        if (rri_ms != rri_ms_) {
            rri_ms_ = rri_ms;
            has_selection_ = false;
        }
    }

    void enqueue_sample(double capture_ms, int repetitions, int payload = -1);
    bool has_pending() const { return pending_.has_value(); }

    // Called once per 1 ms subframe. Returns the message transmitted on this
    // radio's reserved resource, if this subframe is its opportunity.
    std::optional<Message> tick(long now_ms, Rng& rng);

    // Sensing input: another radio's transmission observed above the noise.
    void observe_busy(long subframe_ms, int subchannel_start, double rssi_dbm);

    // Use a run-wide busy log instead of the private sensing window. Entries
    // from this radio's own id are ignored (a transmitter cannot sense).
    void use_shared_log(const BusyLog* log) { shared_log_ = log; }

    // Channel busy ratio over the sensing window (local congestion proxy).
    double channel_busy_ratio(long now_ms) const;

    void set_trace(std::vector<MacEvent>* trace) { trace_ = trace; }

    // exposed for tests
    struct Candidate { int offset; int subchannel; };
    std::vector<Candidate> candidate_set(long now_ms, double threshold_dbm) const;

private:
    std::vector<double> folded_max_rssi(long now_ms) const;
    void select(long now_ms, Rng& rng);
    void log(long t, MacEvent::Kind k) const;

    int id_;
    SpsConfig cfg_;
    ResourceGrid grid_;
    int rri_ms_;

    bool has_selection_ = false;
    long next_tx_ms_ = 0;
    int offset_ = 0;
    int subchannel_ = 0;
    int resel_counter_ = 0;

    std::optional<Message> pending_;       // message being (re)transmitted
    std::optional<Message> next_pending_;  // newest sample waiting behind repetitions

    struct Sensed { long subframe; int subchannel; double rssi_dbm; };
    std::deque<Sensed> sensing_;
    const BusyLog* shared_log_ = nullptr;

    // Incremental sensing fold over the shared log: one sliding-window-max
    // queue per (subframe mod rri, slot) cell, resumed by subframe so that
    // front-pruning of the log is harmless. Rebuilt when the rri changes.
    struct FoldQueue {
        std::vector<std::pair<long, double>> q;  // rssi monotone decreasing
        std::size_t head = 0;
    };
    mutable std::vector<FoldQueue> fold_queues_;
    mutable long fold_next_subframe_ = std::numeric_limits<long>::min();
    mutable int fold_rri_ = -1;

    std::vector<MacEvent>* trace_ = nullptr;
};

// Mean of (delivery - enqueue) over delivered messages, ms.
double mean_access_delay(const std::vector<std::pair<double, double>>& enqueue_delivery);

void write_mac_trace_csv(const std::vector<MacEvent>& events, const std::string& path);

}  // namespace agesim

#endif
