#include "agesim/mode4.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace agesim {

void SpsRadio::enqueue_sample(double capture_ms, int repetitions, int payload) {
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    Message m{300, capture_ms, repetitions, repetitions, payload};
    if (pending_ && pending_->reps_remaining < pending_->reps_total) {
        // mid-repetition: the newer sample waits (and replaces any older waiter)
        next_pending_ = m;
    } else {
        pending_ = m;  // latest-sample-only queue
    }
}

std::optional<Message> SpsRadio::tick(long now_ms, Rng& rng) {
    if (!has_selection_) {
        select(now_ms, rng);
        return std::nullopt;  // first opportunity is strictly after selection
    }
    if (now_ms != next_tx_ms_) return std::nullopt;

    std::optional<Message> sent;
    if (pending_) {
        sent = *pending_;
        log(now_ms, MacEvent::Kind::Tx);
        pending_->reps_remaining -= 1;
        if (pending_->reps_remaining == 0) {
            pending_ = next_pending_;
            next_pending_.reset();
        }
    }

    // counter decremented once per transmission opportunity
    resel_counter_ -= 1;
    next_tx_ms_ += rri_ms_;
    if (resel_counter_ <= 0) {
        if (rng.bernoulli(cfg_.keep_prob)) {
            resel_counter_ = rng.uniform_int(cfg_.c_min, cfg_.c_max);
        } else {
            log(now_ms, MacEvent::Kind::Resel);
            has_selection_ = false;
        }
    }
    return sent;
}

std::vector<double> SpsRadio::folded_max_rssi(long now_ms) const {
    const int window = std::min(rri_ms_, cfg_.selection_window_cap_ms);
    const int n_slots = grid_.slots_per_subframe();
    // max sensed power folded onto (offset mod rri, subchannel slot)
    std::vector<double> max_rssi(static_cast<size_t>(window) * n_slots, -1e300);
    // entries arrive in subframe order, so the folded offset is tracked
    // incrementally instead of with a division per entry
    long prev_subframe = 0;
    long off = -1;
    auto fold = [&](long subframe, int subchannel, double rssi) {
        if (off < 0 || subframe < prev_subframe ||
            subframe - prev_subframe >= rri_ms_) {
            off = (subframe - (now_ms + 1)) % rri_ms_;
            if (off < 0) off += rri_ms_;
        } else {
            off += subframe - prev_subframe;
            if (off >= rri_ms_) off -= rri_ms_;
        }
        prev_subframe = subframe;
        if (off >= window) return;
        const int slot = subchannel / grid_.packet_span;
        auto& cell = max_rssi[static_cast<size_t>(off) * n_slots + slot];
        if (rssi > cell) cell = rssi;
    };
    const long lo = now_ms - cfg_.sensing_window_ms;
    if (shared_log_) {
        // Incremental path: each log entry is folded into a per-cell
        // sliding-window-max queue exactly once. The log is append-only in
        // subframe order (front entries may be pruned), so resuming from the
        // first unseen subframe is exact.
        if (fold_rri_ != rri_ms_) {
            fold_rri_ = rri_ms_;
            fold_queues_.assign(static_cast<size_t>(rri_ms_) * n_slots, {});
            fold_next_subframe_ = std::numeric_limits<long>::min();
        }
        auto it = std::lower_bound(shared_log_->begin(), shared_log_->end(),
                                   std::max(lo, fold_next_subframe_),
                                   [](const BusyEntry& e, long t) { return e.subframe < t; });
        for (; it != shared_log_->end(); ++it) {
            if (it->sender == id_) continue;
            const int slot = it->subchannel / grid_.packet_span;
            auto& fq = fold_queues_[static_cast<size_t>(it->subframe % rri_ms_) * n_slots + slot];
            while (fq.q.size() > fq.head && fq.q.back().second <= it->rssi_dbm) fq.q.pop_back();
            fq.q.emplace_back(it->subframe, it->rssi_dbm);
        }
        if (!shared_log_->empty())
            fold_next_subframe_ =
                std::max(fold_next_subframe_, shared_log_->back().subframe + 1);
        for (int o = 0; o < window; ++o) {
            const long cell = (o + now_ms + 1) % rri_ms_;
            for (int slot = 0; slot < n_slots; ++slot) {
                auto& fq = fold_queues_[static_cast<size_t>(cell) * n_slots + slot];
                while (fq.q.size() > fq.head && fq.q[fq.head].first < lo) ++fq.head;
                if (fq.head > 64 && fq.head * 2 > fq.q.size()) {
                    fq.q.erase(fq.q.begin(), fq.q.begin() + static_cast<long>(fq.head));
                    fq.head = 0;
                }
                if (fq.q.size() > fq.head)
                    max_rssi[static_cast<size_t>(o) * n_slots + slot] = fq.q[fq.head].second;
            }
        }
    } else {
        for (const auto& s : sensing_) {
            if (s.subframe < lo) continue;
            fold(s.subframe, s.subchannel, s.rssi_dbm);
        }
    }
    return max_rssi;
}

std::vector<SpsRadio::Candidate> SpsRadio::candidate_set(long now_ms,
                                                         double threshold_dbm) const {
    const int window = std::min(rri_ms_, cfg_.selection_window_cap_ms);
    const int n_slots = grid_.slots_per_subframe();
    const auto max_rssi = folded_max_rssi(now_ms);
    std::vector<Candidate> cands;
    cands.reserve(static_cast<size_t>(window) * n_slots);
    for (int off = 0; off < window; ++off)
        for (int slot = 0; slot < n_slots; ++slot)
            if (max_rssi[static_cast<size_t>(off) * n_slots + slot] <= threshold_dbm)
                cands.push_back({off, slot * grid_.packet_span});
    return cands;
}

void SpsRadio::select(long now_ms, Rng& rng) {
    const int window = std::min(rri_ms_, cfg_.selection_window_cap_ms);
    const int n_slots = grid_.slots_per_subframe();
    const int total = window * n_slots;
    const auto max_rssi = folded_max_rssi(now_ms);  // one sensing pass for all thresholds
    double threshold = cfg_.exclusion_threshold_dbm;
    auto build = [&](double thr) {
        std::vector<Candidate> c;
        c.reserve(static_cast<size_t>(total));
        for (int off = 0; off < window; ++off)
            for (int slot = 0; slot < n_slots; ++slot)
                if (max_rssi[static_cast<size_t>(off) * n_slots + slot] <= thr)
                    c.push_back({off, slot * grid_.packet_span});
        return c;
    };
    auto cands = build(threshold);
    // relax by 3 dB until at least 20% of candidates remain
    while (cands.size() * 5 < static_cast<size_t>(total)) {
        threshold += 3.0;
        cands = build(threshold);
        if (threshold > 100.0) {  // unreachable: all entries pass at high threshold
            break;
        }
    }
    const auto& pick = cands[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(cands.size()) - 1))];
    offset_ = pick.offset;
    subchannel_ = pick.subchannel;
    next_tx_ms_ = now_ms + 1 + pick.offset;
    resel_counter_ = rng.uniform_int(cfg_.c_min, cfg_.c_max);
    has_selection_ = true;
    log(now_ms, MacEvent::Kind::Select);
}

void SpsRadio::observe_busy(long subframe_ms, int subchannel_start, double rssi_dbm) {
    sensing_.push_back({subframe_ms, subchannel_start, rssi_dbm});
    while (!sensing_.empty() &&
           sensing_.front().subframe < subframe_ms - cfg_.sensing_window_ms)
        sensing_.pop_front();
}

double SpsRadio::channel_busy_ratio(long now_ms) const {
    const long lo = now_ms - cfg_.sensing_window_ms;
    long busy = 0;
    long prev = -1;
    auto count = [&](long subframe) {
        if (subframe != prev) {  // count busy subframes, not entries
            busy += 1;
            prev = subframe;
        }
    };
    if (shared_log_) {
        auto it = std::lower_bound(shared_log_->begin(), shared_log_->end(), lo,
                                   [](const BusyEntry& e, long t) { return e.subframe < t; });
        for (; it != shared_log_->end(); ++it)
            if (it->sender != id_) count(it->subframe);
    } else {
        for (const auto& s : sensing_) {
            if (s.subframe < lo) continue;
            count(s.subframe);
        }
    }
    return static_cast<double>(busy) / static_cast<double>(cfg_.sensing_window_ms);
}

void SpsRadio::log(long t, MacEvent::Kind k) const {
    if (trace_) trace_->push_back({t, id_, k, offset_, subchannel_, rri_ms_});
}

double mean_access_delay(const std::vector<std::pair<double, double>>& enqueue_delivery) {
    if (enqueue_delivery.empty())
        throw std::invalid_argument("mean_access_delay: no deliveries");
    double acc = 0.0;
    for (const auto& [enq, del] : enqueue_delivery) acc += del - enq;
    return acc / static_cast<double>(enqueue_delivery.size());
}

void write_mac_trace_csv(const std::vector<MacEvent>& events, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "time_ms,radio_id,event,offset,subchannel,rri_ms\n";
    for (const auto& e : events) {
        const char* kind = e.kind == MacEvent::Kind::Select ? "select"
                           : e.kind == MacEvent::Kind::Tx   ? "tx"
                                                            : "resel";
        f << e.time_ms << ',' << e.radio_id << ',' << kind << ',' << e.offset << ','
          << e.subchannel << ',' << e.rri_ms << '\n';
    }
}

}  // namespace agesim
