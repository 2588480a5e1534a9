#ifndef AGESIM_AGE_HPP
#define AGESIM_AGE_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace agesim {

// Pointwise penalty applied to an age value (ms).
struct AgePenalty {
    enum class Kind { Linear, Quadratic, Exceedance };

    Kind kind = Kind::Linear;
    double bound_ms = 0.0;  // only for Exceedance

    double operator()(double age_ms) const {
        switch (kind) {
            case Kind::Linear: return age_ms;
            case Kind::Quadratic: return age_ms * age_ms;
            case Kind::Exceedance: return age_ms > bound_ms ? 1.0 : 0.0;
        }
        return 0.0;
    }

    static AgePenalty linear() { return {Kind::Linear, 0.0}; }
    static AgePenalty quadratic() { return {Kind::Quadratic, 0.0}; }
    static AgePenalty exceedance(double bound_ms) { return {Kind::Exceedance, bound_ms}; }
};

// Sawtooth age trajectory of one source as seen at a receiver.
// Age grows at slope 1 between deliveries and resets to now - gen_time on a
// delivery carrying a fresher sample. Sampled on the 1 ms network tick.
class AgeProcess {
public:
    explicit AgeProcess(int source_id = 0, double t0_ms = 0.0)
        : source_id_(source_id), gen_latest_ms_(t0_ms) {}

    int source_id() const { return source_id_; }

    double age_at(double now_ms) const { return now_ms - gen_latest_ms_; }

    // Delivery of a sample generated at gen_time_ms. Stale samples (older than
    // the current reference) leave the process unchanged.
    void record_delivery(double now_ms, double gen_time_ms) {
        if (gen_time_ms > now_ms)
            throw std::invalid_argument("record_delivery: gen_time in the future");
        if (gen_time_ms > gen_latest_ms_) gen_latest_ms_ = gen_time_ms;
    }

    // Append the current age to the sampled trajectory.
    void sample(double now_ms) { samples_.emplace_back(now_ms, age_at(now_ms)); }

    const std::vector<std::pair<double, double>>& samples() const { return samples_; }
    bool empty() const { return samples_.empty(); }

private:
    int source_id_;
    double gen_latest_ms_;
    std::vector<std::pair<double, double>> samples_;  // (time ms, age ms)
};

// Left-Riemann time average of penalty(age) over the sampled horizon.
double time_average_penalty(const AgeProcess& proc, const AgePenalty& penalty,
                            double horizon_ms, double cadence_ms = 1.0);

double peak_age(const AgeProcess& proc);

struct SourceStats {
    double time_avg_penalty = 0.0;
    double peak_age_ms = 0.0;
    double exceedance_fraction = 0.0;
};

struct InfoLatencyStats {
    double time_avg_penalty = 0.0;
    double peak_age_ms = 0.0;
    double exceedance_fraction = 0.0;  // fraction in [0,1]
    std::map<int, SourceStats> per_source;
};

InfoLatencyStats aggregate_stats(const std::vector<AgeProcess>& procs,
                                 const AgePenalty& penalty, double horizon_ms,
                                 double exceedance_bound_ms, double cadence_ms = 1.0);

// CSV export: time_ms,source_id,age_ms
void write_age_trace_csv(const std::vector<AgeProcess>& procs, const std::string& path);

}  // namespace agesim

#endif
