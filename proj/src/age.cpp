#include "agesim/age.hpp"

#include <algorithm>
#include <fstream>

namespace agesim {

double time_average_penalty(const AgeProcess& proc, const AgePenalty& penalty,
                            double horizon_ms, double cadence_ms) {
    if (horizon_ms <= 0.0) throw std::invalid_argument("time_average_penalty: horizon <= 0");
    if (proc.empty()) throw std::invalid_argument("time_average_penalty: empty sample sequence");
    double acc = 0.0;
    for (const auto& [t, age] : proc.samples()) {
        if (t >= horizon_ms) break;
        acc += penalty(age) * cadence_ms;
    }
    return acc / horizon_ms;
}

double peak_age(const AgeProcess& proc) {
    if (proc.empty()) throw std::invalid_argument("peak_age: empty trajectory");
    double peak = 0.0;
    for (const auto& [t, age] : proc.samples()) peak = std::max(peak, age);
    return peak;
}

InfoLatencyStats aggregate_stats(const std::vector<AgeProcess>& procs,
                                 const AgePenalty& penalty, double horizon_ms,
                                 double exceedance_bound_ms, double cadence_ms) {
    InfoLatencyStats out;
    if (procs.empty()) return out;
    const AgePenalty exceed = AgePenalty::exceedance(exceedance_bound_ms);
    for (const auto& p : procs) {
        SourceStats s;
        s.time_avg_penalty = time_average_penalty(p, penalty, horizon_ms, cadence_ms);
        s.peak_age_ms = peak_age(p);
        s.exceedance_fraction = time_average_penalty(p, exceed, horizon_ms, cadence_ms);
        out.per_source[p.source_id()] = s;
        out.time_avg_penalty += s.time_avg_penalty;
        out.peak_age_ms = std::max(out.peak_age_ms, s.peak_age_ms);
        out.exceedance_fraction += s.exceedance_fraction;
    }
    const double n = static_cast<double>(procs.size());
    out.time_avg_penalty /= n;
    out.exceedance_fraction /= n;
    return out;
}

void write_age_trace_csv(const std::vector<AgeProcess>& procs, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "time_ms,source_id,age_ms\n";
    for (const auto& p : procs)
        for (const auto& [t, age] : p.samples())
            f << t << ',' << p.source_id() << ',' << age << '\n';
}

}  // namespace agesim
