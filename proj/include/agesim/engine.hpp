#ifndef AGESIM_ENGINE_HPP
#define AGESIM_ENGINE_HPP

#include <atomic>
#include <cstdint>
#include <functional>
#include <future>
#include <stdexcept>
#include <string>
#include <vector>

#include "agesim/rng.hpp"

namespace agesim {

// Two-clock simulation time base: a 1 ms network tick and a coarser dynamics
// tick. Per-tick phase order is fixed by the scenario loops:
// sense -> MAC -> channel -> delivery -> control -> dynamics -> metrics.
struct SimClock {
    long now_ms = 0;
    int network_tick_ms = 1;
    int dynamics_tick_ms = 10;

    SimClock(int dyn_ms = 10) : dynamics_tick_ms(dyn_ms) {
        if (dyn_ms < 1 || dyn_ms % network_tick_ms != 0)
            throw std::invalid_argument("dynamics tick must be a multiple of the network tick");
    }
    bool on_dynamics_tick() const { return now_ms % dynamics_tick_ms == 0; }
    void advance() { now_ms += network_tick_ms; }
};

struct RunSpec {
    std::string scenario;
    uint64_t seed = 0;
    long duration_ms = 0;
    std::string config_json;  // fully materialized config snapshot
};

std::string run_spec_to_json(const RunSpec& spec);
RunSpec run_spec_from_json(const std::string& text);

// Fan runs out over a bounded number of worker threads. Results come back in
// run-index order regardless of scheduling, so any aggregation downstream is
// independent of the parallelism degree.
template <typename Result>
std::vector<Result> monte_carlo(long n_runs, uint64_t master_seed, int parallelism,
                                const std::function<Result(uint64_t seed, long index)>& body) {
    if (n_runs < 1) throw std::invalid_argument("monte_carlo: n_runs < 1");
    if (parallelism < 1) parallelism = 1;
    std::vector<Result> results(static_cast<size_t>(n_runs));
    if (parallelism == 1) {
        for (long i = 0; i < n_runs; ++i)
            results[static_cast<size_t>(i)] = body(Rng::derive(master_seed, static_cast<uint64_t>(i)), i);
        return results;
    }
    std::atomic<long> next{0};
    auto worker = [&]() {
        for (;;) {
            const long i = next.fetch_add(1);
            if (i >= n_runs) return;
            results[static_cast<size_t>(i)] = body(Rng::derive(master_seed, static_cast<uint64_t>(i)), i);
        }
    };
    std::vector<std::future<void>> futs;
    for (int w = 0; w < parallelism; ++w)
        futs.push_back(std::async(std::launch::async, worker));
    for (auto& f : futs) f.get();  // child-run exceptions propagate here
    return results;
}

}  // namespace agesim

#endif
