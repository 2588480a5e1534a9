#ifndef AGESIM_RNG_HPP
#define AGESIM_RNG_HPP

#include <cmath>
#include <cstdint>

namespace agesim {

// Counter-based random stream. Output depends only on (seed, stream, counter),
// so parallel and serial execution of independent streams coincide exactly.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : key_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL))) {}

    uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi], inclusive
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; draws two uniforms per call, no cached state.
    double normal(double mean = 0.0, double sigma = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(2.0 * M_PI * u2);
    }

    // Child seed for run `index` of a Monte-Carlo batch.
    static uint64_t derive(uint64_t master, uint64_t index) {
        return mix(master ^ mix(index + 0x632be59bd9b4e019ULL));
    }

    // splitmix64 finalizer
    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace agesim

#endif
